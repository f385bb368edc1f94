"""Exception hierarchy shared across the package.

Validation-type errors map to exit code 3 / HTTP 422 at the boundaries;
everything else surfaces as a runtime failure (exit code 4 / HTTP 500).
"""


class SimbilError(Exception):
    """Base class for all package errors."""


class ValidationFailure(SimbilError):
    """Bad user input: malformed documents, invalid ops, broken invariants."""


class SchemaError(ValidationFailure):
    """A document violates its JSON schema. Carries the offending path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class GraphError(ValidationFailure):
    """A scene graph violates a structural invariant."""


class EditError(ValidationFailure):
    """An edit operation cannot be applied to the given graph."""


class DiffError(ValidationFailure):
    """Two graphs differ in a way the four edit operations cannot express."""


class EmptyTripletError(ValidationFailure):
    """The target node has no incident edges; position prediction is undefined."""


class SegmentationError(SimbilError):
    """Segmentation backend failure or empty candidate set."""


class InstanceNotFoundError(SegmentationError):
    """No candidate of the requested category. Carries the full candidate list."""

    def __init__(self, category: str, candidates):
        self.category = category
        self.candidates = list(candidates)
        cats = sorted({c.category for c in self.candidates})
        super().__init__(
            f"no candidate of category {category!r}; got categories {cats}"
        )


class MaskError(ValidationFailure):
    """Invalid mask construction parameters (negative radius, empty bbox, ...)."""


class MetricsError(ValidationFailure):
    """Invalid metric inputs (shape mismatch, region too small, ...)."""


class InpaintError(SimbilError):
    """Internal-learning run failure (bad config, non-finite loss, no background)."""


class NetworkConfigError(InpaintError, ValidationFailure):
    """Generator network config incompatible with the image size."""


class NoBackgroundError(InpaintError):
    """Guide region contains no known pixels."""


class PipelineError(SimbilError):
    """Pipeline planning or execution failure."""

    def __init__(self, message: str, step_index: int | None = None):
        self.step_index = step_index
        if step_index is not None:
            message = f"step {step_index}: {message}"
        super().__init__(message)


class PlanConflictError(PipelineError, ValidationFailure):
    """Two ops in one batch touch the same node."""

    def __init__(self, message: str):
        PipelineError.__init__(self, message)


class CropSourceError(PipelineError, ValidationFailure):
    """No pixel source available for an added/replacing object."""

    def __init__(self, message: str):
        PipelineError.__init__(self, message)
