"""Relational position prediction.

Each edge incident to the (invisible) target becomes a feature vector:
category embeddings of subject and object, a predicate embedding, the
reference object's bbox, and a subject/object indicator bit. A recurrent
encoder consumes the sequence and a small fully connected head regresses the
target's normalized bbox. Category embeddings are dropped when predicates are
purely spatial and object identity should not matter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .errors import ValidationFailure
from .scenegraph import SceneGraph, Triplet, extract_modified_triplets
from .synthetic import relation_satisfied

UNKNOWN_TOKEN = "<unk>"


@dataclass(frozen=True)
class PositionConfig:
    use_category_embeddings: bool = True
    d_obj: int = 32
    d_pred: int = 16
    d_h: int = 128
    head_widths: tuple[int, ...] = (64, 64)
    max_triplets: int = 5

    @property
    def feature_dim(self) -> int:
        base = self.d_pred + 4 + 1
        return base + 2 * self.d_obj if self.use_category_embeddings else base

    def to_dict(self) -> dict:
        return {
            "use_category_embeddings": self.use_category_embeddings,
            "d_obj": self.d_obj, "d_pred": self.d_pred, "d_h": self.d_h,
            "head_widths": list(self.head_widths),
            "max_triplets": self.max_triplets,
        }

    @staticmethod
    def from_dict(doc: dict) -> "PositionConfig":
        return PositionConfig(
            use_category_embeddings=bool(doc.get("use_category_embeddings", True)),
            d_obj=int(doc.get("d_obj", 32)),
            d_pred=int(doc.get("d_pred", 16)),
            d_h=int(doc.get("d_h", 128)),
            head_widths=tuple(doc.get("head_widths", (64, 64))),
            max_triplets=int(doc.get("max_triplets", 5)),
        )


class Vocab:
    """Token table with a reserved unknown slot at index 0."""

    def __init__(self, tokens):
        seen = sorted(set(tokens) - {UNKNOWN_TOKEN})
        self.tokens = [UNKNOWN_TOKEN] + seen
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def lookup(self, token: str) -> int:
        return self.index.get(token, 0)


@dataclass(frozen=True)
class TrainingExample:
    triplets: tuple[Triplet, ...]
    target_bbox: tuple[float, float, float, float]


class PositionModel(nn.Module):
    def __init__(self, config: PositionConfig, categories: Vocab,
                 predicates: Vocab):
        super().__init__()
        self.config = config
        self.categories = categories
        self.predicates = predicates
        self.unknown_tokens: dict[str, int] = {}
        if config.use_category_embeddings:
            self.category_embedding = nn.Embedding(len(categories), config.d_obj)
        else:
            self.category_embedding = None
        self.predicate_embedding = nn.Embedding(len(predicates), config.d_pred)
        self.rnn = nn.LSTM(config.feature_dim, config.d_h, batch_first=True)
        layers: list[nn.Module] = []
        prev = config.d_h
        for width in config.head_widths:
            layers += [nn.Linear(prev, width), nn.ReLU()]
            prev = width
        layers.append(nn.Linear(prev, 4))
        self.head = nn.Sequential(*layers)

    def _token_index(self, vocab: Vocab, token: str) -> int:
        idx = vocab.lookup(token)
        if idx == 0 and token != UNKNOWN_TOKEN:
            self.unknown_tokens[token] = self.unknown_tokens.get(token, 0) + 1
        return idx

    def encode_features(self, triplets) -> torch.Tensor:
        """(T, feature_dim) feature matrix for one triplet sequence."""
        dtype = self.predicate_embedding.weight.dtype
        rows = []
        for t in triplets:
            parts = []
            if self.category_embedding is not None:
                s_idx = self._token_index(self.categories, t.subject_category)
                o_idx = self._token_index(self.categories, t.object_category)
                parts.append(self.category_embedding(torch.tensor(s_idx)))
                parts.append(self.category_embedding(torch.tensor(o_idx)))
            p_idx = self._token_index(self.predicates, t.predicate)
            parts.append(self.predicate_embedding(torch.tensor(p_idx)))
            parts.append(torch.as_tensor(t.reference_bbox, dtype=dtype))
            parts.append(torch.tensor([1.0 if t.target_is_subject else 0.0],
                                      dtype=dtype))
            rows.append(torch.cat(parts))
        return torch.stack(rows)

    def forward_sequences(self, sequences: list) -> torch.Tensor:
        """Raw head outputs, (B, 4), for a batch of triplet sequences."""
        feats = [self.encode_features(seq) for seq in sequences]
        lengths = torch.tensor([f.shape[0] for f in feats])
        padded = nn.utils.rnn.pad_sequence(feats, batch_first=True)
        packed = nn.utils.rnn.pack_padded_sequence(
            padded, lengths, batch_first=True, enforce_sorted=False)
        _, (h_last, _) = self.rnn(packed)
        return self.head(h_last[-1])


def build_position_model(config: PositionConfig, categories, predicates,
                         seed: int = 0) -> PositionModel:
    """Model with parameter init fixed by ``seed``."""
    torch.manual_seed(seed)
    return PositionModel(config, Vocab(categories), Vocab(predicates))


def encode_triplet(triplet: Triplet, model: PositionModel) -> np.ndarray:
    """The feature vector fed to the recurrent encoder for one triplet."""
    with torch.no_grad():
        return model.encode_features([triplet])[0].numpy().astype(np.float64)


def predict_position(model: PositionModel, triplets) -> np.ndarray:
    """Predicted normalized bbox: clamped to [0, 1] and corner-ordered."""
    triplets = list(triplets)
    if not triplets:
        raise ValidationFailure("cannot predict a position from zero triplets")
    if len(triplets) > model.config.max_triplets:
        raise ValidationFailure(
            f"got {len(triplets)} triplets, max is {model.config.max_triplets}")
    model.eval()
    with torch.no_grad():
        raw = model.forward_sequences([triplets])[0].numpy().astype(np.float64)
    clamped = np.clip(raw, 0.0, 1.0)
    x0, x1 = sorted((clamped[0], clamped[2]))
    y0, y1 = sorted((clamped[1], clamped[3]))
    return np.array([x0, y0, x1, y1])


# ---------------------------------------------------------------------------
# Dataset construction


def build_dataset(pairs, max_triplets: int = 5
                  ) -> tuple[list[TrainingExample], int]:
    """One TrainingExample per (original, modified, target_id) tuple.

    Pairs whose target has no incident edges are skipped; the skip count is
    returned alongside the examples.
    """
    examples: list[TrainingExample] = []
    skipped = 0
    for original, modified, target_id in pairs:
        try:
            triplets = extract_modified_triplets(original, modified, target_id,
                                                 max_triplets=max_triplets)
        except ValidationFailure:
            skipped += 1
            continue
        target_bbox = modified.node(target_id).bbox
        examples.append(TrainingExample(triplets=tuple(triplets),
                                        target_bbox=target_bbox))
    return examples, skipped


def save_dataset(path: str | Path, examples) -> None:
    """One example per line: {"triplets": [...], "target_bbox": [...]}"""
    with open(path, "w") as fh:
        for ex in examples:
            fh.write(json.dumps({
                "triplets": [
                    {"subject_category": t.subject_category,
                     "predicate": t.predicate,
                     "object_category": t.object_category,
                     "target_is_subject": t.target_is_subject,
                     "reference_bbox": list(t.reference_bbox)}
                    for t in ex.triplets
                ],
                "target_bbox": list(ex.target_bbox),
            }) + "\n")


def load_dataset(path: str | Path) -> list[TrainingExample]:
    examples = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        doc = json.loads(line)
        triplets = tuple(
            Triplet(subject_category=t["subject_category"],
                    predicate=t["predicate"],
                    object_category=t["object_category"],
                    target_is_subject=bool(t["target_is_subject"]),
                    reference_bbox=tuple(float(v) for v in t["reference_bbox"]))
            for t in doc["triplets"])
        examples.append(TrainingExample(
            triplets=triplets,
            target_bbox=tuple(float(v) for v in doc["target_bbox"])))
    return examples


# ---------------------------------------------------------------------------
# Training / evaluation


@dataclass
class TrainOptions:
    epochs: int = 50
    batch_size: int = 64
    learning_rate: float = 1e-3
    seed: int = 0


def train(model: PositionModel, dataset: list[TrainingExample],
          opts: TrainOptions) -> list[float]:
    """Minimize MSE between raw head outputs and target bboxes.

    Returns the per-epoch mean loss curve. Deterministic given the seed (the
    shuffle order is the only randomness).
    """
    if not dataset:
        raise ValidationFailure("cannot train on an empty dataset")
    rng = np.random.default_rng(opts.seed)
    optimizer = torch.optim.Adam(model.parameters(), lr=opts.learning_rate)
    criterion = nn.MSELoss()
    targets = torch.tensor([ex.target_bbox for ex in dataset],
                           dtype=torch.float32)
    curve: list[float] = []
    model.train()
    for _ in range(opts.epochs):
        order = rng.permutation(len(dataset))
        epoch_losses = []
        for start in range(0, len(dataset), opts.batch_size):
            batch_idx = order[start:start + opts.batch_size]
            sequences = [list(dataset[i].triplets) for i in batch_idx]
            batch_targets = targets[batch_idx]
            optimizer.zero_grad()
            raw = model.forward_sequences(sequences)
            loss = criterion(raw, batch_targets)
            if not torch.isfinite(loss):
                raise ValidationFailure(
                    f"non-finite training loss at epoch {len(curve) + 1}; "
                    f"curve so far: {curve[-3:]}")
            loss.backward()
            optimizer.step()
            epoch_losses.append(float(loss.detach()))
        curve.append(float(np.mean(epoch_losses)))
    return curve


def evaluate(model: PositionModel, dataset: list[TrainingExample],
             resolution: int) -> dict:
    """Corner MAE in pixels at the stated resolution, with the spread over
    the four corners."""
    if not dataset:
        raise ValidationFailure("cannot evaluate an empty dataset")
    errors = np.empty((len(dataset), 4), dtype=np.float64)
    for i, ex in enumerate(dataset):
        pred = predict_position(model, ex.triplets)
        errors[i] = np.abs(pred - np.asarray(ex.target_bbox))
    per_corner = errors.mean(axis=0) * resolution
    return {
        "mae_pixels": float(per_corner.mean()),
        "std_over_corners": float(per_corner.std()),
        "count": len(dataset),
        "resolution": resolution,
    }


def relation_satisfaction_rate(model: PositionModel,
                               dataset: list[TrainingExample]) -> float:
    """Fraction of examples whose prediction sits on the correct side of
    every reference object."""
    if not dataset:
        raise ValidationFailure("cannot evaluate an empty dataset")
    good = 0
    for ex in dataset:
        pred = predict_position(model, ex.triplets)
        center = ((pred[0] + pred[2]) / 2, (pred[1] + pred[3]) / 2)
        ok = True
        for t in ex.triplets:
            ref = t.reference_bbox
            ref_center = ((ref[0] + ref[2]) / 2, (ref[1] + ref[3]) / 2)
            if not relation_satisfied(t.predicate, center, ref_center,
                                      t.target_is_subject):
                ok = False
                break
        good += ok
    return good / len(dataset)


# ---------------------------------------------------------------------------
# Checkpoints

CHECKPOINT_VERSION = 1


def save_model(path: str | Path, model: PositionModel) -> None:
    torch.save({
        "format_version": CHECKPOINT_VERSION,
        "config": model.config.to_dict(),
        "categories": model.categories.tokens,
        "predicates": model.predicates.tokens,
        "state_dict": model.state_dict(),
    }, str(path))


def load_model(path: str | Path) -> PositionModel:
    payload = torch.load(str(path), map_location="cpu", weights_only=False)
    version = payload.get("format_version")
    if version != CHECKPOINT_VERSION:
        raise ValidationFailure(f"unsupported checkpoint version {version}")
    config = PositionConfig.from_dict(payload["config"])
    model = PositionModel(config,
                          Vocab(payload["categories"]),
                          Vocab(payload["predicates"]))
    model.load_state_dict(payload["state_dict"])
    model.eval()
    return model


def predict_for_edit(model: PositionModel, modified: SceneGraph,
                     target_id: str) -> np.ndarray:
    """Convenience: extract the target's triplets and predict its bbox."""
    triplets = extract_modified_triplets(modified, modified, target_id,
                                         max_triplets=model.config.max_triplets)
    return predict_position(model, triplets)
