"""simbil: semantic image editing.

Edit an image's scene graph; the backend realizes the edit on pixels via
segmentation-based removal, relational position prediction, and
background-guided internal-learning inpainting.
"""

__version__ = "0.1.0"
