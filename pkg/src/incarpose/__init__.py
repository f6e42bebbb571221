"""Reference-relative camera pose regression for in-cabin fisheye views.

Subpackages and modules:

- ``geom3``: rotation representations, SO(3) projection and SE(3) poses
- ``losses``: rotation and translation metrics, training losses and their gradients
- ``labels``: relative-pose targets, marker-based ground truth, trajectory comparison
- ``imageproc``: resizing, normalization, color jitter and PNM I/O
- ``tensorcore``: float64 tensors with reverse-mode autodiff, AdamW, checkpoints
- ``model``: the two-view decoder network and its training loop
- ``synthgen``: synthetic cabin scenes rendered through an equidistant fisheye
- ``cli``: the ``incarpose`` command-line tool
"""

from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
