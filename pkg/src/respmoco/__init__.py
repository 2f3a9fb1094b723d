"""Motion correction for respiratory-gated 3D emission images.

Synthetic 4D phantoms with known deformation fields, breathing-trace gating,
an unsupervised multi-resolution 3D flow network, count-preserving
warp-and-sum correction, and the evaluation metrics to judge it.
"""

__version__ = "0.1.0"

from .volumes import Volume3D, FlowField

__all__ = ["Volume3D", "FlowField", "__version__"]
