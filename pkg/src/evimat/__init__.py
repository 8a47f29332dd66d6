"""Evidential interactive matting, desk scale.

Small regressors with a Normal-Inverse-Gamma head decompose predictive
uncertainty into aleatoric and epistemic parts; the epistemic part
drives label-selection interaction (fused across rounds in closed
form), the aleatoric part drives patch-level refinement.
"""

__version__ = "0.1.0"

from .nig import NIGMap, NIGParams, UncertaintyTriple
from .raster import Raster, load_fras, save_fras, save_png8

__all__ = [
    "NIGMap",
    "NIGParams",
    "UncertaintyTriple",
    "Raster",
    "load_fras",
    "save_fras",
    "save_png8",
    "__version__",
]
