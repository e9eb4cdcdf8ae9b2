"""Online multi-camera 3D multi-object tracking with occlusion-aware detection.

Subpackages select a compiled association kernel when available and fall back
to a pure NumPy implementation (set MVGLMB_PURE=1 to force the fallback).
"""

from ._kernels import IMPLEMENTATION as KERNEL_IMPLEMENTATION

__all__ = ["KERNEL_IMPLEMENTATION"]
__version__ = "0.1.0"
