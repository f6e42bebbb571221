"""Dispatch for hot kernels: numba loops by default, numpy when disabled.

Both backends expose the same functions with the same argument order; see
``_kernels_numba`` for the loop formulations.
"""

from ._accel import USE_NUMBA

if USE_NUMBA:
    from ._kernels_numba import bilinear_resize, hsv_to_rgb, matrix_to_quat, rgb_to_hsv, splat_gaussians

    BACKEND = "numba"
else:
    from ._kernels_numpy import bilinear_resize, hsv_to_rgb, matrix_to_quat, rgb_to_hsv, splat_gaussians

    BACKEND = "numpy"

__all__ = [
    "BACKEND",
    "bilinear_resize",
    "hsv_to_rgb",
    "matrix_to_quat",
    "rgb_to_hsv",
    "splat_gaussians",
]
