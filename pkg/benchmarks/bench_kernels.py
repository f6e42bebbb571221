"""Time the numba kernels against their numpy fallbacks.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Both backends are imported directly, so the environment flag is not needed
here. The first numba call (compilation or cache load) is excluded.
"""

import argparse
import timeit

import numpy as np

from incarpose import _kernels_numba as nb_k
from incarpose import _kernels_numpy as np_k


def _cases(rng):
    n = 400
    splat = (rng.uniform(0, 32, n), rng.uniform(0, 32, n), rng.uniform(0.5, 3.0, n), rng.uniform(0, 1, n), 32, 32, 3.0)
    img = rng.uniform(size=(480, 640, 3))
    mats = np.linalg.qr(rng.normal(size=(10_000, 3, 3)))[0]
    mats *= np.sign(np.linalg.det(mats))[:, None, None]
    return {
        "splat_gaussians (400 pts, 32x32)": ("splat_gaussians", splat),
        "bilinear_resize (640x480 -> 224x168)": ("bilinear_resize", (img, 168, 224)),
        "rgb_to_hsv (640x480)": ("rgb_to_hsv", (img,)),
        "hsv_to_rgb (640x480)": ("hsv_to_rgb", (np_k.rgb_to_hsv(img),)),
        "matrix_to_quat (10^4)": ("matrix_to_quat", (np.ascontiguousarray(mats),)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':40s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s}")
    for label, (name, call_args) in _cases(rng).items():
        f_np, f_nb = getattr(np_k, name), getattr(nb_k, name)
        out_np, out_nb = f_np(*call_args), f_nb(*call_args)  # warm-up and agreement check
        diff = np.max(np.abs(np.asarray(out_np) - np.asarray(out_nb)))
        t_np = min(timeit.repeat(lambda: f_np(*call_args), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: f_nb(*call_args), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:40s} {t_np:10.3f} {t_nb:10.3f} {t_np / t_nb:7.1f}x  (max diff {diff:.1e})")


if __name__ == "__main__":
    main()
