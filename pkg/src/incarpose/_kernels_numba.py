"""Loop kernels compiled with numba. Semantics mirror ``_kernels_numpy``."""

import math

import numpy as np
from numba import njit

from ._accel import NUMBA_OPTS


@njit(**NUMBA_OPTS)
def splat_gaussians(us, vs, sigmas, weights, height, width, cutoff):
    out = np.zeros((height, width))
    for p in range(us.shape[0]):
        s = sigmas[p]
        reach = cutoff * s
        inv = 1.0 / (2.0 * s * s)
        # pixel j has its center at j + 0.5
        j0 = max(0, int(math.floor(us[p] - reach - 0.5)))
        j1 = min(width - 1, int(math.ceil(us[p] + reach - 0.5)))
        i0 = max(0, int(math.floor(vs[p] - reach - 0.5)))
        i1 = min(height - 1, int(math.ceil(vs[p] + reach - 0.5)))
        r2max = reach * reach
        for i in range(i0, i1 + 1):
            dy = i + 0.5 - vs[p]
            for j in range(j0, j1 + 1):
                dx = j + 0.5 - us[p]
                d2 = dx * dx + dy * dy
                if d2 <= r2max:
                    out[i, j] += weights[p] * math.exp(-d2 * inv)
    return out


@njit(**NUMBA_OPTS)
def bilinear_resize(img, out_h, out_w):
    h, w, c = img.shape
    out = np.empty((out_h, out_w, c))
    sy = h / out_h
    sx = w / out_w
    for i in range(out_h):
        y = (i + 0.5) * sy - 0.5
        if y < 0.0:
            y = 0.0
        if y > h - 1:
            y = h - 1.0
        y0 = int(math.floor(y))
        y1 = min(y0 + 1, h - 1)
        fy = y - y0
        for j in range(out_w):
            x = (j + 0.5) * sx - 0.5
            if x < 0.0:
                x = 0.0
            if x > w - 1:
                x = w - 1.0
            x0 = int(math.floor(x))
            x1 = min(x0 + 1, w - 1)
            fx = x - x0
            for k in range(c):
                top = img[y0, x0, k] * (1.0 - fx) + img[y0, x1, k] * fx
                bot = img[y1, x0, k] * (1.0 - fx) + img[y1, x1, k] * fx
                out[i, j, k] = top * (1.0 - fy) + bot * fy
    return out


@njit(**NUMBA_OPTS)
def rgb_to_hsv(img):
    h, w, _ = img.shape
    out = np.empty((h, w, 3))
    for i in range(h):
        for j in range(w):
            r = img[i, j, 0]
            g = img[i, j, 1]
            b = img[i, j, 2]
            mx = max(r, g, b)
            mn = min(r, g, b)
            d = mx - mn
            if d == 0.0:
                hue = 0.0
            elif mx == r:
                hue = ((g - b) / d) % 6.0
            elif mx == g:
                hue = (b - r) / d + 2.0
            else:
                hue = (r - g) / d + 4.0
            out[i, j, 0] = hue / 6.0
            out[i, j, 1] = 0.0 if mx == 0.0 else d / mx
            out[i, j, 2] = mx
    return out


@njit(**NUMBA_OPTS)
def hsv_to_rgb(img):
    h, w, _ = img.shape
    out = np.empty((h, w, 3))
    for i in range(h):
        for j in range(w):
            hh = (img[i, j, 0] % 1.0) * 6.0
            s = img[i, j, 1]
            v = img[i, j, 2]
            sector = int(math.floor(hh))
            f = hh - sector
            p = v * (1.0 - s)
            q = v * (1.0 - s * f)
            t = v * (1.0 - s * (1.0 - f))
            sector = sector % 6
            if sector == 0:
                r, g, b = v, t, p
            elif sector == 1:
                r, g, b = q, v, p
            elif sector == 2:
                r, g, b = p, v, t
            elif sector == 3:
                r, g, b = p, q, v
            elif sector == 4:
                r, g, b = t, p, v
            else:
                r, g, b = v, p, q
            out[i, j, 0] = r
            out[i, j, 1] = g
            out[i, j, 2] = b
    return out


@njit(**NUMBA_OPTS)
def matrix_to_quat(mats):
    n = mats.shape[0]
    out = np.empty((n, 4))
    for k in range(n):
        m = mats[k]
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        c0 = 1.0 + tr
        c1 = 1.0 + 2.0 * m[0, 0] - tr
        c2 = 1.0 + 2.0 * m[1, 1] - tr
        c3 = 1.0 + 2.0 * m[2, 2] - tr
        best = 0
        cmax = c0
        if c1 > cmax:
            best, cmax = 1, c1
        if c2 > cmax:
            best, cmax = 2, c2
        if c3 > cmax:
            best, cmax = 3, c3
        s = math.sqrt(cmax) * 0.5
        f = 0.25 / s
        if best == 0:
            w = s
            x = (m[2, 1] - m[1, 2]) * f
            y = (m[0, 2] - m[2, 0]) * f
            z = (m[1, 0] - m[0, 1]) * f
        elif best == 1:
            x = s
            w = (m[2, 1] - m[1, 2]) * f
            y = (m[0, 1] + m[1, 0]) * f
            z = (m[0, 2] + m[2, 0]) * f
        elif best == 2:
            y = s
            w = (m[0, 2] - m[2, 0]) * f
            x = (m[0, 1] + m[1, 0]) * f
            z = (m[1, 2] + m[2, 1]) * f
        else:
            z = s
            w = (m[1, 0] - m[0, 1]) * f
            x = (m[0, 2] + m[2, 0]) * f
            y = (m[1, 2] + m[2, 1]) * f
        out[k, 0] = w
        out[k, 1] = x
        out[k, 2] = y
        out[k, 3] = z
    return out
