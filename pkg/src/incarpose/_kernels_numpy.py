"""Vectorized numpy versions of the hot kernels (fallback path)."""

import numpy as np


def splat_gaussians(us, vs, sigmas, weights, height, width, cutoff):
    out = np.zeros((height, width))
    if us.shape[0] == 0:
        return out
    ys = np.arange(height) + 0.5
    xs = np.arange(width) + 0.5
    dy = ys[None, :, None] - vs[:, None, None]
    dx = xs[None, None, :] - us[:, None, None]
    d2 = dx * dx + dy * dy
    s = sigmas[:, None, None]
    vals = weights[:, None, None] * np.exp(-d2 / (2.0 * s * s))
    vals = np.where(d2 <= (cutoff * s) ** 2, vals, 0.0)
    # accumulate point by point so the summation order matches the loop kernel
    for p in range(vals.shape[0]):
        out += vals[p]
    return out


def _source_coords(n_out, n_in):
    pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    pos = np.clip(pos, 0.0, n_in - 1.0)
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, pos - lo


def bilinear_resize(img, out_h, out_w):
    h, w, _ = img.shape
    y0, y1, fy = _source_coords(out_h, h)
    x0, x1, fx = _source_coords(out_w, w)
    fx = fx[None, :, None]
    fy = fy[:, None, None]
    top = img[y0][:, x0] * (1.0 - fx) + img[y0][:, x1] * fx
    bot = img[y1][:, x0] * (1.0 - fx) + img[y1][:, x1] * fx
    return top * (1.0 - fy) + bot * fy


def rgb_to_hsv(img):
    r, g, b = img[..., 0], img[..., 1], img[..., 2]
    mx = np.max(img[..., :3], axis=-1)
    mn = np.min(img[..., :3], axis=-1)
    d = mx - mn
    safe = np.where(d == 0.0, 1.0, d)
    hue = np.where(
        mx == r,
        ((g - b) / safe) % 6.0,
        np.where(mx == g, (b - r) / safe + 2.0, (r - g) / safe + 4.0),
    )
    hue = np.where(d == 0.0, 0.0, hue)
    sat = np.where(mx == 0.0, 0.0, d / np.where(mx == 0.0, 1.0, mx))
    return np.stack([hue / 6.0, sat, mx], axis=-1)


def hsv_to_rgb(img):
    hh = (img[..., 0] % 1.0) * 6.0
    s = img[..., 1]
    v = img[..., 2]
    sector = np.floor(hh)
    f = hh - sector
    sector = sector.astype(np.int64) % 6
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    choices_r = [v, q, p, p, t, v]
    choices_g = [t, v, v, q, p, p]
    choices_b = [p, p, t, v, v, q]
    r = np.choose(sector, choices_r)
    g = np.choose(sector, choices_g)
    b = np.choose(sector, choices_b)
    return np.stack([r, g, b], axis=-1)


def matrix_to_quat(mats):
    m = mats
    tr = m[:, 0, 0] + m[:, 1, 1] + m[:, 2, 2]
    cands = np.stack(
        [1.0 + tr, 1.0 + 2.0 * m[:, 0, 0] - tr, 1.0 + 2.0 * m[:, 1, 1] - tr, 1.0 + 2.0 * m[:, 2, 2] - tr],
        axis=-1,
    )
    best = np.argmax(cands, axis=-1)
    s = np.sqrt(np.take_along_axis(cands, best[:, None], axis=-1)[:, 0]) * 0.5
    f = 0.25 / s
    d21 = m[:, 2, 1] - m[:, 1, 2]
    d02 = m[:, 0, 2] - m[:, 2, 0]
    d10 = m[:, 1, 0] - m[:, 0, 1]
    s01 = m[:, 0, 1] + m[:, 1, 0]
    s02 = m[:, 0, 2] + m[:, 2, 0]
    s12 = m[:, 1, 2] + m[:, 2, 1]
    q = np.empty((m.shape[0], 4))
    rows = [
        (s, d21 * f, d02 * f, d10 * f),
        (d21 * f, s, s01 * f, s02 * f),
        (d02 * f, s01 * f, s, s12 * f),
        (d10 * f, s02 * f, s12 * f, s),
    ]
    for b, (w, x, y, z) in enumerate(rows):
        sel = best == b
        q[sel, 0] = w[sel]
        q[sel, 1] = x[sel]
        q[sel, 2] = y[sel]
        q[sel, 3] = z[sel]
    return q
