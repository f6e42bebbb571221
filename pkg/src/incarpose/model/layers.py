"""Parameter containers and the building blocks of the decoder."""

import numpy as np

from .. import tensorcore as tc
from ..errors import ShapeError


class Module:
    """Collects Tensor parameters from attributes, recursively, in definition order."""

    def named_parameters(self, prefix=""):
        for key, val in vars(self).items():
            if isinstance(val, tc.Tensor) and val.requires_grad:
                yield prefix + key, val
            elif isinstance(val, Module):
                yield from val.named_parameters(f"{prefix}{key}.")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{key}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]


def xavier_uniform(rng, fan_in, fan_out):
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_in, fan_out))


class Linear(Module):
    def __init__(self, fan_in, fan_out, rng, bias=True, zero_init=False):
        w = np.zeros((fan_in, fan_out)) if zero_init else xavier_uniform(rng, fan_in, fan_out)
        self.weight = tc.Tensor(w, requires_grad=True)
        self.bias = tc.Tensor(np.zeros(fan_out), requires_grad=True) if bias else None

    def __call__(self, x):
        y = tc.matmul(x, self.weight)
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        self.gain = tc.Tensor(np.ones(dim), requires_grad=True)
        self.bias = tc.Tensor(np.zeros(dim), requires_grad=True)
        self.eps = eps

    def __call__(self, x):
        return tc.layer_norm(x, self.gain, self.bias, self.eps)


# --- 2D rotary position encoding ----------------------------------------------------------


def rope2d_tables(positions, head_dim, base=10000.0):
    """cos / signed-sin tables (N, head_dim) and the pair-swap permutation.

    The first half of the channels is rotated by u * theta_i, the second half
    by v * theta_i, with theta_i = base^(-2i / (head_dim / 2)) per channel pair i.
    """
    if head_dim % 4 != 0:
        raise ShapeError(f"2D RoPE needs head_dim divisible by 4, got {head_dim}")
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    half = head_dim // 2
    inv_freq = base ** (-np.arange(0, half, 2) / half)  # (half/2,)
    ang_u = pos[:, :1] * inv_freq  # (N, half/2)
    ang_v = pos[:, 1:] * inv_freq
    ang = np.concatenate([np.repeat(ang_u, 2, axis=1), np.repeat(ang_v, 2, axis=1)], axis=1)
    cos = np.cos(ang)
    sin = np.sin(ang)
    sign = np.tile([-1.0, 1.0], head_dim // 2)
    perm = np.arange(head_dim).reshape(-1, 2)[:, ::-1].reshape(-1)
    return cos, sin * sign, perm


def rope2d_apply(x, positions, base=10000.0):
    """Rotate channel pairs of x (..., N, heads, head_dim) by their 2D token position."""
    x = tc.as_tensor(x)
    if x.ndim < 3:
        raise ShapeError(f"rope2d_apply expects (..., N, heads, head_dim), got {x.shape}")
    n, heads, hd = x.shape[-3:]
    if np.shape(positions)[0] != n:
        raise ShapeError(f"rope2d_apply: {np.shape(positions)[0]} positions for {n} tokens")
    cos, ssin, perm = rope2d_tables(positions, hd, base)
    cos = np.broadcast_to(cos[:, None, :], (n, heads, hd)).copy()
    ssin = np.broadcast_to(ssin[:, None, :], (n, heads, hd)).copy()
    return x * tc.Tensor(cos) + tc.take(x, perm, axis=-1) * tc.Tensor(ssin)


# --- attention ------------------------------------------------------------------------------


class Attention(Module):
    """Multi-head attention with 2D RoPE on queries and keys."""

    def __init__(self, dim, heads, rng, rope_base=10000.0):
        if dim % heads != 0:
            raise ShapeError(f"dim {dim} not divisible by heads {heads}")
        self.heads = heads
        self.head_dim = dim // heads
        if self.head_dim % 4 != 0:
            raise ShapeError(f"head_dim {self.head_dim} must be divisible by 4 for 2D RoPE")
        self.rope_base = rope_base
        self.q = Linear(dim, dim, rng)
        self.k = Linear(dim, dim, rng)
        self.v = Linear(dim, dim, rng)
        self.proj = Linear(dim, dim, rng)

    def __call__(self, x, ctx, pos_x, pos_ctx):
        B, nq, d = x.shape
        nk = ctx.shape[1]
        h, hd = self.heads, self.head_dim
        q = rope2d_apply(self.q(x).reshape(B, nq, h, hd), pos_x, self.rope_base)
        k = rope2d_apply(self.k(ctx).reshape(B, nk, h, hd), pos_ctx, self.rope_base)
        v = self.v(ctx).reshape(B, nk, h, hd)
        q = q.transpose(0, 2, 1, 3)
        k = k.transpose(0, 2, 3, 1)
        v = v.transpose(0, 2, 1, 3)
        attn = tc.softmax(tc.matmul(q, k) * (1.0 / np.sqrt(hd)), axis=-1)
        out = tc.matmul(attn, v).transpose(0, 2, 1, 3).reshape(B, nq, d)
        return self.proj(out)


class MLP(Module):
    def __init__(self, dim, ratio, rng):
        hidden = int(round(dim * ratio))
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def __call__(self, x):
        return self.fc2(tc.gelu(self.fc1(x)))


class DecoderBlock(Module):
    """Pre-norm block: self-attention, cross-attention to the other view, MLP."""

    def __init__(self, dim, heads, mlp_ratio, rng, rope_base=10000.0):
        self.norm1 = LayerNorm(dim)
        self.self_attn = Attention(dim, heads, rng, rope_base)
        self.norm2 = LayerNorm(dim)
        self.norm_ctx = LayerNorm(dim)
        self.cross_attn = Attention(dim, heads, rng, rope_base)
        self.norm3 = LayerNorm(dim)
        self.mlp = MLP(dim, mlp_ratio, rng)

    def __call__(self, x, ctx, pos_x, pos_ctx):
        if x.shape[-1] != ctx.shape[-1]:
            raise ShapeError(f"decoder block: token dims differ, {x.shape} vs {ctx.shape}")
        y = self.norm1(x)
        x = x + self.self_attn(y, y, pos_x, pos_x)
        x = x + self.cross_attn(self.norm2(x), self.norm_ctx(ctx), pos_x, pos_ctx)
        return x + self.mlp(self.norm3(x))
