"""Two-view relative pose network: frozen patch backbone, cross-attention
decoder with 2D RoPE, residual 1x1-conv bottleneck with global average
pooling, and a head that can regress the pose in both directions."""

from dataclasses import asdict, dataclass, replace

import numpy as np

from .. import geom3
from .. import tensorcore as tc
from ..errors import DegenerateInputError, DegenerateOutputError, InvalidArgumentError, ShapeError
from ..losses import raw_to_rotation
from .layers import DecoderBlock, LayerNorm, Linear, Module, xavier_uniform


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 32
    in_channels: int = 1
    patch_size: int = 4
    embed_dim: int = 48
    decoder_dim: int = 32
    depth: int = 2
    heads: int = 4
    mlp_ratio: float = 4.0
    dropout_p: float = 0.1
    bottleneck_dim: int = 32
    head_hidden: int = 64
    repr_tag: str = "quat"
    bidirectional: bool = True
    rope_base: float = 10000.0
    seed: int = 0
    backbone_seed: int = 1234

    def __post_init__(self):
        if self.depth < 1:
            raise InvalidArgumentError("depth must be >= 1")
        if self.decoder_dim % self.heads != 0:
            raise InvalidArgumentError(f"decoder_dim {self.decoder_dim} not divisible by heads {self.heads}")
        if (self.decoder_dim // self.heads) % 4 != 0:
            raise InvalidArgumentError("head_dim must be divisible by 4 (2D RoPE rotates pairs per axis)")
        if self.image_size % self.patch_size != 0:
            raise InvalidArgumentError("image_size must be a multiple of patch_size")
        geom3.check_tag(self.repr_tag)

    @property
    def grid(self):
        return self.image_size // self.patch_size

    @property
    def out_dim(self):
        return geom3.repr_dim(self.repr_tag)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def paper_preset(**overrides):
    """Full-size decoder hyperparameters (12 heads, MLP ratio 4)."""
    base = dict(decoder_dim=768, heads=12, mlp_ratio=4.0, embed_dim=768, bottleneck_dim=256, head_hidden=256,
                image_size=224, patch_size=14, in_channels=3)
    base.update(overrides)
    return ModelConfig(**base)


@dataclass(frozen=True)
class TokenGrid:
    tokens: np.ndarray  # (..., N, D)
    positions: np.ndarray  # (N, 2), (u, v) = (column, row) in patch units
    grid_h: int
    grid_w: int


def patch_positions(grid_h, grid_w):
    v, u = np.meshgrid(np.arange(grid_h), np.arange(grid_w), indexing="ij")
    return np.stack([u.reshape(-1), v.reshape(-1)], axis=1).astype(np.float64)


class StubBackbone:
    """Frozen stand-in encoder: seeded linear patch embedding followed by GELU."""

    def __init__(self, cfg):
        rng = np.random.default_rng(cfg.backbone_seed)
        patch_dim = cfg.patch_size * cfg.patch_size * cfg.in_channels
        self.patch_size = cfg.patch_size
        self.in_channels = cfg.in_channels
        self.weight = rng.standard_normal((patch_dim, cfg.embed_dim)) / np.sqrt(patch_dim)
        self.bias = 0.5 * rng.standard_normal(cfg.embed_dim)
        self.weight.setflags(write=False)
        self.bias.setflags(write=False)

    def state(self):
        return {"backbone.weight": self.weight, "backbone.bias": self.bias}

    def __call__(self, images):
        """images (H, W, C) or (B, H, W, C) -> TokenGrid with tokens (B?, N, embed_dim)."""
        imgs = np.asarray(images, dtype=np.float64)
        single = imgs.ndim == 3
        if single:
            imgs = imgs[None]
        B, H, W, C = imgs.shape
        p = self.patch_size
        if H % p or W % p:
            raise ShapeError(f"image {H}x{W} is not divisible into {p}x{p} patches")
        if C != self.in_channels:
            raise ShapeError(f"backbone expects {self.in_channels} channels, got {C}")
        gh, gw = H // p, W // p
        patches = imgs.reshape(B, gh, p, gw, p, C).transpose(0, 1, 3, 2, 4, 5).reshape(B, gh * gw, p * p * C)
        z = patches @ self.weight + self.bias
        tokens = tc.gelu(tc.Tensor(z)).data
        return TokenGrid(tokens[0] if single else tokens, patch_positions(gh, gw), gh, gw)


def stub_backbone_forward(img, cfg):
    return StubBackbone(cfg)(img)


class Bottleneck(Module):
    """Channel fusion of both views' tokens: conv1x1 -> GELU -> conv1x1 plus a
    1x1 residual projection, then global average pooling over tokens."""

    def __init__(self, in_dim, out_dim, rng):
        self.w1 = tc.Tensor(xavier_uniform(rng, in_dim, out_dim).T, requires_grad=True)
        self.b1 = tc.Tensor(np.zeros(out_dim), requires_grad=True)
        self.w2 = tc.Tensor(xavier_uniform(rng, out_dim, out_dim).T, requires_grad=True)
        self.b2 = tc.Tensor(np.zeros(out_dim), requires_grad=True)
        self.w_res = tc.Tensor(xavier_uniform(rng, in_dim, out_dim).T, requires_grad=True)

    def __call__(self, tokens, grid_h, grid_w):
        B, N, C = tokens.shape
        x = tokens.transpose(0, 2, 1).reshape(B, C, grid_h, grid_w)
        h = tc.gelu(tc.conv2d_1x1(x, self.w1, self.b1))
        y = tc.conv2d_1x1(h, self.w2, self.b2) + tc.conv2d_1x1(x, self.w_res)
        return y.reshape(B, y.shape[1], grid_h * grid_w).mean(axis=-1)


class Head(Module):
    def __init__(self, in_dim, hidden, out_dim, bidirectional, rng):
        self.norm = LayerNorm(in_dim)
        self.fc = Linear(in_dim, hidden, rng)
        self.out_fwd = Linear(hidden, out_dim, rng)
        self.out_inv = Linear(hidden, out_dim, rng) if bidirectional else None

    def __call__(self, feat, dropout_p=0.0, train=False, seed=0, step=0):
        h = tc.gelu(self.fc(self.norm(feat)))
        h = tc.dropout(h, dropout_p, seed=seed, layer_id=1, step=step, train=train)
        fwd = self.out_fwd(h)
        if self.out_inv is None:
            return fwd
        return tc.concat([fwd, self.out_inv(h)], axis=-1)


class InCaRPoseNet(Module):
    def __init__(self, cfg=ModelConfig()):
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.backbone = StubBackbone(cfg)
        self.embed = Linear(cfg.embed_dim, cfg.decoder_dim, rng)
        self.blocks = [
            DecoderBlock(cfg.decoder_dim, cfg.heads, cfg.mlp_ratio, rng, cfg.rope_base) for _ in range(cfg.depth)
        ]
        self.bottleneck = Bottleneck(2 * cfg.decoder_dim, cfg.bottleneck_dim, rng)
        self.head = Head(cfg.bottleneck_dim, cfg.head_hidden, cfg.out_dim, cfg.bidirectional, rng)

    # decoder ------------------------------------------------------------------------------

    def decode(self, grid_a, grid_b):
        """Both views attend to each other block by block with shared weights."""
        a = self.embed(tc.Tensor(grid_a.tokens))
        b = self.embed(tc.Tensor(grid_b.tokens))
        for blk in self.blocks:
            a, b = blk(a, b, grid_a.positions, grid_b.positions), blk(b, a, grid_b.positions, grid_a.positions)
        return a, b

    def fuse_and_pool(self, tokens_a, tokens_b, grid_h, grid_w):
        if tokens_a.shape != tokens_b.shape:
            raise ShapeError(f"fuse_and_pool: token shapes differ, {tokens_a.shape} vs {tokens_b.shape}")
        return self.bottleneck(tc.concat([tokens_a, tokens_b], axis=-1), grid_h, grid_w)

    def forward_raw(self, img_ref, img_2, train=False, step=0):
        """Raw head output (B, d) or (B, 2d) for batched images (B, H, W, C)."""
        img_ref = np.asarray(img_ref, dtype=np.float64)
        img_2 = np.asarray(img_2, dtype=np.float64)
        if img_ref.ndim == 3:
            img_ref, img_2 = img_ref[None], img_2[None]
        ga = self.backbone(img_ref)
        gb = self.backbone(img_2)
        a, b = self.decode(ga, gb)
        feat = self.fuse_and_pool(a, b, ga.grid_h, ga.grid_w)
        return self.head(feat, self.cfg.dropout_p, train=train, seed=self.cfg.seed, step=step)

    def predict(self, img_ref, img_2):
        """Eval-mode poses: list of (forward, inverse-or-None) per pair."""
        with tc.no_grad():
            raw = self.forward_raw(img_ref, img_2, train=False).data
        return [split_and_postprocess(r, self.cfg) for r in raw]

    # weights ----------------------------------------------------------------------------------

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        params = dict(self.named_parameters())
        missing = set(params) - set(state)
        if missing:
            raise InvalidArgumentError(f"checkpoint is missing parameters: {sorted(missing)}")
        for name, p in params.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ShapeError(f"{name}: checkpoint shape {arr.shape} != model shape {p.shape}")
            p.data = arr.copy()

    def with_config(self, **changes):
        return InCaRPoseNet(replace(self.cfg, **changes))


def postprocess_output(raw, tag):
    """Raw vector (k + 3) -> Pose via quaternion normalization, SVD projection or direct mapping."""
    raw = np.asarray(raw, dtype=np.float64)
    k = geom3.REPR_DIMS[geom3.check_tag(tag)]
    if raw.shape != (k + 3,):
        raise InvalidArgumentError(f"{tag} output needs {k + 3} values, got shape {raw.shape}")
    try:
        R = raw_to_rotation(raw[:k], tag)
    except DegenerateInputError as exc:
        raise DegenerateOutputError(f"cannot map raw {tag} output to a rotation: {exc}") from exc
    return geom3.Pose(R, raw[k:])


def split_and_postprocess(raw, cfg):
    d = cfg.out_dim
    fwd = postprocess_output(raw[:d], cfg.repr_tag)
    inv = postprocess_output(raw[d : 2 * d], cfg.repr_tag) if cfg.bidirectional else None
    return fwd, inv


def model_forward(img_ref, img_2, cfg, weights=None):
    """Functional entry point: build a model for ``cfg``, load ``weights``, predict."""
    net = InCaRPoseNet(cfg)
    if weights is not None:
        net.load_state_dict(weights)
    out = net.predict(img_ref, img_2)
    return out[0] if np.asarray(img_ref).ndim == 3 else out
