"""Training loop: AdamW on decoder, bottleneck and head; the backbone stays frozen."""

import logging
import time
from dataclasses import asdict, dataclass

import numpy as np

from .. import geom3, losses
from .. import tensorcore as tc
from ..errors import InvalidArgumentError
from ..imageproc import PreprocessConfig, preprocess
from ..tensorcore.optim import PAPER_LR, PAPER_WEIGHT_DECAY
from .network import InCaRPoseNet, ModelConfig

log = logging.getLogger(__name__)

TOY_LR = 1e-3


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 8
    lr: float = TOY_LR
    weight_decay: float = PAPER_WEIGHT_DECAY
    loss_id: str = "quat_pose_metric"
    alpha: float = 1.0
    bidirectional_reduction: str = "sum"
    seed: int = 0
    lr_schedule: str = "cosine"
    warmup_steps: int = 100

    def __post_init__(self):
        if self.epochs < 0:
            raise InvalidArgumentError("epochs must be >= 0")
        if self.batch_size < 1:
            raise InvalidArgumentError("batch_size must be >= 1")
        if self.loss_id not in losses.LOSS_IDS:
            raise InvalidArgumentError(f"unknown loss id {self.loss_id!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise InvalidArgumentError(f"unknown lr schedule {self.lr_schedule!r}")

    def loss_config(self):
        mode = "direction_rad" if self.loss_id == "quat_pose_direction" else "euclidean_m"
        return losses.LossConfig(alpha=self.alpha, translation_mode=mode)

    def to_dict(self):
        return asdict(self)


def paper_train_config(**overrides):
    """Optimizer settings of the full-scale setup: batch 8, lr 1e-6, weight decay 1e-5."""
    base = dict(batch_size=8, lr=PAPER_LR, weight_decay=PAPER_WEIGHT_DECAY, lr_schedule="constant", warmup_steps=0)
    base.update(overrides)
    return TrainConfig(**base)


def stack_dataset(records, pre_cfg=None):
    """Arrays (img_ref, img_2, R_rel, t_rel) from PairRecords, optionally preprocessed."""
    def prep(img, i):
        return img if pre_cfg is None else preprocess(img, pre_cfg, index=i)

    img_ref = np.stack([prep(r.img_ref, 2 * i) for i, r in enumerate(records)])
    img_2 = np.stack([prep(r.img_2, 2 * i + 1) for i, r in enumerate(records)])
    R = np.stack([r.target.rotation for r in records])
    t = np.stack([r.target.translation for r in records])
    return img_ref, img_2, R, t


def _batch_loss_grad(raw, R, t, cfg, tcfg):
    d = cfg.out_dim
    lcfg = tcfg.loss_config()
    fwd = losses.loss_gradient(tcfg.loss_id, raw[:, :d], R, t, cfg.repr_tag, lcfg)
    if not cfg.bidirectional:
        return fwd.value, fwd.grad
    R_inv = np.swapaxes(R, -1, -2)
    t_inv = -np.einsum("bji,bj->bi", R, t)
    inv = losses.loss_gradient(tcfg.loss_id, raw[:, d:], R_inv, t_inv, cfg.repr_tag, lcfg)
    scale = 1.0 if tcfg.bidirectional_reduction == "sum" else 0.5
    value = losses.combine_bidirectional(fwd.value, inv.value, tcfg.bidirectional_reduction)
    return value, scale * np.concatenate([fwd.grad, inv.grad], axis=1)


def evaluate(net, img_ref, img_2, R, t, batch_size=64):
    """Per-pair errors of eval-mode predictions: rotation (deg), translation (m),
    and the bidirectional consistency angle (deg) of fwd * inv."""
    rot, trans, cons = [], [], []
    for s in range(0, len(img_ref), batch_size):
        preds = net.predict(img_ref[s : s + batch_size], img_2[s : s + batch_size])
        for k, (fwd, inv) in enumerate(preds):
            i = s + k
            rot.append(np.degrees(losses.geodesic_distance(fwd.rotation, R[i])))
            trans.append(losses.euclidean_translation_error(fwd.translation, t[i]))
            if inv is not None:
                loop = geom3.compose(fwd, inv)
                cons.append(np.degrees(losses.geodesic_distance(loop.rotation, np.eye(3))))
    return {
        "rot_deg": np.asarray(rot),
        "trans_m": np.asarray(trans),
        "consistency_deg": np.asarray(cons),
    }


def _summarize(errs):
    out = {}
    for key, vals in errs.items():
        if len(vals):
            out[f"median_{key}"] = float(np.median(vals))
            out[f"mean_{key}"] = float(np.mean(vals))
    return out


def _lr_at(step, total, tcfg):
    lr = tcfg.lr
    if tcfg.warmup_steps and step < tcfg.warmup_steps:
        return lr * (step + 1) / tcfg.warmup_steps
    if tcfg.lr_schedule == "cosine" and total > tcfg.warmup_steps:
        frac = (step - tcfg.warmup_steps) / max(total - tcfg.warmup_steps, 1)
        return lr * 0.5 * (1.0 + np.cos(np.pi * min(frac, 1.0)))
    return lr


def train(dataset, cfg=ModelConfig(), tcfg=TrainConfig(), val_dataset=None, pre_cfg=None, net=None,
          progress=None):
    """Fit the decoder and head on ``dataset`` (list of PairRecords or stacked arrays).

    Returns (net, history); history holds one dict per epoch with the mean
    training loss and, when ``val_dataset`` is given, validation medians.
    """
    arrays = dataset if isinstance(dataset, tuple) else stack_dataset(dataset, pre_cfg) if len(dataset) else None
    if arrays is None or len(arrays[0]) == 0:
        raise InvalidArgumentError("training dataset is empty")
    img_ref, img_2, R, t = arrays
    val = None
    if val_dataset is not None:
        val = val_dataset if isinstance(val_dataset, tuple) else stack_dataset(val_dataset, pre_cfg)

    net = net or InCaRPoseNet(cfg)
    cfg = net.cfg
    backbone_before = {k: v.tobytes() for k, v in net.backbone.state().items()}
    params = net.parameters()
    opt = tc.AdamW(params, lr=tcfg.lr, weight_decay=tcfg.weight_decay)
    rng = np.random.default_rng(tcfg.seed)
    n = len(img_ref)
    steps_per_epoch = int(np.ceil(n / tcfg.batch_size))
    total = steps_per_epoch * tcfg.epochs
    history = []
    step = 0
    for epoch in range(tcfg.epochs):
        t0 = time.perf_counter()
        order = rng.permutation(n)
        epoch_loss = 0.0
        for s in range(0, n, tcfg.batch_size):
            idx = order[s : s + tcfg.batch_size]
            opt.state.lr = _lr_at(step, total, tcfg)
            opt.zero_grad()
            raw = net.forward_raw(img_ref[idx], img_2[idx], train=True, step=step)
            value, g = _batch_loss_grad(raw.data, R[idx], t[idx], cfg, tcfg)
            # d(sum(raw * g))/d(raw) = g, so this pushes the analytic loss gradient into the graph
            tc.sum_(raw * tc.Tensor(g)).backward()
            opt.step()
            epoch_loss += value * len(idx)
            step += 1
        for k, v in net.backbone.state().items():
            if v.tobytes() != backbone_before[k]:
                raise RuntimeError(f"frozen backbone parameter {k} changed during training")
        record = {"epoch": epoch + 1, "train_loss": epoch_loss / n, "seconds": time.perf_counter() - t0}
        if val is not None:
            record.update(_summarize(evaluate(net, *val)))
        history.append(record)
        log.info("epoch %d %s", epoch + 1, record)
        if progress is not None:
            progress(record)
    return net, history
