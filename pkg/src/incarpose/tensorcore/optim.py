"""AdamW with decoupled weight decay."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError

PAPER_LR = 1e-6
PAPER_WEIGHT_DECAY = 1e-5


@dataclass
class AdamWState:
    lr: float = PAPER_LR
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = PAPER_WEIGHT_DECAY
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def adamw_step(params, grads, state):
    """Update ``params`` (list of arrays) in place and advance ``state``.

    Weight decay scales the parameters directly (p <- p - lr * wd * p) and
    never enters the moment estimates.
    """
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError(f"adamw_step: {len(params)} params, {len(grads)} grads, {len(state.m)} moment buffers")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"adamw_step: param {p.shape} vs grad {g.shape} vs moment {m.shape}")
        if state.weight_decay:
            p -= state.lr * state.weight_decay * p
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    return params, state


class AdamW:
    """Optimizer over a list of Tensors; parameters without a gradient get a zero gradient."""

    def __init__(self, params, lr=PAPER_LR, betas=(0.9, 0.999), eps=1e-8, weight_decay=PAPER_WEIGHT_DECAY):
        self.params = list(params)
        self.state = AdamWState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps, weight_decay=weight_decay)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        adamw_step([p.data for p in self.params], grads, self.state)
