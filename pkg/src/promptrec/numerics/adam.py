"""Adam with bias correction, one state object per parameter tensor."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgumentError
from .tape import TapeValue


@dataclass
class AdamState:
    """First/second moment buffers plus the step counter for one tensor."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 1e-3

    @classmethod
    def for_param(cls, param: TapeValue, lr: float = 1e-3, **kw) -> "AdamState":
        return cls(m=np.zeros_like(param.value), v=np.zeros_like(param.value), lr=lr, **kw)


def adam_step(param: TapeValue, state: AdamState, lr: float | None = None) -> None:
    """Apply one bias-corrected Adam update in place from param.grad."""
    g = param.grad
    if state.m.shape != param.value.shape:
        raise InvalidArgumentError("adam state shape does not match parameter")
    if not np.all(np.isfinite(g)):
        raise InvalidArgumentError("non-finite gradient passed to adam_step")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    state.m *= b1
    state.m += (1.0 - b1) * g
    state.v *= b2
    state.v += (1.0 - b2) * (g * g)
    mhat = state.m / (1.0 - b1 ** state.t)
    vhat = state.v / (1.0 - b2 ** state.t)
    alpha = state.lr if lr is None else lr
    param.value -= alpha * mhat / (np.sqrt(vhat) + state.eps)
