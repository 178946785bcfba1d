"""Finite-difference gradient verification.

The checker is the independent oracle for every backward kernel: it
re-derives each partial derivative from two loss evaluations and compares
against what the tape accumulated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from ..errors import InvalidArgumentError
from .tape import TapeValue


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst_param: str
    worst_index: tuple[int, ...]
    per_param: dict[str, float] = field(default_factory=dict)

    def __str__(self) -> str:  # pragma: no cover
        return (
            f"max relative error {self.max_rel_error:.3e} "
            f"at {self.worst_param}{list(self.worst_index)}"
        )


def grad_check(
    loss_fn: Callable[[], float],
    params: Mapping[str, TapeValue],
    eps_fd: float = 1e-5,
) -> GradCheckResult:
    """Compare analytic gradients against central finite differences.

    ``loss_fn`` evaluates the scalar loss for the current parameter values
    and, as a side effect, accumulates analytic gradients into the params'
    grad buffers.  Relative error per coordinate is
    |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|); coordinates where both
    gradients vanish therefore score 0 by convention.
    """
    for p in params.values():
        p.zero_grad()
    base = float(loss_fn())
    if not np.isfinite(base):
        raise InvalidArgumentError(f"loss is non-finite ({base}) at the evaluation point")

    analytic = {name: p.grad.copy() for name, p in params.items()}

    worst = 0.0
    worst_param = ""
    worst_index: tuple[int, ...] = ()
    per_param: dict[str, float] = {}

    for name, p in params.items():
        flat = p.value.reshape(-1)
        ga = analytic[name].reshape(-1)
        local_worst = 0.0
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps_fd
            up = float(loss_fn())
            flat[i] = orig - eps_fd
            down = float(loss_fn())
            flat[i] = orig
            if not (np.isfinite(up) and np.isfinite(down)):
                raise InvalidArgumentError(
                    f"loss non-finite while perturbing parameter {name!r} index {i}"
                )
            gfd = (up - down) / (2.0 * eps_fd)
            rel = abs(ga[i] - gfd) / max(1e-8, abs(ga[i]) + abs(gfd))
            if rel > local_worst:
                local_worst = rel
            if rel > worst:
                worst = rel
                worst_param = name
                worst_index = np.unravel_index(i, p.value.shape)
        per_param[name] = local_worst

    # leave the analytic gradients in place for the caller
    for name, p in params.items():
        p.grad[...] = analytic[name]

    return GradCheckResult(worst, worst_param, worst_index, per_param)
