"""Value/gradient containers and the backward pass driver.

There is no general-purpose graph here.  Each kernel in ``kernels.py``
computes its forward result and pushes one hand-written closure onto a
``Tape``; running the tape pops the closures in reverse order.  That is
the whole machinery.
"""

from __future__ import annotations

from typing import Callable

import numpy as np


class TapeValue:
    """A float64 array paired with an accumulated-gradient buffer.

    Both model parameters and intermediate activations are TapeValues;
    gradients are zero on creation and after ``zero_grad``.
    """

    __slots__ = ("value", "grad")

    def __init__(self, value):
        arr = np.asarray(value, dtype=np.float64)
        if arr.ndim and not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.value = arr
        self.grad = np.zeros_like(arr)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:  # pragma: no cover
        return f"TapeValue(shape={self.value.shape})"


class Tape:
    """LIFO stack of backward closures recorded during a forward pass."""

    __slots__ = ("_stack",)

    def __init__(self):
        self._stack: list[Callable[[], None]] = []

    def push(self, fn: Callable[[], None]) -> None:
        self._stack.append(fn)

    def run_backward(self) -> None:
        """Pop and run every closure, newest first."""
        stack = self._stack
        while stack:
            stack.pop()()


def backward(tape: Tape, loss: TapeValue) -> None:
    """Seed the scalar loss gradient with 1 and unwind the tape."""
    if loss.value.shape != ():
        raise ValueError("backward expects a scalar loss")
    loss.grad[...] = 1.0
    tape.run_backward()
