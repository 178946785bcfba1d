"""Dual-tower prompt fusion and item scoring.

Each route ("+" steering toward a category, "-" steering away) owns an
independent tower: a query-normalized cross-attention over the projected
prompt rows, a residual add, a feed-forward block, and a trailing
normalization.  Routing is hard — an instance passes through exactly one
tower, and the other tower's parameters never touch it.

The trailing normalization scales by root-mean-square without centering,
so a tower whose value path is zero maps h_u to a positive multiple of
itself: rankings through a freshly initialized tower match the raw
backbone rankings exactly, which keeps the pre-trained behaviour intact
at the start of prompt training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .corpus.types import ROUTE_NEGATIVE, ROUTE_NONE, ROUTE_POSITIVE
from .errors import ConfigurationError, InvalidArgumentError
from .numerics import (
    Tape,
    TapeValue,
    add,
    layer_norm,
    linear,
    multi_head_attention,
    relu,
    reshape,
    rms_norm,
    softmax_temp,
)

_MASK = -1e30


def init_tower_params(
    rng: np.random.Generator, d: int, heads: int, ffn_mult: int = 2
) -> dict[str, TapeValue]:
    """One fusion tower, initialized so its output starts at rms(h_u).

    The attention output projection and the second FFN layer start at
    zero, which zeroes the whole value path; query/key projections and
    the first FFN layer start small-random so gradients reach them from
    the first optimizer step.
    """
    if d % heads != 0:
        raise ConfigurationError(f"heads ({heads}) must divide d ({d})")
    if ffn_mult < 1:
        raise ConfigurationError("ffn_mult must be >= 1")
    sigma_attn = math.sqrt(1.0 / d)
    sigma_ffn = math.sqrt(2.0 / (d + ffn_mult * d))
    return {
        "ln_q.gain": TapeValue(np.ones(d)),
        "ln_q.bias": TapeValue(np.zeros(d)),
        "attn.w_q": TapeValue(rng.normal(0.0, sigma_attn, size=(d, d))),
        "attn.w_k": TapeValue(rng.normal(0.0, sigma_attn, size=(d, d))),
        "attn.w_v": TapeValue(rng.normal(0.0, sigma_attn, size=(d, d))),
        "attn.w_o": TapeValue(np.zeros((d, d))),
        "ffn.w1": TapeValue(rng.normal(0.0, sigma_ffn, size=(d, ffn_mult * d))),
        "ffn.b1": TapeValue(np.zeros(ffn_mult * d)),
        "ffn.w2": TapeValue(np.zeros((ffn_mult * d, d))),
        "ffn.b2": TapeValue(np.zeros(d)),
        "ln_out.gain": TapeValue(np.ones(d)),
        "ln_out.bias": TapeValue(np.zeros(d)),
    }


def init_fusion(
    rng: np.random.Generator, d: int, heads: int, ffn_mult: int = 2, shared: bool = False
) -> dict[str, dict[str, TapeValue]]:
    """Both towers; with shared=True a single tower serves both routes."""
    pos = init_tower_params(rng, d, heads, ffn_mult)
    neg = pos if shared else init_tower_params(rng, d, heads, ffn_mult)
    return {ROUTE_POSITIVE: pos, ROUTE_NEGATIVE: neg}


def fuse(
    tape: Tape | None,
    h: TapeValue,
    c_p: TapeValue | None,
    route: str | None,
    towers: Mapping[str, dict[str, TapeValue]],
    heads: int,
) -> TapeValue:
    """Steer a batch of user states by their prompt rows through one tower.

    h is (B, d); c_p is (B, m, d).  With route None (or "none") the
    input is returned untouched — the bypass used whenever no prompt is
    given.
    """
    if route is None or route == ROUTE_NONE:
        return h
    if route not in towers:
        raise InvalidArgumentError(f"unknown route {route!r}")
    if c_p is None:
        raise InvalidArgumentError("routed fusion requires prompt rows")
    tower = towers[route]
    if h.value.ndim != 2:
        raise ConfigurationError(f"fuse expects (batch, d) user states, got {h.value.shape}")
    b, d = h.value.shape
    if c_p.value.ndim != 3 or c_p.value.shape[0] != b or c_p.value.shape[2] != d:
        raise ConfigurationError(
            f"prompt rows {c_p.value.shape} incompatible with user states {h.value.shape}"
        )

    q = layer_norm(tape, h, tower["ln_q.gain"], tower["ln_q.bias"])
    z = multi_head_attention(
        tape,
        reshape(tape, q, (b, 1, d)),
        c_p,
        c_p,
        tower["attn.w_q"],
        tower["attn.w_k"],
        tower["attn.w_v"],
        tower["attn.w_o"],
        heads,
    )
    h_res = add(tape, h, reshape(tape, z, (b, d)))
    f = linear(tape, h_res, tower["ffn.w1"], tower["ffn.b1"])
    f = linear(tape, relu(tape, f), tower["ffn.w2"], tower["ffn.b2"])
    return rms_norm(tape, add(tape, h_res, f), tower["ln_out.gain"], tower["ln_out.bias"])


def fuse_single(
    tape: Tape | None,
    h: TapeValue,
    c_p: TapeValue | None,
    route: str | None,
    towers: Mapping[str, dict[str, TapeValue]],
    heads: int,
) -> TapeValue:
    """fuse for one user state (d,) -> (d,)."""
    d = h.value.shape[-1]
    if route is None or route == ROUTE_NONE:
        return h
    if c_p is None:
        raise InvalidArgumentError("routed fusion requires prompt rows")
    m = c_p.value.shape[0]
    out = fuse(
        tape,
        reshape(tape, h, (1, d)),
        reshape(tape, c_p, (1, m, d)),
        route,
        towers,
        heads,
    )
    return reshape(tape, out, (d,))


@dataclass(frozen=True)
class ItemScores:
    """Scores over the catalog: index i corresponds to item id i+1.

    logits carry the raw dot products with excluded positions sunk to a
    large negative sentinel; probs is the temperature softmax over the
    same masked vector, so excluded items get probability exactly zero.
    """

    logits: np.ndarray
    probs: np.ndarray


def score_items(
    h: np.ndarray,
    table: np.ndarray,
    tau: float,
    exclude: set[int] | frozenset[int] = frozenset(),
) -> ItemScores:
    """Temperature softmax of h against every non-padding item row."""
    if not np.isfinite(tau) or tau <= 0.0:
        raise InvalidArgumentError(f"temperature must be positive, got {tau}")
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 1 or h.shape[0] != table.shape[1]:
        raise InvalidArgumentError(
            f"state shape {h.shape} does not match embedding width {table.shape[1]}"
        )
    vocab = table.shape[0] - 1
    logits = table[1:] @ h
    if exclude:
        idx = np.fromiter((i - 1 for i in exclude), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= vocab):
            raise InvalidArgumentError("exclude set contains ids outside the catalog")
        logits = logits.copy()
        logits[idx] = _MASK
    probs = softmax_temp(logits, tau)
    return ItemScores(logits=logits, probs=probs)


def top_k(scores: ItemScores, k: int) -> list[int]:
    """Item ids of the k best logits, ties broken by lower item id."""
    if k < 1:
        raise InvalidArgumentError("k must be positive")
    order = np.argsort(-scores.logits, kind="stable")
    ids = []
    for pos in order[:k]:
        if scores.logits[pos] <= _MASK:
            break
        ids.append(int(pos) + 1)
    return ids
