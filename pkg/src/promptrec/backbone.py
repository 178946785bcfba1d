"""Sequential encoders over item histories, plus the next-item loss.

Two interchangeable architectures condense a user's visible history into
a single d-dimensional vector: a GRU folded over the embedded items, and
a one-block pre-norm causal self-attention encoder with learned position
embeddings ("sas").  Both read from a shared item-embedding table whose
row 0 is reserved for padding and must never receive gradient.

Histories longer than ``max_len`` are truncated to the most recent
``max_len`` items inside the encoder, so callers never have to clip.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError
from .numerics import (
    GruParams,
    Tape,
    TapeValue,
    add,
    gru_sequence,
    layer_norm,
    linear,
    lookup,
    multi_head_attention,
    relu,
    reshape,
    softmax_cross_entropy,
    take_rows,
)

ARCH_GRU = "gru"
ARCH_SAS = "sas"

_INIT_SIGMA = 0.05


@dataclass(frozen=True)
class BackboneConfig:
    """Shape of the sequential encoder.

    ``heads`` and ``ffn_mult`` only matter for the attention
    architecture; the GRU ignores them.
    """

    arch: str = ARCH_GRU
    d: int = 32
    max_len: int = 30
    heads: int = 1
    ffn_mult: int = 2

    def __post_init__(self) -> None:
        if self.arch not in (ARCH_GRU, ARCH_SAS):
            raise ConfigurationError(f"unknown encoder architecture {self.arch!r}")
        if self.d < 2:
            raise ConfigurationError(f"hidden dimension must be at least 2, got {self.d}")
        if self.max_len < 2:
            raise ConfigurationError(f"max_len must be at least 2, got {self.max_len}")
        if self.arch == ARCH_SAS:
            if self.heads < 1 or self.d % self.heads != 0:
                raise ConfigurationError(
                    f"dimension {self.d} does not split into {self.heads} heads"
                )
            if self.ffn_mult < 1:
                raise ConfigurationError("ffn_mult must be at least 1")


def init_embeddings(rng: np.random.Generator, vocab: int, d: int) -> TapeValue:
    """Item embedding table: vocab + 1 rows, row 0 zeroed for padding."""
    if vocab < 1:
        raise ConfigurationError("embedding table needs at least one item")
    table = rng.normal(0.0, _INIT_SIGMA, size=(vocab + 1, d))
    table[0] = 0.0
    return TapeValue(table)


def init_backbone(
    rng: np.random.Generator, config: BackboneConfig, vocab: int
) -> dict[str, TapeValue]:
    """Seeded parameter dict for one encoder, embedding table included."""
    d = config.d
    params = {"emb.table": init_embeddings(rng, vocab, d)}
    if config.arch == ARCH_GRU:
        for gate in ("z", "r", "h"):
            params[f"gru.w_{gate}"] = TapeValue(rng.normal(0.0, _INIT_SIGMA, (d, d)))
            params[f"gru.u_{gate}"] = TapeValue(rng.normal(0.0, _INIT_SIGMA, (d, d)))
            params[f"gru.b_{gate}"] = TapeValue(np.zeros(d))
        return params
    params["pos.table"] = TapeValue(rng.normal(0.0, _INIT_SIGMA, (config.max_len, d)))
    for name in ("w_q", "w_k", "w_v", "w_o"):
        params[f"sas.attn.{name}"] = TapeValue(rng.normal(0.0, _INIT_SIGMA, (d, d)))
    hidden = d * config.ffn_mult
    params["sas.ffn.w1"] = TapeValue(rng.normal(0.0, _INIT_SIGMA, (d, hidden)))
    params["sas.ffn.b1"] = TapeValue(np.zeros(hidden))
    params["sas.ffn.w2"] = TapeValue(rng.normal(0.0, _INIT_SIGMA, (hidden, d)))
    params["sas.ffn.b2"] = TapeValue(np.zeros(d))
    for ln in ("ln1", "ln2", "ln_f"):
        params[f"sas.{ln}.gain"] = TapeValue(np.ones(d))
        params[f"sas.{ln}.bias"] = TapeValue(np.zeros(d))
    return params


def _gru_cell(params: dict[str, TapeValue]) -> GruParams:
    return GruParams(
        w_z=params["gru.w_z"], u_z=params["gru.u_z"], b_z=params["gru.b_z"],
        w_r=params["gru.w_r"], u_r=params["gru.u_r"], b_r=params["gru.b_r"],
        w_h=params["gru.w_h"], u_h=params["gru.u_h"], b_h=params["gru.b_h"],
    )


def _pad_batch(
    seqs: list[list[int]], max_len: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Right-pad a batch of histories, truncating each to its tail."""
    if not seqs:
        raise InvalidArgumentError("cannot encode an empty batch")
    clipped = []
    for s in seqs:
        if len(s) == 0:
            raise InvalidArgumentError("cannot encode an empty history")
        clipped.append(list(s)[-max_len:])
    width = max(len(s) for s in clipped)
    ids = np.zeros((len(clipped), width), dtype=np.int64)
    mask = np.zeros((len(clipped), width), dtype=np.float64)
    last = np.empty(len(clipped), dtype=np.int64)
    for i, s in enumerate(clipped):
        if min(s) < 1:
            raise InvalidArgumentError("item ids start at 1; 0 is the padding row")
        ids[i, : len(s)] = s
        mask[i, : len(s)] = 1.0
        last[i] = len(s) - 1
    return ids, mask, last


def _sas_positions(
    tape: Tape | None,
    ids: np.ndarray,
    params: dict[str, TapeValue],
    config: BackboneConfig,
) -> TapeValue:
    """All per-position outputs of the attention encoder, (B, W, d)."""
    bsz, width = ids.shape
    x = lookup(tape, params["emb.table"], ids)
    pos = lookup(tape, params["pos.table"], np.tile(np.arange(width), (bsz, 1)))
    h0 = add(tape, x, pos)
    a = layer_norm(tape, h0, params["sas.ln1.gain"], params["sas.ln1.bias"])
    a = multi_head_attention(
        tape, a, a, a,
        params["sas.attn.w_q"], params["sas.attn.w_k"],
        params["sas.attn.w_v"], params["sas.attn.w_o"],
        config.heads, causal=True,
    )
    h1 = add(tape, h0, a)
    f = layer_norm(tape, h1, params["sas.ln2.gain"], params["sas.ln2.bias"])
    f = relu(tape, linear(tape, f, params["sas.ffn.w1"], params["sas.ffn.b1"]))
    f = linear(tape, f, params["sas.ffn.w2"], params["sas.ffn.b2"])
    h2 = add(tape, h1, f)
    return layer_norm(tape, h2, params["sas.ln_f.gain"], params["sas.ln_f.bias"])


def encode_batch(
    tape: Tape | None,
    seqs: list[list[int]],
    params: dict[str, TapeValue],
    config: BackboneConfig,
) -> TapeValue:
    """Encode a batch of histories into (B, d) summary vectors.

    Right-padding is internal: with the GRU, padded steps leave the
    hidden state untouched; with attention, padded positions sit after
    every real one and causal masking keeps them out of real rows.
    """
    ids, mask, last = _pad_batch(seqs, config.max_len)
    if config.arch == ARCH_GRU:
        x = lookup(tape, params["emb.table"], ids)
        return gru_sequence(tape, x, mask, _gru_cell(params))
    out = _sas_positions(tape, ids, params, config)
    return take_rows(tape, out, last)


def encode_sequence(
    tape: Tape | None,
    seq: list[int],
    params: dict[str, TapeValue],
    config: BackboneConfig,
) -> TapeValue:
    """Encode one history into a (d,) vector."""
    h = encode_batch(tape, [seq], params, config)
    return reshape(tape, h, (config.d,))


def encode_positions(
    seq: list[int], params: dict[str, TapeValue], config: BackboneConfig
) -> np.ndarray:
    """Forward-only per-position outputs for one history, (L, d).

    Position t holds the encoder's summary of the first t+1 items.  Used
    by diagnostics and the causality checks; not differentiable.
    """
    clipped = list(seq)[-config.max_len :]
    if config.arch == ARCH_SAS:
        ids, _, _ = _pad_batch([clipped], config.max_len)
        return _sas_positions(None, ids, params, config).value[0]
    rows = [
        encode_sequence(None, clipped[: t + 1], params, config).value
        for t in range(len(clipped))
    ]
    return np.stack(rows)


def sequential_loss(
    tape: Tape | None,
    pairs: list[tuple[list[int], int]],
    params: dict[str, TapeValue],
    config: BackboneConfig,
    tau: float = 1.0,
) -> TapeValue:
    """Mean next-item cross-entropy over (prefix, next item) pairs.

    Each prefix is encoded independently and scored against every
    non-padding item at temperature ``tau`` with a full softmax.
    """
    if not pairs:
        raise InvalidArgumentError("sequential loss needs at least one pair")
    h = encode_batch(tape, [p for p, _ in pairs], params, config)
    targets = np.asarray([t for _, t in pairs], dtype=np.int64)
    return softmax_cross_entropy(tape, h, params["emb.table"], targets, tau)
