"""Hand-paired forward/backward kernels.

Every operation the model needs is written out explicitly: forward math,
then the vector-Jacobian product as a closure pushed onto the tape.  All
arithmetic is float64.  Weight matrices use the row-vector convention,
``y = x @ W``, with W shaped (n_in, n_out).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, InvalidArgumentError
from .tape import Tape, TapeValue

# ---------------------------------------------------------------------------
# pure contract ops (no tape)


def softmax_temp(scores: np.ndarray, tau: float) -> np.ndarray:
    """softmax(scores / tau) along the last axis, max-subtracted for stability."""
    if not np.isfinite(tau) or tau <= 0.0:
        raise InvalidArgumentError(f"temperature must be finite and positive, got {tau}")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise InvalidArgumentError("softmax_temp requires a non-empty score vector")
    if not np.all(np.isfinite(scores)):
        raise InvalidArgumentError("softmax_temp requires finite scores")
    z = scores / tau
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _softmax_last(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------------------
# elementwise / shape kernels


def add(tape: Tape | None, a: TapeValue, b: TapeValue) -> TapeValue:
    if a.value.shape != b.value.shape:
        raise InvalidArgumentError("add requires matching shapes")
    out = TapeValue(a.value + b.value)
    if tape is not None:
        def bwd():
            a.grad += out.grad
            b.grad += out.grad
        tape.push(bwd)
    return out


def relu(tape: Tape | None, x: TapeValue) -> TapeValue:
    mask = x.value > 0.0
    out = TapeValue(np.where(mask, x.value, 0.0))
    if tape is not None:
        def bwd():
            x.grad += out.grad * mask
        tape.push(bwd)
    return out


def reshape(tape: Tape | None, x: TapeValue, shape: tuple[int, ...]) -> TapeValue:
    out = TapeValue(x.value.reshape(shape))
    if tape is not None:
        def bwd():
            x.grad += out.grad.reshape(x.value.shape)
        tape.push(bwd)
    return out


def add_scalars(tape: Tape | None, a: TapeValue, b: TapeValue) -> TapeValue:
    out = TapeValue(a.value + b.value)
    if tape is not None:
        def bwd():
            a.grad += out.grad
            b.grad += out.grad
        tape.push(bwd)
    return out


def scale_scalar(tape: Tape | None, x: TapeValue, c: float) -> TapeValue:
    out = TapeValue(x.value * c)
    if tape is not None:
        def bwd():
            x.grad += out.grad * c
        tape.push(bwd)
    return out


# ---------------------------------------------------------------------------
# linear / normalization


def linear(tape: Tape | None, x: TapeValue, w: TapeValue, b: TapeValue | None = None) -> TapeValue:
    """y = x @ w (+ b).  x is (..., n_in), w is (n_in, n_out)."""
    if x.value.shape[-1] != w.value.shape[0]:
        raise InvalidArgumentError(
            f"linear width mismatch: x has {x.value.shape[-1]}, w expects {w.value.shape[0]}"
        )
    y = x.value @ w.value
    if b is not None:
        y = y + b.value
    out = TapeValue(y)
    if tape is not None:
        x2 = x.value.reshape(-1, x.value.shape[-1])
        def bwd():
            g2 = out.grad.reshape(-1, w.value.shape[1])
            w.grad += x2.T @ g2
            if b is not None:
                b.grad += g2.sum(axis=0)
            x.grad += (out.grad @ w.value.T).reshape(x.value.shape)
        tape.push(bwd)
    return out


def layer_norm(
    tape: Tape | None,
    x: TapeValue,
    gain: TapeValue,
    bias: TapeValue,
    eps: float = 1e-5,
) -> TapeValue:
    """Normalize the last axis to zero mean / unit population variance, then affine.

    Inputs with a trailing dimension below 2 are rejected: normalizing a
    single value is always the zero vector and signals a caller bug.
    """
    d = x.value.shape[-1]
    if d < 2:
        raise InvalidArgumentError(f"layer_norm requires dimension >= 2, got {d}")
    if gain.value.shape != (d,) or bias.value.shape != (d,):
        raise InvalidArgumentError("layer_norm gain/bias must match the last axis")
    if eps <= 0.0:
        raise InvalidArgumentError("layer_norm eps must be positive")
    mu = x.value.mean(axis=-1, keepdims=True)
    var = ((x.value - mu) ** 2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x.value - mu) * inv_std
    out = TapeValue(xhat * gain.value + bias.value)
    if tape is not None:
        def bwd():
            g = out.grad
            flat = g.reshape(-1, d)
            xh = xhat.reshape(-1, d)
            gain.grad += (flat * xh).sum(axis=0)
            bias.grad += flat.sum(axis=0)
            # dx = inv_std * (gy*g - mean(gy*g) - xhat * mean(gy*g * xhat))
            gxh = g * gain.value
            m1 = gxh.mean(axis=-1, keepdims=True)
            m2 = (gxh * xhat).mean(axis=-1, keepdims=True)
            x.grad += inv_std * (gxh - m1 - xhat * m2)
        tape.push(bwd)
    return out


def rms_norm(
    tape: Tape | None,
    x: TapeValue,
    gain: TapeValue,
    bias: TapeValue,
    eps: float = 1e-5,
) -> TapeValue:
    """Scale the last axis by its root-mean-square, then affine.

    Unlike layer_norm this never subtracts the mean, so with unit gain
    and zero bias the output is the input times a positive per-row
    scalar — a rank-preserving map, which downstream warm-start
    identities rely on.
    """
    d = x.value.shape[-1]
    if d < 1:
        raise InvalidArgumentError("rms_norm requires a non-empty last axis")
    if gain.value.shape != (d,) or bias.value.shape != (d,):
        raise InvalidArgumentError("rms_norm gain/bias must match the last axis")
    if eps <= 0.0:
        raise InvalidArgumentError("rms_norm eps must be positive")
    ms = (x.value ** 2).mean(axis=-1, keepdims=True)
    inv_rms = 1.0 / np.sqrt(ms + eps)
    xhat = x.value * inv_rms
    out = TapeValue(xhat * gain.value + bias.value)
    if tape is not None:
        def bwd():
            g = out.grad
            flat = g.reshape(-1, d)
            xh = xhat.reshape(-1, d)
            gain.grad += (flat * xh).sum(axis=0)
            bias.grad += flat.sum(axis=0)
            gxh = g * gain.value
            # dx_j = r*gxh_j - r^3 * x_j * mean(gxh * x),  r = inv_rms
            m = (gxh * x.value).mean(axis=-1, keepdims=True)
            x.grad += inv_rms * gxh - (inv_rms ** 3) * m * x.value
        tape.push(bwd)
    return out


# ---------------------------------------------------------------------------
# embedding lookup


def lookup(tape: Tape | None, table: TapeValue, ids: np.ndarray) -> TapeValue:
    """Gather rows of an embedding table; scatter-add on the way back."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.value.shape[0]):
        raise InvalidArgumentError("lookup id out of range")
    out = TapeValue(table.value[ids])
    if tape is not None:
        def bwd():
            np.add.at(table.grad, ids, out.grad)
        tape.push(bwd)
    return out


def take_rows(tape: Tape | None, x: TapeValue, idx: np.ndarray) -> TapeValue:
    """Select x[b, idx[b], :] for each batch row b; used for last-position reads."""
    idx = np.asarray(idx)
    batch = np.arange(x.value.shape[0])
    out = TapeValue(x.value[batch, idx])
    if tape is not None:
        def bwd():
            np.add.at(x.grad, (batch, idx), out.grad)
        tape.push(bwd)
    return out


# ---------------------------------------------------------------------------
# multi-head attention

_NEG_INF = -1e30


def multi_head_attention(
    tape: Tape | None,
    q: TapeValue,
    k: TapeValue,
    v: TapeValue,
    w_q: TapeValue,
    w_k: TapeValue,
    w_v: TapeValue,
    w_o: TapeValue,
    heads: int,
    causal: bool = False,
    return_weights: bool = False,
):
    """Scaled dot-product attention with per-head projections.

    q is (B, n, d); k and v are (B, m, d).  Scores are scaled by
    1/sqrt(d/heads); heads are concatenated and passed through w_o.
    """
    d = w_q.value.shape[0]
    if d % heads != 0:
        raise ConfigurationError(f"model dimension {d} not divisible by {heads} heads")
    if q.value.ndim != 3 or k.value.ndim != 3 or v.value.ndim != 3:
        raise InvalidArgumentError("attention operands must be rank-3 (batch, rows, dim)")
    if k.value.shape != v.value.shape:
        raise InvalidArgumentError("keys and values must share a shape")
    bsz, n, _ = q.value.shape
    m = k.value.shape[1]
    dh = d // heads
    scale = 1.0 / np.sqrt(dh)

    qp = (q.value @ w_q.value).reshape(bsz, n, heads, dh)
    kp = (k.value @ w_k.value).reshape(bsz, m, heads, dh)
    vp = (v.value @ w_v.value).reshape(bsz, m, heads, dh)

    scores = np.einsum("bnhk,bmhk->bhnm", qp, kp) * scale
    if causal:
        if n != m:
            raise InvalidArgumentError("causal attention requires square score matrices")
        mask = np.triu(np.ones((n, m), dtype=bool), k=1)
        scores = np.where(mask, _NEG_INF, scores)
    attn = _softmax_last(scores)

    z = np.einsum("bhnm,bmhk->bnhk", attn, vp).reshape(bsz, n, d)
    out = TapeValue(z @ w_o.value)

    if tape is not None:
        def bwd():
            g = out.grad
            g2 = g.reshape(-1, d)
            w_o.grad += z.reshape(-1, d).T @ g2
            gz = (g @ w_o.value.T).reshape(bsz, n, heads, dh)
            ga = np.einsum("bnhk,bmhk->bhnm", gz, vp)
            gvp = np.einsum("bhnm,bnhk->bmhk", attn, gz)
            # softmax backward; masked positions carry zero weight so they stay zero
            gs = attn * (ga - (ga * attn).sum(axis=-1, keepdims=True))
            gs = gs * scale
            gqp = np.einsum("bhnm,bmhk->bnhk", gs, kp)
            gkp = np.einsum("bhnm,bnhk->bmhk", gs, qp)
            gq2 = gqp.reshape(-1, d)
            gk2 = gkp.reshape(-1, d)
            gv2 = gvp.reshape(-1, d)
            w_q.grad += q.value.reshape(-1, d).T @ gq2
            w_k.grad += k.value.reshape(-1, d).T @ gk2
            w_v.grad += v.value.reshape(-1, d).T @ gv2
            q.grad += (gq2 @ w_q.value.T).reshape(q.value.shape)
            k.grad += (gk2 @ w_k.value.T).reshape(k.value.shape)
            v.grad += (gv2 @ w_v.value.T).reshape(v.value.shape)
        tape.push(bwd)

    if return_weights:
        return out, attn
    return out


def attention_block(
    query: np.ndarray,
    keys: np.ndarray,
    values: np.ndarray,
    w_q: np.ndarray,
    w_k: np.ndarray,
    w_v: np.ndarray,
    w_o: np.ndarray,
    heads: int,
    return_weights: bool = False,
):
    """Single-query attention: query (1, d) against m key/value rows.

    Forward-only convenience wrapper around ``multi_head_attention``.
    """
    query = np.atleast_2d(np.asarray(query, dtype=np.float64))
    if query.shape[0] != 1:
        raise InvalidArgumentError("attention_block expects a single query row")
    res = multi_head_attention(
        None,
        TapeValue(query[None, :, :]),
        TapeValue(np.asarray(keys, dtype=np.float64)[None, :, :]),
        TapeValue(np.asarray(values, dtype=np.float64)[None, :, :]),
        TapeValue(w_q),
        TapeValue(w_k),
        TapeValue(w_v),
        TapeValue(w_o),
        heads,
        return_weights=return_weights,
    )
    if return_weights:
        out, attn = res
        return out.value[0, 0], attn[0, :, 0, :]
    return res.value[0, 0]


# ---------------------------------------------------------------------------
# GRU


@dataclass
class GruParams:
    """The nine arrays of one GRU cell, gate order z / r / candidate."""

    w_z: TapeValue
    u_z: TapeValue
    b_z: TapeValue
    w_r: TapeValue
    u_r: TapeValue
    b_r: TapeValue
    w_h: TapeValue
    u_h: TapeValue
    b_h: TapeValue

    def named(self, prefix: str) -> dict[str, TapeValue]:
        return {
            f"{prefix}.w_z": self.w_z, f"{prefix}.u_z": self.u_z, f"{prefix}.b_z": self.b_z,
            f"{prefix}.w_r": self.w_r, f"{prefix}.u_r": self.u_r, f"{prefix}.b_r": self.b_r,
            f"{prefix}.w_h": self.w_h, f"{prefix}.u_h": self.u_h, f"{prefix}.b_h": self.b_h,
        }


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gru_sequence(
    tape: Tape | None,
    x: TapeValue,
    mask: np.ndarray,
    params: GruParams,
    h0: TapeValue | None = None,
) -> TapeValue:
    """Fold a GRU cell over a right-padded batch of sequences.

    Gate convention:
        z = sigmoid(x Wz + h Uz + bz)
        r = sigmoid(x Wr + h Ur + br)
        hcand = tanh(x Wh + (r*h) Uh + bh)
        h' = (1 - z)*h + z*hcand
    Padded steps (mask 0) leave the hidden state untouched, so the fold is
    identical to running each unpadded sequence on its own.
    """
    bsz, steps, _ = x.value.shape
    d = params.u_z.value.shape[0]
    mask = np.asarray(mask, dtype=np.float64)
    h = np.zeros((bsz, d)) if h0 is None else h0.value.copy()

    saved = []
    for t in range(steps):
        xt = x.value[:, t, :]
        mt = mask[:, t][:, None]
        z = _sigmoid(xt @ params.w_z.value + h @ params.u_z.value + params.b_z.value)
        r = _sigmoid(xt @ params.w_r.value + h @ params.u_r.value + params.b_r.value)
        rh = r * h
        hc = np.tanh(xt @ params.w_h.value + rh @ params.u_h.value + params.b_h.value)
        hn = (1.0 - z) * h + z * hc
        saved.append((h, z, r, rh, hc, mt))
        h = mt * hn + (1.0 - mt) * h

    out = TapeValue(h)
    if tape is not None:
        def bwd():
            gh = out.grad.copy()
            for t in range(steps - 1, -1, -1):
                h_prev, z, r, rh, hc, mt = saved[t]
                xt = x.value[:, t, :]
                g_new = gh * mt
                gh_keep = gh * (1.0 - mt)
                gz = g_new * (hc - h_prev)
                ghc = g_new * z
                gh_prev = g_new * (1.0 - z)

                ga_h = ghc * (1.0 - hc * hc)
                params.w_h.grad += xt.T @ ga_h
                params.u_h.grad += rh.T @ ga_h
                params.b_h.grad += ga_h.sum(axis=0)
                gxt = ga_h @ params.w_h.value.T
                g_rh = ga_h @ params.u_h.value.T
                gr = g_rh * h_prev
                gh_prev += g_rh * r

                ga_z = gz * z * (1.0 - z)
                params.w_z.grad += xt.T @ ga_z
                params.u_z.grad += h_prev.T @ ga_z
                params.b_z.grad += ga_z.sum(axis=0)
                gxt += ga_z @ params.w_z.value.T
                gh_prev += ga_z @ params.u_z.value.T

                ga_r = gr * r * (1.0 - r)
                params.w_r.grad += xt.T @ ga_r
                params.u_r.grad += h_prev.T @ ga_r
                params.b_r.grad += ga_r.sum(axis=0)
                gxt += ga_r @ params.w_r.value.T
                gh_prev += ga_r @ params.u_r.value.T

                x.grad[:, t, :] += gxt
                gh = gh_keep + gh_prev
            if h0 is not None:
                h0.grad += gh
        tape.push(bwd)
    return out


def gru_step(
    tape: Tape | None,
    x: TapeValue,
    h: TapeValue,
    params: GruParams,
) -> TapeValue:
    """One GRU update for a single (d_in,) input and (d,) hidden state."""
    if x.value.ndim != 1 or h.value.ndim != 1:
        raise InvalidArgumentError("gru_step operates on single vectors")
    x3 = reshape(tape, x, (1, 1, x.value.shape[0]))
    h2 = reshape(tape, h, (1, h.value.shape[0]))
    out = gru_sequence(tape, x3, np.ones((1, 1)), params, h0=h2)
    return reshape(tape, out, (h.value.shape[0],))


# ---------------------------------------------------------------------------
# losses over the item vocabulary
#
# Both losses score h against every non-padding row of the embedding table
# (full softmax) at a temperature, then take a mean negative log likelihood.
# The gradient of -log softmax(z)[t] wrt z is (p - onehot_t); temperature
# and batch mean fold into one scale factor.


def _item_logits(h: np.ndarray, table: TapeValue) -> np.ndarray:
    return h @ table.value[1:].T


def softmax_cross_entropy(
    tape: Tape | None,
    h: TapeValue,
    table: TapeValue,
    targets: np.ndarray,
    tau: float,
) -> TapeValue:
    """Mean next-item CE: -log softmax(h.E / tau)[target], padding row excluded."""
    if not np.isfinite(tau) or tau <= 0.0:
        raise InvalidArgumentError(f"temperature must be finite and positive, got {tau}")
    targets = np.asarray(targets)
    bsz = h.value.shape[0]
    if targets.shape != (bsz,):
        raise InvalidArgumentError("one target per batch row required")
    vocab = table.value.shape[0] - 1
    if targets.size and (targets.min() < 1 or targets.max() > vocab):
        raise InvalidArgumentError("target id outside the item vocabulary")
    z = _item_logits(h.value, table) / tau
    z = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    rows = np.arange(bsz)
    cols = targets - 1
    out = TapeValue(-logp[rows, cols].mean())
    if tape is not None:
        def bwd():
            p = np.exp(logp)
            p[rows, cols] -= 1.0
            dz = p * (out.grad / (bsz * tau))
            h.grad += dz @ table.value[1:]
            table.grad[1:] += dz.T @ h.value
        tape.push(bwd)
    return out


def target_set_cross_entropy(
    tape: Tape | None,
    h: TapeValue,
    table: TapeValue,
    weights: np.ndarray,
    tau: float,
    reduction: str = "mean",
) -> TapeValue:
    """Weighted multi-target CE: -sum_v w[i,v] log softmax(h_i.E / tau)[v].

    ``weights`` is (B, vocab) and each row sums to 1 (1/|targets| on each
    target item).  Reduction is the mean or sum over batch rows.
    """
    if not np.isfinite(tau) or tau <= 0.0:
        raise InvalidArgumentError(f"temperature must be finite and positive, got {tau}")
    bsz = h.value.shape[0]
    vocab = table.value.shape[0] - 1
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (bsz, vocab):
        raise InvalidArgumentError("weights must be (batch, vocab)")
    z = _item_logits(h.value, table) / tau
    z = z - z.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    per_row = -(weights * logp).sum(axis=-1)
    denom = bsz if reduction == "mean" else 1
    out = TapeValue(per_row.sum() / denom)
    if tape is not None:
        def bwd():
            p = np.exp(logp)
            dz = (p - weights) * (out.grad / (denom * tau))
            h.grad += dz @ table.value[1:]
            table.grad[1:] += dz.T @ h.value
        tape.push(bwd)
    return out
