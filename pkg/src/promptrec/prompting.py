"""Prompt featurization, projection, and intent routing.

The featurizer replaces a pretrained text encoder with hashed n-gram
features: deterministic, dependency-free, and adequate for short genre
and tag phrases.  The projector is the trainable half of the prompt
embedder.  Routing is a cue-lexicon rule, which is exact on the bundled
template pools.
"""

from __future__ import annotations

import math
import re
from functools import lru_cache
from importlib import resources as importlib_resources
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InvalidArgumentError
from .numerics import Tape, TapeValue, linear, relu
from .rng import fnv1a64

DEFAULT_ROWS = 4
DEFAULT_WIDTH = 128

_TOKEN = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN.findall(text.lower())


_BIGRAM_WEIGHT = 0.5


def featurize_prompt(text: str, rows: int = DEFAULT_ROWS, width: int = DEFAULT_WIDTH) -> np.ndarray:
    """Hash unigrams and adjacent bigrams into an (rows, width) matrix.

    The k-th feature lands in row k mod rows, bucket fnv1a64(feature)
    mod width.  Bigrams contribute half the weight of unigrams, which
    keeps word identity dominant and breaks ties when two texts hash a
    unigram/bigram pair into the same pair of buckets, swapped.  Nonzero
    rows are L2-normalized.  Purely a function of the text — no state,
    no platform dependence.
    """
    if rows < 1 or width < 1:
        raise InvalidArgumentError("featurizer needs at least one row and one bucket")
    tokens = tokenize(text)
    if not tokens:
        raise InvalidArgumentError("prompt text has no tokens")
    unigrams = len(tokens)
    features = tokens + [f"{a} {b}" for a, b in zip(tokens, tokens[1:])]
    out = np.zeros((rows, width), dtype=np.float64)
    for k, feat in enumerate(features):
        out[k % rows, fnv1a64(feat) % width] += 1.0 if k < unigrams else _BIGRAM_WEIGHT
    norms = np.linalg.norm(out, axis=1, keepdims=True)
    np.divide(out, norms, out=out, where=norms > 0)
    return out


def init_projector(rng: np.random.Generator, width: int, hidden: int, d: int) -> dict[str, TapeValue]:
    """Two-layer MLP parameters mapping feature rows to model dimension."""
    if min(width, hidden, d) < 1:
        raise ConfigurationError("projector dimensions must be positive")
    s1 = math.sqrt(2.0 / (width + hidden))
    s2 = math.sqrt(2.0 / (hidden + d))
    return {
        "proj.w1": TapeValue(rng.normal(0.0, s1, size=(width, hidden))),
        "proj.b1": TapeValue(np.zeros(hidden)),
        "proj.w2": TapeValue(rng.normal(0.0, s2, size=(hidden, d))),
        "proj.b2": TapeValue(np.zeros(d)),
    }


def project_prompt(
    tape: Tape | None, features: np.ndarray | TapeValue, params: dict[str, TapeValue]
) -> TapeValue:
    """Row-wise d_text -> hidden -> d map with a ReLU between the layers."""
    x = features if isinstance(features, TapeValue) else TapeValue(features)
    width = params["proj.w1"].value.shape[0]
    if x.value.ndim != 2 or x.value.shape[1] != width:
        raise ConfigurationError(
            f"feature width {x.value.shape} does not match projector input {width}"
        )
    h = relu(tape, linear(tape, x, params["proj.w1"], params["proj.b1"]))
    return linear(tape, h, params["proj.w2"], params["proj.b2"])


@lru_cache(maxsize=1)
def load_negative_cues() -> tuple[str, ...]:
    text = (
        importlib_resources.files("promptrec.resources")
        .joinpath("negative_cues.txt")
        .read_text(encoding="utf-8")
    )
    cues = []
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            cues.append(line.lower())
    if not cues:
        raise ConfigurationError("negative cue lexicon is empty")
    return tuple(cues)


def _cue_pattern(cues: Sequence[str]) -> re.Pattern:
    alts = []
    for cue in cues:
        # literal match, but tolerate any run of whitespace inside
        # multi-word cues; anchored on non-alphanumeric boundaries
        alts.append(re.escape(cue).replace(r"\ ", r"\s+"))
    body = "|".join(sorted(alts, key=len, reverse=True))
    return re.compile(r"(?<![a-z0-9])(?:" + body + r")(?![a-z0-9])")


@lru_cache(maxsize=8)
def _compiled(cues: tuple[str, ...]) -> re.Pattern:
    return _cue_pattern(cues)


def route_intent(text: str, cues: Sequence[str] | None = None) -> str:
    """"+" unless a negative cue occurs in the text, then "-"."""
    if not text or not text.strip():
        raise InvalidArgumentError("cannot route an empty prompt")
    cue_tuple = tuple(cues) if cues is not None else load_negative_cues()
    if _compiled(cue_tuple).search(text.lower()):
        return "-"
    return "+"
