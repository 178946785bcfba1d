"""Prompt task construction: compliance scans and steering instances.

A task freezes everything evaluation or prompt training needs: where
the user's visible history ends, the rendered prompt, the intended
route, and the ground-truth target set drawn from the items that
actually follow the cut.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import InvalidArgumentError
from ..rng import substream
from .lexicon import DEFAULT_LEXICON, STOPWORDS, TagLexicon
from .templates import DEFAULT_POOL, EVAL, TRAIN, TemplatePool, render_prompt
from .types import (
    NEG,
    POS,
    ROUTE_NEGATIVE,
    ROUTE_POSITIVE,
    Item,
    PromptTask,
    SplitCorpus,
)

GENRE_VOCAB = "genre"
TAG_VOCAB = "tag"


def drop_category_words(text: str, p: float, rng: np.random.Generator) -> str:
    """Randomly thin the content words of a category phrase.

    Each non-stopword token is dropped with probability ``p``; at least
    one content word always survives.  Training-side augmentation only:
    multi-word tag phrases carry one dominant anchor each, and a model
    that only ever sees the full phrase learns the anchor and ignores
    the rest.  Thinning forces every content word to earn its own
    association.  Stopwords stay put, targets and routes are untouched.
    """
    if not 0.0 <= p < 1.0:
        raise InvalidArgumentError(f"dropout probability {p} outside [0, 1)")
    tokens = text.split()
    is_content = [t.strip(",.!?;:'\"").lower() not in STOPWORDS for t in tokens]
    if p == 0.0 or sum(is_content) <= 1:
        return text
    keep = [not (c and rng.random() < p) for t, c in zip(tokens, is_content)]
    if not any(k and c for k, c in zip(keep, is_content)):
        survivors = [i for i, c in enumerate(is_content) if c]
        keep[survivors[int(rng.integers(0, len(survivors)))]] = True
    return " ".join(t for t, k in zip(tokens, keep) if k)


def build_compliance_list(
    future_items: Sequence[Item], genre: int, polarity: str, n: int
) -> list[Item]:
    """First n future items that comply with the steering constraint.

    Polarity "+" keeps items whose genre set contains ``genre``;
    polarity "-" keeps items whose genre set excludes it.  Returns fewer
    than n only when the future is exhausted.
    """
    if polarity not in (ROUTE_POSITIVE, ROUTE_NEGATIVE):
        raise InvalidArgumentError(f"bad polarity {polarity!r}")
    if n < 1:
        raise InvalidArgumentError(f"n must be positive, got {n}")
    out: list[Item] = []
    for item in future_items:
        has = genre in item.genres
        if (polarity == ROUTE_POSITIVE) == has:
            out.append(item)
            if len(out) == n:
                break
    return out


def build_prompt_task(
    split: SplitCorpus,
    user_id: int,
    kind: str,
    n: int,
    stage_vocab: str,
    phase: str,
    rng: np.random.Generator,
    context_cut: int | None = None,
    pool: TemplatePool = DEFAULT_POOL,
    lexicon: TagLexicon = DEFAULT_LEXICON,
    category_dropout: float = 0.0,
) -> PromptTask | None:
    """One steering instance for one user, or None when it cannot be built.

    Train-phase tasks cut inside the user's train segment so targets
    never leak ahead of the split; eval-phase tasks see train+valid and
    draw targets from test.  Instances without a full-size compliance
    list are dropped rather than padded.
    """
    if kind not in (POS, NEG):
        raise InvalidArgumentError(f"unknown task kind {kind!r}")
    if stage_vocab not in (GENRE_VOCAB, TAG_VOCAB):
        raise InvalidArgumentError(f"unknown stage vocabulary {stage_vocab!r}")
    if phase not in (TRAIN, EVAL):
        raise InvalidArgumentError(f"unknown phase {phase!r}")

    history = split.phase_history(user_id, phase)
    if phase == EVAL:
        cut = len(split.train[user_id]) + len(split.valid[user_id])
    else:
        if context_cut is None:
            raise InvalidArgumentError("train-phase tasks need an explicit context_cut")
        cut = context_cut
    if not 1 <= cut < len(history):
        return None

    corpus = split.corpus
    visible_last = corpus.item(history[cut - 1].item_id)
    future = [corpus.item(i.item_id) for i in history[cut:]]
    if not future:
        return None

    if kind == POS:
        # candidate genres must occur ahead and differ from the genre(s)
        # of the item the user just consumed
        ahead = sorted({g for it in future for g in it.genres} - set(visible_last.genres))
        viable: list[tuple[int, list[Item]]] = []
        for g in ahead:
            comp = build_compliance_list(future, g, ROUTE_POSITIVE, n)
            if len(comp) == n:
                viable.append((g, comp))
        if not viable:
            return None
        genre, comp = viable[int(rng.integers(0, len(viable)))]
        candidate_ids = tuple(it.item_id for it in comp)
        target_ids = (candidate_ids[int(rng.integers(0, len(candidate_ids)))],)
        route = ROUTE_POSITIVE
    else:
        genre = future[0].genres[0]
        comp = build_compliance_list(future, genre, ROUTE_NEGATIVE, n)
        if len(comp) < n:
            return None
        candidate_ids = tuple(it.item_id for it in comp)
        target_ids = candidate_ids
        route = ROUTE_NEGATIVE

    genre_name = corpus.genre_names[genre]
    if stage_vocab == GENRE_VOCAB:
        category_text = genre_name
    else:
        dim = int(rng.integers(0, 3))
        category_text = lexicon.tag(genre_name, phase, dim)
        if category_dropout > 0.0 and phase == TRAIN:
            category_text = drop_category_words(category_text, category_dropout, rng)
    prompt_text = render_prompt(pool, route, phase, category_text, rng)

    return PromptTask(
        user_id=user_id,
        kind=kind,
        n=n,
        prompt_text=prompt_text,
        route=route,
        target_ids=target_ids,
        category_genre=genre,
        context_cut=cut,
        phase=phase,
        candidate_ids=candidate_ids,
    )


@dataclass
class TaskSet:
    tasks: list[PromptTask] = field(default_factory=list)
    skipped: Counter = field(default_factory=Counter)

    def __len__(self) -> int:
        return len(self.tasks)


def build_task_set(
    split: SplitCorpus,
    phase: str,
    stage_vocab: str,
    seed: int,
    kinds: tuple[str, ...] = (POS, NEG),
    ns: tuple[int, ...] = (3, 5, 10),
    cut_fracs: tuple[float, ...] = (0.4, 0.6, 0.8),
    pool: TemplatePool = DEFAULT_POOL,
    lexicon: TagLexicon = DEFAULT_LEXICON,
    category_dropout: float = 0.0,
) -> TaskSet:
    """All buildable tasks for a phase, in deterministic order.

    Train-phase tasks are attempted at several cuts per user for
    variety; eval-phase tasks use the single train+valid boundary cut.
    Skips are tallied per (kind, n) for diagnostics.
    """
    rng = substream(seed, f"tasks.{phase}.{stage_vocab}")
    out = TaskSet()
    for user_id in split.user_ids:
        if phase == EVAL:
            cuts: list[int | None] = [None]
        else:
            span = len(split.train[user_id])
            cuts = sorted({max(1, int(frac * span)) for frac in cut_fracs})
        for kind in kinds:
            for n in ns:
                for cut in cuts:
                    task = build_prompt_task(
                        split, user_id, kind, n, stage_vocab, phase, rng,
                        context_cut=cut, pool=pool, lexicon=lexicon,
                        category_dropout=category_dropout,
                    )
                    if task is None:
                        out.skipped[(kind, n)] += 1
                    else:
                        out.tasks.append(task)
    return out
