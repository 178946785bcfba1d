"""Ranking metrics, retrieval methods, and the evaluation protocol.

Three retrieval methods are compared: ``base`` ranks by the raw encoder
representation, ``filter`` post-filters the base ranking by genre
membership, and ``dpr`` steers the representation through the prompt
fusion path.  Tasks come in three kinds: next-item prediction over the
test segment (SEQ) and the two steering protocols (POS / NEG) built
from eval-phase prompts.

Scores everywhere are raw inner-product logits; temperature only
rescales a softmax and never reorders, so rankings ignore it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .backbone import encode_sequence
from .corpus.lexicon import DEFAULT_LEXICON, TagLexicon
from .corpus.tasks import TAG_VOCAB, build_task_set
from .corpus.templates import DEFAULT_POOL, TemplatePool
from .corpus.types import (
    NEG,
    POS,
    ROUTE_NEGATIVE,
    ROUTE_POSITIVE,
    SEQ,
    Corpus,
    SplitCorpus,
    history_ids,
)
from .errors import InvalidArgumentError, StateError
from .fusion import fuse_single, score_items, top_k
from .numerics import TapeValue
from .prompting import featurize_prompt, project_prompt, route_intent
from .training import ModelState

METHOD_BASE = "base"
METHOD_FILTER = "filter"
METHOD_DPR = "dpr"
ALL_METHODS = (METHOD_BASE, METHOD_FILTER, METHOD_DPR)


@dataclass(frozen=True)
class RankedList:
    """Top-K retrieval result: ids best first with their logits."""

    item_ids: tuple[int, ...]
    scores: tuple[float, ...]
    k: int
    no_compliant: bool = False

    def __post_init__(self) -> None:
        if len(self.item_ids) != len(self.scores):
            raise InvalidArgumentError("ids and scores must be parallel")
        if len(self.item_ids) > self.k:
            raise InvalidArgumentError("ranked list longer than K")
        if len(set(self.item_ids)) != len(self.item_ids):
            raise InvalidArgumentError("duplicate items in a ranked list")
        if any(b > a for a, b in zip(self.scores, self.scores[1:])):
            raise InvalidArgumentError("ranked scores must be non-increasing")


def recall_at_k(ranked: RankedList, targets, k: int) -> float:
    """|targets hit in the top k| / |targets|."""
    targets = set(targets)
    if not targets:
        raise InvalidArgumentError("recall needs a non-empty target set")
    if k < 1:
        raise InvalidArgumentError("k must be at least 1")
    return len(targets.intersection(ranked.item_ids[:k])) / len(targets)


def ndcg_at_k(ranked: RankedList, targets, k: int) -> float:
    """Binary-gain NDCG with the ideal ranking over min(|targets|, k) slots."""
    targets = set(targets)
    if not targets:
        raise InvalidArgumentError("ndcg needs a non-empty target set")
    if k < 1:
        raise InvalidArgumentError("k must be at least 1")
    dcg = 0.0
    for rank, item in enumerate(ranked.item_ids[:k], start=1):
        if item in targets:
            dcg += 1.0 / math.log2(rank + 1)
    idcg = 0.0
    for rank in range(1, min(len(targets), k) + 1):
        idcg += 1.0 / math.log2(rank + 1)
    return dcg / idcg


# ---------------------------------------------------------------------------
# retrieval methods


def _ranked_from_scores(scores, k: int) -> RankedList:
    ids = top_k(scores, k)
    return RankedList(tuple(ids), tuple(float(scores.logits[i - 1]) for i in ids), k)


def _encode(state: ModelState, history: list[int]) -> np.ndarray:
    return encode_sequence(None, history, state.params, state.config.backbone).value


def rank_base(state: ModelState, history: list[int], k: int, exclude=frozenset()) -> RankedList:
    """Top-K by the raw encoder representation; prompts play no part."""
    if state.stage < 1:
        raise StateError("ranking requires a model that finished stage 1")
    h = _encode(state, history)
    scores = score_items(h, state.embedding_table.value, 1.0, frozenset(exclude))
    return _ranked_from_scores(scores, k)


def rank_filter(
    state: ModelState,
    history: list[int],
    genre: int,
    polarity: str,
    k: int,
    exclude,
    item_genres: dict[int, frozenset],
) -> RankedList:
    """Stable genre filter over the full base ranking.

    Keeps items that carry the genre (polarity +) or lack it (polarity -)
    in base order, truncated to k.  When nothing complies the list is
    empty and flagged; metrics score it zero.
    """
    if polarity not in (ROUTE_POSITIVE, ROUTE_NEGATIVE):
        raise InvalidArgumentError(f"bad polarity {polarity!r}")
    vocab = state.vocab
    full = rank_base(state, history, vocab, exclude)
    kept_ids = []
    kept_scores = []
    for item, score in zip(full.item_ids, full.scores):
        member = genre in item_genres.get(item, frozenset())
        if member == (polarity == ROUTE_POSITIVE):
            kept_ids.append(item)
            kept_scores.append(score)
            if len(kept_ids) == k:
                break
    if not kept_ids:
        return RankedList((), (), k, no_compliant=True)
    return RankedList(tuple(kept_ids), tuple(kept_scores), k)


def rank_dpr(
    state: ModelState, history: list[int], prompt: str | None, k: int, exclude=frozenset()
) -> tuple[RankedList, str | None]:
    """Prompt-steered retrieval; with no prompt it is exactly rank_base."""
    if prompt is None or not prompt.strip():
        return rank_base(state, history, k, exclude), None
    if state.stage < 2:
        raise StateError("prompted ranking requires a model that finished stage 2")
    route = route_intent(prompt)
    cfg = state.config
    feats = featurize_prompt(prompt, cfg.prompt_rows, cfg.prompt_width)
    c_p = project_prompt(None, feats, state.params)
    h = _encode(state, history)
    fused = fuse_single(None, TapeValue(h), c_p, route, state.towers, cfg.fusion_heads)
    scores = score_items(fused.value, state.embedding_table.value, 1.0, frozenset(exclude))
    return _ranked_from_scores(scores, k), route


# ---------------------------------------------------------------------------
# the evaluation protocol


@dataclass(frozen=True)
class EvalConfig:
    kinds: tuple[str, ...] = (SEQ, POS, NEG)
    ns: tuple[int, ...] = (3, 5, 10)
    ks: tuple[int, ...] = (10, 20)
    methods: tuple[str, ...] = ALL_METHODS
    vocab: str = TAG_VOCAB
    seed: int = 0
    threads: int = 1

    def __post_init__(self) -> None:
        for kind in self.kinds:
            if kind not in (SEQ, POS, NEG):
                raise InvalidArgumentError(f"unknown task kind {kind!r}")
        for method in self.methods:
            if method not in ALL_METHODS:
                raise InvalidArgumentError(f"unknown method {method!r}")
        if not self.ks or any(k < 1 for k in self.ks):
            raise InvalidArgumentError("ks must be positive")
        if self.threads < 1:
            raise InvalidArgumentError("threads must be at least 1")


@dataclass
class MetricCell:
    recall: float = 0.0
    ndcg: float = 0.0
    count: int = 0
    skipped: int = 0


@dataclass
class EvalReport:
    """Metric cells keyed (kind, method, n, k); n is None for SEQ rows.

    ``headline`` averages each (kind, method, k) over its non-empty N
    cells.  ``diagnostics`` holds the mean fraction of top-10 items
    carrying the prompt's genre — the requested genre for POS (higher
    is better), the avoided one for NEG (lower is better).
    """

    cells: dict = field(default_factory=dict)
    headline: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def key(parts):
            return "/".join("-" if p is None else str(p) for p in parts)

        return {
            "cells": {
                key(k): {"recall": c.recall, "ndcg": c.ndcg, "count": c.count, "skipped": c.skipped}
                for k, c in sorted(self.cells.items(), key=lambda kv: key(kv[0]))
            },
            "headline": {
                key(k): {"recall": v[0], "ndcg": v[1]}
                for k, v in sorted(self.headline.items(), key=lambda kv: key(kv[0]))
            },
            "diagnostics": {key(k): v for k, v in sorted(self.diagnostics.items(), key=lambda kv: key(kv[0]))},
            "meta": dict(self.meta),
        }

    def table(self) -> str:
        lines = [f"{'cell':<28}{'recall':>10}{'ndcg':>10}{'count':>8}{'skipped':>9}"]
        for parts, cell in sorted(self.cells.items(), key=lambda kv: tuple(str(p) for p in kv[0])):
            name = "/".join("-" if p is None else str(p) for p in parts)
            lines.append(
                f"{name:<28}{cell.recall:>10.4f}{cell.ndcg:>10.4f}{cell.count:>8}{cell.skipped:>9}"
            )
        for parts, (recall, ndcg) in sorted(self.headline.items()):
            name = "/".join(str(p) for p in parts) + "/headline"
            lines.append(f"{name:<28}{recall:>10.4f}{ndcg:>10.4f}")
        for parts, value in sorted(self.diagnostics.items()):
            lines.append(f"{'/'.join(map(str, parts)) + '/genre@10':<28}{value:>10.4f}")
        return "\n".join(lines)


def genre_membership(corpus: Corpus) -> dict[int, frozenset]:
    return {item.item_id: frozenset(item.genres) for item in corpus.items}


def _genre_fraction(ranked: RankedList, genre: int, item_genres: dict[int, frozenset], k: int = 10) -> float:
    head = ranked.item_ids[:k]
    if not head:
        return 0.0
    return sum(1 for i in head if genre in item_genres.get(i, frozenset())) / len(head)


class _Accumulator:
    def __init__(self):
        self.recalls: dict = {}
        self.ndcgs: dict = {}

    def add(self, key, recall, ndcg):
        self.recalls.setdefault(key, []).append(recall)
        self.ndcgs.setdefault(key, []).append(ndcg)

    def cell(self, key, skipped=0) -> MetricCell:
        rs = self.recalls.get(key, [])
        ns = self.ndcgs.get(key, [])
        if not rs:
            return MetricCell(0.0, 0.0, 0, skipped)
        return MetricCell(float(np.mean(rs)), float(np.mean(ns)), len(rs), skipped)


def _ordered_map(fn, jobs: list, threads: int) -> list:
    """Map preserving job order; aggregation stays deterministic either way."""
    if threads <= 1 or len(jobs) <= 1:
        return [fn(job) for job in jobs]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def evaluate(
    state: ModelState,
    split: SplitCorpus,
    cfg: EvalConfig = EvalConfig(),
    lexicon: TagLexicon = DEFAULT_LEXICON,
    pool: TemplatePool = DEFAULT_POOL,
) -> EvalReport:
    """Run the full protocol and aggregate a report.

    SEQ scores every test-segment position given all preceding
    interactions.  POS/NEG build one task per user per N where the
    future supports it; unbuildable combinations are tallied as skipped.
    Visible history is excluded from every ranking, for every method.
    """
    item_genres = genre_membership(split.corpus)
    kmax = max(cfg.ks)
    acc = _Accumulator()
    report = EvalReport()
    report.meta = {
        "seed": cfg.seed,
        "stage": state.stage,
        "model_seed": state.config.seed,
        "vocab": cfg.vocab,
        "users": len(split.user_ids),
    }

    if SEQ in cfg.kinds:
        seq_methods = [m for m in cfg.methods if m != METHOD_FILTER]
        jobs = []
        for uid in split.user_ids:
            hist = history_ids(split.full_history(uid))
            base_len = len(split.train[uid]) + len(split.valid[uid])
            for i in range(len(split.test[uid])):
                jobs.append((hist[: base_len + i], hist[base_len + i]))
        if seq_methods:
            ranked_lists = _ordered_map(
                lambda job: rank_base(state, job[0], kmax, frozenset(job[0])),
                jobs,
                cfg.threads,
            )
            for (_, target), base in zip(jobs, ranked_lists):
                # bypass identity: an unprompted steer is the base ranking
                for method in seq_methods:
                    for k in cfg.ks:
                        acc.add(
                            (SEQ, method, None, k),
                            recall_at_k(base, {target}, k),
                            ndcg_at_k(base, {target}, k),
                        )
        for method in seq_methods:
            for k in cfg.ks:
                key = (SEQ, method, None, k)
                report.cells[key] = acc.cell(key)

    prompt_kinds = tuple(kind for kind in cfg.kinds if kind in (POS, NEG))
    if prompt_kinds:
        task_set = build_task_set(
            split,
            phase="eval",
            stage_vocab=cfg.vocab,
            seed=cfg.seed,
            kinds=prompt_kinds,
            ns=cfg.ns,
            pool=pool,
            lexicon=lexicon,
        )
        fractions: dict = {}

        def rank_task(task):
            hist = history_ids(split.phase_history(task.user_id, task.phase))[: task.context_cut]
            exclude = frozenset(hist)
            polarity = ROUTE_POSITIVE if task.kind == POS else ROUTE_NEGATIVE
            by_method = {}
            if METHOD_BASE in cfg.methods or METHOD_FILTER in cfg.methods:
                by_method[METHOD_BASE] = rank_base(state, hist, kmax, exclude)
            if METHOD_FILTER in cfg.methods:
                by_method[METHOD_FILTER] = rank_filter(
                    state, hist, task.category_genre, polarity, kmax, exclude, item_genres
                )
            if METHOD_DPR in cfg.methods:
                by_method[METHOD_DPR], _ = rank_dpr(state, hist, task.prompt_text, kmax, exclude)
            return by_method

        all_ranked = _ordered_map(rank_task, task_set.tasks, cfg.threads)
        for task, ranked_by_method in zip(task_set.tasks, all_ranked):
            targets = set(task.target_ids)
            for method in cfg.methods:
                ranked = ranked_by_method[method]
                for k in cfg.ks:
                    acc.add(
                        (task.kind, method, task.n, k),
                        recall_at_k(ranked, targets, k),
                        ndcg_at_k(ranked, targets, k),
                    )
                fractions.setdefault((task.kind, method), []).append(
                    _genre_fraction(ranked, task.category_genre, item_genres)
                )
        for kind in prompt_kinds:
            for method in cfg.methods:
                for n in cfg.ns:
                    for k in cfg.ks:
                        key = (kind, method, n, k)
                        report.cells[key] = acc.cell(key, skipped=task_set.skipped.get((kind, n), 0))
                for k in cfg.ks:
                    live = [
                        report.cells[(kind, method, n, k)]
                        for n in cfg.ns
                        if report.cells[(kind, method, n, k)].count > 0
                    ]
                    if live:
                        report.headline[(kind, method, k)] = (
                            float(np.mean([c.recall for c in live])),
                            float(np.mean([c.ndcg for c in live])),
                        )
        for (kind, method), vals in sorted(fractions.items()):
            report.diagnostics[(kind, method)] = float(np.mean(vals))
    return report
