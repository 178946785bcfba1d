"""End-to-end pipelines: generate data, train a variant, evaluate, compare.

A *variant* names one training recipe.  ``full`` is the real model: two
towers, both prompt kinds, all three stages.  The others knock one
piece out so directional comparisons can show each piece earns its
keep:

- ``single-tower``  one shared fusion tower serves both routes
- ``pos-only``      prompt stages see only positive-steering tasks
- ``neg-only``      prompt stages see only negative-suppression tasks
- ``two-stage``     the coarse genre-prompt stage is skipped entirely

Every pipeline is seeded end to end: the seed picks the corpus draw,
the parameter init, the batch order, and the eval task draw.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np

from .corpus.generate import GeneratorConfig, generate_synthetic_corpus
from .corpus.split import chronological_split
from .corpus.types import NEG, POS, SEQ, SplitCorpus
from .errors import InvalidArgumentError
from .evalsuite import METHOD_DPR, EvalConfig, EvalReport, evaluate
from .training import (
    ModelConfig,
    ModelState,
    default_stage_plans,
    init_model,
    run_stage,
)

VARIANT_FULL = "full"
VARIANT_SINGLE_TOWER = "single-tower"
VARIANT_POS_ONLY = "pos-only"
VARIANT_NEG_ONLY = "neg-only"
VARIANT_TWO_STAGE = "two-stage"
ALL_VARIANTS = (
    VARIANT_FULL,
    VARIANT_SINGLE_TOWER,
    VARIANT_POS_ONLY,
    VARIANT_NEG_ONLY,
    VARIANT_TWO_STAGE,
)

ABLATION_VARIANTS = {
    "towers": (VARIANT_FULL, VARIANT_SINGLE_TOWER),
    "loss": (VARIANT_FULL, VARIANT_POS_ONLY, VARIANT_NEG_ONLY),
    "stages": (VARIANT_FULL, VARIANT_TWO_STAGE),
}

DEFAULT_SEEDS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class PipelineConfig:
    gen: GeneratorConfig = field(default_factory=GeneratorConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: tuple[int, int, int] = (30, 20, 20)
    split_ratios: tuple[float, float, float] = (0.8, 0.1, 0.1)
    eval: EvalConfig = field(default_factory=EvalConfig)


def build_split(cfg: PipelineConfig, seed: int) -> SplitCorpus:
    corpus = generate_synthetic_corpus(cfg.gen, seed=seed)
    return chronological_split(corpus, ratios=cfg.split_ratios)


def _variant_kinds(variant: str) -> tuple[str, ...]:
    if variant == VARIANT_POS_ONLY:
        return (POS,)
    if variant == VARIANT_NEG_ONLY:
        return (NEG,)
    return (POS, NEG)


def train_stage_one(
    cfg: PipelineConfig, split: SplitCorpus, seed: int, shared_towers: bool = False
) -> ModelState:
    """Init and pretrain.  The result is reusable (via deepcopy) by every
    variant with the same tower layout, since stage 1 never touches the
    prompt path."""
    model_cfg = replace(cfg.model, seed=seed, shared_towers=shared_towers)
    plans = default_stage_plans(seed, cfg.epochs)
    state = init_model(model_cfg, vocab=split.corpus.num_items)
    run_stage(plans[0], state, split)
    return state


def finish_variant(
    cfg: PipelineConfig, split: SplitCorpus, seed: int, variant: str, state: ModelState
) -> ModelState:
    """Run the variant's prompt stages on a pretrained state, in place."""
    if variant not in ALL_VARIANTS:
        raise InvalidArgumentError(f"unknown variant {variant!r}")
    plans = default_stage_plans(seed, cfg.epochs)
    kinds = _variant_kinds(variant)
    if variant == VARIANT_TWO_STAGE:
        run_stage(plans[2], state, split, task_kinds=kinds, waive_order=True)
    else:
        run_stage(plans[1], state, split, task_kinds=kinds)
        run_stage(plans[2], state, split, task_kinds=kinds)
    return state


@dataclass
class PipelineResult:
    seed: int
    variant: str
    state: ModelState
    split: SplitCorpus
    report: EvalReport


def run_pipeline(
    cfg: PipelineConfig,
    seed: int,
    variant: str = VARIANT_FULL,
    split: SplitCorpus | None = None,
    stage_one: ModelState | None = None,
) -> PipelineResult:
    """Corpus -> pretrain -> prompt stages -> evaluation, fully seeded.

    ``split`` and ``stage_one`` short-circuit the expensive steps when a
    caller sweeps several variants over one seed; ``stage_one`` is copied
    before training so the caller's state survives untouched.
    """
    if split is None:
        split = build_split(cfg, seed)
    if stage_one is None:
        state = train_stage_one(
            cfg, split, seed, shared_towers=variant == VARIANT_SINGLE_TOWER
        )
    else:
        state = copy.deepcopy(stage_one)
    finish_variant(cfg, split, seed, variant, state)
    report = evaluate(state, split, replace(cfg.eval, seed=seed))
    return PipelineResult(seed, variant, state, split, report)


# ---------------------------------------------------------------------------
# ablation comparisons


def headline_ndcg(report: EvalReport, k: int = 10) -> dict[str, float]:
    """The one-number-per-kind summary ablations compare: steered NDCG@k."""
    out = {}
    for kind in (POS, NEG):
        got = report.headline.get((kind, METHOD_DPR, k))
        out[kind] = got[1] if got is not None else 0.0
    seq = report.cells.get((SEQ, METHOD_DPR, None, k))
    out[SEQ] = seq.ndcg if seq is not None and seq.count else 0.0
    return out


@dataclass
class AblationReport:
    which: str
    variants: tuple[str, ...]
    seeds: tuple[int, ...]
    rows: dict                      # (variant, seed) -> {kind: ndcg@10}
    means: dict                     # variant -> {kind: mean ndcg@10}
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "which": self.which,
            "variants": list(self.variants),
            "seeds": list(self.seeds),
            "rows": {f"{v}/{s}": dict(m) for (v, s), m in sorted(self.rows.items())},
            "means": {v: dict(m) for v, m in sorted(self.means.items())},
            "meta": dict(self.meta),
        }

    def table(self) -> str:
        kinds = (POS, NEG, SEQ)
        head = f"{'variant':<16}" + "".join(f"{k + ' ndcg@10':>16}" for k in kinds)
        lines = [f"ablation: {self.which}", head]
        for variant in self.variants:
            cells = "".join(f"{self.means[variant][k]:>16.4f}" for k in kinds)
            lines.append(f"{variant:<16}{cells}")
            for seed in self.seeds:
                row = self.rows[(variant, seed)]
                cells = "".join(f"{row[k]:>16.4f}" for k in kinds)
                lines.append(f"  seed {seed:<9}{cells}")
        return "\n".join(lines)


def ablation_from_rows(which: str, rows: dict, seeds: tuple[int, ...]) -> AblationReport:
    if which not in ABLATION_VARIANTS:
        raise InvalidArgumentError(f"unknown ablation {which!r}")
    variants = ABLATION_VARIANTS[which]
    missing = [(v, s) for v in variants for s in seeds if (v, s) not in rows]
    if missing:
        raise InvalidArgumentError(f"ablation rows missing {missing[:3]}")
    means = {
        v: {
            kind: float(np.mean([rows[(v, s)][kind] for s in seeds]))
            for kind in (POS, NEG, SEQ)
        }
        for v in variants
    }
    picked = {(v, s): rows[(v, s)] for v in variants for s in seeds}
    return AblationReport(which, variants, tuple(seeds), picked, means)


def run_ablation(
    which: str, cfg: PipelineConfig, seeds: tuple[int, ...] = DEFAULT_SEEDS
) -> AblationReport:
    """Train every variant the ablation compares, on every seed.

    Within a seed all variants share the corpus, and variants with the
    same tower layout share the pretrained stage-1 state.
    """
    if which not in ABLATION_VARIANTS:
        raise InvalidArgumentError(f"unknown ablation {which!r}")
    rows: dict = {}
    for seed in seeds:
        split = build_split(cfg, seed)
        pretrained: dict[bool, ModelState] = {}
        for variant in ABLATION_VARIANTS[which]:
            shared = variant == VARIANT_SINGLE_TOWER
            if shared not in pretrained:
                pretrained[shared] = train_stage_one(cfg, split, seed, shared)
            result = run_pipeline(
                cfg, seed, variant, split=split, stage_one=pretrained[shared]
            )
            rows[(variant, seed)] = headline_ndcg(result.report)
    report = ablation_from_rows(which, rows, tuple(seeds))
    report.meta = {"epochs": list(cfg.epochs), "users": cfg.gen.num_users}
    return report
