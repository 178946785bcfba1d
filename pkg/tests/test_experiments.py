"""Pipeline variants and ablation harness mechanics (tiny configs)."""

import numpy as np
import pytest

from promptrec.backbone import BackboneConfig
from promptrec.corpus.generate import GeneratorConfig
from promptrec.corpus.types import NEG, POS, SEQ
from promptrec.errors import InvalidArgumentError
from promptrec.evalsuite import EvalConfig
from promptrec.experiments import (
    ABLATION_VARIANTS,
    ALL_VARIANTS,
    PipelineConfig,
    ablation_from_rows,
    build_split,
    headline_ndcg,
    run_ablation,
    run_pipeline,
    train_stage_one,
)
from promptrec.training import ModelConfig

TINY = PipelineConfig(
    gen=GeneratorConfig(
        num_users=8, num_items=30, num_genres=4, seq_len_range=(24, 28), shift_period=6
    ),
    model=ModelConfig(
        backbone=BackboneConfig(arch="gru", d=8, max_len=16),
        prompt_rows=4,
        prompt_width=32,
        projector_hidden=8,
        fusion_heads=2,
    ),
    epochs=(1, 1, 1),
    split_ratios=(0.7, 0.1, 0.2),
    eval=EvalConfig(ns=(1, 2), ks=(5, 10)),
)


@pytest.fixture(scope="module")
def shared_split():
    return build_split(TINY, seed=0)


@pytest.fixture(scope="module")
def stage_one(shared_split):
    return train_stage_one(TINY, shared_split, seed=0)


class TestRunPipeline:
    def test_full_variant_reaches_stage_three(self, shared_split, stage_one):
        result = run_pipeline(TINY, 0, split=shared_split, stage_one=stage_one)
        assert result.state.stage == 3
        assert result.variant == "full"
        assert result.report.cells

    def test_stage_one_input_is_not_mutated(self, shared_split, stage_one):
        before = {k: v.value.copy() for k, v in stage_one.params.items()}
        run_pipeline(TINY, 0, split=shared_split, stage_one=stage_one)
        for name, arr in before.items():
            np.testing.assert_array_equal(arr, stage_one.params[name].value)
        assert stage_one.stage == 1

    def test_two_stage_variant_skips_genre_stage(self, shared_split, stage_one):
        result = run_pipeline(TINY, 0, "two-stage", split=shared_split, stage_one=stage_one)
        assert result.state.stage == 3

    def test_single_tower_variant_aliases_towers(self, shared_split):
        result = run_pipeline(TINY, 0, "single-tower", split=shared_split)
        towers = result.state.towers
        assert towers["+"] is towers["-"]

    def test_full_variant_keeps_towers_distinct(self, shared_split, stage_one):
        result = run_pipeline(TINY, 0, split=shared_split, stage_one=stage_one)
        towers = result.state.towers
        assert towers["+"] is not towers["-"]

    def test_unknown_variant_rejected(self, shared_split, stage_one):
        with pytest.raises(InvalidArgumentError):
            run_pipeline(TINY, 0, "half-tower", split=shared_split, stage_one=stage_one)

    def test_same_seed_reproduces_report(self, shared_split, stage_one):
        a = run_pipeline(TINY, 0, split=shared_split, stage_one=stage_one)
        b = run_pipeline(TINY, 0, split=shared_split, stage_one=stage_one)
        assert a.report.cells == b.report.cells
        assert a.report.headline == b.report.headline


class TestHeadlineNdcg:
    def test_covers_three_kinds(self, shared_split, stage_one):
        result = run_pipeline(TINY, 0, split=shared_split, stage_one=stage_one)
        summary = headline_ndcg(result.report)
        assert set(summary) == {POS, NEG, SEQ}
        for value in summary.values():
            assert 0.0 <= value <= 1.0

    def test_missing_cells_read_zero(self):
        from promptrec.evalsuite import EvalReport

        empty = EvalReport(cells={}, headline={}, diagnostics={}, meta={})
        assert headline_ndcg(empty) == {POS: 0.0, NEG: 0.0, SEQ: 0.0}


class TestAblationReport:
    def _rows(self, variants, seeds, base=0.5):
        return {
            (v, s): {POS: base + 0.01 * i, NEG: 0.3, SEQ: 0.2}
            for i, (v, s) in enumerate((v, s) for v in variants for s in seeds)
        }

    def test_means_are_per_variant_averages(self):
        seeds = (0, 1)
        rows = self._rows(ABLATION_VARIANTS["towers"], seeds)
        report = ablation_from_rows("towers", rows, seeds)
        for variant in report.variants:
            expected = np.mean([rows[(variant, s)][POS] for s in seeds])
            assert report.means[variant][POS] == pytest.approx(expected)

    def test_missing_row_rejected(self):
        rows = self._rows(ABLATION_VARIANTS["towers"], (0, 1))
        del rows[("full", 1)]
        with pytest.raises(InvalidArgumentError):
            ablation_from_rows("towers", rows, (0, 1))

    def test_unknown_name_rejected(self):
        with pytest.raises(InvalidArgumentError):
            ablation_from_rows("widths", {}, (0,))

    def test_extra_rows_ignored(self):
        seeds = (0,)
        rows = self._rows(ALL_VARIANTS, seeds)
        report = ablation_from_rows("stages", rows, seeds)
        assert set(report.rows) == {(v, 0) for v in ABLATION_VARIANTS["stages"]}

    def test_table_and_dict_render(self):
        seeds = (0, 1)
        rows = self._rows(ABLATION_VARIANTS["loss"], seeds)
        report = ablation_from_rows("loss", rows, seeds)
        text = report.table()
        assert "pos-only" in text and "neg-only" in text
        blob = report.to_dict()
        assert blob["which"] == "loss"
        assert "full/0" in blob["rows"]


class TestRunAblation:
    def test_towers_ablation_end_to_end(self):
        report = run_ablation("towers", TINY, seeds=(0,))
        assert report.variants == ("full", "single-tower")
        assert set(report.rows) == {("full", 0), ("single-tower", 0)}
        assert report.meta["users"] == 8

    def test_unknown_ablation_rejected(self):
        with pytest.raises(InvalidArgumentError):
            run_ablation("optimizers", TINY, seeds=(0,))
