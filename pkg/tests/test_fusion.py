"""Fusion tower and scoring tests."""

from __future__ import annotations

import numpy as np
import pytest

from promptrec.corpus import ROUTE_NEGATIVE, ROUTE_NONE, ROUTE_POSITIVE
from promptrec.errors import ConfigurationError, InvalidArgumentError
from promptrec.fusion import (
    ItemScores,
    fuse,
    fuse_single,
    init_fusion,
    init_tower_params,
    score_items,
    top_k,
)
from promptrec.numerics import Tape, TapeValue, backward, grad_check

D, HEADS, M = 8, 2, 4


def rng(seed=0):
    return np.random.default_rng(seed)


def make_towers(seed=0, shared=False):
    return init_fusion(rng(seed), D, HEADS, ffn_mult=2, shared=shared)


def random_inputs(seed=1, batch=3):
    r = rng(seed)
    h = TapeValue(r.normal(size=(batch, D)))
    c_p = TapeValue(r.normal(size=(batch, M, D)))
    return h, c_p


def zero_value_path(tower):
    for key in ("attn.w_v", "attn.w_o", "ffn.w2", "ffn.b2"):
        tower[key].value[:] = 0.0


def manual_rms(x, eps=1e-5):
    return x / np.sqrt((x * x).mean(axis=-1, keepdims=True) + eps)


class TestFuse:
    def test_zero_value_path_reduces_to_normalized_input(self):
        towers = make_towers(seed=2)
        # perturb affine norms away from defaults, then zero the value path
        for tower in (towers[ROUTE_POSITIVE],):
            tower["ffn.b2"].value[:] = 0.3
        zero_value_path(towers[ROUTE_POSITIVE])
        h, c_p = random_inputs()
        out = fuse(None, h, c_p, ROUTE_POSITIVE, towers, HEADS)
        np.testing.assert_allclose(out.value, manual_rms(h.value), rtol=1e-12)

    def test_fresh_towers_preserve_rankings(self):
        # the actual initialization zeroes the attention output projection
        # and the final FFN layer, so rankings must match the raw state
        towers = make_towers(seed=3)
        r = rng(4)
        table = np.vstack([np.zeros(D), r.normal(size=(50, D))])
        h, c_p = random_inputs(seed=5, batch=1)
        out = fuse(None, h, c_p, ROUTE_POSITIVE, towers, HEADS)
        base = score_items(h.value[0], table, 1.0)
        fused = score_items(out.value[0], table, 1.0)
        assert top_k(base, 50) == top_k(fused, 50)

    def test_bypass_returns_input_object(self):
        towers = make_towers()
        h, c_p = random_inputs()
        assert fuse(None, h, None, None, towers, HEADS) is h
        assert fuse(None, h, c_p, ROUTE_NONE, towers, HEADS) is h

    def test_routing_isolation_forward(self):
        towers = make_towers(seed=6)
        h, c_p = random_inputs(seed=7)
        before = fuse(None, h, c_p, ROUTE_POSITIVE, towers, HEADS).value.copy()
        for p in towers[ROUTE_NEGATIVE].values():
            p.value += 123.0
        after = fuse(None, h, c_p, ROUTE_POSITIVE, towers, HEADS).value
        assert np.array_equal(before, after)

    def test_routing_isolation_gradients(self):
        towers = make_towers(seed=8)
        # make both towers fully live so zero grads are meaningful
        for side in (ROUTE_POSITIVE, ROUTE_NEGATIVE):
            for p in towers[side].values():
                p.value += rng(9).normal(0, 0.1, size=p.value.shape)
        h, c_p = random_inputs(seed=10)
        for live, frozen in ((ROUTE_POSITIVE, ROUTE_NEGATIVE), (ROUTE_NEGATIVE, ROUTE_POSITIVE)):
            for side in (ROUTE_POSITIVE, ROUTE_NEGATIVE):
                for p in towers[side].values():
                    p.zero_grad()
            h.zero_grad(), c_p.zero_grad()
            tape = Tape()
            out = fuse(tape, h, c_p, live, towers, HEADS)
            s = TapeValue(out.value.sum())
            def bwd(out=out, s=s):
                out.grad += s.grad
            tape.push(bwd)
            backward(tape, s)
            assert any(np.abs(p.grad).sum() > 0 for p in towers[live].values())
            for p in towers[frozen].values():
                assert not p.grad.any()

    def test_single_key_attention_is_query_independent(self):
        # m=1: the attention weight is exactly 1, so z = (c_p W_v) W_o
        # regardless of the query; verify fuse against a manual recompute
        towers = make_towers(seed=11)
        tower = towers[ROUTE_NEGATIVE]
        r = rng(12)
        tower["attn.w_v"].value[:] = r.normal(size=(D, D))
        tower["attn.w_o"].value[:] = r.normal(size=(D, D))
        c_row = r.normal(size=(1, 1, D))
        for h_seed in (13, 14):
            h = TapeValue(rng(h_seed).normal(size=(1, D)))
            out = fuse(None, h, TapeValue(c_row), ROUTE_NEGATIVE, towers, HEADS).value
            z = (c_row[0] @ tower["attn.w_v"].value) @ tower["attn.w_o"].value
            h_res = h.value + z
            f1 = np.maximum(h_res @ tower["ffn.w1"].value + tower["ffn.b1"].value, 0.0)
            manual = h_res + f1 @ tower["ffn.w2"].value + tower["ffn.b2"].value
            manual = manual_rms(manual) * tower["ln_out.gain"].value + tower["ln_out.bias"].value
            np.testing.assert_allclose(out, manual, rtol=1e-10)

    def test_residual_stability_as_value_path_shrinks(self):
        towers = make_towers(seed=15)
        tower = towers[ROUTE_POSITIVE]
        r = rng(16)
        w_v = r.normal(size=(D, D))
        w_o = r.normal(size=(D, D))
        w2 = r.normal(size=(2 * D, D))
        h, c_p = random_inputs(seed=17)
        target = manual_rms(h.value)
        dists = []
        for scale in (1.0, 0.1, 0.01, 0.0):
            tower["attn.w_v"].value[:] = scale * w_v
            tower["attn.w_o"].value[:] = scale * w_o
            tower["ffn.w2"].value[:] = scale * w2
            out = fuse(None, h, c_p, ROUTE_POSITIVE, towers, HEADS).value
            dists.append(np.linalg.norm(out - target))
        assert dists[0] > dists[1] > dists[2] > dists[3]
        assert dists[3] < 1e-12

    def test_shared_tower_ablation_shares_storage(self):
        towers = make_towers(seed=18, shared=True)
        assert towers[ROUTE_POSITIVE] is towers[ROUTE_NEGATIVE]

    def test_shape_validation(self):
        towers = make_towers()
        h, c_p = random_inputs()
        with pytest.raises(ConfigurationError):
            fuse(None, TapeValue(np.zeros((3, D + 1))), c_p, ROUTE_POSITIVE, towers, HEADS)
        with pytest.raises(ConfigurationError):
            fuse(None, h, TapeValue(np.zeros((2, M, D))), ROUTE_POSITIVE, towers, HEADS)
        with pytest.raises(InvalidArgumentError):
            fuse(None, h, c_p, "sideways", towers, HEADS)
        with pytest.raises(InvalidArgumentError):
            fuse(None, h, None, ROUTE_POSITIVE, towers, HEADS)

    def test_gradients_against_fd_through_whole_tower(self):
        towers = make_towers(seed=19)
        tower = towers[ROUTE_NEGATIVE]
        # move off the zero init so every path carries gradient
        r = rng(20)
        for key in ("attn.w_v", "attn.w_o", "ffn.w2"):
            tower[key].value[:] = r.normal(0, 0.3, size=tower[key].value.shape)
        h, c_p = random_inputs(seed=21, batch=2)
        read = r.normal(size=(2, D))
        params = dict({f"t.{k}": v for k, v in tower.items()}, h=h, c_p=c_p)

        def loss():
            for p in params.values():
                p.zero_grad()
            tape = Tape()
            out = fuse(tape, h, c_p, ROUTE_NEGATIVE, towers, HEADS)
            s = TapeValue((out.value * read).sum())
            def bwd():
                out.grad += s.grad * read
            tape.push(bwd)
            backward(tape, s)
            return s.value

        assert grad_check(loss, params).max_rel_error < 1e-5

    def test_fuse_single_matches_batched(self):
        towers = make_towers(seed=22)
        h, c_p = random_inputs(seed=23, batch=1)
        single = fuse_single(
            None, TapeValue(h.value[0]), TapeValue(c_p.value[0]),
            ROUTE_POSITIVE, towers, HEADS,
        )
        batched = fuse(None, h, c_p, ROUTE_POSITIVE, towers, HEADS)
        np.testing.assert_array_equal(single.value, batched.value[0])


class TestScoreItems:
    def table(self, vocab=50, seed=30):
        return np.vstack([np.zeros(D), rng(seed).normal(size=(vocab, D))])

    def test_orthogonal_state_scores_uniform(self):
        table = self.table()
        scores = score_items(np.zeros(D), table, 1.0)
        np.testing.assert_allclose(scores.probs, np.full(50, 1 / 50), rtol=1e-12)

    def test_two_item_closed_form(self):
        table = np.vstack([np.zeros(2), [[1.0, 0.0], [0.0, 0.0]]])
        scores = score_items(np.array([1.0, 0.0]), table, 1.0)
        np.testing.assert_allclose(scores.probs, [0.7310585786300049, 0.2689414213699951], rtol=1e-12)

    def test_exclusion_zeroes_and_renormalizes(self):
        table = self.table()
        h = rng(31).normal(size=D)
        base = score_items(h, table, 1.0)
        best = top_k(base, 1)[0]
        masked = score_items(h, table, 1.0, exclude={best})
        assert masked.probs[best - 1] == 0.0
        assert abs(masked.probs.sum() - 1.0) < 1e-12
        assert top_k(masked, 1)[0] != best

    def test_temperature_never_changes_ranking(self):
        table = self.table()
        h = rng(32).normal(size=D)
        orders = [top_k(score_items(h, table, tau), 50) for tau in (0.05, 0.5, 1.0, 7.0)]
        assert all(o == orders[0] for o in orders)

    def test_bad_temperature(self):
        with pytest.raises(InvalidArgumentError):
            score_items(np.zeros(D), self.table(), 0.0)

    def test_bad_exclude_id(self):
        with pytest.raises(InvalidArgumentError):
            score_items(np.zeros(D), self.table(), 1.0, exclude={99})

    def test_top_k_tie_break_by_item_id(self):
        table = np.vstack([np.zeros(1), np.ones((4, 1))])
        scores = score_items(np.ones(1), table, 1.0)
        assert top_k(scores, 4) == [1, 2, 3, 4]

    def test_top_k_stops_at_exclusions(self):
        table = self.table(vocab=5)
        h = rng(33).normal(size=D)
        scores = score_items(h, table, 1.0, exclude={1, 2, 3})
        assert len(top_k(scores, 5)) == 2
