"""Featurizer, projector, and router tests."""

from __future__ import annotations

import numpy as np
import pytest

from promptrec.corpus import (
    CHARACTERISTIC,
    DEFAULT_LEXICON,
    DEFAULT_POOL,
    GENRE_NAMES,
    ROUTE_NEGATIVE,
    ROUTE_POSITIVE,
)
from promptrec.corpus.templates import EVAL, TRAIN
from promptrec.errors import ConfigurationError, InvalidArgumentError
from promptrec.numerics import Tape, TapeValue, backward, grad_check
from promptrec.prompting import (
    DEFAULT_WIDTH,
    featurize_prompt,
    init_projector,
    load_negative_cues,
    project_prompt,
    route_intent,
    tokenize,
)


def all_categories() -> list[str]:
    cats = list(GENRE_NAMES)
    for g in GENRE_NAMES:
        cats.extend(DEFAULT_LEXICON.train_tags(g))
        cats.extend(DEFAULT_LEXICON.eval_tags(g))
    return cats


def all_rendered_prompts() -> list[tuple[str, str]]:
    """(expected_route, text) for every template x category combination."""
    out = []
    for polarity in (ROUTE_POSITIVE, ROUTE_NEGATIVE):
        for phase in (TRAIN, EVAL):
            for tpl in DEFAULT_POOL.pick(polarity, phase):
                for cat in all_categories():
                    out.append((polarity, tpl.replace("{category}", cat)))
    return out


class TestFeaturizer:
    def test_deterministic(self):
        a = featurize_prompt("Show me some comedy picks.")
        b = featurize_prompt("Show me some comedy picks.")
        assert a.dtype == np.float64
        assert np.array_equal(a, b)

    def test_comedy_bucket_matches_fnv_reference(self):
        # independent FNV-1a-64 implementation
        h = 0xCBF29CE484222325
        for byte in b"comedy":
            h ^= byte
            h = (h * 0x100000001B3) % 2**64
        expected_bucket = h % DEFAULT_WIDTH
        feats = featurize_prompt("comedy", rows=1)
        assert feats[0, expected_bucket] > 0

    def test_short_text_leaves_trailing_rows_zero(self):
        feats = featurize_prompt("comedy", rows=4)
        # one unigram, no bigrams: only row 0 occupied
        assert np.linalg.norm(feats[0]) > 0
        assert not feats[1:].any()

    def test_nonzero_rows_unit_norm(self):
        feats = featurize_prompt("I feel like watching a comedy film. What should I see?")
        norms = np.linalg.norm(feats, axis=1)
        for n in norms:
            assert n == 0.0 or abs(n - 1.0) < 1e-12

    def test_empty_text_rejected(self):
        with pytest.raises(InvalidArgumentError):
            featurize_prompt("  ... !!")

    def test_unigrams_and_bigrams_round_robin(self):
        # "a b c" -> features [a, b, c, "a b", "b c"], rows 0,1,0,1,0 at m=2,
        # bigrams at half weight
        feats = featurize_prompt("a b c", rows=2, width=64)
        from promptrec.rng import fnv1a64
        row0 = np.zeros(64)
        row1 = np.zeros(64)
        for k, (f, w) in enumerate([("a", 1.0), ("b", 1.0), ("c", 1.0),
                                    ("a b", 0.5), ("b c", 0.5)]):
            (row0 if k % 2 == 0 else row1)[fnv1a64(f) % 64] += w
        np.testing.assert_allclose(feats[0], row0 / np.linalg.norm(row0))
        np.testing.assert_allclose(feats[1], row1 / np.linalg.norm(row1))

    def test_injective_on_bundled_renderings(self):
        seen: dict[bytes, str] = {}
        for _, text in all_rendered_prompts():
            key = featurize_prompt(text).tobytes()
            if key in seen:
                assert seen[key] == text, f"collision: {seen[key]!r} vs {text!r}"
            seen[key] = text


class TestProjector:
    def make(self, seed=0, width=16, hidden=8, d=6):
        return init_projector(np.random.default_rng(seed), width, hidden, d)

    def test_output_shape(self):
        params = self.make()
        out = project_prompt(None, np.zeros((4, 16)), params)
        assert out.value.shape == (4, 6)

    def test_zero_input_gives_bias_path(self):
        params = self.make(seed=3)
        params["proj.b1"].value[:] = np.linspace(-1, 1, 8)
        params["proj.b2"].value[:] = 0.25
        out = project_prompt(None, np.zeros((2, 16)), params).value
        expected = np.maximum(params["proj.b1"].value, 0.0) @ params["proj.w2"].value + 0.25
        np.testing.assert_allclose(out[0], expected, rtol=1e-12)
        np.testing.assert_allclose(out[1], expected, rtol=1e-12)

    def test_positive_homogeneity_without_biases(self):
        params = self.make(seed=5)
        for k in ("proj.w1", "proj.w2"):
            params[k].value[:] = np.abs(params[k].value)
        x = np.abs(np.random.default_rng(7).normal(size=(3, 16)))
        one = project_prompt(None, x, params).value
        two = project_prompt(None, 2.0 * x, params).value
        np.testing.assert_allclose(two, 2.0 * one, rtol=1e-10)

    def test_width_mismatch_rejected(self):
        with pytest.raises(ConfigurationError):
            project_prompt(None, np.zeros((4, 17)), self.make())

    def test_gradient_against_fd(self):
        params = self.make(seed=11)
        x = TapeValue(np.random.default_rng(13).normal(size=(4, 16)))
        read = np.random.default_rng(17).normal(size=(4, 6))
        everything = dict(params, x=x)

        def loss():
            for p in everything.values():
                p.zero_grad()
            tape = Tape()
            out = project_prompt(tape, x, params)
            s = TapeValue((out.value * read).sum())
            def bwd():
                out.grad += s.grad * read
            tape.push(bwd)
            backward(tape, s)
            return s.value

        assert grad_check(loss, everything).max_rel_error < 1e-6


class TestRouter:
    def test_positive_example(self):
        assert route_intent("I feel like watching a comedy film. What should I see?") == "+"

    def test_negative_example(self):
        assert route_intent("I want to watch something different, so avoid the horror type.") == "-"

    def test_negative_without_template(self):
        assert route_intent("I don't want to watch Action movie tonight") == "-"

    def test_empty_rejected(self):
        with pytest.raises(InvalidArgumentError):
            route_intent("   ")

    def test_cues_do_not_match_inside_words(self):
        assert route_intent("the unavoidable skipper exclusively excludes nothing") == "+"

    def test_case_insensitive(self):
        assert route_intent("AVOID the horror type") == "-"

    def test_custom_cue_list(self):
        assert route_intent("no horror please", cues=("please",)) == "-"
        assert route_intent("avoid horror", cues=("please",)) == "+"

    def test_bundled_lexicon_loads(self):
        cues = load_negative_cues()
        assert "avoid" in cues and "not in the mood for" in cues
        assert len(cues) == 12

    def test_perfect_accuracy_on_all_renderings(self):
        n_templates = sum(
            len(DEFAULT_POOL.pick(pol, phase))
            for pol in (ROUTE_POSITIVE, ROUTE_NEGATIVE)
            for phase in (TRAIN, EVAL)
        )
        total = 0
        for expected, text in all_rendered_prompts():
            assert route_intent(text) == expected, text
            total += 1
        assert total == n_templates * len(all_categories())


class TestTokenize:
    def test_lowercases_and_splits_on_non_alphanumerics(self):
        assert tokenize("Don't STOP me now, 99!") == ["don", "t", "stop", "me", "now", "99"]
