from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqquery.models import (
    Distribution,
    MarkovSequenceModel,
    ModelError,
    NGramModel,
    SyntheticMixerModel,
    TemperatureWrapped,
    UniformModel,
    apply_temperature,
    fit_ngram,
    sequence_logprob,
)
from tests.conftest import random_chain

ABABAB = fit_ngram("ababab", order=1, delta=0.0)


class TestDistribution:
    def test_rejects_unnormalized(self):
        with pytest.raises(ModelError):
            Distribution(np.log([0.5, 0.4]))

    def test_rejects_positive_logp(self):
        with pytest.raises(ModelError):
            Distribution(np.array([0.5, -3.0]))

    def test_accepts_neg_inf(self):
        d = Distribution(np.array([0.0, -np.inf]))
        assert d.probs()[1] == 0.0

    def test_from_probs(self):
        d = Distribution.from_probs([2, 1, 1])
        assert d.probs() == pytest.approx([0.5, 0.25, 0.25])


class TestTemperature:
    def test_identity(self):
        d = Distribution.from_probs([0.8, 0.2])
        assert apply_temperature(d, 1.0) is d

    def test_half_squares(self):
        d = Distribution.from_probs([0.8, 0.2])
        out = apply_temperature(d, 0.5).probs()
        assert out == pytest.approx([16 / 17, 1 / 17], abs=1e-12)

    def test_large_t_flattens(self):
        d = Distribution.from_probs([0.8, 0.2])
        out = apply_temperature(d, 1e6).probs()
        assert out == pytest.approx([0.5, 0.5], abs=1e-5)

    def test_nonpositive_rejected(self):
        d = Distribution.from_probs([0.8, 0.2])
        for T in (0.0, -1.0):
            with pytest.raises(ModelError):
                apply_temperature(d, T)

    @settings(max_examples=80, deadline=None)
    @given(
        probs=st.lists(st.floats(0.01, 1.0), min_size=2, max_size=6),
        T=st.floats(0.05, 50.0),
    )
    def test_argmax_invariance(self, probs, T):
        arr = np.asarray(probs)
        arr[np.argmax(arr)] += 0.5  # break ties
        d = Distribution.from_probs(arr)
        assert np.argmax(apply_temperature(d, T).logp) == np.argmax(d.logp)


class TestBuiltinModels:
    def test_uniform_next(self):
        m = UniformModel(3)
        d = m.next([], [1, 2])
        assert np.allclose(d.logp, math.log(1 / 3))

    def test_ngram_deterministic_counts(self):
        d = ABABAB.next([0], [])  # after "a"
        assert d.logp[1] == 0.0
        assert d.logp[0] == -np.inf

    def test_ngram_add_one(self):
        m = fit_ngram("aab", order=1, delta=1.0)
        assert m.next([0], []).probs()[0] == pytest.approx(0.5)

    def test_fit_empty_corpus(self):
        with pytest.raises(ModelError):
            fit_ngram("", order=1)

    def test_fit_bad_order(self):
        with pytest.raises(ModelError):
            fit_ngram("ab", order=0)

    def test_tokenizations(self):
        assert fit_ngram("ab ab ba", order=1, tokenization="whitespace").vocab.size == 2
        assert fit_ngram("ab", order=1, tokenization="byte").vocab.size == 2

    def test_unseen_context_delta_zero_raises(self):
        m = fit_ngram("ababab", order=2, delta=0.0)
        with pytest.raises(ModelError):
            m.next([1, 1], [])  # "bb" never occurs

    def test_unseen_context_smoothed_uniform(self):
        m = fit_ngram("ababab", order=2, delta=1.0)
        assert np.allclose(m.next([1, 1], []).probs(), [0.5, 0.5])

    def test_mixer_deterministic(self):
        m = SyntheticMixerModel(seed=7, V=5)
        a = m.next([], [0, 1]).logp
        b = m.next([], [0, 1]).logp
        assert np.array_equal(a, b)

    def test_mixer_depends_on_full_prefix(self):
        # same 3-token suffix, different earlier context: genuinely non-Markov
        m = SyntheticMixerModel(seed=7, V=5)
        a = m.next([0, 1, 2, 3], []).logp
        b = m.next([4, 1, 2, 3], []).logp
        assert not np.allclose(a, b)

    def test_mixer_seed_changes_distribution(self):
        a = SyntheticMixerModel(seed=1, V=5).next([], [0]).logp
        b = SyntheticMixerModel(seed=2, V=5).next([], [0]).logp
        assert not np.allclose(a, b)

    def test_markov_needs_context(self):
        m = random_chain(3, seed=1)
        with pytest.raises(ModelError):
            m.next([], [])

    def test_markov_rejects_bad_rows(self):
        with pytest.raises(ModelError):
            MarkovSequenceModel(np.array([[0.5, 0.4], [0.5, 0.5]]))

    def test_token_out_of_range(self):
        m = UniformModel(3)
        with pytest.raises(Exception):
            m.next([5], [])


class TestSequenceLogprob:
    def test_uniform(self):
        m = UniformModel(3)
        assert sequence_logprob(m, [], [0, 1, 2]) == pytest.approx(math.log(1 / 27))

    def test_ngram_certain_path(self):
        m = fit_ngram("ababab", order=1, delta=0.0)
        assert sequence_logprob(m, [0], [1, 0, 1]) == 0.0

    def test_empty_sequence_rejected(self):
        with pytest.raises(ModelError):
            sequence_logprob(UniformModel(2), [], [])

    def test_call_accounting(self):
        m = UniformModel(3)
        v1 = sequence_logprob(m, [], [0, 1])
        v2 = sequence_logprob(m, [], [0, 1])
        assert v1 == v2
        assert m.calls == 4


class TestCallCounter:
    @pytest.mark.parametrize(
        "factory",
        [
            lambda: UniformModel(3),
            lambda: random_chain(3, seed=3),
            lambda: SyntheticMixerModel(seed=1, V=3),
            lambda: TemperatureWrapped(UniformModel(3), 2.0),
            lambda: fit_ngram("abcabc", order=1),
        ],
    )
    def test_increments_by_one(self, factory):
        m = factory()
        before = m.calls
        m.next([0], [1])
        assert m.calls == before + 1

    def test_spawn_resets_counter(self):
        m = UniformModel(3)
        m.next([], [])
        clone = m.spawn()
        assert m.calls == 1 and clone.calls == 0


class TestNormalization:
    @pytest.mark.parametrize(
        "factory",
        [
            lambda: random_chain(4, seed=9),
            lambda: SyntheticMixerModel(seed=5, V=7),
            lambda: fit_ngram("the quick brown fox " * 3, order=2, tokenization="whitespace"),
            lambda: TemperatureWrapped(SyntheticMixerModel(seed=5, V=7), 0.3),
        ],
    )
    def test_all_outputs_normalize(self, factory):
        m = factory()
        gen = np.random.default_rng(0)
        for _ in range(25):
            n = int(gen.integers(1, 5))
            ctx = [int(gen.integers(m.vocab.size)) for _ in range(n)]
            d = m.next(ctx, [])
            assert abs(np.logaddexp.reduce(d.logp)) < 1e-9


class TestPersistence:
    def test_markov_json_round_trip(self, chain3):
        text = chain3.to_json()
        back = MarkovSequenceModel.from_json(text)
        assert np.array_equal(back.matrix, chain3.matrix)
        doc = json.loads(text)
        assert set(doc) == {"V", "P"}

    def test_markov_json_shape_check(self):
        with pytest.raises(ModelError):
            MarkovSequenceModel.from_json('{"V": 3, "P": [[0.5, 0.5], [0.5, 0.5]]}')

    def test_ngram_json_round_trip(self):
        m = fit_ngram("abracadabra", order=2, delta=0.5)
        back = NGramModel.from_json(m.to_json())
        assert back.symbols == m.symbols
        for ctx in ([0], [1, 0], [3]):
            assert np.array_equal(back.next(ctx, []).logp, m.next(ctx, []).logp)


class TestNGramMarkovAgreement:
    def test_order_one_matches_chain(self):
        m = fit_ngram("abcabcbbacca", order=1, delta=1.0)
        chain = MarkovSequenceModel(m.to_markov_tensor(), order=1)
        for ctx in range(m.vocab.size):
            a = m.next([ctx], []).probs()
            b = chain.next([ctx], []).probs()
            np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)

    def test_higher_order_tensor_rows_match(self):
        m = fit_ngram("abcabcbbacca", order=2, delta=0.5)
        tensor = m.to_markov_tensor()
        chain = MarkovSequenceModel(tensor, order=2)
        for c1 in range(3):
            for c2 in range(3):
                np.testing.assert_allclose(
                    m.next([c1, c2], []).probs(), chain.next([c1, c2], []).probs(), atol=1e-12, rtol=0
                )
