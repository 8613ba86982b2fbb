from __future__ import annotations

import pytest

from seqquery.estimators import (
    beam_search_coverage,
    beam_search_fixed,
    importance_sampling,
    shared_prefix_sweep,
)
from seqquery.queries import Vocab, make_hitting_time
from tests.conftest import random_chain


class TestImportanceSweep:
    def test_bit_identical_to_standalone(self):
        chain = random_chain(4, seed=21)
        K, S, seed = 6, 40, 9
        swept = shared_prefix_sweep({2}, K, chain.spawn(), [0], "importance_sampling", S=S, seed=seed)
        for k in range(1, K + 1):
            q = make_hitting_time({2}, k, Vocab(4))
            standalone = importance_sampling(q, chain.spawn(), [0], S, seed=seed)
            assert swept[k - 1].value == standalone.value  # bit-for-bit
            assert swept[k - 1].std_error == standalone.std_error

    def test_call_saving(self):
        chain = random_chain(3, seed=22)
        K, S = 5, 30
        model = chain.spawn()
        shared_prefix_sweep({0}, K, model, [1], "importance_sampling", S=S, seed=4)
        sweep_calls = model.calls
        standalone_total = 0
        for k in range(1, K + 1):
            m = chain.spawn()
            importance_sampling(make_hitting_time({0}, k, Vocab(3)), m, [1], S, seed=4)
            standalone_total += m.calls
        assert sweep_calls <= S * K  # cost of the k=K run alone
        assert sweep_calls < standalone_total
        # accounting ratio bound: K versus sum over k
        assert sweep_calls / standalone_total <= K / sum(range(1, K + 1)) + 1e-12

    def test_reported_calls_are_shared_total(self):
        chain = random_chain(3, seed=23)
        model = chain.spawn()
        ests = shared_prefix_sweep({0}, 4, model, [1], "importance_sampling", S=10, seed=0)
        for est in ests:
            assert est.model_calls == model.calls
            assert est.meta["swept"]


class TestBeamSweep:
    @pytest.mark.parametrize("B", [1, 2, 4])
    def test_fixed_beam_sets_match_standalone(self, B):
        chain = random_chain(4, seed=31)
        K = 5
        swept = shared_prefix_sweep({1}, K, chain.spawn(), [0], "beam_search_fixed", B=B, seed=0)
        for k in range(1, K + 1):
            part = make_hitting_time({1}, k, Vocab(4)).parts[0]
            bs, est = beam_search_fixed(part, chain.spawn(), [0], B=B)
            assert swept[k - 1].value == est.value
            assert swept[k - 1].meta["beams"] == [list(b.seq) for b in bs.beams]

    def test_coverage_constant_matches_standalone(self):
        chain = random_chain(3, seed=32)
        K, alpha = 4, 0.75
        swept = shared_prefix_sweep(
            {0}, K, chain.spawn(), [1], "beam_search_coverage", alpha=alpha, schedule="constant", seed=0
        )
        for k in range(1, K + 1):
            part = make_hitting_time({0}, k, Vocab(3)).parts[0]
            bs, est, bound = beam_search_coverage(part, chain.spawn(), [1], alpha, "constant")
            assert swept[k - 1].value == est.value
            assert swept[k - 1].meta["bound"] == pytest.approx(bound, abs=1e-15)

    def test_sweep_calls_bounded_by_standalone_k_run(self):
        chain = random_chain(3, seed=33)
        K, B = 5, 2
        model = chain.spawn()
        shared_prefix_sweep({0}, K, model, [1], "beam_search_fixed", B=B, seed=0)
        standalone = chain.spawn()
        beam_search_fixed(make_hitting_time({0}, K, Vocab(3)).parts[0], standalone, [1], B=B)
        assert model.calls == standalone.calls


class TestRejections:
    def test_hybrid_rejected(self, chain3):
        with pytest.raises(ValueError, match="hybrid"):
            shared_prefix_sweep({0}, 3, chain3, [1], "hybrid", S=5, seed=0)

    def test_geometric_coverage_rejected(self, chain3):
        with pytest.raises(ValueError, match="constant"):
            shared_prefix_sweep({0}, 3, chain3, [1], "beam_search_coverage", alpha=0.5, schedule="geometric")

    def test_bad_params(self, chain3):
        with pytest.raises(ValueError):
            shared_prefix_sweep({0}, 3, chain3, [1], "importance_sampling", S=0)
        with pytest.raises(ValueError):
            shared_prefix_sweep({0}, 0, chain3, [1], "importance_sampling", S=5)
        with pytest.raises(ValueError):
            shared_prefix_sweep({0, 1, 2}, 3, chain3, [1], "importance_sampling", S=5)
