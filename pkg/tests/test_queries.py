from __future__ import annotations

import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqquery.queries import (
    ProductQuery,
    Query,
    QueryError,
    Vocab,
    make_a_before_b,
    make_count,
    make_hitting_time,
    make_kth_marginal,
    parts_overlap,
)

V3 = Vocab(3)
V4 = Vocab(4)


def brute_force_member_count(query: Query, V: int) -> int:
    return sum(query.contains(list(seq)) for seq in itertools.product(range(V), repeat=query.horizon))


class TestConstructors:
    def test_marginal_k1_reduces_to_next_event(self):
        q = make_kth_marginal(0, 1, V3)
        assert q.parts[0].domains == ((0,),)
        assert q.size() == 1

    def test_marginal_size(self):
        assert make_kth_marginal(0, 3, V3).size() == 9

    def test_marginal_token_out_of_range(self):
        with pytest.raises(QueryError):
            make_kth_marginal(5, 2, V3)

    def test_hitting_size(self):
        assert make_hitting_time({0}, 3, V3).size() == 4

    def test_hitting_k1(self):
        assert make_hitting_time({0}, 1, V3).parts[0].domains == ((0,),)

    def test_hitting_full_vocab_error(self):
        with pytest.raises(QueryError):
            make_hitting_time({0, 1, 2}, 2, V3)

    def test_hitting_set_target_size(self):
        # |A| * (V - |A|)^(K-1)
        assert make_hitting_time({0, 1}, 3, V4).size() == 2 * 4

    def test_a_before_b_sizes(self):
        q = make_a_before_b({0}, {1}, 2, V3)
        assert [p.size() for p in q.parts] == [1, 1]
        assert q.size() == 2
        assert q.truncated

    def test_a_before_b_single_step(self):
        q = make_a_before_b({0}, {1}, 1, V3)
        assert len(q.parts) == 1
        assert q.parts[0].domains == ((0,),)

    def test_a_before_b_overlap_error(self):
        with pytest.raises(QueryError):
            make_a_before_b({0}, {0, 1}, 2, V3)

    def test_a_before_b_empty_middle_error(self):
        with pytest.raises(QueryError):
            make_a_before_b({0}, {1}, 2, Vocab(2))

    def test_count_sizes(self):
        q = make_count(0, 2, 4, V3)
        assert len(q.parts) == 6
        assert q.size() == 24

    def test_count_none(self):
        q = make_count(0, 0, 2, V3)
        assert len(q.parts) == 1 and q.size() == 4

    def test_count_all(self):
        q = make_count(0, 3, 3, V3)
        assert len(q.parts) == 1 and q.size() == 1

    def test_count_too_many(self):
        with pytest.raises(QueryError):
            make_count(0, 4, 3, V3)


class TestOps:
    def test_contains(self):
        q = make_hitting_time({0}, 3, V3)
        assert q.contains([1, 2, 0])
        assert not q.contains([0, 2, 0])

    def test_contains_length_mismatch(self):
        with pytest.raises(QueryError):
            make_hitting_time({0}, 3, V3).contains([1, 0])

    def test_validate_partition_ok(self):
        assert make_count(0, 1, 2, V3).validate_partition() == []

    def test_validate_partition_detects_overlap(self):
        q = Query((ProductQuery(((0, 1), (0,))), ProductQuery(((1, 2), (0,)))))
        assert q.validate_partition() == [(0, 1)]

    def test_mixed_horizon_overlap_uses_prefix_rule(self):
        # part 2 of an a-before-b union forbids token 0 at step 1
        short = ProductQuery(((0,),))
        longer = ProductQuery(((2,), (0,)))
        assert not parts_overlap(short, longer)
        assert parts_overlap(ProductQuery(((2,),)), longer)

    def test_saturated_size(self):
        q = make_kth_marginal(0, 40, V4)  # 4^39 > 2^63
        n, flag = q.saturated_size()
        assert flag and n == 2**63 - 1
        assert q.size() == 4**39

    def test_size_is_exact_bigint(self):
        assert make_kth_marginal(0, 101, V4).size() == 4**100


class TestExhaustive:
    @pytest.mark.parametrize(
        "query,V",
        [
            (make_kth_marginal(1, 4, V3), 3),
            (make_hitting_time({0}, 4, V3), 3),
            (make_hitting_time({0, 2}, 3, V4), 4),
            (make_count(0, 2, 4, V3), 3),
            (make_count(2, 0, 3, V4), 4),
        ],
    )
    def test_membership_count_equals_size(self, query, V):
        assert brute_force_member_count(query, V) == query.size()

    @pytest.mark.parametrize(
        "query,V",
        [
            (make_count(0, 2, 4, V3), 3),
            (make_count(1, 1, 3, V4), 4),
            (make_a_before_b({0}, {1}, 4, V3), 3),
            (make_a_before_b({0}, {1, 2}, 3, V4), 4),
        ],
    )
    def test_no_sequence_in_two_parts(self, query, V):
        for seq in itertools.product(range(V), repeat=query.horizon):
            hits = sum(p.contains(list(seq[: p.horizon])) for p in query.parts)
            assert hits <= 1
        assert query.validate_partition() == []

    def test_a_before_b_counts_with_free_suffix(self):
        # members of the truncated union at the full horizon have free
        # suffixes beyond each part's own horizon
        K = 4
        q = make_a_before_b({0}, {1}, K, V3)
        expected = sum(p.size() * 3 ** (K - p.horizon) for p in q.parts)
        assert brute_force_member_count(q, 3) == expected

    @pytest.mark.parametrize("V,K", [(3, 4), (4, 3)])
    def test_three_way_event_split(self, V, K):
        vocab = Vocab(V)
        ab = make_a_before_b({0}, {1}, K, vocab)
        ba = make_a_before_b({1}, {0}, K, vocab)
        neither = V - 2
        count = (
            brute_force_member_count(ab, V)
            + brute_force_member_count(ba, V)
            + neither**K
        )
        assert count == V**K


class TestSerialization:
    @pytest.mark.parametrize(
        "query",
        [
            make_kth_marginal(2, 3, V3),
            make_hitting_time({0, 1}, 4, V4),
            make_a_before_b({0}, {1}, 3, V3),
            make_count(1, 2, 4, V3),
        ],
    )
    def test_round_trip_bit_exact(self, query):
        text = query.to_json()
        back = Query.from_json(text)
        assert back.to_json() == text
        assert back.horizon == query.horizon
        assert back.size() == query.size()
        assert back.label == query.label

    def test_domains_sorted_ascending(self):
        q = Query((ProductQuery(((2, 0), (1,))),))
        assert '"parts":[[[0,2],[1]]]' in q.to_json()

    def test_horizon_mismatch_rejected(self):
        with pytest.raises(QueryError):
            Query.from_json('{"K": 5, "parts": [[[0], [1]]], "label": ""}')


@settings(max_examples=60, deadline=None)
@given(
    V=st.integers(2, 4),
    K=st.integers(1, 4),
    data=st.data(),
)
def test_partition_property_random_counts(V, K, data):
    vocab = Vocab(V)
    a = data.draw(st.integers(0, V - 1))
    n = data.draw(st.integers(0, K if V > 1 else 0))
    if n < K or V > 1:
        q = make_count(a, n, K, vocab)
        assert q.validate_partition() == []
        assert brute_force_member_count(q, V) == q.size()
