from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sgasmix.errors import DomainError
from sgasmix.metrics import adjusted_rand_index, confusion_table


def brute_force_ari(truth, predicted):
    """Pair counting over all C(n, 2) pairs, in exact rationals."""
    n11 = n10 = n01 = n00 = 0
    for i, j in combinations(range(len(truth)), 2):
        same_t = truth[i] == truth[j]
        same_p = predicted[i] == predicted[j]
        n11 += same_t and same_p
        n10 += same_t and not same_p
        n01 += same_p and not same_t
        n00 += not same_t and not same_p
    total = n11 + n10 + n01 + n00
    expected = Fraction((n11 + n10) * (n11 + n01), total)
    maximum = Fraction((n11 + n10) + (n11 + n01), 2)
    if maximum == expected:
        return Fraction(1)
    return (n11 - expected) / (maximum - expected)


labelings = st.integers(2, 50).flatmap(
    lambda n: st.tuples(st.lists(st.integers(0, 4), min_size=n, max_size=n),
                        st.lists(st.integers(0, 4), min_size=n, max_size=n)))


class TestAdjustedRandIndex:
    def test_identical(self):
        assert adjusted_rand_index([0, 0, 1, 1, 2], [0, 0, 1, 1, 2]) == 1.0

    def test_relabelled(self):
        assert adjusted_rand_index([0, 0, 1, 1, 2], [7, 7, -3, -3, 4]) == 1.0

    def test_crossing_partitions(self):
        # table [[1,1],[1,1]]: no agreeing pairs, expected 2/3, maximum 2
        value = adjusted_rand_index([1, 1, 2, 2], [1, 2, 1, 2])
        assert value == float(brute_force_ari([1, 1, 2, 2], [1, 2, 1, 2]))
        assert value == -0.5

    def test_single_cluster_both_sides(self):
        assert adjusted_rand_index([3, 3, 3], [1, 1, 1]) == 1.0

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            adjusted_rand_index([0, 1, 1], [0, 1])

    def test_needs_two_observations(self):
        with pytest.raises(DomainError):
            adjusted_rand_index([0], [0])

    def test_string_labels(self):
        assert adjusted_rand_index(["a", "a", "b"], ["x", "x", "y"]) == 1.0

    def test_random_labelings_centre_on_zero(self):
        rng = np.random.default_rng(0)
        values = [adjusted_rand_index(rng.integers(0, 3, 200), rng.integers(0, 3, 200)) for _ in range(400)]
        assert abs(np.mean(values)) < 3 * np.std(values) / np.sqrt(len(values))

    @settings(max_examples=150, deadline=None)
    @given(labelings)
    def test_matches_pair_counting_exactly(self, pair):
        truth, predicted = pair
        assert adjusted_rand_index(truth, predicted) == float(brute_force_ari(truth, predicted))

    @settings(max_examples=80, deadline=None)
    @given(labelings, st.permutations(range(5)), st.permutations(range(5)))
    def test_invariant_under_relabelling(self, pair, left, right):
        truth, predicted = pair
        base = adjusted_rand_index(truth, predicted)
        moved = adjusted_rand_index([left[t] for t in truth], [right[p] for p in predicted])
        assert moved == base
        assert adjusted_rand_index(predicted, truth) == base
        assert base <= 1.0


class TestConfusionTable:
    def test_counts(self):
        table, t_vals, p_vals = confusion_table([0, 0, 1, 1, 1], [5, 6, 6, 6, 5])
        np.testing.assert_array_equal(table, [[1, 1], [1, 2]])
        assert t_vals.tolist() == [0, 1] and p_vals.tolist() == [5, 6]

    def test_rectangular(self):
        table, _, _ = confusion_table([0, 1, 2, 0], [0, 0, 0, 1])
        assert table.shape == (3, 2) and table.sum() == 4

    def test_length_mismatch(self):
        with pytest.raises(DomainError):
            confusion_table([0, 1], [0])
