"""Frozen expected values and exhaustive checks for the brute-force oracle.

The epoch lists below were worked out by hand from the grouping rule (loads
share their run start; the last store of a run keeps its own clock; Exclusive
never shares) before any recorder code existed. They pin the oracle itself.
"""

from __future__ import annotations

import math

import pytest

from rrgate.core import AccessKind
from rrgate.oracle import (
    check_condition1,
    condition1_suite,
    count_epoch_consistent_orders,
    epoch_consistent_orders,
    iter_kind_sequences,
    reference_epochs,
    script_for_kinds,
    simulate,
)

L = AccessKind.LOAD
S = AccessKind.STORE
E = AccessKind.EXCLUSIVE


HAND_CHECKED_EPOCHS = [
    ([L], [0]),
    ([S], [0]),
    ([E], [0]),
    ([L, L], [0, 0]),
    ([L, S], [0, 1]),
    ([S, L], [0, 1]),
    ([S, S], [0, 1]),
    ([E, E, E], [0, 1, 2]),
    ([S, S, S], [0, 0, 2]),
    ([S, S, S, S], [0, 0, 0, 3]),
    ([S, S, L], [0, 1, 2]),
    ([S, L, S], [0, 1, 2]),
    ([S, E, S], [0, 1, 2]),
    ([L, S, S], [0, 1, 2]),
    ([L, S, L, L], [0, 1, 2, 2]),
    ([L, S, S, S, L], [0, 1, 1, 3, 4]),
    ([S, S, L, S, S, S], [0, 1, 2, 3, 3, 5]),
    # the seven-access mixed sequence: three loads, three stores, one load
    ([L, L, L, S, S, S, L], [0, 0, 0, 3, 3, 5, 6]),
]


@pytest.mark.parametrize("kinds,expected", HAND_CHECKED_EPOCHS)
def test_reference_epochs_hand_checked(kinds, expected):
    assert reference_epochs(kinds) == expected


def test_reference_epochs_with_gappy_clocks():
    assert reference_epochs([L, L, S], clocks=[5, 9, 12]) == [5, 5, 12]
    assert reference_epochs([S, S, S], clocks=[2, 7, 11]) == [2, 2, 11]
    assert reference_epochs([E, L, L], clocks=[3, 8, 20]) == [3, 8, 8]


def test_reference_epochs_rejects_length_mismatch():
    with pytest.raises(ValueError):
        reference_epochs([L, S], clocks=[0])


def test_epoch_consistent_orders_of_mixed_sequence():
    epochs = [0, 0, 0, 3, 3, 5, 6]
    orders = list(epoch_consistent_orders(epochs))
    assert len(orders) == math.factorial(3) * math.factorial(2) == 12
    assert count_epoch_consistent_orders(epochs) == 12
    assert len(set(orders)) == 12
    for order in orders:
        assert sorted(order) == list(range(7))
        # epoch values must be nondecreasing along every admitted order
        seq = [epochs[i] for i in order]
        assert seq == sorted(seq)
    assert tuple(range(7)) in orders


def test_epoch_consistent_orders_all_distinct_is_identity():
    assert list(epoch_consistent_orders([0, 1, 2])) == [(0, 1, 2)]


def test_simulate_script_order():
    script = [(0, S, 7), (1, L, None), (0, E, None), (1, L, None)]
    observed, final = simulate(script)
    # the Exclusive observes its fetched value (7) before adding one
    assert observed == [7, 7, 8]
    assert final == 8


def test_simulate_respects_order_and_initial():
    script = [(0, L, None), (1, S, 3)]
    assert simulate(script, order=[1, 0], initial=9) == ([3], 3)
    assert simulate(script, initial=9) == ([9], 3)


def test_condition1_accepts_reference_epochs():
    script = script_for_kinds([L, L, L, S, S, S, L])
    assert check_condition1(script) is None


def test_condition1_rejects_grouping_all_three_stores():
    # grouping the final store wrongly lets another store land last
    script = script_for_kinds([S, S, S])
    assert check_condition1(script, epochs=[0, 0, 0]) is not None
    assert check_condition1(script, epochs=[0, 0, 2]) is None


def test_condition1_rejects_load_store_fusion():
    script = script_for_kinds([L, S])
    assert check_condition1(script, epochs=[0, 0]) is not None


def test_condition1_rejects_exclusive_fusion():
    script = script_for_kinds([E, E])
    assert check_condition1(script, epochs=[0, 0]) is not None


def test_condition1_suite_small_bounds_clean():
    checked, failures = condition1_suite(ls_max_len=4, lse_max_len=3)
    assert failures == []
    assert checked == (2 + 4 + 8 + 16) + (3 + 9 + 27)


def test_iter_kind_sequences_counts():
    assert sum(1 for _ in iter_kind_sequences((L, S), 7)) == 254
    assert sum(1 for _ in iter_kind_sequences((L, S, E), 5)) == 363
