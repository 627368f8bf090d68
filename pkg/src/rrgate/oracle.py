"""Brute-force correctness oracle for epoch assignment.

Everything here is deliberately simple and non-streaming: epochs are assigned
by scanning maximal same-kind runs of a complete access sequence, and the
commutation claim behind epoch grouping is checked by enumerating every
epoch-consistent execution order and simulating each one against a single
memory cell. The streaming recorder is tested against this module, never the
other way around.

The grouping rule for one region, in clock order:

  * a run of consecutive Loads shares the epoch of the run's first clock;
  * in a run of k consecutive Stores, the first k-1 share the run's first
    clock and the last keeps its own clock (the final write must stay
    ordered, everything it overwrites is dead);
  * an Exclusive access never shares: its epoch is its own clock.
"""

from __future__ import annotations

import math
import random
from itertools import chain, permutations, product
from typing import Callable, Iterable, Iterator, Sequence

from .core import AccessKind

# one scripted access: (thread id, kind, store value or None)
AccessStep = tuple[int, AccessKind, int | None]
AccessScript = list[AccessStep]

_L = AccessKind.LOAD
_S = AccessKind.STORE
_E = AccessKind.EXCLUSIVE


def reference_epochs(
    kinds: Sequence[AccessKind], clocks: Sequence[int] | None = None
) -> list[int]:
    """Assign epochs to a single region's accesses by whole-sequence run scan.

    clocks defaults to positions 0..n-1; the analyzer passes actual clock
    values, which may be gappy when several regions share one global clock.
    """
    n = len(kinds)
    if clocks is None:
        clocks = range(n)
    elif len(clocks) != n:
        raise ValueError("kinds and clocks must have equal length")
    epochs = [0] * n
    i = 0
    while i < n:
        kind = kinds[i]
        j = i + 1
        while j < n and kinds[j] == kind:
            j += 1
        if kind == _L:
            for k in range(i, j):
                epochs[k] = clocks[i]
        elif kind == _S:
            for k in range(i, j - 1):
                epochs[k] = clocks[i]
            epochs[j - 1] = clocks[j - 1]
        else:
            for k in range(i, j):
                epochs[k] = clocks[k]
        i = j
    return epochs


def epoch_consistent_orders(epochs: Sequence[int]) -> Iterator[tuple[int, ...]]:
    """Yield every execution order that respects the epoch partial order.

    Accesses with distinct epochs run in epoch order; accesses sharing an
    epoch run in any relative order. Yields tuples of original indices.
    """
    groups: dict[int, list[int]] = {}
    for idx, epoch in enumerate(epochs):
        groups.setdefault(epoch, []).append(idx)
    ordered = [groups[e] for e in sorted(groups)]
    for combo in product(*(permutations(g) for g in ordered)):
        yield tuple(chain.from_iterable(combo))


def count_epoch_consistent_orders(epochs: Sequence[int]) -> int:
    groups: dict[int, int] = {}
    for epoch in epochs:
        groups[epoch] = groups.get(epoch, 0) + 1
    return math.prod(math.factorial(n) for n in groups.values())


def simulate(
    script: AccessScript,
    order: Sequence[int] | None = None,
    initial: int = 0,
) -> tuple[list[int], int]:
    """Run the script against one integer cell in the given execution order.

    Store writes its value, Load observes the current value, Exclusive is a
    fetch-and-add (+1) whose fetched value is observed just like a Load's.
    Observing the fetch is what makes two Exclusives non-commuting. Returns
    (observations keyed by original script index order, final cell value).
    """
    if order is None:
        order = range(len(script))
    cell = initial
    seen: dict[int, int] = {}
    for idx in order:
        _tid, kind, value = script[idx]
        if kind == _L:
            seen[idx] = cell
        elif kind == _S:
            cell = value  # type: ignore[assignment]
        else:
            seen[idx] = cell
            cell += 1
    return [seen[i] for i in sorted(seen)], cell


def check_condition1(
    script: AccessScript, epochs: Sequence[int] | None = None
) -> tuple[int, ...] | None:
    """Exhaustively test that epoch grouping preserves observable behavior.

    Every epoch-consistent order must produce the same per-access observations
    and the same final cell value as the script order itself. Returns None on
    success, or the first violating order as a counterexample. epochs defaults
    to reference_epochs of the script's kinds; tests pass adversarial epochs
    to show the check has teeth.
    """
    kinds = [kind for _tid, kind, _v in script]
    if epochs is None:
        epochs = reference_epochs(kinds)
    baseline = simulate(script)
    for order in epoch_consistent_orders(epochs):
        if simulate(script, order) != baseline:
            return order
    return None


# --------------------------------------------------------------------------
# enumeration helpers shared by the verify command and the test suite


def iter_kind_sequences(
    alphabet: Sequence[AccessKind], max_len: int
) -> Iterator[tuple[AccessKind, ...]]:
    """All non-empty kind sequences over the alphabet, lengths 1..max_len."""
    for n in range(1, max_len + 1):
        yield from product(alphabet, repeat=n)


def script_for_kinds(kinds: Sequence[AccessKind]) -> AccessScript:
    """Single-thread script with distinct store values (position + 1)."""
    return [
        (0, kind, idx + 1 if kind == _S else None) for idx, kind in enumerate(kinds)
    ]


def condition1_suite(
    ls_max_len: int = 7, lse_max_len: int = 5
) -> tuple[int, list[AccessScript]]:
    """Exhaustive Condition-1 soundness sweep.

    Checks every load/store script up to ls_max_len and every three-kind
    script up to lse_max_len. Returns (scripts checked, failing scripts).
    """
    checked = 0
    failures: list[AccessScript] = []
    for kinds in chain(
        iter_kind_sequences((_L, _S), ls_max_len),
        iter_kind_sequences((_L, _S, _E), lse_max_len),
    ):
        script = script_for_kinds(kinds)
        checked += 1
        if check_condition1(script) is not None:
            failures.append(script)
    return checked, failures


def streaming_suite(
    assign: Callable[[Sequence[AccessKind]], list[int]],
    exhaustive_max_len: int = 9,
    random_count: int = 10_000,
    random_max_len: int = 64,
    seed: int = 20260815,
) -> tuple[int, list[tuple[AccessKind, ...]]]:
    """Equivalence sweep of a streaming epoch assigner against the reference.

    Runs every kind sequence over all three kinds up to exhaustive_max_len,
    then random_count seeded random sequences up to random_max_len. Returns
    (sequences checked, mismatching sequences).
    """
    checked = 0
    failures: list[tuple[AccessKind, ...]] = []

    def try_one(kinds: tuple[AccessKind, ...]) -> None:
        nonlocal checked
        checked += 1
        if assign(kinds) != reference_epochs(kinds):
            failures.append(kinds)

    for kinds in iter_kind_sequences((_L, _S, _E), exhaustive_max_len):
        try_one(kinds)
    rng = random.Random(seed)
    alphabet = (_L, _S, _E)
    for _ in range(random_count):
        n = rng.randint(1, random_max_len)
        try_one(tuple(rng.choice(alphabet) for _ in range(n)))
    return checked, failures
