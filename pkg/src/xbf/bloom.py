"""Bit filters, link identifiers and Bloom-filter sizing.

Bit ``i`` of a filter is bit ``i % 8`` (LSB first) of byte ``i // 8`` in its
byte form.  Filters are stored as Python ints, so OR/AND are single ops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .partition import Partitioning


class FilterError(ValueError):
    pass


@dataclass(frozen=True)
class BitFilter:
    bits: int
    m: int

    def __post_init__(self) -> None:
        if self.m < 1:
            raise FilterError("filter length must be >= 1")
        if self.bits < 0 or self.bits >> self.m:
            raise FilterError("bits outside filter length")

    @classmethod
    def zeros(cls, m: int) -> BitFilter:
        return cls(0, m)

    @classmethod
    def from_positions(cls, positions: Iterable[int], m: int) -> BitFilter:
        bits = 0
        for i in positions:
            if not 0 <= i < m:
                raise FilterError(f"bit {i} outside 0..{m - 1}")
            bits |= 1 << i
        return cls(bits, m)

    @classmethod
    def from_string(cls, text: str) -> BitFilter:
        """Parse a ``"0101..."`` string, leftmost character = bit 0."""
        return cls.from_positions((i for i, c in enumerate(text) if c == "1"), len(text))

    @classmethod
    def from_bytes(cls, data: bytes, m: int | None = None) -> BitFilter:
        m = 8 * len(data) if m is None else m
        return cls(int.from_bytes(data, "little"), m)

    def to_bytes(self) -> bytes:
        return self.bits.to_bytes((self.m + 7) // 8, "little")

    def to_string(self) -> str:
        return "".join("1" if self.bits >> i & 1 else "0" for i in range(self.m))

    def positions(self) -> list[int]:
        return [i for i in range(self.m) if self.bits >> i & 1]

    def popcount(self) -> int:
        return bin(self.bits).count("1")

    def __or__(self, other: BitFilter) -> BitFilter:
        _same_length(self, other)
        return BitFilter(self.bits | other.bits, self.m)

    def __and__(self, other: BitFilter) -> BitFilter:
        _same_length(self, other)
        return BitFilter(self.bits & other.bits, self.m)

    def __contains__(self, link_id: BitFilter) -> bool:
        return bf_member(self, link_id)


def _same_length(a: BitFilter, b: BitFilter) -> None:
    if a.m != b.m:
        raise FilterError(f"filter lengths differ: {a.m} vs {b.m}")


def bf_or(filters: Iterable[BitFilter], m: int | None = None) -> BitFilter:
    """Bitwise OR of all filters; ``m`` is required when ``filters`` is empty."""
    filters = list(filters)
    if not filters:
        if m is None:
            raise FilterError("need m to OR an empty set of filters")
        return BitFilter.zeros(m)
    m = filters[0].m if m is None else m
    bits = 0
    for f in filters:
        if f.m != m:
            raise FilterError(f"filter lengths differ: {f.m} vs {m}")
        bits |= f.bits
    return BitFilter(bits, m)


def bf_member(f: BitFilter, link_id: BitFilter) -> bool:
    """``F AND l == l``."""
    _same_length(f, link_id)
    return f.bits & link_id.bits == link_id.bits


def false_positive_rate(k: int, n: int, m: int) -> float:
    """Textbook Bloom-filter FPR ``(1 - e^{-kn/m})^k``."""
    return (1.0 - math.exp(-k * n / m)) ** k


@dataclass(frozen=True)
class LinkIdAssignment:
    """Link identifiers indexed by link id.

    In ``one_bit`` mode ``partition_of`` says which partition's filter an
    identifier lives in.
    """

    mode: str
    m: int
    k: int
    ids: tuple[BitFilter, ...]
    partition_of: tuple[int, ...] | None = None

    def __getitem__(self, link: int) -> BitFilter:
        return self.ids[link]

    def __len__(self) -> int:
        return len(self.ids)

    def encode(self, links: Iterable[int]) -> BitFilter:
        return bf_or((self.ids[e] for e in links), self.m)


def _random_positions(rng: np.random.Generator, m: int, k: int) -> list[int]:
    return rng.choice(m, size=k, replace=False).tolist()


def gen_random_ids(link_count: int, m: int, k: int, seed: int = 0) -> LinkIdAssignment:
    """Each link gets ``k`` distinct random bits out of ``m``; ids may collide."""
    if not 1 <= k <= m:
        raise FilterError(f"need 1 <= k <= m, got k={k}, m={m}")
    rng = np.random.default_rng(seed)
    ids = tuple(BitFilter.from_positions(_random_positions(rng, m, k), m) for _ in range(link_count))
    return LinkIdAssignment("random_k", m, k, ids)


def one_bit_ids_for(partitioning: Partitioning) -> LinkIdAssignment:
    """One unique bit per link within its partition's filter."""
    m = partitioning.max_partition_size
    ids = tuple(BitFilter(1 << b, m) for b in partitioning.bit_of)
    return LinkIdAssignment("one_bit", m, 1, ids, partitioning.assignment)


# --------------------------------------------------------------------------
# L_p(s): minimum classical filter length


def optimal_k(m: int, n_items: int) -> int:
    """FPR-minimising hash count ``round(m/n * ln 2)``, at least 1, at most m."""
    return min(m, max(1, round(m / max(n_items, 1) * math.log(2))))


K_RULES: dict[str, Callable[[int, int], int]] = {
    "optimal": optimal_k,
    "fixed5": lambda m, n: min(m, 5),
}


class UnsatisfiableError(ValueError):
    pass


MAX_FILTER_BITS = 1 << 20


def tree_success_fraction(
    g,
    trees: Sequence,
    m: int,
    k_rule: Callable[[int, int], int],
    seed: int,
    ttl: int | None = None,
) -> float:
    """Fraction of ``trees`` delivered without any false link firing when
    encoded in an ``m``-bit classical filter.

    Identifiers for trial ``t`` come from ``default_rng((seed + t, m))`` and
    are drawn lazily for the links a delivery actually tests.
    """
    from .sim import deliver_classical

    ok = 0
    for t, tree in enumerate(trees):
        k = k_rule(m, len(tree.links))
        ids = _LazyIds(m, k, np.random.default_rng((seed + t, m)))
        f = ids.encode(sorted(tree.links))
        trace = deliver_classical(g, ids, f, tree.source, ttl=ttl, intended=tree.links, stop_on_false=True)
        ok += not trace.false_firings
    return ok / len(trees)


class _LazyIds:
    """Random-k identifiers generated on first use (large ``m`` friendly)."""

    mode = "random_k"

    def __init__(self, m: int, k: int, rng: np.random.Generator):
        self.m, self.k, self._rng = m, k, rng
        self._ids: dict[int, BitFilter] = {}

    def __getitem__(self, link: int) -> BitFilter:
        f = self._ids.get(link)
        if f is None:
            f = BitFilter.from_positions(_random_positions(self._rng, self.m, self.k), self.m)
            self._ids[link] = f
        return f

    def encode(self, links: Iterable[int]) -> BitFilter:
        return bf_or((self[e] for e in links), self.m)


def min_filter_length(
    g,
    s: int,
    p: float,
    k_rule: str | Callable[[int, int], int] = "optimal",
    trials: int = 1000,
    seed: int = 0,
) -> int:
    """Smallest ``m`` keeping at least ``p`` of random ``s``-sink trees
    free of false positives.

    The same ``trials`` trees (uniform source, ``s`` uniform sinks) are
    reused for every candidate ``m``; ``m`` is found by doubling and then
    bisection.
    """
    from .trees import build_multicast_tree, sample_endpoints

    if not 0 < p < 1:
        raise ValueError("p must lie in (0, 1)")
    if s < 1:
        raise ValueError("s must be >= 1")
    if trials < 100:
        raise ValueError("trials must be >= 100")
    rule = K_RULES[k_rule] if isinstance(k_rule, str) else k_rule
    trees = []
    for t in range(trials):
        rng = np.random.default_rng(seed + t)
        source, sinks = sample_endpoints(rng, g.n_nodes, s)
        trees.append(build_multicast_tree(g, source, sinks))
    ttl = 4 * g.diameter

    cache: dict[int, bool] = {}

    def good(m: int) -> bool:
        if m not in cache:
            cache[m] = tree_success_fraction(g, trees, m, rule, seed, ttl) >= p
        return cache[m]

    hi = max(8, max(len(t.links) for t in trees))
    while not good(hi):
        if hi >= MAX_FILTER_BITS:
            raise UnsatisfiableError(f"no filter up to {MAX_FILTER_BITS} bits reaches p={p}")
        hi = min(2 * hi, MAX_FILTER_BITS)
    lo = 0  # invariant: good(hi), and lo is not known good
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if good(mid):
            hi = mid
        else:
            lo = mid
    return hi
