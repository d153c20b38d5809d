# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

"""Labelled Markov chains, partitions, lumping and exact bisimulation quotients."""

import bisect
import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple

import config
from errors import LabelMismatch, NotADistribution, NotLumpable, ValidationError

logger = logging.getLogger("lmc")

# negative entries this close to zero are rounding noise and get dropped
NEGATIVE_NOISE = 1e-15


@dataclass(frozen=True)
class Label:
    """Atomic label of a state. Labels of different chains match by `key`."""

    id: int
    name: Optional[str] = None

    @property
    def key(self) -> str:
        return self.name if self.name is not None else f"#{self.id}"

    def __str__(self) -> str:
        return self.key


class SparseDistribution:
    """Immutable map from state index to a positive probability.

    Zero entries are never stored. The bare constructor rejects negative and
    NaN entries; the total mass is checked by `from_mapping` and by chain
    construction.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries: Mapping[int, float]):
        cleaned: Dict[int, float] = {}
        for index, value in entries.items():
            value = float(value)
            if math.isnan(value):
                raise NotADistribution(f"entry {index} is NaN")
            if value < 0:
                if value >= -NEGATIVE_NOISE:
                    continue
                raise NotADistribution(f"entry {index} is negative ({value!r})")
            if value > 0:
                cleaned[int(index)] = value
        self._entries = dict(sorted(cleaned.items()))

    @classmethod
    def from_mapping(
        cls,
        entries: Mapping[int, float],
        tol: Optional[float] = None,
        subdistribution: bool = False,
    ) -> "SparseDistribution":
        """Build a distribution and check its mass.

        Args:
            entries: index -> probability
            tol: row-sum tolerance, defaults to the configured tol_stochastic
            subdistribution: accept total mass in (0, 1]

        Returns:
            The validated distribution

        Raises:
            NotADistribution: if the mass is out of range
        """
        dist = cls(entries)
        problem = dist.check(tol, subdistribution)
        if problem:
            raise NotADistribution(problem)
        return dist

    @classmethod
    def point(cls, index: int) -> "SparseDistribution":
        return cls({index: 1.0})

    def check(self, tol: Optional[float] = None, subdistribution: bool = False) -> Optional[str]:
        tol = config.tol_stochastic(tol)
        total = self.mass()
        if subdistribution:
            if total <= 0 or total > 1.0 + tol:
                return f"subdistribution mass {total!r} outside (0, 1]"
        elif abs(total - 1.0) > tol:
            return f"distribution mass {total!r} differs from 1"
        return None

    def mass(self) -> float:
        return math.fsum(self._entries.values())

    def support(self) -> Tuple[int, ...]:
        return tuple(self._entries)

    def items(self):
        return self._entries.items()

    def keys(self):
        return self._entries.keys()

    def as_dict(self) -> Dict[int, float]:
        return dict(self._entries)

    def __getitem__(self, index: int) -> float:
        return self._entries.get(index, 0.0)

    def __contains__(self, index: object) -> bool:
        return index in self._entries

    def __iter__(self) -> Iterator[int]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseDistribution):
            return NotImplemented
        return self._entries == other._entries

    def __hash__(self) -> int:
        return hash(tuple(self._entries.items()))

    def __repr__(self) -> str:
        body = ", ".join(f"{k}: {v:.6g}" for k, v in self._entries.items())
        return f"SparseDistribution({{{body}}})"


@dataclass(frozen=True)
class LabelledMarkovChain:
    """A finite labelled Markov chain with dense 0-based state indices."""

    labels: Tuple[Label, ...]
    rows: Tuple[SparseDistribution, ...]
    state_names: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "rows", tuple(self.rows))
        if self.state_names is not None:
            object.__setattr__(self, "state_names", tuple(str(n) for n in self.state_names))
        n = len(self.rows)
        if n == 0:
            raise ValidationError("a chain needs at least one state")
        if len(self.labels) != n:
            raise ValidationError(f"{len(self.labels)} labels for {n} states")
        if self.state_names is not None and len(self.state_names) != n:
            raise ValidationError(f"{len(self.state_names)} state names for {n} states")
        tol = config.tol_stochastic()
        for s, row in enumerate(self.rows):
            for target in row:
                if target < 0 or target >= n:
                    raise ValidationError(f"state {s} moves to unknown state {target}")
            problem = row.check(tol)
            if problem:
                raise NotADistribution(f"row of state {s}: {problem}")

    @classmethod
    def build(
        cls,
        labels: Sequence[str],
        rows: Sequence[Mapping[int, float]],
        names: Optional[Sequence[str]] = None,
    ) -> "LabelledMarkovChain":
        """Build a chain from label names and plain dict rows.

        Label ids are assigned densely in order of first appearance.
        """
        interned: Dict[str, Label] = {}
        state_labels = []
        for name in labels:
            if name not in interned:
                interned[name] = Label(len(interned), name)
            state_labels.append(interned[name])
        return cls(
            labels=tuple(state_labels),
            rows=tuple(SparseDistribution(row) for row in rows),
            state_names=tuple(names) if names is not None else None,
        )

    @property
    def n_states(self) -> int:
        return len(self.rows)

    @property
    def n_transitions(self) -> int:
        return sum(len(row) for row in self.rows)

    def label_universe(self) -> Tuple[Label, ...]:
        return tuple(sorted(set(self.labels), key=lambda label: label.id))

    def name(self, s: int) -> str:
        return self.state_names[s] if self.state_names is not None else str(s)

    def names(self) -> Tuple[str, ...]:
        return tuple(self.name(s) for s in range(self.n_states))

    def index_of(self, name: str) -> int:
        names = self.names()
        if name not in names:
            raise ValidationError(f"unknown state name: {name}")
        return names.index(name)

    def with_rows(self, rows: Iterable[SparseDistribution]) -> "LabelledMarkovChain":
        return LabelledMarkovChain(self.labels, tuple(rows), self.state_names)


@dataclass(frozen=True)
class Partition:
    """Disjoint blocks covering 0..n-1; block order is meaningful."""

    blocks: Tuple[Tuple[int, ...], ...]
    block_of: Tuple[int, ...]

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]], n_states: Optional[int] = None) -> "Partition":
        ordered = tuple(tuple(sorted(set(block))) for block in blocks)
        total = sum(len(block) for block in ordered)
        n = n_states if n_states is not None else total
        block_of = [-1] * n
        for index, block in enumerate(ordered):
            if not block:
                raise ValidationError(f"block {index} is empty")
            for s in block:
                if s < 0 or s >= n:
                    raise ValidationError(f"block {index} holds unknown state {s}")
                if block_of[s] != -1:
                    raise ValidationError(f"state {s} lies in blocks {block_of[s]} and {index}")
                block_of[s] = index
        if total != n:
            missing = [s for s, b in enumerate(block_of) if b == -1]
            raise ValidationError(f"blocks miss states {missing[:10]}")
        return cls(ordered, tuple(block_of))

    @classmethod
    def from_block_of(cls, block_of: Sequence[int]) -> "Partition":
        """Partition whose block k is the fibre of k; block ids must be 0..k-1."""
        members: Dict[int, List[int]] = defaultdict(list)
        for s, b in enumerate(block_of):
            members[int(b)].append(s)
        k = len(members)
        if sorted(members) != list(range(k)):
            raise ValidationError("block ids of a mapping must be dense and start at 0")
        return cls(tuple(tuple(members[b]) for b in range(k)), tuple(int(b) for b in block_of))

    @classmethod
    def discrete(cls, n_states: int) -> "Partition":
        return cls(tuple((s,) for s in range(n_states)), tuple(range(n_states)))

    @classmethod
    def single(cls, n_states: int) -> "Partition":
        return cls((tuple(range(n_states)),), (0,) * n_states)

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def n_states(self) -> int:
        return len(self.block_of)

    def canonical(self) -> "Partition":
        """Same blocks, ordered by their smallest member."""
        return Partition.from_blocks(sorted(self.blocks, key=lambda block: block[0]), self.n_states)

    def same_block(self, s: int, t: int) -> bool:
        return self.block_of[s] == self.block_of[t]

    def refines(self, other: "Partition") -> bool:
        return all(
            len({other.block_of[s] for s in block}) == 1 for block in self.blocks
        )

    def as_sets(self) -> List[frozenset]:
        return sorted((frozenset(block) for block in self.blocks), key=min)


@dataclass(frozen=True)
class QuotientResult:
    quotient: LabelledMarkovChain
    mapping: Tuple[int, ...]

    @property
    def partition(self) -> Partition:
        return Partition.from_block_of(self.mapping)


#####################################################
# Distances and lumping
#####################################################


def l1_distance(a: Mapping[int, float], b: Mapping[int, float]) -> float:
    """Sum of absolute entry differences over the union of both supports.

    Accepts SparseDistribution or plain dicts.
    """
    a_items = dict(a.items())
    b_items = dict(b.items())
    keys = a_items.keys() | b_items.keys()
    return math.fsum(abs(a_items.get(k, 0.0) - b_items.get(k, 0.0)) for k in keys)


def max_abs_diff(a: Mapping[int, float], b: Mapping[int, float]) -> float:
    a_items = dict(a.items())
    b_items = dict(b.items())
    keys = a_items.keys() | b_items.keys()
    return max((abs(a_items.get(k, 0.0) - b_items.get(k, 0.0)) for k in keys), default=0.0)


def lump_row(row: Mapping[int, float], block_of: Sequence[int]) -> Dict[int, float]:
    lumped: Dict[int, float] = defaultdict(float)
    for target, p in row.items():
        lumped[block_of[target]] += p
    return dict(lumped)


def lump(chain: LabelledMarkovChain, state: int, partition: Partition) -> SparseDistribution:
    """Row of `state` aggregated over the partition's blocks (indexed by block)."""
    if partition.n_states != chain.n_states:
        raise ValidationError(
            f"partition covers {partition.n_states} states, chain has {chain.n_states}"
        )
    return SparseDistribution(lump_row(chain.rows[state], partition.block_of))


def mean_row(rows: Sequence[Mapping[int, float]]) -> Dict[int, float]:
    total: Dict[int, float] = defaultdict(float)
    for row in rows:
        for k, p in row.items():
            total[k] += p
    return {k: v / len(rows) for k, v in total.items()}


#####################################################
# Exact bisimulation
#####################################################


def label_partition(chain: LabelledMarkovChain) -> Partition:
    groups: Dict[Label, List[int]] = defaultdict(list)
    for s, label in enumerate(chain.labels):
        groups[label].append(s)
    return Partition.from_blocks(sorted(groups.values(), key=lambda block: block[0]), chain.n_states)


def _cluster(members: List[Tuple[Tuple[float, ...], int]], tol: float) -> List[List[int]]:
    """Group vectors of one support pattern whose entries agree within tol.

    Members are scanned in lexicographic vector order; a vector joins the
    first cluster whose representative is within tol on every coordinate.
    """
    members.sort()
    firsts: List[float] = []
    reps: List[Tuple[float, ...]] = []
    clusters: List[List[int]] = []
    for vector, s in members:
        head = vector[0] if vector else 0.0
        lo = bisect.bisect_left(firsts, head - tol)
        hi = bisect.bisect_right(firsts, head + tol)
        chosen = None
        for c in range(lo, hi):
            if all(abs(x - y) <= tol for x, y in zip(vector, reps[c])):
                chosen = c
                break
        if chosen is None:
            firsts.append(head)
            reps.append(vector)
            clusters.append([s])
        else:
            clusters[chosen].append(s)
    return clusters


def _refine_once(chain: LabelledMarkovChain, block_of: Sequence[int], tol: float) -> Tuple[int, ...]:
    groups: Dict[Tuple, List[Tuple[Tuple[float, ...], int]]] = defaultdict(list)
    for s, row in enumerate(chain.rows):
        entries = sorted((b, p) for b, p in lump_row(row, block_of).items() if p > tol)
        key = (block_of[s], tuple(b for b, _ in entries))
        groups[key].append((tuple(p for _, p in entries), s))
    blocks: List[List[int]] = []
    for members in groups.values():
        blocks.extend(_cluster(members, tol))
    blocks.sort(key=min)
    new_block_of = [0] * chain.n_states
    for index, block in enumerate(blocks):
        for s in block:
            new_block_of[s] = index
    return tuple(new_block_of)


def bisimulation_partition(
    chain: LabelledMarkovChain,
    tol: Optional[float] = None,
    initial: Optional[Partition] = None,
) -> Partition:
    """Coarsest bisimulation refining `initial` (default: the label partition).

    Args:
        chain: the chain
        tol: per-coordinate equality tolerance on lumped rows
        initial: starting partition, must separate differently labelled states

    Returns:
        Canonical partition into bisimulation classes
    """
    tol = config.tol_exact(tol)
    start = initial if initial is not None else label_partition(chain)
    block_of = start.canonical().block_of
    n_blocks = start.n_blocks
    rounds = 0
    while True:
        rounds += 1
        refined = _refine_once(chain, block_of, tol)
        refined_count = max(refined) + 1
        if refined_count == n_blocks:
            break
        block_of, n_blocks = refined, refined_count
    logger.debug(f"bisimulation: {chain.n_states} states -> {n_blocks} classes in {rounds} rounds")
    return Partition.from_block_of(block_of)


def _quotient_chain(chain: LabelledMarkovChain, partition: Partition) -> LabelledMarkovChain:
    labels = []
    rows = []
    names = []
    for block in partition.blocks:
        rep = min(block)
        labels.append(chain.labels[rep])
        rows.append(SparseDistribution(lump_row(chain.rows[rep], partition.block_of)))
        names.append(chain.name(rep))
    return LabelledMarkovChain(tuple(labels), tuple(rows), tuple(names))


def exact_quotient(chain: LabelledMarkovChain, tol_exact: Optional[float] = None) -> QuotientResult:
    """Quotient of `chain` by probabilistic bisimilarity."""
    partition = bisimulation_partition(chain, tol_exact)
    return QuotientResult(_quotient_chain(chain, partition), partition.block_of)


def quotient_wrt(
    chain: LabelledMarkovChain, partition: Partition, tol_exact: Optional[float] = None
) -> QuotientResult:
    """Lumped chain of a lumpable partition; quotient state k is block k.

    Raises:
        LabelMismatch: if a block mixes labels
        NotLumpable: if two members of a block have lumped rows further apart than tol_exact
    """
    tol = config.tol_exact(tol_exact)
    if partition.n_states != chain.n_states:
        raise ValidationError(
            f"partition covers {partition.n_states} states, chain has {chain.n_states}"
        )
    for index, block in enumerate(partition.blocks):
        rep = min(block)
        rep_row = lump_row(chain.rows[rep], partition.block_of)
        for u in block:
            if u == rep:
                continue
            if chain.labels[u] != chain.labels[rep]:
                raise LabelMismatch(rep, u, f" in block {index}")
            deviation = max_abs_diff(rep_row, lump_row(chain.rows[u], partition.block_of))
            if deviation > tol:
                raise NotLumpable(index, rep, u, deviation)
    return QuotientResult(_quotient_chain(chain, partition), partition.block_of)


def direct_sum(
    a: LabelledMarkovChain, b: LabelledMarkovChain
) -> Tuple[LabelledMarkovChain, int]:
    """Disjoint union of two chains; labels are matched by key.

    Returns:
        The summed chain and the index offset of b's states
    """
    universe: Dict[str, Label] = {}
    for label in a.label_universe() + b.label_universe():
        if label.key not in universe:
            universe[label.key] = Label(len(universe), label.name)
    offset = a.n_states
    labels = [universe[label.key] for label in a.labels + b.labels]
    rows = list(a.rows)
    rows.extend(SparseDistribution({t + offset: p for t, p in row.items()}) for row in b.rows)
    names = a.names() + b.names()
    return LabelledMarkovChain(tuple(labels), tuple(rows), names), offset


def chains_close(a: LabelledMarkovChain, b: LabelledMarkovChain, tol: Optional[float] = None) -> bool:
    """Same state count, same label keys per state and rows equal within tol."""
    tol = config.tol_exact(tol)
    if a.n_states != b.n_states:
        return False
    for s in range(a.n_states):
        if a.labels[s].key != b.labels[s].key:
            return False
        if max_abs_diff(a.rows[s], b.rows[s]) > tol:
            return False
    return True


def compose_mappings(first: Sequence[int], second: Sequence[int]) -> Tuple[int, ...]:
    """State map of `second` after `first`."""
    return tuple(second[x] for x in first)
