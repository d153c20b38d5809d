# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Container, FrozenSet, Iterable, Mapping, Optional, Set, Tuple

import networkx as nx
import numpy as np

from errors import ChainMismatch, ValidationError
from lmc import LabelledMarkovChain, Partition, chains_close, direct_sum

logger = logging.getLogger("oracle")

# probabilities become integer capacities in units of 1e-12
SCALE = 10**12


@dataclass(frozen=True)
class StateRelation:
    """Reflexive, symmetric relation on the states 0..n-1.

    Only unordered pairs of distinct states are stored.
    """

    n_states: int
    unordered: FrozenSet[Tuple[int, int]]

    @classmethod
    def from_pairs(cls, n_states: int, pairs: Iterable[Tuple[int, int]]) -> "StateRelation":
        stored = set()
        for s, t in pairs:
            if not (0 <= s < n_states and 0 <= t < n_states):
                raise ValidationError(f"pair ({s}, {t}) is outside 0..{n_states - 1}")
            if s != t:
                stored.add((min(s, t), max(s, t)))
        return cls(n_states, frozenset(stored))

    def __contains__(self, pair: object) -> bool:
        s, t = pair
        if s == t:
            return 0 <= s < self.n_states
        return (min(s, t), max(s, t)) in self.unordered

    def pairs(self) -> Set[Tuple[int, int]]:
        result = {(s, s) for s in range(self.n_states)}
        for s, t in self.unordered:
            result.add((s, t))
            result.add((t, s))
        return result

    def issubset(self, other: "StateRelation") -> bool:
        return self.n_states == other.n_states and self.unordered <= other.unordered

    def classes(self) -> Partition:
        """Classes of the transitive closure."""
        graph = nx.Graph()
        graph.add_nodes_from(range(self.n_states))
        graph.add_edges_from(self.unordered)
        components = sorted((sorted(c) for c in nx.connected_components(graph)), key=min)
        return Partition.from_blocks(components, self.n_states)


class _Working:
    """Mutable view used while pairs are being deleted."""

    def __init__(self, unordered: Set[Tuple[int, int]]):
        self.unordered = unordered

    def __contains__(self, pair: object) -> bool:
        s, t = pair
        return s == t or (min(s, t), max(s, t)) in self.unordered


def lifting_feasible(
    chain: LabelledMarkovChain,
    mu: Mapping[int, float],
    nu: Mapping[int, float],
    relation: Container,
    epsilon: float,
) -> bool:
    """Is there a coupling of mu and nu putting at least 1 - epsilon mass on the relation?

    Decided by a maximum flow from mu's support to nu's support along
    related pairs, on integer capacities.
    """
    mu = dict(mu.items())
    nu = dict(nu.items())
    for dist in (mu, nu):
        for x in dist.keys():
            if x < 0 or x >= chain.n_states:
                raise ValidationError(f"distribution refers to unknown state {x}")
    graph = nx.DiGraph()
    graph.add_node("source")
    graph.add_node("sink")
    for u, p in mu.items():
        graph.add_edge("source", ("mu", u), capacity=int(round(p * SCALE)))
    for v, p in nu.items():
        graph.add_edge(("nu", v), "sink", capacity=int(round(p * SCALE)))
    for u in mu.keys():
        for v in nu.keys():
            if (u, v) in relation:
                # no capacity attribute: unbounded
                graph.add_edge(("mu", u), ("nu", v))
    flow = nx.maximum_flow_value(graph, "source", "sink")
    rounding = len(mu) + len(nu) + 1
    return flow >= (1.0 - epsilon) * SCALE - rounding


def greatest_eps_bisim(
    chain: LabelledMarkovChain, epsilon: float, shuffle_seed: Optional[int] = None
) -> StateRelation:
    """Greatest epsilon-bisimulation, by deleting pairs until nothing changes.

    Args:
        chain: the chain
        epsilon: lifting slack in [0, 1]
        shuffle_seed: sweep pairs in a seeded random order instead of ascending

    Returns:
        The relation
    """
    if not 0 <= epsilon <= 1:
        raise ValidationError(f"epsilon must lie in [0, 1], got {epsilon}")
    current: Set[Tuple[int, int]] = {
        (s, t)
        for s, t in combinations(range(chain.n_states), 2)
        if chain.labels[s] == chain.labels[t]
    }
    working = _Working(current)
    rng = np.random.default_rng(shuffle_seed) if shuffle_seed is not None else None
    sweeps = 0
    changed = True
    while changed:
        changed = False
        sweeps += 1
        order = sorted(current)
        if rng is not None:
            order = [order[i] for i in rng.permutation(len(order))]
        for s, t in order:
            if (s, t) not in current:
                continue
            if not lifting_feasible(chain, chain.rows[s], chain.rows[t], working, epsilon):
                current.discard((s, t))
                changed = True
    logger.debug(f"eps-bisimulation at {epsilon}: {len(current)} pairs after {sweeps} sweeps")
    return StateRelation(chain.n_states, frozenset(current))


def check_prop1(chain: LabelledMarkovChain, certificate) -> bool:
    """Every source state is (epsilon/2)-bisimilar to its image in source + target."""
    if certificate.source is not chain and not chains_close(certificate.source, chain):
        raise ChainMismatch("certificate does not start at the given chain")
    summed, offset = direct_sum(certificate.source, certificate.target)
    relation = greatest_eps_bisim(summed, min(1.0, certificate.epsilon / 2))
    return all((s, offset + q) in relation for s, q in enumerate(certificate.mapping))


def transitive_classes(relation: StateRelation) -> Partition:
    return relation.classes()
