# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

"""Hand-sized chains with known answers, and a brute-force search for small epsilon-quotients.

All probabilities are computed as fractions and converted to floats once,
so the same parameters always give bit-identical chains.
"""

import logging
from fractions import Fraction
from itertools import combinations, product
from typing import Dict, Iterator, List, Optional, Sequence, Tuple, Union

from errors import TooLarge, ValidationError
from lmc import (
    LabelledMarkovChain,
    Partition,
    exact_quotient,
    l1_distance,
    label_partition,
    lump_row,
    quotient_wrt,
)
from witness import adjust_distribution, chebyshev_center

logger = logging.getLogger("fixtures")

BRUTE_FORCE_LIMIT = 12
HALF = Fraction(1, 2)
QUARTER = Fraction(1, 4)

Number = Union[int, float, str, Fraction]


def exact(value: Number) -> Fraction:
    """Fraction for a parameter; floats are read through their decimal repr (0.1 -> 1/10)."""
    if isinstance(value, float):
        return Fraction(repr(value))
    return Fraction(value)


def chain_from_fractions(
    states: Sequence[Tuple[str, str]], rows: Dict[str, Dict[str, Fraction]]
) -> LabelledMarkovChain:
    """Build a chain from (name, label) pairs and rows keyed by state name.

    Raises:
        ValidationError: if a row has a negative entry or does not sum to exactly 1
    """
    index = {name: i for i, (name, _) in enumerate(states)}
    float_rows = []
    for name, _ in states:
        row = rows[name]
        if any(p < 0 for p in row.values()):
            raise ValidationError(f"row of {name} has a negative entry; parameter out of range")
        if sum(row.values()) != 1:
            raise ValidationError(f"row of {name} sums to {sum(row.values())}")
        float_rows.append({index[target]: float(p) for target, p in row.items() if p != 0})
    return LabelledMarkovChain.build(
        [label for _, label in states], float_rows, [name for name, _ in states]
    )


#####################################################
# Worked examples
#####################################################


def fig1(eps: Number) -> LabelledMarkovChain:
    """Two 2-state components, identical except for a skew of eps in the second."""
    e = exact(eps)
    if not 0 <= e < HALF:
        raise ValidationError(f"eps must lie in [0, 1/2), got {eps}")
    return chain_from_fractions(
        [("s1", "white"), ("s2", "green"), ("t1", "white"), ("t2", "green")],
        {
            "s1": {"s1": HALF, "s2": HALF},
            "s2": {"s1": HALF, "s2": HALF},
            "t1": {"t1": HALF + e, "t2": HALF - e},
            "t2": {"t1": HALF - e, "t2": HALF + e},
        },
    )


def fig4(eps: Number) -> LabelledMarkovChain:
    """s1 ~eps s3 ~eps s2, but s1 and s2 are only 2*eps-related."""
    e = exact(eps)
    return chain_from_fractions(
        [("s1", "a"), ("s2", "a"), ("s3", "a"), ("x", "b")],
        {
            "s1": {"s1": HALF, "s2": QUARTER, "x": QUARTER},
            "s2": {"s2": Fraction(3, 4) + 2 * e, "x": QUARTER - 2 * e},
            "s3": {"s3": Fraction(3, 4) + e, "x": QUARTER - e},
            "x": {"x": Fraction(1)},
        },
    )


def fig5(eps: Number, variant: str) -> LabelledMarkovChain:
    """Quotients of fig4: (a) merge s1,s3; (b) merge s2,s3; (c) merge all three."""
    e = exact(eps)
    one = Fraction(1)
    if variant == "a":
        return chain_from_fractions(
            [("s1", "a"), ("s2", "a"), ("x", "b")],
            {
                "s1": {"s1": Fraction(5, 8) + e / 2, "s2": Fraction(1, 8), "x": QUARTER - e / 2},
                "s2": {"s2": Fraction(3, 4) + 2 * e, "x": QUARTER - 2 * e},
                "x": {"x": one},
            },
        )
    if variant == "b":
        return chain_from_fractions(
            [("s1", "a"), ("s2", "a"), ("x", "b")],
            {
                "s1": {"s1": HALF, "s2": QUARTER, "x": QUARTER},
                "s2": {"s2": Fraction(3, 4) + 3 * e / 2, "x": QUARTER - 3 * e / 2},
                "x": {"x": one},
            },
        )
    if variant == "c":
        return chain_from_fractions(
            [("s1", "a"), ("x", "b")],
            {"s1": {"s1": Fraction(3, 4) + e, "x": QUARTER - e}, "x": {"x": one}},
        )
    raise ValidationError(f"unknown variant: {variant}")


def fig7b(eps: Number) -> LabelledMarkovChain:
    """Two-state result of approximately merging fig1."""
    e = exact(eps)
    return chain_from_fractions(
        [("s1", "white"), ("s2", "green")],
        {
            "s1": {"s1": HALF + e / 2, "s2": HALF - e / 2},
            "s2": {"s1": HALF - e / 2, "s2": HALF + e / 2},
        },
    )


def fig8() -> LabelledMarkovChain:
    """Chain on which the two minimisation algorithms and scan orders disagree."""
    return chain_from_fractions(
        [("s1", "a"), ("s2", "a"), ("s3", "a"), ("v", "b")],
        {
            "s1": {"s3": HALF, "v": HALF},
            "s2": {"s1": Fraction(27, 50), "v": Fraction(23, 50)},
            "s3": {"s3": Fraction(23, 50), "v": Fraction(27, 50)},
            "v": {"v": Fraction(1)},
        },
    )


def fig12(side: str) -> LabelledMarkovChain:
    """Chains after the first (left) and second (right) local merge of fig8."""
    one = Fraction(1)
    if side == "left":
        return chain_from_fractions(
            [("s1", "a"), ("s2", "a"), ("v", "b")],
            {
                "s1": {"s1": Fraction(12, 25), "v": Fraction(13, 25)},
                "s2": {"s1": Fraction(27, 50), "v": Fraction(23, 50)},
                "v": {"v": one},
            },
        )
    if side == "right":
        return chain_from_fractions(
            [("s1", "a"), ("v", "b")],
            {"s1": {"s1": Fraction(51, 100), "v": Fraction(49, 100)}, "v": {"v": one}},
        )
    raise ValidationError(f"unknown side: {side}")


def example5(eps: Number) -> LabelledMarkovChain:
    """t1 ~eps s ~eps t ~eps s1, with s1 and t1 far apart."""
    e = exact(eps)
    return chain_from_fractions(
        [("s", "a"), ("t", "a"), ("s1", "a"), ("t1", "a"), ("x", "b")],
        {
            "s": {"s": HALF, "s1": QUARTER, "x": QUARTER},
            "t": {"t": HALF + e, "t1": QUARTER, "x": QUARTER - e},
            "s1": {"s1": HALF + 2 * e, "t1": QUARTER, "x": QUARTER - 2 * e},
            "t1": {"t1": HALF - e, "s1": QUARTER, "x": QUARTER + e},
            "x": {"x": Fraction(1)},
        },
    )


#####################################################
# Parametrised families
#####################################################


def subset_sum_chain(p: Sequence[int], n: int) -> Tuple[LabelledMarkovChain, float, int]:
    """Chain with a 5-state (1/(2T))-quotient iff some sub-multiset of p sums to n.

    Returns:
        (chain, epsilon, k)
    """
    p = [int(x) for x in p]
    if not p or any(x <= 0 for x in p):
        raise ValidationError("p must be a nonempty collection of positive integers")
    total = sum(p)
    if not 0 <= n <= total:
        raise ValidationError(f"target {n} must lie in [0, {total}]")
    eps = Fraction(1, 2 * total)
    one = Fraction(1)
    names = [f"s{i + 1}" for i in range(len(p))]
    states = [("s", "a")] + [(name, "a") for name in names]
    states += [("sa", "a"), ("sb", "b"), ("t", "a"), ("t1", "a"), ("t2", "a"), ("ta", "a"), ("tb", "b")]
    rows: Dict[str, Dict[str, Fraction]] = {
        "s": {name: Fraction(x, total) for name, x in zip(names, p)},
        "sa": {"sa": one},
        "sb": {"sb": one},
        "t": {"t1": Fraction(n, total), "t2": one - Fraction(n, total)},
        "t1": {"ta": HALF - eps, "tb": HALF + eps},
        "t2": {"ta": HALF + eps, "tb": HALF - eps},
        "ta": {"ta": one},
        "tb": {"tb": one},
    }
    for name in names:
        rows[name] = {"sa": HALF, "sb": HALF}
    return chain_from_fractions(states, rows), float(eps), 5


def subset_sum_solvable(p: Sequence[int], n: int) -> bool:
    return any(
        sum(chosen) == n for size in range(len(p) + 1) for chosen in combinations(p, size)
    )


def family_m(kind: str, n: int, eps: Number) -> LabelledMarkovChain:
    """Chains where eps-bisimilarity links everything but merging costs far more than eps.

    kind "odd" gives 2n+2 states (s, t, s1..sn, t1..t(n-1), x), kind
    "even" gives 2n+3 states (s, t, s1..sn, t1..tn, x).
    """
    if kind not in ("odd", "even"):
        raise ValidationError(f"kind must be odd or even, got {kind}")
    if n < 1:
        raise ValidationError(f"n must be positive, got {n}")
    e = exact(eps)
    limit = Fraction(1, (n + 1) * 2 ** (n + 1))
    if not 0 < e <= limit:
        raise ValidationError(f"eps must lie in (0, {limit}], got {eps}")
    base = Fraction(1, 2 ** (n + 1))
    t_count = n - 1 if kind == "odd" else n
    s_family = {f"s{i}": Fraction(1, 2 ** (i + 1)) for i in range(1, n + 1)}
    if kind == "even":
        t_family = {f"t{i}": Fraction(1, 2 ** (i + 1)) for i in range(1, n + 1)}
    elif n >= 2:
        t_family = {f"t{i}": Fraction(1, 2 ** (i + 1)) for i in range(1, n - 1)}
        t_family[f"t{n - 1}"] = Fraction(3, 2 ** (n + 1))
    else:
        t_family = {}

    def row(own: str, stay: Fraction, family: Dict[str, Fraction], to_x: Fraction) -> Dict[str, Fraction]:
        result = {own: stay, "x": to_x}
        for target, q in family.items():
            result[target] = result.get(target, Fraction(0)) + q
        if not family:
            result[own] += HALF - base
        return result

    rows = {
        "s": row("s", HALF, s_family, base),
        "t": row("t", HALF + e, t_family, base - e),
        "x": {"x": Fraction(1)},
    }
    for j in range(1, n + 1):
        near = (HALF - j * e, s_family, base + j * e)
        far = (HALF + (j + 1) * e, t_family, base - (j + 1) * e)
        s_params, t_params = (far, near) if j % 2 == 1 else (near, far)
        rows[f"s{j}"] = row(f"s{j}", *s_params)
        if j <= t_count:
            rows[f"t{j}"] = row(f"t{j}", *t_params)
    states = [("s", "a"), ("t", "a")]
    states += [(f"s{j}", "a") for j in range(1, n + 1)]
    states += [(f"t{j}", "a") for j in range(1, t_count + 1)]
    states.append(("x", "b"))
    return chain_from_fractions(states, rows)


def herman(n_processes: int) -> LabelledMarkovChain:
    """Synchronous Herman token ring; single-token configurations are labelled stable.

    Process i holds a token when its bit equals its left neighbour's.
    A token holder draws a fresh fair bit, every other process copies its
    left neighbour.
    """
    if n_processes < 3 or n_processes % 2 == 0:
        raise ValidationError(f"Herman's ring needs an odd number >= 3 of processes, got {n_processes}")
    n_states = 2**n_processes

    def bits(state: int) -> List[int]:
        return [(state >> i) & 1 for i in range(n_processes)]

    states = []
    rows = {}
    for state in range(n_states):
        x = bits(state)
        holders = [x[i] == x[i - 1] for i in range(n_processes)]
        choices = [(0, 1) if holders[i] else (x[i - 1],) for i in range(n_processes)]
        weight = Fraction(1, 2 ** sum(holders))
        row: Dict[str, Fraction] = {}
        for successor in product(*choices):
            target = str(sum(bit << i for i, bit in enumerate(successor)))
            row[target] = row.get(target, Fraction(0)) + weight
        states.append((str(state), "stable" if sum(holders) == 1 else "unstable"))
        rows[str(state)] = row
    return chain_from_fractions(states, rows)


#####################################################
# Brute force
#####################################################


def _label_compatibility(chain: LabelledMarkovChain, eps: float) -> List[List[bool]]:
    # lumped L1 over a coarser partition never exceeds the one over a finer
    # partition, so distance over labels bounds every label-homogeneous block
    labels = label_partition(chain)
    lumped = [lump_row(row, labels.block_of) for row in chain.rows]
    n = chain.n_states
    return [
        [
            chain.labels[u] == chain.labels[v] and l1_distance(lumped[u], lumped[v]) <= 2 * eps + 1e-9
            for v in range(n)
        ]
        for u in range(n)
    ]


def partitions_with_k_blocks(
    n_states: int, k: int, compatible: Optional[List[List[bool]]] = None
) -> Iterator[List[List[int]]]:
    """Restricted-growth enumeration of partitions into exactly k blocks."""
    blocks: List[List[int]] = []

    def extend(state: int) -> Iterator[List[List[int]]]:
        if n_states - state < k - len(blocks):
            return
        if state == n_states:
            yield [list(block) for block in blocks]
            return
        for block in blocks:
            if compatible is None or all(compatible[state][u] for u in block):
                block.append(state)
                yield from extend(state + 1)
                block.pop()
        if len(blocks) < k:
            blocks.append([state])
            yield from extend(state + 1)
            blocks.pop()

    yield from extend(0)


def _is_eps_quotient_partition(chain: LabelledMarkovChain, partition: Partition, eps: float, k: int) -> bool:
    lumped = [lump_row(row, partition.block_of) for row in chain.rows]
    for block in partition.blocks:
        for u, v in combinations(block, 2):
            if l1_distance(lumped[u], lumped[v]) > 2 * eps + 1e-9:
                return False
    rows = list(chain.rows)
    for block in partition.blocks:
        radius, center = chebyshev_center([lumped[u] for u in block])
        if radius > eps + 1e-9:
            return False
        total = sum(center.values())
        center = {b: p / total for b, p in center.items()}
        for u in block:
            rows[u] = adjust_distribution(chain.rows[u], partition, center)
    induced = quotient_wrt(chain.with_rows(rows), partition, tol_exact=1e-7).quotient
    return exact_quotient(induced).quotient.n_states == k


def brute_force_k_quotient(chain: LabelledMarkovChain, eps: float, k: int) -> bool:
    """Does the chain have an eps-quotient with exactly k states?

    Enumerates label-homogeneous partitions into k blocks; a partition
    qualifies when every block's lumped rows fit in an L1 ball of radius
    eps and moving each member to the ball's centre gives a chain whose
    k blocks are pairwise non-bisimilar.

    Raises:
        TooLarge: for chains with more than 12 states
    """
    if chain.n_states > BRUTE_FORCE_LIMIT:
        raise TooLarge(f"brute force is limited to {BRUTE_FORCE_LIMIT} states, chain has {chain.n_states}")
    if not 1 <= k <= chain.n_states:
        return False
    compatible = _label_compatibility(chain, eps)
    checked = 0
    for blocks in partitions_with_k_blocks(chain.n_states, k, compatible):
        checked += 1
        if _is_eps_quotient_partition(chain, Partition.from_blocks(blocks, chain.n_states), eps, k):
            logger.debug(f"found a {k}-state {eps}-quotient after {checked} partitions")
            return True
    logger.debug(f"no {k}-state {eps}-quotient among {checked} partitions")
    return False
