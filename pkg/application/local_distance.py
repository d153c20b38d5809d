# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

"""Local bisimilarity distance and greedy pairwise merging."""

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Iterator, List, Optional, Tuple

import config
from errors import LabelMismatch, NotLumpable, SameState, ValidationError, VerificationFailed
from lmc import (
    Label,
    LabelledMarkovChain,
    Partition,
    SparseDistribution,
    bisimulation_partition,
    compose_mappings,
    exact_quotient,
    l1_distance,
    lump_row,
    max_abs_diff,
    mean_row,
)
from traces import MinimisationTrace, TraceStep

logger = logging.getLogger("local_distance")

# slack on "d_local <= eps2" so that exact-boundary distances still qualify
DISTANCE_SLACK = 1e-12


@dataclass(frozen=True)
class LocalDistanceReport:
    pair: Tuple[int, int]
    partition: Partition
    distance: float


def _check_pair(chain: LabelledMarkovChain, s: int, t: int) -> None:
    for state in (s, t):
        if state < 0 or state >= chain.n_states:
            raise ValidationError(f"unknown state {state}")
    if s == t:
        raise SameState(s)
    if chain.labels[s] != chain.labels[t]:
        raise LabelMismatch(s, t)


def local_partition(
    chain: LabelledMarkovChain, s: int, t: int, tol_exact: Optional[float] = None
) -> Partition:
    """Bisimulation classes after isolating s and t.

    s and t get a fresh label and become absorbing; the bisimulation
    partition of that modified chain is returned. s and t always share
    a block of it.

    Args:
        chain: the chain
        s: first state
        t: second state, distinct from s and with the same label
        tol_exact: equality tolerance for lumped rows

    Returns:
        Canonical partition of the chain's states

    Raises:
        SameState: if s == t
        LabelMismatch: if s and t carry different labels
    """
    _check_pair(chain, s, t)
    fresh = Label(max(label.id for label in chain.labels) + 1)
    labels = list(chain.labels)
    rows = list(chain.rows)
    for state in (s, t):
        labels[state] = fresh
        rows[state] = SparseDistribution.point(state)
    modified = LabelledMarkovChain(tuple(labels), tuple(rows), chain.state_names)
    partition = bisimulation_partition(modified, tol_exact)
    if not partition.same_block(s, t):
        # both absorbing with the same label, so this means the refinement is broken
        raise NotLumpable(partition.block_of[s], s, t, float("nan"))
    return partition


def local_distance(
    chain: LabelledMarkovChain, s: int, t: int, tol_exact: Optional[float] = None
) -> LocalDistanceReport:
    """Half the L1 gap of the lumped rows of s and t over their local partition."""
    partition = local_partition(chain, s, t, tol_exact)
    lumped_s = lump_row(chain.rows[s], partition.block_of)
    lumped_t = lump_row(chain.rows[t], partition.block_of)
    distance = min(1.0, 0.5 * l1_distance(lumped_s, lumped_t))
    return LocalDistanceReport((s, t), partition, distance)


def merge_pair(
    chain: LabelledMarkovChain,
    s: int,
    t: int,
    partition: Partition,
    tol_exact: Optional[float] = None,
) -> LabelledMarkovChain:
    """Chain over the blocks of the local partition with s and t averaged.

    Raises:
        NotLumpable: if a block other than {s, t} has members whose lumped
            rows disagree beyond tol_exact
    """
    _check_pair(chain, s, t)
    tol = config.tol_exact(tol_exact)
    if not partition.same_block(s, t):
        raise ValidationError(f"states {s} and {t} are not in one block of the partition")
    merged_block = partition.block_of[s]
    labels = []
    rows = []
    names = []
    for index, block in enumerate(partition.blocks):
        rep = min(block)
        labels.append(chain.labels[rep])
        names.append(chain.name(rep))
        if index == merged_block:
            rows.append(
                mean_row(
                    [lump_row(chain.rows[s], partition.block_of), lump_row(chain.rows[t], partition.block_of)]
                )
            )
            continue
        rep_row = lump_row(chain.rows[rep], partition.block_of)
        for u in block[1:]:
            deviation = max_abs_diff(rep_row, lump_row(chain.rows[u], partition.block_of))
            if deviation > tol:
                raise NotLumpable(index, rep, u, deviation)
        rows.append(rep_row)
    return LabelledMarkovChain(
        tuple(labels), tuple(SparseDistribution(row) for row in rows), tuple(names)
    )


def same_label_pairs(chain: LabelledMarkovChain) -> Iterator[Tuple[int, int]]:
    for s, t in combinations(range(chain.n_states), 2):
        if chain.labels[s] == chain.labels[t]:
            yield s, t


def closest_pair(
    chain: LabelledMarkovChain, eps2: float, tol_exact: Optional[float] = None
) -> Optional[LocalDistanceReport]:
    """Lexicographically first pair of minimal local distance, if within eps2."""
    best: Optional[LocalDistanceReport] = None
    for s, t in same_label_pairs(chain):
        report = local_distance(chain, s, t, tol_exact)
        if report.distance > eps2 + DISTANCE_SLACK:
            continue
        if best is None or report.distance < best.distance:
            best = report
    return best


def minimise_local(
    chain: LabelledMarkovChain,
    eps2: float,
    tol_exact: Optional[float] = None,
    verify: bool = True,
) -> MinimisationTrace:
    """Greedily merge the closest pair of states until none is within eps2.

    Args:
        chain: input chain
        eps2: per-iteration budget (compression parameter)
        tol_exact: equality tolerance for the exact quotients
        verify: check every step certificate before accepting it

    Returns:
        Trace from the exact quotient of `chain` to the final chain
    """
    import witness

    if eps2 < 0:
        raise ValidationError(f"eps2 must be nonnegative, got {eps2}")
    trace = MinimisationTrace("local", eps2, chain, exact_quotient(chain, tol_exact))
    current = trace.initial.quotient
    logger.info(f"local minimisation: {chain.n_states} states, exact quotient {current.n_states}")

    while True:
        report = closest_pair(current, eps2, tol_exact)
        if report is None:
            break
        s, t = report.pair
        merged = merge_pair(current, s, t, report.partition, tol_exact)
        result = exact_quotient(merged, tol_exact)
        mapping = compose_mappings(report.partition.block_of, result.mapping)
        proof = witness.local_merge_witness(current, s, t, tol_exact=tol_exact, report=report)
        certificate = witness.EpsQuotientCertificate(
            source=current,
            target=result.quotient,
            mapping=mapping,
            witness=proof,
            epsilon=proof.budget,
        )
        if verify:
            verdict = witness.verify_epsilon_quotient(certificate, tol_exact=tol_exact)
            if not verdict.passed:
                raise VerificationFailed(verdict)
        trace.steps.append(
            TraceStep(
                quotient=result.quotient,
                partition=report.partition,
                mapping=mapping,
                certificate=certificate,
                pair=(s, t),
                distance=report.distance,
            )
        )
        logger.info(
            f"merged ({current.name(s)}, {current.name(t)}) at distance {report.distance:.6g}: "
            f"{current.n_states} -> {result.quotient.n_states} states"
        )
        current = result.quotient

    return trace


def all_distances(chain: LabelledMarkovChain, tol_exact: Optional[float] = None) -> List[LocalDistanceReport]:
    return [local_distance(chain, s, t, tol_exact) for s, t in same_label_pairs(chain)]
