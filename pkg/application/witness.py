# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

"""Perturbation witnesses and certificates for approximate quotients.

A certificate claims that `target` is an epsilon-quotient of `source`:
there is an alternative transition function (the witness rows), each
row within L1 distance epsilon of the source row, under which the
fibres of `mapping` are bisimulation classes whose lumped chain is
`target`. Certificates compose: an e1-quotient of an e2-quotient is an
(e1 + e2)-quotient.
"""

import logging
import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import linprog

import config
from config import BUDGET_SLACK
from errors import ChainMismatch, LabelMismatch, McminError, NotADistribution, VerificationFailed
from lmc import (
    NEGATIVE_NOISE,
    LabelledMarkovChain,
    Partition,
    SparseDistribution,
    bisimulation_partition,
    chains_close,
    compose_mappings,
    direct_sum,
    exact_quotient,
    l1_distance,
    lump_row,
    mean_row,
    quotient_wrt,
)
from local_distance import LocalDistanceReport, local_distance

logger = logging.getLogger("witness")


def row_problems(row: Mapping[int, float], n_states: int, tol_stochastic: Optional[float] = None) -> List[str]:
    """Problems of an untrusted witness row, empty when it is a distribution over 0..n_states-1."""
    found = []
    bad = [x for x, p in row.items() if math.isnan(p) or p < -NEGATIVE_NOISE]
    if bad:
        found.append(f"entries {bad} are negative or NaN")
    outside = [x for x in row if x < 0 or x >= n_states]
    if outside:
        found.append(f"moves to unknown states {outside}")
    total = math.fsum(p for _, p in row.items())
    if not abs(total - 1.0) <= config.tol_stochastic(tol_stochastic):
        found.append(f"distribution mass {total!r} differs from 1")
    return found


def as_distribution(row: Mapping[int, float]) -> SparseDistribution:
    return row if isinstance(row, SparseDistribution) else SparseDistribution(row)


@dataclass(frozen=True)
class PerturbationWitness:
    """Alternative rows for `base`. Rows read from files may be plain mappings."""

    base: LabelledMarkovChain
    rows: Tuple[Mapping[int, float], ...]
    budget: float

    @classmethod
    def identity(cls, chain: LabelledMarkovChain) -> "PerturbationWitness":
        return cls(chain, chain.rows, 0.0)

    def deviations(self) -> Tuple[float, ...]:
        return tuple(l1_distance(new, old) for new, old in zip(self.rows, self.base.rows))

    def realized_budget(self) -> float:
        return max(self.deviations(), default=0.0)

    def problems(self, tol_stochastic: Optional[float] = None) -> List[str]:
        found = []
        if len(self.rows) != self.base.n_states:
            return [f"witness has {len(self.rows)} rows for {self.base.n_states} states"]
        for s, (row, deviation) in enumerate(zip(self.rows, self.deviations())):
            for problem in row_problems(row, self.base.n_states, tol_stochastic):
                found.append(f"witness row {s}: {problem}")
            if deviation > self.budget + BUDGET_SLACK:
                found.append(f"witness row {s} deviates by {deviation:.6g} > budget {self.budget:.6g}")
        return found

    def as_chain(self) -> LabelledMarkovChain:
        return self.base.with_rows(as_distribution(row) for row in self.rows)


@dataclass(frozen=True)
class EpsQuotientCertificate:
    source: LabelledMarkovChain
    target: LabelledMarkovChain
    mapping: Tuple[int, ...]
    witness: PerturbationWitness
    epsilon: float

    @classmethod
    def exact(cls, chain: LabelledMarkovChain, tol_exact: Optional[float] = None) -> "EpsQuotientCertificate":
        """Zero-budget certificate for the exact quotient of `chain`."""
        result = exact_quotient(chain, tol_exact)
        return cls(chain, result.quotient, result.mapping, PerturbationWitness.identity(chain), 0.0)


@dataclass(frozen=True)
class Verdict:
    passed: bool
    failures: Tuple[str, ...]
    realized_budget: float
    deviations: Tuple[float, ...]

    def to_dict(self) -> Dict[str, Any]:
        worst = max(range(len(self.deviations)), key=self.deviations.__getitem__, default=None)
        return {
            "passed": self.passed,
            "failures": list(self.failures),
            "realized_budget": self.realized_budget,
            "worst_state": worst,
        }


#####################################################
# Distribution adjustment
#####################################################


def adjust_distribution(
    mu: Mapping[int, float],
    partition: Partition,
    gamma: Mapping[int, float],
    tol_stochastic: Optional[float] = None,
) -> SparseDistribution:
    """Closest distribution to mu whose block masses are gamma.

    Blocks that must gain mass get the deficit on their lowest-index
    state; blocks that must lose mass are drained in ascending state
    index. The L1 distance to mu equals the L1 distance of the lumped
    masses to gamma.

    Args:
        mu: distribution over the partition's states
        partition: the blocks
        gamma: target distribution over block indices

    Returns:
        The adjusted distribution

    Raises:
        NotADistribution: if gamma is not a distribution over the blocks
    """
    gamma = dict(gamma.items())
    for block, p in gamma.items():
        if block < 0 or block >= partition.n_blocks:
            raise NotADistribution(f"gamma puts mass on unknown block {block}")
        if p < 0 or math.isnan(p):
            raise NotADistribution(f"gamma has invalid entry {p!r} on block {block}")
    total = math.fsum(gamma.values())
    if abs(total - 1.0) > config.tol_stochastic(tol_stochastic):
        raise NotADistribution(f"gamma has mass {total!r}")

    adjusted: Dict[int, float] = dict(mu.items())
    block_mass = lump_row(adjusted, partition.block_of)
    members: Dict[int, List[int]] = defaultdict(list)
    for x in sorted(adjusted):
        members[partition.block_of[x]].append(x)

    for block in sorted(block_mass.keys() | gamma.keys()):
        excess = block_mass.get(block, 0.0) - gamma.get(block, 0.0)
        if excess < 0:
            x = partition.blocks[block][0]
            adjusted[x] = adjusted.get(x, 0.0) - excess
        elif excess > 0:
            for x in members[block]:
                taken = min(adjusted[x], excess)
                adjusted[x] -= taken
                excess -= taken
                if excess <= 0:
                    break
    return SparseDistribution(adjusted)


#####################################################
# Witness construction
#####################################################


def local_merge_witness(
    chain: LabelledMarkovChain,
    s: int,
    t: int,
    tol_exact: Optional[float] = None,
    report: Optional[LocalDistanceReport] = None,
) -> PerturbationWitness:
    """Move only s and t to the midpoint of their lumped rows."""
    if report is None:
        report = local_distance(chain, s, t, tol_exact)
    partition = report.partition
    lumped_s = lump_row(chain.rows[s], partition.block_of)
    lumped_t = lump_row(chain.rows[t], partition.block_of)
    midpoint = mean_row([lumped_s, lumped_t])
    rows = list(chain.rows)
    rows[s] = adjust_distribution(chain.rows[s], partition, midpoint)
    rows[t] = adjust_distribution(chain.rows[t], partition, midpoint)
    return PerturbationWitness(chain, tuple(rows), report.distance)


def apr_witness(chain: LabelledMarkovChain, partition: Partition) -> PerturbationWitness:
    """Move every state to the average lumped row of its block."""
    rows: List[Optional[SparseDistribution]] = [None] * chain.n_states
    for block in partition.blocks:
        rep = block[0]
        lumped = []
        for u in block:
            if chain.labels[u] != chain.labels[rep]:
                raise LabelMismatch(rep, u, " inside one block")
            lumped.append(lump_row(chain.rows[u], partition.block_of))
        average = mean_row(lumped)
        for u in block:
            rows[u] = adjust_distribution(chain.rows[u], partition, average)
    proof = PerturbationWitness(chain, tuple(rows), 0.0)
    return PerturbationWitness(chain, proof.rows, proof.realized_budget())


def perturbation_certificate(
    truth: LabelledMarkovChain,
    perturbed: LabelledMarkovChain,
    tol_exact: Optional[float] = None,
) -> EpsQuotientCertificate:
    """Certificate truth -> exact quotient of `perturbed`, budget = worst row deviation."""
    if truth.n_states != perturbed.n_states or any(
        a.key != b.key for a, b in zip(truth.labels, perturbed.labels)
    ):
        raise ChainMismatch("perturbed chain does not share states and labels with the truth")
    proof = PerturbationWitness(truth, perturbed.rows, 0.0)
    proof = PerturbationWitness(truth, perturbed.rows, proof.realized_budget())
    result = exact_quotient(perturbed, tol_exact)
    return EpsQuotientCertificate(truth, result.quotient, result.mapping, proof, proof.budget)


#####################################################
# Composition and verification
#####################################################


def compose_witnesses(
    c1: EpsQuotientCertificate,
    c2: EpsQuotientCertificate,
    tol_exact: Optional[float] = None,
    verify: bool = True,
) -> EpsQuotientCertificate:
    """Chain two certificates M1 -> M2 -> M3 into one M1 -> M3.

    Each witness row of M1 is adjusted, over the fibres of c1's mapping,
    toward the c2 witness row of its image.

    Raises:
        ChainMismatch: if c2's source is not c1's target
        VerificationFailed: if the composed certificate does not verify
    """
    if c2.source is not c1.target and not chains_close(c2.source, c1.target, tol_exact):
        raise ChainMismatch("second certificate does not start where the first one ends")
    fibres = Partition.from_block_of(c1.mapping)
    rows = tuple(
        adjust_distribution(c1.witness.rows[x], fibres, c2.witness.rows[c1.mapping[x]])
        for x in range(c1.source.n_states)
    )
    epsilon = c1.epsilon + c2.epsilon
    composed = EpsQuotientCertificate(
        source=c1.source,
        target=c2.target,
        mapping=compose_mappings(c1.mapping, c2.mapping),
        witness=PerturbationWitness(c1.source, rows, epsilon),
        epsilon=epsilon,
    )
    if verify:
        verdict = verify_epsilon_quotient(composed, tol_exact=tol_exact)
        if not verdict.passed:
            logger.error(f"Error composing certificates: {verdict.failures[:3]}")
            raise VerificationFailed(verdict)
    return composed


def trace_certificate(
    trace: Any,
    start: Optional[EpsQuotientCertificate] = None,
    tol_exact: Optional[float] = None,
    verify: bool = True,
) -> EpsQuotientCertificate:
    """Compose a minimisation trace into one certificate ending at its final chain.

    Args:
        trace: a MinimisationTrace
        start: certificate ending at the trace's first quotient; defaults
            to the zero-budget certificate from the trace's input chain
        tol_exact: equality tolerance
        verify: verify every composed certificate

    Returns:
        Certificate from start's source to the final quotient
    """
    certificate = start
    if certificate is None:
        certificate = EpsQuotientCertificate(
            trace.source,
            trace.initial.quotient,
            trace.initial.mapping,
            PerturbationWitness.identity(trace.source),
            0.0,
        )
    for step in trace.steps:
        certificate = compose_witnesses(certificate, step.certificate, tol_exact, verify)
    return certificate


def verify_epsilon_quotient(
    cert: EpsQuotientCertificate,
    tol_exact: Optional[float] = None,
    tol_stochastic: Optional[float] = None,
) -> Verdict:
    """Check a certificate from scratch.

    Checks per-row budgets, lumpability of the mapping's fibres under the
    witness, bisimilarity of the lumped chain with the target, and
    minimality of the target.

    Returns:
        Verdict with all failures found
    """
    failures: List[str] = []
    source, target, proof = cert.source, cert.target, cert.witness
    n = source.n_states

    if proof.base is not source and not chains_close(proof.base, source, tol_exact):
        failures.append("witness is based on a different chain than the certificate source")
    if len(proof.rows) != n:
        failures.append(f"witness has {len(proof.rows)} rows for {n} states")
        return Verdict(False, tuple(failures), math.inf, ())
    if len(cert.mapping) != n:
        failures.append(f"mapping covers {len(cert.mapping)} of {n} states")
        return Verdict(False, tuple(failures), math.inf, ())
    if any(q < 0 or q >= target.n_states for q in cert.mapping):
        failures.append("mapping sends states outside the target")
    elif set(cert.mapping) != set(range(target.n_states)):
        failures.append("mapping is not surjective")
    if not cert.epsilon >= 0:
        failures.append(f"epsilon {cert.epsilon!r} is negative")

    deviations = tuple(l1_distance(new, old) for new, old in zip(proof.rows, source.rows))
    realized = max(deviations, default=0.0)
    for s, deviation in enumerate(deviations):
        if deviation > cert.epsilon + BUDGET_SLACK:
            failures.append(f"state {s} deviates by {deviation:.6g} > epsilon {cert.epsilon:.6g}")
        for problem in row_problems(proof.rows[s], n, tol_stochastic):
            failures.append(f"witness row {s}: {problem}")
    if failures:
        return Verdict(False, tuple(failures), realized, deviations)

    try:
        perturbed = source.with_rows(as_distribution(row) for row in proof.rows)
        lumped = quotient_wrt(perturbed, Partition.from_block_of(cert.mapping), tol_exact).quotient
    except McminError as e:
        failures.append(f"fibres are not lumpable under the witness: {e}")
        return Verdict(False, tuple(failures), realized, deviations)

    summed, offset = direct_sum(lumped, target)
    classes = bisimulation_partition(summed, tol_exact)
    for q in range(target.n_states):
        if not classes.same_block(q, offset + q):
            failures.append(f"lumped state {q} is not bisimilar to target state {q}")
    if exact_quotient(target, tol_exact).quotient.n_states != target.n_states:
        failures.append("target has bisimilar states")

    return Verdict(not failures, tuple(failures), realized, deviations)


#####################################################
# Minimal budget of a partition
#####################################################


def chebyshev_center(rows: Sequence[Mapping[int, float]]) -> Tuple[float, Dict[int, float]]:
    """Distribution minimising the largest L1 distance to `rows`.

    Returns:
        (radius, center)
    """
    if len(rows) == 1:
        return 0.0, dict(rows[0].items())
    if len(rows) == 2:
        return 0.5 * l1_distance(rows[0], rows[1]), mean_row(rows)

    coords = sorted(set().union(*(row.keys() for row in rows)))
    m, q = len(rows), len(coords)
    # variables: center c (q), radius t (1), |r_u - c| bounds d (m*q)
    n_vars = q + 1 + m * q
    objective = np.zeros(n_vars)
    objective[q] = 1.0
    a_ub = []
    b_ub = []
    for u, row in enumerate(rows):
        for j, coord in enumerate(coords):
            d_index = q + 1 + u * q + j
            r = row.get(coord, 0.0)
            above = np.zeros(n_vars)
            above[j] = -1.0
            above[d_index] = -1.0
            a_ub.append(above)
            b_ub.append(-r)
            below = np.zeros(n_vars)
            below[j] = 1.0
            below[d_index] = -1.0
            a_ub.append(below)
            b_ub.append(r)
        total = np.zeros(n_vars)
        total[q + 1 + u * q : q + 1 + (u + 1) * q] = 1.0
        total[q] = -1.0
        a_ub.append(total)
        b_ub.append(0.0)
    a_eq = np.zeros((1, n_vars))
    a_eq[0, :q] = 1.0
    bounds = [(0.0, 1.0)] * q + [(0.0, None)] + [(0.0, None)] * (m * q)
    result = linprog(
        objective,
        A_ub=np.array(a_ub),
        b_ub=np.array(b_ub),
        A_eq=a_eq,
        b_eq=np.array([1.0]),
        bounds=bounds,
        method="highs",
    )
    if result.status != 0:
        logger.error(f"Error solving Chebyshev radius program: {result.message}")
        raise McminError(f"linear program failed: {result.message}")
    center = {coord: float(result.x[j]) for j, coord in enumerate(coords) if result.x[j] > 0}
    return float(result.fun), center


def min_epsilon_for_partition(chain: LabelledMarkovChain, partition: Partition) -> float:
    """Smallest uniform per-row budget that makes `partition` lumpable.

    Returns +inf if a block mixes labels.
    """
    worst = 0.0
    for block in partition.blocks:
        if len(block) == 1:
            continue
        if len({chain.labels[u] for u in block}) > 1:
            return math.inf
        rows = [lump_row(chain.rows[u], partition.block_of) for u in block]
        radius, _ = chebyshev_center(rows)
        worst = max(worst, radius)
    return worst
