# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

"""Perturbed and sampled versions of a ground-truth chain, plus planted-structure chains.

Randomness: every generator is a PCG64 stream. State s of a chain draws
from child s of `SeedSequence(seed).spawn(n_states)`, so results do not
depend on the order in which rows are processed.
"""

import logging
import math
from typing import List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from errors import ValidationError
from lmc import LabelledMarkovChain, SparseDistribution, exact_quotient, l1_distance

logger = logging.getLogger("perturb")

# accepted relative shortfall of the realized L1 shift after clipping
CLIP_TOLERANCE = 0.01
MAX_REDRAWS = 100


class PerturbModel(BaseModel):
    """Noise envelope: L1 shift at most epsilon, except 2*epsilon with probability delta."""

    epsilon: float = Field(ge=0, le=1, description="L1 bound of the common-case shift")
    delta: float = Field(gt=0, lt=1, description="Probability of a 2*epsilon shift")
    seed: int = Field(default=0, ge=0, lt=2**64, description="64-bit seed")


class SamplingPlan(BaseModel):
    epsilon: float = Field(gt=0, le=1, description="Error parameter")
    delta: float = Field(gt=0, lt=1, description="Error bound")
    counts: List[int] = Field(description="Samples per state")

    @field_validator("counts", mode="before")
    @classmethod
    def validate_counts(cls, v):
        counts = [int(c) for c in v]
        if any(c < 1 for c in counts):
            raise ValueError("every state needs at least one sample")
        return counts

    @classmethod
    def for_chain(cls, chain: LabelledMarkovChain, epsilon: float, delta: float) -> "SamplingPlan":
        """Smallest per-state sample counts meeting the (epsilon, delta) guarantee."""
        return cls(
            epsilon=epsilon,
            delta=delta,
            counts=[sample_size(len(row), epsilon, delta) for row in chain.rows],
        )


def sample_size(support: int, epsilon: float, delta: float) -> int:
    """Samples needed so a row with `support` successors is epsilon-close with prob 1 - delta."""
    if support < 1:
        raise ValidationError(f"support size must be positive, got {support}")
    if not 0 < epsilon <= 1 or not 0 < delta < 1:
        raise ValidationError(f"invalid epsilon/delta: {epsilon}, {delta}")
    return math.ceil(math.log(2 * support / delta) / (2 * epsilon**2))


def state_generators(seed: int, n_states: int) -> List[np.random.Generator]:
    return [np.random.Generator(np.random.PCG64(child)) for child in np.random.SeedSequence(seed).spawn(n_states)]


def sample_chain(truth: LabelledMarkovChain, plan: SamplingPlan, seed: int) -> LabelledMarkovChain:
    """Empirical estimate of every row from plan.counts[s] draws."""
    if len(plan.counts) != truth.n_states:
        raise ValidationError(f"plan covers {len(plan.counts)} of {truth.n_states} states")
    rows = []
    for s, (row, generator) in enumerate(zip(truth.rows, state_generators(seed, truth.n_states))):
        support = row.support()
        probs = np.array([row[x] for x in support])
        draws = generator.multinomial(plan.counts[s], probs / probs.sum())
        rows.append(
            SparseDistribution(
                {x: int(c) / plan.counts[s] for x, c in zip(support, draws) if c > 0}
            )
        )
    logger.info(f"sampled {truth.n_states} rows with {sum(plan.counts)} draws in total")
    return truth.with_rows(rows)


def _shift_row(row: SparseDistribution, target: float, generator: np.random.Generator) -> SparseDistribution:
    support = row.support()
    p = np.array([row[x] for x in support])
    direction = None
    for _ in range(MAX_REDRAWS):
        direction = generator.standard_normal(len(p))
        direction -= direction.mean()
        norm = np.abs(direction).sum()
        if norm == 0:
            continue
        direction /= norm
        shifted = np.clip(p + target * direction, 0.0, None)
        shifted /= shifted.sum()
        realized = float(np.abs(shifted - p).sum())
        if (1 - CLIP_TOLERANCE) * target <= realized <= target + 1e-12:
            return SparseDistribution({x: v for x, v in zip(support, shifted) if v > 0})
    # largest unclipped step along the last direction
    falling = direction < 0
    step = min(target, float(np.min(p[falling] / -direction[falling]))) if falling.any() else 0.0
    shifted = np.clip(p + step * direction, 0.0, None)
    shifted /= shifted.sum()
    logger.warning(f"row could not take an L1 shift of {target:.3g}, used {step:.3g}")
    return SparseDistribution({x: v for x, v in zip(support, shifted) if v > 0})


def perturb_chain(
    truth: LabelledMarkovChain, model: PerturbModel, seed: Optional[int] = None
) -> LabelledMarkovChain:
    """Add support-preserving noise to every row.

    With probability 1 - delta a row moves by an L1 distance drawn
    uniformly from (0, epsilon], otherwise by exactly 2*epsilon. Rows
    with a single successor cannot move.

    Args:
        truth: ground-truth chain
        model: noise envelope
        seed: overrides model.seed

    Returns:
        The perturbed chain, with the truth's states and labels
    """
    seed = model.seed if seed is None else seed
    if model.epsilon == 0:
        return truth
    rows = []
    for row, generator in zip(truth.rows, state_generators(seed, truth.n_states)):
        if len(row) < 2:
            rows.append(row)
            continue
        rare = generator.random() < model.delta
        target = 2 * model.epsilon if rare else model.epsilon * (1.0 - generator.random())
        rows.append(_shift_row(row, target, generator))
    return truth.with_rows(rows)


def row_deviations(truth: LabelledMarkovChain, other: LabelledMarkovChain) -> List[float]:
    return [l1_distance(a, b) for a, b in zip(truth.rows, other.rows)]


def _random_quotient(
    generator: np.random.Generator, m_blocks: int, branching: int, n_labels: int, distinct_labels: bool
) -> LabelledMarkovChain:
    labels = []
    rows = []
    for q in range(m_blocks):
        label = q if distinct_labels else int(generator.integers(0, n_labels))
        labels.append(f"l{label}")
        k = min(branching, m_blocks)
        successors = generator.choice(m_blocks, size=k, replace=False)
        weights = generator.dirichlet(np.ones(k))
        rows.append({int(x): float(w) for x, w in zip(successors, weights)})
    return LabelledMarkovChain.build(labels, rows)


def planted_chain(
    m_blocks: int,
    n_states: int,
    branching: int,
    seed: int,
    n_labels: int = 2,
) -> Tuple[LabelledMarkovChain, Tuple[int, ...]]:
    """Random chain whose exact quotient has exactly m_blocks states.

    A random minimal m-state chain is drawn, each of its states is split
    into a fibre (the first m states cover one fibre each, the rest are
    assigned at random), and each row's mass toward a fibre is spread over
    up to `branching` members of that fibre.

    Returns:
        (chain, mapping from chain states to the planted quotient states)
    """
    if not 1 <= m_blocks <= n_states:
        raise ValidationError(f"need 1 <= m_blocks <= n_states, got {m_blocks}, {n_states}")
    if branching < 1:
        raise ValidationError(f"branching must be positive, got {branching}")
    generator = np.random.Generator(np.random.PCG64(seed))
    quotient = None
    for _ in range(MAX_REDRAWS):
        candidate = _random_quotient(generator, m_blocks, branching, n_labels, distinct_labels=False)
        if exact_quotient(candidate).quotient.n_states == m_blocks:
            quotient = candidate
            break
    if quotient is None:
        logger.warning("no minimal random quotient found, giving every block its own label")
        quotient = _random_quotient(generator, m_blocks, branching, n_labels, distinct_labels=True)

    mapping = list(range(m_blocks)) + [int(q) for q in generator.integers(0, m_blocks, n_states - m_blocks)]
    members: List[List[int]] = [[] for _ in range(m_blocks)]
    for u, q in enumerate(mapping):
        members[q].append(u)

    rows = []
    for u in range(n_states):
        row = {}
        for q, p in quotient.rows[mapping[u]].items():
            fibre = members[q]
            k = min(branching, len(fibre))
            chosen = generator.choice(len(fibre), size=k, replace=False)
            weights = generator.dirichlet(np.ones(k))
            for index, w in zip(chosen, weights):
                x = fibre[int(index)]
                row[x] = row.get(x, 0.0) + p * float(w)
        rows.append(row)
    labels = [quotient.labels[q].key for q in mapping]
    chain = LabelledMarkovChain.build(labels, rows)
    logger.info(f"planted chain: {n_states} states over a {m_blocks}-state quotient")
    return chain, tuple(mapping)
