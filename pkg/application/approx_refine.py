# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

"""Approximate partition refinement and the minimisation loop built on it."""

import logging
import math
from typing import Dict, List, Literal, Optional, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

from errors import LabelMismatch, ValidationError, VerificationFailed
from lmc import (
    LabelledMarkovChain,
    Partition,
    SparseDistribution,
    compose_mappings,
    exact_quotient,
    l1_distance,
    lump_row,
    mean_row,
)
from traces import MinimisationTrace, TraceStep
import witness

logger = logging.getLogger("approx_refine")

# slack on the "<= eps2" test so boundary values do not flap between rounds
L1_SLACK = 1e-12


class RefinementConfig(BaseModel):
    """Compression parameter and scan order for approximate refinement."""

    eps2: float = Field(ge=0, description="Per-iteration L1 budget for merging")
    state_order: Union[Literal["input-order"], List[int]] = Field(
        default="input-order",
        description="Scan order over the input chain's states, or input order",
    )
    shuffle_seed: Optional[int] = Field(
        default=None, description="Seed of a random scan order, used when state_order is input-order"
    )

    @field_validator("state_order", mode="before")
    @classmethod
    def validate_state_order(cls, v):
        if v in (None, "input", "input-order"):
            return "input-order"
        if isinstance(v, str):
            raise ValueError(f"unknown state order: {v}")
        order = [int(x) for x in v]
        if sorted(order) != list(range(len(order))):
            raise ValueError("state_order must be a permutation of 0..n-1")
        return order

    @classmethod
    def from_policy(cls, eps2: float, policy: str = "input") -> "RefinementConfig":
        """Config for an order policy: "input", "seed:N" or "file:PATH".

        A file holds the permutation as whitespace- or comma-separated
        state indices.
        """
        try:
            if policy in ("input", "input-order"):
                return cls(eps2=eps2)
            if policy.startswith("seed:"):
                return cls(eps2=eps2, shuffle_seed=int(policy[len("seed:"):]))
            if policy.startswith("file:"):
                path = policy[len("file:"):]
                with open(path) as f:
                    order = [int(x) for x in f.read().replace(",", " ").split()]
                return cls(eps2=eps2, state_order=order)
        except (OSError, ValueError) as e:
            raise ValidationError(f"invalid order policy {policy!r}: {e}") from e
        raise ValidationError(f"unknown order policy: {policy}")

    def scan_order(self, n_states: int) -> List[int]:
        """Order in which states of an n-state chain are scanned."""
        if isinstance(self.state_order, list):
            if len(self.state_order) != n_states:
                raise ValidationError(
                    f"state order has {len(self.state_order)} entries, chain has {n_states} states"
                )
            return list(self.state_order)
        if self.shuffle_seed is not None:
            rng = np.random.default_rng(self.shuffle_seed)
            return [int(s) for s in rng.permutation(n_states)]
        return list(range(n_states))


def refine_in_order(chain: LabelledMarkovChain, eps2: float, order: Sequence[int]) -> Partition:
    """Approximate refinement scanning each block's states in `order`."""
    rank = {s: position for position, s in enumerate(order)}
    if len(rank) != chain.n_states or set(rank) != set(range(chain.n_states)):
        raise ValidationError("scan order must be a permutation of the chain's states")
    limit = eps2 + L1_SLACK
    previous = Partition.single(chain.n_states)
    rounds = 0
    while True:
        rounds += 1
        lumped = [lump_row(row, previous.block_of) for row in chain.rows]
        blocks: List[List[int]] = []
        for block in previous.blocks:
            groups: List[List[int]] = []
            for s in sorted(block, key=rank.__getitem__):
                chosen = None
                chosen_key = None
                for group in groups:
                    if chain.labels[group[0]] != chain.labels[s]:
                        continue
                    distances = [l1_distance(lumped[s], lumped[t]) for t in group]
                    if max(distances) > limit:
                        continue
                    key = (math.fsum(distances) / len(group), min(group))
                    if chosen_key is None or key < chosen_key:
                        chosen, chosen_key = group, key
                if chosen is None:
                    groups.append([s])
                else:
                    chosen.append(s)
            blocks.extend(groups)
        refined = Partition.from_blocks(blocks, chain.n_states).canonical()
        if refined.n_blocks == previous.n_blocks:
            break
        previous = refined
    logger.debug(f"approximate refinement: {previous.n_blocks} blocks after {rounds} rounds")
    return previous


def approx_refine(chain: LabelledMarkovChain, config: RefinementConfig) -> Partition:
    """Partition whose same-block states share a label and have lumped rows within eps2.

    Args:
        chain: the chain to refine
        config: compression parameter and scan order

    Returns:
        Canonical partition of the chain's states
    """
    return refine_in_order(chain, config.eps2, config.scan_order(chain.n_states))


def lump_average(chain: LabelledMarkovChain, partition: Partition) -> LabelledMarkovChain:
    """Chain over blocks whose rows are the mean of the members' lumped rows."""
    labels = []
    rows = []
    names = []
    for block in partition.blocks:
        rep = min(block)
        for u in block:
            if chain.labels[u] != chain.labels[rep]:
                raise LabelMismatch(rep, u, " inside one block")
        labels.append(chain.labels[rep])
        names.append(chain.name(rep))
        rows.append(SparseDistribution(mean_row([lump_row(chain.rows[u], partition.block_of) for u in block])))
    return LabelledMarkovChain(tuple(labels), tuple(rows), tuple(names))


def _induced_order(ranks: Sequence[int], mapping: Sequence[int], n_states: int) -> List[int]:
    best: Dict[int, int] = {}
    for s, q in enumerate(mapping):
        best[q] = min(best.get(q, ranks[s]), ranks[s])
    return sorted(range(n_states), key=best.__getitem__)


def minimise_apr(
    chain: LabelledMarkovChain,
    config: RefinementConfig,
    tol_exact: Optional[float] = None,
    verify: bool = True,
) -> MinimisationTrace:
    """Refine, average and re-quotient until the state count stops shrinking.

    The scan order in `config` refers to the input chain; each
    intermediate quotient scans its states by the earliest input state
    they represent.
    """
    trace = MinimisationTrace("apr", config.eps2, chain, exact_quotient(chain, tol_exact))
    order = config.scan_order(chain.n_states)
    ranks = [0] * chain.n_states
    for position, s in enumerate(order):
        ranks[s] = position
    current = trace.initial.quotient
    cumulative = trace.initial.mapping
    logger.info(f"apr minimisation: {chain.n_states} states, exact quotient {current.n_states}")

    while True:
        scan = _induced_order(ranks, cumulative, current.n_states)
        partition = refine_in_order(current, config.eps2, scan)
        merged = lump_average(current, partition)
        result = exact_quotient(merged, tol_exact)
        if result.quotient.n_states == current.n_states:
            break
        mapping = compose_mappings(partition.block_of, result.mapping)
        proof = witness.apr_witness(current, partition)
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
                partition=partition,
                mapping=mapping,
                certificate=certificate,
            )
        )
        logger.info(
            f"apr iteration {trace.iterations}: {current.n_states} -> {result.quotient.n_states} states"
        )
        current = result.quotient
        cumulative = compose_mappings(cumulative, mapping)

    return trace
