# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

from dataclasses import dataclass, field
from typing import Any, List, Optional, Tuple

from lmc import LabelledMarkovChain, Partition, QuotientResult, compose_mappings


@dataclass(frozen=True)
class TraceStep:
    """One productive iteration Q_i -> Q_{i+1}.

    partition is the partition of Q_i the algorithm merged along, mapping
    sends Q_i states to Q_{i+1} states, certificate proves Q_{i+1} is an
    approximate quotient of Q_i.
    """

    quotient: LabelledMarkovChain
    partition: Partition
    mapping: Tuple[int, ...]
    certificate: Any
    pair: Optional[Tuple[int, int]] = None
    distance: Optional[float] = None

    @property
    def budget(self) -> float:
        return self.certificate.epsilon


@dataclass
class MinimisationTrace:
    algorithm: str
    epsilon2: float
    source: LabelledMarkovChain
    initial: QuotientResult
    steps: List[TraceStep] = field(default_factory=list)

    @property
    def quotients(self) -> List[LabelledMarkovChain]:
        return [self.initial.quotient] + [step.quotient for step in self.steps]

    @property
    def final(self) -> LabelledMarkovChain:
        return self.quotients[-1]

    @property
    def iterations(self) -> int:
        return len(self.steps)

    @property
    def bound(self) -> float:
        return self.iterations * self.epsilon2

    @property
    def merged_pairs(self) -> List[Tuple[int, int]]:
        return [step.pair for step in self.steps if step.pair is not None]

    @property
    def realized_budget(self) -> float:
        return sum(step.budget for step in self.steps)

    def mapping(self) -> Tuple[int, ...]:
        """Map from source states to the states of the final quotient."""
        result = self.initial.mapping
        for step in self.steps:
            result = compose_mappings(result, step.mapping)
        return result

    def sizes(self) -> List[int]:
        return [q.n_states for q in self.quotients]
