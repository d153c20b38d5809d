# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

"""Experiment harness: perturb or sample ground-truth models, minimise, and tabulate.

For every model and seed the table gets three header rows (M, M/~ and
M'/~) followed by one row per (epsilon2, algorithm) cell. Cells run on a
thread pool bounded by `threads` and each gets its own timeout. Rows are
emitted in manifest order whatever order cells finish in.
"""

import logging
import time
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Tuple

import anyio
import pandas as pd
from anyio import to_thread
from pydantic import BaseModel, ConfigDict, Field, field_validator
from tqdm import tqdm

import catalog
import config
from approx_refine import RefinementConfig, minimise_apr
from errors import VerificationFailed
from lmc import LabelledMarkovChain, exact_quotient
from local_distance import minimise_local
from perturb import PerturbModel, SamplingPlan, perturb_chain, sample_chain
from witness import perturbation_certificate, trace_certificate, verify_epsilon_quotient

logger = logging.getLogger("bench")

SCHEMA_VERSION = 1

RESULT_COLUMNS = [
    "model",
    "variant",
    "seed",
    "epsilon2",
    "states",
    "transitions",
    "iterations",
    "wall_time_s",
    "recovered",
    "overmerged",
    "verified",
    "status",
    "error",
]


class ModelEntry(BaseModel):
    model_config = ConfigDict(extra="allow")

    id: str = Field(description="Name used in the result table")
    source: Optional[str] = Field(default=None, description="Catalog name or file; defaults to id")
    params: Dict[str, Any] = Field(default_factory=dict)

    @property
    def name(self) -> str:
        return self.source or self.id


class ExperimentManifest(BaseModel):
    model_config = ConfigDict(extra="allow")

    schema_version: int = SCHEMA_VERSION
    kind: Literal["manifest"] = "manifest"
    models: List[ModelEntry] = Field(default_factory=list)
    epsilon: float = Field(default=1e-4, ge=0, le=1, description="Perturbation size")
    delta: float = Field(default=0.05, gt=0, lt=1, description="Probability of a 2*epsilon shift")
    eps2_grid: List[float] = Field(default_factory=lambda: [1e-5, 1e-4, 1e-3, 1e-2, 1e-1])
    seeds: List[int] = Field(default_factory=lambda: [0])
    algorithm: Literal["local", "apr", "both"] = "apr"
    order: str = Field(default="input", description="input | seed:N | file:PATH")
    mode: Literal["noise", "sample"] = "noise"
    timeout_s: Optional[float] = Field(default=None, gt=0, description="Per-cell timeout")
    verify: bool = True

    @field_validator("eps2_grid")
    @classmethod
    def validate_grid(cls, v):
        if not v:
            raise ValueError("eps2_grid must not be empty")
        if any(e < 0 for e in v):
            raise ValueError("eps2_grid values must be nonnegative")
        return v

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, v):
        if not v:
            raise ValueError("seeds must not be empty")
        if len(set(v)) != len(v):
            raise ValueError("seeds must be distinct")
        return v

    def algorithms(self) -> List[str]:
        return ["local", "apr"] if self.algorithm == "both" else [self.algorithm]


class ResultRow(BaseModel):
    model_config = ConfigDict(extra="allow")

    model: str
    variant: str = Field(description="M, M/~, M'/~, local or apr")
    seed: Optional[int] = None
    epsilon2: Optional[float] = None
    states: Optional[int] = Field(default=None, ge=0)
    transitions: Optional[int] = Field(default=None, ge=0)
    iterations: Optional[int] = Field(default=None, ge=0)
    wall_time_s: Optional[float] = None
    recovered: Optional[bool] = None
    overmerged: Optional[bool] = None
    verified: Optional[bool] = None
    status: Literal["ok", "timeout", "error"] = "ok"
    error: Optional[str] = None


class ResultsDocument(BaseModel):
    model_config = ConfigDict(extra="allow")

    schema_version: int = SCHEMA_VERSION
    kind: Literal["results"] = "results"
    columns: List[str] = Field(default_factory=lambda: list(RESULT_COLUMNS))
    rows: List[ResultRow] = Field(default_factory=list)


@dataclass
class Prepared:
    """Ground truth and its perturbation for one (model, seed)."""

    entry: ModelEntry
    seed: int
    truth: LabelledMarkovChain
    truth_size: int
    perturbed: LabelledMarkovChain


#####################################################
# Cells
#####################################################


def _prepare(entry: ModelEntry, seed: int, manifest: ExperimentManifest) -> Prepared:
    truth, _ = catalog.build_model(entry.name, entry.params, seed)
    truth_size = exact_quotient(truth).quotient.n_states
    if manifest.mode == "sample":
        plan = SamplingPlan.for_chain(truth, manifest.epsilon, manifest.delta)
        perturbed = sample_chain(truth, plan, seed)
    else:
        perturbed = perturb_chain(truth, PerturbModel(epsilon=manifest.epsilon, delta=manifest.delta, seed=seed))
    return Prepared(entry, seed, truth, truth_size, perturbed)


def _header_rows(prepared: Prepared) -> List[ResultRow]:
    quotient = exact_quotient(prepared.truth).quotient
    noisy = exact_quotient(prepared.perturbed).quotient
    common = {"model": prepared.entry.id, "seed": prepared.seed}
    return [
        ResultRow(variant="M", states=prepared.truth.n_states, transitions=prepared.truth.n_transitions, **common),
        ResultRow(variant="M/~", states=quotient.n_states, transitions=quotient.n_transitions, **common),
        ResultRow(
            variant="M'/~",
            states=noisy.n_states,
            transitions=noisy.n_transitions,
            recovered=noisy.n_states == prepared.truth_size,
            overmerged=noisy.n_states < prepared.truth_size,
            **common,
        ),
    ]


def run_cell(prepared: Prepared, algorithm: str, eps2: float, manifest: ExperimentManifest) -> ResultRow:
    """Minimise one perturbed chain and check the end-to-end certificate against the truth."""
    started = time.perf_counter()
    if algorithm == "local":
        trace = minimise_local(prepared.perturbed, eps2, verify=manifest.verify)
    else:
        refinement = RefinementConfig.from_policy(eps2, manifest.order)
        trace = minimise_apr(prepared.perturbed, refinement, verify=manifest.verify)

    verified = None
    if manifest.verify:
        try:
            start = perturbation_certificate(prepared.truth, prepared.perturbed)
            certificate = trace_certificate(trace, start=start)
            verified = verify_epsilon_quotient(certificate).passed
        except VerificationFailed as e:
            logger.error(f"Error verifying {prepared.entry.id} seed {prepared.seed} eps2 {eps2}: {e}")
            verified = False
    elapsed = time.perf_counter() - started

    final = trace.final
    return ResultRow(
        model=prepared.entry.id,
        variant=algorithm,
        seed=prepared.seed,
        epsilon2=eps2,
        states=final.n_states,
        transitions=final.n_transitions,
        iterations=trace.iterations,
        wall_time_s=round(elapsed, 6),
        recovered=final.n_states == prepared.truth_size,
        overmerged=final.n_states < prepared.truth_size,
        verified=verified,
    )


def _failed_row(entry: ModelEntry, seed: int, status: str, error: str, **extra: Any) -> ResultRow:
    return ResultRow(model=entry.id, variant=extra.pop("variant", "M"), seed=seed, status=status, error=error, **extra)


#####################################################
# Harness
#####################################################


async def _run_all(
    prepared: List[Prepared], manifest: ExperimentManifest, threads: int, timeout: float
) -> Dict[Tuple[int, int, int], ResultRow]:
    cells = [
        (p_index, g_index, a_index)
        for p_index in range(len(prepared))
        for g_index in range(len(manifest.eps2_grid))
        for a_index in range(len(manifest.algorithms()))
    ]
    results: Dict[Tuple[int, int, int], ResultRow] = {}
    limiter = anyio.CapacityLimiter(threads)
    progress = tqdm(total=len(cells), desc="bench", unit="cell", disable=None)

    async def run(key: Tuple[int, int, int]) -> None:
        p_index, g_index, a_index = key
        item = prepared[p_index]
        eps2 = manifest.eps2_grid[g_index]
        algorithm = manifest.algorithms()[a_index]
        try:
            with anyio.fail_after(timeout):
                results[key] = await to_thread.run_sync(
                    run_cell, item, algorithm, eps2, manifest, abandon_on_cancel=True, limiter=limiter
                )
        except TimeoutError:
            logger.error(f"Error in {item.entry.id} seed {item.seed} eps2 {eps2}: timed out after {timeout}s")
            results[key] = _failed_row(
                item.entry, item.seed, "timeout", f"timed out after {timeout}s", variant=algorithm, epsilon2=eps2
            )
        except Exception as e:
            logger.error(f"Error in {item.entry.id} seed {item.seed} eps2 {eps2}: {e}")
            results[key] = _failed_row(
                item.entry, item.seed, "error", f"{type(e).__name__}: {e}", variant=algorithm, epsilon2=eps2
            )
        progress.update(1)

    async with anyio.create_task_group() as tg:
        for key in cells:
            tg.start_soon(run, key)
    progress.close()
    return results


def bench_harness(
    manifest: ExperimentManifest, threads: Optional[int] = None, timeout_s: Optional[float] = None
) -> List[ResultRow]:
    """Run every (model, seed, epsilon2, algorithm) cell of a manifest.

    Args:
        manifest: the experiment grid
        threads: worker threads; defaults to settings.threads
        timeout_s: per-cell timeout; defaults to manifest.timeout_s, then settings.cell_timeout_s

    Returns:
        Result rows in manifest order
    """
    settings = config.get_settings()
    threads = threads or settings.threads
    timeout = timeout_s or manifest.timeout_s or settings.cell_timeout_s

    rows_by_model: List[Tuple[List[ResultRow], Optional[int]]] = []
    prepared: List[Prepared] = []
    for entry in manifest.models:
        for seed in manifest.seeds:
            try:
                item = _prepare(entry, seed, manifest)
                rows_by_model.append((_header_rows(item), len(prepared)))
                prepared.append(item)
            except Exception as e:
                logger.error(f"Error preparing {entry.id} seed {seed}: {e}")
                rows_by_model.append(([_failed_row(entry, seed, "error", f"{type(e).__name__}: {e}")], None))

    results = anyio.run(_run_all, prepared, manifest, threads, timeout) if prepared else {}

    rows: List[ResultRow] = []
    n_algorithms = len(manifest.algorithms())
    for header, p_index in rows_by_model:
        rows.extend(header)
        if p_index is None:
            continue
        for g_index in range(len(manifest.eps2_grid)):
            for a_index in range(n_algorithms):
                rows.append(results[(p_index, g_index, a_index)])
    logger.info(f"bench finished: {len(prepared)} model/seed pairs, {len(rows)} rows")
    return rows


def results_frame(rows: List[ResultRow]) -> pd.DataFrame:
    return pd.DataFrame([row.model_dump() for row in rows], columns=RESULT_COLUMNS, dtype=object)


def to_tsv(rows: List[ResultRow]) -> str:
    return results_frame(rows).to_csv(sep="\t", index=False, na_rep="", lineterminator="\n")


def to_json(rows: List[ResultRow]) -> str:
    import formats

    return formats.dumps(ResultsDocument(rows=rows))
