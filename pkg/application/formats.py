# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

"""Model ingestion and the versioned JSON documents.

Two input formats are understood: PRISM explicit-state exports (.tra with
an optional .lab) and the native JSON format written by `write_json`.
Every JSON document carries `schema_version` and `kind`. Probabilities
are written as decimal strings with 17 significant digits, so reading a
document back gives bit-identical floats.
"""

import json
import logging
import math
import re
import sys
from collections import defaultdict
from typing import Any, Dict, Iterable, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator
from pydantic import ValidationError as PydanticValidationError

import config
from errors import NonStochasticRow, ParseError, SchemaVersionMismatch, ValidationError
from lmc import Label, LabelledMarkovChain, QuotientResult, SparseDistribution
from traces import MinimisationTrace
from witness import EpsQuotientCertificate, PerturbationWitness

logger = logging.getLogger("formats")

SCHEMA_VERSION = 1
DEFAULT_LABEL = "unlabelled"
LABEL_SEPARATOR = "&"
# row sums closer to 1 than this are kept as they are
RENORMALISE_THRESHOLD = 1e-12

TRA_HEADER = re.compile(r"^\s*(\d+)\s+(\d+)\s*$")
TRA_LINE = re.compile(r"^\s*(\d+)\s+(\d+)\s+(\S+)(?:\s+\S+)?\s*$")
LAB_MARK = re.compile(r"([0-9]+)=\"(.*?)\"")
LAB_LINE = re.compile(r"^\s*([0-9]+)\s*:((?:\s*[0-9]+)*)\s*$")


def fmt(p: float) -> str:
    return format(float(p), ".17g")


def _prob(text: str, where: str) -> float:
    try:
        value = float(text)
    except (TypeError, ValueError):
        raise ValidationError(f"{where}: {text!r} is not a number")
    if math.isnan(value) or math.isinf(value):
        raise ValidationError(f"{where}: {text!r} is not a finite number")
    return value


#####################################################
# PRISM explicit-state exports
#####################################################


def _read_lines(path: str) -> List[str]:
    try:
        with open(path) as f:
            return f.readlines()
    except OSError as e:
        raise ParseError(path, None, f"cannot read file: {e.strerror}")


def _read_tra(path: str) -> Tuple[int, Dict[int, Dict[int, float]]]:
    lines = _read_lines(path)
    if not lines:
        raise ParseError(path, 1, "empty file, expected a header '<states> <transitions>'")
    header = TRA_HEADER.match(lines[0])
    if not header:
        raise ParseError(path, 1, f"expected '<states> <transitions>', got {lines[0].strip()!r}")
    n_states, n_transitions = int(header.group(1)), int(header.group(2))
    if n_states == 0:
        raise ParseError(path, 1, "model has no states")

    rows: Dict[int, Dict[int, float]] = defaultdict(dict)
    seen = 0
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        match = TRA_LINE.match(line)
        if not match:
            raise ParseError(path, number, f"expected '<src> <dst> <prob>', got {line.strip()!r}")
        src, dst = int(match.group(1)), int(match.group(2))
        try:
            p = float(match.group(3))
        except ValueError:
            raise ParseError(path, number, f"{match.group(3)!r} is not a probability")
        if src >= n_states or dst >= n_states:
            raise ParseError(path, number, f"state out of range 0..{n_states - 1}")
        if not 0 <= p <= 1:
            raise ParseError(path, number, f"probability {p!r} outside [0, 1]")
        if dst in rows[src]:
            logger.warning(f"{path}:{number}: duplicate transition {src} -> {dst}, summing")
        rows[src][dst] = rows[src].get(dst, 0.0) + p
        seen += 1
    if seen != n_transitions:
        raise ParseError(path, 1, f"header announces {n_transitions} transitions, found {seen}")
    return n_states, rows


def _read_lab(path: str, n_states: int) -> Dict[int, List[str]]:
    lines = _read_lines(path)
    if not lines:
        raise ParseError(path, 1, "empty label file")
    names = {int(m.group(1)): m.group(2) for m in LAB_MARK.finditer(lines[0])}
    if not names and lines[0].strip():
        raise ParseError(path, 1, f"expected label declarations, got {lines[0].strip()!r}")
    labels: Dict[int, List[str]] = {}
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        match = LAB_LINE.match(line)
        if not match:
            raise ParseError(path, number, f"expected '<state>: <label ids>', got {line.strip()!r}")
        state = int(match.group(1))
        if state >= n_states:
            raise ParseError(path, number, f"state {state} out of range 0..{n_states - 1}")
        ids = [int(x) for x in match.group(2).split()]
        unknown = [i for i in ids if i not in names]
        if unknown:
            raise ParseError(path, number, f"undeclared label ids {unknown}")
        labels[state] = [names[i] for i in sorted(set(ids))]
    return labels


def read_prism_explicit(
    tra_path: str,
    lab_path: Optional[str] = None,
    ignore: Iterable[str] = (),
    tol_stochastic: Optional[float] = None,
) -> LabelledMarkovChain:
    """Read a PRISM explicit-state DTMC export.

    A state with several atomic labels gets one composite label, the
    label names in id order joined by "&". Labels listed in `ignore` are
    dropped first. States without labels get the label "unlabelled".

    Args:
        tra_path: transition file
        lab_path: label file; without it every state is unlabelled
        ignore: atomic label names to drop, e.g. "init"
        tol_stochastic: rows whose sum is off by at most this are renormalised

    Returns:
        The chain

    Raises:
        ParseError: on malformed input, with the offending line number
        NonStochasticRow: if a row sum is off by more than tol_stochastic
    """
    tol = config.tol_stochastic(tol_stochastic)
    n_states, raw_rows = _read_tra(tra_path)
    rows = []
    for s in range(n_states):
        row = raw_rows.get(s, {})
        if not row:
            logger.warning(f"{tra_path}: state {s} has no successors, adding a self-loop")
            row = {s: 1.0}
        total = math.fsum(row.values())
        if abs(total - 1.0) > tol:
            raise NonStochasticRow(s, total)
        if abs(total - 1.0) > RENORMALISE_THRESHOLD:
            logger.warning(f"{tra_path}: row of state {s} sums to {total!r}, renormalising")
            row = {t: p / total for t, p in row.items()}
        rows.append(row)

    atomic = _read_lab(lab_path, n_states) if lab_path else {}
    dropped = set(ignore)
    labels = []
    for s in range(n_states):
        kept = [name for name in atomic.get(s, []) if name not in dropped]
        labels.append(LABEL_SEPARATOR.join(kept) if kept else DEFAULT_LABEL)
    chain = LabelledMarkovChain.build(labels, rows)
    logger.info(
        f"read {tra_path}: {chain.n_states} states, {chain.n_transitions} transitions, "
        f"{len(chain.label_universe())} labels"
    )
    return chain


#####################################################
# JSON documents
#####################################################


class Document(BaseModel):
    model_config = ConfigDict(extra="allow")


class LabelDocument(Document):
    id: int = Field(ge=0)
    name: Optional[str] = None


class StateDocument(Document):
    name: Optional[str] = None
    label: int = Field(ge=0, description="Label id")
    row: Dict[str, str] = Field(description="Successor index -> probability")

    @field_validator("row", mode="before")
    @classmethod
    def validate_row(cls, v):
        if isinstance(v, dict):
            return {str(k): fmt(p) if isinstance(p, (int, float)) else p for k, p in v.items()}
        return v


class ChainDocument(Document):
    schema_version: int = SCHEMA_VERSION
    kind: Literal["chain"] = "chain"
    labels: List[LabelDocument]
    states: List[StateDocument]


class QuotientDocument(Document):
    schema_version: int = SCHEMA_VERSION
    kind: Literal["quotient"] = "quotient"
    mapping: List[int]
    quotient: ChainDocument


class WitnessDocument(Document):
    budget: str
    rows: List[Dict[str, str]]


class CertificateDocument(Document):
    schema_version: int = SCHEMA_VERSION
    kind: Literal["certificate"] = "certificate"
    epsilon: str
    mapping: List[int]
    source: ChainDocument
    target: ChainDocument
    witness: WitnessDocument


class StepDocument(Document):
    pair: Optional[List[int]] = None
    distance: Optional[str] = None
    budget: str
    partition: List[List[int]]
    mapping: List[int]
    quotient: ChainDocument
    certificate: Optional[CertificateDocument] = None


class TraceDocument(Document):
    schema_version: int = SCHEMA_VERSION
    kind: Literal["trace"] = "trace"
    algorithm: str
    epsilon2: str
    iterations: int
    bound: str
    realized_budget: str
    sizes: List[int]
    mapping: List[int] = Field(description="Source state -> final state")
    source: ChainDocument
    initial_mapping: List[int]
    steps: List[StepDocument]
    final: ChainDocument
    certificate: Optional[CertificateDocument] = None


def chain_document(chain: LabelledMarkovChain) -> ChainDocument:
    return ChainDocument(
        labels=[LabelDocument(id=label.id, name=label.name) for label in chain.label_universe()],
        states=[
            StateDocument(
                name=chain.state_names[s] if chain.state_names is not None else None,
                label=chain.labels[s].id,
                row={str(x): fmt(p) for x, p in chain.rows[s].items()},
            )
            for s in range(chain.n_states)
        ],
    )


def _parse_entries(row: Dict[str, str], where: str) -> Dict[int, float]:
    entries = {}
    for key, text in row.items():
        try:
            target = int(key)
        except ValueError:
            raise ValidationError(f"{where}: {key!r} is not a state index")
        entries[target] = _prob(text, f"{where}[{key}]")
    return entries


def _parse_row(row: Dict[str, str], where: str) -> SparseDistribution:
    return SparseDistribution(_parse_entries(row, where))


def chain_from_document(doc: ChainDocument) -> LabelledMarkovChain:
    labels: Dict[int, Label] = {}
    for entry in doc.labels:
        if entry.id in labels:
            raise ValidationError(f"label id {entry.id} declared twice")
        labels[entry.id] = Label(entry.id, entry.name)
    state_labels = []
    rows = []
    for s, state in enumerate(doc.states):
        if state.label not in labels:
            raise ValidationError(f"state {s} carries undeclared label id {state.label}")
        state_labels.append(labels[state.label])
        rows.append(_parse_row(state.row, f"states[{s}].row"))
    names = [state.name for state in doc.states]
    if all(name is None for name in names):
        names = None
    elif any(name is None for name in names):
        raise ValidationError("either every state or no state has a name")
    return LabelledMarkovChain(tuple(state_labels), tuple(rows), names)


def certificate_document(cert: EpsQuotientCertificate) -> CertificateDocument:
    return CertificateDocument(
        epsilon=fmt(cert.epsilon),
        mapping=list(cert.mapping),
        source=chain_document(cert.source),
        target=chain_document(cert.target),
        witness=WitnessDocument(
            budget=fmt(cert.witness.budget),
            rows=[{str(x): fmt(p) for x, p in row.items()} for row in cert.witness.rows],
        ),
    )


def certificate_from_document(doc: CertificateDocument) -> EpsQuotientCertificate:
    source = chain_from_document(doc.source)
    target = chain_from_document(doc.target)
    # witness rows stay plain mappings; verification reports on bad ones
    rows = tuple(_parse_entries(row, f"witness.rows[{s}]") for s, row in enumerate(doc.witness.rows))
    proof = PerturbationWitness(source, rows, _prob(doc.witness.budget, "witness.budget"))
    return EpsQuotientCertificate(
        source, target, tuple(doc.mapping), proof, _prob(doc.epsilon, "epsilon")
    )


def trace_document(
    trace: MinimisationTrace,
    emit_witnesses: bool = False,
    certificate: Optional[EpsQuotientCertificate] = None,
) -> TraceDocument:
    """Trace as a document; step certificates are included with emit_witnesses."""
    steps = []
    for step in trace.steps:
        steps.append(
            StepDocument(
                pair=list(step.pair) if step.pair is not None else None,
                distance=fmt(step.distance) if step.distance is not None else None,
                budget=fmt(step.budget),
                partition=[list(block) for block in step.partition.blocks],
                mapping=list(step.mapping),
                quotient=chain_document(step.quotient),
                certificate=certificate_document(step.certificate) if emit_witnesses else None,
            )
        )
    return TraceDocument(
        algorithm=trace.algorithm,
        epsilon2=fmt(trace.epsilon2),
        iterations=trace.iterations,
        bound=fmt(trace.bound),
        realized_budget=fmt(trace.realized_budget),
        sizes=trace.sizes(),
        mapping=list(trace.mapping()),
        source=chain_document(trace.source),
        initial_mapping=list(trace.initial.mapping),
        steps=steps,
        final=chain_document(trace.final),
        certificate=certificate_document(certificate) if certificate is not None else None,
    )


def quotient_document(result: QuotientResult) -> QuotientDocument:
    return QuotientDocument(mapping=list(result.mapping), quotient=chain_document(result.quotient))


def _unknown_fields(model: BaseModel, path: str = "") -> List[str]:
    found = [f"{path}{key}" for key in (model.model_extra or {})]
    for name in type(model).model_fields:
        value = getattr(model, name)
        if isinstance(value, BaseModel):
            found.extend(_unknown_fields(value, f"{path}{name}."))
        elif isinstance(value, list):
            for i, item in enumerate(value):
                if isinstance(item, BaseModel):
                    found.extend(_unknown_fields(item, f"{path}{name}[{i}]."))
    return found


def _document_types() -> Dict[str, type]:
    import bench

    return {
        "chain": ChainDocument,
        "quotient": QuotientDocument,
        "certificate": CertificateDocument,
        "trace": TraceDocument,
        "manifest": bench.ExperimentManifest,
        "results": bench.ResultsDocument,
    }


def parse_document(data: Any, strict: Optional[bool] = None, origin: str = "<json>") -> BaseModel:
    """Validate decoded JSON into its document model.

    Raises:
        SchemaVersionMismatch: if schema_version is missing or unsupported
        ValidationError: on an unknown kind, a malformed document, or
            unknown fields in strict mode
    """
    strict = config.get_settings().strict_json if strict is None else strict
    if not isinstance(data, dict):
        raise ValidationError(f"{origin}: expected a JSON object")
    version = data.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(version, SCHEMA_VERSION)
    types = _document_types()
    kind = data.get("kind")
    if kind not in types:
        raise ValidationError(f"{origin}: unknown document kind {kind!r}")
    try:
        document = types[kind].model_validate(data)
    except PydanticValidationError as e:
        raise ValidationError(f"{origin}: invalid {kind} document: {e}") from e
    unknown = _unknown_fields(document)
    if unknown:
        if strict:
            raise ValidationError(f"{origin}: unknown fields {unknown}")
        logger.warning(f"{origin}: ignoring unknown fields {unknown}")
    return document


def from_document(document: BaseModel) -> Any:
    """Domain object of a document; traces, manifests and results stay documents."""
    if isinstance(document, ChainDocument):
        return chain_from_document(document)
    if isinstance(document, QuotientDocument):
        return QuotientResult(chain_from_document(document.quotient), tuple(document.mapping))
    if isinstance(document, CertificateDocument):
        return certificate_from_document(document)
    if isinstance(document, TraceDocument):
        return document
    import bench

    if isinstance(document, bench.ResultsDocument):
        return document.rows
    return document


def loads(text: str, strict: Optional[bool] = None, origin: str = "<json>") -> Any:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(origin, e.lineno, e.msg)
    return from_document(parse_document(data, strict, origin))


def read_json(path: str, strict: Optional[bool] = None) -> Any:
    """Read a JSON document from a file, or from stdin for "-".

    Returns:
        LabelledMarkovChain, QuotientResult, EpsQuotientCertificate,
        TraceDocument, ExperimentManifest or a list of ResultRow
    """
    if path == "-":
        return loads(sys.stdin.read(), strict, "<stdin>")
    try:
        with open(path) as f:
            text = f.read()
    except OSError as e:
        raise ParseError(path, None, f"cannot read file: {e.strerror}")
    return loads(text, strict, path)


def to_document(obj: Any) -> BaseModel:
    if isinstance(obj, BaseModel):
        return obj
    if isinstance(obj, LabelledMarkovChain):
        return chain_document(obj)
    if isinstance(obj, QuotientResult):
        return quotient_document(obj)
    if isinstance(obj, EpsQuotientCertificate):
        return certificate_document(obj)
    if isinstance(obj, MinimisationTrace):
        return trace_document(obj)
    if isinstance(obj, (list, tuple)):
        import bench

        return bench.ResultsDocument(rows=list(obj))
    raise ValidationError(f"cannot serialise {type(obj).__name__}")


def dumps(obj: Any) -> str:
    document = to_document(obj)
    return json.dumps(document.model_dump(mode="json", exclude_none=True), indent=2) + "\n"


def write_json(obj: Any, path: Optional[str] = None) -> str:
    """Serialise obj; writes to path unless it is None or "-".

    Returns:
        The JSON text
    """
    text = dumps(obj)
    if path not in (None, "-"):
        with open(path, "w") as f:
            f.write(text)
    return text
