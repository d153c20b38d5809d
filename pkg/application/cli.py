# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

"""Command-line entry point: `python application/cli.py <command> ...`.

Machine output (JSON or TSV) goes to stdout, logs and error JSON to stderr.
Exit codes: 0 ok, 1 unexpected error, 2 verification failed, 3 input or
parse error, 4 schema or validation error, 5 instance too large.
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

from pydantic import ValidationError as PydanticValidationError

import catalog
import config
import formats
from approx_refine import RefinementConfig, minimise_apr
from errors import McminError, ValidationError
from lmc import LabelledMarkovChain, exact_quotient
from local_distance import minimise_local
from perturb import PerturbModel, SamplingPlan, perturb_chain, sample_chain
from witness import EpsQuotientCertificate, perturbation_certificate, trace_certificate, verify_epsilon_quotient

logger = logging.getLogger("cli")

# `gen` names whose variant is picked by a parameter
GEN_ALIASES = {"fig5": ("variant", "fig5{}"), "fig12": ("side", "fig12-{}")}

# values of the shared flags when neither the command nor its subcommand sets them
SHARED_DEFAULTS = {
    "seed": 0,
    "threads": None,
    "format": "json",
    "tol_stochastic": None,
    "tol_exact": None,
    "strict": None,
    "log_level": None,
    "ignore_label": None,
}


class UsageError(ValidationError):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _output(text: str) -> None:
    sys.stdout.write(text)
    sys.stdout.flush()


def load_model(source: str, ignore_labels: Optional[List[str]] = None, seed: int = 0) -> LabelledMarkovChain:
    """Chain from "-" (JSON on stdin), a .json file, a .tra file or prism:<file>, or a catalog name."""
    if source == "-" or source.endswith(".json"):
        chain = formats.read_json(source)
        if not isinstance(chain, LabelledMarkovChain):
            raise ValidationError(f"{source} does not hold a chain")
        return chain
    if source.startswith("prism:") or source.endswith(".tra"):
        tra_path = source[len("prism:"):] if source.startswith("prism:") else source
        lab_path = os.path.splitext(tra_path)[0] + ".lab"
        return formats.read_prism_explicit(
            tra_path, lab_path if os.path.exists(lab_path) else None, ignore=ignore_labels or ()
        )
    chain, _ = catalog.build_model(source, seed=seed)
    return chain


#####################################################
# Subcommands
#####################################################


def cmd_quotient(args) -> int:
    chain = load_model(args.model, args.ignore_label, args.seed)
    result = exact_quotient(chain)
    logger.info(f"exact quotient: {chain.n_states} -> {result.quotient.n_states} states")
    _output(formats.dumps(result))
    return 0


def cmd_minimise(args) -> int:
    chain = load_model(args.model, args.ignore_label, args.seed)
    if args.algo == "local":
        trace = minimise_local(chain, args.eps2)
    else:
        trace = minimise_apr(chain, RefinementConfig.from_policy(args.eps2, args.order))
    certificate = trace_certificate(trace) if args.emit_witnesses else None
    logger.info(
        f"{args.algo}: {chain.n_states} -> {trace.final.n_states} states in {trace.iterations} iterations, "
        f"bound {trace.bound:.6g}"
    )
    _output(formats.dumps(formats.trace_document(trace, args.emit_witnesses, certificate)))
    if args.out_model:
        formats.write_json(trace.final, args.out_model)
    return 0


def cmd_perturb(args) -> int:
    truth = load_model(args.model, args.ignore_label, args.seed)
    if args.mode == "sample":
        plan = SamplingPlan.for_chain(truth, args.eps, args.delta)
        result = sample_chain(truth, plan, args.seed)
    else:
        result = perturb_chain(truth, PerturbModel(epsilon=args.eps, delta=args.delta, seed=args.seed))
    _output(formats.dumps(result))
    if args.certificate:
        formats.write_json(perturbation_certificate(truth, result), args.certificate)
    return 0


def cmd_verify(args) -> int:
    document = formats.read_json(args.certificate)
    if isinstance(document, formats.TraceDocument):
        if document.certificate is None:
            raise ValidationError("trace carries no certificate; rerun minimise with --emit-witnesses")
        document = formats.certificate_from_document(document.certificate)
    if not isinstance(document, EpsQuotientCertificate):
        raise ValidationError(f"{args.certificate} holds no certificate")
    verdict = verify_epsilon_quotient(document)
    for failure in verdict.failures:
        logger.error(f"verify: {failure}")
    _output(json.dumps(verdict.to_dict(), indent=2) + "\n")
    return 0 if verdict.passed else 2


def cmd_gen(args) -> int:
    params = catalog.parse_params(args.params)
    name = args.name
    if name in GEN_ALIASES:
        key, pattern = GEN_ALIASES[name]
        name = pattern.format(params.pop(key, "a" if name == "fig5" else "right"))
    chain, mapping = catalog.build_model(name, params, args.seed)
    if mapping is not None:
        logger.info(f"planted quotient has {len(set(mapping))} states")
    _output(formats.dumps(chain))
    return 0


def cmd_bench(args) -> int:
    import bench

    manifest = formats.read_json(args.manifest)
    if not isinstance(manifest, bench.ExperimentManifest):
        raise ValidationError(f"{args.manifest} holds no manifest")
    rows = bench.bench_harness(manifest, threads=args.threads)
    if args.out:
        with open(f"{args.out}.tsv", "w") as f:
            f.write(bench.to_tsv(rows))
        with open(f"{args.out}.json", "w") as f:
            f.write(bench.to_json(rows))
    _output(bench.to_tsv(rows) if args.format == "tsv" else bench.to_json(rows))
    return 0


#####################################################
# Parser
#####################################################


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="Seed of randomised steps")
    common.add_argument("--threads", type=int, default=argparse.SUPPRESS, help="Worker threads for bench")
    common.add_argument("--format", choices=["json", "tsv"], default=argparse.SUPPRESS)
    common.add_argument("--tol-stochastic", type=float, default=argparse.SUPPRESS)
    common.add_argument("--tol-exact", type=float, default=argparse.SUPPRESS)
    common.add_argument("--strict", action="store_true", default=argparse.SUPPRESS, help="Reject unknown JSON fields")
    common.add_argument("--log-level", default=argparse.SUPPRESS)

    parser = Parser(prog="mcmin", description="Approximate minimisation of labelled Markov chains", parents=[common])
    commands = parser.add_subparsers(dest="command", required=True, parser_class=Parser)

    quotient = commands.add_parser("quotient", parents=[common], help="Exact bisimulation quotient")
    quotient.add_argument("model")
    quotient.set_defaults(handler=cmd_quotient)

    minimise = commands.add_parser("minimise", parents=[common], help="Approximate minimisation")
    minimise.add_argument("model", nargs="?", default="-")
    minimise.add_argument("--algo", choices=["local", "apr"], required=True)
    minimise.add_argument("--eps2", type=float, required=True)
    minimise.add_argument("--order", default="input", help="input | seed:N | file:PATH (apr only)")
    minimise.add_argument("--emit-witnesses", action="store_true")
    minimise.add_argument("--out-model", help="Also write the final chain to this file")
    minimise.set_defaults(handler=cmd_minimise)

    perturb = commands.add_parser("perturb", parents=[common], help="Perturb or sample a chain")
    perturb.add_argument("model", nargs="?", default="-")
    perturb.add_argument("--eps", type=float, required=True)
    perturb.add_argument("--delta", type=float, required=True)
    perturb.add_argument("--mode", choices=["noise", "sample"], default="noise")
    perturb.add_argument("--certificate", help="Write the truth -> perturbed certificate to this file")
    perturb.set_defaults(handler=cmd_perturb)

    verify = commands.add_parser("verify", parents=[common], help="Verify a certificate")
    verify.add_argument("certificate")
    verify.set_defaults(handler=cmd_verify)

    gen = commands.add_parser("gen", parents=[common], help="Generate a catalog model")
    gen.add_argument("name", choices=sorted(set(catalog.list_models()) | set(GEN_ALIASES)))
    gen.add_argument("params", nargs="*", help="key=value parameters")
    gen.set_defaults(handler=cmd_gen)

    bench = commands.add_parser("bench", parents=[common], help="Run an experiment manifest")
    bench.add_argument("manifest")
    bench.add_argument("--out", help="Write <OUT>.tsv and <OUT>.json")
    bench.set_defaults(handler=cmd_bench)

    for sub in (quotient, minimise, perturb):
        sub.add_argument("--ignore-label", action="append", default=[], help="PRISM label to drop")
    return parser


def _report(command: str, error: Exception, code: int) -> int:
    if isinstance(error, McminError):
        payload = error.to_dict()
    else:
        payload = {"error": type(error).__name__, "message": str(error)}
    payload["exit_code"] = code
    logger.error(f"Error in {command}: {error}")
    sys.stderr.write(json.dumps(payload) + "\n")
    return code


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        for key, value in SHARED_DEFAULTS.items():
            if not hasattr(args, key):
                setattr(args, key, value)
        config.reset()
        config.update(
            threads=args.threads,
            tol_stochastic=args.tol_stochastic,
            tol_exact=args.tol_exact,
            strict_json=args.strict,
            log_level=args.log_level,
        )
    except McminError as e:
        return _report("arguments", e, e.exit_code)
    except ValueError as e:
        return _report("arguments", e, 4)
    config.setup_logging()

    try:
        return args.handler(args)
    except McminError as e:
        return _report(args.command, e, e.exit_code)
    except PydanticValidationError as e:
        return _report(args.command, e, 4)
    except Exception as e:
        return _report(args.command, e, 1)


if __name__ == "__main__":
    sys.exit(main())
