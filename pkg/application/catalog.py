# Copyright Amazon.com, Inc. or its affiliates. All Rights Reserved.
# SPDX-License-Identifier: MIT-0

"""Registry of the models that `gen` and `bench` can build by name."""

import logging
import os
from typing import Any, Dict, List, Mapping, Optional, Tuple

import fixtures
import perturb
from errors import ValidationError
from lmc import LabelledMarkovChain

logger = logging.getLogger("catalog")

# name -> default parameters
MODELS: Dict[str, Dict[str, Any]] = {
    "fig1": {"eps": 0.1},
    "fig4": {"eps": 0.01},
    "fig5a": {"eps": 0.01},
    "fig5b": {"eps": 0.01},
    "fig5c": {"eps": 0.01},
    "fig7b": {"eps": 0.1},
    "fig8": {},
    "fig12-left": {},
    "fig12-right": {},
    "example5": {"eps": 0.1},
    "subset-sum": {"p": [1, 2, 3], "n": 3},
    "family-m": {"kind": "odd", "n": 2, "eps": 0.01},
    "planted": {"m": 4, "n": 32, "branching": 3, "labels": 2},
    "herman": {"n": 3},
}

PARAM_TYPES = {
    "eps": float,
    "n": int,
    "m": int,
    "branching": int,
    "labels": int,
    "kind": str,
    "p": list,
}


def list_models() -> List[str]:
    return list(MODELS)


def _coerce(name: str, key: str, value: Any) -> Any:
    kind = PARAM_TYPES.get(key)
    try:
        if kind is list:
            if isinstance(value, str):
                return [int(x) for x in value.replace(" ", "").split(",") if x]
            return [int(x) for x in value]
        return kind(value)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"parameter {key}={value!r} of {name} is invalid: {e}") from e


def resolve_params(name: str, params: Optional[Mapping[str, Any]] = None) -> Dict[str, Any]:
    """Model defaults overridden by `params`, coerced to their types.

    Raises:
        ValidationError: for unknown models or parameters
    """
    if name not in MODELS:
        raise ValidationError(f"unknown model: {name} (known: {', '.join(MODELS)})")
    resolved = dict(MODELS[name])
    for key, value in (params or {}).items():
        if key not in resolved:
            raise ValidationError(f"model {name} takes no parameter {key!r}")
        resolved[key] = _coerce(name, key, value)
    return resolved


def parse_params(pairs: List[str]) -> Dict[str, str]:
    """Turn ["eps=0.1", "p=1,2,3"] into a dict."""
    params = {}
    for pair in pairs:
        if "=" not in pair:
            raise ValidationError(f"expected key=value, got {pair!r}")
        key, value = pair.split("=", 1)
        params[key.strip()] = value.strip()
    return params


def _load_file(source: str) -> LabelledMarkovChain:
    import formats

    if source.startswith("prism:"):
        tra_path = source[len("prism:"):]
        lab_path = os.path.splitext(tra_path)[0] + ".lab"
        return formats.read_prism_explicit(tra_path, lab_path if os.path.exists(lab_path) else None)
    document = formats.read_json(source)
    if not isinstance(document, LabelledMarkovChain):
        raise ValidationError(f"{source} does not hold a chain")
    return document


def build_model(
    name: str, params: Optional[Mapping[str, Any]] = None, seed: int = 0
) -> Tuple[LabelledMarkovChain, Optional[Tuple[int, ...]]]:
    """Build a model by name.

    Args:
        name: a catalog name, `prism:<file.tra>` or a path to a chain JSON file
        params: parameter overrides
        seed: seed of randomised models

    Returns:
        (chain, ground-truth mapping when the model plants one, else None)
    """
    if name.startswith("prism:") or name.endswith(".json"):
        return _load_file(name), None

    p = resolve_params(name, params)
    if name == "fig1":
        return fixtures.fig1(p["eps"]), None
    elif name == "fig4":
        return fixtures.fig4(p["eps"]), None
    elif name in ("fig5a", "fig5b", "fig5c"):
        return fixtures.fig5(p["eps"], name[-1]), None
    elif name == "fig7b":
        return fixtures.fig7b(p["eps"]), None
    elif name == "fig8":
        return fixtures.fig8(), None
    elif name in ("fig12-left", "fig12-right"):
        return fixtures.fig12(name.split("-", 1)[1]), None
    elif name == "example5":
        return fixtures.example5(p["eps"]), None
    elif name == "subset-sum":
        chain, _, _ = fixtures.subset_sum_chain(p["p"], p["n"])
        return chain, None
    elif name == "family-m":
        return fixtures.family_m(p["kind"], p["n"], p["eps"]), None
    elif name == "planted":
        chain, mapping = perturb.planted_chain(
            p["m"], p["n"], p["branching"], seed, n_labels=p["labels"]
        )
        return chain, mapping
    elif name == "herman":
        return fixtures.herman(p["n"]), None

    raise ValidationError(f"unknown model: {name}")
