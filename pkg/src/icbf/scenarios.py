"""Scenario configuration: JSON schema, loading/validation and the built-in scenarios.

A scenario is one JSON document::

    {
      "schema_version": 1,
      "name": "bearing-localize-analytic",
      "model": "bearing",
      "beacons": [[0, 5.77], [-5, -2.89], [5, -2.89]],
      "barrier": {"lambda_s": 0.01, "mode": "localize", "method": "analytic",
                  "kappa": 1000, "delta": 1e-6, "delta_cross": 0.01,
                  "alpha_gain": 500, "alpha_gain_cross": 10},
      "filter": {"c": 100},
      "nls": {"step": 1.0, "max_iters": 500, "grad_tol": 1e-10, "warm_start": true},
      "lqr": {"q": [1, 1, 1, 1], "r": [1, 1]},
      "x0": [px, py, vx, vy], "goal": [px, py, vx, vy],
      "dt": 0.001, "t_final": 10.0, "noise_std": null, "seed": 0
    }
"""

import copy
import hashlib
import json
import re
from pathlib import Path

import jsonschema
import numpy as np

from .barrier import BarrierConfig
from .control import FilterConfig
from .errors import ConfigError, IcbfError
from .measurements import BeaconSet
from .nls import DEFAULT_STEP, NlsOptions
from .sim import ScenarioConfig, State

SCHEMA_VERSION = 1

_pos = {"type": "number", "exclusiveMinimum": 0}
_vec4 = {"type": "array", "items": {"type": "number"}, "minItems": 4, "maxItems": 4}

SCHEMA = {
    "type": "object",
    "required": ["name", "model", "beacons", "barrier", "x0", "goal"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "name": {"type": "string", "minLength": 1},
        "description": {"type": "string"},
        "model": {"enum": ["range", "bearing"]},
        "beacons": {
            "type": "array", "minItems": 1, "maxItems": 8,
            "items": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        },
        "barrier": {
            "type": "object",
            "required": ["lambda_s", "mode", "method"],
            "additionalProperties": False,
            "properties": {
                "lambda_s": _pos, "kappa": _pos, "delta": _pos, "delta_cross": _pos,
                "alpha_gain": _pos, "alpha_gain_cross": _pos, "simple_tol": _pos, "hess_step": _pos,
                "mode": {"enum": ["localize", "avoid"]},
                "method": {"enum": ["analytic", "anticrossing"]},
                "hess_method": {"enum": ["fd", "analytic"]},
            },
        },
        "filter": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"c": _pos, "u_max": {"type": ["number", "null"], "exclusiveMinimum": 0},
                           "lgh_eps": _pos},
        },
        "nls": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"step": _pos, "max_iters": {"type": "integer", "minimum": 1},
                           "grad_tol": _pos, "warm_start": {"type": "boolean"},
                           "line_search": {"type": "boolean"}},
        },
        "lqr": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "q": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 4, "maxItems": 4},
                "r": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
            },
        },
        "x0": _vec4,
        "goal": _vec4,
        "dt": _pos,
        "t_final": _pos,
        "noise_std": {"type": ["number", "null"], "minimum": 0},
        "seed": {"type": "integer"},
        "evaluate_at": {"enum": ["estimate", "truth"]},
        "violation_tol": _pos,
    },
}

# Three beacons on an equilateral triangle of side 10 m centred at the origin.
TRIANGLE = [[round(float(x), 12) for x in row] for row in BeaconSet.equilateral(10.0).positions]

# Filter parameters per (measurement model, mode, method).
_PARAMS = {
    ("range", "localize", "analytic"): dict(alpha_gain=10.0, delta=0.01, c=1.0, kappa=1.0),
    ("range", "localize", "anticrossing"): dict(alpha_gain=10.0, alpha_gain_cross=100.0, delta=0.01,
                                                delta_cross=0.01),
    ("range", "avoid", "analytic"): dict(alpha_gain=0.1, delta=0.01, c=10.0, kappa=10.0),
    ("range", "avoid", "anticrossing"): dict(alpha_gain=0.1, alpha_gain_cross=500.0, delta=0.01,
                                             delta_cross=0.01),
    ("bearing", "localize", "analytic"): dict(alpha_gain=500.0, delta=1e-6, c=100.0, kappa=1000.0),
    ("bearing", "localize", "anticrossing"): dict(alpha_gain=100.0, alpha_gain_cross=10.0, delta=1e-6,
                                                  delta_cross=0.01),
    ("bearing", "avoid", "analytic"): dict(alpha_gain=100.0, delta=1e-6, c=5000.0, kappa=5000.0),
    ("bearing", "avoid", "anticrossing"): dict(alpha_gain=100.0, alpha_gain_cross=500.0, delta=1e-6,
                                               delta_cross=0.01),
}

# Reference thresholds. Range localization at 5 is unreachable with three
# unit-variance range beacons (trace(H) <= 6 so lam_min <= 3); the shipped
# range scenarios therefore use RANGE_LAMBDA_S.
REFERENCE_LAMBDA_S = {"range": 5.0, "bearing": 0.01}
RANGE_LAMBDA_S = 1.0
LAMBDA_S = {"range": RANGE_LAMBDA_S, "bearing": 0.01}

# Initial and goal states (px, py, vx, vy); reconstructions, chosen so the
# unfiltered LQR path leaves the safe set.
_GEOMETRY = {
    ("range", "localize"): dict(x0=[0.0, 2.0, -1.0, 0.0], goal=[-14.0, 4.0, 0.0, 0.0]),
    ("range", "avoid"): dict(x0=[-13.0, 6.0, 0.0, 0.0], goal=[13.0, 6.0, 0.0, 0.0]),
    ("bearing", "localize"): dict(x0=[2.0, -1.0, 0.0, 0.0], goal=[-14.0, -10.0, 0.0, 0.0]),
    ("bearing", "avoid"): dict(x0=[-16.0, 4.0, 0.0, 0.0], goal=[16.0, 4.0, 0.0, 0.0]),
}


def scenario_document(model: str, mode: str, method: str, lambda_s=None) -> dict:
    """JSON document for one of the built-in parameterizations."""
    tab = dict(_PARAMS[(model, mode, method)])
    barrier = {"lambda_s": LAMBDA_S[model] if lambda_s is None else lambda_s, "mode": mode, "method": method}
    filt = {}
    for key in ("kappa", "delta", "delta_cross", "alpha_gain", "alpha_gain_cross"):
        if key in tab:
            barrier[key] = tab[key]
    if "c" in tab:
        filt["c"] = tab["c"]
    geo = _GEOMETRY[(model, mode)]
    return {
        "schema_version": SCHEMA_VERSION,
        "name": f"{model}-{mode}-{method}",
        "model": model,
        "beacons": copy.deepcopy(TRIANGLE),
        "barrier": barrier,
        "filter": filt,
        "nls": {"step": DEFAULT_STEP[model], "max_iters": 500, "grad_tol": 1e-10, "warm_start": True},
        "lqr": {"q": [1.0, 1.0, 1.0, 1.0], "r": [1.0, 1.0]},
        "x0": list(geo["x0"]),
        "goal": list(geo["goal"]),
        "dt": 1e-3,
        "t_final": 10.0,
        "noise_std": None,
        "seed": 0,
    }


BUILTIN = {
    f"{model}-{mode}-{method}": (model, mode, method)
    for model in ("range", "bearing")
    for mode in ("localize", "avoid")
    for method in ("analytic", "anticrossing")
}


def builtin_document(name: str) -> dict:
    try:
        return scenario_document(*BUILTIN[name])
    except KeyError:
        raise ConfigError(f"unknown built-in scenario {name!r}; choose from {sorted(BUILTIN)}",
                          field="name") from None


def _line_of(text: str, path) -> int:
    """Best-effort line number of the JSON key named by the last string element of ``path``."""
    keys = [p for p in path if isinstance(p, str)]
    if not text or not keys:
        return None
    pos = 0
    for key in keys:
        m = re.compile(r'"%s"\s*:' % re.escape(key)).search(text, pos)
        if m is None:
            return None
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def validate(doc: dict, text: str = "") -> dict:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        path = list(err.absolute_path)
        if err.validator == "required":
            missing = re.findall(r"'([^']+)' is a required property", err.message)
            path = path + missing[:1]
        elif err.validator == "additionalProperties":
            extra = re.findall(r"'([^']+)' was unexpected", err.message)
            path = path + extra[:1]
        name = ".".join(str(p) for p in path) or "<document>"
        line = _line_of(text, path)
        where = f"line {line}: " if line else ""
        raise ConfigError(f"{where}{name}: {err.message}", field=name, line=line)
    return doc


def config_from_document(doc: dict, text: str = "") -> ScenarioConfig:
    validate(doc, text)
    model = doc["model"]
    try:
        b = doc["barrier"]
        barrier = BarrierConfig(**b)
        filt = FilterConfig(**doc.get("filter", {}))
        nls_doc = dict(doc.get("nls", {}))
        nls = NlsOptions.for_model(model, **nls_doc)
        lqr = doc.get("lqr", {})
        cfg = ScenarioConfig(
            name=doc["name"],
            model=model,
            beacons=BeaconSet(np.asarray(doc["beacons"], dtype=float)),
            barrier=barrier,
            filter=filt,
            nls=nls,
            x0=State.from_vector(doc["x0"]),
            goal=State.from_vector(doc["goal"]),
            dt=float(doc.get("dt", 1e-3)),
            t_final=float(doc.get("t_final", 10.0)),
            lqr_q=tuple(lqr.get("q", (1.0, 1.0, 1.0, 1.0))),
            lqr_r=tuple(lqr.get("r", (1.0, 1.0))),
            noise_std=doc.get("noise_std"),
            seed=int(doc.get("seed", 0)),
            evaluate_at=doc.get("evaluate_at", "estimate"),
            violation_tol=float(doc.get("violation_tol", 1e-3)),
        )
    except ConfigError:
        raise
    except IcbfError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load_document(source) -> tuple:
    """Return ``(document, raw_text)`` for a config path or built-in scenario name."""
    if isinstance(source, dict):
        return copy.deepcopy(source), ""
    path = Path(source)
    if not path.exists():
        if str(source) in BUILTIN:
            return builtin_document(str(source)), ""
        raise ConfigError(f"config file {source} does not exist and is not a built-in scenario", field="config")
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}: invalid JSON: {exc.msg}", line=exc.lineno) from exc
    return doc, text


def load_config(source) -> ScenarioConfig:
    doc, text = load_document(source)
    return config_from_document(doc, text)


def digest(doc: dict) -> str:
    """Content hash of a scenario document (key order and whitespace insensitive)."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"), allow_nan=False)
    return hashlib.sha256(canon.encode()).hexdigest()


def set_path(doc: dict, dotted: str, value) -> dict:
    """Copy of ``doc`` with the dotted key path set to ``value`` (e.g. ``filter.c``)."""
    out = copy.deepcopy(doc)
    parts = dotted.split(".")
    node = out
    for key in parts[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {dotted}: {key} is not an object", field=dotted)
    node[parts[-1]] = value
    return out
