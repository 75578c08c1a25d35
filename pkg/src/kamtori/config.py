"""Configuration documents: schema validation with full error reporting.

A run is described by one JSON document per subcommand.  Validation walks the
schema, collects every violation with its path, and only then builds the
typed payload; no computation starts on a partially valid document.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import ConfigError

_SENTINEL = object()


@dataclass(frozen=True)
class Field:
    type: type | tuple
    default: object = _SENTINEL
    required: bool = False
    min: float | None = None
    max: float | None = None
    min_exclusive: bool = False
    max_exclusive: bool = False
    schema: dict | None = None        # for dict-valued fields
    item_schema: dict | None = None   # for list-of-dict fields
    item_type: type | tuple | None = None


def _check_number(value, f: Field, path: str, errors: list):
    if f.min is not None:
        if f.min_exclusive and not value > f.min:
            errors.append(f"{path}: must be > {f.min}, got {value}")
        if not f.min_exclusive and not value >= f.min:
            errors.append(f"{path}: must be >= {f.min}, got {value}")
    if f.max is not None:
        if f.max_exclusive and not value < f.max:
            errors.append(f"{path}: must be < {f.max}, got {value}")
        if not f.max_exclusive and not value <= f.max:
            errors.append(f"{path}: must be <= {f.max}, got {value}")


def _validate(doc: dict, schema: dict, path: str, errors: list) -> dict:
    out = {}
    if not isinstance(doc, dict):
        errors.append(f"{path or '$'}: expected an object, got {type(doc).__name__}")
        return out
    for key in doc:
        if key not in schema:
            errors.append(f"{(path + '.') if path else '$.'}{key}: unknown key")
    for key, f in schema.items():
        p = f"{(path + '.') if path else '$.'}{key}"
        if key not in doc:
            if f.required:
                errors.append(f"{p}: required key missing")
            elif f.schema is not None:
                # fill nested defaults by validating the default document
                base = f.default if f.default is not _SENTINEL else {}
                out[key] = _validate(dict(base), f.schema, p, errors)
            elif f.default is not _SENTINEL:
                out[key] = f.default
            continue
        value = doc[key]
        expected = f.type
        if expected is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if expected is int and isinstance(value, bool):
            errors.append(f"{p}: expected int, got bool")
            continue
        if not isinstance(value, expected):
            name = expected.__name__ if isinstance(expected, type) \
                else "/".join(t.__name__ for t in expected)
            errors.append(f"{p}: expected {name}, got {type(value).__name__}")
            continue
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            _check_number(value, f, p, errors)
        if f.schema is not None and isinstance(value, dict):
            value = _validate(value, f.schema, p, errors)
        if isinstance(value, list):
            if f.item_schema is not None:
                value = [_validate(item, f.item_schema, f"{p}[{i}]", errors)
                         for i, item in enumerate(value)]
            elif f.item_type is not None:
                for i, item in enumerate(value):
                    chk = item
                    if f.item_type is float and isinstance(item, int):
                        chk = float(item)
                    if not isinstance(chk, f.item_type):
                        errors.append(f"{p}[{i}]: expected "
                                      f"{getattr(f.item_type, '__name__', f.item_type)}")
        out[key] = value
    return out


_GLOBALS = {
    "seed": Field(int, default=0, min=0),
    "out_dir": Field(str, default=""),
    "slack": Field(float, default=10.0, min=0.0, min_exclusive=True),
    "figures": Field(bool, default=True),
}

_DIO_BASE = {
    "a": Field(float, required=True, min=0.0, min_exclusive=True),
    "b": Field(float, required=True, min=0.0, min_exclusive=True),
    "d": Field(int, required=True, min=1),
    "mu": Field(float, required=True, min=0.0, max=1.0,
                min_exclusive=True, max_exclusive=True),
    "eps": Field(float, required=True, min=0.0, max=1.0,
                 min_exclusive=True, max_exclusive=True),
}

_H0_FIELD = Field(list, default=None, item_schema={
    "alpha": Field(list, required=True, item_type=int),
    "c": Field(float, required=True),
})

_MODES_FIELD = Field(list, default=None, item_schema={
    "k": Field(list, required=True, item_type=int),
    "l": Field(int, required=True),
    "re": Field(float, default=0.0),
    "im": Field(float, default=0.0),
})

_TOLERANCES = Field(dict, default={}, schema={
    "fixed_point_tol": Field(float, default=1e-14, min=0, min_exclusive=True),
    "compose_tol": Field(float, default=1e-14, min=0, min_exclusive=True),
    "prune_rel": Field(float, default=1e-14, min=0, min_exclusive=True),
    "composition_rtol": Field(float, default=1e-9, min=0, min_exclusive=True),
    "anchor_tol": Field(float, default=1e-13, min=0, min_exclusive=True),
    "target_norm": Field(float, default=1e-13, min=0, min_exclusive=True),
    "divisor_safety": Field(float, default=1.0, min=0, min_exclusive=True),
})

SCHEMAS = {
    "schedule": {**_GLOBALS, **_DIO_BASE,
                 "m0_override": Field(int, default=None, min=1),
                 "depth": Field(int, default=8, min=2, max=64)},
    "smooth-demo": {**_GLOBALS,
                    "kernel": Field(dict, default={}, schema={
                        "a1": Field(float, default=1.0, min=0, min_exclusive=True),
                        "plateau": Field(float, default=0.5, min=0, min_exclusive=True),
                    }),
                    "j": Field(int, default=1, min=0, max=4),
                    "p": Field(int, default=3, min=1, max=4),
                    "decay_ells": Field(list, default=[4.0, 8.0], item_type=float),
                    "decay_depth": Field(int, default=6, min=3, max=12)},
    "dio": {**_GLOBALS, **_DIO_BASE,
            "n_samples": Field(int, required=True, min=100),
            "k_max": Field(int, default=None, min=1),
            "eps_list": Field(list, default=None, item_type=float),
            "H0": _H0_FIELD},
    "kam": {**_GLOBALS, **_DIO_BASE,
            "I0": Field(list, required=True, item_type=float),
            "H0": _H0_FIELD,
            "P_modes": _MODES_FIELD,
            "m0_override": Field(int, default=None, min=1),
            "max_main_steps": Field(int, default=12, min=1),
            "min_main_steps": Field(int, default=3, min=0),
            "taylor_degree": Field(int, default=2, min=1, max=6),
            "enforce_norms": Field(bool, default=False),
            "verify_steps": Field(bool, default=True),
            "torus_grid": Field(list, default=[64, 64], item_type=int),
            "kernel": Field(dict, default={}, schema={
                "a1": Field(float, default=1.0, min=0, min_exclusive=True),
                "plateau": Field(float, default=0.5, min=0, min_exclusive=True),
            }),
            "tolerances": _TOLERANCES},
    "duffing": {**_GLOBALS,
                "m": Field(int, required=True, min=1),
                "n": Field(int, required=True, min=1),
                "F_terms": Field(list, default=[], item_schema={
                    "alpha": Field(list, required=True, item_type=int),
                    "cos": Field(dict, default={}),
                    "sin": Field(dict, default={}),
                }),
                "A": Field(float, required=True, min=0, min_exclusive=True),
                "c4": Field(float, default=2.0, min=1.0, min_exclusive=True),
                "T": Field(float, default=None, min=0, min_exclusive=True),
                "dt": Field(float, default=None, min=0, min_exclusive=True),
                "n_samples": Field(int, required=True, min=1),
                "bound_mult": Field(float, default=3.0, min=1.0),
                "qp_tol": Field(float, default=1e-6, min=0, min_exclusive=True),
                "store_trajectories": Field(int, default=4, min=0)},
}


@dataclass
class RunConfig:
    subcommand: str
    payload: dict
    raw: dict


def parse_and_validate(document: dict, subcommand: str) -> RunConfig:
    """Validate a config document against the subcommand schema.

    Collects every violation (unknown keys, type errors, range errors,
    cross-field constraints) before raising.
    """
    if subcommand not in SCHEMAS:
        raise ConfigError([f"$: unknown subcommand {subcommand!r}"])
    errors: list = []
    payload = _validate(document, SCHEMAS[subcommand], "", errors)
    # cross-field constraints (reported alongside schema errors, not instead)
    if isinstance(payload.get("a"), float) and isinstance(payload.get("b"), float):
        if not payload["a"] > payload["b"]:
            errors.append(
                f"$.a: constraint a > b violated (a={payload['a']}, b={payload['b']})"
            )
    if subcommand in ("smooth-demo", "kam") and isinstance(payload.get("kernel"), dict):
        kern = payload["kernel"]
        if "plateau" in kern and "a1" in kern and not kern["plateau"] < kern["a1"]:
            errors.append("$.kernel.plateau: must be < a1")
    if subcommand == "kam":
        if isinstance(payload.get("I0"), list) and isinstance(payload.get("d"), int) \
                and len(payload["I0"]) != payload["d"]:
            errors.append(f"$.I0: needs d={payload['d']} components")
        if isinstance(payload.get("torus_grid"), list) and len(payload["torus_grid"]) != 2:
            errors.append("$.torus_grid: needs exactly [n_phi, n_t]")
    if not errors and subcommand == "duffing":
        for i, term in enumerate(payload["F_terms"]):
            if len(term["alpha"]) != payload["m"]:
                errors.append(f"$.F_terms[{i}].alpha: needs m={payload['m']} entries")
            if sum(term["alpha"]) > 2 * payload["n"] + 1:
                errors.append(
                    f"$.F_terms[{i}].alpha: |alpha| exceeds 2n+1 = {2 * payload['n'] + 1}"
                )
            for part in ("cos", "sin"):
                for key in term.get(part, {}):
                    try:
                        int(key)
                    except ValueError:
                        errors.append(f"$.F_terms[{i}].{part}: harmonic keys "
                                      "must be integers")
    if errors:
        raise ConfigError(errors)
    return RunConfig(subcommand=subcommand, payload=payload, raw=document)


def load_config(path: str, subcommand: str) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"$: invalid JSON: {exc}"]) from exc
    return parse_and_validate(doc, subcommand)
