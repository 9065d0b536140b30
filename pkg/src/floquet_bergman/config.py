"""Run configuration: one JSON document, schema-checked, with dotted overrides.

Loading validates the document against a JSON schema and then re-checks the
cross-invariants of the objects it describes (alpha in (0, 1/2)^2, obstacle
inside the square and covering the four special points, truncation tail
within tolerance).  Every failure raises ConfigError naming the invariant.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .errors import BadParameter, ConfigError
from .geometry import Obstacle, PeriodicCell
from .lattice import EllipticPair, Truncation, corrected_tail_bound
from .toeplitz import Symbol

DEFAULTS = {
    "elliptic": {"alpha": [0.25, 0.25], "b": 3},
    "obstacle": {"center": [0.5, 0.5], "radius": 0.4},
    "truncation": {"truncation_radius": 40, "tail_tolerance": 1e-10,
                   "epsilon_pole": 1e-8, "guard": 1e-3},
    "quadrature": {"order": 8},
    "basis": {"N": 4},
    "grid": {"resolution": 16, "periodic": False},
    "multiplier": {"resolution": 33},
    "symbol": {"coefficients": [[0, 0, 2.0, 0.0], [1, 0, 0.5, 0.0], [-1, 0, 0.5, 0.0]],
               "real": True},
    "oracle": {"M": 2},
    "weyl": {"mu": [0.0, 0.0], "n": 8, "M": 6, "window_resolution": 129, "lambda": None},
    "eval": {"points": [[0.5, 0.0], [0.0, 0.5], [0.5, 0.5]], "function": "wp_prime"},
    "output_dir": "out",
    "seed": 0,
    "threads": None,
}

_num = {"type": "number"}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_posint = {"type": "integer", "minimum": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCHEMA = _obj({
    "elliptic": _obj({"alpha": _pair, "b": {"type": "integer", "minimum": 3}}),
    "obstacle": _obj({"center": _pair, "radius": {"type": "number", "exclusiveMinimum": 0}}),
    "truncation": _obj({
        "truncation_radius": {"type": ["integer", "null"], "minimum": 2},
        "tail_tolerance": {"type": "number", "exclusiveMinimum": 0},
        "epsilon_pole": {"type": "number", "exclusiveMinimum": 0},
        "guard": {"type": "number", "exclusiveMinimum": 0},
    }),
    "quadrature": _obj({"order": {"type": "integer", "minimum": 4}}),
    "basis": _obj({"N": _posint}),
    "grid": _obj({"resolution": {"type": "integer", "minimum": 2},
                  "periodic": {"type": "boolean"}}),
    "multiplier": _obj({"resolution": {"type": "integer", "minimum": 32}}),
    "symbol": _obj({
        "coefficients": {"type": "array", "minItems": 1, "items": {
            "type": "array", "minItems": 3, "maxItems": 4,
            "prefixItems": [{"type": "integer"}, {"type": "integer"}, _num, _num]}},
        "real": {"type": "boolean"},
    }),
    "oracle": _obj({"M": _posint}),
    "weyl": _obj({"mu": _pair, "n": {"type": "integer", "minimum": 2}, "M": _posint,
                  "window_resolution": {"type": "integer", "minimum": 3},
                  "lambda": {"type": ["number", "null"]}}),
    "eval": _obj({"points": {"type": "array", "items": _pair},
                  "function": {"enum": ["wp", "wp_prime", "varphi", "phi"]}}),
    "output_dir": {"type": "string"},
    "seed": {"type": "integer"},
    "threads": {"type": ["integer", "null"], "minimum": 1},
})


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(data: dict, assignment: str) -> dict:
    """Apply one ``dotted.key=value`` override; the value is parsed as JSON
    when possible and kept as a string otherwise."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    out = copy.deepcopy(data)
    node = out
    parts = key.strip().split(".")
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override key {key!r} descends into a non-object")
    node[parts[-1]] = value
    return out


def radius_for_tolerance(tol: float, b: int = 3, coefficient: float = 2.0,
                         max_radius: int = 400) -> int:
    """Smallest window radius whose corrected tail bound is below tol."""
    for r in range(2, max_radius + 1):
        if abs(coefficient) * corrected_tail_bound(b, r) <= tol:
            return r
    raise ConfigError(f"tail_tolerance {tol:g} not reachable with radius <= {max_radius}")


@dataclass(frozen=True)
class RunConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def __post_init__(self):
        object.__setattr__(self, "data", validate(self.data))

    # constructors --------------------------------------------------------
    @classmethod
    def from_dict(cls, d: dict, overrides=()) -> "RunConfig":
        data = _merge(DEFAULTS, d)
        for a in overrides:
            data = apply_override(data, a)
        return cls(data)

    @classmethod
    def load(cls, path, overrides=()) -> "RunConfig":
        try:
            d = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(d, dict):
            raise ConfigError("config root must be a JSON object")
        return cls.from_dict(d, overrides)

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)

    def save(self, path):
        Path(path).write_text(self.to_json() + "\n")

    def __getitem__(self, key):
        return self.data[key]

    # typed views -----------------------------------------------------------
    @property
    def pair(self) -> EllipticPair:
        e = self.data["elliptic"]
        return EllipticPair(alpha=complex(*e["alpha"]), b=e["b"])

    @property
    def truncation(self) -> Truncation:
        return Truncation.from_dict(self.data["truncation"])

    @property
    def obstacle(self) -> Obstacle:
        o = self.data["obstacle"]
        return Obstacle(center=complex(*o["center"]), radius=float(o["radius"]))

    def cell(self, order=None) -> PeriodicCell:
        return PeriodicCell(obstacle=self.obstacle,
                            order=order or self.data["quadrature"]["order"])

    @property
    def symbol(self) -> Symbol:
        s = self.data["symbol"]
        return Symbol.from_table(s["coefficients"], real=s["real"])

    @property
    def N(self) -> int:
        return self.data["basis"]["N"]


def validate(data: dict) -> dict:
    """Schema check plus cross-invariants; returns a normalised copy."""
    try:
        jsonschema.validate(data, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"schema: {where}: {exc.message}") from None
    data = copy.deepcopy(data)
    e, o, t = data["elliptic"], data["obstacle"], data["truncation"]
    try:
        pair = EllipticPair(alpha=complex(*e["alpha"]), b=e["b"])
    except BadParameter as exc:
        raise ConfigError(f"invariant alpha-in-open-quarter-square: {exc}") from None
    try:
        obs = Obstacle(center=complex(*o["center"]), radius=float(o["radius"]))
    except BadParameter as exc:
        raise ConfigError(f"invariant obstacle-inside-square: {exc}") from None
    special = pair.special_points
    gap = np.abs(special - obs.center)
    if np.any(gap >= obs.radius):
        worst = special[int(np.argmax(gap))]
        raise ConfigError(
            "invariant obstacle-covers-special-points: point "
            f"{worst.real:g}{worst.imag:+g}i is {gap.max():.4g} from the centre, "
            f"radius {obs.radius:g}")
    if t["truncation_radius"] is None:
        t["truncation_radius"] = radius_for_tolerance(t["tail_tolerance"], pair.b, abs(pair.coefficient))
    tail = abs(pair.coefficient) * corrected_tail_bound(pair.b, t["truncation_radius"])
    if tail > t["tail_tolerance"]:
        raise ConfigError(
            f"invariant tail-within-tolerance: radius {t['truncation_radius']} leaves "
            f"tail bound {tail:.3g} > tail_tolerance {t['tail_tolerance']:g}")
    if t["guard"] < t["epsilon_pole"]:
        raise ConfigError("invariant guard-exceeds-epsilon-pole: guard must be >= epsilon_pole")
    try:
        Symbol.from_table(data["symbol"]["coefficients"], real=data["symbol"]["real"])
    except BadParameter as exc:
        raise ConfigError(f"invariant symbol-conjugate-symmetry: {exc}") from None
    return data
