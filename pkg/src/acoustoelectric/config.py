"""Run configuration: a JSON (or YAML) document validated against a schema.

Every key has a documented default except ``beta``, which must be given.
Unknown keys are rejected.  The defaults below describe the four-experiment
setup on the ellipse head phantom; see :data:`PRESETS`.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

import jsonschema
import numpy as np

from .exceptions import ConfigError
from .mesh import build_rect_mesh, normalize_sides
from .optimize import OptimizeConfig
from .phantom import DEFAULT_TISSUES, Blob, SourceSpec, shepp_logan_head
from .solver import SolverConfig

_NUM = {"type": "number"}
_POINT = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}
_SIDE = {"enum": ["left", "top", "right", "bottom"]}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


SCHEMA = _obj({
    "mesh": _obj({
        "bounds": {"type": "array", "items": _NUM, "minItems": 4, "maxItems": 4},
        "nx": {"type": "integer", "minimum": 1},
        "ny": {"type": "integer", "minimum": 1},
    }),
    "phantom": _obj({
        "preset": {"enum": ["shepp-logan", "uniform"]},
        "tissues": {"type": "object", "additionalProperties": {"type": "number", "exclusiveMinimum": 0}},
        "value": {"type": "number", "exclusiveMinimum": 0},
    }),
    "source": _obj({
        "kind": {"enum": ["gaussian-dipole-pair", "curl-bump", "zero"]},
        "blobs": {"type": "array", "items": _obj({
            "center": _POINT,
            "width": {"type": "number", "exclusiveMinimum": 0},
            "amplitude": _NUM,
            "direction": _POINT,
        }, required=("center", "width"))},
        "cutoff": {"type": "number", "exclusiveMinimum": 0},
        "center": _POINT,
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "amplitude": _NUM,
        "margin": {"type": "integer", "minimum": 2},
    }),
    "beta": _NUM,
    "epsilon": {"type": "number", "exclusiveMinimum": 0},
    "noise": _obj({
        "level": {"type": "number", "minimum": 0},
        "seed": {"type": "integer", "minimum": 0},
        "mode": {"enum": ["relative", "additive"]},
    }),
    "sources": _obj({
        "theta": {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2},
        "g1_csv": {"type": ["string", "null"]},
        "g2_csv": {"type": ["string", "null"]},
    }),
    "data": _obj({
        "mode": {"enum": ["full", "partial"]},
        "excluded_sides": {"type": "array", "items": _SIDE, "uniqueItems": True},
        "refinement": {"type": "integer", "minimum": 1},
    }),
    "optimize": _obj({
        "enabled": {"type": "boolean"},
        "max_outer_iter": {"type": "integer", "minimum": 1},
        "increment_tol": {"type": "number", "exclusiveMinimum": 0},
        "basis": {"enum": ["legendre", "nodal"]},
        "degree": {"type": "integer", "minimum": 0},
        "objective": {"enum": ["normalized", "literal"]},
        "eig_tol": {"type": "number", "exclusiveMinimum": 0},
        "eig_max_iter": {"type": "integer", "minimum": 1},
    }),
    "solver": _obj({
        "tol_rel": {"type": "number", "exclusiveMinimum": 0},
        "max_iter": {"type": ["integer", "null"], "minimum": 1},
        "preconditioner": {"enum": ["jacobi", "none"]},
    }),
    "lattice": _obj({
        "m_max": {"type": "integer", "minimum": 0},
        "n_max": {"type": "integer", "minimum": 0},
    }),
    "validate": _obj({
        "waves": {"type": "integer", "minimum": 1},
        "stability_pairs": {"type": "integer", "minimum": 1},
        "flip_h2": {"type": "boolean"},
    }),
    "output": {"type": "string"},
}, required=("beta",))

DEFAULTS = {
    "mesh": {"bounds": [0.1, 0.9, 0.0, 1.0], "nx": 64, "ny": 80},
    "phantom": {"preset": "shepp-logan", "tissues": dict(DEFAULT_TISSUES), "value": 1.0},
    "source": {
        "kind": "gaussian-dipole-pair",
        "blobs": [
            {"center": [0.44, 0.56], "width": 0.05, "amplitude": 1.0, "direction": [0.0, 1.0]},
            {"center": [0.58, 0.44], "width": 0.05, "amplitude": 1.0, "direction": [0.0, -1.0]},
        ],
        "cutoff": 3.0,
        "center": [0.5, 0.5],
        "radius": 0.2,
        "amplitude": 1.0,
        "margin": 2,
    },
    "epsilon": 1e-3,
    "noise": {"level": 0.0, "seed": 0, "mode": "relative"},
    "sources": {"theta": [0.0, float(np.pi / 2)], "g1_csv": None, "g2_csv": None},
    "data": {"mode": "full", "excluded_sides": ["bottom"], "refinement": 1},
    "optimize": {"enabled": False, "max_outer_iter": 20, "increment_tol": 1e-6,
                 "basis": "legendre", "degree": 0, "objective": "normalized",
                 "eig_tol": 1e-10, "eig_max_iter": 500},
    "solver": {"tol_rel": 1e-10, "max_iter": None, "preconditioner": "jacobi"},
    "lattice": {"m_max": 3, "n_max": 3},
    "validate": {"waves": 10, "stability_pairs": 20, "flip_h2": False},
    "output": "out",
}

_ORTHOGONAL = [0.0, float(np.pi / 2)]
_OBLIQUE = [float(5 * np.pi / 6), float(np.pi)]

PRESETS = {
    "default": {"beta": 0.5},
    "experiment1": {"beta": 0.5, "noise": {"level": 0.05}, "sources": {"theta": _ORTHOGONAL}},
    "experiment2": {"beta": 0.5, "noise": {"level": 0.05}, "sources": {"theta": _OBLIQUE}},
    "experiment3": {"beta": 0.5, "noise": {"level": 0.05}, "sources": {"theta": _ORTHOGONAL},
                    "data": {"mode": "partial"}},
    "experiment4": {"beta": 0.5, "noise": {"level": 0.05}, "sources": {"theta": _OBLIQUE},
                    "data": {"mode": "partial"}},
}


def _merge(base, extra):
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict) and key != "tissues":
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def validate_dict(data: dict, source: str = "config") -> None:
    """Raise :class:`ConfigError` naming the offending key path."""
    validator = jsonschema.Draft7Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
    if not errors:
        return
    err = errors[0]
    path = ".".join(str(p) for p in err.absolute_path) or "<root>"
    if err.validator == "required":
        missing = [k for k in err.validator_value if k not in err.instance]
        path = ".".join([p for p in path.split(".") if p != "<root>"] + missing[:1])
        raise ConfigError(f"{source}: missing required key '{path}'")
    if err.validator == "additionalProperties":
        raise ConfigError(f"{source}: {err.message} (at '{path}')")
    raise ConfigError(f"{source}: invalid value at '{path}': {err.message}")


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration with defaults filled in; ``data`` is the full document."""

    data: dict

    @classmethod
    def from_dict(cls, data: dict, source: str = "config") -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError(f"{source}: top level must be a mapping")
        validate_dict(data, source)
        merged = _merge(DEFAULTS, data)
        validate_dict(merged, source)
        cfg = cls(merged)
        cfg.check()
        return cfg

    @classmethod
    def preset(cls, name: str, **overrides) -> "RunConfig":
        if name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        return cls.from_dict(_merge(PRESETS[name], overrides), source=f"preset {name}")

    def with_overrides(self, overrides: dict) -> "RunConfig":
        return RunConfig.from_dict(_merge(self.data, overrides))

    def check(self):
        x0, x1, y0, y1 = self.data["mesh"]["bounds"]
        if not (x1 > x0 and y1 > y0):
            raise ConfigError("config: invalid value at 'mesh.bounds': empty rectangle")
        if self.data["data"]["mode"] == "partial" and len(self.data["data"]["excluded_sides"]) >= 4:
            raise ConfigError("config: invalid value at 'data.excluded_sides': no side left")
        if self.data["phantom"]["preset"] == "shepp-logan":
            missing = {"scalp", "skull", "csf", "grey", "white"} - set(self.data["phantom"]["tissues"])
            if missing:
                raise ConfigError(f"config: missing required key 'phantom.tissues.{sorted(missing)[0]}'")

    # ------------------------------------------------------------ accessors
    def __getitem__(self, key):
        return self.data[key]

    @property
    def beta(self) -> float:
        return float(self.data["beta"])

    def mesh(self, refinement: int = 1):
        m = self.data["mesh"]
        return build_rect_mesh(*m["bounds"], m["nx"] * refinement, m["ny"] * refinement)

    def phantom_spec(self):
        from .phantom import PhantomSpec

        p = self.data["phantom"]
        if p["preset"] == "uniform":
            return PhantomSpec(tissues={"uniform": p["value"]}, background="uniform")
        return shepp_logan_head(tuple(self.data["mesh"]["bounds"]), p["tissues"])

    def source_spec(self) -> SourceSpec | None:
        s = self.data["source"]
        if s["kind"] == "zero":
            return None
        blobs = tuple(Blob(tuple(b["center"]), b["width"], b.get("amplitude", 1.0),
                           tuple(b.get("direction", (0.0, 1.0)))) for b in s["blobs"])
        return SourceSpec(kind=s["kind"], blobs=blobs, cutoff=s["cutoff"],
                          center=tuple(s["center"]), radius=s["radius"],
                          amplitude=s["amplitude"], margin=s["margin"])

    @property
    def sides(self) -> tuple:
        d = self.data["data"]
        if d["mode"] == "full":
            return normalize_sides(None)
        return tuple(s for s in normalize_sides(None) if s not in d["excluded_sides"])

    def solver(self) -> SolverConfig:
        s = self.data["solver"]
        pre = None if s["preconditioner"] == "none" else s["preconditioner"]
        return SolverConfig(tol_rel=s["tol_rel"], max_iter=s["max_iter"], preconditioner=pre)

    def optimizer(self) -> OptimizeConfig:
        o = self.data["optimize"]
        return OptimizeConfig(max_outer_iter=o["max_outer_iter"], increment_tol=o["increment_tol"],
                              basis=o["basis"], degree=o["degree"], objective=o["objective"],
                              eig_tol=o["eig_tol"], eig_max_iter=o["eig_max_iter"],
                              seed=self.data["noise"]["seed"],
                              theta=tuple(self.data["sources"]["theta"]))

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True)


def read_config_file(path) -> dict:
    """Parse a JSON or YAML config file into a plain mapping (no validation)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: YAML syntax error: {exc}") from exc
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: JSON syntax error: {exc.msg}") from exc
    data = {} if data is None else data
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_config(path, overrides: dict | None = None) -> RunConfig:
    """Read a JSON or YAML config file, apply ``overrides`` and validate."""
    return RunConfig.from_dict(_merge(read_config_file(path), overrides or {}), source=str(path))
