"""Validated JSON run configuration."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema

from .field import DEFAULT_MARGIN, H_SIGMA
from .geometry import DELTA_CORNER, EPS_BOUNDARY, EPS_CORNER, AccessSet
from .recon import OperatorConfig, ReconConfig

_POS = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "domain": {
            "type": "object", "additionalProperties": False,
            "properties": {"margin": _POS, "eps_corner": _POS, "delta_corner": _POS,
                           "eps_boundary": _POS, "h_sigma": _POS},
        },
        "E": {
            "oneOf": [
                {"enum": ["full", "adjacent", "opposite"]},
                {"type": "array", "minItems": 1,
                 "items": {"type": "array", "items": {"type": "number"},
                           "minItems": 2, "maxItems": 2}},
            ],
        },
        "n_max": {"type": "integer", "minimum": 0},
        "grids": {
            "type": "object", "additionalProperties": False,
            "properties": {"nx": {"type": "integer", "minimum": 2}},
        },
        "sinogram": {
            "type": "object", "additionalProperties": False,
            "properties": {"s_per_unit": {"type": "integer", "minimum": 1},
                           "n_phi": {"type": "integer", "minimum": 1}},
        },
        "solver": {
            "type": "object", "additionalProperties": False,
            "properties": {"max_iters": {"type": "integer", "minimum": 1},
                           "tol_residual": _POS,
                           "solver": {"enum": ["CGLS", "Landweber"]},
                           "step": {"type": "number"},
                           "seed": {"type": "integer"}},
        },
        "cutoff": {
            "type": "object", "additionalProperties": False,
            "properties": {"kind": {"enum": ["unit", "beams"]},
                           "resolution": {"type": "integer", "minimum": 16}},
        },
        "seed": {"type": "integer"},
        "bit_reproducible": {"type": "boolean"},
    },
}


class ConfigError(ValueError):
    """Configuration failed schema or semantic validation."""


@dataclass
class RunConfig:
    E: str | list = "adjacent"
    n_max: int = 2
    domain: dict = field(default_factory=dict)
    grids: dict = field(default_factory=dict)
    sinogram: dict = field(default_factory=dict)
    solver: dict = field(default_factory=dict)
    cutoff: dict = field(default_factory=dict)
    seed: int = 0
    bit_reproducible: bool = False

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        try:
            jsonschema.validate(doc, SCHEMA)
        except jsonschema.ValidationError as exc:
            raise ConfigError(f"config: {exc.message}") from exc
        cfg = cls(**doc)
        cfg.access_set()  # arcs must be valid too
        return cfg

    @classmethod
    def load(cls, path) -> "RunConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return {"E": self.E, "n_max": self.n_max, "domain": self.domain, "grids": self.grids,
                "sinogram": self.sinogram, "solver": self.solver, "cutoff": self.cutoff,
                "seed": self.seed, "bit_reproducible": self.bit_reproducible}

    # -- derived objects -----------------------------------------------------
    @property
    def margin(self) -> float:
        return float(self.domain.get("margin", DEFAULT_MARGIN))

    @property
    def eps_corner(self) -> float:
        return float(self.domain.get("eps_corner", EPS_CORNER))

    @property
    def delta_corner(self) -> float:
        return float(self.domain.get("delta_corner", DELTA_CORNER))

    @property
    def h_sigma(self) -> float:
        return float(self.domain.get("h_sigma", H_SIGMA))

    @property
    def nx(self) -> int:
        return int(self.grids.get("nx", 64))

    def access_set(self) -> AccessSet:
        eps = float(self.domain.get("eps_boundary", EPS_BOUNDARY))
        try:
            if isinstance(self.E, str):
                return AccessSet.preset(self.E, eps)
            return AccessSet(tuple(tuple(a) for a in self.E), eps)
        except ValueError as exc:
            raise ConfigError(f"config: {exc}") from exc

    def operator(self) -> OperatorConfig:
        return OperatorConfig(self.access_set(), self.n_max, self.nx,
                              int(self.sinogram.get("s_per_unit", 128)),
                              int(self.sinogram.get("n_phi", 128)), self.h_sigma)

    def recon(self) -> ReconConfig:
        kw = dict(self.solver)
        kw.setdefault("seed", self.seed)
        return ReconConfig(**kw)
