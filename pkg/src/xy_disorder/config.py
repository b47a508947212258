"""Run configuration: JSON schema, validation with collected errors, typed config."""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np
from jsonschema import Draft202012Validator

from .analysis import DEFAULT_TOL, GridMode
from .averaging import AnnealedMethod, BondPolicy
from .chain import Boundary, ChainSpec, DisorderSpec, DisorderTarget, Distribution


class Mode(str, enum.Enum):
    SWEEP = "sweep"
    PHASE_GRID = "phase_grid"
    QPT_SHIFT = "qpt_shift"
    SIGMA_C = "sigma_c"
    ORACLE_CHECK = "oracle_check"
    HOMOGENEOUS = "homogeneous"


class Averaging(str, enum.Enum):
    ANNEALED = "annealed"
    QUENCHED = "quenched"
    BOTH = "both"


_NUM = {"type": "number"}
_AXIS = {
    "oneOf": [
        {"type": "array", "items": _NUM, "minItems": 1},
        {
            "type": "object",
            "properties": {"start": _NUM, "stop": _NUM, "step": {"type": "number", "exclusiveMinimum": 0}},
            "required": ["start", "stop", "step"],
            "additionalProperties": False,
        },
    ]
}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "xy-disorder run configuration",
    "type": "object",
    "properties": {
        "mode": {"enum": [m.value for m in Mode]},
        "chain": {
            "type": "object",
            "properties": {
                "n_sites": {"type": "integer", "minimum": 2},
                "gamma": _NUM,
                "beta": _NUM,
                "boundary": {"enum": [b.value for b in Boundary]},
            },
            "required": ["n_sites", "gamma", "beta"],
            "additionalProperties": False,
        },
        "disorder": {
            "type": "object",
            "properties": {
                "target": {"enum": [t.value for t in DisorderTarget]},
                "distribution": {"enum": [d.value for d in Distribution]},
                "sigmas": _AXIS,
            },
            "required": ["target"],
            "additionalProperties": False,
        },
        "control": _AXIS,
        "n_samples": {"type": "integer", "minimum": 1},
        "master_seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "bond_policy": {"enum": [b.value for b in BondPolicy]},
        "averaging": {"enum": [a.value for a in Averaging]},
        "annealed_method": {"enum": [a.value for a in AnnealedMethod]},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "grid_mode": {"enum": [g.value for g in GridMode]},
        "sigma_c": {
            "type": "object",
            "properties": {
                "sigma_lo": {"type": "number", "minimum": 0},
                "sigma_hi": {"type": "number", "minimum": 0},
                "resolution": {"type": "number", "exclusiveMinimum": 0},
            },
            "required": ["sigma_lo", "sigma_hi"],
            "additionalProperties": False,
        },
        "oracle": {
            "type": "object",
            "properties": {
                "n_instances": {"type": "integer", "minimum": 1},
                "sizes": {"type": "array", "items": {"type": "integer", "minimum": 2, "maximum": 12}},
                "gammas": {"type": "array", "items": _NUM},
                "betas": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            },
            "additionalProperties": False,
        },
        "output_dir": {"type": "string"},
    },
    "required": ["mode", "chain", "n_samples"],
    "additionalProperties": False,
}

_VALIDATOR = Draft202012Validator(SCHEMA)


class ConfigError(ValueError):
    def __init__(self, errors):
        super().__init__("invalid configuration:\n" + "\n".join(f"  {e}" for e in errors))
        self.errors = list(errors)


def expand_axis(spec) -> np.ndarray:
    """A list of values, or {start, stop, step} with stop included when on the grid."""
    if isinstance(spec, dict):
        start, stop, step = spec["start"], spec["stop"], spec["step"]
        n = int(np.floor((stop - start) / step + 1e-9)) + 1
        return start + step * np.arange(n)
    return np.asarray(spec, dtype=float)


@dataclass(frozen=True, eq=False)
class RunConfig:
    mode: Mode
    n_sites: int
    gamma: float
    beta: float
    boundary: Boundary
    target: DisorderTarget
    distribution: Distribution
    sigmas: np.ndarray
    control: np.ndarray
    n_samples: int
    master_seed: int
    bond_policy: BondPolicy
    averaging: Averaging
    annealed_method: AnnealedMethod
    tolerance: float
    grid_mode: GridMode
    sigma_c: dict | None
    oracle: dict
    output_dir: str | None
    raw: dict = field(repr=False, default_factory=dict)
    warnings: tuple = ()

    def template(self, control_value: float = 1.0) -> ChainSpec:
        """Chain with the non-disordered parameter set to one energy unit."""
        if self.target is DisorderTarget.COUPLING:
            return ChainSpec(self.n_sites, self.gamma, control_value, 1.0, self.beta, self.boundary)
        return ChainSpec(self.n_sites, self.gamma, 1.0, control_value, self.beta, self.boundary)

    def disorder(self, mean: float, sigma: float) -> DisorderSpec:
        return DisorderSpec(self.target, float(mean), float(sigma), self.distribution)

    def with_seed(self, seed: int) -> "RunConfig":
        from dataclasses import replace

        raw = dict(self.raw, master_seed=int(seed))
        return replace(self, master_seed=int(seed), raw=raw)


def _path(err) -> str:
    p = "$"
    for part in err.absolute_path:
        p += f"[{part}]" if isinstance(part, int) else f".{part}"
    return p


def validate_config(text: str) -> RunConfig:
    """Parse and validate a JSON document; raises ConfigError listing every problem."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"$: not valid JSON ({exc})"]) from None
    errors = [f"{_path(e)}: {e.message}" for e in sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))]
    warnings = []
    if not isinstance(doc, dict):
        raise ConfigError(errors or ["$: expected an object"])

    chain = doc.get("chain") if isinstance(doc.get("chain"), dict) else {}
    beta = chain.get("beta")
    if isinstance(beta, (int, float)) and not beta > 0:
        errors.append(f"$.chain.beta: must be positive, got {beta}")
    if chain.get("gamma") == 0:
        warnings.append("$.chain.gamma: gamma = 0 is outside the anisotropic model assumed by the analysis")

    mode = doc.get("mode")
    disorder = doc.get("disorder") if isinstance(doc.get("disorder"), dict) else None
    if mode in (Mode.SWEEP.value, Mode.PHASE_GRID.value, Mode.QPT_SHIFT.value) and disorder is None:
        errors.append(f"$.disorder: required for mode {mode}")
    if mode in (Mode.SWEEP.value, Mode.PHASE_GRID.value, Mode.QPT_SHIFT.value) and disorder is not None and "sigmas" not in disorder:
        errors.append(f"$.disorder.sigmas: required for mode {mode}")
    if mode == Mode.SIGMA_C.value and "sigma_c" not in doc:
        errors.append("$.sigma_c: required for mode sigma_c")
    if mode != Mode.ORACLE_CHECK.value and "control" not in doc:
        errors.append(f"$.control: required for mode {mode}")

    sig = doc.get("sigma_c")
    if isinstance(sig, dict) and isinstance(sig.get("sigma_lo"), (int, float)) and isinstance(sig.get("sigma_hi"), (int, float)):
        if not sig["sigma_lo"] < sig["sigma_hi"]:
            errors.append("$.sigma_c: sigma_lo must be below sigma_hi")

    control = None
    if "control" in doc and not any(e.startswith("$.control") for e in errors):
        control = expand_axis(doc["control"])
        if len(control) > 1 and np.any(np.diff(control) <= 0):
            errors.append("$.control: grid must be strictly increasing")
        if mode in (Mode.QPT_SHIFT.value,) and len(control) < 6:
            errors.append("$.control: derivative analysis needs at least 6 grid points")
    sigmas = np.zeros(1)
    if disorder is not None and "sigmas" in disorder and not any(e.startswith("$.disorder.sigmas") for e in errors):
        sigmas = expand_axis(disorder["sigmas"])
        if np.any(sigmas < 0):
            errors.append("$.disorder.sigmas: standard deviations must be non-negative")

    if errors:
        raise ConfigError(errors)

    disorder = disorder or {"target": DisorderTarget.COUPLING.value}
    return RunConfig(
        mode=Mode(mode),
        n_sites=int(chain["n_sites"]),
        gamma=float(chain["gamma"]),
        beta=float(chain["beta"]),
        boundary=Boundary(chain.get("boundary", Boundary.PERIODIC_C_CYCLIC.value)),
        target=DisorderTarget(disorder["target"]),
        distribution=Distribution(disorder.get("distribution", Distribution.GAUSSIAN.value)),
        sigmas=sigmas,
        control=control if control is not None else np.zeros(0),
        n_samples=int(doc["n_samples"]),
        master_seed=int(doc.get("master_seed", 0)),
        bond_policy=BondPolicy(doc.get("bond_policy", BondPolicy.ALL_BONDS_MEAN.value)),
        averaging=Averaging(doc.get("averaging", Averaging.QUENCHED.value)),
        annealed_method=AnnealedMethod(doc.get("annealed_method", AnnealedMethod.TILTED.value)),
        tolerance=float(doc.get("tolerance", DEFAULT_TOL)),
        grid_mode=GridMode(doc.get("grid_mode", GridMode.SEPARABLE_ENTANGLED.value)),
        sigma_c=doc.get("sigma_c"),
        oracle=doc.get("oracle", {}),
        output_dir=doc.get("output_dir"),
        raw=doc,
        warnings=tuple(warnings),
    )
