"""JSON experiment configuration and model materialisation."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, SALabError
from .linear import LinearSAModel, make_linear_model, section3_model
from .markov import make_chain, two_state
from .stepsize import StepSizeSchedule

DEFAULT_RHOS = (0.15, 0.3, 0.45, 0.6, 0.75, 0.9)


@dataclass
class ExperimentConfig:
    model: dict = field(default_factory=lambda: {"kind": "paper_section3", "a": 0.7})
    schedules: list = field(default_factory=lambda: [{"alpha0": 0.5, "rho": r} for r in DEFAULT_RHOS])
    M: int = 300
    N: int = 300_000
    N0: int = 2_000
    base_seed: int = 0
    theta0: dict = field(default_factory=lambda: {"kind": "gaussian", "mean": "thetastar", "cov_scale": 25.0})
    out_dir: str = "out"
    emit_plots: bool = False

    def __post_init__(self):
        if self.M < 2:
            raise ConfigError("M must be at least 2")
        if not 0 <= self.N0 < self.N:
            raise ConfigError("need 0 <= N0 < N")
        if not 0 <= self.base_seed < 2**64:
            raise ConfigError("base_seed must be an unsigned 64-bit integer")
        if not self.schedules:
            raise ConfigError("schedule grid is empty")
        kind = self.theta0.get("kind")
        if kind == "gaussian":
            if set(self.theta0) - {"kind", "mean", "cov_scale"}:
                raise ConfigError(f"unknown theta0 keys: {sorted(set(self.theta0) - {'kind', 'mean', 'cov_scale'})}")
            if float(self.theta0.get("cov_scale", 0.0)) < 0:
                raise ConfigError("cov_scale must be non-negative")
        elif kind == "fixed":
            if "value" not in self.theta0:
                raise ConfigError("fixed theta0 needs a value")
        else:
            raise ConfigError(f"unknown theta0 kind {kind!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)

    def schedule_grid(self) -> list[StepSizeSchedule]:
        out = []
        for s in self.schedules:
            if set(s) != {"alpha0", "rho"}:
                raise ConfigError(f"schedule entries need exactly alpha0 and rho, got {sorted(s)}")
            try:
                out.append(StepSizeSchedule(float(s["alpha0"]), float(s["rho"])))
            except SALabError as exc:
                raise ConfigError(str(exc)) from exc
        return out

    def models(self) -> list[tuple]:
        """``[(a or None, label, LinearSAModel), ...]`` for every model in the spec."""
        return build_models(self.model)

    def theta0_for(self, model: LinearSAModel):
        """Return ``(mean, std)`` for the initial condition."""
        spec = self.theta0
        if spec["kind"] == "fixed":
            return _vector(spec["value"], model.dim), 0.0
        mean = spec.get("mean", "thetastar")
        mean = model.thetastar.copy() if mean == "thetastar" else _vector(mean, model.dim)
        return mean, float(np.sqrt(float(spec.get("cov_scale", 0.0))))


def _vector(v, d):
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != d:
        raise ConfigError(f"expected a vector of length {d}, got {v.size}")
    return v


def _chain(spec):
    if isinstance(spec, dict):
        if spec.get("kind") != "two_state" or set(spec) != {"kind", "a"}:
            raise ConfigError(f"unsupported chain spec {spec!r}")
        return two_state(float(spec["a"]))
    return make_chain(spec)


def build_models(spec: dict) -> list[tuple]:
    kind = spec.get("kind")
    try:
        if kind == "paper_section3":
            extra = set(spec) - {"kind", "a", "additive"}
            if extra:
                raise ConfigError(f"unknown model keys: {sorted(extra)}")
            a_values = spec["a"] if isinstance(spec["a"], list) else [spec["a"]]
            additive = bool(spec.get("additive", False))
            tag = "additive" if additive else "section3"
            return [(float(a), f"{tag}_a{a}", section3_model(float(a), additive=additive)) for a in a_values]
        if kind == "inline":
            extra = set(spec) - {"kind", "chain", "A", "b"}
            if extra:
                raise ConfigError(f"unknown model keys: {sorted(extra)}")
            chain = _chain(spec["chain"])
            a = float(spec["chain"]["a"]) if isinstance(spec["chain"], dict) else None
            return [(a, "inline", make_linear_model(chain, spec["A"], spec["b"]))]
    except KeyError as exc:
        raise ConfigError(f"model spec missing {exc}") from exc
    raise ConfigError(f"unknown model kind {kind!r}")


def paper_config(**overrides) -> ExperimentConfig:
    """The two-state experiment: M=300 runs, N=3e5, burn-in 2e3, theta0 ~ N(theta*, 25 I)."""
    return ExperimentConfig(**overrides)
