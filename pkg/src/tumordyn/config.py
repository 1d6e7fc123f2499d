"""Declarative run configuration.

A run is fully described by one YAML file; every omitted key falls back to
the defaults below, so a bare run reproduces the standard pipeline
(Gompertz baseline a=0.3, K=1200; neural ODE with hidden widths
[128, 128, 64, 64] trained 500 epochs at lr 0.01; UDE with two [10, 10]
networks trained through the lr schedule 0.01/0.005/0.001 for
1000/1000/500 epochs; forecasts at 90/80/70% training fractions).

Example:

    data: data/tumor_volumes.csv
    subjects: [1, 2]
    out_dir: out
    seed: 123
    neural_ode:
      schedule: [[0.01, 500]]
    recover:
      K: 1200.0
      K_by_subject: {2: 2100.0}
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from typing import Any

import yaml

from .models import DEFAULT_NEURAL_ODE_HIDDEN, DEFAULT_UDE_HIDDEN, TrainConfig

__all__ = ["RunConfig", "load_config"]


@dataclass(frozen=True)
class RunConfig:
    data_path: str = "data/tumor_volumes.csv"
    subjects: tuple[int, ...] = (1, 2, 3, 4, 5, 6, 7, 8, 9, 10)
    out_dir: str = "out"
    seed: int = 123
    n_collocation: int = 21
    solver_steps: int = 100
    time_input: bool = False
    gompertz_a: float = 0.3
    gompertz_K: float = 1200.0
    node_hidden: tuple[int, ...] = DEFAULT_NEURAL_ODE_HIDDEN
    node_schedule: tuple[tuple[float, int], ...] = ((0.01, 500),)
    ude_hidden: tuple[int, ...] = DEFAULT_UDE_HIDDEN
    ude_schedule: tuple[tuple[float, int], ...] = ((0.01, 1000), (0.005, 1000), (0.001, 500))
    fractions: tuple[float, ...] = (0.9, 0.8, 0.7)
    recover_n_samples: int = 101
    recover_lambda: float | None = None  # None = data-driven default
    sig_figs: int = 3
    basis_K_default: float = 1200.0
    basis_K_by_subject: dict[int, float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "subjects", tuple(int(s) for s in self.subjects))
        if not self.subjects:
            raise ValueError("at least one subject id is required")
        if len(set(self.subjects)) != len(self.subjects):
            raise ValueError(f"duplicate subject ids in {self.subjects}")
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        if not self.fractions:
            raise ValueError("at least one forecast fraction is required")

    def node_config(self) -> TrainConfig:
        return TrainConfig(
            schedule=self.node_schedule,
            seed=self.seed,
            n_collocation=self.n_collocation,
            solver_steps=self.solver_steps,
            hidden=self.node_hidden,
            time_input=self.time_input,
        )

    def ude_config(self) -> TrainConfig:
        return TrainConfig(
            schedule=self.ude_schedule,
            seed=self.seed,
            n_collocation=self.n_collocation,
            solver_steps=self.solver_steps,
            hidden=self.ude_hidden,
            time_input=self.time_input,
        )

    def basis_K(self, subject_id: int) -> float:
        return float(self.basis_K_by_subject.get(int(subject_id), self.basis_K_default))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {}
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                value = [list(v) if isinstance(v, tuple) else v for v in value]
            if isinstance(value, dict):
                value = {str(k): v for k, v in sorted(value.items())}
            out[f.name] = value
        return out


def _get(mapping: dict, key: str, default):
    value = mapping.get(key, default)
    return default if value is None else value


def load_config(path=None, **overrides) -> RunConfig:
    """Build a RunConfig from a YAML file plus keyword overrides.

    Overrides (e.g. subjects=..., out_dir=..., seed=...) win over the file,
    which wins over the defaults.
    """
    raw: dict[str, Any] = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            raw = yaml.safe_load(fh) or {}
        if not isinstance(raw, dict):
            raise ValueError(f"config root must be a mapping, got {type(raw).__name__}")

    base = RunConfig()
    gom = raw.get("gompertz") or {}
    node = raw.get("neural_ode") or {}
    ude = raw.get("ude") or {}
    fore = raw.get("forecast") or {}
    rec = raw.get("recover") or {}

    lam = rec.get("lambda", "auto")
    if isinstance(lam, str):
        if lam != "auto":
            raise ValueError(f"recover.lambda must be a number or 'auto', got {lam!r}")
        lam = None

    kwargs: dict[str, Any] = dict(
        data_path=_get(raw, "data", base.data_path),
        subjects=tuple(_get(raw, "subjects", base.subjects)),
        out_dir=_get(raw, "out_dir", base.out_dir),
        seed=int(_get(raw, "seed", base.seed)),
        n_collocation=int(_get(raw, "n_collocation", base.n_collocation)),
        solver_steps=int(_get(raw, "solver_steps", base.solver_steps)),
        time_input=bool(_get(raw, "time_input", base.time_input)),
        gompertz_a=float(_get(gom, "a", base.gompertz_a)),
        gompertz_K=float(_get(gom, "K", base.gompertz_K)),
        node_hidden=tuple(_get(node, "hidden", base.node_hidden)),
        node_schedule=tuple(tuple(s) for s in _get(node, "schedule", base.node_schedule)),
        ude_hidden=tuple(_get(ude, "hidden", base.ude_hidden)),
        ude_schedule=tuple(tuple(s) for s in _get(ude, "schedule", base.ude_schedule)),
        fractions=tuple(_get(fore, "fractions", base.fractions)),
        recover_n_samples=int(_get(rec, "n_samples", base.recover_n_samples)),
        recover_lambda=None if lam is None else float(lam),
        sig_figs=int(_get(rec, "sig_figs", base.sig_figs)),
        basis_K_default=float(_get(rec, "K", base.basis_K_default)),
        basis_K_by_subject={int(k): float(v) for k, v in _get(rec, "K_by_subject", {}).items()},
    )
    kwargs.update(overrides)
    return RunConfig(**kwargs)
