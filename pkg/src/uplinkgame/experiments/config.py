"""Experiment configuration, read from and written to JSON.

A config is one JSON object. Unknown keys are rejected so that typos do not
silently fall back to defaults. See the README for the field reference.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

KINDS = ("convergence", "collision_vs_K", "efficiency_vs_K", "efficiency_vs_Bc", "table1")
ALGORITHMS = ("aiwf", "siwf", "pgd", "simultaneous_iwf")


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to regenerate one experiment.

    The grid is the product ``n_users x n_channels x coherence_bandwidths``
    (``None`` in the last list means independent fading). Replicate ``r``
    draws every instance of the grid from seed ``base_seed + r``.

    For the equilibrium studies (every kind except ``convergence``) the
    profile is the point reached by ``equilibrium_algorithm``: ``"siwf"``
    runs sequential IWF until the best-response residual is below
    ``residual_tol``; ``"aiwf"`` runs ``max_iters`` averaged IWF updates.
    """

    kind: str
    n_users: tuple = (10,)
    n_channels: tuple = (32,)
    coherence_bandwidths: tuple = (None,)
    replicates: int = 1
    base_seed: int = 0
    noise: float = 1e-2
    budget: float = 1.0
    area_side: float = 10.0
    # convergence runs
    algorithms: tuple = ALGORITHMS
    max_iters: int = 500
    schedule: dict = field(default_factory=lambda: {"a": 1.0, "b": 2.0})
    pgd_schedule: dict = field(default_factory=lambda: {"a": 1.0, "b": 2.0})
    pgd_step_scale: Optional[float] = None
    divergence_guard: int = 10_000
    # equilibrium studies
    equilibrium_algorithm: str = "siwf"
    residual_tol: float = 1e-10
    siwf_max_iters: int = 1_000_000
    certify: bool = True
    record_every: int = 1
    output: str = "results"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}; expected one of {KINDS}")
        for name in ("n_users", "n_channels", "coherence_bandwidths", "algorithms"):
            v = getattr(self, name)
            object.__setattr__(self, name, tuple(v) if isinstance(v, (list, tuple)) else (v,))
        if self.replicates < 1:
            raise ValueError("replicates must be at least 1")
        if not (0 <= self.base_seed and self.base_seed + self.replicates <= 2 ** 64):
            raise ValueError("seeds must stay in the unsigned 64-bit range")
        if any(n < 1 for n in self.n_users) or any(k < 1 for k in self.n_channels):
            raise ValueError("need at least one user and one channel")
        for bc in self.coherence_bandwidths:
            if bc is not None and not (0 < bc <= 1):
                raise ValueError(f"coherence bandwidth {bc} outside (0, 1]")
        bad = set(self.algorithms) - set(ALGORITHMS)
        if bad:
            raise ValueError(f"unknown algorithms {sorted(bad)}")
        if self.equilibrium_algorithm not in ("siwf", "aiwf"):
            raise ValueError("equilibrium_algorithm must be 'siwf' or 'aiwf'")
        if self.max_iters < 1 or self.record_every < 1:
            raise ValueError("max_iters and record_every must be positive")

    def seeds(self):
        return [self.base_seed + r for r in range(self.replicates)]

    def with_overrides(self, replicates=None, seed=None) -> "ExperimentConfig":
        changes = {}
        if replicates is not None:
            changes["replicates"] = replicates
        if seed is not None:
            changes["base_seed"] = seed
        return replace(self, **changes)

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("n_users", "n_channels", "coherence_bandwidths", "algorithms"):
            d[name] = list(d[name])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(json.loads(Path(path).read_text()))
