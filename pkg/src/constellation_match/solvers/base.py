from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError

DEFAULT_TIMEOUT_S = 300.0


@dataclass(frozen=True)
class SolverParams:
    max_iters: int = 300
    tol: float = 1e-8
    rrwm_alpha: float = 0.2
    rrwm_beta: float = 30.0
    sinkhorn_iters: int = 100
    astar_beam: int = 0
    timeout_s: float = DEFAULT_TIMEOUT_S
    astar_max_children: int = 25_000_000
    seed: int = 0

    def __post_init__(self):
        if int(self.max_iters) < 1:
            raise ValidationError("max_iters must be positive")
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if not 0 < self.rrwm_alpha < 1:
            raise ValidationError("rrwm_alpha must lie in (0, 1)")
        if not self.rrwm_beta > 0:
            raise ValidationError("rrwm_beta must be positive")
        if int(self.sinkhorn_iters) < 1:
            raise ValidationError("sinkhorn_iters must be positive")
        if int(self.astar_beam) < 0:
            raise ValidationError("astar_beam must be non-negative")
        if not self.timeout_s > 0:
            raise ValidationError("timeout_s must be positive")
        if int(self.astar_max_children) < 1:
            raise ValidationError("astar_max_children must be positive")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "SolverParams":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown solver keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(eq=False)
class SoftMatch:
    scores: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.float64)
        if s.ndim != 2:
            raise ValidationError(f"soft match must be a matrix, got shape {s.shape}")
        if not np.all(np.isfinite(s)) or np.any(s < 0):
            raise ValidationError("soft match scores must be finite and non-negative")
        self.scores = s

    @property
    def n1(self) -> int:
        return self.scores.shape[0]

    @property
    def n2(self) -> int:
        return self.scores.shape[1]


@dataclass(eq=False)
class HardMatch:
    """Row -> column assignment in matrix-index space."""

    assignment: dict[int, int]
    objective: float
    stats: dict = field(default_factory=dict)

    def columns(self) -> np.ndarray:
        return np.array([self.assignment[i] for i in range(len(self.assignment))], dtype=np.int64)

    def is_valid(self, n1: int, n2: int) -> bool:
        if sorted(self.assignment) != list(range(n1)):
            return False
        cols = list(self.assignment.values())
        return len(set(cols)) == len(cols) and all(0 <= c < n2 for c in cols)
