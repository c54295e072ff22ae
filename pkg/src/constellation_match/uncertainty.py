"""Semantic uncertainty: ranking loss for uncertainty heads and per-landmark
Kalman tracking of embedding distributions with diagonal covariances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInnovationError, ValidationError

VARIANCE_FLOOR = 1e-6


@dataclass(frozen=True)
class UncertaintySample:
    u1: float
    u2: float
    task_loss1: float
    task_loss2: float
    margin: float = 0.1

    def __post_init__(self):
        if not self.margin > 0:
            raise ValidationError(f"margin must be positive, got {self.margin}")
        vals = (self.u1, self.u2, self.task_loss1, self.task_loss2, self.margin)
        if not all(np.isfinite(v) for v in vals):
            raise ValidationError("uncertainty sample has non-finite fields")


def ranking_loss(s: UncertaintySample, flip_sign: bool = False) -> float:
    """Pairwise hinge loss that ranks two inputs by predicted uncertainty.

    The indicator is +1 when input 1 has the larger task loss and -1
    otherwise (ties included); the loss is ``max(0, ind * (u1 - u2 + m))``.
    ``flip_sign`` negates the indicator for callers who want the opposite
    ordering convention.
    """
    indicator = 1.0 if s.task_loss1 > s.task_loss2 else -1.0
    if flip_sign:
        indicator = -indicator
    return max(0.0, indicator * (s.u1 - s.u2 + s.margin))


@dataclass(frozen=True, eq=False)
class LandmarkBelief:
    mean: np.ndarray
    var: np.ndarray
    n_updates: int = 1

    def __post_init__(self):
        mean = np.array(self.mean, dtype=np.float64)
        var = np.array(self.var, dtype=np.float64)
        if mean.ndim != 1 or var.shape != mean.shape:
            raise ValidationError(f"belief shape mismatch: mean {mean.shape}, var {var.shape}")
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(var))):
            raise ValidationError("belief has non-finite entries")
        if np.any(var < 0):
            raise ValidationError("belief variance must be non-negative")
        mean.setflags(write=False)
        var.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "var", var)

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    def scalar_uncertainty(self) -> float:
        """Square root of the mean posterior variance."""
        return float(np.sqrt(np.mean(self.var)))


def kalman_init(first_obs_embedding, first_obs_var) -> LandmarkBelief:
    """Prior belief taken directly from the first observation."""
    mean = np.asarray(first_obs_embedding, dtype=np.float64)
    var = np.asarray(first_obs_var, dtype=np.float64)
    if mean.shape != var.shape or mean.ndim != 1:
        raise ValidationError(f"dimension mismatch: embedding {mean.shape} vs variance {var.shape}")
    if np.any(~(var > 0)):
        raise ValidationError("prior variance entries must be strictly positive")
    return LandmarkBelief(mean, var, 1)


def kalman_update(b: LandmarkBelief, y, r) -> LandmarkBelief:
    """Fuse one direct measurement ``y`` with diagonal noise ``r``.

    Every covariance is diagonal, so the innovation inverse is an
    element-wise reciprocal and the whole update is O(D).
    """
    y = np.asarray(y, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if y.shape != b.mean.shape or r.shape != b.mean.shape:
        raise ValidationError(f"dimension mismatch: belief {b.mean.shape}, y {y.shape}, r {r.shape}")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValidationError("measurement variance must be finite and non-negative")
    s = b.var + r
    if np.any(s == 0):
        raise DegenerateInnovationError("degenerate innovation")
    gain = b.var / s
    mean = b.mean + gain * (y - b.mean)
    var = b.var - gain * s * gain
    # guards the last ulp when r == 0
    var = np.where(r == 0, 0.0, np.maximum(var, 0.0))
    return LandmarkBelief(mean, var, b.n_updates + 1)


def scalar_to_variance(u: float, dim: int) -> np.ndarray:
    """Isotropic diagonal from an image-level score read as a standard deviation."""
    u = float(u)
    if not (np.isfinite(u) and u >= 0):
        raise ValidationError(f"uncertainty must be non-negative, got {u}")
    if int(dim) < 1:
        raise ValidationError(f"dim must be positive, got {dim}")
    return np.full(int(dim), u * u + VARIANCE_FLOOR)
