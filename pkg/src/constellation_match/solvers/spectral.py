from __future__ import annotations

import numpy as np

from ..affinity import AffinityMatrix
from ..errors import DegenerateAffinityError, ValidationError
from .base import SoftMatch, SolverParams


def _check_nonnegative(K: AffinityMatrix) -> None:
    if not K.is_nonnegative():
        raise ValidationError("affinity matrix must be finite and non-negative")
    if not (np.any(K.diag > 0) or np.any(K.vals > 0)):
        raise DegenerateAffinityError("degenerate affinity")


def solve_spectral(K: AffinityMatrix, p: SolverParams | None = None) -> SoftMatch:
    """Leading eigenvector of K by power iteration, reshaped to n1 x n2.

    Starts from the uniform positive vector and stops once successive
    iterates agree to ``p.tol`` in the max-norm.
    """
    p = p or SolverParams()
    _check_nonnegative(K)
    n = K.size
    v = np.full(n, 1.0 / np.sqrt(n))
    iters = 0
    for iters in range(1, p.max_iters + 1):
        w = K.matvec(v)
        norm = np.linalg.norm(w)
        if norm == 0:
            raise DegenerateAffinityError("degenerate affinity")
        w /= norm
        delta = np.max(np.abs(w - v))
        v = w
        if delta < p.tol:
            break
    scores = np.abs(v).reshape((K.n1, K.n2), order="F")
    out = SoftMatch(scores)
    out.iterations = iters
    return out
