"""Reweighted random walks for graph matching.

The walker moves on the association graph (transition matrix K scaled by
its largest row sum).  Each step is blended with a jump distribution that
sharpens the current iterate exponentially and projects it onto the
matching constraints with a rectangular Sinkhorn pass.
"""

from __future__ import annotations

import numpy as np

from ..affinity import AffinityMatrix
from ..errors import DegenerateAffinityError
from .base import SoftMatch, SolverParams
from .spectral import _check_nonnegative


def sinkhorn_rectangular(s: np.ndarray, max_iters: int = 100, tol: float = 1e-6) -> np.ndarray:
    """Scale a positive n1 x n2 matrix (n1 <= n2) so rows sum to 1 and
    columns sum to at most 1.

    Column scaling only ever shrinks over-full columns, which is the
    inequality side of the constraint set.  The final step is always a row
    normalization, so the row contract holds exactly on return.
    """
    x = np.array(s, dtype=np.float64)
    for _ in range(max_iters):
        x /= x.sum(axis=1)[:, None]
        colsum = x.sum(axis=0)
        if colsum.max() <= 1.0 + tol:
            break
        np.maximum(colsum, 1.0, out=colsum)
        x /= colsum
    x /= x.sum(axis=1)[:, None]
    return x


def solve_rrwm(K: AffinityMatrix, p: SolverParams | None = None) -> SoftMatch:
    p = p or SolverParams()
    _check_nonnegative(K)
    n1, n2, n = K.n1, K.n2, K.size
    dmax = float(np.max(K.row_sums()))
    if dmax <= 0:
        raise DegenerateAffinityError("degenerate affinity")
    scale = 1.0 / dmax
    alpha, beta = p.rrwm_alpha, p.rrwm_beta

    x = np.full(n, 1.0 / n)
    iters = 0
    for iters in range(1, p.max_iters + 1):
        prev = x
        walk = K.matvec(x) * scale
        total = walk.sum()
        if total <= 0:
            raise DegenerateAffinityError("degenerate affinity")
        walk /= total
        peak = walk.max()
        sharp = np.exp(beta * (walk / peak - 1.0)).reshape((n1, n2), order="F")
        jump = sinkhorn_rectangular(sharp, p.sinkhorn_iters).ravel(order="F")
        jump /= jump.sum()
        x = alpha * walk + (1.0 - alpha) * jump
        x /= x.sum()
        if np.max(np.abs(x - prev)) < p.tol:
            break
    out = SoftMatch(x.reshape((n1, n2), order="F"))
    out.iterations = iters
    return out
