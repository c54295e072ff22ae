from __future__ import annotations

import itertools
import math

import numpy as np

from ..affinity import AffinityMatrix
from ..errors import ValidationError
from .base import HardMatch

BRUTE_FORCE_LIMIT = 10_000_000
_BATCH = 20_000
_DENSE_LIMIT = 5_000


def _tol(x: float) -> float:
    return 1e-9 * max(1.0, abs(x))


def n_injective(n1: int, n2: int) -> int:
    return math.perm(n2, n1) if n1 <= n2 else 0


def brute_force(K: AffinityMatrix, limit: int = BRUTE_FORCE_LIMIT) -> HardMatch:
    """Exhaustive maximizer of the QAP over all injective assignments.

    Candidates are visited in lexicographic order and only a strictly
    better value replaces the incumbent, so ties resolve to the
    lexicographically smallest assignment.
    """
    n1, n2 = K.n1, K.n2
    count = n_injective(n1, n2)
    if count == 0:
        raise ValidationError(f"no injective assignment for n1={n1} > n2={n2}")
    if count > limit:
        raise ValidationError(f"instance too large for brute force: {count} assignments > {limit}")

    dense = K.to_dense() if K.size <= _DENSE_LIMIT else None
    off = K.offdiag()
    rows = np.arange(n1)
    best_val = -math.inf
    best = None
    perms = itertools.permutations(range(n2), n1)
    while True:
        batch = np.array(list(itertools.islice(perms, _BATCH)), dtype=np.int64)
        if batch.size == 0:
            break
        batch = batch.reshape(-1, n1)
        idx = rows[None, :] + batch * n1
        if dense is not None:
            vals = dense[idx[:, :, None], idx[:, None, :]].sum(axis=(1, 2))
        else:
            vals = K.diag[idx].sum(axis=1)
            for a in range(n1):
                for b in range(n1):
                    if a != b:
                        vals = vals + np.asarray(off[idx[:, a], idx[:, b]]).ravel()
        top = float(vals.max())
        if top < best_val - _tol(top):
            continue
        # re-score near-ties exactly; strict > keeps the lexicographically first
        for k in np.flatnonzero(vals >= top - _tol(top)).tolist():
            val = K.objective(batch[k])
            if val > best_val:
                best_val = val
                best = batch[k]
    assignment = {i: int(a) for i, a in enumerate(best.tolist())}
    return HardMatch(assignment, K.objective(assignment), {"evaluated": count})
