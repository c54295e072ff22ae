"""Node/edge affinities and the Lawler-QAP affinity matrix.

Index convention: the assignment hypothesis "node i of graph 1 matches
node a of graph 2" lives at flat index ``i + a * n1`` (column-major vec of
the n1 x n2 assignment matrix).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .graph import ObjectGraph, ObjectNode

UNDERWATER_EDGE_SIGMA = 0.5
VEHICLE_EDGE_SIGMA = 100.0


class NodeMetric(str, Enum):
    WEIGHTED_COSINE = "weighted_cosine"
    BHATTACHARYYA = "bhattacharyya"
    MAHALANOBIS = "mahalanobis"


@dataclass(frozen=True)
class AffinityConfig:
    node_metric: NodeMetric = NodeMetric.WEIGHTED_COSINE
    edge_sigma: float = UNDERWATER_EDGE_SIGMA
    distance_to_affinity_scale: float = 1.0

    def __post_init__(self):
        try:
            object.__setattr__(self, "node_metric", NodeMetric(self.node_metric))
        except ValueError:
            choices = ", ".join(m.value for m in NodeMetric)
            raise ValidationError(f"unknown node metric {self.node_metric!r} (choose from {choices})") from None
        if not self.edge_sigma > 0:
            raise ValidationError(f"edge_sigma must be positive, got {self.edge_sigma}")
        if not self.distance_to_affinity_scale > 0:
            raise ValidationError(f"distance_to_affinity_scale must be positive, got {self.distance_to_affinity_scale}")

    def to_dict(self) -> dict:
        return {
            "node_metric": self.node_metric.value,
            "edge_sigma": self.edge_sigma,
            "distance_to_affinity_scale": self.distance_to_affinity_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AffinityConfig":
        known = {"node_metric", "edge_sigma", "distance_to_affinity_scale"}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown affinity keys: {sorted(unknown)}")
        return cls(**d)


# -- single-pair affinities ----------------------------------------------------

def _check_pair(a: ObjectNode, b: ObjectNode) -> None:
    if a.dim != b.dim:
        raise ValidationError(f"embedding dim mismatch: {a.dim} vs {b.dim}")


def _check_positive_var(a: ObjectNode, b: ObjectNode) -> None:
    if np.any(a.embedding_var <= 0) or np.any(b.embedding_var <= 0):
        raise ValidationError("zero variance in embedding covariance")


def node_affinity_weighted_cosine(a: ObjectNode, b: ObjectNode) -> float:
    _check_pair(a, b)
    na = np.linalg.norm(a.embedding_mean)
    nb = np.linalg.norm(b.embedding_mean)
    if na == 0 or nb == 0:
        raise ValidationError("zero-norm embedding")
    if np.array_equal(a.embedding_mean, b.embedding_mean):
        cos = 1.0
    else:
        cos = float(np.dot(a.embedding_mean, b.embedding_mean) / (na * nb))
    return cos / (1.0 + 0.5 * (a.scalar_uncertainty + b.scalar_uncertainty))


def bhattacharyya_distance(a: ObjectNode, b: ObjectNode) -> float:
    """Closed-form Bhattacharyya distance of two diagonal Gaussians.

    Determinants enter only through sums of logs, which stays finite at
    D = 384 where the raw products would under/overflow.
    """
    _check_pair(a, b)
    _check_positive_var(a, b)
    v1, v2 = a.embedding_var, b.embedding_var
    pooled = 0.5 * (v1 + v2)
    diff = a.embedding_mean - b.embedding_mean
    quad = float(np.sum(diff * diff / pooled))
    logdet = float(np.sum(np.log(pooled)) - 0.5 * (np.sum(np.log(v1)) + np.sum(np.log(v2))))
    return 0.125 * quad + 0.5 * logdet


def mahalanobis_distance(a: ObjectNode, b: ObjectNode) -> float:
    _check_pair(a, b)
    _check_positive_var(a, b)
    pooled = 0.5 * (a.embedding_var + b.embedding_var)
    diff = a.embedding_mean - b.embedding_mean
    return math.sqrt(float(np.sum(diff * diff / pooled)))


def node_affinity_bhattacharyya(a: ObjectNode, b: ObjectNode, gamma: float = 1.0) -> float:
    return math.exp(-bhattacharyya_distance(a, b) / gamma)


def node_affinity_mahalanobis(a: ObjectNode, b: ObjectNode, gamma: float = 1.0) -> float:
    return math.exp(-mahalanobis_distance(a, b) / gamma)


def node_affinity(a: ObjectNode, b: ObjectNode, cfg: AffinityConfig) -> float:
    if cfg.node_metric is NodeMetric.WEIGHTED_COSINE:
        return node_affinity_weighted_cosine(a, b)
    if cfg.node_metric is NodeMetric.BHATTACHARYYA:
        return node_affinity_bhattacharyya(a, b, cfg.distance_to_affinity_scale)
    return node_affinity_mahalanobis(a, b, cfg.distance_to_affinity_scale)


def edge_affinity(len1, len2, sigma: float):
    """Gaussian of the edge-length difference; works on scalars or arrays."""
    if not sigma > 0:
        raise ValidationError(f"sigma must be positive, got {sigma}")
    d = np.subtract(len1, len2)
    out = np.exp(-(d * d) / sigma)
    return float(out) if np.ndim(out) == 0 else out


# -- batched node affinities ------------------------------------------------------

def _stack(g: ObjectGraph) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = np.array([n.embedding_mean for n in g.nodes])
    var = np.array([n.embedding_var for n in g.nodes])
    unc = np.array([n.scalar_uncertainty for n in g.nodes])
    return mean, var, unc


def _chunks(n1: int, n2: int, dim: int, budget: int = 4_000_000):
    rows = max(1, budget // max(1, n2 * dim))
    for start in range(0, n1, rows):
        yield slice(start, min(n1, start + rows))


def _exact_self_cosine(cos: np.ndarray, m1: np.ndarray, m2: np.ndarray) -> None:
    """Pin the cosine of bitwise-identical embeddings to exactly 1.0
    (rounding in the dot product can land one ulp below it)."""
    for i, j in zip(*np.nonzero(cos > 1.0 - 1e-9)):
        if np.array_equal(m1[i], m2[j]):
            cos[i, j] = 1.0


def node_affinity_table(g1: ObjectGraph, g2: ObjectGraph, cfg: AffinityConfig) -> np.ndarray:
    """n1 x n2 table of raw (unclamped) node affinities."""
    m1, v1, u1 = _stack(g1)
    m2, v2, u2 = _stack(g2)
    if cfg.node_metric is NodeMetric.WEIGHTED_COSINE:
        n1n = np.linalg.norm(m1, axis=1)
        n2n = np.linalg.norm(m2, axis=1)
        cos = (m1 @ m2.T) / np.outer(n1n, n2n)
        _exact_self_cosine(cos, m1, m2)
        return cos / (1.0 + 0.5 * (u1[:, None] + u2[None, :]))

    if np.any(v1 <= 0) or np.any(v2 <= 0):
        raise ValidationError("zero variance in embedding covariance")
    gamma = cfg.distance_to_affinity_scale
    out = np.empty((len(g1), len(g2)))
    logdet2 = np.sum(np.log(v2), axis=1)
    logdet1 = np.sum(np.log(v1), axis=1)
    for rows in _chunks(len(g1), len(g2), g1.dim):
        pooled = 0.5 * (v1[rows, None, :] + v2[None, :, :])
        diff = m1[rows, None, :] - m2[None, :, :]
        quad = np.sum(diff * diff / pooled, axis=2)
        if cfg.node_metric is NodeMetric.MAHALANOBIS:
            out[rows] = np.exp(-np.sqrt(quad) / gamma)
        else:
            logdet = np.sum(np.log(pooled), axis=2) - 0.5 * (logdet1[rows, None] + logdet2[None, :])
            out[rows] = np.exp(-(0.125 * quad + 0.5 * logdet) / gamma)
    return out


# -- the QAP matrix -------------------------------------------------------------------

@dataclass(eq=False)
class AffinityMatrix:
    """Sparse Lawler-QAP affinity matrix.

    ``diag`` holds node affinities (negatives already clamped to zero);
    ``rows/cols/vals`` hold every ordered off-diagonal entry, both
    orientations included, so the stored pattern is symmetric.
    """

    n1: int
    n2: int
    diag: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray
    ids1: tuple[int, ...] = ()
    ids2: tuple[int, ...] = ()
    swapped: bool = False
    raw_node_affinity: np.ndarray | None = None
    _csr: sp.csr_matrix | None = field(default=None, init=False, repr=False)

    @property
    def size(self) -> int:
        return self.n1 * self.n2

    @staticmethod
    def flat(i: int, a: int, n1: int) -> int:
        return i + a * n1

    def node_table(self) -> np.ndarray:
        """Diagonal reshaped to n1 x n2."""
        return self.diag.reshape((self.n1, self.n2), order="F")

    def offdiag(self) -> sp.csr_matrix:
        if self._csr is None:
            n = self.size
            coo = sp.coo_matrix((self.vals, (self.rows, self.cols)), shape=(n, n))
            self._csr = coo.tocsr()
        return self._csr

    def offdiag_entries(self) -> dict[tuple[tuple[int, int], tuple[int, int]], float]:
        out = {}
        n1 = self.n1
        for r, c, v in zip(self.rows.tolist(), self.cols.tolist(), self.vals.tolist()):
            out[((r % n1, r // n1), (c % n1, c // n1))] = v
        return out

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.diag * x + self.offdiag() @ x

    def row_sums(self) -> np.ndarray:
        return self.diag + np.asarray(self.offdiag().sum(axis=1)).ravel()

    def to_dense(self) -> np.ndarray:
        out = np.zeros((self.size, self.size))
        out[self.rows, self.cols] = self.vals
        out[np.arange(self.size), np.arange(self.size)] += self.diag
        return out

    def is_symmetric(self, tol: float = 0.0) -> bool:
        m = self.offdiag()
        diff = abs(m - m.T)
        return diff.nnz == 0 or diff.max() <= tol

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.diag >= 0) and np.all(self.vals >= 0)
                    and np.all(np.isfinite(self.diag)) and np.all(np.isfinite(self.vals)))

    def objective(self, assignment) -> float:
        """vec(X)^T K vec(X) for a row -> column assignment.

        Summed with ``math.fsum`` so the value depends only on the set of
        terms, never on the order they are visited in.
        """
        cols = _assignment_columns(assignment, self.n1)
        idx = np.arange(self.n1) + cols * self.n1
        terms = self.diag[idx].tolist()
        if self.n1 > 1:
            sub = self.offdiag()[idx][:, idx]
            terms.extend(sub.data.tolist())
        return math.fsum(terms)


def _assignment_columns(assignment, n1: int) -> np.ndarray:
    if isinstance(assignment, dict):
        if sorted(assignment) != list(range(n1)):
            raise ValidationError("assignment must be total on graph 1")
        return np.array([assignment[i] for i in range(n1)], dtype=np.int64)
    cols = np.asarray(assignment, dtype=np.int64)
    if cols.shape != (n1,):
        raise ValidationError(f"assignment must have {n1} entries")
    return cols


def build_affinity_matrix(g1: ObjectGraph, g2: ObjectGraph, cfg: AffinityConfig | None = None) -> AffinityMatrix:
    """Assemble K for matching g1 (the candidate subgraph) into g2.

    If g1 is the larger graph the two are swapped so that n1 <= n2, and
    ``swapped`` is set on the result.
    """
    cfg = cfg or AffinityConfig()
    if len(g1) == 0 or len(g2) == 0:
        raise ValidationError("empty graph")
    if g1.dim != g2.dim:
        raise ValidationError(f"embedding dim mismatch between graphs: {g1.dim} vs {g2.dim}")
    swapped = len(g1) > len(g2)
    if swapped:
        g1, g2 = g2, g1
    n1, n2 = len(g1), len(g2)

    raw = node_affinity_table(g1, g2, cfg)
    diag = np.maximum(raw, 0.0).ravel(order="F")

    i1, j1, l1 = g1.edge_index_arrays()
    i2, j2, l2 = g2.edge_index_arrays()
    # both orientations of each undirected edge
    s1, t1, L1 = np.concatenate([i1, j1]), np.concatenate([j1, i1]), np.concatenate([l1, l1])
    s2, t2, L2 = np.concatenate([i2, j2]), np.concatenate([j2, i2]), np.concatenate([l2, l2])
    rows = (s1[:, None] + s2[None, :] * n1).ravel()
    cols = (t1[:, None] + t2[None, :] * n1).ravel()
    vals = edge_affinity(L1[:, None], L2[None, :], cfg.edge_sigma)
    vals = np.asarray(vals, dtype=np.float64).ravel()

    return AffinityMatrix(
        n1=n1, n2=n2, diag=diag,
        rows=rows.astype(np.int64), cols=cols.astype(np.int64), vals=vals,
        ids1=tuple(g1.ids), ids2=tuple(g2.ids), swapped=swapped, raw_node_affinity=raw,
    )
