"""Exact best-first (A*) search for the QAP.

Rows of K (graph-1 nodes) are assigned in index order.  A partial
assignment's score is the QAP value of the pairs fixed so far; its
optimistic completion bound adds, for every unassigned graph-1 node, the
best node affinity still available to it, plus the largest possible edge
affinity for every graph-1 edge that still has an unassigned endpoint.

Children of an expanded state are generated and sorted together, then fed
to the open list one at a time (a child's next sibling is queued only when
the child itself is popped).  The open list therefore grows by O(1) per
expansion instead of O(n2).
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

import numpy as np

from ..affinity import AffinityConfig, AffinityMatrix, build_affinity_matrix
from ..errors import SearchBudgetExhausted, ValidationError
from ..graph import ObjectGraph
from .base import HardMatch, SoftMatch, SolverParams
from .hungarian import hungarian_round


class AStarProblem:
    """Scores and bounds for partial assignments over one affinity matrix."""

    def __init__(self, K: AffinityMatrix, edges1):
        self.K = K
        self.n1, self.n2 = K.n1, K.n2
        self.node = np.maximum(K.node_table(), 0.0)
        self.off = K.offdiag()
        self.max_edge = float(K.vals.max()) if K.vals.size else 0.0
        self.earlier = [[] for _ in range(self.n1)]
        open_edges = np.zeros(self.n1 + 1, dtype=np.int64)
        for i, j in edges1:
            i, j = (int(i), int(j)) if i < j else (int(j), int(i))
            self.earlier[j].append(i)
            # edge (i, j) is still open while fewer than j+1 rows are assigned
            open_edges[: j + 1] += 1
        self.open_edges = open_edges
        scale = max(1.0, float(np.max(self.node, initial=0.0)), self.max_edge)
        self.slack = 1e-9 * scale * max(1, self.n1)

    def gains(self, path: tuple[int, ...]) -> np.ndarray:
        """Objective increase for assigning the next row to each column."""
        j = len(path)
        n1 = self.n1
        gain = self.node[j].copy()
        indptr, indices, data = self.off.indptr, self.off.indices, self.off.data
        for i in self.earlier[j]:
            r = i + path[i] * n1
            cols = indices[indptr[r]:indptr[r + 1]]
            vals = data[indptr[r]:indptr[r + 1]]
            hit = cols % n1 == j
            np.add.at(gain, cols[hit] // n1, 2.0 * vals[hit])
        return gain

    def gain(self, path: tuple[int, ...], b: int) -> float:
        return float(self.gains(path)[b])

    def heuristic(self, path: tuple[int, ...]) -> float:
        """Upper bound on the objective still obtainable after ``path``."""
        d = len(path)
        if d == self.n1:
            return 0.0
        free = np.ones(self.n2, dtype=bool)
        free[list(path)] = False
        node_bound = float(np.sum(np.max(self.node[d:][:, free], axis=1)))
        return node_bound + 2.0 * self.max_edge * float(self.open_edges[d]) + self.slack

    def child_bounds(self, path: tuple[int, ...], free: np.ndarray) -> np.ndarray:
        """Heuristic of ``path + (b,)`` for every column b (vectorized)."""
        d = len(path) + 1
        if d == self.n1:
            return np.zeros(self.n2)
        rest = np.where(free[None, :], self.node[d:], -np.inf)
        rows = np.arange(rest.shape[0])
        arg1 = np.argmax(rest, axis=1)
        top1 = rest[rows, arg1]
        rest[rows, arg1] = -np.inf
        top2 = np.max(rest, axis=1)
        top2 = np.where(np.isfinite(top2), top2, 0.0)
        base = float(np.sum(top1))
        loss = np.zeros(self.n2)
        np.add.at(loss, arg1, top1 - top2)
        return base - loss + 2.0 * self.max_edge * float(self.open_edges[d]) + self.slack


@dataclass
class _Family:
    path: tuple[int, ...]
    score: float
    f: np.ndarray
    cols: np.ndarray
    g: np.ndarray


def astar_search(K: AffinityMatrix, edges1, p: SolverParams | None = None) -> HardMatch:
    p = p or SolverParams()
    if K.n1 > K.n2:
        raise ValidationError(f"A* requires n1 <= n2, got {K.n1} > {K.n2}")
    prob = AStarProblem(K, edges1)
    n1, n2 = prob.n1, prob.n2
    deadline = time.monotonic() + p.timeout_s
    beam = int(p.astar_beam)

    # a feasible solution to prune against; pruning keeps ties
    incumbent = hungarian_round(SoftMatch(prob.node), K).objective if beam == 0 else -math.inf
    prune_below = incumbent - prob.slack

    heap: list = []
    counter = 0
    expanded = 0
    stored = 0
    solutions: list[tuple[tuple[int, ...], float]] = []
    best_seen = -math.inf

    def expand(path: tuple[int, ...], score: float) -> None:
        nonlocal counter, stored
        free = np.ones(n2, dtype=bool)
        if path:
            free[list(path)] = False
        gains = prob.gains(path)
        g = score + gains
        f = g + prob.child_bounds(path, free)
        cols = np.flatnonzero(free & (f >= prune_below))
        if cols.size == 0:
            return
        order = np.lexsort((cols, -f[cols]))
        cols = cols[order]
        if beam > 0:
            cols = cols[:beam]
        fam = _Family(path, score, f[cols], cols.astype(np.int32), g[cols])
        stored += cols.size
        if stored > p.astar_max_children:
            raise SearchBudgetExhausted("search budget exhausted (memory limit)", expanded=expanded)
        counter += 1
        heapq.heappush(heap, (-float(fam.f[0]), path + (int(cols[0]),), counter, fam, 0))

    expand((), 0.0)
    while heap:
        negf, child, _, fam, k = heapq.heappop(heap)
        if solutions and -negf < best_seen - prob.slack:
            break
        if k + 1 < fam.cols.size:
            counter += 1
            nxt = (fam.path + (int(fam.cols[k + 1]),))
            heapq.heappush(heap, (-float(fam.f[k + 1]), nxt, counter, fam, k + 1))
        score = float(fam.g[k])
        if len(child) == n1:
            solutions.append((child, score))
            best_seen = max(best_seen, score)
            continue
        expanded += 1
        if expanded % 64 == 0 and time.monotonic() > deadline:
            raise SearchBudgetExhausted(elapsed_s=p.timeout_s, expanded=expanded)
        expand(child, score)

    if not solutions:
        raise SearchBudgetExhausted("search budget exhausted (no feasible completion)", expanded=expanded)
    best_path, best_val = None, -math.inf
    for path, _ in sorted(solutions):
        val = K.objective(np.array(path))
        if val > best_val:
            best_path, best_val = path, val
    assignment = {i: int(a) for i, a in enumerate(best_path)}
    return HardMatch(assignment, best_val, {"expanded": expanded})


def solve_astar(g1: ObjectGraph, g2: ObjectGraph, cfg: AffinityConfig | None = None,
                p: SolverParams | None = None, K: AffinityMatrix | None = None) -> HardMatch:
    """Globally optimal match of g1 into g2 (beam 0), or beam-limited search."""
    if len(g1) > len(g2):
        raise ValidationError(f"A* requires n1 <= n2, got {len(g1)} > {len(g2)}")
    if K is None:
        K = build_affinity_matrix(g1, g2, cfg)
    i, j, _ = g1.edge_index_arrays()
    return astar_search(K, list(zip(i.tolist(), j.tolist())), p)
