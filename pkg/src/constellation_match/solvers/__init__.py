"""QAP solvers and the end-to-end ``match`` pipeline."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..affinity import AffinityConfig, AffinityMatrix, build_affinity_matrix
from ..errors import UnsupportedSolverError, ValidationError
from ..graph import SCHEMA, ObjectGraph
from .astar import AStarProblem, astar_search, solve_astar
from .base import HardMatch, SoftMatch, SolverParams
from .exact import brute_force
from .hungarian import hungarian_round, lexicographic_min_cost, solve_min_cost
from .rrwm import sinkhorn_rectangular, solve_rrwm
from .spectral import solve_spectral


class Solver(str, Enum):
    SPECTRAL = "spectral"
    RRWM = "rrwm"
    ASTAR = "astar"
    BRUTE_FORCE = "brute_force"
    # reserved: needs a trained model, deliberately not provided
    NEURAL = "neural"


@dataclass
class MatchResult:
    """Hard correspondence between two maps plus diagnostics.

    ``assignment`` pairs are (graph-1 node id, graph-2 node id) in the
    orientation the caller passed the graphs in, even when the affinity
    matrix was built with the graphs swapped.
    """

    assignment: list[tuple[int, int]]
    objective: float
    node_affinities: list[float]
    timings_s: dict[str, float]
    solver: str
    affinity: str
    swapped: bool = False
    stats: dict = field(default_factory=dict)

    def mapping(self) -> dict[int, int]:
        return dict(self.assignment)

    def to_dict(self, include_timings: bool = True) -> dict:
        out = {
            "schema": SCHEMA,
            "assignment": [[int(a), int(b)] for a, b in self.assignment],
            "objective": self.objective,
            "node_affinities": self.node_affinities,
            "solver": self.solver,
            "affinity": self.affinity,
            "swapped": self.swapped,
        }
        if include_timings:
            out["timings_s"] = dict(self.timings_s)
        return out


def solve(K: AffinityMatrix, solver: Solver | str, p: SolverParams, edges1=None) -> HardMatch:
    """Run one solver on K and return a hard match (soft outputs are rounded)."""
    solver = Solver(solver)
    if solver is Solver.SPECTRAL:
        return hungarian_round(solve_spectral(K, p), K)
    if solver is Solver.RRWM:
        return hungarian_round(solve_rrwm(K, p), K)
    if solver is Solver.ASTAR:
        if edges1 is None:
            raise ValidationError("A* needs the graph-1 edge list")
        return astar_search(K, edges1, p)
    if solver is Solver.BRUTE_FORCE:
        return brute_force(K)
    raise UnsupportedSolverError(f"solver {solver.value!r} is unsupported")


def _parse_solver(solver) -> Solver:
    try:
        return Solver(solver)
    except ValueError:
        choices = ", ".join(s.value for s in Solver)
        raise ValidationError(f"unknown solver {solver!r} (choose from {choices})") from None


def match(g1: ObjectGraph, g2: ObjectGraph, cfg: AffinityConfig | None = None,
          solver: Solver | str = Solver.RRWM, p: SolverParams | None = None) -> MatchResult:
    cfg = cfg or AffinityConfig()
    p = p or SolverParams()
    solver = _parse_solver(solver)
    if solver is Solver.NEURAL:
        raise UnsupportedSolverError("solver 'neural' is unsupported")
    if len(g1) == 0 or len(g2) == 0:
        raise ValidationError("empty graph")

    t0 = time.perf_counter()
    # adjacency: dense edge-length matrices, as a solver front end would build them
    g1.edge_length_matrix()
    g2.edge_length_matrix()
    t1 = time.perf_counter()
    K = build_affinity_matrix(g1, g2, cfg)
    t2 = time.perf_counter()
    small = g2 if K.swapped else g1
    i, j, _ = small.edge_index_arrays()
    hard = solve(K, solver, p, edges1=list(zip(i.tolist(), j.tolist())))
    t3 = time.perf_counter()

    pairs = []
    affs = []
    table = K.raw_node_affinity
    for row, col in sorted(hard.assignment.items()):
        a, b = K.ids1[row], K.ids2[col]
        pairs.append((b, a) if K.swapped else (a, b))
        affs.append(float(table[row, col]))
    if K.swapped:
        order = np.argsort([pr[0] for pr in pairs], kind="stable")
        pairs = [pairs[k] for k in order]
        affs = [affs[k] for k in order]
    return MatchResult(
        assignment=pairs,
        objective=hard.objective,
        node_affinities=affs,
        timings_s={"adjacency": t1 - t0, "affinity": t2 - t1, "solve": t3 - t2},
        solver=solver.value,
        affinity=cfg.node_metric.value,
        swapped=K.swapped,
        stats=dict(hard.stats),
    )


__all__ = [
    "AStarProblem", "HardMatch", "MatchResult", "SoftMatch", "Solver", "SolverParams",
    "astar_search", "brute_force", "hungarian_round", "lexicographic_min_cost", "match",
    "sinkhorn_rectangular", "solve", "solve_astar", "solve_min_cost", "solve_rrwm", "solve_spectral",
]
