"""Solver x affinity x subgraph-size benchmark over synthetic scenes.

Every trial draws a fresh scene and one subgraph per size; all solver and
affinity combinations are run on the same subgraphs, so cells within a
trial are paired comparisons.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .affinity import AffinityConfig, NodeMetric
from .errors import SearchBudgetExhausted
from .graph import SCHEMA
from .scenario import ScenarioSpec, generate_scene, node_accuracy
from .solvers import Solver, SolverParams, match

SOLVER_LABELS = {"astar": "A*", "rrwm": "RRWM", "spectral": "Spectral", "brute_force": "Brute"}
AFFINITY_LABELS = {"weighted_cosine": "Unc. Cos", "bhattacharyya": "Bhatt.", "mahalanobis": "Mah."}
DEFAULT_SOLVERS = ("astar", "rrwm", "spectral")
DEFAULT_AFFINITIES = ("weighted_cosine", "bhattacharyya", "mahalanobis")


@dataclass
class Cell:
    accuracies: list[float] = field(default_factory=list)
    solve_s: list[float] = field(default_factory=list)
    total_s: list[float] = field(default_factory=list)
    timeouts: int = 0

    @property
    def accuracy(self) -> float | None:
        """Mean node accuracy over trials, or None when any trial timed out."""
        if self.timeouts or not self.accuracies:
            return None
        return math.fsum(self.accuracies) / len(self.accuracies)


@dataclass
class BenchReport:
    spec: ScenarioSpec
    solvers: tuple[str, ...]
    affinities: tuple[str, ...]
    cells: dict[tuple[str, str, int], Cell]

    def accuracy(self, solver: str, affinity: str, size: int) -> float | None:
        return self.cells[(solver, affinity, size)].accuracy

    def aggregate(self, solver: str, affinity: str) -> float | None:
        """Mean of the row's per-size cells (the table's last column)."""
        vals = [self.accuracy(solver, affinity, s) for s in self.spec.subgraph_sizes]
        if any(v is None for v in vals):
            return None
        return math.fsum(vals) / len(vals)

    def to_dict(self, include_timings: bool = True) -> dict:
        rows = []
        for solver in self.solvers:
            for aff in self.affinities:
                cells = {}
                for size in self.spec.subgraph_sizes:
                    c = self.cells[(solver, aff, size)]
                    rec = {"accuracy": c.accuracy, "trials": len(c.accuracies), "timeouts": c.timeouts}
                    if include_timings:
                        rec["mean_solve_s"] = _mean(c.solve_s)
                        rec["mean_total_s"] = _mean(c.total_s)
                    cells[str(size)] = rec
                rows.append({"solver": solver, "affinity": aff, "cells": cells,
                             "aggregate": self.aggregate(solver, aff)})
        return {"schema": SCHEMA, "scenario": self.spec.to_dict(), "rows": rows}

    def table(self, include_timings: bool = True) -> str:
        sizes = self.spec.subgraph_sizes
        header = ["Solver", "Affinity", *[str(s) for s in sizes], "Avg."]
        if include_timings:
            header.append("Solve ms")
        lines = []
        for solver in self.solvers:
            for k, aff in enumerate(self.affinities):
                row = [SOLVER_LABELS.get(solver, solver) if k == 0 else "",
                       AFFINITY_LABELS.get(aff, aff)]
                row += [_fmt(self.accuracy(solver, aff, s)) for s in sizes]
                row.append(_fmt(self.aggregate(solver, aff)))
                if include_timings:
                    times = [t for s in sizes for t in self.cells[(solver, aff, s)].solve_s]
                    row.append(f"{1000 * _mean(times):.2f}" if times else "--")
                lines.append(row)
        widths = [max(len(r[c]) for r in [header, *lines]) for c in range(len(header))]

        def render(r):
            return "  ".join(v.ljust(w) if c < 2 else v.rjust(w) for c, (v, w) in enumerate(zip(r, widths))).rstrip()

        rule = "-" * len(render(header))
        out = [render(header), rule]
        for k, r in enumerate(lines):
            if k and k % len(self.affinities) == 0:
                out.append(rule)
            out.append(render(r))
        return "\n".join(out) + "\n"


def _mean(xs) -> float:
    return math.fsum(xs) / len(xs) if xs else 0.0


def _fmt(v: float | None) -> str:
    return "--" if v is None else f"{v:.2f}"


def run_trial(spec: ScenarioSpec, trial: int, solvers, affinities, params: SolverParams,
              base_cfg: AffinityConfig) -> list[tuple]:
    scene = generate_scene(spec, trial)
    out = []
    for sub in scene.subgraphs:
        for solver in solvers:
            for aff in affinities:
                cfg = replace(base_cfg, node_metric=NodeMetric(aff))
                try:
                    res = match(sub.graph, scene.parent, cfg, solver, params)
                except SearchBudgetExhausted:
                    out.append((solver, aff, sub.size, None, None, None))
                    continue
                acc = node_accuracy(res.assignment, sub.truth)
                out.append((solver, aff, sub.size, acc, res.timings_s["solve"], sum(res.timings_s.values())))
    return out


def _run_trial_star(args):
    return run_trial(*args)


def run_bench(spec: ScenarioSpec, solvers=DEFAULT_SOLVERS, affinities=DEFAULT_AFFINITIES,
              params: SolverParams | None = None, cfg: AffinityConfig | None = None,
              jobs: int = 1) -> BenchReport:
    solvers = tuple(Solver(s).value for s in solvers)
    affinities = tuple(NodeMetric(a).value for a in affinities)
    params = params or SolverParams()
    cfg = cfg or AffinityConfig()
    cells = {(s, a, z): Cell() for s in solvers for a in affinities for z in spec.subgraph_sizes}
    tasks = [(spec, t, solvers, affinities, params, cfg) for t in range(int(spec.trials))]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            # map() yields in submission order, so the reduction is trial-ordered
            results = list(pool.map(_run_trial_star, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_run_trial_star(t) for t in tasks]
    for records in results:
        for solver, aff, size, acc, solve_s, total_s in records:
            c = cells[(solver, aff, size)]
            if acc is None:
                c.timeouts += 1
            else:
                c.accuracies.append(acc)
                c.solve_s.append(solve_s)
                c.total_s.append(total_s)
    return BenchReport(spec, solvers, affinities, cells)
