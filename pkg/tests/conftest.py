from __future__ import annotations

import numpy as np
import pytest

from constellation_match.graph import ObjectGraph, ObjectNode


def make_node(nid, position, embedding, u=0.0, var=None):
    emb = np.asarray(embedding, dtype=np.float64)
    if var is None:
        var = np.full(emb.shape[0], u * u + 1e-6)
    return ObjectNode(nid, position, emb, var, u)


def random_graph(rng, n, dim=8, extent=4.0, threshold=2.0, id0=0, frame_id="map"):
    nodes = []
    for k in range(n):
        u = float(rng.uniform(0.05, 0.4))
        nodes.append(make_node(id0 + k, rng.uniform(0, extent, 3), rng.normal(size=dim), u))
    return ObjectGraph.from_nodes(nodes, threshold, frame_id=frame_id)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = pytest.StashKey[dict]()


@pytest.fixture
def acceptance(request):
    """Record one PASS/FAIL verdict per acceptance criterion."""
    results = request.config.stash.setdefault(_ACCEPTANCE, {})

    def record(n: int, ok: bool, detail: str) -> bool:
        results[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(_ACCEPTANCE, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
