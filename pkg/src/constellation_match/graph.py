"""Object-graph data model and edge construction.

A local map is a set of localized objects (``ObjectNode``) joined by
undirected, distance-weighted edges.  Edges are never stored in map files;
they are always derived from node positions with :func:`build_edges`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ValidationError

SCHEMA = "constellation-match/1"
DEFAULT_DIM = 384
UNDERWATER_EDGE_THRESHOLD_M = 2.0
VEHICLE_EDGE_THRESHOLD_M = 100.0


def _frozen_array(values, name: str, length: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if length is not None and arr.shape[0] != length:
        raise ValidationError(f"{name} must have length {length}, got {arr.shape[0]}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    arr.setflags(write=False)
    return arr


def lift_position(position) -> np.ndarray:
    """Return a 3-vector; 2-D positions get z = 0."""
    p = np.asarray(position, dtype=np.float64).ravel()
    if p.shape[0] == 2:
        p = np.append(p, 0.0)
    if p.shape[0] != 3:
        raise ValidationError(f"position must have 2 or 3 coordinates, got {p.shape[0]}")
    return p


@dataclass(frozen=True, eq=False)
class ObjectNode:
    """A mapped object: where it is and what its embedding distribution looks like."""

    id: int
    position: np.ndarray
    embedding_mean: np.ndarray
    embedding_var: np.ndarray
    scalar_uncertainty: float = 0.0
    obs_count: int = 1
    last_seen: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "id", int(self.id))
        object.__setattr__(self, "position", _frozen_array(lift_position(self.position), "position", 3))
        mean = _frozen_array(self.embedding_mean, "embedding_mean")
        var = _frozen_array(self.embedding_var, "embedding_var", mean.shape[0])
        if mean.shape[0] < 1:
            raise ValidationError("embedding must have at least one dimension")
        if np.any(var < 0):
            raise ValidationError(f"node {self.id}: embedding_var has negative entries")
        if not np.linalg.norm(mean) > 0:
            raise ValidationError(f"node {self.id}: zero embedding")
        object.__setattr__(self, "embedding_mean", mean)
        object.__setattr__(self, "embedding_var", var)
        u = float(self.scalar_uncertainty)
        if not (np.isfinite(u) and u >= 0):
            raise ValidationError(f"node {self.id}: scalar_uncertainty must be >= 0, got {u}")
        object.__setattr__(self, "scalar_uncertainty", u)
        if int(self.obs_count) < 1:
            raise ValidationError(f"node {self.id}: obs_count must be positive")
        object.__setattr__(self, "obs_count", int(self.obs_count))
        object.__setattr__(self, "last_seen", float(self.last_seen))

    @property
    def dim(self) -> int:
        return int(self.embedding_mean.shape[0])

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "position": self.position.tolist(),
            "embedding": self.embedding_mean.tolist(),
            "variance": self.embedding_var.tolist(),
            "uncertainty": self.scalar_uncertainty,
            "obs_count": self.obs_count,
            "last_seen": self.last_seen,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectNode":
        try:
            return cls(
                id=d["id"],
                position=d["position"],
                embedding_mean=d["embedding"],
                embedding_var=d["variance"],
                scalar_uncertainty=d.get("uncertainty", 0.0),
                obs_count=d.get("obs_count", 1),
                last_seen=d.get("last_seen", 0.0),
            )
        except KeyError as exc:
            raise ValidationError(f"node record missing field {exc.args[0]!r}") from None


@dataclass(frozen=True)
class GraphEdge:
    i: int
    j: int
    length: float

    def __post_init__(self):
        if self.i == self.j:
            raise ValidationError(f"self-loop on node {self.i}")
        if self.i > self.j:
            i, j = self.j, self.i
            object.__setattr__(self, "i", i)
            object.__setattr__(self, "j", j)
        if not (np.isfinite(self.length) and self.length >= 0):
            raise ValidationError(f"edge ({self.i},{self.j}) has invalid length {self.length}")


@dataclass(frozen=True, eq=False)
class ObjectGraph:
    nodes: tuple[ObjectNode, ...]
    edges: tuple[GraphEdge, ...]
    frame_id: str = "map"
    edge_threshold: float = UNDERWATER_EDGE_THRESHOLD_M
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "edges", tuple(self.edges))
        index = {}
        for k, node in enumerate(self.nodes):
            if node.id in index:
                raise ValidationError(f"duplicate node id {node.id}")
            index[node.id] = k
        for e in self.edges:
            if e.i not in index or e.j not in index:
                raise ValidationError(f"edge ({e.i},{e.j}) references a missing node")
        dims = {n.dim for n in self.nodes}
        if len(dims) > 1:
            raise ValidationError(f"mixed embedding dimensions {sorted(dims)}")
        object.__setattr__(self, "_index", index)

    @classmethod
    def from_nodes(cls, nodes: Sequence[ObjectNode], threshold: float, frame_id: str = "map") -> "ObjectGraph":
        nodes = tuple(nodes)
        return cls(nodes, tuple(build_edges(nodes, threshold)), frame_id=frame_id, edge_threshold=threshold)

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def ids(self) -> list[int]:
        return [n.id for n in self.nodes]

    @property
    def dim(self) -> int:
        return self.nodes[0].dim if self.nodes else 0

    def index_of(self, node_id: int) -> int:
        return self._index[node_id]

    def node(self, node_id: int) -> ObjectNode:
        return self.nodes[self._index[node_id]]

    def positions(self) -> np.ndarray:
        return np.array([n.position for n in self.nodes]).reshape(-1, 3)

    def edge_index_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Edges as (row index, column index, length) arrays in node-list order."""
        if not self.edges:
            empty = np.zeros(0, dtype=np.int64)
            return empty, empty.copy(), np.zeros(0)
        i = np.array([self._index[e.i] for e in self.edges], dtype=np.int64)
        j = np.array([self._index[e.j] for e in self.edges], dtype=np.int64)
        length = np.array([e.length for e in self.edges], dtype=np.float64)
        return i, j, length

    def edge_length_matrix(self) -> np.ndarray:
        """Dense n x n matrix of edge lengths, NaN where there is no edge."""
        n = len(self.nodes)
        out = np.full((n, n), np.nan)
        i, j, length = self.edge_index_arrays()
        out[i, j] = length
        out[j, i] = length
        return out

    def is_connected(self) -> bool:
        return _components(len(self.nodes), *self.edge_index_arrays()[:2]) <= 1

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "frame_id": self.frame_id,
            "dim": self.dim,
            "nodes": [n.to_dict() for n in self.nodes],
            "edge_threshold_m": self.edge_threshold,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ObjectGraph":
        if not isinstance(d, dict) or "nodes" not in d:
            raise ValidationError("map file must be an object with a 'nodes' list")
        nodes = [ObjectNode.from_dict(nd) for nd in d["nodes"]]
        dim = d.get("dim")
        if dim is not None:
            for n in nodes:
                if n.dim != int(dim):
                    raise ValidationError(f"node {n.id}: embedding length {n.dim} != declared dim {dim}")
        threshold = float(d.get("edge_threshold_m", UNDERWATER_EDGE_THRESHOLD_M))
        return cls.from_nodes(nodes, threshold, frame_id=str(d.get("frame_id", "map")))


def _components(n: int, i: np.ndarray, j: np.ndarray) -> int:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    count = n
    for a, b in zip(i.tolist(), j.tolist()):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
            count -= 1
    return count


def pairwise_distances(positions: np.ndarray) -> np.ndarray:
    diff = positions[:, None, :] - positions[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def build_edges(nodes: Sequence[ObjectNode], threshold: float) -> list[GraphEdge]:
    """Connect every pair closer than ``threshold``; bridge any leftover
    components with Euclidean minimum-spanning-tree edges.

    The bridging step is Kruskal's algorithm seeded with the threshold
    components, so it adds exactly the MST edges that are not already
    present.  Output order is by (i, j) of node-list position.
    """
    nodes = list(nodes)
    if not nodes:
        raise ValidationError("empty graph")
    if not threshold > 0:
        raise ValidationError(f"threshold must be positive, got {threshold}")
    n = len(nodes)
    ids = [nd.id for nd in nodes]
    if len(set(ids)) != n:
        raise ValidationError("duplicate node ids")
    pos = np.array([nd.position for nd in nodes])
    dist = pairwise_distances(pos)
    iu, ju = np.triu_indices(n, k=1)
    d = dist[iu, ju]
    close = d < threshold
    chosen = set(zip(iu[close].tolist(), ju[close].tolist()))

    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    components = n
    for a, b in chosen:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
            components -= 1

    if components > 1:
        far = np.flatnonzero(~close)
        order = far[np.lexsort((ju[far], iu[far], d[far]))]
        for k in order.tolist():
            a, b = int(iu[k]), int(ju[k])
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
                chosen.add((a, b))
                components -= 1
                if components == 1:
                    break

    edges = []
    for a, b in sorted(chosen):
        edges.append(GraphEdge(ids[a], ids[b], float(dist[a, b])))
    return edges


def subgraph(g: ObjectGraph, ids: Iterable[int]) -> ObjectGraph:
    """Induced subgraph on ``ids`` with edges rebuilt at the graph's threshold."""
    ids = list(ids)
    missing = [i for i in ids if i not in g._index]
    if missing:
        raise ValidationError(f"unknown node ids: {missing}")
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate ids in subgraph selection")
    nodes = [g.node(i) for i in ids]
    return ObjectGraph.from_nodes(nodes, g.edge_threshold, frame_id=g.frame_id)


def load_map(path: str | Path) -> ObjectGraph:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ValidationError(f"map file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    return ObjectGraph.from_dict(data)


def save_map(g: ObjectGraph, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(g.to_dict(), f)
        f.write("\n")
