"""Synthetic scenes with known correspondences.

A scene is a parent map of objects drawn uniformly inside a box.  Each
object belongs to one of ``n_classes`` classes; its embedding is the
class's base unit vector perturbed by per-object instance noise, so two
objects of one class look alike but not identical.  Subgraphs are connected
subsets of the parent re-observed with fresh noise, relabelled, and
shuffled; the ground truth maps each subgraph id to its parent id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .graph import (
    DEFAULT_DIM,
    SCHEMA,
    UNDERWATER_EDGE_THRESHOLD_M,
    VEHICLE_EDGE_THRESHOLD_M,
    ObjectGraph,
    ObjectNode,
)
from .mapping import Observation
from .uncertainty import scalar_to_variance


@dataclass(frozen=True)
class ScenarioSpec:
    n_objects: int = 20
    extent_m: tuple[float, float, float] = (10.0, 10.0, 2.0)
    embedding_dim: int = DEFAULT_DIM
    n_classes: int = 8
    position_noise_std_m: float = 0.2
    embedding_noise_std: float = 0.05
    uncertainty_range: tuple[float, float] = (0.05, 0.4)
    subgraph_sizes: tuple[int, ...] = (2, 3, 4, 5)
    trials: int = 100
    seed: int = 0
    # per-coordinate spread of an object's embedding around its class vector
    instance_noise_std: float = 0.05
    edge_threshold_m: float = UNDERWATER_EDGE_THRESHOLD_M

    def __post_init__(self):
        object.__setattr__(self, "extent_m", tuple(float(v) for v in self.extent_m))
        object.__setattr__(self, "uncertainty_range", tuple(float(v) for v in self.uncertainty_range))
        object.__setattr__(self, "subgraph_sizes", tuple(int(v) for v in self.subgraph_sizes))
        if len(self.extent_m) != 3 or any(not (np.isfinite(v) and v >= 0) for v in self.extent_m):
            raise ValidationError("extent_m must be three non-negative numbers")
        if int(self.n_objects) < 1:
            raise ValidationError("n_objects must be positive")
        if int(self.embedding_dim) < 1 or int(self.n_classes) < 1:
            raise ValidationError("embedding_dim and n_classes must be positive")
        if not self.subgraph_sizes or min(self.subgraph_sizes) < 1:
            raise ValidationError("subgraph_sizes must be a non-empty list of positive sizes")
        if max(self.subgraph_sizes) > self.n_objects:
            raise ValidationError(
                f"infeasible spec: subgraph size {max(self.subgraph_sizes)} > n_objects {self.n_objects}")
        if int(self.trials) < 1:
            raise ValidationError("trials must be at least 1")
        for name in ("position_noise_std_m", "embedding_noise_std", "instance_noise_std"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValidationError(f"{name} must be non-negative")
        lo, hi = self.uncertainty_range
        if len(self.uncertainty_range) != 2 or not 0 <= lo <= hi:
            raise ValidationError("uncertainty_range must be [lo, hi] with 0 <= lo <= hi")
        if not self.edge_threshold_m > 0:
            raise ValidationError("edge_threshold_m must be positive")

    @property
    def noiseless(self) -> bool:
        return self.position_noise_std_m == 0 and self.embedding_noise_std == 0

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["extent_m"] = list(self.extent_m)
        d["uncertainty_range"] = list(self.uncertainty_range)
        d["subgraph_sizes"] = list(self.subgraph_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)


def vehicle_scale_spec(**overrides) -> ScenarioSpec:
    """Street-scale stand-in: hundreds of objects over a square kilometre.

    Position noise is 1 m, the order of stereo depth error at typical
    street-object ranges.
    """
    base = dict(
        n_objects=600, extent_m=(1000.0, 1000.0, 0.0), n_classes=14, position_noise_std_m=1.0,
        subgraph_sizes=(20,), trials=1, edge_threshold_m=VEHICLE_EDGE_THRESHOLD_M,
    )
    base.update(overrides)
    return ScenarioSpec(**base)


@dataclass
class SubgraphSample:
    size: int
    graph: ObjectGraph
    truth: dict[int, int]  # subgraph id -> parent id


@dataclass
class Scene:
    parent: ObjectGraph
    classes: np.ndarray
    subgraphs: list[SubgraphSample] = field(default_factory=list)


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(trial)])


def _grow_connected(adj: list[list[int]], size: int, rng: np.random.Generator) -> list[int]:
    start = int(rng.integers(len(adj)))
    chosen = [start]
    seen = {start}
    frontier = sorted(set(adj[start]))
    while len(chosen) < size:
        if not frontier:
            raise ValidationError("infeasible spec: parent graph component smaller than subgraph")
        nxt = frontier.pop(int(rng.integers(len(frontier))))
        chosen.append(nxt)
        seen.add(nxt)
        frontier = sorted((set(frontier) | set(adj[nxt])) - seen)
    return chosen


def _reobserve(spec: ScenarioSpec, parent: ObjectNode, new_id: int, rng: np.random.Generator) -> ObjectNode:
    if spec.noiseless:
        return ObjectNode(new_id, parent.position, parent.embedding_mean, parent.embedding_var,
                          parent.scalar_uncertainty, parent.obs_count, parent.last_seen)
    lo, hi = spec.uncertainty_range
    u = float(rng.uniform(lo, hi))
    pos = parent.position + rng.normal(0.0, spec.position_noise_std_m, 3) * _noise_axes(spec)
    # a higher uncertainty score means a noisier embedding; the mid-range
    # score gets exactly embedding_noise_std
    mid = 0.5 * (lo + hi)
    std = spec.embedding_noise_std * (u / mid if mid > 0 else 1.0)
    emb = _unit_rows(parent.embedding_mean + rng.normal(0.0, std, parent.embedding_mean.shape[0]))
    return ObjectNode(new_id, pos, emb, scalar_to_variance(u, emb.shape[0]), u)


def _noise_axes(spec: ScenarioSpec) -> np.ndarray:
    # flat scenes stay flat
    return np.array([1.0, 1.0, 1.0 if spec.extent_m[2] > 0 else 0.0])


def generate_scene(spec: ScenarioSpec, trial: int = 0) -> Scene:
    rng = trial_rng(spec.seed, trial)
    n, dim = int(spec.n_objects), int(spec.embedding_dim)
    lo, hi = spec.uncertainty_range

    pos = rng.uniform(0.0, 1.0, (n, 3)) * np.array(spec.extent_m)
    bases = _unit_rows(rng.normal(size=(int(spec.n_classes), dim)))
    classes = rng.integers(int(spec.n_classes), size=n)
    emb = _unit_rows(bases[classes] + rng.normal(0.0, spec.instance_noise_std, (n, dim)))
    unc = rng.uniform(lo, hi, n)
    nodes = [ObjectNode(k, pos[k], emb[k], scalar_to_variance(unc[k], dim), float(unc[k]))
             for k in range(n)]
    parent = ObjectGraph.from_nodes(nodes, spec.edge_threshold_m, frame_id=f"scene-{trial}")

    adj: list[list[int]] = [[] for _ in range(n)]
    i, j, _ = parent.edge_index_arrays()
    for a, b in zip(i.tolist(), j.tolist()):
        adj[a].append(b)
        adj[b].append(a)

    scene = Scene(parent, classes)
    for size in spec.subgraph_sizes:
        members = _grow_connected(adj, size, rng)
        order = rng.permutation(size)
        sub_nodes, truth = [], {}
        for new_id, k in enumerate(order.tolist()):
            pid = members[k]
            sub_nodes.append(_reobserve(spec, parent.node(pid), new_id, rng))
            truth[new_id] = pid
        g = ObjectGraph.from_nodes(sub_nodes, spec.edge_threshold_m, frame_id=f"scene-{trial}-sub{size}")
        scene.subgraphs.append(SubgraphSample(size, g, truth))
    return scene


def node_accuracy(assignment, truth: dict[int, int]) -> float:
    """Fraction of subgraph nodes matched to their true parent node."""
    got = dict(assignment)
    return sum(1 for sid, pid in truth.items() if got.get(sid) == pid) / len(truth)


def truth_to_dict(scene: Scene, files: list[str] | None = None) -> dict:
    subs = []
    for k, s in enumerate(scene.subgraphs):
        rec = {"size": s.size, "frame_id": s.graph.frame_id,
               "truth": [[a, b] for a, b in sorted(s.truth.items())]}
        if files is not None:
            rec["file"] = files[k]
        subs.append(rec)
    return {"schema": SCHEMA, "parent": scene.parent.frame_id, "subgraphs": subs}


def load_truth(path: str | Path) -> dict[str, dict[int, int]]:
    """Ground truth per subgraph frame id."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return {s["frame_id"]: {int(a): int(b) for a, b in s["truth"]} for s in data["subgraphs"]}
    except FileNotFoundError:
        raise ValidationError(f"ground-truth file not found: {path}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"{path}: malformed ground-truth file ({exc})") from None


# -- observation streams for the map builder ----------------------------------------

@dataclass
class ObservationStream:
    observations: list[Observation]
    object_positions: np.ndarray
    object_of: list[int]  # true object index per observation


def generate_observation_stream(
    n_objects: int,
    obs_per_object: int,
    seed: int = 0,
    dim: int = DEFAULT_DIM,
    extent_m: tuple[float, float, float] = (30.0, 30.0, 2.0),
    min_separation_m: float = 3.0,
    position_noise_std_m: float = 0.1,
    embedding_noise_std: float = 0.005,
    dt_s: float = 0.1,
) -> ObservationStream:
    """Interleaved sightings of well-separated objects with distinct embeddings.

    The declared position variance is (2 sigma)^2, a deliberately
    conservative figure so a sighting of a known object seldom falls outside
    the association gate.
    """
    if n_objects < 1 or obs_per_object < 1:
        raise ValidationError("need at least one object and one sighting each")
    rng = np.random.default_rng(seed)
    ext = np.array(extent_m, dtype=np.float64)
    pos = np.empty((0, 3))
    for _ in range(10000 * n_objects):
        if len(pos) == n_objects:
            break
        cand = rng.uniform(0.0, 1.0, 3) * ext
        if len(pos) == 0 or np.min(np.linalg.norm(pos - cand, axis=1)) >= min_separation_m:
            pos = np.vstack([pos, cand])
    if len(pos) < n_objects:
        raise ValidationError("infeasible stream: cannot place objects that far apart")
    emb = _unit_rows(rng.normal(size=(n_objects, dim)))

    owners = rng.permutation(np.repeat(np.arange(n_objects), obs_per_object)).tolist()
    var = np.full(3, (2.0 * max(position_noise_std_m, 1e-3)) ** 2)
    observations = []
    for k, obj in enumerate(owners):
        u = float(rng.uniform(0.05, 0.4))
        observations.append(Observation(
            t=k * dt_s,
            position_world=pos[obj] + rng.normal(0.0, position_noise_std_m, 3),
            position_var=var,
            embedding=emb[obj] + rng.normal(0.0, embedding_noise_std, dim),
            image_uncertainty=u,
        ))
    return ObservationStream(observations, pos, owners)
