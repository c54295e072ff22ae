"""Local-map building from a time-ordered stream of object observations.

Poses are trusted as given (observations arrive already expressed in the
odometry frame).  Each landmark keeps a diagonal Kalman belief over its
position and another over its semantic embedding.  Gating rules live in
``associate``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .errors import ValidationError
from .graph import SCHEMA, ObjectGraph, ObjectNode, lift_position
from .uncertainty import LandmarkBelief, kalman_init, kalman_update, scalar_to_variance

NEW = -1
# sqrt of the 95% chi-square quantile with 3 degrees of freedom
CHI2_95_3DOF_DIST = 2.7954834829151074


@dataclass(frozen=True, eq=False)
class Observation:
    t: float
    position_world: np.ndarray
    position_var: np.ndarray
    embedding: np.ndarray
    image_uncertainty: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        pos = lift_position(self.position_world)
        var = np.asarray(self.position_var, dtype=np.float64).ravel()
        if var.shape[0] == 2:
            var = np.append(var, var.mean())
        emb = np.asarray(self.embedding, dtype=np.float64).ravel()
        if var.shape != (3,):
            raise ValidationError(f"position_var must have 3 entries, got {var.shape[0]}")
        for name, arr in (("position_world", pos), ("position_var", var), ("embedding", emb)):
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"observation {name} has non-finite values")
        if not np.isfinite(self.t):
            raise ValidationError("observation timestamp must be finite")
        if np.any(var <= 0):
            raise ValidationError("position_var entries must be positive")
        if not np.linalg.norm(emb) > 0:
            raise ValidationError("zero embedding")
        u = float(self.image_uncertainty)
        if not (np.isfinite(u) and u >= 0):
            raise ValidationError("image_uncertainty must be non-negative")
        object.__setattr__(self, "position_world", pos)
        object.__setattr__(self, "position_var", var)
        object.__setattr__(self, "embedding", emb)
        object.__setattr__(self, "image_uncertainty", u)

    def to_dict(self) -> dict:
        return {
            "t": self.t,
            "position_world": self.position_world.tolist(),
            "position_var": self.position_var.tolist(),
            "embedding": self.embedding.tolist(),
            "image_uncertainty": self.image_uncertainty,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Observation":
        try:
            return cls(d["t"], d["position_world"], d["position_var"], d["embedding"],
                       d.get("image_uncertainty", 0.0))
        except KeyError as exc:
            raise ValidationError(f"observation missing field {exc.args[0]!r}") from None


@dataclass(frozen=True)
class AssociationGates:
    cos_min: float = 0.85
    maha_max: float = CHI2_95_3DOF_DIST
    temporal_window_s: float = 60.0
    allow_global_closure: bool = False

    def __post_init__(self):
        if not -1.0 < self.cos_min <= 1.0:
            raise ValidationError(f"cos_min must lie in (-1, 1], got {self.cos_min}")
        if not self.maha_max > 0:
            raise ValidationError("maha_max must be positive")
        if not self.temporal_window_s > 0:
            raise ValidationError("temporal_window_s must be positive")

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: dict) -> "AssociationGates":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown gate keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class Landmark:
    id: int
    position: np.ndarray
    position_var: np.ndarray
    belief: LandmarkBelief
    obs_count: int
    first_seen: float
    last_seen: float

    def node(self) -> ObjectNode:
        return ObjectNode(
            id=self.id,
            position=self.position,
            embedding_mean=self.belief.mean,
            embedding_var=self.belief.var,
            scalar_uncertainty=self.belief.scalar_uncertainty(),
            obs_count=self.obs_count,
            last_seen=self.last_seen,
        )


@dataclass(frozen=True)
class LocalMap:
    landmarks: tuple[Landmark, ...] = ()
    t_start: float | None = None
    t_end: float | None = None

    def __len__(self) -> int:
        return len(self.landmarks)

    def nodes(self) -> list[ObjectNode]:
        return [lm.node() for lm in self.landmarks]


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))


def association_scores(obs: Observation, lm: Landmark) -> tuple[float, float, float]:
    """(cosine similarity, positional Mahalanobis distance, likelihood score)."""
    cos = _cosine(obs.embedding, lm.belief.mean)
    var = lm.position_var + obs.position_var
    diff = obs.position_world - lm.position
    d2 = float(np.sum(diff * diff / var))
    density = math.exp(-0.5 * d2) / math.sqrt((2 * math.pi) ** 3 * float(np.prod(var)))
    return cos, math.sqrt(d2), density * cos


def associate(obs: Observation, local_map: LocalMap, gates: AssociationGates | None = None) -> int:
    """Landmark id that best explains ``obs``, or ``NEW``.

    A landmark is a candidate only if it passes every gate; among the
    candidates the one with the highest position likelihood times cosine
    similarity wins (lowest id on exact ties).
    """
    gates = gates or AssociationGates()
    best_id, best_score = NEW, -math.inf
    for lm in local_map.landmarks:
        if not gates.allow_global_closure and obs.t - lm.last_seen > gates.temporal_window_s:
            continue
        if lm.belief.dim != obs.embedding.shape[0]:
            raise ValidationError(f"embedding dim {obs.embedding.shape[0]} != map dim {lm.belief.dim}")
        cos, maha, score = association_scores(obs, lm)
        if cos < gates.cos_min or maha > gates.maha_max:
            continue
        if score > best_score:
            best_id, best_score = lm.id, score
    return best_id


def _fuse_position(pos, var, y, r):
    gain = var / (var + r)
    return pos + gain * (y - pos), var * (1.0 - gain)


def ingest(obs: Observation, local_map: LocalMap, gates: AssociationGates | None = None) -> LocalMap:
    if local_map.t_end is not None and obs.t < local_map.t_end:
        raise ValidationError(f"out-of-order timestamp {obs.t} < {local_map.t_end}")
    emb_var = scalar_to_variance(obs.image_uncertainty, obs.embedding.shape[0])
    target = associate(obs, local_map, gates)
    landmarks = list(local_map.landmarks)
    if target == NEW:
        if landmarks and landmarks[0].belief.dim != obs.embedding.shape[0]:
            raise ValidationError("embedding dim differs from the map's")
        landmarks.append(Landmark(
            id=len(landmarks),
            position=obs.position_world.copy(),
            position_var=obs.position_var.copy(),
            belief=kalman_init(obs.embedding, emb_var),
            obs_count=1,
            first_seen=obs.t,
            last_seen=obs.t,
        ))
    else:
        lm = landmarks[target]
        pos, pvar = _fuse_position(lm.position, lm.position_var, obs.position_world, obs.position_var)
        landmarks[target] = replace(
            lm,
            position=pos,
            position_var=pvar,
            belief=kalman_update(lm.belief, obs.embedding, emb_var),
            obs_count=lm.obs_count + 1,
            last_seen=obs.t,
        )
    t_start = obs.t if local_map.t_start is None else local_map.t_start
    return LocalMap(tuple(landmarks), t_start, obs.t)


def build_local_map(observations: Iterable[Observation], gates: AssociationGates | None = None) -> LocalMap:
    m = LocalMap()
    for obs in observations:
        m = ingest(obs, m, gates)
    return m


def finalize(local_map: LocalMap, edge_threshold: float, frame_id: str = "map") -> ObjectGraph:
    if len(local_map) == 0:
        raise ValidationError("empty map")
    return ObjectGraph.from_nodes(local_map.nodes(), edge_threshold, frame_id=frame_id)


# -- observation stream files (JSON lines, header first) ----------------------------

def write_observations(path: str | Path, observations: Iterable[Observation], dim: int) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(json.dumps({"schema": SCHEMA, "dim": int(dim)}) + "\n")
        for obs in observations:
            f.write(json.dumps(obs.to_dict()) + "\n")


def read_observations(path: str | Path) -> Iterator[Observation]:
    """Yield observations, raising ValidationError with the offending line number."""
    path = Path(path)
    try:
        f = open(path, "r", encoding="utf-8")
    except FileNotFoundError:
        raise ValidationError(f"observation file not found: {path}") from None
    with f:
        dim = None
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValidationError(f"{path}:{lineno}: malformed JSON ({exc.msg})") from None
            if dim is None:
                if not isinstance(rec, dict) or "dim" not in rec:
                    raise ValidationError(f"{path}:{lineno}: header line with 'dim' expected")
                dim = int(rec["dim"])
                continue
            try:
                if not isinstance(rec, dict):
                    raise ValidationError("record must be a JSON object")
                obs = Observation.from_dict(rec)
                if obs.embedding.shape[0] != dim:
                    raise ValidationError(f"embedding length {obs.embedding.shape[0]} != dim {dim}")
            except ValidationError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from None
            yield obs
        if dim is None:
            raise ValidationError(f"{path}: empty observation file")
