"""Scene domain types, lossless decomposition and interaction graphs.

All geometry here is float64 numpy.  The model only ever sees the arrays
produced by :func:`decompose_scene` and :func:`build_interaction_graphs`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Sequence

import numpy as np

HEADING_EPS = 1e-4

DEFAULT_THRESHOLDS = {"a2l": 7.0, "l2a": 6.0, "a2a": 100.0}
DEFAULT_DILATIONS = (1, 2, 4)


class Category(str, Enum):
    VEHICLE = "vehicle"
    PEDESTRIAN = "pedestrian"
    CYCLIST = "cyclist"
    OTHER = "other"


class Turn(str, Enum):
    NONE = "none"
    LEFT = "left"
    RIGHT = "right"


class SceneError(ValueError):
    """Raised when a scene violates a structural invariant."""


@dataclass(eq=False)
class AgentTrack:
    agent_id: str
    category: str
    scored: bool
    positions: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.category = Category(self.category).value
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        self.valid = np.asarray(self.valid).astype(bool).reshape(-1)
        if len(self.positions) != len(self.valid):
            raise SceneError(
                f"agent {self.agent_id}: {len(self.positions)} positions vs "
                f"{len(self.valid)} validity flags"
            )
        if not np.isfinite(self.positions[self.valid]).all():
            raise SceneError(f"agent {self.agent_id}: non-finite valid position")

    def __len__(self) -> int:
        return len(self.valid)


@dataclass(frozen=True)
class LaneAttributes:
    turn: str = "none"
    in_intersection: bool = False
    traffic_control: bool = False

    def __post_init__(self):
        object.__setattr__(self, "turn", Turn(self.turn).value)

    def encode(self) -> np.ndarray:
        """One-hot turn (none/left/right) followed by the two booleans."""
        out = np.zeros(5)
        out[[t.value for t in Turn].index(self.turn)] = 1.0
        out[3] = float(self.in_intersection)
        out[4] = float(self.traffic_control)
        return out


@dataclass(eq=False)
class LaneSegment:
    lane_id: str
    points: np.ndarray
    successors: list[str] = field(default_factory=list)
    predecessors: list[str] = field(default_factory=list)
    left_neighbor: str | None = None
    right_neighbor: str | None = None
    attributes: LaneAttributes = field(default_factory=LaneAttributes)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 2)
        if len(self.points) < 2:
            raise SceneError(f"lane {self.lane_id}: needs at least 2 points")
        if not np.isfinite(self.points).all():
            raise SceneError(f"lane {self.lane_id}: non-finite point")
        if (np.diff(self.points, axis=0) == 0).all(axis=1).any():
            raise SceneError(f"lane {self.lane_id}: repeated consecutive point")
        self.successors = list(self.successors)
        self.predecessors = list(self.predecessors)


@dataclass(eq=False)
class RawScene:
    scene_id: str
    agents: list[AgentTrack]
    lanes: list[LaneSegment]
    focal_agent_id: str
    timestep_hz: float = 10.0
    obs_len: int = 20
    pred_len: int = 30

    def __post_init__(self):
        ids = [a.agent_id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise SceneError(f"scene {self.scene_id}: duplicate agent ids")
        lane_ids = [l.lane_id for l in self.lanes]
        if len(set(lane_ids)) != len(lane_ids):
            raise SceneError(f"scene {self.scene_id}: duplicate lane ids")
        if self.focal_agent_id not in ids:
            raise SceneError(
                f"scene {self.scene_id}: focal agent {self.focal_agent_id!r} not found"
            )
        if self.timestep_hz <= 0:
            raise SceneError("timestep_hz must be positive")
        horizon = self.obs_len + self.pred_len
        known = set(lane_ids)
        for agent in self.agents:
            if len(agent) != horizon:
                raise SceneError(
                    f"agent {agent.agent_id}: length {len(agent)} != obs_len + pred_len ({horizon})"
                )
            if not agent.valid[: self.obs_len].any():
                raise SceneError(f"agent {agent.agent_id}: no valid observed step")
        for lane in self.lanes:
            refs = lane.successors + lane.predecessors + [lane.left_neighbor, lane.right_neighbor]
            for ref in refs:
                if ref is not None and ref not in known:
                    raise SceneError(f"lane {lane.lane_id}: unknown neighbor {ref!r}")

    @property
    def horizon(self) -> int:
        return self.obs_len + self.pred_len

    @property
    def focal_index(self) -> int:
        return [a.agent_id for a in self.agents].index(self.focal_agent_id)

    def agent(self, agent_id: str) -> AgentTrack:
        for a in self.agents:
            if a.agent_id == agent_id:
                return a
        raise KeyError(agent_id)


def scenes_equal(a: RawScene, b: RawScene, valid_only: bool = False) -> bool:
    """Exact (bitwise) equality of two scenes.

    With ``valid_only`` the agent coordinates are only compared where
    ``valid`` is set, which is what the decomposition guarantees.
    """
    head = (a.scene_id, a.focal_agent_id, a.timestep_hz, a.obs_len, a.pred_len)
    if head != (b.scene_id, b.focal_agent_id, b.timestep_hz, b.obs_len, b.pred_len):
        return False
    if len(a.agents) != len(b.agents) or len(a.lanes) != len(b.lanes):
        return False
    for x, y in zip(a.agents, b.agents):
        if (x.agent_id, x.category, x.scored) != (y.agent_id, y.category, y.scored):
            return False
        if not np.array_equal(x.valid, y.valid):
            return False
        if valid_only:
            if not np.array_equal(x.positions[x.valid], y.positions[y.valid]):
                return False
        elif not np.array_equal(x.positions, y.positions):
            return False
    for x, y in zip(a.lanes, b.lanes):
        if (x.lane_id, x.successors, x.predecessors, x.left_neighbor, x.right_neighbor,
                x.attributes) != (y.lane_id, y.successors, y.predecessors,
                                  y.left_neighbor, y.right_neighbor, y.attributes):
            return False
        if x.points.shape != y.points.shape or not np.array_equal(x.points, y.points):
            return False
    return True


# --------------------------------------------------------------------------
# geometry primitives


def wrap_angle(theta):
    """Wrap angles into (-pi, pi].  Values already in range are returned as is."""
    theta = np.asarray(theta, dtype=np.float64)
    inside = (theta > -np.pi) & (theta <= np.pi)
    wrapped = np.mod(theta + np.pi, 2.0 * np.pi) - np.pi
    wrapped = np.where(wrapped <= -np.pi, wrapped + 2.0 * np.pi, wrapped)
    out = np.where(inside, theta, wrapped)
    return float(out) if out.ndim == 0 else out


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class AgentFrame:
    origin: tuple[float, float]
    heading: float

    def __post_init__(self):
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))
        object.__setattr__(self, "heading", wrap_angle(float(self.heading)))

    @property
    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.heading)

    def to_local(self, points) -> np.ndarray:
        """Absolute points -> this frame: R^T (p - origin)."""
        p = np.asarray(points, dtype=np.float64) - np.asarray(self.origin)
        return p @ self.rotation

    def to_global(self, points) -> np.ndarray:
        """Inverse of :meth:`to_local`: R p + origin."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + np.asarray(self.origin)

    def rotate_vectors(self, vectors) -> np.ndarray:
        """Displacements -> this frame (rotation only)."""
        return np.asarray(vectors, dtype=np.float64) @ self.rotation


@dataclass(frozen=True)
class RelativeGeometry:
    delta_p: tuple[float, float]
    delta_theta: float

    @property
    def distance(self) -> float:
        return math.hypot(*self.delta_p)


def relative_geometry(receiver: AgentFrame, sender: AgentFrame) -> RelativeGeometry:
    dp = receiver.to_local(np.asarray(sender.origin))
    return RelativeGeometry((float(dp[0]), float(dp[1])),
                            wrap_angle(sender.heading - receiver.heading))


def relative_geometry_arrays(recv_origin, recv_heading, send_origin, send_heading):
    """Vectorised :func:`relative_geometry` over aligned edge arrays.

    Returns an ``(E, 3)`` array of ``[dx, dy, dtheta]`` with ``(dx, dy)`` in
    the receiver frame.
    """
    d = np.asarray(send_origin) - np.asarray(recv_origin)
    c, s = np.cos(recv_heading), np.sin(recv_heading)
    dx = c * d[:, 0] + s * d[:, 1]
    dy = -s * d[:, 0] + c * d[:, 1]
    dtheta = wrap_angle(np.asarray(send_heading) - np.asarray(recv_heading))
    return np.stack([dx, dy, np.atleast_1d(dtheta)], axis=-1).reshape(-1, 3)


def vectorize_trajectory(positions, valid) -> tuple[np.ndarray, np.ndarray]:
    """Per-step displacements with a validity mask.

    ``vectors[t]`` is ``positions[t + 1] - positions[t]`` when both endpoints
    are valid and the zero vector otherwise.
    """
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    valid = np.asarray(valid).astype(bool).reshape(-1)
    if len(positions) != len(valid):
        raise ValueError(f"length mismatch: {len(positions)} positions, {len(valid)} flags")
    if len(positions) < 2:
        raise ValueError("need at least 2 timesteps to vectorize")
    mask = valid[1:] & valid[:-1]
    vectors = np.where(mask[:, None], positions[1:] - positions[:-1], 0.0)
    return vectors, mask


def _two_diff(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Knuth TwoSum on (a, -b): hi + lo == a - b exactly.
    nb = -b
    hi = a + nb
    bv = hi - a
    av = hi - bv
    lo = (a - av) + (nb - bv)
    return hi, lo


def last_valid_observed(valid: np.ndarray, obs_len: int) -> int:
    idx = np.flatnonzero(np.asarray(valid)[:obs_len])
    if idx.size == 0:
        raise SceneError("track has no valid observed step")
    return int(idx[-1])


def compute_heading(track: AgentTrack, obs_len: int) -> float:
    """Heading of the last observed displacement.

    Falls back to the most recent observed displacement longer than
    ``HEADING_EPS``, then to 0.0 for agents that never moved.
    """
    cur = last_valid_observed(track.valid, obs_len)
    p, v = track.positions, track.valid
    for t in range(cur, 0, -1):
        if v[t] and v[t - 1]:
            d = p[t] - p[t - 1]
            if math.hypot(d[0], d[1]) > HEADING_EPS:
                return wrap_angle(math.atan2(d[1], d[0]))
    return 0.0


def lane_heading(points: np.ndarray) -> float:
    d = points[1] - points[0]
    return math.atan2(d[1], d[0])


def lane_anchor_index(points: np.ndarray) -> int:
    """Index of the segment center nearest the arc-length midpoint."""
    seg = np.diff(points, axis=0)
    lengths = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    half = 0.5 * cum[-1]
    k = min(int(np.searchsorted(cum, half, side="right")) - 1, len(seg) - 1)
    frac = (half - cum[k]) / lengths[k]
    mid = points[k] + frac * seg[k]
    centers = 0.5 * (points[1:] + points[:-1])
    return int(np.argmin(np.hypot(*(centers - mid).T)))


# --------------------------------------------------------------------------
# decomposition


@dataclass(eq=False)
class DecomposedScene:
    """Position vectors, current positions and frames of one scene.

    ``*_residual`` arrays hold the rounding error of each float difference
    so the decomposition stays exactly invertible.  ``run_anchors`` pins
    valid runs that are cut off from the current step by gaps.
    """

    scene_id: str
    focal_index: int
    obs_len: int
    pred_len: int
    timestep_hz: float
    agent_ids: list[str]
    categories: list[str]
    scored: np.ndarray
    agent_valid: np.ndarray          # (A, L)
    agent_vectors: np.ndarray        # (A, L-1, 2)
    agent_residuals: np.ndarray      # (A, L-1, 2)
    agent_vector_mask: np.ndarray    # (A, L-1)
    current_index: np.ndarray        # (A,)
    current_positions: np.ndarray    # (A, 2)
    headings: np.ndarray             # (A,)
    run_anchors: list[list[tuple[int, float, float]]]
    lane_ids: list[str]
    lane_links: list[dict]
    lane_attributes: list[LaneAttributes]
    lane_starts: np.ndarray          # (S, 2)
    lane_vectors: list[np.ndarray]   # each (N-1, 2)
    lane_residuals: list[np.ndarray]
    lane_centers: list[np.ndarray]   # each (N-1, 2)
    lane_anchor_positions: np.ndarray  # (S, 2)
    lane_headings: np.ndarray        # (S,)

    @property
    def num_agents(self) -> int:
        return len(self.agent_ids)

    @property
    def num_lanes(self) -> int:
        return len(self.lane_ids)

    @property
    def frames(self) -> list[AgentFrame]:
        return [AgentFrame(tuple(p), h) for p, h in zip(self.current_positions, self.headings)]

    @property
    def lane_frames(self) -> list[AgentFrame]:
        return [AgentFrame(tuple(p), h)
                for p, h in zip(self.lane_anchor_positions, self.lane_headings)]

    @property
    def observed_vectors(self) -> np.ndarray:
        return self.agent_vectors[:, : self.obs_len - 1]

    @property
    def observed_mask(self) -> np.ndarray:
        return self.agent_vector_mask[:, : self.obs_len - 1]

    def future_positions_local(self) -> tuple[np.ndarray, np.ndarray]:
        """Ground-truth futures in each agent's own frame, with validity."""
        out = np.zeros((self.num_agents, self.pred_len, 2))
        rec = reconstruct_positions(self)
        for i, frame in enumerate(self.frames):
            out[i] = frame.to_local(rec[i, self.obs_len:])
        mask = self.agent_valid[:, self.obs_len:].copy()
        out[~mask] = 0.0
        return out, mask


def decompose_scene(scene: RawScene) -> DecomposedScene:
    A, L = len(scene.agents), scene.horizon
    vectors = np.zeros((A, L - 1, 2))
    residuals = np.zeros((A, L - 1, 2))
    vmask = np.zeros((A, L - 1), dtype=bool)
    valid = np.zeros((A, L), dtype=bool)
    cur_idx = np.zeros(A, dtype=int)
    cur_pos = np.zeros((A, 2))
    headings = np.zeros(A)
    anchors = []
    for i, agent in enumerate(scene.agents):
        p, v = agent.positions, agent.valid
        valid[i] = v
        m = v[1:] & v[:-1]
        hi, lo = _two_diff(p[1:], p[:-1])
        vectors[i] = np.where(m[:, None], hi, 0.0)
        residuals[i] = np.where(m[:, None], lo, 0.0)
        vmask[i] = m
        c = last_valid_observed(v, scene.obs_len)
        cur_idx[i], cur_pos[i] = c, p[c]
        headings[i] = compute_heading(agent, scene.obs_len)
        agent_anchors = []
        for start, stop in _valid_runs(v):
            if start <= c < stop:
                continue
            t = stop - 1 if stop <= c else start
            agent_anchors.append((t, float(p[t, 0]), float(p[t, 1])))
        anchors.append(agent_anchors)

    lane_vectors, lane_residuals, lane_centers = [], [], []
    lane_starts = np.zeros((len(scene.lanes), 2))
    lane_anchor = np.zeros((len(scene.lanes), 2))
    lane_head = np.zeros(len(scene.lanes))
    for s, lane in enumerate(scene.lanes):
        pts = lane.points
        hi, lo = _two_diff(pts[1:], pts[:-1])
        lane_vectors.append(hi)
        lane_residuals.append(lo)
        centers = 0.5 * (pts[1:] + pts[:-1])
        lane_centers.append(centers)
        lane_starts[s] = pts[0]
        lane_anchor[s] = centers[lane_anchor_index(pts)]
        lane_head[s] = lane_heading(pts)

    return DecomposedScene(
        scene_id=scene.scene_id,
        focal_index=scene.focal_index,
        obs_len=scene.obs_len,
        pred_len=scene.pred_len,
        timestep_hz=scene.timestep_hz,
        agent_ids=[a.agent_id for a in scene.agents],
        categories=[a.category for a in scene.agents],
        scored=np.array([a.scored for a in scene.agents], dtype=bool),
        agent_valid=valid,
        agent_vectors=vectors,
        agent_residuals=residuals,
        agent_vector_mask=vmask,
        current_index=cur_idx,
        current_positions=cur_pos,
        headings=headings,
        run_anchors=anchors,
        lane_ids=[l.lane_id for l in scene.lanes],
        lane_links=[
            dict(successors=list(l.successors), predecessors=list(l.predecessors),
                 left=l.left_neighbor, right=l.right_neighbor)
            for l in scene.lanes
        ],
        lane_attributes=[l.attributes for l in scene.lanes],
        lane_starts=lane_starts,
        lane_vectors=lane_vectors,
        lane_residuals=lane_residuals,
        lane_centers=lane_centers,
        lane_anchor_positions=lane_anchor,
        lane_headings=lane_head,
    )


def _valid_runs(valid: np.ndarray) -> list[tuple[int, int]]:
    runs, start = [], None
    for t, flag in enumerate(valid):
        if flag and start is None:
            start = t
        elif not flag and start is not None:
            runs.append((start, t))
            start = None
    if start is not None:
        runs.append((start, len(valid)))
    return runs


def _walk(positions, known, hi, lo, start, stop, anchor):
    # exact: p[t-1] = p[t] - (hi + lo), p[t+1] = p[t] + (hi + lo)
    for t in range(anchor, start, -1):
        for d in (0, 1):
            positions[t - 1, d] = math.fsum((positions[t, d], -hi[t - 1, d], -lo[t - 1, d]))
        known[t - 1] = True
    for t in range(anchor, stop - 1):
        for d in (0, 1):
            positions[t + 1, d] = math.fsum((positions[t, d], hi[t, d], lo[t, d]))
        known[t + 1] = True


def reconstruct_positions(dec: DecomposedScene) -> np.ndarray:
    """Absolute agent positions (A, L, 2); zeros where the step is absent."""
    A, L = dec.agent_valid.shape
    out = np.zeros((A, L, 2))
    for i in range(A):
        known = np.zeros(L, dtype=bool)
        anchors = {t: (x, y) for t, x, y in dec.run_anchors[i]}
        anchors[int(dec.current_index[i])] = tuple(dec.current_positions[i])
        for start, stop in _valid_runs(dec.agent_valid[i]):
            (t,) = [t for t in anchors if start <= t < stop]
            out[i, t] = anchors[t]
            known[t] = True
            _walk(out[i], known, dec.agent_vectors[i], dec.agent_residuals[i], start, stop, t)
    return out


def reconstruct_scene(dec: DecomposedScene) -> RawScene:
    """Inverse of :func:`decompose_scene`; exact on valid coordinates."""
    positions = reconstruct_positions(dec)
    agents = [
        AgentTrack(aid, cat, bool(sc), positions[i], dec.agent_valid[i])
        for i, (aid, cat, sc) in enumerate(zip(dec.agent_ids, dec.categories, dec.scored))
    ]
    lanes = []
    for s, lid in enumerate(dec.lane_ids):
        n = len(dec.lane_vectors[s]) + 1
        pts = np.zeros((n, 2))
        pts[0] = dec.lane_starts[s]
        _walk(pts, np.zeros(n, dtype=bool), dec.lane_vectors[s], dec.lane_residuals[s], 0, n, 0)
        links = dec.lane_links[s]
        lanes.append(LaneSegment(lid, pts, links["successors"], links["predecessors"],
                                 links["left"], links["right"], dec.lane_attributes[s]))
    return RawScene(dec.scene_id, agents, lanes, dec.agent_ids[dec.focal_index],
                    dec.timestep_hz, dec.obs_len, dec.pred_len)


def normalize_vectors(dec: DecomposedScene) -> tuple[np.ndarray, list[np.ndarray]]:
    """Rotate each agent's observed displacements into its own frame and each
    lane's vectors into the lane frame.  No translation is applied."""
    z_agents = np.zeros_like(dec.observed_vectors)
    for i, h in enumerate(dec.headings):
        z_agents[i] = dec.observed_vectors[i] @ rotation_matrix(h)
    z_lanes = [v @ rotation_matrix(h) for v, h in zip(dec.lane_vectors, dec.lane_headings)]
    return z_agents, z_lanes


def denormalize_predictions(local, frames: Sequence[AgentFrame]) -> np.ndarray:
    """Map per-agent local points (A, ..., 2) to absolute coordinates."""
    local = np.asarray(local, dtype=np.float64)
    out = np.empty_like(local)
    for i, frame in enumerate(frames):
        out[i] = frame.to_global(local[i])
    return out


# --------------------------------------------------------------------------
# interaction graphs


@dataclass(eq=False)
class EdgeSet:
    receivers: np.ndarray
    senders: np.ndarray
    geometry: np.ndarray             # (E, 3): dx, dy, dtheta in receiver frame
    kinds: np.ndarray | None = None  # l2l only

    @classmethod
    def empty(cls, with_kinds: bool = False) -> "EdgeSet":
        kinds = np.zeros(0, dtype=object) if with_kinds else None
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                   np.zeros((0, 3)), kinds)

    def __len__(self) -> int:
        return len(self.receivers)

    @property
    def distance(self) -> np.ndarray:
        return np.hypot(self.geometry[:, 0], self.geometry[:, 1])

    def __iter__(self) -> Iterator[tuple[int, int, RelativeGeometry]]:
        for r, s, g in zip(self.receivers, self.senders, self.geometry):
            yield int(r), int(s), RelativeGeometry((float(g[0]), float(g[1])), float(g[2]))

    def pairs(self) -> set[tuple[int, int]]:
        return {(int(r), int(s)) for r, s in zip(self.receivers, self.senders)}


@dataclass(eq=False)
class InteractionGraphs:
    a2l: EdgeSet
    l2l: EdgeSet
    l2a: EdgeSet
    a2a: EdgeSet
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_THRESHOLDS))


def _distance_edges(recv_pos, recv_head, send_pos, send_head, threshold, same_set=False):
    if len(recv_pos) == 0 or len(send_pos) == 0:
        return EdgeSet.empty()
    d = np.hypot(*(recv_pos[:, None, :] - send_pos[None, :, :]).transpose(2, 0, 1))
    r, s = np.nonzero(d <= threshold)
    geom = relative_geometry_arrays(recv_pos[r], recv_head[r], send_pos[s], send_head[s])
    if same_set:
        geom[r == s] = 0.0
    return EdgeSet(r.astype(np.int64), s.astype(np.int64), geom)


def lane_connectivity(dec: DecomposedScene, dilations=DEFAULT_DILATIONS) -> list[tuple[int, int, str]]:
    """(receiver, sender, kind) lane pairs from lane topology.

    Kinds are ``pre``, ``suc{d}`` for each dilation ``d`` (lanes exactly ``d``
    successor hops ahead), ``left`` and ``right``.
    """
    index = {lid: k for k, lid in enumerate(dec.lane_ids)}
    succ = [set() for _ in dec.lane_ids]
    for k, links in enumerate(dec.lane_links):
        for nid in links["successors"]:
            succ[k].add(index[nid])
        for nid in links["predecessors"]:
            succ[index[nid]].add(k)
    pred = [set() for _ in dec.lane_ids]
    for k, ss in enumerate(succ):
        for j in ss:
            pred[j].add(k)
    edges = []
    for k in range(len(dec.lane_ids)):
        for j in sorted(pred[k]):
            edges.append((k, j, "pre"))
        frontier, hop = {k}, 0
        for d in sorted(dilations):
            while hop < d:
                frontier = set().union(*(succ[f] for f in frontier)) if frontier else set()
                hop += 1
            for j in sorted(frontier):
                edges.append((k, j, f"suc{d}"))
        for side in ("left", "right"):
            nid = dec.lane_links[k][side]
            if nid is not None:
                edges.append((k, index[nid], side))
    return edges


def build_interaction_graphs(dec: DecomposedScene, thresholds: dict | None = None,
                             dilations=DEFAULT_DILATIONS) -> InteractionGraphs:
    th = dict(DEFAULT_THRESHOLDS)
    th.update(thresholds or {})
    ap, ah = dec.current_positions, dec.headings
    lp, lh = dec.lane_anchor_positions, dec.lane_headings
    a2l = _distance_edges(lp, lh, ap, ah, th["a2l"])
    l2a = _distance_edges(ap, ah, lp, lh, th["l2a"])
    a2a = _distance_edges(ap, ah, ap, ah, th["a2a"], same_set=True)
    conn = lane_connectivity(dec, dilations)
    if conn:
        r = np.array([c[0] for c in conn], dtype=np.int64)
        s = np.array([c[1] for c in conn], dtype=np.int64)
        geom = relative_geometry_arrays(lp[r], lh[r], lp[s], lh[s])
        l2l = EdgeSet(r, s, geom, np.array([c[2] for c in conn], dtype=object))
    else:
        l2l = EdgeSet.empty(with_kinds=True)
    return InteractionGraphs(a2l, l2l, l2a, a2a, th)


def nearest_partners(dec: DecomposedScene) -> tuple[np.ndarray, np.ndarray]:
    """Nearest lane (by anchor) for every agent and nearest agent for every
    lane, -1 when the other set is empty.  Ties go to the smaller id."""
    A, S = dec.num_agents, dec.num_lanes
    if A == 0 or S == 0:
        return np.full(A, -1), np.full(S, -1)
    d = np.hypot(*(dec.current_positions[:, None] - dec.lane_anchor_positions[None]).transpose(2, 0, 1))
    lane_order = np.array(sorted(range(S), key=lambda k: dec.lane_ids[k]))
    agent_order = np.array(sorted(range(A), key=lambda k: dec.agent_ids[k]))
    agent_partner = lane_order[np.argmin(d[:, lane_order], axis=1)]
    lane_partner = agent_order[np.argmin(d[agent_order, :], axis=0)]
    return agent_partner, lane_partner


def transform_scene(scene: RawScene, theta: float, translation=(0.0, 0.0)) -> RawScene:
    """Apply one rigid motion (rotate by ``theta`` then translate) to a scene."""
    R = rotation_matrix(theta)
    t = np.asarray(translation, dtype=np.float64)

    def move(p):
        return p @ R.T + t

    agents = [AgentTrack(a.agent_id, a.category, a.scored,
                         np.where(a.valid[:, None], move(a.positions), 0.0), a.valid)
              for a in scene.agents]
    lanes = [LaneSegment(l.lane_id, move(l.points), l.successors, l.predecessors,
                         l.left_neighbor, l.right_neighbor, l.attributes)
             for l in scene.lanes]
    return RawScene(scene.scene_id, agents, lanes, scene.focal_agent_id,
                    scene.timestep_hz, scene.obs_len, scene.pred_len)
