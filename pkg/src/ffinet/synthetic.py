"""Seeded generator of small lane-constrained multi-agent scenes.

Each archetype lays out a lane graph, assigns agents to routes through it
and rolls them forward with a gap-feedback car-following controller.
Conflict points (crossings, merges) are resolved by seeded yield/go
decisions unless yielding is disabled.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from .scene import AgentTrack, LaneAttributes, LaneSegment, RawScene, rotation_matrix

logger = logging.getLogger(__name__)

ARCHETYPES = ("follow", "intersection_cross", "merge", "lane_change", "oncoming")

POINT_SPACING = 2.0
POINTS_PER_SEGMENT = 10
SEGMENT_LENGTH = POINT_SPACING * (POINTS_PER_SEGMENT - 1)
LANE_WIDTH = 3.5

MAX_ACCEL = 3.0
GAIN = 3.0
TIME_HEADWAY = 1.5


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    archetype: str = "follow"
    n_agents: int = 4
    obs_len: int = 20
    pred_len: int = 30
    timestep_hz: float = 10.0
    speed_range: tuple[float, float] = (4.0, 12.0)
    noise_std: float = 0.05
    seed: int = 0
    d_min: float = 4.0
    yield_enabled: bool = True
    leader_stopped: bool = False
    dropout: bool = True

    def __post_init__(self):
        if self.archetype not in ARCHETYPES:
            raise ValueError(f"unknown archetype {self.archetype!r}")
        if not 2 <= self.n_agents <= 8:
            raise ValueError("n_agents must be in 2..8")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        lo, hi = self.speed_range
        if not 0 <= lo <= hi:
            raise ValueError("bad speed_range")

    @property
    def horizon(self) -> int:
        return self.obs_len + self.pred_len

    @property
    def v_max(self) -> float:
        return float(self.speed_range[1])


# --------------------------------------------------------------------------
# lanes


def _corridor(prefix, start, heading, n_segments, attrs=None):
    direction = np.array([math.cos(heading), math.sin(heading)])
    lanes = []
    for k in range(n_segments):
        s0 = k * SEGMENT_LENGTH
        offs = s0 + POINT_SPACING * np.arange(POINTS_PER_SEGMENT)
        pts = np.asarray(start) + offs[:, None] * direction
        lanes.append(LaneSegment(
            f"{prefix}{k}", pts,
            successors=[f"{prefix}{k + 1}"] if k + 1 < n_segments else [],
            predecessors=[f"{prefix}{k - 1}"] if k > 0 else [],
            attributes=(attrs or {}).get(k, LaneAttributes()),
        ))
    return lanes


def _link(a: LaneSegment, b: LaneSegment):
    a.successors.append(b.lane_id)
    b.predecessors.append(a.lane_id)


def _layout(archetype: str, rng: np.random.Generator):
    """Lane list plus named routes (lists of lane ids) in a canonical frame."""
    n = 12
    half = n * SEGMENT_LENGTH / 2
    if archetype == "follow":
        lanes = _corridor("F", (-half, 0.0), 0.0, n)
        routes = {"F": [l.lane_id for l in lanes]}
    elif archetype == "oncoming":
        east = _corridor("E", (-half, -LANE_WIDTH / 2), 0.0, n)
        west = _corridor("W", (half, LANE_WIDTH / 2), math.pi, n)
        lanes = east + west
        routes = {"E": [l.lane_id for l in east], "W": [l.lane_id for l in west]}
    elif archetype == "intersection_cross":
        control = bool(rng.integers(2))
        mid = {n // 2 - 1: LaneAttributes("none", True, control),
               n // 2: LaneAttributes("none", True, control)}
        a = _corridor("A", (-half, 0.0), 0.0, n, mid)
        b = _corridor("B", (0.0, -half), math.pi / 2, n, mid)
        lanes = a + b
        routes = {"A": [l.lane_id for l in a], "B": [l.lane_id for l in b]}
    elif archetype == "merge":
        angle = math.radians(rng.uniform(15.0, 30.0))
        m_in = n // 2
        ramp_len = m_in * SEGMENT_LENGTH
        main = _corridor("M", (-half, 0.0), 0.0, m_in)
        ramp_start = (-ramp_len * math.cos(angle), -ramp_len * math.sin(angle))
        ramp = _corridor("R", ramp_start, angle, m_in)
        ramp[-1].attributes = LaneAttributes("left", False, False)
        out = _corridor("O", (0.0, 0.0), 0.0, n - m_in)
        _link(main[-1], out[0])
        _link(ramp[-1], out[0])
        lanes = main + ramp + out
        routes = {"M": [l.lane_id for l in main + out], "R": [l.lane_id for l in ramp + out]}
    elif archetype == "lane_change":
        right = _corridor("P", (-half, 0.0), 0.0, n)
        left = _corridor("Q", (-half, LANE_WIDTH), 0.0, n)
        for r, l in zip(right, left):
            r.left_neighbor = l.lane_id
            l.right_neighbor = r.lane_id
        lanes = right + left
        routes = {"P": [l.lane_id for l in right], "Q": [l.lane_id for l in left]}
    else:
        raise ValueError(f"unknown archetype {archetype!r}")
    return lanes, routes


def _scene_transform(rng):
    theta = rng.uniform(-math.pi, math.pi)
    offset = rng.uniform(-50.0, 50.0, size=2)
    return theta, offset


def generate_lanes(archetype: str, seed: int) -> list[LaneSegment]:
    """Lane graph of one archetype, rigidly placed by ``seed``."""
    rng = np.random.default_rng(seed)
    lanes, _ = _layout(archetype, rng)
    theta, offset = _scene_transform(rng)
    return [_move_lane(l, theta, offset) for l in lanes]


def _move_lane(lane, theta, offset):
    R = rotation_matrix(theta)
    return replace(lane, points=lane.points @ R.T + offset,
                   successors=list(lane.successors), predecessors=list(lane.predecessors))


# --------------------------------------------------------------------------
# agents


class _Path:
    """Polyline parameterised by arc length."""

    def __init__(self, points):
        pts = [points[0]]
        for p in points[1:]:
            if np.hypot(*(p - pts[-1])) > 1e-9:
                pts.append(p)
        self.points = np.asarray(pts)
        seg = np.diff(self.points, axis=0)
        self.cum = np.concatenate([[0.0], np.cumsum(np.hypot(seg[:, 0], seg[:, 1]))])

    @property
    def length(self) -> float:
        return float(self.cum[-1])

    def at(self, s):
        s = np.clip(np.asarray(s, dtype=np.float64), 0.0, self.length)
        x = np.interp(s, self.cum, self.points[:, 0])
        y = np.interp(s, self.cum, self.points[:, 1])
        return np.stack([x, y], axis=-1)

    def locate(self, point) -> float:
        """Arc position of the polyline vertex nearest ``point``."""
        d = np.hypot(*(self.points - np.asarray(point)).T)
        return float(self.cum[int(np.argmin(d))])


def _route_path(lanes_by_id, route):
    pts = np.concatenate([lanes_by_id[lid].points for lid in route])
    return _Path(pts)


def _blend_paths(a: _Path, b: _Path, s_start: float, length: float) -> _Path:
    s = np.arange(0.0, min(a.length, b.length), 0.5)
    w = np.clip((s - s_start) / length, 0.0, 1.0)
    w = w * w * (3.0 - 2.0 * w)
    return _Path((1.0 - w)[:, None] * a.at(s) + w[:, None] * b.at(s))


def car_following_step(v, gap, v_des, dt, d_min):
    """One step of the gap-feedback controller; returns the new speed."""
    v_target = v_des if gap is None else min(v_des, max(0.0, (gap - d_min) / TIME_HEADWAY))
    a = max(-MAX_ACCEL, min(MAX_ACCEL, GAIN * (v_target - v)))
    return max(0.0, v + a * dt)


@dataclass
class _Agent:
    group: str
    path: _Path
    s0: float
    v_des: float
    category: str = "vehicle"
    stopped: bool = False
    brake_time: float | None = None


def _simulate_group(agents, steps, dt, d_min, obstacle=None):
    """Roll one group of agents sharing a path; returns arc positions (n, steps)."""
    n = len(agents)
    s = np.array([a.s0 for a in agents], dtype=np.float64)
    v = np.array([0.0 if a.stopped else a.v_des for a in agents])
    out = np.zeros((n, steps))
    for t in range(steps):
        out[:, t] = s
        new_v = v.copy()
        for i, a in enumerate(agents):
            if a.stopped:
                new_v[i] = 0.0
                continue
            ahead = s[s > s[i]]
            gap = float(ahead.min() - s[i]) if ahead.size else None
            if obstacle is not None:
                stop_at = obstacle(t, i, s[i])
                if stop_at is not None and stop_at > s[i] - 0.5:
                    og = stop_at - s[i] + d_min
                    gap = og if gap is None else min(gap, og)
            v_des = a.v_des
            if a.brake_time is not None and t * dt >= a.brake_time:
                v_des = 0.0
            new_v[i] = car_following_step(v[i], gap, v_des, dt, d_min)
        v = new_v
        s = s + v * dt
    return out


def _place_group(n, start_range, speeds, d_min, archetype, rng, length=math.inf):
    """Initial arc positions, front agent first, respecting spacing."""
    positions = []
    s = rng.uniform(*start_range)
    if s > length:
        raise GenerationError(f"{archetype}: {n} agents do not fit on a {length:.0f} m route")
    for k in range(n):
        if k:
            s -= d_min + 0.5 * TIME_HEADWAY * speeds[k] + rng.uniform(1.0, 5.0)
        if s < 0:
            raise GenerationError(f"{archetype}: cannot place {n} agents on one lane")
        positions.append(s)
    return positions


def simulate_agents(lanes: list[LaneSegment], config: ScenarioConfig,
                    rng: np.random.Generator | None = None) -> list[AgentTrack]:
    """Agents following ``lanes`` (as produced by :func:`generate_lanes`)."""
    rng = np.random.default_rng(config.seed + 1) if rng is None else rng
    by_id = {l.lane_id: l for l in lanes}
    dt = 1.0 / config.timestep_hz
    steps = config.horizon
    arch = config.archetype
    lo, hi = config.speed_range

    routes = _routes_from_lanes(arch, by_id)
    groups = sorted(routes)
    paths = {g: _route_path(by_id, routes[g]) for g in groups}

    # split agents between groups; group order decides who leads
    counts = {g: 0 for g in groups}
    for k in range(config.n_agents):
        counts[groups[k % len(groups)]] += 1

    members: dict[str, list[_Agent]] = {}
    conflict = _conflict_positions(arch, paths, by_id)
    horizon_t = steps * dt
    for g in groups:
        n = counts[g]
        speeds = rng.uniform(lo, hi, size=n)
        if arch == "intersection_cross" or (arch == "merge" and g in conflict):
            # leader reaches the conflict point during the prediction window
            t_c = rng.uniform(config.obs_len * dt + 0.5, horizon_t - 0.5)
            if g != groups[0]:
                t_c = members[groups[0]][0].s0_tc + rng.uniform(-0.3, 0.3)
            front = conflict[g] - speeds[0] * t_c
            start = (front, front)
        else:
            need = sum(config.d_min + 0.5 * TIME_HEADWAY * v + 5.0 for v in speeds)
            start = (need, need + 20.0)
        placed = _place_group(n, start, speeds, config.d_min, arch, rng, paths[g].length)
        agents = []
        for k, (s0, v) in enumerate(zip(placed, speeds)):
            cat = "vehicle"
            if k > 0 and rng.random() < 0.1:
                cat, v = "cyclist", max(lo, 0.5 * v)
            agent = _Agent(g, paths[g], s0, float(v), cat)
            if arch == "follow" and k == 0:
                if config.leader_stopped:
                    agent.stopped = True
                elif rng.random() < 0.4:
                    agent.brake_time = rng.uniform(1.0, horizon_t - 1.0)
            agents.append(agent)
        if agents and (arch == "intersection_cross" or (arch == "merge" and g in conflict)):
            agents[0].s0_tc = (conflict[g] - agents[0].s0) / max(agents[0].v_des, 1e-6)
        members[g] = agents

    if arch == "lane_change":
        changer = members[groups[0]][0]
        s_start = changer.s0 + rng.uniform(5.0, 25.0)
        changer.path = _blend_paths(paths[groups[0]], paths[groups[1]], s_start,
                                    rng.uniform(20.0, 35.0))
        changer.group = "changer"

    arcs = _roll_out(members, conflict, config, rng, steps, dt)

    tracks = []
    order = [a for g in groups for a in members[g]]
    for idx, agent in enumerate(order):
        pos = agent.path.at(arcs[id(agent)])
        tracks.append((agent, pos))
    return _finalise(tracks, config, rng)


def _routes_from_lanes(arch, by_id):
    prefixes = {
        "follow": {"F": "F"},
        "oncoming": {"E": "E", "W": "W"},
        "intersection_cross": {"A": "A", "B": "B"},
        "merge": {"M": "MO", "R": "RO"},
        "lane_change": {"P": "P", "Q": "Q"},
    }[arch]
    routes = {}
    for g, pre in prefixes.items():
        ids = sorted((lid for lid in by_id if lid[0] in pre),
                     key=lambda lid: (pre.index(lid[0]), int(lid[1:])))
        routes[g] = ids
    return routes


def _conflict_positions(arch, paths, by_id):
    if arch == "intersection_cross":
        cross = _intersection(paths["A"], paths["B"])
    elif arch == "merge":
        cross = by_id["O0"].points[0]
    else:
        return {}
    return {g: paths[g].locate(cross) for g in paths}


def _intersection(a: _Path, b: _Path):
    d = np.hypot(*(a.points[:, None] - b.points[None]).transpose(2, 0, 1))
    i, _ = np.unravel_index(np.argmin(d), d.shape)
    return a.points[i]


def _roll_out(members, conflict, config, rng, steps, dt):
    arcs = {}
    groups = sorted(members)
    conflicting = [g for g in groups if g in conflict]
    yielder = None
    if len(conflicting) == 2 and config.yield_enabled:
        yielder = conflicting[int(rng.integers(2))]
    free = [g for g in groups if g != yielder]
    for g in free:
        agents = members[g]
        plain = [a for a in agents if a.group == g]
        if plain:
            out = _simulate_group(plain, steps, dt, config.d_min)
            for a, row in zip(plain, out):
                arcs[id(a)] = row
        for a in agents:
            if a.group != g:
                arcs[id(a)] = _simulate_group([a], steps, dt, config.d_min)[0]
    if yielder is not None:
        other = next(g for g in conflicting if g != yielder)
        other_arcs = np.array([arcs[id(a)] for a in members[other]])
        c_other, c_self = conflict[other], conflict[yielder]

        def obstacle(t, i, s):
            occupied = ((other_arcs[:, t] > c_other - 35.0) & (other_arcs[:, t] < c_other + 6.0)).any()
            stop_line = c_self - 6.0
            if occupied and s < stop_line:
                return stop_line
            return None

        out = _simulate_group(members[yielder], steps, dt, config.d_min, obstacle)
        for a, row in zip(members[yielder], out):
            arcs[id(a)] = row
    return arcs


def _finalise(tracks, config, rng):
    out = []
    T, L = config.obs_len, config.horizon
    # separate stream: the noise level never changes the ground truth
    noise_rng = np.random.default_rng([config.seed, 2])
    for k, (agent, pos) in enumerate(tracks):
        valid = np.ones(L, dtype=bool)
        if k > 0 and config.dropout:
            if rng.random() < 0.2:
                valid[: int(rng.integers(1, 9))] = False
            if rng.random() < 0.1:
                valid[int(rng.integers(T + 5, L)):] = False
        obs = pos.copy()
        if config.noise_std > 0:
            obs[:T] += noise_rng.normal(0.0, config.noise_std, size=(T, 2))
        obs[~valid] = 0.0
        out.append(AgentTrack(f"a{k}", agent.category, bool(valid[T:].all()), obs, valid))
    return out


def generate_scene(config: ScenarioConfig, scene_id: str | None = None) -> RawScene:
    rng = np.random.default_rng(config.seed)
    lanes, _ = _layout(config.archetype, rng)
    agents = simulate_agents(lanes, config, rng)
    theta, offset = _scene_transform(rng)
    R = rotation_matrix(theta)
    lanes = [_move_lane(l, theta, offset) for l in lanes]
    for a in agents:
        a.positions = np.where(a.valid[:, None], a.positions @ R.T + offset, 0.0)
    return RawScene(scene_id or f"{config.archetype}-{config.seed}", agents, lanes,
                    agents[0].agent_id, config.timestep_hz, config.obs_len, config.pred_len)


def archetype_counts(n: int, mix: dict[str, float]) -> dict[str, int]:
    """Largest-remainder apportionment of ``n`` scenes over ``mix``."""
    total = sum(mix.values())
    if abs(total - 1.0) > 1e-9:
        raise ValueError(f"archetype proportions sum to {total}, expected 1")
    for name in mix:
        if name not in ARCHETYPES:
            raise ValueError(f"unknown archetype {name!r}")
    quotas = {k: n * p for k, p in mix.items()}
    counts = {k: int(math.floor(q)) for k, q in quotas.items()}
    left = n - sum(counts.values())
    by_rem = sorted(mix, key=lambda k: -(quotas[k] - counts[k]))
    for k in by_rem[:left]:
        counts[k] += 1
    return counts


def generate_dataset(n_scenes: int, archetype_mix: dict[str, float] | None = None,
                     seed: int = 0, start_index: int = 0, agents_range=(3, 6),
                     **config_kwargs) -> list[RawScene]:
    """``n_scenes`` scenes with archetypes apportioned by ``archetype_mix``.

    Scene ``i`` is generated from ``seed ^ (start_index + i)`` so index
    ranges can be produced independently and reproduce exactly.
    """
    mix = archetype_mix or {a: 1.0 / len(ARCHETYPES) for a in ARCHETYPES}
    counts = archetype_counts(n_scenes, mix)
    kinds = [k for k in mix for _ in range(counts[k])]
    np.random.default_rng(seed).shuffle(kinds)
    scenes = []
    for i, kind in enumerate(kinds):
        index = start_index + i
        scene_seed = seed ^ index
        rng = np.random.default_rng([scene_seed, 7919])
        n_agents = int(rng.integers(agents_range[0], agents_range[1] + 1))
        cfg = ScenarioConfig(archetype=kind, n_agents=n_agents, seed=scene_seed, **config_kwargs)
        scenes.append(generate_scene(cfg, scene_id=f"{kind}-{seed}-{index:06d}"))
    return scenes
