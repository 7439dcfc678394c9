"""Single-agent and multi-agent forecasting metrics (numpy)."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass

import numpy as np

logger = logging.getLogger(__name__)

MISS_THRESHOLD = 2.0
COLLISION_RADIUS = 2.0


def _norm(d: np.ndarray) -> np.ndarray:
    """Euclidean length over the last axis as sqrt(dx*dx + dy*dy), each op correctly rounded."""
    return np.sqrt(d[..., 0] * d[..., 0] + d[..., 1] * d[..., 1])


def _mean(values) -> float:
    """Correctly rounded mean (order independent, so batching never changes a metric)."""
    values = [float(v) for v in values]
    return math.fsum(values) / len(values)


def _last_valid(mask: np.ndarray) -> int:
    idx = np.flatnonzero(mask)
    if len(idx) == 0:
        raise ValueError("ground truth has no valid future step")
    return int(idx[-1])


def displacement_errors(modes, gt, mask):
    """Per-mode euclidean error at every step, (K, Tp)."""
    modes, gt = np.asarray(modes, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    return _norm(modes - gt[None])


def min_ade(modes, gt, mask) -> float:
    mask = np.asarray(mask, dtype=bool)
    _last_valid(mask)
    err = displacement_errors(modes, gt, mask)[:, mask]
    return min(_mean(row) for row in err)


def endpoint_errors(modes, gt, mask) -> np.ndarray:
    t = _last_valid(np.asarray(mask, dtype=bool))
    return displacement_errors(modes, gt, mask)[:, t]


def min_fde(modes, gt, mask) -> float:
    return float(endpoint_errors(modes, gt, mask).min())


def miss_rate(modes, gt, mask, threshold: float = MISS_THRESHOLD) -> int:
    """1 when even the best endpoint is farther than ``threshold`` (strict)."""
    return int(min_fde(modes, gt, mask) > threshold)


def brier_min_fde(modes, probabilities, gt, mask) -> float:
    fde = endpoint_errors(modes, gt, mask)
    best = int(np.argmin(fde))
    return float(fde[best] + (1.0 - float(probabilities[best])) ** 2)


@dataclass
class AgentMetrics:
    scene_id: str
    agent_id: str
    focal: bool
    scored: bool
    min_ade: float
    min_fde: float
    miss: int
    brier_min_fde: float


def agent_metrics(scene_id, agent_id, modes, probabilities, gt, mask, focal=False, scored=True,
                  miss_threshold: float = MISS_THRESHOLD) -> AgentMetrics:
    return AgentMetrics(scene_id, agent_id, focal, scored, min_ade(modes, gt, mask), min_fde(modes, gt, mask),
                        miss_rate(modes, gt, mask, miss_threshold), brier_min_fde(modes, probabilities, gt, mask))


def multi_agent_aggregate(records: list[AgentMetrics]) -> dict[str, float]:
    """avg* metrics: mean over scored agents inside each scene, then over scenes.

    actorMR is the flat fraction of scored agents that miss.
    """
    by_scene: dict[str, list[AgentMetrics]] = {}
    for r in records:
        by_scene.setdefault(r.scene_id, [])
        if r.scored:
            by_scene[r.scene_id].append(r)
    scene_means = []
    for sid, rs in by_scene.items():
        if not rs:
            logger.warning("scene %s has no scored agents; excluded from avg* metrics", sid)
            continue
        scene_means.append((_mean(r.min_ade for r in rs), _mean(r.min_fde for r in rs),
                            _mean(r.brier_min_fde for r in rs)))
    scored = [r for r in records if r.scored]
    if not scene_means:
        nan = float("nan")
        return {"avgMinADE": nan, "avgMinFDE": nan, "avgBrierMinFDE": nan, "actorMR": nan}
    cols = list(zip(*scene_means))
    return {"avgMinADE": _mean(cols[0]), "avgMinFDE": _mean(cols[1]), "avgBrierMinFDE": _mean(cols[2]),
            "actorMR": _mean(r.miss for r in scored)}


def scene_collides(trajectories, masks=None, radius: float = COLLISION_RADIUS) -> int:
    """1 if any two trajectories (N, Tp, 2) come closer than 2*radius at a common step."""
    traj = np.asarray(trajectories, dtype=np.float64)
    n = len(traj)
    if n < 2:
        return 0
    m = np.ones(traj.shape[:2], dtype=bool) if masks is None else np.asarray(masks, dtype=bool)
    diff = traj[:, None] - traj[None, :]
    dist = _norm(diff)                                   # (N, N, Tp)
    both = m[:, None] & m[None, :]
    close = (dist < 2.0 * radius) & both
    close[np.arange(n), np.arange(n)] = False
    return int(close.any())


def actor_collision_rate(scenes: list, radius: float = COLLISION_RADIUS) -> float:
    """``scenes`` is a list of (N, Tp, 2) arrays of selected absolute trajectories."""
    if not scenes:
        return float("nan")
    return _mean(scene_collides(t, radius=radius) for t in scenes)


def select_trajectories(absolute_modes, probabilities) -> np.ndarray:
    """Highest-probability mode per agent (ties -> smaller k)."""
    probs = np.asarray(probabilities)
    best = np.argmax(probs, axis=-1)
    return np.asarray(absolute_modes)[np.arange(len(best)), best]


@dataclass
class MetricReport:
    minADE: float
    minFDE: float
    MR: float
    brier_minFDE: float
    avgMinADE: float
    avgMinFDE: float
    avgBrierMinFDE: float
    actorMR: float
    actorCR: float
    n_scenes: int
    n_agents: int

    FIELDS = ("minADE", "minFDE", "MR", "brier_minFDE", "avgMinADE", "avgMinFDE", "avgBrierMinFDE",
              "actorMR", "actorCR", "n_scenes", "n_agents")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps({k: (None if isinstance(v, float) and math.isnan(v) else v)
                           for k, v in self.to_dict().items()}, indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "MetricReport":
        return cls(**{k: (float("nan") if d[k] is None else d[k]) for k in cls.FIELDS})

    def table(self) -> str:
        width = max(len(k) for k in self.FIELDS)
        rows = []
        for k in self.FIELDS:
            v = getattr(self, k)
            rows.append(f"{k:<{width}}  {v:>10}" if isinstance(v, int) else f"{k:<{width}}  {v:>10.4f}")
        return "\n".join(rows)


def build_report(records: list[AgentMetrics], selected: list, radius: float = COLLISION_RADIUS) -> MetricReport:
    """``selected``: per scene, the (N, Tp, 2) selected trajectories of its scored agents."""
    focal = [r for r in records if r.focal]
    agg = multi_agent_aggregate(records)

    def mean(attr):
        return _mean(getattr(r, attr) for r in focal) if focal else float("nan")

    return MetricReport(
        minADE=mean("min_ade"), minFDE=mean("min_fde"), MR=mean("miss"), brier_minFDE=mean("brier_min_fde"),
        avgMinADE=agg["avgMinADE"], avgMinFDE=agg["avgMinFDE"], avgBrierMinFDE=agg["avgBrierMinFDE"],
        actorMR=agg["actorMR"], actorCR=actor_collision_rate(selected, radius),
        n_scenes=len({r.scene_id for r in records}), n_agents=len(records),
    )
