"""Model-ready features per scene and their concatenation into batches."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields

import numpy as np
import torch

from .scene import (
    AgentFrame,
    DecomposedScene,
    RawScene,
    build_interaction_graphs,
    decompose_scene,
    nearest_partners,
    normalize_vectors,
)

logger = logging.getLogger(__name__)


def l2l_kinds(dilations) -> list[str]:
    return ["pre"] + [f"suc{d}" for d in sorted(dilations)] + ["left", "right"]


def loss_mask_threshold(horizon: int, fraction: float = 0.8) -> int:
    """Minimum number of valid timestamps for an agent to enter the loss (40 of 50)."""
    return int(math.ceil(fraction * horizon - 1e-9))


@dataclass(eq=False)
class SceneFeatures:
    """Everything the network and the loss need for one scene (numpy, float64)."""

    scene_id: str
    agent_ids: list
    focal_index: int
    agent_z: np.ndarray          # (A, T-1, 2) displacements in own frame
    agent_mask: np.ndarray       # (A, T-1)
    agent_current: np.ndarray    # (A, 2) in anchor or absolute frame
    agent_origin: np.ndarray     # (A, 2) absolute
    agent_heading: np.ndarray    # (A,)
    lane_z: list                 # S arrays (N-1, 2) in lane frame
    lane_attr: np.ndarray        # (S, 5)
    lane_current: np.ndarray     # (S, 2)
    a2l: tuple                   # (receivers, senders, geometry)
    l2a: tuple
    a2a: tuple
    l2l: tuple                   # (receivers, senders, geometry, kind index)
    agent_partner: np.ndarray    # (A,) nearest lane or -1
    lane_partner: np.ndarray     # (S,) nearest agent or -1
    gt_local: np.ndarray         # (A, Tp, 2)
    gt_abs: np.ndarray           # (A, Tp, 2)
    gt_mask: np.ndarray          # (A, Tp)
    loss_mask: np.ndarray        # (A,)
    scored: np.ndarray           # (A,)

    @property
    def num_agents(self) -> int:
        return len(self.agent_ids)

    @property
    def num_lanes(self) -> int:
        return len(self.lane_z)

    @property
    def frames(self) -> list[AgentFrame]:
        return [AgentFrame(tuple(o), h) for o, h in zip(self.agent_origin, self.agent_heading)]


def featurize(scene: RawScene, current_frame: str = "anchor", thresholds=None,
              dilations=(1, 2, 4), min_valid_fraction: float = 0.8,
              decomposed: DecomposedScene | None = None) -> SceneFeatures:
    dec = decomposed or decompose_scene(scene)
    graphs = build_interaction_graphs(dec, thresholds, dilations)
    z_agents, z_lanes = normalize_vectors(dec)
    if current_frame == "anchor":
        f = dec.focal_index
        focal = AgentFrame(tuple(dec.current_positions[f]), dec.headings[f])
        agent_cur = focal.to_local(dec.current_positions)
        lane_cur = focal.to_local(dec.lane_anchor_positions).reshape(-1, 2)
    elif current_frame == "absolute":
        agent_cur = dec.current_positions.copy()
        lane_cur = dec.lane_anchor_positions.copy()
    else:
        raise ValueError(f"unknown current_frame {current_frame!r}")
    gt_local, gt_mask = dec.future_positions_local()
    gt_abs = np.zeros_like(gt_local)
    for i, frame in enumerate(dec.frames):
        gt_abs[i] = frame.to_global(gt_local[i])
    gt_abs[~gt_mask] = 0.0
    threshold = loss_mask_threshold(scene.horizon, min_valid_fraction)
    loss_mask = (dec.agent_valid.sum(axis=1) >= threshold) & gt_mask.any(axis=1)
    kinds = {k: n for n, k in enumerate(l2l_kinds(dilations))}
    agent_partner, lane_partner = nearest_partners(dec)

    def edges(es):
        return (es.receivers.copy(), es.senders.copy(), es.geometry.copy())

    l2l_kind = np.array([kinds[k] for k in graphs.l2l.kinds], dtype=np.int64)
    return SceneFeatures(
        scene_id=scene.scene_id,
        agent_ids=list(dec.agent_ids),
        focal_index=dec.focal_index,
        agent_z=z_agents,
        agent_mask=dec.observed_mask.copy(),
        agent_current=agent_cur,
        agent_origin=dec.current_positions.copy(),
        agent_heading=dec.headings.copy(),
        lane_z=z_lanes,
        lane_attr=np.array([a.encode() for a in dec.lane_attributes]).reshape(-1, 5),
        lane_current=lane_cur,
        a2l=edges(graphs.a2l),
        l2a=edges(graphs.l2a),
        a2a=edges(graphs.a2a),
        l2l=edges(graphs.l2l) + (l2l_kind,),
        agent_partner=agent_partner,
        lane_partner=lane_partner,
        gt_local=gt_local,
        gt_abs=gt_abs,
        gt_mask=gt_mask,
        loss_mask=loss_mask,
        scored=dec.scored.copy(),
    )


def featurize_config(scene: RawScene, cfg: dict) -> SceneFeatures:
    return featurize(
        scene,
        current_frame=cfg["model.current_frame"],
        thresholds={"a2l": cfg["graph.a2l"], "l2a": cfg["graph.l2a"], "a2a": cfg["graph.a2a"]},
        dilations=cfg["model.dilations"],
        min_valid_fraction=cfg["loss.min_valid_fraction"],
    )


@dataclass(eq=False)
class SceneBatch:
    """Several scenes concatenated along the agent and lane axes.

    Edge indices are offset per scene, so no edge ever crosses scenes.
    ``agent_offsets[k]:agent_offsets[k+1]`` selects scene ``k``'s agents.
    """

    scene_ids: list
    agent_offsets: np.ndarray
    lane_offsets: np.ndarray
    focal_index: torch.Tensor        # (B,) global agent index of each focal agent
    agent_z: torch.Tensor
    agent_mask: torch.Tensor
    agent_current: torch.Tensor
    lane_z: torch.Tensor             # (S, M, 2) zero padded
    lane_mask: torch.Tensor          # (S, M)
    lane_attr: torch.Tensor
    lane_current: torch.Tensor
    a2l: tuple
    l2a: tuple
    a2a: tuple
    l2l: tuple
    agent_partner: torch.Tensor
    lane_partner: torch.Tensor
    gt_local: torch.Tensor
    gt_mask: torch.Tensor
    loss_mask: torch.Tensor
    scored: torch.Tensor
    features: list                   # the SceneFeatures, for denormalisation and metrics

    @property
    def num_agents(self) -> int:
        return int(self.agent_offsets[-1])

    @property
    def num_lanes(self) -> int:
        return int(self.lane_offsets[-1])

    def scene_slice(self, k: int) -> slice:
        return slice(int(self.agent_offsets[k]), int(self.agent_offsets[k + 1]))

    def to(self, dtype: torch.dtype) -> "SceneBatch":
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, torch.Tensor) and v.is_floating_point():
                v = v.to(dtype)
            elif isinstance(v, tuple):
                v = tuple(t.to(dtype) if t.is_floating_point() else t for t in v)
            out[f.name] = v
        return SceneBatch(**out)


def collate(feats: list[SceneFeatures], dtype: torch.dtype = torch.float32) -> SceneBatch:
    a_off = np.concatenate([[0], np.cumsum([f.num_agents for f in feats])]).astype(np.int64)
    l_off = np.concatenate([[0], np.cumsum([f.num_lanes for f in feats])]).astype(np.int64)

    def fl(arrays, width=None):
        arr = np.concatenate(arrays) if arrays else np.zeros((0,) + (width or ()))
        return torch.as_tensor(arr, dtype=dtype)

    def cat_edges(name, recv_off, send_off):
        parts = [getattr(f, name) for f in feats]
        r = np.concatenate([p[0] + recv_off[k] for k, p in enumerate(parts)]).astype(np.int64)
        s = np.concatenate([p[1] + send_off[k] for k, p in enumerate(parts)]).astype(np.int64)
        g = np.concatenate([p[2] for p in parts]).reshape(-1, 3)
        out = (torch.as_tensor(r), torch.as_tensor(s), torch.as_tensor(g, dtype=dtype))
        if len(parts[0]) == 4:
            out += (torch.as_tensor(np.concatenate([p[3] for p in parts]).astype(np.int64)),)
        return out

    def partners(name, off):
        out = []
        for k, f in enumerate(feats):
            p = getattr(f, name)
            out.append(np.where(p >= 0, p + off[k], -1))
        return torch.as_tensor(np.concatenate(out).astype(np.int64))

    max_m = max([len(z) for f in feats for z in f.lane_z], default=1)
    n_lanes = int(l_off[-1])
    lane_z = np.zeros((n_lanes, max_m, 2))
    lane_mask = np.zeros((n_lanes, max_m), dtype=bool)
    row = 0
    for f in feats:
        for z in f.lane_z:
            lane_z[row, : len(z)] = z
            lane_mask[row, : len(z)] = True
            row += 1

    return SceneBatch(
        scene_ids=[f.scene_id for f in feats],
        agent_offsets=a_off,
        lane_offsets=l_off,
        focal_index=torch.as_tensor(a_off[:-1] + np.array([f.focal_index for f in feats], dtype=np.int64)),
        agent_z=fl([f.agent_z for f in feats]),
        agent_mask=torch.as_tensor(np.concatenate([f.agent_mask for f in feats])),
        agent_current=fl([f.agent_current for f in feats]),
        lane_z=torch.as_tensor(lane_z, dtype=dtype),
        lane_mask=torch.as_tensor(lane_mask),
        lane_attr=fl([f.lane_attr for f in feats], (5,)),
        lane_current=fl([f.lane_current.reshape(-1, 2) for f in feats], (2,)),
        a2l=cat_edges("a2l", l_off, a_off),
        l2a=cat_edges("l2a", a_off, l_off),
        a2a=cat_edges("a2a", a_off, a_off),
        l2l=cat_edges("l2l", l_off, l_off),
        agent_partner=partners("agent_partner", l_off),
        lane_partner=partners("lane_partner", a_off),
        gt_local=fl([f.gt_local for f in feats]),
        gt_mask=torch.as_tensor(np.concatenate([f.gt_mask for f in feats])),
        loss_mask=torch.as_tensor(np.concatenate([f.loss_mask for f in feats])),
        scored=torch.as_tensor(np.concatenate([f.scored for f in feats])),
        features=list(feats),
    )


def batch_scenes(scenes: list[RawScene], max_agents_per_batch: int, cfg: dict | None = None,
                 dtype: torch.dtype = torch.float32) -> list[SceneBatch]:
    """Greedy packing of scenes into batches of at most ``max_agents_per_batch`` agents."""
    from .config import default_config

    cfg = cfg or default_config()
    groups, current, count = [], [], 0
    for scene in scenes:
        n = len(scene.agents)
        if n > max_agents_per_batch:
            logger.warning("scene %s has %d agents (> %d); batching it alone",
                           scene.scene_id, n, max_agents_per_batch)
            if current:
                groups.append(current)
            groups.append([scene])
            current, count = [], 0
            continue
        if count + n > max_agents_per_batch and current:
            groups.append(current)
            current, count = [], 0
        current.append(scene)
        count += n
    if current:
        groups.append(current)
    return [collate([featurize_config(s, cfg) for s in g], dtype) for g in groups]
