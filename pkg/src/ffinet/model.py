"""The full network: encoders -> current fusion -> observation interaction ->
future feedback -> global fusion -> multimodal predictor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn as nn

from .batching import SceneBatch, l2l_kinds
from .config import default_config
from .encoders import CurrentPositionEncoder, LaneEncoder, TrajectoryEncoder
from .interaction import CurrentFusion, FutureFeedback, ObservationInteraction
from .predictor import MultimodalPredictor, scores_to_probabilities
from .scene import denormalize_predictions

DTYPES = {"float32": torch.float32, "float64": torch.float64}


@dataclass
class ModelOutput:
    modes: torch.Tensor               # (A, K, Tp, 2) local frame
    scores: torch.Tensor              # (A, K)
    initial: torch.Tensor | None      # (A, Tp, 2) local frame, None without feedback module
    features: dict                    # intermediate node features by name

    @property
    def probabilities(self) -> torch.Tensor:
        return scores_to_probabilities(self.scores)


@dataclass
class PredictionSet:
    """Per-agent predictions of one scene, numpy, both frames."""

    scene_id: str
    agent_ids: list
    modes: np.ndarray                 # (A, K, Tp, 2) local
    probabilities: np.ndarray         # (A, K)
    scores: np.ndarray
    initial: np.ndarray | None
    absolute_modes: np.ndarray        # (A, K, Tp, 2)
    absolute_initial: np.ndarray | None

    def to_dict(self) -> dict:
        d = {"scene_id": self.scene_id, "agent_ids": list(self.agent_ids),
             "modes": self.absolute_modes.tolist(), "probabilities": self.probabilities.tolist(),
             "scores": self.scores.tolist()}
        if self.absolute_initial is not None:
            d["initial"] = self.absolute_initial.tolist()
        return d


class FFINet(nn.Module):
    def __init__(self, cfg: dict | None = None):
        super().__init__()
        cfg = dict(cfg or default_config())
        self.cfg = cfg
        d = cfg["model.hidden_dim"]
        obs, pred = cfg["model.obs_len"], cfg["model.pred_len"]
        kinds = l2l_kinds(cfg["model.dilations"])
        ks, depth = cfg["model.kernel_sizes"], cfg["model.conv_depth"]

        self.trajectory_encoder = TrajectoryEncoder(obs - 1, d, ks, depth)
        self.lane_encoder = LaneEncoder(d, cfg["model.gcn_layers"], kinds)
        self.agent_current = CurrentPositionEncoder(d)
        self.lane_current = CurrentPositionEncoder(d)
        self.current_fusion = CurrentFusion(d) if cfg["modules.current_fusion"] else None
        self.observation = ObservationInteraction(d, cfg["model.gcn_layers"], kinds)
        self.future_feedback = None
        if cfg["modules.future_feedback"]:
            self.future_feedback = FutureFeedback(d, pred, ks, depth, back=cfg["feedback.back"],
                                                  future=cfg["feedback.future"], forward=cfg["feedback.forward"])
        self.global_fusion = ObservationInteraction(d, cfg["model.gcn_layers"], kinds) \
            if cfg["modules.global_fusion"] else None
        self.predictor = MultimodalPredictor(d, pred, cfg["model.K"])
        self.to(DTYPES[cfg["model.dtype"]])

    @property
    def dtype(self) -> torch.dtype:
        return next(self.parameters()).dtype

    def forward(self, batch: SceneBatch) -> ModelOutput:
        graphs = {"a2l": batch.a2l, "l2l": batch.l2l, "l2a": batch.l2a, "a2a": batch.a2a}
        e_v = self.trajectory_encoder(batch.agent_z, batch.agent_mask)
        l_v = self.lane_encoder(batch.lane_z, batch.lane_mask, batch.lane_attr, batch.l2l)
        z_a = self.agent_current(batch.agent_current)
        z_l = self.lane_current(batch.lane_current)
        if self.current_fusion is not None:
            p_a, p_l = self.current_fusion(z_a, z_l, batch.agent_partner, batch.lane_partner)
        else:
            p_a, p_l = z_a, z_l
        e_a, e_l = e_v + p_a, l_v + p_l
        o_a, o_l = self.observation(e_a, e_l, graphs)
        initial = None
        f = o_a
        if self.future_feedback is not None:
            f, initial, _ = self.future_feedback(e_v, o_a, batch.a2a)
        g = f
        if self.global_fusion is not None:
            g, _ = self.global_fusion(f, o_l, graphs)
        modes, scores = self.predictor(g)
        feats = {"e_v": e_v, "lane_v": l_v, "e": e_a, "o": o_a, "o_lane": o_l, "f": f, "g": g}
        return ModelOutput(modes, scores, initial, feats)

    def predict_batch(self, batch: SceneBatch) -> list[PredictionSet]:
        batch = batch.to(self.dtype)
        was_training = self.training
        self.eval()
        with torch.no_grad():
            out = self(batch)
        self.train(was_training)
        return split_predictions(out, batch)


def split_predictions(out: ModelOutput, batch: SceneBatch) -> list[PredictionSet]:
    modes = out.modes.detach().double().cpu().numpy()
    scores = out.scores.detach().double().cpu().numpy()
    probs = out.probabilities.detach().double().cpu().numpy()
    initial = None if out.initial is None else out.initial.detach().double().cpu().numpy()
    result = []
    for k, feat in enumerate(batch.features):
        sl = batch.scene_slice(k)
        frames = feat.frames
        m = modes[sl]
        abs_modes = np.stack([denormalize_predictions(m[:, j], frames) for j in range(m.shape[1])], axis=1)
        init = None if initial is None else initial[sl]
        abs_init = None if init is None else denormalize_predictions(init, frames)
        result.append(PredictionSet(feat.scene_id, list(feat.agent_ids), m, probs[sl], scores[sl],
                                    init, abs_modes, abs_init))
    return result


def parameter_groups(model: nn.Module) -> dict[str, int]:
    """Parameter count per top-level module (absent modules report 0)."""
    names = ["trajectory_encoder", "lane_encoder", "agent_current", "lane_current", "current_fusion",
             "observation", "future_feedback", "global_fusion", "predictor"]
    out = {}
    for name in names:
        mod = getattr(model, name)
        out[name] = 0 if mod is None else sum(p.numel() for p in mod.parameters())
    return out
