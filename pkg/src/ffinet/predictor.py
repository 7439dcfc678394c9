"""K-modal trajectory head, score head and the four-term training loss."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .encoders import MLP3, MLP4

logger = logging.getLogger(__name__)


class MultimodalPredictor(nn.Module):
    """K independent regression heads plus one shared score head.

    ``s_k = MLP3_s([MLP4(endpoint_k), g])``, so a mode's score depends on
    the agent feature and on its own endpoint only.  Each head emits
    per-step displacements that are accumulated into agent-frame positions.
    """

    def __init__(self, hidden_dim: int, pred_len: int, num_modes: int = 6):
        super().__init__()
        self.pred_len = pred_len
        self.num_modes = num_modes
        self.heads = nn.ModuleList([MLP3(hidden_dim, 2 * pred_len, hidden_dim) for _ in range(num_modes)])
        self.endpoint_embed = MLP4(2, hidden_dim)
        self.score_head = MLP3(2 * hidden_dim, 1, hidden_dim)

    def score_modes(self, g: torch.Tensor, modes: torch.Tensor) -> torch.Tensor:
        end = self.endpoint_embed(modes[:, :, -1])
        ctx = g.unsqueeze(1).expand(-1, modes.shape[1], -1)
        return self.score_head(torch.cat([end, ctx], dim=-1)).squeeze(-1)

    def forward(self, g: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        modes = torch.stack([h(g).view(-1, self.pred_len, 2).cumsum(dim=1) for h in self.heads], dim=1)
        return modes, self.score_modes(g, modes)


def scores_to_probabilities(scores: torch.Tensor) -> torch.Tensor:
    return torch.softmax(scores, dim=-1)


def last_valid_index(gt_mask: torch.Tensor) -> torch.Tensor:
    """Index of the last valid future step per agent (0 when none is valid)."""
    steps = torch.arange(gt_mask.shape[-1], device=gt_mask.device)
    return torch.where(gt_mask, steps, torch.zeros_like(steps)).amax(dim=-1)


def wta_select(modes: torch.Tensor, gt: torch.Tensor, gt_mask: torch.Tensor) -> torch.Tensor:
    """Mode whose point at the last valid step is closest to ground truth; ties -> smaller k."""
    with torch.no_grad():
        last = last_valid_index(gt_mask)
        rows = torch.arange(modes.shape[0], device=modes.device)
        end = modes[rows, :, last]                       # (A, K, 2)
        err = torch.linalg.norm(end - gt[rows, last].unsqueeze(1), dim=-1)
        return torch.argmin(err, dim=-1)                 # first minimum on ties


@dataclass
class LossReport:
    total: torch.Tensor
    reg: torch.Tensor
    end: torch.Tensor
    cls: torch.Tensor
    initial_reg: torch.Tensor
    weights: dict
    num_agents: int = 0

    def as_floats(self) -> dict:
        return {k: float(getattr(self, k).detach()) for k in ("total", "reg", "end", "cls", "initial_reg")}


def _trajectory_l1(pred, gt, mask, delta):
    """Smooth-l1 summed over x/y, averaged over valid steps -> one value per agent."""
    per_step = F.smooth_l1_loss(pred, gt, reduction="none", beta=delta).sum(-1)
    m = mask.to(per_step.dtype)
    return (per_step * m).sum(-1) / m.sum(-1).clamp(min=1.0)


def total_loss(modes, scores, initial, gt, gt_mask, loss_mask, lam: float = 0.5, beta: float = 2.0,
               gamma: float = 0.5, margin: float = 0.2, cls_gate: float = 2.0,
               delta: float = 1.0) -> LossReport:
    """Weighted sum reg + lam*end + beta*cls + gamma*initial_reg, averaged over contributing agents.

    ``initial`` may be None (feedback module disabled); its term is then 0.
    """
    weights = {"lambda": lam, "beta": beta, "gamma": gamma}
    agents = loss_mask & gt_mask.any(-1)
    n = int(agents.sum())
    if n == 0:
        logger.warning("no agent satisfies the loss mask; returning zero loss")
        zero = modes.sum() * 0.0 + scores.sum() * 0.0
        if initial is not None:
            zero = zero + initial.sum() * 0.0
        return LossReport(zero, zero, zero, zero, zero, weights, 0)

    modes, scores, gt, gt_mask = modes[agents], scores[agents], gt[agents], gt_mask[agents]
    rows = torch.arange(n, device=modes.device)
    best = wta_select(modes, gt, gt_mask)
    best_traj = modes[rows, best]
    reg = _trajectory_l1(best_traj, gt, gt_mask, delta).mean()

    last = last_valid_index(gt_mask)
    end = F.smooth_l1_loss(best_traj[rows, last], gt[rows, last], reduction="none", beta=delta).sum(-1).mean()

    endpoints = modes[rows, :, last]                                   # (n, K, 2)
    with torch.no_grad():
        gap = torch.linalg.norm(endpoints - endpoints[rows, best].unsqueeze(1), dim=-1)
        gated = (gap >= cls_gate)
        gated[rows, best] = False
    s_best = scores[rows, best].unsqueeze(1)
    hinge = torch.relu(scores + margin - s_best) * gated.to(scores.dtype)
    counts = gated.sum(-1)
    per_agent = hinge.sum(-1) / counts.clamp(min=1).to(scores.dtype)
    cls = per_agent.mean()

    if initial is not None:
        initial_reg = _trajectory_l1(initial[agents], gt, gt_mask, delta).mean()
    else:
        initial_reg = reg.new_zeros(())
    total = reg + lam * end + beta * cls + gamma * initial_reg
    return LossReport(total, reg, end, cls, initial_reg, weights, n)


def loss_from_config(out, batch, cfg) -> LossReport:
    return total_loss(out.modes, out.scores, out.initial, batch.gt_local, batch.gt_mask, batch.loss_mask,
                      lam=cfg["loss.lambda"], beta=cfg["loss.beta"], gamma=cfg["loss.gamma"],
                      margin=cfg["loss.margin"], cls_gate=cfg["loss.cls_distance_gate"],
                      delta=cfg["loss.smooth_l1_delta"])
