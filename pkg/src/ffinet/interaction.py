"""Cross-temporal aggregation: relative interaction block and the modules built on it."""

from __future__ import annotations

import torch
import torch.nn as nn

from .encoders import MLP1, MLP2, LaneGraphConv, TrajectoryEncoder

OBSERVATION_ORDER = ("a2l", "l2l", "l2a", "a2a")


class RelativeInteractionBlock(nn.Module):
    """Sum-aggregated message passing conditioned on relative geometry.

    For every edge (center c, neighbor n) with geometry ``[dx, dy, dtheta]``::

        e_cn = ReLU(MLP2(dp) + MLP2(cos, sin))
        o_cn = MLP1([e_cn, MLP2(e_c), e_n])
        o_c  = MLP1(MLP2(e_c) + sum_n o_cn)
    """

    def __init__(self, hidden_dim: int):
        super().__init__()
        self.offset = MLP2(2, hidden_dim)
        self.angle = MLP2(2, hidden_dim)
        self.center = MLP2(hidden_dim, hidden_dim)
        self.edge = MLP1(3 * hidden_dim, hidden_dim)
        self.node = MLP1(hidden_dim, hidden_dim)

    def forward(self, center: torch.Tensor, neighbor: torch.Tensor, edges: tuple) -> torch.Tensor:
        receivers, senders, geometry = edges[:3]
        c = self.center(center)
        agg = c
        if len(receivers):
            theta = geometry[:, 2]
            ang = torch.stack([torch.cos(theta), torch.sin(theta)], dim=-1)
            rel = torch.relu(self.offset(geometry[:, :2]) + self.angle(ang))
            msg = self.edge(torch.cat([rel, c[receivers], neighbor[senders]], dim=-1))
            agg = c.index_add(0, receivers, msg)
        return self.node(agg)


class CurrentFusion(nn.Module):
    """Fuse current-position features of nearest agent-lane pairs.

    Nodes without a partner (no lanes / no agents in the scene) fuse with a
    learned null vector instead.
    """

    def __init__(self, hidden_dim: int):
        super().__init__()
        self.agent_pair = MLP1(2 * hidden_dim, hidden_dim)
        self.agent_refine = MLP1(hidden_dim, hidden_dim)
        self.agent_out = MLP1(2 * hidden_dim, hidden_dim)
        self.lane_pair = MLP1(2 * hidden_dim, hidden_dim)
        self.lane_refine = MLP1(hidden_dim, hidden_dim)
        self.lane_out = MLP1(2 * hidden_dim, hidden_dim)
        self.null_lane = nn.Parameter(torch.zeros(hidden_dim))
        self.null_agent = nn.Parameter(torch.zeros(hidden_dim))
        nn.init.normal_(self.null_lane, std=0.02)
        nn.init.normal_(self.null_agent, std=0.02)

    @staticmethod
    def _gather(features, index, null):
        out = null.expand(len(index), -1)
        if features.shape[0] == 0:
            return out
        picked = features[index.clamp(min=0)]
        return torch.where((index >= 0).unsqueeze(-1), picked, out)

    def forward(self, z_agent, z_lane, agent_partner, lane_partner):
        pa = self._gather(z_lane, agent_partner, self.null_lane)
        e1 = self.agent_pair(torch.cat([z_agent, pa], dim=-1))
        e_agent = self.agent_out(torch.cat([e1, self.agent_refine(e1)], dim=-1))
        pl = self._gather(z_agent, lane_partner, self.null_agent)
        l1 = self.lane_pair(torch.cat([z_lane, pl], dim=-1))
        e_lane = self.lane_out(torch.cat([l1, self.lane_refine(l1)], dim=-1))
        return e_agent, e_lane


class ObservationInteraction(nn.Module):
    """A2L -> L2L -> L2A -> A2A, each stage feeding the next."""

    def __init__(self, hidden_dim: int, gcn_layers: int, kinds: list[str]):
        super().__init__()
        self.a2l = RelativeInteractionBlock(hidden_dim)
        self.l2l = LaneGraphConv(hidden_dim, gcn_layers, kinds, use_geometry=True)
        self.l2a = RelativeInteractionBlock(hidden_dim)
        self.a2a = RelativeInteractionBlock(hidden_dim)
        self.order = OBSERVATION_ORDER  # test hook

    def forward(self, agents, lanes, graphs: dict):
        for stage in self.order:
            if stage == "a2l":
                lanes = self.a2l(lanes, agents, graphs["a2l"])
            elif stage == "l2l":
                lanes = self.l2l(lanes, graphs["l2l"])
            elif stage == "l2a":
                agents = self.l2a(agents, lanes, graphs["l2a"])
            else:
                agents = self.a2a(agents, agents, graphs["a2a"])
        return agents, lanes


class FutureFeedback(nn.Module):
    """Initial prediction, future encoding and the three feedback interactions.

    ``back``/``future``/``forward`` switch the individual interactions; a
    disabled one passes its center input through.  With all three disabled
    the module returns ``o`` unchanged.
    """

    def __init__(self, hidden_dim: int, pred_len: int, kernel_sizes=(3, 5, 7), conv_depth: int = 2,
                 back: bool = True, future: bool = True, forward: bool = True):
        super().__init__()
        self.pred_len = pred_len
        self.initial_mlp = MLP1(hidden_dim, hidden_dim)
        self.initial_out = nn.Linear(hidden_dim, 2 * pred_len)
        nn.init.zeros_(self.initial_out.weight)
        nn.init.zeros_(self.initial_out.bias)
        self.future_encoder = TrajectoryEncoder(pred_len, hidden_dim, kernel_sizes, conv_depth)
        self.feedback = RelativeInteractionBlock(hidden_dim) if back else None
        self.future = RelativeInteractionBlock(hidden_dim) if future else None
        self.feedforward = RelativeInteractionBlock(hidden_dim) if forward else None
        self.zero_feedforward = False  # test hook: force the feedforward output to 0

    def initial_predict(self, e_v: torch.Tensor) -> torch.Tensor:
        """Positions in the agent frame, accumulated from per-step displacements."""
        out = self.initial_out(self.initial_mlp(e_v))
        return out.view(-1, self.pred_len, 2).cumsum(dim=1)

    def encode_future(self, initial: torch.Tensor) -> torch.Tensor:
        prev = torch.cat([initial.new_zeros(initial.shape[0], 1, 2), initial[:, :-1]], dim=1)
        disp = initial - prev
        mask = torch.ones(initial.shape[:2], dtype=torch.bool, device=initial.device)
        return self.future_encoder(disp, mask)

    def forward(self, e_v, o, a2a):
        initial = self.initial_predict(e_v)
        e_f = self.encode_future(initial)
        if self.feedback is None and self.future is None and self.feedforward is None:
            return o, initial, e_f
        f_b = self.feedback(o, e_f, a2a) if self.feedback is not None else o
        f_u = self.future(f_b, f_b, a2a) if self.future is not None else f_b
        f_f = self.feedforward(f_u, o, a2a) if self.feedforward is not None else f_u
        if self.zero_feedforward:
            f_f = torch.zeros_like(f_f)
        return o + f_f, initial, e_f
