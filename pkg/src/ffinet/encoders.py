"""MLP blocks, trajectory/lane/current-position encoders and the lane graph convolution."""

from __future__ import annotations

import torch
import torch.nn as nn


class MLP1(nn.Sequential):
    """[Linear -> LayerNorm -> ReLU] x 2."""

    def __init__(self, in_dim: int, out_dim: int, hidden_dim: int | None = None):
        hidden_dim = hidden_dim or out_dim
        super().__init__(
            nn.Linear(in_dim, hidden_dim), nn.LayerNorm(hidden_dim), nn.ReLU(),
            nn.Linear(hidden_dim, out_dim), nn.LayerNorm(out_dim), nn.ReLU(),
        )


class MLP2(nn.Sequential):
    """Linear -> ReLU -> Linear, no trailing activation."""

    def __init__(self, in_dim: int, out_dim: int, hidden_dim: int | None = None):
        hidden_dim = hidden_dim or out_dim
        super().__init__(nn.Linear(in_dim, hidden_dim), nn.ReLU(), nn.Linear(hidden_dim, out_dim))


class MLP3(nn.Sequential):
    """MLP1 followed by a linear output layer."""

    def __init__(self, in_dim: int, out_dim: int, hidden_dim: int):
        super().__init__(MLP1(in_dim, hidden_dim), nn.Linear(hidden_dim, out_dim))


MLP4 = MLP2


class TrajectoryEncoder(nn.Module):
    """Multi-scale temporal convolution over masked displacement sequences.

    Input channels are ``[dx, dy, mask]``; coordinates are zeroed wherever the
    mask is 0, so values at padded steps never reach the output.  No
    normalization inside the CNN: it would rescale away the absolute speed.
    """

    def __init__(self, steps: int, hidden_dim: int = 128, kernel_sizes=(3, 5, 7), depth: int = 2):
        super().__init__()
        self.steps = steps
        branches = []
        for k in kernel_sizes:
            layers, c_in = [], 3
            for _ in range(depth):
                layers += [nn.Conv1d(c_in, hidden_dim, k, padding=k // 2), nn.ReLU()]
                c_in = hidden_dim
            branches.append(nn.Sequential(*layers))
        self.branches = nn.ModuleList(branches)
        self.fuse = nn.Sequential(
            nn.Conv1d(hidden_dim * len(kernel_sizes), hidden_dim, 1), nn.ReLU(),
        )
        self.temporal = nn.Linear(hidden_dim * steps, hidden_dim)

    def forward(self, z: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        m = mask.to(z.dtype)
        x = torch.cat([z * m.unsqueeze(-1), m.unsqueeze(-1)], dim=-1).transpose(1, 2)
        h = torch.cat([b(x) for b in self.branches], dim=1)
        h = self.fuse(h)
        return self.temporal(h.flatten(1))


class LaneGraphConv(nn.Module):
    """Lane graph convolution over typed lane-to-lane edges.

    Each layer computes ``h W_self + sum_kind sum_(edges of kind) h_sender W_kind``
    followed by LayerNorm, ReLU, a second linear map and a residual.  With
    ``use_geometry`` a relative-pose embedding of every edge is added to the
    sender feature before the typed map.
    """

    def __init__(self, hidden_dim: int, num_layers: int, kinds: list[str], use_geometry: bool = False):
        super().__init__()
        self.kinds = list(kinds)
        self.num_layers = num_layers
        self.use_geometry = use_geometry
        self.layers = nn.ModuleList()
        for _ in range(num_layers):
            self.layers.append(nn.ModuleDict({
                "self": nn.Linear(hidden_dim, hidden_dim, bias=False),
                "edge": nn.ModuleDict({k: nn.Linear(hidden_dim, hidden_dim, bias=False) for k in kinds}),
                "norm": nn.LayerNorm(hidden_dim),
                "out": nn.Linear(hidden_dim, hidden_dim, bias=False),
                "out_norm": nn.LayerNorm(hidden_dim),
            }))
        if use_geometry and num_layers:
            self.pose = RelativePoseEmbedding(hidden_dim)

    def forward(self, h: torch.Tensor, edges: tuple) -> torch.Tensor:
        receivers, senders, geometry, kinds = edges
        pose = self.pose(geometry) if self.use_geometry and self.num_layers and len(receivers) else None
        for layer in self.layers:
            agg = layer["self"](h)
            for k, name in enumerate(self.kinds):
                sel = kinds == k
                if not bool(sel.any()):
                    continue
                msg = h[senders[sel]]
                if pose is not None:
                    msg = msg + pose[sel]
                agg = agg.index_add(0, receivers[sel], layer["edge"][name](msg))
            out = torch.relu(layer["norm"](agg))
            out = layer["out_norm"](layer["out"](out))
            h = torch.relu(out + h)
        return h


class RelativePoseEmbedding(nn.Module):
    """ReLU(MLP2(dp) + MLP2(cos dtheta, sin dtheta)) for edges ``[dx, dy, dtheta]``."""

    def __init__(self, hidden_dim: int):
        super().__init__()
        self.offset = MLP2(2, hidden_dim)
        self.angle = MLP2(2, hidden_dim)

    def forward(self, geometry: torch.Tensor) -> torch.Tensor:
        theta = geometry[:, 2]
        ang = torch.stack([torch.cos(theta), torch.sin(theta)], dim=-1)
        return torch.relu(self.offset(geometry[:, :2]) + self.angle(ang))


class LaneEncoder(nn.Module):
    """Per-vector embedding, masked max-pool per segment, then lane graph convolution."""

    def __init__(self, hidden_dim: int = 128, num_layers: int = 2, kinds=("pre", "suc1", "left", "right"),
                 attr_dim: int = 5):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.embed = MLP1(2 + attr_dim, hidden_dim)
        self.gcn = LaneGraphConv(hidden_dim, num_layers, list(kinds))

    def forward(self, z: torch.Tensor, mask: torch.Tensor, attrs: torch.Tensor, edges: tuple) -> torch.Tensor:
        if z.shape[0] == 0:
            return z.new_zeros((0, self.hidden_dim))
        a = attrs.unsqueeze(1).expand(-1, z.shape[1], -1)
        h = self.embed(torch.cat([z, a], dim=-1))
        h = h.masked_fill(~mask.unsqueeze(-1), float("-inf")).amax(dim=1)
        return self.gcn(h, edges)


class CurrentPositionEncoder(MLP1):
    def __init__(self, hidden_dim: int = 128):
        super().__init__(2, hidden_dim)
