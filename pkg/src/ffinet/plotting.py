"""Static scene plots: lanes, history, ground truth, initial and final predictions."""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .scene import RawScene  # noqa: E402

PREDICTION_FORMAT = "ffinet-predictions/1"
SUPPORTED_FORMATS = {".png", ".jpg", ".jpeg", ".pdf", ".svg"}

LANE_COLOR = "grey"
HISTORY_COLOR = "gold"
GT_COLOR = "red"
PRED_COLOR = "green"
INITIAL_COLOR = "purple"


class PlotError(ValueError):
    pass


def write_predictions(predictions, path) -> None:
    payload = {"format": PREDICTION_FORMAT, "scenes": [p.to_dict() for p in predictions]}
    Path(path).write_text(json.dumps(payload))


def read_predictions(path) -> dict[str, dict]:
    payload = json.loads(Path(path).read_text())
    if payload.get("format") != PREDICTION_FORMAT:
        raise PlotError(f"{path}: not a prediction file (format {payload.get('format')!r})")
    return {p["scene_id"]: p for p in payload["scenes"]}


def plot_scene(scene: RawScene, prediction: dict, out_path, show_initial: bool = True):
    """Render one scene; returns the matplotlib Figure (closed after saving)."""
    out_path = Path(out_path)
    if out_path.suffix.lower() not in SUPPORTED_FORMATS:
        raise PlotError(f"unsupported image format {out_path.suffix!r}; use one of {sorted(SUPPORTED_FORMATS)}")
    if prediction["scene_id"] != scene.scene_id:
        raise PlotError(f"scene id mismatch: scene {scene.scene_id!r} vs prediction {prediction['scene_id']!r}")
    fig, ax = plt.subplots(figsize=(7, 7))
    for lane in scene.lanes:
        ax.plot(lane.points[:, 0], lane.points[:, 1], color=LANE_COLOR, lw=1, gid="lane")
    index = {a.agent_id: a for a in scene.agents}
    T = scene.obs_len
    modes = np.asarray(prediction["modes"])
    initial = np.asarray(prediction["initial"]) if show_initial and "initial" in prediction else None
    for i, aid in enumerate(prediction["agent_ids"]):
        track = index[aid]
        hist = track.positions[:T][track.valid[:T].astype(bool)]
        fut = track.positions[T:][track.valid[T:].astype(bool)]
        ax.plot(hist[:, 0], hist[:, 1], color=HISTORY_COLOR, lw=2, gid="history")
        ax.plot(hist[-1, 0], hist[-1, 1], "o", color="black", ms=3, gid="current")
        if len(fut):
            ax.plot(fut[:, 0], fut[:, 1], color=GT_COLOR, lw=2, gid="gt")
            ax.plot(fut[-1, 0], fut[-1, 1], "*", color=GT_COLOR, ms=10, gid="gt_end")
        for traj in modes[i]:
            ax.plot(traj[:, 0], traj[:, 1], color=PRED_COLOR, lw=1, gid="prediction")
            ax.plot(traj[-1, 0], traj[-1, 1], "*", color=PRED_COLOR, ms=8, gid="prediction_end")
        if initial is not None:
            ax.plot(initial[i][:, 0], initial[i][:, 1], color=INITIAL_COLOR, lw=1.5, gid="initial")
            ax.plot(initial[i][-1, 0], initial[i][-1, 1], "*", color=INITIAL_COLOR, ms=8, gid="initial_end")
    ax.set_aspect("equal")
    ax.set_title(scene.scene_id)
    fig.savefig(out_path)
    plt.close(fig)
    return fig


def count_lines(fig, gid: str) -> int:
    return sum(1 for line in fig.axes[0].get_lines() if line.get_gid() == gid)
