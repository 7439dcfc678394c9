"""On-disk scene format and dataset splits.

One scene per UTF-8 JSON file.  Floats are written with Python's shortest
round-trip repr, so ``read_scene(write_scene(s))`` is bit-exact.
"""

from __future__ import annotations

import hashlib
import json
import re
import warnings
from pathlib import Path

import numpy as np

from .scene import AgentTrack, LaneAttributes, LaneSegment, RawScene, SceneError

FORMAT_VERSION = "ffinet/1"
SPLITS = ("train", "val", "test")

_TOP_KEYS = {"format_version", "scene_id", "timestep_hz", "obs_len", "pred_len",
             "focal_agent_id", "agents", "lanes"}
_AGENT_KEYS = {"id", "category", "scored", "xy", "valid"}
_LANE_KEYS = {"id", "points", "successors", "predecessors", "left", "right", "attributes"}


class SceneFormatError(ValueError):
    """Malformed scene file.  ``field`` and ``line`` locate the problem."""

    def __init__(self, message, path=None, line=None, field=None):
        self.path, self.line, self.field = path, line, field
        where = str(path) if path else "<scene>"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}")


class FormatVersionError(SceneFormatError):
    pass


def scene_to_dict(scene: RawScene) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "scene_id": scene.scene_id,
        "timestep_hz": scene.timestep_hz,
        "obs_len": scene.obs_len,
        "pred_len": scene.pred_len,
        "focal_agent_id": scene.focal_agent_id,
        "agents": [
            {"id": a.agent_id, "category": a.category, "scored": bool(a.scored),
             "xy": a.positions.tolist(), "valid": [int(v) for v in a.valid]}
            for a in scene.agents
        ],
        "lanes": [
            {"id": l.lane_id, "points": l.points.tolist(), "successors": l.successors,
             "predecessors": l.predecessors, "left": l.left_neighbor, "right": l.right_neighbor,
             "attributes": {"turn": l.attributes.turn,
                            "in_intersection": l.attributes.in_intersection,
                            "traffic_control": l.attributes.traffic_control}}
            for l in scene.lanes
        ],
    }


def dumps_scene(scene: RawScene) -> str:
    """Serialise with one agent / lane record per line."""
    d = scene_to_dict(scene)
    head = {k: v for k, v in d.items() if k not in ("agents", "lanes")}
    lines = ["{"]
    for k, v in head.items():
        lines.append(f"  {json.dumps(k)}: {json.dumps(v)},")
    for key in ("agents", "lanes"):
        records = [json.dumps(r, separators=(",", ":")) for r in d[key]]
        lines.append(f'  "{key}": [')
        lines.extend(f"    {r}," for r in records[:-1])
        if records:
            lines.append(f"    {records[-1]}")
        lines.append("  ]," if key == "agents" else "  ]")
    lines.append("}")
    return "\n".join(lines) + "\n"


def write_scene(scene: RawScene, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_scene(scene), encoding="utf-8")


def _line_of(text: str, record_id: str, after: int = 0) -> int | None:
    m = re.search(r'"id"\s*:\s*' + re.escape(json.dumps(record_id)), text[after:])
    if m is None:
        return None
    return text.count("\n", 0, after + m.start()) + 1


def _warn_unknown(keys, known, where):
    extra = sorted(set(keys) - known)
    if extra:
        warnings.warn(f"{where}: ignoring unknown field(s) {extra}", UserWarning, stacklevel=3)


def loads_scene(text: str, path=None) -> RawScene:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneFormatError(exc.msg, path, exc.lineno) from exc
    if not isinstance(d, dict):
        raise SceneFormatError("top level must be an object", path, 1)
    version = d.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatVersionError(
            f"unsupported format_version {version!r} (expected {FORMAT_VERSION!r})",
            path, _line_containing(text, "format_version"), "format_version")
    _warn_unknown(d, _TOP_KEYS, "scene")
    for key in _TOP_KEYS:
        if key not in d:
            raise SceneFormatError(f"missing field {key!r}", path, None, key)
    obs_len, pred_len = int(d["obs_len"]), int(d["pred_len"])
    horizon = obs_len + pred_len

    agents = []
    for k, rec in enumerate(d["agents"]):
        line = _line_of(text, str(rec.get("id")))
        where = f"agents[{k}]"
        for key in _AGENT_KEYS:
            if key not in rec:
                raise SceneFormatError(f"{where}: missing field {key!r}", path, line, key)
        _warn_unknown(rec, _AGENT_KEYS, where)
        xy = rec["xy"]
        if len(xy) != horizon or any(len(p) != 2 for p in xy):
            raise SceneFormatError(
                f"{where}: field 'xy' must hold {horizon} [x, y] pairs, got {len(xy)}",
                path, line, "xy")
        if len(rec["valid"]) != horizon or any(v not in (0, 1) for v in rec["valid"]):
            raise SceneFormatError(f"{where}: field 'valid' must hold {horizon} 0/1 flags",
                                   path, line, "valid")
        try:
            agents.append(AgentTrack(str(rec["id"]), rec["category"], bool(rec["scored"]),
                                     np.array(xy, dtype=np.float64), np.array(rec["valid"])))
        except (SceneError, ValueError) as exc:
            raise SceneFormatError(f"{where}: {exc}", path, line) from exc

    lanes = []
    for k, rec in enumerate(d["lanes"]):
        line = _line_of(text, str(rec.get("id")))
        where = f"lanes[{k}]"
        for key in _LANE_KEYS:
            if key not in rec:
                raise SceneFormatError(f"{where}: missing field {key!r}", path, line, key)
        _warn_unknown(rec, _LANE_KEYS, where)
        attrs = rec["attributes"]
        _warn_unknown(attrs, {"turn", "in_intersection", "traffic_control"}, where + ".attributes")
        try:
            lanes.append(LaneSegment(
                str(rec["id"]), np.array(rec["points"], dtype=np.float64),
                list(rec["successors"]), list(rec["predecessors"]), rec["left"], rec["right"],
                LaneAttributes(attrs.get("turn", "none"), bool(attrs.get("in_intersection", False)),
                               bool(attrs.get("traffic_control", False))),
            ))
        except (SceneError, ValueError) as exc:
            raise SceneFormatError(f"{where}: {exc}", path, line, "points") from exc
    try:
        return RawScene(str(d["scene_id"]), agents, lanes, str(d["focal_agent_id"]),
                        float(d["timestep_hz"]), obs_len, pred_len)
    except SceneError as exc:
        raise SceneFormatError(str(exc), path) from exc


def _line_containing(text, needle):
    idx = text.find(needle)
    return None if idx < 0 else text.count("\n", 0, idx) + 1


def read_scene(path) -> RawScene:
    path = Path(path)
    return loads_scene(path.read_text(encoding="utf-8"), path)


def split_of(scene_id: str, seed: int = 0, proportions=(0.7, 0.15, 0.15)) -> str:
    """Stable split assignment from a hash of ``seed`` and ``scene_id``."""
    digest = hashlib.sha256(f"{seed}:{scene_id}".encode()).digest()
    u = int.from_bytes(digest[:8], "big") / 2.0 ** 64
    edge = 0.0
    for name, p in zip(SPLITS, proportions):
        edge += p
        if u < edge:
            return name
    return SPLITS[-1]


def write_dataset(scenes, root, seed: int = 0, proportions=(0.7, 0.15, 0.15)) -> dict[str, int]:
    root = Path(root)
    counts = dict.fromkeys(SPLITS, 0)
    for split in SPLITS:
        (root / split).mkdir(parents=True, exist_ok=True)
    for scene in scenes:
        split = split_of(scene.scene_id, seed, proportions)
        write_scene(scene, root / split / f"{scene.scene_id}.json")
        counts[split] += 1
    return counts


def read_dataset(root, split: str | None = None) -> list[RawScene]:
    root = Path(root)
    directory = root / split if split else root
    if not directory.is_dir():
        raise FileNotFoundError(f"dataset directory not found: {directory}")
    return [read_scene(p) for p in sorted(directory.glob("*.json"))]
