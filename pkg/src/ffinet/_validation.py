"""Input validation helpers shared by the estimator and the CLI."""

from __future__ import annotations

from os import PathLike
from pathlib import Path

from .scene import RawScene


def check_scenes(X, *, allow_empty: bool = False) -> list[RawScene]:
    """Accept a RawScene, an iterable of them, or a dataset directory; return a list."""
    if isinstance(X, RawScene):
        scenes = [X]
    elif isinstance(X, (str, PathLike)):
        from .io import read_dataset, read_scene
        path = Path(X)
        scenes = [read_scene(path)] if path.is_file() else read_dataset(path)
    else:
        try:
            scenes = list(X)
        except TypeError:
            raise TypeError(f"expected RawScene objects or a dataset path, got {type(X).__name__}") from None
    for s in scenes:
        if not isinstance(s, RawScene):
            raise TypeError(f"expected RawScene, got {type(s).__name__}")
    if not scenes and not allow_empty:
        raise ValueError("no scenes given")
    return scenes


def check_consistent_horizon(scenes: list[RawScene]) -> tuple[int, int]:
    """All scenes must share (obs_len, pred_len); return it."""
    horizons = {(s.obs_len, s.pred_len) for s in scenes}
    if len(horizons) > 1:
        raise ValueError(f"scenes mix several horizons: {sorted(horizons)}")
    return horizons.pop()


def check_unique_ids(scenes: list[RawScene]) -> None:
    seen = set()
    for s in scenes:
        if s.scene_id in seen:
            raise ValueError(f"duplicate scene_id {s.scene_id!r}")
        seen.add(s.scene_id)
