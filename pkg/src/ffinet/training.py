"""Training loop, evaluation, checkpoints, ablation grids and cost reporting."""

from __future__ import annotations

import json
import logging
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .batching import SceneFeatures, collate, featurize_config
from .config import apply_overrides, default_config, from_jsonable, to_jsonable, validate
from .metrics import AgentMetrics, MetricReport, agent_metrics, build_report, select_trajectories
from .model import DTYPES, FFINet, parameter_groups, split_predictions
from .predictor import loss_from_config

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "ffinet-checkpoint/1"


class TrainingError(RuntimeError):
    pass


class CheckpointError(RuntimeError):
    pass


def lr_schedule(epoch: int, cfg: dict) -> float:
    """Step schedule: ``lr_initial`` before ``lr_drop_epoch``, ``lr_after`` from it on."""
    if epoch < cfg["train.lr_drop_epoch"]:
        return cfg["train.lr_initial"]
    return cfg["train.lr_after"]


def seed_everything(seed: int) -> None:
    random.seed(seed)
    np.random.seed(seed % 2 ** 32)
    torch.manual_seed(seed)


def check_horizon(scenes, cfg: dict) -> None:
    for s in scenes:
        if s.obs_len != cfg["model.obs_len"] or s.pred_len != cfg["model.pred_len"]:
            raise ValueError(
                f"horizon mismatch: scene {s.scene_id} has obs/pred {s.obs_len}/{s.pred_len}, "
                f"model expects {cfg['model.obs_len']}/{cfg['model.pred_len']}")


def featurize_all(scenes, cfg: dict) -> list[SceneFeatures]:
    return [featurize_config(s, cfg) for s in scenes]


def iter_batches(feats: list[SceneFeatures], batch_size: int, dtype, order=None):
    order = range(len(feats)) if order is None else order
    order = list(order)
    for start in range(0, len(order), batch_size):
        yield collate([feats[i] for i in order[start:start + batch_size]], dtype)


# --------------------------------------------------------------------------
# evaluation


@dataclass
class EvaluationResult:
    report: MetricReport
    records: list[AgentMetrics]
    predictions: list


def evaluate(model: FFINet, scenes, cfg: dict | None = None, batch_size: int | None = None,
             features: list[SceneFeatures] | None = None) -> EvaluationResult:
    """Single forward pass per batch, metrics over every scene."""
    cfg = cfg or model.cfg
    if not scenes and not features:
        raise ValueError("cannot evaluate on an empty dataset")
    if scenes:
        check_horizon(scenes, cfg)
    feats = features if features is not None else featurize_all(scenes, cfg)
    batch_size = batch_size or cfg["train.batch_size"]
    thr = cfg["metrics.miss_threshold"]
    records, selected, predictions = [], [], []
    for batch in iter_batches(feats, batch_size, model.dtype):
        preds = model.predict_batch(batch)
        for feat, pred in zip(batch.features, preds):
            predictions.append(pred)
            scored_sel = []
            for i, aid in enumerate(feat.agent_ids):
                mask = feat.gt_mask[i]
                if not mask.any():
                    continue
                is_focal = i == feat.focal_index
                if not (feat.scored[i] or is_focal):
                    continue
                records.append(agent_metrics(feat.scene_id, aid, pred.absolute_modes[i], pred.probabilities[i],
                                             feat.gt_abs[i], mask, focal=is_focal, scored=bool(feat.scored[i]),
                                             miss_threshold=thr))
                if feat.scored[i]:
                    scored_sel.append(i)
            selected.append(select_trajectories(pred.absolute_modes[scored_sel], pred.probabilities[scored_sel]))
    report = build_report(records, selected, cfg["metrics.collision_radius"])
    return EvaluationResult(report, records, predictions)


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(directory, model: FFINet, optimizer=None, epoch: int = 0, history=None,
                    metrics: dict | None = None) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    state = {"model": model.state_dict()}
    if optimizer is not None:
        state["optimizer"] = optimizer.state_dict()
    torch.save(state, directory / "params.bin")
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "config": to_jsonable(model.cfg),
        "epoch": epoch,
        "metrics": metrics or {},
        "history": history or [],
        "created": time.strftime("%Y-%m-%dT%H:%M:%S"),
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return directory


def load_checkpoint(directory, with_optimizer: bool = False):
    """Return ``(model, manifest)`` (and the optimizer state if requested)."""
    directory = Path(directory)
    manifest_path, params_path = directory / "manifest.json", directory / "params.bin"
    for p in (manifest_path, params_path):
        if not p.is_file():
            raise CheckpointError(f"checkpoint file not found: {p}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointError(f"{manifest_path}: unsupported checkpoint format {manifest.get('format')!r}")
    cfg = from_jsonable(manifest["config"])
    model = FFINet(cfg)
    state = torch.load(params_path, map_location="cpu", weights_only=True)
    model.load_state_dict(state["model"])
    model.eval()
    if with_optimizer:
        return model, manifest, state.get("optimizer")
    return model, manifest


# --------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    model: FFINet
    history: list = field(default_factory=list)
    best_epoch: int | None = None
    best_metric: float = math.inf
    best_dir: Path | None = None
    final_dir: Path | None = None


def build_optimizer(model: nn.Module, cfg: dict) -> torch.optim.Optimizer:
    return torch.optim.Adam(model.parameters(), lr=cfg["train.lr_initial"], betas=(0.9, 0.999), eps=1e-8,
                            weight_decay=cfg["train.weight_decay"])


def _feature_key(cfg: dict) -> tuple:
    """Config entries that change featurization (shared features are reused across cells)."""
    return (cfg["model.current_frame"], cfg["model.dilations"], cfg["graph.a2l"], cfg["graph.l2a"],
            cfg["graph.a2a"], cfg["loss.min_valid_fraction"])


def train(cfg: dict, train_scenes, val_scenes=None, out_dir=None, log_path=None,
          progress: bool = False, train_features: list[SceneFeatures] | None = None) -> TrainResult:
    """Adam with the step schedule; checkpoints the best validation brier-minFDE and the final epoch.

    ``train_features`` may carry precomputed features of ``train_scenes``.
    """
    validate(cfg)
    if not train_scenes:
        raise ValueError("training set is empty")
    check_horizon(train_scenes, cfg)
    seed_everything(cfg["train.seed"])
    dtype = DTYPES[cfg["model.dtype"]]
    model = FFINet(cfg)
    optimizer = build_optimizer(model, cfg)
    train_feats = train_features if train_features is not None else featurize_all(train_scenes, cfg)
    val_feats = featurize_all(val_scenes, cfg) if val_scenes else None
    if val_scenes:
        check_horizon(val_scenes, cfg)
    out_dir = Path(out_dir) if out_dir else None
    if log_path is None and out_dir is not None:
        log_path = out_dir / "train_log.jsonl"
    if log_path is not None:
        Path(log_path).parent.mkdir(parents=True, exist_ok=True)
        Path(log_path).write_text("")
    shuffler = torch.Generator().manual_seed(cfg["train.seed"])
    result = TrainResult(model)

    for epoch in range(cfg["train.epochs"]):
        lr = lr_schedule(epoch, cfg)
        for group in optimizer.param_groups:
            group["lr"] = lr
        model.train()
        order = torch.randperm(len(train_feats), generator=shuffler).tolist()
        sums = {"total": 0.0, "reg": 0.0, "end": 0.0, "cls": 0.0, "initial_reg": 0.0}
        n_batches = 0
        t0 = time.perf_counter()
        for batch in iter_batches(train_feats, cfg["train.batch_size"], dtype, order):
            out = model(batch)
            report = loss_from_config(out, batch, cfg)
            if not torch.isfinite(report.total):
                raise TrainingError(f"non-finite loss at epoch {epoch} in batch with scenes {batch.scene_ids}")
            optimizer.zero_grad(set_to_none=True)
            report.total.backward()
            if cfg["train.grad_clip"] > 0:
                nn.utils.clip_grad_norm_(model.parameters(), cfg["train.grad_clip"])
            optimizer.step()
            for k, v in report.as_floats().items():
                sums[k] += v
            n_batches += 1
        record = {"epoch": epoch, "lr": lr, "seconds": round(time.perf_counter() - t0, 3)}
        record.update({f"loss_{k}": v / max(n_batches, 1) for k, v in sums.items()})
        if val_feats:
            rep = evaluate(model, None, cfg, features=val_feats).report
            record["val"] = rep.to_dict()
            metric = rep.brier_minFDE
            if out_dir is not None and metric < result.best_metric:
                result.best_dir = save_checkpoint(out_dir / "best", model, optimizer, epoch, result.history + [record],
                                                  rep.to_dict())
            if metric < result.best_metric:
                result.best_metric, result.best_epoch = metric, epoch
        result.history.append(record)
        if log_path is not None:
            with open(log_path, "a") as fh:
                fh.write(json.dumps(record, allow_nan=False, default=_json_default) + "\n")
        if progress:
            logger.info("epoch %d loss %.4f", epoch, record["loss_total"])
    if out_dir is not None:
        last = result.history[-1].get("val", {}) if result.history else {}
        result.final_dir = save_checkpoint(out_dir / "final", model, optimizer, cfg["train.epochs"] - 1,
                                           result.history, last)
    return result


def _json_default(v):
    if isinstance(v, float) and math.isnan(v):
        return None
    raise TypeError(type(v))


# --------------------------------------------------------------------------
# ablations

def _modules(cur, fut, glob):
    return {"modules.current_fusion": cur, "modules.future_feedback": fut, "modules.global_fusion": glob}


def _feedback(back, fut, fwd):
    return {"feedback.back": back, "feedback.future": fut, "feedback.forward": fwd}


TABLE5_GRID = [_modules(False, False, False), _modules(False, True, True), _modules(True, False, True),
               _modules(True, True, False), _modules(True, True, True)]
TABLE7_GRID = [_feedback(False, False, False), _feedback(True, False, False), _feedback(True, True, False),
               _feedback(True, True, True)]
TABLE8_GRID = [{"loss.gamma": g} for g in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0)]
TABLE9_GRID = [{"loss.gamma": 0.2, "loss.lambda": v} for v in (0.0, 0.1, 0.3, 0.5, 0.7, 0.9)]
GRIDS = {"table5": TABLE5_GRID, "table7": TABLE7_GRID, "table8": TABLE8_GRID, "table9": TABLE9_GRID}

COLUMNS = ("brier_minFDE", "minADE", "minFDE", "MR")
_SHORT = {"modules.current_fusion": "Cur", "modules.future_feedback": "Fut", "modules.global_fusion": "Glob",
          "feedback.back": "Back", "feedback.future": "Future", "feedback.forward": "Forward",
          "loss.gamma": "gamma", "loss.lambda": "lambda"}


@dataclass
class AblationResult:
    rows: list                     # dicts: overrides, per-seed reports, means
    seeds: list
    direction_ok: bool | None = None
    direction_note: str = ""

    def table(self) -> str:
        keys = list(dict.fromkeys(k for r in self.rows for k in r["overrides"]))
        head = [_SHORT.get(k, k) for k in keys] + ["b-minFDE", "minADE", "minFDE", "MR"]
        lines = ["  ".join(f"{h:>9}" for h in head)]
        for r in self.rows:
            cells = []
            for k in keys:
                v = r["overrides"].get(k, "")
                cells.append(("v" if v else "x") if isinstance(v, bool) else str(v))
            cells += [f"{r['mean'][c]:.4f}" for c in COLUMNS]
            lines.append("  ".join(f"{c:>9}" for c in cells))
        if self.direction_ok is not None:
            lines.append(self.direction_note)
        return "\n".join(lines)

    def to_dict(self) -> dict:
        return {"seeds": self.seeds, "rows": self.rows, "direction_ok": self.direction_ok,
                "direction_note": self.direction_note}


def _is_full(ov: dict) -> bool:
    return all(ov.get(k, True) for k in ("modules.current_fusion", "modules.future_feedback",
                                          "modules.global_fusion"))


def _is_no_fut(ov: dict) -> bool:
    return (ov.get("modules.future_feedback") is False and ov.get("modules.current_fusion", True)
            and ov.get("modules.global_fusion", True))


def run_ablation(grid: list[dict], train_scenes, eval_scenes, base_cfg: dict | None = None,
                 seeds=(0,), check_direction: bool = True, extra_rows: list[dict] | None = None) -> AblationResult:
    """Train and evaluate every grid cell with every seed; report seed means.

    When the grid holds both the full model and the model without future
    feedback (with the other two modules on), the brier-minFDE direction is
    checked; ``extra_rows`` lets a caller add such a reference cell.
    """
    base_cfg = base_cfg or default_config()
    cells = list(grid) + list(extra_rows or [])
    rows = []
    train_cache, eval_cache = {}, {}
    for ov in cells:
        reports = []
        for seed in seeds:
            cfg = apply_overrides(base_cfg, {**ov, "train.seed": seed})
            key = _feature_key(cfg)
            if key not in train_cache:
                train_cache[key] = featurize_all(train_scenes, cfg)
                eval_cache[key] = featurize_all(eval_scenes, cfg)
            res = train(cfg, train_scenes, train_features=train_cache[key])
            rep = evaluate(res.model, eval_scenes, cfg, features=eval_cache[key]).report
            reports.append(rep.to_dict())
        mean = {c: float(np.mean([r[c] for r in reports])) for c in COLUMNS}
        rows.append({"overrides": dict(ov), "reports": reports, "mean": mean})
        logger.info("ablation cell %s: %s", ov, mean)
    result = AblationResult(rows, list(seeds))
    if check_direction:
        full = [r for r in rows if _is_full(r["overrides"])]
        no_fut = [r for r in rows if _is_no_fut(r["overrides"])]
        if full and no_fut:
            a, b = full[0]["mean"]["brier_minFDE"], no_fut[0]["mean"]["brier_minFDE"]
            result.direction_ok = a <= b
            verdict = "HOLDS" if a <= b else "FAILS"
            result.direction_note = (f"direction check (full <= no future feedback, brier-minFDE): "
                                     f"{a:.4f} vs {b:.4f} -> {verdict}")
    return result


# --------------------------------------------------------------------------
# cost reporting


def _count_macs(model: FFINet, batch) -> dict[str, int]:
    """Multiply-adds of Linear / Conv1d layers, attributed to top-level modules."""
    totals: dict[str, int] = {}
    handles = []
    for top_name, top in model.named_children():
        def hook(mod, inputs, output, name=top_name):
            x = inputs[0]
            if isinstance(mod, nn.Linear):
                macs = x.numel() // x.shape[-1] * mod.in_features * mod.out_features
            else:
                k = mod.kernel_size[0]
                macs = output.shape[0] * output.shape[-1] * mod.out_channels * mod.in_channels * k
            totals[name] = totals.get(name, 0) + int(macs)
        for sub in top.modules():
            if isinstance(sub, (nn.Linear, nn.Conv1d)):
                handles.append(sub.register_forward_hook(hook))
    try:
        with torch.no_grad():
            model(batch)
    finally:
        for h in handles:
            h.remove()
    return totals


def model_info(cfg: dict | None = None, reference_scene=None) -> dict:
    """Per-module parameter counts and multiply-adds for one reference scene."""
    cfg = cfg or default_config()
    model = FFINet(cfg)
    params = parameter_groups(model)
    if reference_scene is None:
        from .synthetic import ScenarioConfig, generate_scene
        reference_scene = generate_scene(ScenarioConfig("intersection_cross", n_agents=6, seed=0,
                                                        obs_len=cfg["model.obs_len"],
                                                        pred_len=cfg["model.pred_len"]), "reference")
    batch = collate([featurize_config(reference_scene, cfg)], model.dtype)
    macs = _count_macs(model, batch)
    modules = {name: {"params": n, "macs": macs.get(name, 0)} for name, n in params.items()}
    return {
        "modules": modules,
        "total_params": sum(params.values()),
        "total_macs": sum(m["macs"] for m in modules.values()),
        "reference_scene": {"scene_id": reference_scene.scene_id, "agents": batch.num_agents,
                            "lanes": batch.num_lanes},
    }


def format_model_info(info: dict) -> str:
    width = max(len(n) for n in info["modules"]) + 2
    lines = [f"{'module':<{width}}{'params':>12}{'MACs':>16}"]
    for name, m in info["modules"].items():
        lines.append(f"{name:<{width}}{m['params']:>12,}{m['macs']:>16,}")
    lines.append(f"{'total':<{width}}{info['total_params']:>12,}{info['total_macs']:>16,}")
    return "\n".join(lines)
