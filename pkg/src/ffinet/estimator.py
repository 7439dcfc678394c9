"""Estimator interface: fit / predict / score over lists of scenes."""

from __future__ import annotations

from pathlib import Path

import torch
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_consistent_horizon, check_scenes, check_unique_ids
from .batching import batch_scenes
from .config import PARAM_TO_KEY, apply_overrides, default_config, param_name
from .training import evaluate, load_checkpoint, save_checkpoint, train


class FFINetForecaster(BaseEstimator):
    """Multi-agent motion forecaster.

    Every keyword is a config key with dots replaced by underscores
    (``loss_gamma`` is ``loss.gamma``).  ``X`` is a list of scenes or a
    dataset directory; ground truth travels inside the scenes, so ``y``
    is ignored.
    """

    def __init__(self, model_hidden_dim=128,
                 model_k=6,
                 model_obs_len=20,
                 model_pred_len=30,
                 model_current_frame='anchor',
                 model_kernel_sizes=(3, 5, 7),
                 model_conv_depth=2,
                 model_gcn_layers=2,
                 model_dilations=(1, 2, 4),
                 model_dtype='float32',
                 graph_a2l=7.0,
                 graph_l2a=6.0,
                 graph_a2a=100.0,
                 modules_current_fusion=True,
                 modules_future_feedback=True,
                 modules_global_fusion=True,
                 feedback_back=True,
                 feedback_future=True,
                 feedback_forward=True,
                 loss_lambda=0.5,
                 loss_beta=2.0,
                 loss_gamma=0.5,
                 loss_margin=0.2,
                 loss_cls_distance_gate=2.0,
                 loss_smooth_l1_delta=1.0,
                 loss_min_valid_fraction=0.8,
                 train_epochs=40,
                 train_batch_size=64,
                 train_lr_initial=0.001,
                 train_lr_after=0.0001,
                 train_lr_drop_epoch=32,
                 train_seed=0,
                 train_grad_clip=0.0,
                 train_weight_decay=0.0,
                 metrics_miss_threshold=2.0,
                 metrics_collision_radius=2.0):
        self.model_hidden_dim = model_hidden_dim
        self.model_k = model_k
        self.model_obs_len = model_obs_len
        self.model_pred_len = model_pred_len
        self.model_current_frame = model_current_frame
        self.model_kernel_sizes = model_kernel_sizes
        self.model_conv_depth = model_conv_depth
        self.model_gcn_layers = model_gcn_layers
        self.model_dilations = model_dilations
        self.model_dtype = model_dtype
        self.graph_a2l = graph_a2l
        self.graph_l2a = graph_l2a
        self.graph_a2a = graph_a2a
        self.modules_current_fusion = modules_current_fusion
        self.modules_future_feedback = modules_future_feedback
        self.modules_global_fusion = modules_global_fusion
        self.feedback_back = feedback_back
        self.feedback_future = feedback_future
        self.feedback_forward = feedback_forward
        self.loss_lambda = loss_lambda
        self.loss_beta = loss_beta
        self.loss_gamma = loss_gamma
        self.loss_margin = loss_margin
        self.loss_cls_distance_gate = loss_cls_distance_gate
        self.loss_smooth_l1_delta = loss_smooth_l1_delta
        self.loss_min_valid_fraction = loss_min_valid_fraction
        self.train_epochs = train_epochs
        self.train_batch_size = train_batch_size
        self.train_lr_initial = train_lr_initial
        self.train_lr_after = train_lr_after
        self.train_lr_drop_epoch = train_lr_drop_epoch
        self.train_seed = train_seed
        self.train_grad_clip = train_grad_clip
        self.train_weight_decay = train_weight_decay
        self.metrics_miss_threshold = metrics_miss_threshold
        self.metrics_collision_radius = metrics_collision_radius

    def to_config(self) -> dict:
        return apply_overrides(default_config(), {PARAM_TO_KEY[k]: v for k, v in self.get_params().items()})

    def fit(self, X, y=None, X_val=None, out_dir=None):
        scenes = check_scenes(X)
        check_unique_ids(scenes)
        check_consistent_horizon(scenes)
        val = check_scenes(X_val) if X_val is not None else None
        result = train(self.to_config(), scenes, val, out_dir=out_dir)
        self.model_ = result.model
        self.history_ = result.history
        self.best_epoch_ = result.best_epoch
        return self

    def predict(self, X, batch_agents: int = 512):
        """One PredictionSet per scene, in input order."""
        check_is_fitted(self, "model_")
        scenes = check_scenes(X)
        out = []
        for batch in batch_scenes(scenes, batch_agents, self.model_.cfg, self.model_.dtype):
            out.extend(self.model_.predict_batch(batch))
        return out

    def evaluate(self, X):
        check_is_fitted(self, "model_")
        return evaluate(self.model_, check_scenes(X), self.model_.cfg).report

    def score(self, X, y=None) -> float:
        """Negative brier-minFDE of the focal agents (higher is better)."""
        return -self.evaluate(X).brier_minFDE

    def save(self, directory) -> Path:
        check_is_fitted(self, "model_")
        return save_checkpoint(directory, self.model_, history=getattr(self, "history_", []))

    @classmethod
    def load(cls, directory) -> "FFINetForecaster":
        model, manifest = load_checkpoint(directory)
        est = cls(**{param_name(k): v for k, v in model.cfg.items()})
        est.model_ = model
        est.history_ = manifest.get("history", [])
        est.best_epoch_ = None
        return est
