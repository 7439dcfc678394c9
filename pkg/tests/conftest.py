import numpy as np
import pytest
import torch

from ffinet.config import apply_overrides, default_config
from ffinet.scene import AgentTrack, LaneSegment, RawScene
from ffinet.synthetic import generate_dataset


def straight_track(agent_id, start, velocity, obs_len=20, pred_len=30, valid=None, scored=True):
    t = np.arange(obs_len + pred_len)[:, None]
    pos = np.asarray(start, float) + t * np.asarray(velocity, float)
    valid = np.ones(obs_len + pred_len, dtype=int) if valid is None else np.asarray(valid)
    return AgentTrack(agent_id, "vehicle", scored, np.where(valid[:, None] > 0, pos, 0.0), valid)


def straight_lane(lane_id, start, direction=(1.0, 0.0), n=10, spacing=2.0, **links):
    d = np.asarray(direction, float) / np.hypot(*direction)
    pts = np.asarray(start, float) + spacing * np.arange(n)[:, None] * d
    return LaneSegment(lane_id, pts, **links)


def make_scene(agents, lanes, focal=None, scene_id="s", obs_len=20, pred_len=30):
    return RawScene(scene_id, agents, lanes, focal or agents[0].agent_id, 10.0, obs_len, pred_len)


def small_config(**overrides):
    base = {"model.hidden_dim": 16, "train.batch_size": 4, "train.epochs": 2, "train.lr_drop_epoch": 1}
    base.update(overrides)
    return apply_overrides(default_config(), base)


@pytest.fixture(scope="session")
def scenes():
    return generate_dataset(12, seed=3)


@pytest.fixture
def cfg():
    return small_config()


@pytest.fixture(autouse=True)
def _seed():
    torch.manual_seed(0)
    np.random.seed(0)
