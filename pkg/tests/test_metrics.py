import json
import logging
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ffinet.metrics import (
    AgentMetrics,
    MetricReport,
    actor_collision_rate,
    agent_metrics,
    brier_min_fde,
    build_report,
    min_ade,
    min_fde,
    miss_rate,
    multi_agent_aggregate,
    scene_collides,
    select_trajectories,
)

from . import oracles


def _instance(rng, K=6, T=30, drop=True):
    modes = rng.normal(0, 3, size=(K, T, 2)).cumsum(1)
    gt = rng.normal(0, 3, size=(T, 2)).cumsum(0)
    mask = rng.random(T) > (0.3 if drop else -1)
    mask[rng.integers(T)] = True
    p = rng.random(K)
    return modes, p / p.sum(), gt, mask


class TestSingleAgent:
    def test_against_oracles(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            modes, p, gt, mask = _instance(rng)
            assert min_ade(modes, gt, mask) == oracles.bf_min_ade(modes.tolist(), gt.tolist(), mask.tolist())
            assert min_fde(modes, gt, mask) == oracles.bf_min_fde(modes.tolist(), gt.tolist(), mask.tolist())
            assert brier_min_fde(modes, p, gt, mask) == oracles.bf_brier(modes.tolist(), p.tolist(), gt.tolist(),
                                                                        mask.tolist())
            assert miss_rate(modes, gt, mask) == oracles.bf_miss(modes.tolist(), gt.tolist(), mask.tolist())

    def test_min_ade_is_min_of_means(self):
        gt = np.zeros((2, 2))
        modes = np.array([[[0, 0], [4, 0]], [[2, 0], [2, 0]]], float)
        assert min_ade(modes, gt, [True, True]) == 2.0

    def test_miss_threshold_strict(self):
        gt = np.zeros((3, 2))
        modes = np.zeros((1, 3, 2))
        modes[0, -1, 0] = 2.0
        assert miss_rate(modes, gt, [1, 1, 1]) == 0
        modes[0, -1, 0] = 2.0 + 1e-9
        assert miss_rate(modes, gt, [1, 1, 1]) == 1

    def test_uniform_probability_penalty(self):
        modes, _, gt, mask = _instance(np.random.default_rng(1))
        p = np.full(6, 1 / 6)
        penalty = brier_min_fde(modes, p, gt, mask) - min_fde(modes, gt, mask)
        assert penalty == pytest.approx(0.6944444444444444, abs=1e-12)

    def test_endpoint_uses_last_valid_step(self):
        gt = np.zeros((3, 2))
        modes = np.zeros((1, 3, 2))
        modes[0, 2] = 50.0
        assert min_fde(modes, gt, [True, True, False]) == 0.0

    def test_no_valid_step_rejected(self):
        with pytest.raises(ValueError, match="no valid future step"):
            min_fde(np.zeros((1, 3, 2)), np.zeros((3, 2)), [0, 0, 0])

    def test_brier_bounds(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            modes, p, gt, mask = _instance(rng)
            b, f = brier_min_fde(modes, p, gt, mask), min_fde(modes, gt, mask)
            assert f <= b <= f + 1


finite = st.floats(-50, 50, allow_nan=False)


class TestRigidMotion:
    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), theta=st.floats(-math.pi, math.pi), tx=finite, ty=finite)
    def test_metrics_invariant(self, seed, theta, tx, ty):
        modes, p, gt, mask = _instance(np.random.default_rng(seed))
        r = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        t = np.array([tx, ty])
        modes2, gt2 = modes @ r.T + t, gt @ r.T + t
        assert min_ade(modes2, gt2, mask) == pytest.approx(min_ade(modes, gt, mask), abs=1e-9)
        assert min_fde(modes2, gt2, mask) == pytest.approx(min_fde(modes, gt, mask), abs=1e-9)
        assert brier_min_fde(modes2, p, gt2, mask) == pytest.approx(brier_min_fde(modes, p, gt, mask), abs=1e-9)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1), theta=st.floats(-math.pi, math.pi))
    def test_collision_invariant(self, seed, theta):
        rng = np.random.default_rng(seed)
        trajs = rng.normal(0, 6, size=(4, 10, 2))
        r = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        assert scene_collides(trajs @ r.T + 7.0) == scene_collides(trajs)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2 ** 32 - 1))
    def test_mode_permutation_invariant(self, seed):
        rng = np.random.default_rng(seed)
        modes, p, gt, mask = _instance(rng)
        perm = rng.permutation(6)
        assert min_ade(modes[perm], gt, mask) == min_ade(modes, gt, mask)
        assert brier_min_fde(modes[perm], p[perm], gt, mask) == brier_min_fde(modes, p, gt, mask)


def _rec(scene, agent, ade, miss=0, scored=True, focal=False):
    return AgentMetrics(scene, agent, focal, scored, ade, ade + 1, miss, ade + 2)


class TestMultiAgent:
    def test_scene_then_global_average(self):
        recs = [_rec("a", "1", 1.0), _rec("a", "2", 3.0), _rec("b", "1", 10.0)]
        agg = multi_agent_aggregate(recs)
        assert agg["avgMinADE"] == 6.0                # not the flat mean 14/3
        assert agg["avgMinADE"] == oracles.bf_scene_average([[1.0, 3.0], [10.0]])

    def test_unscored_ignored_and_empty_scene_warns(self, caplog):
        recs = [_rec("a", "1", 1.0), _rec("b", "1", 50.0, scored=False)]
        with caplog.at_level(logging.WARNING):
            agg = multi_agent_aggregate(recs)
        assert agg["avgMinADE"] == 1.0 and "scene b" in caplog.text

    def test_actor_mr_flat(self):
        recs = [_rec("a", "1", 1, miss=1), _rec("a", "2", 1), _rec("a", "3", 1), _rec("b", "1", 1, miss=1)]
        assert multi_agent_aggregate(recs)["actorMR"] == 0.5

    def test_all_unscored_gives_nan(self):
        agg = multi_agent_aggregate([_rec("a", "1", 1.0, scored=False)])
        assert all(math.isnan(v) for v in agg.values())

    def test_collision_strict_and_masked(self):
        a = np.zeros((3, 2))
        b = np.zeros((3, 2))
        b[:, 0] = 4.0
        assert scene_collides([a, b]) == 0
        b[1, 0] = 4.0 - 1e-9
        assert scene_collides([a, b]) == 1
        masks = np.array([[1, 1, 1], [1, 0, 1]], bool)
        assert scene_collides([a, b], masks) == 0
        assert scene_collides([a]) == 0

    def test_collision_against_oracle(self):
        rng = np.random.default_rng(5)
        scenes = [rng.normal(0, 8, size=(int(rng.integers(1, 6)), 12, 2)) for _ in range(200)]
        flags = [oracles.bf_collides(s.tolist()) for s in scenes]
        assert [scene_collides(s) for s in scenes] == flags
        assert 0 < sum(flags) < 200
        assert actor_collision_rate(scenes) == math.fsum(flags) / len(flags)

    def test_select_argmax_probability(self):
        modes = np.arange(2 * 3 * 4 * 2, dtype=float).reshape(2, 3, 4, 2)
        probs = np.array([[0.2, 0.5, 0.3], [0.4, 0.2, 0.4]])
        sel = select_trajectories(modes, probs)
        assert np.array_equal(sel[0], modes[0, 1]) and np.array_equal(sel[1], modes[1, 0])


class TestReport:
    def test_build_and_json_round_trip(self):
        rng = np.random.default_rng(3)
        recs = []
        for s in range(3):
            for a in range(3):
                modes, p, gt, mask = _instance(rng)
                recs.append(agent_metrics(f"s{s}", str(a), modes, p, gt, mask, focal=a == 0))
        rep = build_report(recs, [rng.normal(0, 10, (3, 30, 2)) for _ in range(3)])
        assert rep.minADE == math.fsum(r.min_ade for r in recs if r.focal) / 3
        assert rep.n_scenes == 3 and rep.n_agents == 9
        back = MetricReport.from_dict(json.loads(rep.to_json()))
        assert back == rep
        assert set(json.loads(rep.to_json())) == set(MetricReport.FIELDS)

    def test_nan_serialised_as_null(self):
        rep = build_report([_rec("a", "1", 1.0, scored=False)], [])
        d = json.loads(rep.to_json())
        assert d["minADE"] is None and d["actorCR"] is None
        assert math.isnan(MetricReport.from_dict(d).minADE)
        assert "minADE" in rep.table()
