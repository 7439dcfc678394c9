import logging

import pytest
import torch

from ffinet.predictor import MultimodalPredictor, last_valid_index, scores_to_probabilities, total_loss, wta_select

D, TP, K = 16, 30, 6


def _gt(A, tp=TP):
    return torch.randn(A, tp, 2, dtype=torch.float64) * 5, torch.ones(A, tp, dtype=torch.bool)


class TestPredictor:
    def test_shapes(self):
        modes, scores = MultimodalPredictor(D, TP, K)(torch.randn(3, D))
        assert modes.shape == (3, K, TP, 2) and scores.shape == (3, K)

    def test_score_depends_only_on_own_endpoint(self):
        pred = MultimodalPredictor(D, TP, K)
        g = torch.randn(2, D)
        modes = torch.randn(2, K, TP, 2)
        s0 = pred.score_modes(g, modes)
        modes2 = modes.clone()
        modes2[:, 3, -1] += 10.0
        modes2[:, 0, :-1] += 10.0
        s1 = pred.score_modes(g, modes2)
        keep = [0, 1, 2, 4, 5]
        assert torch.equal(s0[:, keep], s1[:, keep])
        assert not torch.allclose(s0[:, 3], s1[:, 3])

    def test_softmax_frozen_value(self):
        p = scores_to_probabilities(torch.tensor([[10.0, 0, 0, 0, 0, 0]], dtype=torch.float64))
        assert float(p[0, 0]) == pytest.approx(0.9997730518683338, abs=1e-15)
        assert float(p.sum()) == pytest.approx(1.0, abs=1e-12)


class TestWta:
    def test_tie_prefers_smaller_index(self):
        gt = torch.zeros(1, 4, 2)
        modes = torch.zeros(1, 3, 4, 2)
        modes[0, 0, -1] = torch.tensor([5.0, 0])
        modes[0, 1, -1] = torch.tensor([1.0, 0])
        modes[0, 2, -1] = torch.tensor([0, 1.0])
        assert wta_select(modes, gt, torch.ones(1, 4, dtype=torch.bool)).tolist() == [1]

    def test_uses_last_valid_step(self):
        gt = torch.zeros(1, 4, 2)
        mask = torch.tensor([[True, True, False, False]])
        modes = torch.zeros(1, 2, 4, 2)
        modes[0, 0, 1] = 3.0            # far at the last valid step
        modes[0, 1, 3] = 3.0            # far only at an invalid step
        assert last_valid_index(mask).tolist() == [1]
        assert wta_select(modes, gt, mask).tolist() == [1]

    def test_non_best_heads_get_zero_gradient(self):
        for trial in range(20):
            torch.manual_seed(trial)
            pred = MultimodalPredictor(D, TP, K).double()
            g = torch.randn(3, D, dtype=torch.float64)
            gt, mask = _gt(3)
            modes, scores = pred(g)
            rep = total_loss(modes, scores, None, gt, mask, torch.ones(3, dtype=torch.bool))
            best = set(wta_select(modes, gt, mask).tolist())
            pred.zero_grad()
            (rep.reg + 0.5 * rep.end).backward()
            for k, head in enumerate(pred.heads):
                grads = [p.grad for p in head.parameters()]
                if k in best:
                    assert any(gr is not None and gr.abs().sum() > 0 for gr in grads)
                else:
                    assert all(gr is None or torch.count_nonzero(gr) == 0 for gr in grads)


class TestLoss:
    def _inputs(self, A=4, seed=0):
        torch.manual_seed(seed)
        modes = torch.randn(A, K, TP, 2, dtype=torch.float64) * 4
        scores = torch.randn(A, K, dtype=torch.float64)
        initial = torch.randn(A, TP, 2, dtype=torch.float64)
        gt, mask = _gt(A)
        return modes, scores, initial, gt, mask, torch.ones(A, dtype=torch.bool)

    def test_total_reconstructs_weighted_sum(self):
        rep = total_loss(*self._inputs())
        expect = rep.reg + 0.5 * rep.end + 2.0 * rep.cls + 0.5 * rep.initial_reg
        assert abs(float(rep.total - expect)) < 1e-9
        assert rep.weights == {"lambda": 0.5, "beta": 2.0, "gamma": 0.5}

    def test_initial_none_gives_zero_term(self):
        m, s, _, gt, mask, lm = self._inputs()
        rep = total_loss(m, s, None, gt, mask, lm)
        assert float(rep.initial_reg) == 0.0

    def test_gamma_zero_detaches_initial_term(self):
        m, s, init, gt, mask, lm = self._inputs()
        init.requires_grad_(True)
        total_loss(m, s, init, gt, mask, lm, gamma=0.0).total.backward()
        assert torch.count_nonzero(init.grad) == 0

    def test_cls_zero_when_margin_satisfied(self):
        m, s, init, gt, mask, lm = self._inputs()
        best = wta_select(m, gt, mask)
        s = torch.full_like(s, -10.0)
        s[torch.arange(len(best)), best] = 10.0
        assert float(total_loss(m, s, init, gt, mask, lm).cls) == 0.0

    def test_cls_gate_excludes_close_modes(self):
        gt = torch.zeros(1, TP, 2, dtype=torch.float64)
        mask = torch.ones(1, TP, dtype=torch.bool)
        modes = torch.zeros(1, K, TP, 2, dtype=torch.float64)
        modes[0, 1:, -1, 0] = 1.9             # every other endpoint within the 2 m gate
        scores = torch.zeros(1, K, dtype=torch.float64)
        scores[0, 1:] = 5.0
        assert float(total_loss(modes, scores, None, gt, mask, torch.ones(1, dtype=torch.bool)).cls) == 0.0
        modes[0, 2, -1, 0] = 2.0              # gate is inclusive
        rep = total_loss(modes, scores, None, gt, mask, torch.ones(1, dtype=torch.bool))
        assert float(rep.cls) == pytest.approx(5.2)

    def test_loss_mask_excludes_agents(self):
        m, s, init, gt, mask, lm = self._inputs()
        lm[2:] = False
        full = total_loss(m[:2], s[:2], init[:2], gt[:2], mask[:2], lm[:2])
        part = total_loss(m, s, init, gt, mask, lm)
        assert float(full.total) == pytest.approx(float(part.total), abs=1e-12)
        assert part.num_agents == 2

    def test_no_contributing_agent(self, caplog):
        m, s, init, gt, mask, lm = self._inputs()
        m.requires_grad_(True)
        with caplog.at_level(logging.WARNING):
            rep = total_loss(m, s, init, gt, mask, torch.zeros_like(lm))
        assert float(rep.total.detach()) == 0.0 and rep.num_agents == 0
        rep.total.backward()
        assert "no agent" in caplog.text

    def test_smooth_l1_quadratic_region(self):
        gt = torch.zeros(1, 2, 2, dtype=torch.float64)
        modes = torch.zeros(1, 1, 2, 2, dtype=torch.float64)
        modes[0, 0, :, 0] = 0.5
        rep = total_loss(modes, torch.zeros(1, 1, dtype=torch.float64), None, gt,
                         torch.ones(1, 2, dtype=torch.bool), torch.ones(1, dtype=torch.bool))
        assert float(rep.reg) == pytest.approx(0.125)
        assert float(rep.end) == pytest.approx(0.125)
