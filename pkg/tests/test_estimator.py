import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from ffinet import FFINetForecaster
from ffinet.config import DEFAULTS, param_name
from ffinet.io import write_dataset
from ffinet.synthetic import generate_dataset

SMALL = dict(model_hidden_dim=16, train_epochs=1, train_lr_drop_epoch=1, train_batch_size=4)


class TestEstimator:
    def test_params_mirror_config(self):
        est = FFINetForecaster()
        assert set(est.get_params()) == {param_name(k) for k in DEFAULTS}
        assert est.to_config() == dict(DEFAULTS)

    def test_clone_and_set_params(self):
        est = FFINetForecaster(**SMALL).set_params(loss_gamma=0.2)
        c = clone(est)
        assert c.get_params()["loss_gamma"] == 0.2 and c.to_config()["model.hidden_dim"] == 16

    def test_fit_predict_score(self, scenes):
        est = FFINetForecaster(**SMALL).fit(scenes[:4])
        preds = est.predict(scenes[4:6])
        assert [p.scene_id for p in preds] == [s.scene_id for s in scenes[4:6]]
        assert preds[0].absolute_modes.shape[1:] == (6, 30, 2)
        assert np.allclose(preds[0].probabilities.sum(-1), 1.0, atol=1e-5)
        assert est.score(scenes[4:6]) == -est.evaluate(scenes[4:6]).brier_minFDE

    def test_accepts_dataset_path(self, scenes, tmp_path):
        write_dataset(scenes[:6], tmp_path, proportions=(1.0, 0.0, 0.0))
        est = FFINetForecaster(**SMALL).fit(tmp_path / "train")
        assert len(est.predict(tmp_path / "train")) == 6

    def test_save_load(self, scenes, tmp_path):
        est = FFINetForecaster(**SMALL).fit(scenes[:4])
        est.save(tmp_path / "m")
        back = FFINetForecaster.load(tmp_path / "m")
        assert back.get_params() == est.get_params()
        a, b = est.predict(scenes[5]), back.predict(scenes[5])
        assert np.array_equal(a[0].absolute_modes, b[0].absolute_modes)

    def test_not_fitted(self, scenes):
        with pytest.raises(NotFittedError):
            FFINetForecaster().predict(scenes[:1])

    @pytest.mark.parametrize("bad,err,msg", [([], ValueError, "no scenes"), ([1, 2], TypeError, "RawScene"),
                                             (5, TypeError, "expected RawScene")])
    def test_input_validation(self, bad, err, msg):
        with pytest.raises(err, match=msg):
            FFINetForecaster(**SMALL).fit(bad)

    def test_duplicate_ids_rejected(self, scenes):
        with pytest.raises(ValueError, match="duplicate scene_id"):
            FFINetForecaster(**SMALL).fit([scenes[0], scenes[0]])

    def test_mixed_horizons_rejected(self, scenes):
        other = generate_dataset(1, seed=9, obs_len=10, pred_len=20)
        with pytest.raises(ValueError, match="horizons"):
            FFINetForecaster(**SMALL).fit([scenes[0]] + other)
