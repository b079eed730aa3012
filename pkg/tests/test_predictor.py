import math

import numpy as np
import pytest

from dipmix import (
    BetaParams,
    ConfigurationError,
    Dataset,
    PredictorConfig,
    decision_grid,
    evaluate,
    forward,
    mlp_init,
    predict,
    predict_batch,
)
from dipmix.nn import ModelParams


def linear_net(w, b=None):
    w = np.asarray(w, dtype=float)
    b = np.zeros(w.shape[1]) if b is None else np.asarray(b, dtype=float)
    return ModelParams([w.shape[0], w.shape[1]], [w], [b], "relu")


class TestPredict:
    def test_probabilities_normalized(self, mixup_spirals_model):
        params, train_set, test_set = mixup_spirals_model
        cfg = PredictorConfig("dip", 50, BetaParams(2, 1), train_set.features, seed=0)
        probs = predict_batch(params, test_set.features[:20], cfg)
        assert np.all(probs >= 0)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)

    def test_degenerate_prior_equals_raw_exactly(self, mixup_spirals_model):
        params, train_set, test_set = mixup_spirals_model
        raw = PredictorConfig("raw", seed=4)
        dip = PredictorConfig("dip", 500, None, train_set.features, seed=4)
        x = test_set.features[7]
        assert np.array_equal(predict(params, x, dip), predict(params, x, raw))

    def test_self_pool_collapses_to_raw(self, mixup_spirals_model):
        params, _, test_set = mixup_spirals_model
        x = test_set.features[3]
        dip = PredictorConfig("dip", 200, BetaParams(2, 1), x.reshape(1, -1), seed=1)
        raw = PredictorConfig("raw", seed=1)
        np.testing.assert_allclose(predict(params, x, dip), predict(params, x, raw),
                                   atol=1e-12)

    def test_fixed_seed_deterministic(self, mixup_spirals_model):
        params, train_set, test_set = mixup_spirals_model
        cfg = PredictorConfig("dip", 100, BetaParams(2, 1), train_set.features, seed=9)
        a = predict(params, test_set.features[0], cfg)
        b = predict(params, test_set.features[0], cfg)
        assert np.array_equal(a, b)

    def test_empty_pool_rejected(self):
        with pytest.raises(ConfigurationError):
            PredictorConfig("dip", 10, BetaParams(2, 1), None, seed=0)

    def test_mc_argmax_stability_across_seeds(self, mixup_spirals_model):
        params, train_set, test_set = mixup_spirals_model
        preds = []
        for seed in (0, 1):
            cfg = PredictorConfig("dip", 500, BetaParams(2, 1), train_set.features, seed=seed)
            preds.append(predict_batch(params, test_set.features, cfg).argmax(axis=1))
        assert (preds[0] == preds[1]).mean() >= 0.99

    def test_mc_argmax_stability_in_draw_count(self, mixup_spirals_model):
        params, train_set, test_set = mixup_spirals_model
        out = {}
        for s_test in (500, 5000):
            cfg = PredictorConfig("dip", s_test, BetaParams(2, 1), train_set.features, seed=0)
            out[s_test] = predict_batch(params, test_set.features, cfg).argmax(axis=1)
        assert (out[500] == out[5000]).mean() >= 0.99


class TestEvaluate:
    def test_all_correct_constructed_case(self):
        params = linear_net([[50.0, -50.0], [0.0, 0.0]])
        ds = Dataset(np.array([[1.0, 0.0], [2.0, 1.0], [-1.0, 0.0], [-3.0, 2.0]]),
                     np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=float))
        result = evaluate(params, ds, PredictorConfig("raw"))
        assert result.accuracy == 1.0
        assert result.misclassification_rate == 0.0
        assert result.mean_loss < math.log(2)

    def test_uniform_model_ties_break_to_class_zero(self):
        params = linear_net([[0.0, 0.0], [0.0, 0.0]])
        feats = np.random.default_rng(0).normal(size=(10, 2))
        labels = np.zeros((10, 2))
        labels[:5, 0] = 1.0
        labels[5:, 1] = 1.0
        result = evaluate(params, Dataset(feats, labels), PredictorConfig("raw"))
        assert result.accuracy == 0.5

    def test_hand_scored_ten_samples(self):
        # logits = (x1, x2): predicted class is argmax coordinate, ties to 0
        params = linear_net([[1.0, 0.0], [0.0, 1.0]])
        feats = np.array([
            [2.0, 1.0], [0.5, 1.5], [3.0, -1.0], [-1.0, 2.0], [1.0, 1.0],
            [0.0, 4.0], [5.0, 0.0], [-2.0, -3.0], [2.5, 2.6], [0.1, 0.0],
        ])
        # hand argmax: 0, 1, 0, 1, 0(tie), 1, 0, 0, 1, 0
        labels = np.eye(2)[[0, 1, 0, 0, 1, 1, 0, 1, 1, 0]]
        # agreement by hand: rows 0,1,2,5,6,8,9 correct -> 7/10
        result = evaluate(params, Dataset(feats, labels), PredictorConfig("raw"))
        assert result.accuracy == 0.7
        assert abs(result.misclassification_rate - 0.3) < 1e-15


class TestDecisionGrid:
    def test_resolution_two(self, small_net):
        xs, ys, classes, probs = decision_grid(small_net, PredictorConfig("raw"),
                                               (-1, 1), (-1, 1), 2)
        assert classes.shape == (2, 2) and probs.shape == (2, 2)
        assert set(classes.ravel()) <= {0, 1}
        assert np.all((probs >= 0.5 - 1e-12) & (probs <= 1.0))

    def test_antisymmetric_model_mirrors_grid(self):
        # logits (x1, -x1): reflecting x flips the class everywhere off the axis
        params = linear_net([[1.0, -1.0], [0.0, 0.0]])
        _, _, classes, _ = decision_grid(params, PredictorConfig("raw"),
                                         (-1.5, 1.5), (-1.5, 1.5), 4)
        mirrored = classes[:, ::-1]
        assert np.array_equal(classes + mirrored, np.ones_like(classes))

    def test_raw_and_dip_grids_differ_on_mixup_model(self, mixup_spirals_model):
        params, train_set, _ = mixup_spirals_model
        raw_cfg = PredictorConfig("raw", seed=0)
        dip_cfg = PredictorConfig("dip", 50, BetaParams(2, 1), train_set.features, seed=0)
        box = ((-2.0, 2.0), (-2.0, 2.0))
        _, _, raw_classes, _ = decision_grid(params, raw_cfg, *box, 16)
        _, _, dip_classes, _ = decision_grid(params, dip_cfg, *box, 16)
        assert (raw_classes != dip_classes).sum() > 0

    def test_non_planar_model_rejected(self):
        params = mlp_init([3, 4, 2], "relu", seed=0)
        with pytest.raises(ConfigurationError):
            decision_grid(params, PredictorConfig("raw"), (-1, 1), (-1, 1), 4)


def test_dip_average_runs_over_logits(mixup_spirals_model):
    # averaging after softmax would give a different vector; pin the logit-space choice
    params, train_set, test_set = mixup_spirals_model
    x = test_set.features[11]
    cfg = PredictorConfig("dip", 64, BetaParams(2, 1), train_set.features, seed=5)
    probs = predict(params, x, cfg)
    rng = np.random.default_rng([5, 2, 0])
    from dipmix import sample_lambda

    lam = sample_lambda(cfg.prior, rng, size=64)[:, None]
    partners = rng.integers(0, len(train_set.features), size=64)
    mixed = lam * x + (1 - lam) * train_set.features[partners]
    avg_logits = forward(params, mixed).mean(axis=0)
    expected = np.exp(avg_logits - avg_logits.max())
    expected /= expected.sum()
    np.testing.assert_allclose(probs, expected, atol=1e-12)
