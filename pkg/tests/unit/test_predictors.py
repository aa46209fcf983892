"""
Unit tests for predictors, the variety loss, and checkpoints.
"""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from twd_tools.core.predictors import (
    ConstantVelocityPredictor,
    LearnedPredictor,
    LinearFitPredictor,
    NetworkHyper,
    backward,
    build_predictor,
    forward,
    load_checkpoint,
    predict_constant_velocity,
    predict_linear_fit,
    save_checkpoint,
    variety_loss,
)
from twd_tools.core.rng import RandomSource
from twd_tools.core.types import FutureWindow, ObservedWindow, PredictionSet
from twd_tools.utils.exceptions import FormatError, InvalidArgumentError, ShapeMismatchError

from tests.factories import linear_scene, random_scene


class TestBaselines:
    """Test cases for the closed-form predictors."""

    @pytest.mark.parametrize("predictor", [ConstantVelocityPredictor(), LinearFitPredictor()])
    def test_exact_on_linear_motion(self, predictor):
        """Both baselines extrapolate constant-velocity motion exactly."""
        scene = linear_scene(num_agents=3, n=8, m=12, velocity=(0.25, -0.5), start=(1.0, 2.0))
        predset = predictor.predict(scene.observed, 12)
        assert predset.num_samples == 1
        np.testing.assert_allclose(predset.samples[0], scene.future.positions, atol=1e-9)

    def test_constant_velocity_uses_last_two_steps(self):
        """Only the last two observed waypoints matter."""
        observed = ObservedWindow(np.array([[[9.0, 9.0], [0.0, 0.0], [1.0, 2.0]]]))
        predset = ConstantVelocityPredictor().predict(observed, 2)
        np.testing.assert_allclose(predset.samples[0, 0], [[2.0, 4.0], [3.0, 6.0]])

    def test_linear_fit_smooths_noise(self):
        """The least-squares line passes through the mean of symmetric noise."""
        observed = ObservedWindow(np.array([[[0.0, 1.0], [1.0, -1.0], [2.0, -1.0], [3.0, 1.0]]]))
        predset = LinearFitPredictor().predict(observed, 1)
        x, y = predset.samples[0, 0, 0]
        assert x == pytest.approx(4.0)
        assert y == pytest.approx(0.0, abs=1e-9)

    def test_function_forms(self):
        """The module-level functions match the predictor classes."""
        scene = linear_scene(num_agents=2, n=5, m=3)
        np.testing.assert_array_equal(predict_constant_velocity(scene.observed, 3).samples,
                                      ConstantVelocityPredictor().predict(scene.observed, 3).samples)
        np.testing.assert_array_equal(predict_linear_fit(scene.observed, 3).samples,
                                      LinearFitPredictor().predict(scene.observed, 3).samples)

    def test_build_predictor(self):
        """build_predictor knows the three kinds."""
        assert isinstance(build_predictor('constant_velocity'), ConstantVelocityPredictor)
        assert isinstance(build_predictor('linear_fit'), LinearFitPredictor)
        assert isinstance(build_predictor('learned', NetworkHyper(4, 2, 5, 3)), LearnedPredictor)
        with pytest.raises(InvalidArgumentError):
            build_predictor('transformer')


class TestLearnedPredictor:
    """Test cases for the learned network."""

    @pytest.fixture
    def hyper(self):
        return NetworkHyper(hidden=6, heads=3, n=5, m=4)

    def test_parameter_count(self, hyper):
        """theta holds both layers' weights and biases."""
        expected = 6 * 8 + 6 + 24 * 6 + 24
        assert hyper.param_count == expected
        assert LearnedPredictor.initialize(hyper).theta.shape == (expected,)

    def test_initialization_is_seeded(self, hyper):
        """Equal seeds give equal weights; biases start at zero."""
        a = LearnedPredictor.initialize(hyper, seed=4)
        b = LearnedPredictor.initialize(hyper, seed=4)
        c = LearnedPredictor.initialize(hyper, seed=5)
        assert np.array_equal(a.theta, b.theta)
        assert not np.array_equal(a.theta, c.theta)
        _, b1, _, b2 = a.unpack(a.theta)
        assert not b1.any() and not b2.any()

    def test_prediction_shape(self, hyper, make_scene):
        """predict returns (K, N, m, 2)."""
        scene = make_scene(num_agents=3, n=5, m=4)
        predset = LearnedPredictor.initialize(hyper).predict(scene.observed, 4)
        assert predset.samples.shape == (3, 3, 4, 2)

    def test_wrong_horizon(self, hyper, make_scene):
        """The network only forecasts its own m."""
        scene = make_scene(n=5, m=4)
        with pytest.raises(ShapeMismatchError):
            LearnedPredictor.initialize(hyper).predict(scene.observed, 6)

    def test_translation_equivariance(self, hyper, make_scene):
        """Shifting the observation shifts every prediction by the same vector."""
        predictor = LearnedPredictor.initialize(hyper, seed=3)
        scene = make_scene(seed=2, num_agents=2, n=5, m=4)
        shift = np.array([12.5, -3.0])
        shifted = ObservedWindow(scene.observed.positions + shift)
        base = forward(predictor, scene.observed).samples
        moved = forward(predictor, shifted).samples
        np.testing.assert_allclose(moved, base + shift, atol=1e-9)

    def test_loss_matches_variety_loss(self, hyper):
        """The batch loss is the mean of per-scene variety losses."""
        src = RandomSource(6)
        scenes = [random_scene(src, 1 + i % 3, 5, 4) for i in range(5)]
        predictor = LearnedPredictor.initialize(hyper, seed=6)
        expected = np.mean([variety_loss(forward(predictor, s.observed), s.future)[0] for s in scenes])
        assert predictor.batch_loss(scenes) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("heads", [1, 3])
    def test_gradient_matches_finite_differences(self, heads):
        """Analytic gradient agrees with central differences coordinate by coordinate."""
        hyper = NetworkHyper(hidden=12, heads=heads, n=5, m=4)
        assert hyper.param_count >= 200
        src = RandomSource(10 + heads)
        scenes = [random_scene(src, 1 + i % 2, 5, 4) for i in range(4)]
        predictor = LearnedPredictor.initialize(hyper, seed=heads)
        # nonzero biases so every parameter carries gradient
        theta = predictor.theta + np.array(RandomSource(1).gaussians(hyper.param_count, 0.1))

        _, analytic = predictor.loss_and_gradient(scenes, theta)
        step = 1e-5
        coordinates = np.random.default_rng(heads).choice(theta.size, size=200, replace=False)
        worst = 0.0
        for index in coordinates:
            plus, minus = theta.copy(), theta.copy()
            plus[index] += step
            minus[index] -= step
            numeric = (predictor.batch_loss(scenes, plus) - predictor.batch_loss(scenes, minus)) / (2 * step)
            scale = max(abs(numeric), abs(analytic[index]), 1e-5)
            worst = max(worst, abs(numeric - analytic[index]) / scale)
        assert worst < 1e-4

    def test_backward_wraps_gradient(self, hyper):
        """backward returns the same gradient as loss_and_gradient."""
        src = RandomSource(2)
        scenes = [random_scene(src, 2, 5, 4) for _ in range(3)]
        predictor = LearnedPredictor.initialize(hyper, seed=2)
        np.testing.assert_array_equal(backward(predictor, scenes), predictor.loss_and_gradient(scenes)[1])

    def test_rejects_bad_theta(self, hyper):
        """theta must have the architecture's size and be finite."""
        with pytest.raises(ShapeMismatchError):
            LearnedPredictor(hyper, np.zeros(3))
        theta = np.zeros(hyper.param_count)
        theta[0] = np.nan
        with pytest.raises(InvalidArgumentError):
            LearnedPredictor(hyper, theta)


class TestVarietyLoss:
    """Test cases for the best-of-K loss."""

    def test_picks_best_head(self):
        """The loss is the best head's mean squared error; heads are 0-based."""
        truth = FutureWindow(np.zeros((1, 2, 2)))
        samples = np.stack([np.full((1, 2, 2), 2.0), np.zeros((1, 2, 2)), np.ones((1, 2, 2))])
        loss, head = variety_loss(PredictionSet(samples), truth)
        assert (loss, head) == (0.0, 1)

    def test_ties_go_to_lowest_head(self):
        """Identical heads resolve to index 0."""
        truth = FutureWindow(np.zeros((2, 3, 2)))
        samples = np.ones((3, 2, 3, 2))
        loss, head = variety_loss(PredictionSet(samples), truth)
        assert loss == pytest.approx(2.0)
        assert head == 0


class TestCheckpoints:
    """Test cases for saving and loading predictors."""

    def test_learned_checkpoint(self, tmp_path, make_scene):
        """A saved network predicts identically after loading."""
        predictor = LearnedPredictor.initialize(NetworkHyper(hidden=4, heads=2, n=5, m=3), seed=9)
        path = save_checkpoint(predictor, tmp_path / "model" / "checkpoint.json")
        loaded = load_checkpoint(path)
        scene = make_scene(n=5, m=3)
        np.testing.assert_array_equal(loaded.predict(scene.observed, 3).samples,
                                      predictor.predict(scene.observed, 3).samples)
        assert loaded.hyper == predictor.hyper

    def test_baseline_checkpoint(self, tmp_path):
        """Baselines are stored by kind."""
        path = save_checkpoint(LinearFitPredictor(), tmp_path / "lf.json", n=8, m=12)
        assert isinstance(load_checkpoint(path), LinearFitPredictor)

    def test_bad_json(self, tmp_path):
        """Unparseable files raise FormatError."""
        path = tmp_path / "broken.json"
        path.write_text("{not json", encoding='utf-8')
        with pytest.raises(FormatError):
            load_checkpoint(path)

    def test_unknown_version(self, tmp_path):
        """Only the current format version loads."""
        path = tmp_path / "old.json"
        path.write_text(json.dumps({'format_version': 99, 'kind': 'linear_fit'}), encoding='utf-8')
        with pytest.raises(FormatError):
            load_checkpoint(path)
