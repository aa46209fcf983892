"""
Unit tests for the synthetic scene generator and dataset splitting.
"""

import math
import sys
from collections import Counter
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent.parent))

from twd_tools.core.data_io import dataset_digest
from twd_tools.core.metrics import dataset_metrics
from twd_tools.core.predictors import ConstantVelocityPredictor
from twd_tools.core.rng import RandomSource
from twd_tools.core.synthetic import GenConfig, agent_track, generate, generate_scene, split
from twd_tools.core.types import validate_scene
from twd_tools.utils.exceptions import InvalidArgumentError


def scene_key(scene) -> bytes:
    return scene.observed.positions.tobytes() + scene.future.positions.tobytes()


class TestMotionModels:
    """Test cases for per-agent tracks."""

    def test_linear_track(self):
        """Linear tracks have identical steps whose length lies in the speed range."""
        cfg = GenConfig()
        track = agent_track(RandomSource(1), 'linear', 20, cfg)
        deltas = np.diff(track, axis=0)
        np.testing.assert_allclose(deltas, np.repeat(deltas[:1], 19, axis=0), atol=1e-12)
        assert cfg.speed_min <= np.linalg.norm(deltas[0]) <= cfg.speed_max

    def test_turning_track(self):
        """Turning tracks keep their speed and rotate by a constant angle per step."""
        cfg = GenConfig()
        for seed in range(5):
            track = agent_track(RandomSource(seed), 'turning', 20, cfg)
            deltas = np.diff(track, axis=0)
            norms = np.linalg.norm(deltas, axis=1)
            np.testing.assert_allclose(norms, norms[0], rtol=1e-9)
            angles = np.unwrap(np.arctan2(deltas[:, 1], deltas[:, 0]))
            turns = np.diff(angles)
            np.testing.assert_allclose(turns, turns[0], atol=1e-9)
            assert abs(turns[0]) <= cfg.turn_rate_max

    def test_stop_and_go_track(self):
        """Stop-and-go tracks halve their speed over one contiguous segment."""
        cfg = GenConfig()
        for seed in range(10):
            track = agent_track(RandomSource(seed), 'stop_and_go', 20, cfg)
            norms = np.linalg.norm(np.diff(track, axis=0), axis=1)
            top = norms.max()
            slow = np.flatnonzero(~np.isclose(norms, top))
            np.testing.assert_allclose(norms[slow], top / 2.0)
            if slow.size:
                assert list(slow) == list(range(slow[0], slow[-1] + 1))


class TestGenerate:
    """Test cases for dataset generation."""

    def test_shapes_and_tag(self, small_synthetic):
        """Every scene has n observed and m future steps and 1..3 agents."""
        assert len(small_synthetic) == 40
        assert (small_synthetic.n, small_synthetic.m) == (8, 12)
        assert small_synthetic.split_tag == 'train'
        assert all(1 <= scene.observed.num_agents <= 3 for scene in small_synthetic)

    def test_scenes_are_well_formed(self):
        """Generated scenes pass the scene checks for every motion model, with and without glitches."""
        for cfg in (GenConfig(scene_count=60, seed=8),
                    GenConfig(scene_count=30, agents_max=5, glitch_index=3, glitch_sigma=1.5, seed=9)):
            data = generate(cfg)
            assert [validate_scene(scene) for scene in data] == [None] * len(data)

    def test_deterministic(self):
        """Equal configs give byte-identical datasets; seeds matter."""
        cfg = GenConfig(scene_count=15, seed=5)
        assert dataset_digest(generate(cfg)) == dataset_digest(generate(cfg))
        assert dataset_digest(generate(cfg)) != dataset_digest(generate(GenConfig(scene_count=15, seed=6)))

    def test_scenes_do_not_depend_on_count(self):
        """Scene i comes from its own substream, so prefixes agree."""
        short = generate(GenConfig(scene_count=5, seed=2))
        long = generate(GenConfig(scene_count=9, seed=2))
        assert short.scenes == long.scenes[:5]

    def test_noise_free_linear_is_exact_for_constant_velocity(self):
        """Without noise, constant velocity predicts linear scenes perfectly."""
        data = generate(GenConfig(scene_count=30, motion_mix={'linear': 1.0}, noise_sigma=0.0, seed=3))
        report = dataset_metrics(ConstantVelocityPredictor(), data, K=1)
        assert report.min_ade == pytest.approx(0.0, abs=1e-9)
        assert report.min_fde == pytest.approx(0.0, abs=1e-9)

    def test_constant_velocity_fde_oracle(self):
        """
        Observation noise sigma on the last two observed points gives a final error
        per coordinate with std sigma * sqrt((m+1)^2 + m^2), so mean FDE is that
        scale times sqrt(pi / 2).
        """
        sigma, m = 0.1, 12
        data = generate(GenConfig(scene_count=2000, agents_min=1, agents_max=1, m_pred=m,
                                  motion_mix={'linear': 1.0}, noise_sigma=sigma, seed=17))
        report = dataset_metrics(ConstantVelocityPredictor(), data, K=1)
        expected = sigma * math.sqrt((m + 1) ** 2 + m ** 2) * math.sqrt(math.pi / 2)
        assert report.min_fde == pytest.approx(expected, rel=0.1)

    def test_noise_only_on_observed(self):
        """Futures are noise free: noisy and clean configs share them exactly."""
        clean = generate(GenConfig(scene_count=5, noise_sigma=0.0, seed=8))
        noisy = generate(GenConfig(scene_count=5, noise_sigma=0.3, seed=8))
        for a, b in zip(clean, noisy):
            assert a.future == b.future
            assert a.observed != b.observed

    def test_glitch_hits_one_timestamp(self):
        """The glitch perturbs only observed timestamp glitch_index."""
        base = GenConfig(scene_count=1, seed=4)
        glitched = GenConfig(scene_count=1, seed=4, glitch_index=3, glitch_sigma=2.0)
        plain, _ = generate_scene(RandomSource(4).fork('scene-0'), base)
        hit, _ = generate_scene(RandomSource(4).fork('scene-0'), glitched)
        difference = np.abs(hit.observed.positions - plain.observed.positions).sum(axis=(0, 2))
        assert difference[2] > 0
        assert np.count_nonzero(difference) == 1

    @pytest.mark.parametrize("changes", [
        {'scene_count': 0},
        {'agents_min': 3, 'agents_max': 2},
        {'n_obs': 1},
        {'motion_mix': {'linear': 0.5, 'turning': 0.4}},
        {'motion_mix': {'spiral': 1.0}},
        {'noise_sigma': -0.1},
        {'glitch_index': 9},
    ])
    def test_invalid_config(self, changes):
        """Out-of-range settings are rejected."""
        with pytest.raises(InvalidArgumentError):
            generate(GenConfig(**changes))


class TestSplit:
    """Test cases for train/validation/test splitting."""

    def test_sizes_and_tags(self, small_synthetic):
        """40 scenes split 80/10/10 into 32/4/4 with the right tags."""
        train, validation, test = split(small_synthetic, seed=1)
        assert (len(train), len(validation), len(test)) == (32, 4, 4)
        assert (train.split_tag, validation.split_tag, test.split_tag) == ('train', 'validation', 'test')

    def test_partition(self, small_synthetic):
        """The three splits are disjoint and together hold every scene once."""
        parts = split(small_synthetic, seed=1)
        together = Counter(scene_key(scene) for part in parts for scene in part)
        assert together == Counter(scene_key(scene) for scene in small_synthetic)

    def test_seeded(self, small_synthetic):
        """The shuffle depends only on the seed."""
        assert split(small_synthetic, seed=3)[0] == split(small_synthetic, seed=3)[0]
        assert split(small_synthetic, seed=3)[0] != split(small_synthetic, seed=4)[0]

    def test_bad_fractions(self, small_synthetic):
        """Fractions must be positive and sum to one."""
        with pytest.raises(InvalidArgumentError):
            split(small_synthetic, (0.5, 0.5, 0.0))
        with pytest.raises(InvalidArgumentError):
            split(small_synthetic, (0.5, 0.3, 0.3))

    def test_empty_split(self):
        """Too few scenes for three nonempty splits is an error."""
        with pytest.raises(InvalidArgumentError):
            split(generate(GenConfig(scene_count=3)), (0.8, 0.1, 0.1))
