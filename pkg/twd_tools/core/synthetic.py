"""
Deterministic synthetic multi-agent scenes with known dynamics.

Each agent follows one motion model over the full n+m window:

- linear: constant velocity
- turning: constant speed with constant turn rate (radians per step)
- stop_and_go: constant heading, speed halved over one random contiguous segment

Gaussian observation noise is added to observed positions only, so ground-truth
futures stay smooth. An optional sensor glitch adds extra noise at one observed
timestamp of every agent, which makes that timestamp the least informative one.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from ..utils.exceptions import InvalidArgumentError
from .rng import RandomSource
from .types import Dataset, FutureWindow, ObservedWindow, Scene

MOTION_MODELS = ('linear', 'turning', 'stop_and_go')


def _default_mix() -> Dict[str, float]:
    return {'linear': 0.4, 'turning': 0.4, 'stop_and_go': 0.2}


@dataclass(frozen=True)
class GenConfig:
    """Synthetic benchmark settings; speeds in meters per step, noise in meters."""
    scene_count: int = 2400
    agents_min: int = 1
    agents_max: int = 3
    n_obs: int = 8
    m_pred: int = 12
    frame_interval: float = 0.4
    motion_mix: Dict[str, float] = field(default_factory=_default_mix)
    noise_sigma: float = 0.05
    speed_min: float = 0.2
    speed_max: float = 0.6
    turn_rate_max: float = 0.2
    glitch_index: int = 0
    glitch_sigma: float = 0.0
    area: float = 10.0
    seed: int = 0

    def validate(self) -> None:
        if self.scene_count < 1:
            raise InvalidArgumentError(f"scene_count must be >= 1, got {self.scene_count}")
        if not 1 <= self.agents_min <= self.agents_max:
            raise InvalidArgumentError(
                f"Need 1 <= agents_min <= agents_max, got {self.agents_min}..{self.agents_max}"
            )
        if self.n_obs < 2 or self.m_pred < 1:
            raise InvalidArgumentError(f"Need n_obs >= 2 and m_pred >= 1, got {self.n_obs}/{self.m_pred}")
        unknown = set(self.motion_mix) - set(MOTION_MODELS)
        if unknown:
            raise InvalidArgumentError(f"Unknown motion models {sorted(unknown)}. Expected {MOTION_MODELS}")
        weights = list(self.motion_mix.values())
        if any(w < 0 for w in weights) or abs(sum(weights) - 1.0) > 1e-9:
            raise InvalidArgumentError(f"Motion weights must be nonnegative and sum to 1, got {self.motion_mix}")
        if self.noise_sigma < 0 or self.glitch_sigma < 0:
            raise InvalidArgumentError("Noise sigmas must be >= 0")
        if not 0 < self.speed_min <= self.speed_max:
            raise InvalidArgumentError(f"Need 0 < speed_min <= speed_max, got {self.speed_min}..{self.speed_max}")
        if not 0 <= self.glitch_index <= self.n_obs:
            raise InvalidArgumentError(f"glitch_index must be in 0..{self.n_obs}, got {self.glitch_index}")
        if not self.frame_interval > 0:
            raise InvalidArgumentError(f"frame_interval must be > 0, got {self.frame_interval}")


def _choose_motion(src: RandomSource, mix: Dict[str, float]) -> str:
    u = src.unit()
    cumulative = 0.0
    chosen = None
    for model in MOTION_MODELS:
        weight = mix.get(model, 0.0)
        if weight <= 0:
            continue
        chosen = model
        cumulative += weight
        if u < cumulative:
            return model
    return chosen


def _draw(src: RandomSource, lo: float, hi: float) -> float:
    return lo if lo == hi else src.uniform_real(lo, hi)


def agent_track(src: RandomSource, motion: str, total: int, cfg: GenConfig) -> np.ndarray:
    """Noise-free positions of one agent over `total` steps, shape (total, 2)."""
    start = np.array([_draw(src, -cfg.area, cfg.area), _draw(src, -cfg.area, cfg.area)])
    heading = src.uniform_real(-math.pi, math.pi)
    speed = _draw(src, cfg.speed_min, cfg.speed_max)

    turn_rate = 0.0
    speeds = np.full(total - 1, speed)
    if motion == 'turning' and cfg.turn_rate_max > 0:
        turn_rate = src.uniform_real(-cfg.turn_rate_max, cfg.turn_rate_max)
    elif motion == 'stop_and_go':
        first = src.uniform_index(total - 1) - 1
        length = src.uniform_index(total - 1 - first)
        speeds[first:first + length] = speed / 2.0

    if motion == 'linear':
        steps = np.arange(total, dtype=np.float64)[:, np.newaxis]
        return start + steps * speed * np.array([math.cos(heading), math.sin(heading)])

    angles = heading + turn_rate * np.arange(total - 1)
    deltas = speeds[:, np.newaxis] * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    return np.vstack([start, start + np.cumsum(deltas, axis=0)])


def generate_scene(src: RandomSource, cfg: GenConfig) -> Tuple[Scene, List[str]]:
    """One scene and the motion model of each agent."""
    total = cfg.n_obs + cfg.m_pred
    num_agents = cfg.agents_min + src.uniform_index(cfg.agents_max - cfg.agents_min + 1) - 1
    motions = [_choose_motion(src, cfg.motion_mix) for _ in range(num_agents)]
    tracks = np.stack([agent_track(src, motion, total, cfg) for motion in motions])

    observed = tracks[:, :cfg.n_obs].copy()
    if cfg.noise_sigma > 0:
        noise = src.gaussians(observed.size, cfg.noise_sigma)
        observed += np.array(noise).reshape(observed.shape)
    if cfg.glitch_index and cfg.glitch_sigma > 0:
        glitch = src.gaussians(num_agents * 2, cfg.glitch_sigma)
        observed[:, cfg.glitch_index - 1] += np.array(glitch).reshape(num_agents, 2)

    scene = Scene(
        ObservedWindow(observed, tuple(range(num_agents))),
        FutureWindow(tracks[:, cfg.n_obs:]),
        cfg.frame_interval,
    )
    return scene, motions


def generate(cfg: GenConfig) -> Dataset:
    """Generate cfg.scene_count scenes; scene i draws from fork(seed, 'scene-i')."""
    cfg.validate()
    root = RandomSource(cfg.seed)
    scenes = [generate_scene(root.fork(f'scene-{index}'), cfg)[0] for index in range(cfg.scene_count)]
    return Dataset(tuple(scenes), 'train')


def split(dataset: Dataset, fractions: Tuple[float, float, float] = (0.8, 0.1, 0.1),
          seed: int = 0) -> Tuple[Dataset, Dataset, Dataset]:
    """Seeded shuffle, then cut into train/validation/test by fractions."""
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise InvalidArgumentError(f"Split fractions must be three positive numbers summing to 1, got {fractions}")
    total = len(dataset)
    n_train = int(round(fractions[0] * total))
    n_val = int(round(fractions[1] * total))
    n_test = total - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise InvalidArgumentError(
            f"Splitting {total} scenes by {fractions} leaves an empty split ({n_train}/{n_val}/{n_test})"
        )

    order = list(range(total))
    src = RandomSource(seed).fork('split')
    for i in range(total - 1, 0, -1):
        j = src.uniform_index(i + 1) - 1
        order[i], order[j] = order[j], order[i]

    scenes = [dataset[i] for i in order]
    return (
        Dataset(tuple(scenes[:n_train]), 'train'),
        Dataset(tuple(scenes[n_train:n_train + n_val]), 'validation'),
        Dataset(tuple(scenes[n_train + n_val:]), 'test'),
    )
