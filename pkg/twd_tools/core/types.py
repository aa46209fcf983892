"""
Core trajectory containers shared by every other module.

Positions are world-frame meters stored as float64 numpy arrays. Timestamps are
implicit: observed steps are 1..n and future steps n+1..n+m, with a scene-level
frame interval in seconds. All containers are immutable after construction
(arrays are copied and marked read-only).
"""

from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from ..utils.exceptions import EmptyDatasetError, InvalidArgumentError, ShapeMismatchError

SPLIT_TAGS = ('train', 'validation', 'test')


class Waypoint(NamedTuple):
    """One 2D world-coordinate position of one agent at one timestamp."""
    x: float
    y: float


def _frozen_positions(positions, rank: int, name: str) -> np.ndarray:
    array = np.array(positions, dtype=np.float64, copy=True)
    if array.ndim != rank or array.shape[-1] != 2:
        raise ShapeMismatchError(
            f"{name} must have rank {rank} with trailing size 2, got shape {array.shape}"
        )
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class ObservedWindow:
    """Past waypoints of N agents over n timestamps, shape (N, n, 2)."""
    positions: np.ndarray
    agent_ids: Tuple = ()

    def __post_init__(self):
        positions = _frozen_positions(self.positions, 3, 'ObservedWindow.positions')
        object.__setattr__(self, 'positions', positions)
        agent_ids = tuple(self.agent_ids) if len(self.agent_ids) else tuple(range(positions.shape[0]))
        for agent_id in agent_ids:
            if isinstance(agent_id, (bool, np.bool_)) or not isinstance(agent_id, (int, np.integer)):
                raise InvalidArgumentError(f"Agent ids must be integers, got {agent_id!r}")
        agent_ids = tuple(int(agent_id) for agent_id in agent_ids)
        object.__setattr__(self, 'agent_ids', agent_ids)

    @property
    def num_agents(self) -> int:
        return self.positions.shape[0]

    @property
    def length(self) -> int:
        return self.positions.shape[1]

    def waypoint(self, agent: int, step: int) -> Waypoint:
        """Waypoint of `agent` (0-based row) at 1-based timestamp `step`."""
        x, y = self.positions[agent, step - 1]
        return Waypoint(float(x), float(y))

    def with_positions(self, positions) -> 'ObservedWindow':
        return ObservedWindow(positions, self.agent_ids)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservedWindow):
            return NotImplemented
        return (self.agent_ids == other.agent_ids
                and np.array_equal(self.positions, other.positions))


@dataclass(frozen=True, eq=False)
class FutureWindow:
    """Ground-truth future of N agents over m timestamps, shape (N, m, 2)."""
    positions: np.ndarray

    def __post_init__(self):
        object.__setattr__(
            self, 'positions', _frozen_positions(self.positions, 3, 'FutureWindow.positions')
        )

    @property
    def num_agents(self) -> int:
        return self.positions.shape[0]

    @property
    def length(self) -> int:
        return self.positions.shape[1]

    def __eq__(self, other) -> bool:
        if not isinstance(other, FutureWindow):
            return NotImplemented
        return np.array_equal(self.positions, other.positions)


@dataclass(frozen=True, eq=False)
class Scene:
    """One sample: an observed window paired with its ground-truth future."""
    observed: ObservedWindow
    future: FutureWindow
    frame_interval: float = 0.4

    def with_observed(self, observed: ObservedWindow) -> 'Scene':
        return Scene(observed, self.future, self.frame_interval)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Scene):
            return NotImplemented
        return (self.frame_interval == other.frame_interval
                and self.observed == other.observed
                and self.future == other.future)


@dataclass(frozen=True, eq=False)
class PredictionSet:
    """K sampled futures for the agents of one scene, shape (K, N, m, 2)."""
    samples: np.ndarray

    def __post_init__(self):
        samples = _frozen_positions(self.samples, 4, 'PredictionSet.samples')
        if samples.shape[0] < 1:
            raise ShapeMismatchError("PredictionSet needs at least one sample")
        object.__setattr__(self, 'samples', samples)

    @property
    def num_samples(self) -> int:
        return self.samples.shape[0]

    def head(self, count: int) -> 'PredictionSet':
        """The first `count` samples (all of them when fewer exist)."""
        return PredictionSet(self.samples[:max(1, count)])

    def check_matches(self, scene: Scene) -> None:
        expected = scene.future.positions.shape
        if self.samples.shape[1:] != expected:
            raise ShapeMismatchError(
                f"Prediction shape {self.samples.shape[1:]} does not match future {expected}"
            )


def scene_dimensions(scene: Scene) -> Tuple[int, int, int]:
    """Return (N agents, n observed steps, m future steps)."""
    return scene.observed.num_agents, scene.observed.length, scene.future.length


def validate_scene(scene: Scene) -> Optional[str]:
    """Return the first violated scene invariant, or None when the scene is well formed."""
    observed = scene.observed.positions
    future = scene.future.positions

    if observed.shape[0] < 1:
        return "no agents"
    if observed.shape[1] < 2:
        return "observed window shorter than 2"
    if future.shape[1] < 1:
        return "empty future window"
    if observed.shape[0] != future.shape[0]:
        return "agent count mismatch"
    if len(scene.observed.agent_ids) != observed.shape[0]:
        return "agent id count mismatch"
    if not (np.all(np.isfinite(observed)) and np.all(np.isfinite(future))):
        return "non-finite coordinate"
    if not (np.isfinite(scene.frame_interval) and scene.frame_interval > 0):
        return "non-positive frame interval"
    return None


@dataclass(frozen=True)
class Dataset:
    """A nonempty collection of scenes sharing (n, m, frame_interval)."""
    scenes: Tuple[Scene, ...]
    split_tag: str = 'train'
    _dims: Tuple[int, int, float] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        scenes = tuple(self.scenes)
        if not scenes:
            raise EmptyDatasetError("Dataset must contain at least one scene")
        if self.split_tag not in SPLIT_TAGS:
            raise InvalidArgumentError(
                f"Unknown split tag '{self.split_tag}'. Expected one of {SPLIT_TAGS}"
            )
        first = scenes[0]
        dims = (first.observed.length, first.future.length, first.frame_interval)
        for index, scene in enumerate(scenes):
            if (scene.observed.length, scene.future.length, scene.frame_interval) != dims:
                raise ShapeMismatchError(
                    f"Scene {index} has dimensions that differ from the dataset's {dims}"
                )
        object.__setattr__(self, 'scenes', scenes)
        object.__setattr__(self, '_dims', dims)

    @property
    def n(self) -> int:
        return self._dims[0]

    @property
    def m(self) -> int:
        return self._dims[1]

    @property
    def frame_interval(self) -> float:
        return self._dims[2]

    def __len__(self) -> int:
        return len(self.scenes)

    def __iter__(self) -> Iterator[Scene]:
        return iter(self.scenes)

    def __getitem__(self, index: int) -> Scene:
        return self.scenes[index]

    def with_scenes(self, scenes: Sequence[Scene], split_tag: Optional[str] = None) -> 'Dataset':
        return Dataset(tuple(scenes), split_tag or self.split_tag)
