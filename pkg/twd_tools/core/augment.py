"""
Temporal Waypoint Dropping (TWD).

Removes the waypoint at one timestamp from every agent's observed sequence.
Drops can be stochastic (index drawn uniformly from the timestamps still
available), iterated D times, or fixed at a chosen index. After dropping, the
original length is restored by front-padding with copies of each agent's
earliest surviving waypoint. The future window is never touched.

Indices are 1-based timestamps throughout this module.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Tuple

import numpy as np

from ..utils.exceptions import InvalidArgumentError
from .rng import RandomSource
from .types import Dataset, ObservedWindow, Scene

if TYPE_CHECKING:
    from .metrics import MetricsReport
    from .predictors import Predictor

DROP_MODES = ('off', 'stochastic', 'fixed')
FIXED_K_OBJECTIVES = ('min-error', 'max-error')


@dataclass(frozen=True)
class DropConfig:
    """How many waypoints to drop, and whether to restore the original length."""
    drops: int = 1
    pad_to_original: bool = True

    def __post_init__(self):
        if self.drops < 0:
            raise InvalidArgumentError(f"Number of drops must be >= 0, got {self.drops}")

    def check_window(self, n: int) -> None:
        if self.drops >= n:
            raise InvalidArgumentError(
                f"Cannot drop {self.drops} waypoints from a window of {n}: "
                f"the number of drops D must satisfy D < n"
            )


@dataclass(frozen=True)
class DropRecord:
    """Original 1-based timestamps that were dropped, in drop order."""
    dropped_indices: Tuple[int, ...] = ()


def drop_index(window: ObservedWindow, k: int) -> ObservedWindow:
    """Remove timestamp k from every agent; the same k applies to all agents."""
    n = window.length
    if n < 2:
        raise InvalidArgumentError(f"Window must have at least 2 waypoints to drop one, got {n}")
    if not 1 <= k <= n:
        raise InvalidArgumentError(f"Drop index k={k} outside 1..{n}")
    return window.with_positions(np.delete(window.positions, k - 1, axis=1))


def pad_front(window: ObservedWindow, target_len: int) -> ObservedWindow:
    """Prepend copies of each agent's earliest waypoint until the window has target_len steps."""
    current = window.length
    if current > target_len:
        raise InvalidArgumentError(
            f"Window of length {current} is longer than pad target {target_len}"
        )
    if current == target_len:
        return window
    if current == 0:
        raise InvalidArgumentError("Cannot pad an empty window")
    head = np.repeat(window.positions[:, :1, :], target_len - current, axis=1)
    return window.with_positions(np.concatenate([head, window.positions], axis=1))


def _finish(scene: Scene, observed: ObservedWindow, n: int, cfg: DropConfig) -> Scene:
    if cfg.pad_to_original:
        observed = pad_front(observed, n)
    return scene.with_observed(observed)


def twd_single(scene: Scene, src: RandomSource, cfg: DropConfig = DropConfig()) -> Tuple[Scene, DropRecord]:
    """Drop one uniformly drawn timestamp from all agents."""
    n = scene.observed.length
    if n < 2:
        raise InvalidArgumentError(f"twd_single needs n >= 2, got {n}")
    k = src.uniform_index(n)
    observed = drop_index(scene.observed, k)
    return _finish(scene, observed, n, cfg), DropRecord((k,))


def twd_multi(scene: Scene, src: RandomSource, cfg: DropConfig) -> Tuple[Scene, DropRecord]:
    """
    Apply the single drop D times.

    Each iteration draws k uniformly over the current (shrunken) length.
    Padding happens once, after the last drop.
    """
    n = scene.observed.length
    if cfg.drops < 1:
        raise InvalidArgumentError(f"twd_multi needs D >= 1, got {cfg.drops}")
    cfg.check_window(n)

    remaining: List[int] = list(range(1, n + 1))
    dropped: List[int] = []
    observed = scene.observed
    for _ in range(cfg.drops):
        k = src.uniform_index(len(remaining))
        dropped.append(remaining.pop(k - 1))
        observed = drop_index(observed, k)
    return _finish(scene, observed, n, cfg), DropRecord(tuple(dropped))


def apply_twd(scene: Scene, src: RandomSource, cfg: DropConfig) -> Tuple[Scene, DropRecord]:
    """Dispatch on D: identity for 0, single drop for 1, iterated drops otherwise."""
    if cfg.drops == 0:
        return scene, DropRecord()
    if cfg.drops == 1:
        cfg.check_window(scene.observed.length)
        return twd_single(scene, src, cfg)
    return twd_multi(scene, src, cfg)


def apply_fixed_drop(scene: Scene, k: int) -> Scene:
    """Deterministically drop timestamp k and front-pad back to length n."""
    n = scene.observed.length
    return scene.with_observed(pad_front(drop_index(scene.observed, k), n))


def fixed_drop_dataset(dataset: Dataset, k: int) -> Dataset:
    return dataset.with_scenes([apply_fixed_drop(scene, k) for scene in dataset])


def stochastic_drop_dataset(dataset: Dataset, src: RandomSource, cfg: DropConfig = DropConfig()) -> Dataset:
    """Per-scene stochastic drop of a whole dataset (a fresh k for every scene)."""
    return dataset.with_scenes([apply_twd(scene, src, cfg)[0] for scene in dataset])


def select_fixed_k(predictor: 'Predictor', validation: Dataset, metric: str = 'ade',
                   K: int = 20, objective: str = 'min-error',
                   horizons=(), threads: int = 1) -> Tuple[int, Dict[int, 'MetricsReport']]:
    """
    Choose the drop index whose fixed drop gives the best validation score.

    Every k in 1..n is evaluated. With the 'min-error' objective the lowest
    error wins; 'max-error' takes the arg max literally. Ties go to the
    smallest k.
    """
    from .metrics import dataset_metrics, report_value

    if objective not in FIXED_K_OBJECTIVES:
        raise InvalidArgumentError(
            f"Unknown fixed-k objective '{objective}'. Expected one of {FIXED_K_OBJECTIVES}"
        )
    per_k: Dict[int, 'MetricsReport'] = {}
    for k in range(1, validation.n + 1):
        per_k[k] = dataset_metrics(predictor, fixed_drop_dataset(validation, k), K, horizons,
                                   threads=threads)

    best_k = 1
    best_score = report_value(per_k[1], metric)
    for k in range(2, validation.n + 1):
        score = report_value(per_k[k], metric)
        better = score < best_score if objective == 'min-error' else score > best_score
        if better:
            best_k, best_score = k, score
    return best_k, per_k
