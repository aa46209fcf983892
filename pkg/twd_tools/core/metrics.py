"""
Displacement metrics for trajectory forecasting.

ADE/FDE on single predictions, best-of-K variants (minADE_K / minFDE_K),
per-horizon truncation, dataset aggregation into a MetricsReport, and the
symmetric relative percent difference (RD%) used to compare two reports.
"""

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, Iterable, List, Sequence, Tuple

import numpy as np

from ..utils.exceptions import InvalidArgumentError, ShapeMismatchError, UndefinedInputError
from .types import Dataset, FutureWindow, PredictionSet, Scene

if TYPE_CHECKING:
    from .predictors import Predictor

METRICS = ('ade', 'fde')


def _check_shapes(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise ShapeMismatchError(f"Prediction shape {pred.shape} != ground truth shape {gt.shape}")


def ade(pred, gt) -> float:
    """Mean Euclidean distance over all N*m waypoints."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    _check_shapes(pred, gt)
    return float(np.linalg.norm(pred - gt, axis=-1).mean())


def fde(pred, gt) -> float:
    """Mean over agents of the Euclidean distance at the final timestamp."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    _check_shapes(pred, gt)
    return float(np.linalg.norm(pred[..., -1, :] - gt[..., -1, :], axis=-1).mean())


def _per_sample_errors(samples: np.ndarray, gt: np.ndarray, metric: str) -> np.ndarray:
    """Distances of shape (K, N) for FDE or (K, N) agent-mean for ADE."""
    distances = np.linalg.norm(samples - gt[np.newaxis], axis=-1)  # (K, N, m)
    if metric == 'ade':
        return distances.mean(axis=-1)
    if metric == 'fde':
        return distances[..., -1]
    raise InvalidArgumentError(f"Unknown metric '{metric}'. Expected one of {METRICS}")


def min_over_samples(predset: PredictionSet, gt: FutureWindow, metric: str = 'ade',
                     per_agent: bool = False) -> float:
    """
    Best-of-K metric for one scene.

    By default the minimum is taken over whole-scene predictions (every agent
    uses the same sample). With per_agent=True each agent picks its own best
    sample before averaging.
    """
    gt_positions = gt.positions if isinstance(gt, FutureWindow) else np.asarray(gt)
    _check_shapes(predset.samples[0], gt_positions)
    errors = _per_sample_errors(predset.samples, gt_positions, metric)
    if per_agent:
        return float(errors.min(axis=0).mean())
    return float(errors.mean(axis=1).min())


def truncated_horizon(predset: PredictionSet, gt: FutureWindow, prefix: int,
                      metric: str = 'ade', per_agent: bool = False) -> float:
    """Best-of-K metric on the first `prefix` future timestamps only."""
    m = gt.positions.shape[1]
    if not 1 <= prefix <= m:
        raise InvalidArgumentError(f"Horizon prefix {prefix} outside 1..{m}")
    truncated = PredictionSet(predset.samples[:, :, :prefix, :])
    return min_over_samples(truncated, FutureWindow(gt.positions[:, :prefix, :]), metric, per_agent)


def horizon_to_prefix(seconds: float, frame_interval: float, m: int) -> int:
    """Smallest number of future steps covering `seconds` (exact multiples map exactly)."""
    if seconds <= 0:
        raise InvalidArgumentError(f"Horizon must be positive, got {seconds}")
    prefix = math.ceil(seconds / frame_interval - 1e-9)
    if prefix > m:
        raise InvalidArgumentError(
            f"Horizon {seconds}s needs {prefix} steps but the prediction window has {m}"
        )
    return prefix


def rd_percent(baseline: float, ours: float) -> float:
    """Symmetric relative percent difference |a - b| / ((a + b) / 2) * 100."""
    if baseline < 0 or ours < 0:
        raise InvalidArgumentError(f"RD needs non-negative inputs, got ({baseline}, {ours})")
    total = baseline + ours
    if total == 0:
        raise UndefinedInputError("RD is undefined when both values are zero")
    return abs(baseline - ours) / (total / 2.0) * 100.0


@dataclass
class MetricsReport:
    """Dataset-level minADE/minFDE, overall and per horizon (seconds)."""
    min_ade: float
    min_fde: float
    per_horizon: Dict[float, Tuple[float, float]] = field(default_factory=dict)
    K: int = 1
    scene_count: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'min_ade': self.min_ade,
            'min_fde': self.min_fde,
            'per_horizon': {
                _horizon_key(h): {'min_ade': a, 'min_fde': f}
                for h, (a, f) in sorted(self.per_horizon.items())
            },
            'K': self.K,
            'scene_count': self.scene_count,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'MetricsReport':
        per_horizon = {
            float(h): (float(v['min_ade']), float(v['min_fde']))
            for h, v in data.get('per_horizon', {}).items()
        }
        return cls(
            min_ade=float(data['min_ade']),
            min_fde=float(data['min_fde']),
            per_horizon=dict(sorted(per_horizon.items())),
            K=int(data.get('K', 1)),
            scene_count=int(data.get('scene_count', 0)),
        )

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)

    def to_csv(self) -> str:
        """Header plus one row; per-horizon columns are named ade@<s>/fde@<s>."""
        columns = ['min_ade', 'min_fde', 'K', 'scene_count']
        values: List[Any] = [self.min_ade, self.min_fde, self.K, self.scene_count]
        for h, (a, f) in sorted(self.per_horizon.items()):
            columns += [f'ade@{_horizon_key(h)}', f'fde@{_horizon_key(h)}']
            values += [a, f]
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(columns)
        writer.writerow([repr(v) if isinstance(v, float) else v for v in values])
        return buffer.getvalue()


def _horizon_key(seconds: float) -> str:
    return f"{seconds:g}"


def report_value(report: MetricsReport, metric: str) -> float:
    if metric == 'ade':
        return report.min_ade
    if metric == 'fde':
        return report.min_fde
    raise InvalidArgumentError(f"Unknown metric '{metric}'. Expected one of {METRICS}")


def _scene_scores(predictor: 'Predictor', scene: Scene, K: int, prefixes: Sequence[int],
                  per_agent: bool) -> List[float]:
    predset = predictor.predict(scene.observed, scene.future.length).head(K)
    predset.check_matches(scene)
    scores = [
        min_over_samples(predset, scene.future, 'ade', per_agent),
        min_over_samples(predset, scene.future, 'fde', per_agent),
    ]
    for prefix in prefixes:
        scores.append(truncated_horizon(predset, scene.future, prefix, 'ade', per_agent))
        scores.append(truncated_horizon(predset, scene.future, prefix, 'fde', per_agent))
    scores.append(float(predset.num_samples))
    return scores


def dataset_metrics(predictor: 'Predictor', dataset: Dataset, K: int = 20,
                    horizons: Iterable[float] = (), per_agent: bool = False,
                    threads: int = 1) -> MetricsReport:
    """
    Per-scene best-of-K metrics averaged over scenes.

    Scenes may be scored on a thread pool; results are aggregated in dataset
    order so the report does not depend on the thread count.
    """
    if len(dataset) == 0:
        raise InvalidArgumentError("dataset_metrics needs a nonempty dataset")
    horizon_list = sorted(set(float(h) for h in horizons))
    prefixes = [horizon_to_prefix(h, dataset.frame_interval, dataset.m) for h in horizon_list]

    def score(scene: Scene) -> List[float]:
        return _scene_scores(predictor, scene, K, prefixes, per_agent)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(score, dataset.scenes))
    else:
        rows = [score(scene) for scene in dataset.scenes]

    count = len(rows)
    totals = [0.0] * len(rows[0])
    for row in rows:
        for index, value in enumerate(row):
            totals[index] += value
    means = [total / count for total in totals]

    per_horizon = {}
    for offset, h in enumerate(horizon_list):
        per_horizon[h] = (means[2 + 2 * offset], means[3 + 2 * offset])
    return MetricsReport(
        min_ade=means[0],
        min_fde=means[1],
        per_horizon=per_horizon,
        K=int(min(row[-1] for row in rows)),
        scene_count=count,
    )
