"""
Trajectory predictors g_theta.

Two closed-form baselines (constant velocity, least-squares linear fit) and a
small learned network: per agent, the n-1 observed displacement vectors feed
one tanh hidden layer, and K output heads each emit m future displacement
vectors that are summed cumulatively onto the last observed position. The
network is translation-equivariant by construction. Gradients of the variety
(best-of-K) squared-error loss are computed analytically with numpy.
"""

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from ..utils.exceptions import FormatError, InvalidArgumentError, ShapeMismatchError
from .rng import RandomSource
from .types import ObservedWindow, PredictionSet, Scene

CHECKPOINT_FORMAT_VERSION = 1
PREDICTOR_KINDS = ('constant_velocity', 'linear_fit', 'learned')


class Predictor(ABC):
    """Maps an observed window to K sampled futures of m steps."""

    kind: str = ''

    @abstractmethod
    def predict(self, observed: ObservedWindow, m: int) -> PredictionSet:
        """Predict the next m waypoints of every agent."""


class ConstantVelocityPredictor(Predictor):
    """Continue each agent with its last observed step (last minus second-last)."""

    kind = 'constant_velocity'

    def predict(self, observed: ObservedWindow, m: int) -> PredictionSet:
        positions = observed.positions
        if positions.shape[1] < 2:
            raise InvalidArgumentError("Constant velocity needs at least 2 observed waypoints")
        last = positions[:, -1, :]
        velocity = last - positions[:, -2, :]
        steps = np.arange(1, m + 1, dtype=np.float64)[np.newaxis, :, np.newaxis]
        future = last[:, np.newaxis, :] + steps * velocity[:, np.newaxis, :]
        return PredictionSet(future[np.newaxis])


class LinearFitPredictor(Predictor):
    """Least-squares line per agent and coordinate over timestamps 1..n, extrapolated."""

    kind = 'linear_fit'

    def predict(self, observed: ObservedWindow, m: int) -> PredictionSet:
        positions = observed.positions
        num_agents, n, _ = positions.shape
        if n < 2:
            raise InvalidArgumentError("Linear fit needs at least 2 observed waypoints")
        times = np.arange(1, n + 1, dtype=np.float64)
        design = np.stack([np.ones(n), times], axis=1)
        # columns: agent-major (x, y) pairs
        targets = positions.transpose(1, 0, 2).reshape(n, num_agents * 2)
        coefficients, *_ = np.linalg.lstsq(design, targets, rcond=None)
        future_times = np.arange(n + 1, n + m + 1, dtype=np.float64)
        future_design = np.stack([np.ones(m), future_times], axis=1)
        future = (future_design @ coefficients).reshape(m, num_agents, 2).transpose(1, 0, 2)
        return PredictionSet(future[np.newaxis])


@dataclass(frozen=True)
class NetworkHyper:
    """Architecture of the learned predictor."""
    hidden: int = 64
    heads: int = 20
    n: int = 8
    m: int = 12

    @property
    def input_size(self) -> int:
        return 2 * (self.n - 1)

    @property
    def output_size(self) -> int:
        return 2 * self.heads * self.m

    @property
    def param_count(self) -> int:
        return (self.hidden * self.input_size + self.hidden
                + self.output_size * self.hidden + self.output_size)


class _ForwardCache(NamedTuple):
    inputs: np.ndarray       # (A, 2(n-1))
    hidden: np.ndarray       # (A, H)
    predictions: np.ndarray  # (A, K, m, 2)


class LearnedPredictor(Predictor):
    """One-hidden-layer tanh network with K displacement heads."""

    kind = 'learned'

    def __init__(self, hyper: NetworkHyper, theta: Optional[np.ndarray] = None, seed: int = 0):
        if hyper.n < 2 or hyper.m < 1 or hyper.hidden < 1 or hyper.heads < 1:
            raise InvalidArgumentError(f"Invalid network hyperparameters: {hyper}")
        self.hyper = hyper
        self.seed = seed
        if theta is None:
            theta = np.zeros(hyper.param_count)
        theta = np.asarray(theta, dtype=np.float64).copy()
        if theta.shape != (hyper.param_count,):
            raise ShapeMismatchError(
                f"theta has {theta.size} entries, architecture needs {hyper.param_count}"
            )
        if not np.all(np.isfinite(theta)):
            raise InvalidArgumentError("theta contains non-finite values")
        self.theta = theta

    @classmethod
    def initialize(cls, hyper: NetworkHyper, seed: int = 0) -> 'LearnedPredictor':
        """Weights uniform in +-1/sqrt(fan_in), biases zero, drawn from fork(seed, 'init')."""
        src = RandomSource(seed).fork('init')
        predictor = cls(hyper, seed=seed)
        w1, _, w2, _ = predictor.unpack(predictor.theta)
        for weights in (w1, w2):
            bound = 1.0 / np.sqrt(weights.shape[1])
            flat = weights.reshape(-1)
            for index in range(flat.size):
                flat[index] = src.uniform_real(-bound, bound)
        return predictor

    def unpack(self, theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Views (W1, b1, W2, b2) into a flat parameter vector."""
        h, inp, out = self.hyper.hidden, self.hyper.input_size, self.hyper.output_size
        sizes = [h * inp, h, out * h, out]
        offsets = np.cumsum([0] + sizes)
        w1 = theta[offsets[0]:offsets[1]].reshape(h, inp)
        b1 = theta[offsets[1]:offsets[2]]
        w2 = theta[offsets[2]:offsets[3]].reshape(out, h)
        b2 = theta[offsets[3]:offsets[4]]
        return w1, b1, w2, b2

    def weight_mask(self) -> np.ndarray:
        """1.0 over the W1 and W2 entries of theta, 0.0 over the biases."""
        mask = np.zeros(self.hyper.param_count)
        w1, _, w2, _ = self.unpack(mask)
        w1[...] = 1.0
        w2[...] = 1.0
        return mask

    def _forward_rows(self, positions: np.ndarray, theta: Optional[np.ndarray] = None) -> _ForwardCache:
        theta = self.theta if theta is None else theta
        hyper = self.hyper
        if positions.ndim != 3 or positions.shape[1:] != (hyper.n, 2):
            raise ShapeMismatchError(
                f"Observed positions of shape {positions.shape} do not match n={hyper.n}"
            )
        w1, b1, w2, b2 = self.unpack(theta)
        inputs = np.diff(positions, axis=1).reshape(positions.shape[0], -1)
        hidden = np.tanh(inputs @ w1.T + b1)
        displacements = (hidden @ w2.T + b2).reshape(-1, hyper.heads, hyper.m, 2)
        predictions = positions[:, -1, np.newaxis, np.newaxis, :] + np.cumsum(displacements, axis=2)
        return _ForwardCache(inputs, hidden, predictions)

    def predict(self, observed: ObservedWindow, m: int) -> PredictionSet:
        if m != self.hyper.m:
            raise ShapeMismatchError(f"Learned predictor forecasts m={self.hyper.m}, asked for {m}")
        return forward(self, observed)

    def loss_and_gradient(self, scenes: Sequence[Scene],
                          theta: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
        """Batch-mean variety loss and its exact gradient with respect to theta."""
        theta = self.theta if theta is None else theta
        hyper = self.hyper
        num_scenes = len(scenes)
        if num_scenes == 0:
            raise InvalidArgumentError("Cannot compute a loss over an empty batch")

        observed = np.concatenate([scene.observed.positions for scene in scenes])
        truth = np.concatenate([scene.future.positions for scene in scenes])
        if truth.shape[1] != hyper.m:
            raise ShapeMismatchError(f"Future length {truth.shape[1]} != m={hyper.m}")
        counts = np.array([scene.observed.num_agents for scene in scenes])
        owner = np.repeat(np.arange(num_scenes), counts)
        rows = observed.shape[0]

        cache = self._forward_rows(observed, theta)
        residual = cache.predictions - truth[:, np.newaxis]            # (A, K, m, 2)
        squared = (residual ** 2).sum(axis=(2, 3))                      # (A, K)
        per_scene = np.zeros((num_scenes, hyper.heads))
        np.add.at(per_scene, owner, squared)
        per_scene /= (counts * hyper.m)[:, np.newaxis]
        best = per_scene.argmin(axis=1)
        loss = float(per_scene[np.arange(num_scenes), best].mean())

        mask = np.zeros((rows, hyper.heads))
        mask[np.arange(rows), best[owner]] = 1.0
        scale = 2.0 / (counts[owner] * hyper.m * num_scenes)
        d_pred = residual * (mask * scale[:, np.newaxis])[:, :, np.newaxis, np.newaxis]
        # prediction t sums displacements 1..t, so displacement tau collects gradients t >= tau
        d_disp = np.flip(np.cumsum(np.flip(d_pred, axis=2), axis=2), axis=2)
        d_out = d_disp.reshape(rows, -1)

        w1, _, w2, _ = self.unpack(theta)
        grad = np.zeros_like(theta)
        g_w1, g_b1, g_w2, g_b2 = self.unpack(grad)
        g_w2[...] = d_out.T @ cache.hidden
        g_b2[...] = d_out.sum(axis=0)
        d_hidden = (d_out @ w2) * (1.0 - cache.hidden ** 2)
        g_w1[...] = d_hidden.T @ cache.inputs
        g_b1[...] = d_hidden.sum(axis=0)
        return loss, grad

    def batch_loss(self, scenes: Sequence[Scene], theta: Optional[np.ndarray] = None) -> float:
        return self.loss_and_gradient(scenes, theta)[0]


def predict_constant_velocity(observed: ObservedWindow, m: int) -> PredictionSet:
    return ConstantVelocityPredictor().predict(observed, m)


def predict_linear_fit(observed: ObservedWindow, m: int) -> PredictionSet:
    return LinearFitPredictor().predict(observed, m)


def forward(predictor: LearnedPredictor, observed: ObservedWindow) -> PredictionSet:
    """Run the learned network on every agent; returns K head samples."""
    cache = predictor._forward_rows(observed.positions)
    return PredictionSet(cache.predictions.transpose(1, 0, 2, 3))


def variety_loss(predset: PredictionSet, gt) -> Tuple[float, int]:
    """
    Minimum over heads of the mean squared Euclidean error over N*m waypoints.

    Returns (loss, best_head) with best_head a 0-based index; ties go to the
    lowest head.
    """
    truth = gt.positions if hasattr(gt, 'positions') else np.asarray(gt, dtype=np.float64)
    if predset.samples.shape[1:] != truth.shape:
        raise ShapeMismatchError(
            f"Prediction shape {predset.samples.shape[1:]} != ground truth shape {truth.shape}"
        )
    per_head = ((predset.samples - truth[np.newaxis]) ** 2).sum(axis=-1).mean(axis=(1, 2))
    best = int(per_head.argmin())
    return float(per_head[best]), best


def backward(predictor: LearnedPredictor, scene_batch: Sequence[Scene]) -> np.ndarray:
    """Exact gradient of the batch-mean variety loss with respect to theta."""
    return predictor.loss_and_gradient(scene_batch)[1]


def build_predictor(kind: str, hyper: Optional[NetworkHyper] = None, seed: int = 0) -> Predictor:
    if kind == 'constant_velocity':
        return ConstantVelocityPredictor()
    if kind == 'linear_fit':
        return LinearFitPredictor()
    if kind == 'learned':
        return LearnedPredictor.initialize(hyper or NetworkHyper(), seed)
    raise InvalidArgumentError(f"Unknown predictor kind '{kind}'. Expected one of {PREDICTOR_KINDS}")


def checkpoint_dict(predictor: Predictor, n: int = 0, m: int = 0) -> Dict[str, Any]:
    if isinstance(predictor, LearnedPredictor):
        hyper = predictor.hyper
        return {
            'format_version': CHECKPOINT_FORMAT_VERSION,
            'kind': predictor.kind,
            'n': hyper.n,
            'm': hyper.m,
            'hidden': hyper.hidden,
            'heads': hyper.heads,
            'theta': [float(v) for v in predictor.theta],
            'seed': predictor.seed,
        }
    return {
        'format_version': CHECKPOINT_FORMAT_VERSION,
        'kind': predictor.kind,
        'n': n,
        'm': m,
        'hidden': 0,
        'heads': 1,
        'theta': [],
        'seed': 0,
    }


def save_checkpoint(predictor: Predictor, path: Union[str, Path], n: int = 0, m: int = 0) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(checkpoint_dict(predictor, n, m), indent=2, sort_keys=True),
                    encoding='utf-8')
    return path


def load_checkpoint(path: Union[str, Path]) -> Predictor:
    try:
        data = json.loads(Path(path).read_text(encoding='utf-8'))
    except json.JSONDecodeError as e:
        raise FormatError(f"Checkpoint {path} is not valid JSON: {e}")
    if data.get('format_version') != CHECKPOINT_FORMAT_VERSION:
        raise FormatError(
            f"Checkpoint {path} has format_version {data.get('format_version')}, "
            f"expected {CHECKPOINT_FORMAT_VERSION}"
        )
    kind = data.get('kind')
    if kind == 'learned':
        hyper = NetworkHyper(hidden=int(data['hidden']), heads=int(data['heads']),
                             n=int(data['n']), m=int(data['m']))
        return LearnedPredictor(hyper, np.array(data['theta'], dtype=np.float64),
                                seed=int(data.get('seed', 0)))
    return build_predictor(kind)
