"""
Optimizers and the TWD-aware training loop for the learned predictor.

When TWD is on, every scene of every minibatch passes through a fresh
stochastic drop (single or iterated) before the forward pass, so the model
sees different missing timestamps at each iteration.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn

from ..utils.exceptions import InvalidArgumentError, TrainingDivergedError
from .augment import DropConfig, apply_twd
from .formatters import console
from .predictors import LearnedPredictor
from .rng import RandomSource
from .types import Dataset

TRAIN_TWD_MODES = ('off', 'stochastic')
OPTIMIZERS = ('sgd', 'adam')


@dataclass(frozen=True)
class TrainConfig:
    """Training protocol for the learned predictor."""
    iterations: int = 2000
    batch_size: int = 32
    learning_rate: float = 1e-3
    twd_mode: str = 'off'
    drop: DropConfig = field(default_factory=DropConfig)
    seed: int = 0
    optimizer: str = 'adam'
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    eval_every: int = 100
    weight_decay: float = 1e-4

    def validate(self, n: Optional[int] = None) -> None:
        if not self.learning_rate > 0:
            raise InvalidArgumentError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.iterations < 1:
            raise InvalidArgumentError(f"iterations must be >= 1, got {self.iterations}")
        if self.batch_size < 1:
            raise InvalidArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.eval_every < 1:
            raise InvalidArgumentError(f"eval_every must be >= 1, got {self.eval_every}")
        if not self.weight_decay >= 0:
            raise InvalidArgumentError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if self.twd_mode not in TRAIN_TWD_MODES:
            raise InvalidArgumentError(
                f"Training TWD mode must be one of {TRAIN_TWD_MODES}, got '{self.twd_mode}'"
            )
        if self.optimizer not in OPTIMIZERS:
            raise InvalidArgumentError(f"Unknown optimizer '{self.optimizer}'. Expected one of {OPTIMIZERS}")
        if self.twd_mode == 'stochastic':
            if not self.drop.pad_to_original:
                raise InvalidArgumentError("Training with TWD requires pad_to_original so inputs keep length n")
            if n is not None:
                self.drop.check_window(n)


@dataclass
class TrainTrace:
    """Per-iteration training losses, periodic validation losses, and the final parameters."""
    losses: List[float]
    theta: np.ndarray
    val_losses: List[Tuple[int, float]] = field(default_factory=list)

    def to_csv(self) -> str:
        lines = ['iteration,loss']
        lines += [f"{index},{loss!r}" for index, loss in enumerate(self.losses, start=1)]
        return '\n'.join(lines) + '\n'


class SGD:
    """Plain gradient descent."""

    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return theta - self.learning_rate * grad


class Adam:
    """Adam with bias-corrected first and second moment estimates."""

    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.first: Optional[np.ndarray] = None
        self.second: Optional[np.ndarray] = None

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.first is None:
            self.first = np.zeros_like(theta)
            self.second = np.zeros_like(theta)
        self.t += 1
        self.first = self.beta1 * self.first + (1.0 - self.beta1) * grad
        self.second = self.beta2 * self.second + (1.0 - self.beta2) * grad * grad
        first_hat = self.first / (1.0 - self.beta1 ** self.t)
        second_hat = self.second / (1.0 - self.beta2 ** self.t)
        return theta - self.learning_rate * first_hat / (np.sqrt(second_hat) + self.eps)


def make_optimizer(cfg: TrainConfig):
    if cfg.optimizer == 'sgd':
        return SGD(cfg.learning_rate)
    return Adam(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)


def train(predictor: LearnedPredictor, train_set: Dataset, val_set: Optional[Dataset],
          cfg: TrainConfig, label: str = 'model') -> TrainTrace:
    """
    Minibatch training of the variety loss.

    Minibatches are drawn with replacement from a 'batch' substream and drops
    from a 'twd' substream of the configured seed, so the trace is a pure
    function of (initial theta, dataset order, cfg). An L2 penalty of
    cfg.weight_decay on the weight matrices joins the gradient; the trace
    records the data loss only. The predictor's theta is
    updated in place and also returned in the trace.
    """
    if not isinstance(predictor, LearnedPredictor):
        raise InvalidArgumentError(f"Only learned predictors can be trained, got '{predictor.kind}'")
    cfg.validate(train_set.n)
    if (train_set.n, train_set.m) != (predictor.hyper.n, predictor.hyper.m):
        raise InvalidArgumentError(
            f"Training data has (n, m) = ({train_set.n}, {train_set.m}), "
            f"predictor expects ({predictor.hyper.n}, {predictor.hyper.m})"
        )

    root = RandomSource(cfg.seed)
    batch_src = root.fork('batch')
    twd_src = root.fork('twd')
    optimizer = make_optimizer(cfg)
    decay = cfg.weight_decay * predictor.weight_mask()
    losses: List[float] = []
    val_losses: List[Tuple[int, float]] = []
    size = len(train_set)

    with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"),
                  BarColumn(), TaskProgressColumn(), console=console, transient=True) as progress:
        task = progress.add_task(f"Training {label}", total=cfg.iterations)
        for iteration in range(1, cfg.iterations + 1):
            batch = [train_set[batch_src.uniform_index(size) - 1] for _ in range(cfg.batch_size)]
            if cfg.twd_mode == 'stochastic':
                batch = [apply_twd(scene, twd_src, cfg.drop)[0] for scene in batch]

            loss, grad = predictor.loss_and_gradient(batch)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDivergedError(iteration, loss)
            losses.append(loss)
            # L2 on W1 and W2 only
            grad = grad + decay * predictor.theta
            predictor.theta = optimizer.step(predictor.theta, grad)

            if val_set is not None and (iteration % cfg.eval_every == 0 or iteration == cfg.iterations):
                val_losses.append((iteration, predictor.batch_loss(val_set.scenes)))
            progress.advance(task)

    return TrainTrace(losses=losses, theta=predictor.theta.copy(), val_losses=val_losses)
