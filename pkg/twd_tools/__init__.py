"""
TWD Tools - Temporal Waypoint Dropping for trajectory forecasting

A desk-scale toolkit for training and evaluating trajectory predictors with
Temporal Waypoint Dropping: removing the waypoint at one timestamp from every
agent's observed sequence during training, and optionally at test time.

Key Features:
- Stochastic, multiple, and fixed waypoint drops with front-padding
- minADE/minFDE metrics per horizon and RD(%) comparisons
- Constant-velocity, linear-fit, and a learned best-of-K predictor
- Synthetic multi-agent scenes and ETH-UCY style record ingestion
- Content-addressed, seed-deterministic experiment runs

Usage:
    python -m twd_tools generate --out data/
    python -m twd_tools run --config experiment.cfg --out results/
    python -m twd_tools report results/<dir> --format markdown
"""

__version__ = "1.0.0"
__description__ = "Temporal Waypoint Dropping toolkit for trajectory forecasting"

# Public API
from .core.config import ConfigManager
from .core.harness import run_experiment

__all__ = [
    'ConfigManager',
    'run_experiment',
]
