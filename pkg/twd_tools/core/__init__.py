"""
Core functionality for TWD Tools.

This module contains the core classes and functions for:
- Scene types, the seedable random source, and waypoint dropping
- Metrics, predictors, and training
- Data ingestion, synthetic generation, and the experiment harness
- Configuration management and report formatting
"""

from .config import ConfigManager
from .harness import run_experiment

__all__ = [
    'ConfigManager',
    'run_experiment',
]
