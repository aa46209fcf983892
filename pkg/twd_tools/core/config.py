"""
Configuration management for TWD Tools.

Settings are resolved from, in increasing priority:
- Built-in defaults
- A config file: flat `key = value` text (parsed with python-dotenv) or YAML
  (nested mappings flattened to dotted keys)
- Environment variables (TWD_SEED, TWD_THREADS; TWD_CONFIG names the file)
- Explicit overrides, usually CLI flags
"""

import hashlib
import os
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple, Union

import yaml
from dotenv import dotenv_values, load_dotenv

from ..utils.exceptions import ConfigurationError, TwdToolsError
from .augment import DropConfig
from .data_io import WindowSpec
from .predictors import NetworkHyper
from .synthetic import GenConfig
from .training import TrainConfig

# Load environment variables from .env file if it exists
load_dotenv()

DEFAULTS: Dict[str, str] = {
    'seed': '0',
    'data.source': 'synthetic',
    'data.dir': 'data',
    'gen.scene_count': '2400',
    'gen.agents_min': '1',
    'gen.agents_max': '3',
    'gen.n_obs': '8',
    'gen.m_pred': '12',
    'gen.frame_interval': '0.4',
    'gen.motion_mix': 'linear:0.4,turning:0.4,stop_and_go:0.2',
    'gen.noise_sigma': '0.05',
    'gen.speed_min': '0.2',
    'gen.speed_max': '0.6',
    'gen.turn_rate_max': '0.2',
    'gen.glitch_index': '0',
    'gen.glitch_sigma': '0.0',
    'split.fractions': '0.8,0.1,0.1',
    'window.n_obs': '8',
    'window.m_pred': '12',
    'window.stride': '1',
    'window.frame_interval': '0.4',
    'train.iterations': '2000',
    'train.batch_size': '32',
    'train.learning_rate': '0.001',
    'train.optimizer': 'adam',
    'train.beta1': '0.9',
    'train.beta2': '0.999',
    'train.eps': '1e-8',
    'train.hidden': '64',
    'train.heads': '20',
    'train.eval_every': '100',
    'train.weight_decay': '0.0001',
    'twd.mode': 'off,stochastic',
    'twd.drops': '1',
    'twd.pad_to_original': 'true',
    'twd.fixed_k': '0',
    'twd.fixed_k_objective': 'min-error',
    'eval.K': '20',
    'eval.horizons': '1.2,2.4,3.6,4.8',
    'eval.metric': 'ade',
    'eval.per_agent_min': 'false',
    'eval.missing_per_scene': 'false',
    'eval.threads': '1',
    'experiment.repeats': '1',
}

ENVIRONMENT_KEYS = {
    'TWD_SEED': 'seed',
    'TWD_THREADS': 'eval.threads',
}

DATA_SOURCES = ('synthetic', 'records', 'container')

# Keys that never change results; left out of the content hash.
UNHASHED_KEYS = ('seed', 'eval.threads')

_TRUE = ('1', 'true', 'yes', 'on')
_FALSE = ('0', 'false', 'no', 'off')


def _flatten(data: Mapping[str, Any], prefix: str = '') -> Dict[str, str]:
    flat: Dict[str, str] = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, f"{dotted}."))
        elif isinstance(value, (list, tuple)):
            flat[dotted] = ','.join(str(v) for v in value)
        elif isinstance(value, bool):
            flat[dotted] = 'true' if value else 'false'
        else:
            flat[dotted] = str(value)
    return flat


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    """Read a flat key = value file or a YAML file into dotted string keys."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Config file not found: {path}")
    if path.suffix in ('.yaml', '.yml'):
        try:
            data = yaml.safe_load(path.read_text(encoding='utf-8')) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"Invalid YAML in {path}: {e}")
        if not isinstance(data, Mapping):
            raise ConfigurationError(f"Config file {path} must contain a mapping")
        return _flatten(data)

    values = dotenv_values(path)
    missing = [key for key, value in values.items() if value is None]
    if missing:
        raise ConfigurationError(f"Config file {path}: keys without a value: {', '.join(missing)}")
    return {key: value.strip() for key, value in values.items()}


class ConfigManager:
    """
    Centralized configuration management.

    Determines the configuration source and provides typed access to settings
    plus builders for the settings objects of each module.
    """

    def __init__(self, config_path: Optional[Union[str, Path]] = None,
                 overrides: Optional[Mapping[str, Any]] = None,
                 environ: Optional[Mapping[str, str]] = None):
        self._environ = os.environ if environ is None else environ
        self.config_path = self._determine_config_path(config_path)
        self.config_source = self._determine_config_source(config_path)
        self._values: Dict[str, str] = dict(DEFAULTS)

        self._load_configuration()
        if overrides:
            self._apply(
                {key: value for key, value in overrides.items() if value is not None},
                origin='override',
            )

    def _determine_config_path(self, config_path) -> Optional[Path]:
        if config_path:
            return Path(config_path)
        env_path = self._environ.get('TWD_CONFIG')
        return Path(env_path) if env_path else None

    def _determine_config_source(self, config_path) -> str:
        """Determine which configuration source to use."""
        if config_path:
            return 'file'
        if self.config_path is not None:
            return 'environment'
        return 'defaults'

    def _load_configuration(self):
        if self.config_path is not None:
            self._apply(read_config_file(self.config_path), origin=str(self.config_path))
        env_values = {
            key: self._environ[name] for name, key in ENVIRONMENT_KEYS.items() if name in self._environ
        }
        self._apply(env_values, origin='environment')

    def _apply(self, values: Mapping[str, Any], origin: str):
        for key, value in values.items():
            if key not in DEFAULTS:
                raise ConfigurationError(f"Unknown configuration key '{key}' (from {origin})")
            if isinstance(value, bool):
                value = 'true' if value else 'false'
            elif isinstance(value, (list, tuple)):
                value = ','.join(str(v) for v in value)
            self._values[key] = str(value)

    # Typed access

    def get(self, key: str) -> str:
        if key not in self._values:
            raise ConfigurationError(f"Unknown configuration key '{key}'")
        return self._values[key]

    def get_int(self, key: str) -> int:
        try:
            return int(self.get(key))
        except ValueError:
            raise ConfigurationError(f"'{key}' must be an integer, got '{self.get(key)}'")

    def get_float(self, key: str) -> float:
        try:
            return float(self.get(key))
        except ValueError:
            raise ConfigurationError(f"'{key}' must be a number, got '{self.get(key)}'")

    def get_bool(self, key: str) -> bool:
        value = self.get(key).lower()
        if value in _TRUE:
            return True
        if value in _FALSE:
            return False
        raise ConfigurationError(f"'{key}' must be true or false, got '{self.get(key)}'")

    def get_list(self, key: str) -> List[str]:
        return [item.strip() for item in self.get(key).split(',') if item.strip()]

    def get_int_list(self, key: str) -> List[int]:
        try:
            return [int(item) for item in self.get_list(key)]
        except ValueError:
            raise ConfigurationError(f"'{key}' must be a comma separated list of integers, got '{self.get(key)}'")

    def get_float_list(self, key: str) -> List[float]:
        try:
            return [float(item) for item in self.get_list(key)]
        except ValueError:
            raise ConfigurationError(f"'{key}' must be a comma separated list of numbers, got '{self.get(key)}'")

    def get_weights(self, key: str) -> Dict[str, float]:
        """Parse `name:weight,name:weight` pairs."""
        weights = {}
        for item in self.get_list(key):
            name, sep, weight = item.partition(':')
            try:
                if not sep:
                    raise ValueError(item)
                weights[name.strip()] = float(weight)
            except ValueError:
                raise ConfigurationError(f"'{key}' entries must look like name:weight, got '{item}'")
        return weights

    @property
    def seed(self) -> int:
        seed = self.get_int('seed')
        if not 0 <= seed < 2 ** 64:
            raise ConfigurationError(f"seed must be an unsigned 64-bit integer, got {seed}")
        return seed

    # Builders

    def gen_config(self, seed: Optional[int] = None) -> GenConfig:
        return GenConfig(
            scene_count=self.get_int('gen.scene_count'),
            agents_min=self.get_int('gen.agents_min'),
            agents_max=self.get_int('gen.agents_max'),
            n_obs=self.get_int('gen.n_obs'),
            m_pred=self.get_int('gen.m_pred'),
            frame_interval=self.get_float('gen.frame_interval'),
            motion_mix=self.get_weights('gen.motion_mix'),
            noise_sigma=self.get_float('gen.noise_sigma'),
            speed_min=self.get_float('gen.speed_min'),
            speed_max=self.get_float('gen.speed_max'),
            turn_rate_max=self.get_float('gen.turn_rate_max'),
            glitch_index=self.get_int('gen.glitch_index'),
            glitch_sigma=self.get_float('gen.glitch_sigma'),
            seed=self.seed if seed is None else seed,
        )

    def window_spec(self) -> WindowSpec:
        return WindowSpec(
            n_obs=self.get_int('window.n_obs'),
            m_pred=self.get_int('window.m_pred'),
            stride=self.get_int('window.stride'),
            frame_interval=self.get_float('window.frame_interval'),
        )

    def split_fractions(self) -> Tuple[float, float, float]:
        fractions = self.get_float_list('split.fractions')
        if len(fractions) != 3:
            raise ConfigurationError(f"split.fractions needs three values, got {fractions}")
        return tuple(fractions)

    def drop_config(self, drops: Optional[int] = None) -> DropConfig:
        if drops is None:
            drops = self.get_int_list('twd.drops')[0]
        return DropConfig(drops=drops, pad_to_original=self.get_bool('twd.pad_to_original'))

    def hyper(self, n: int, m: int) -> NetworkHyper:
        return NetworkHyper(hidden=self.get_int('train.hidden'), heads=self.get_int('train.heads'), n=n, m=m)

    def train_config(self, twd_mode: str = 'off', drops: Optional[int] = None,
                     seed: Optional[int] = None) -> TrainConfig:
        return TrainConfig(
            iterations=self.get_int('train.iterations'),
            batch_size=self.get_int('train.batch_size'),
            learning_rate=self.get_float('train.learning_rate'),
            twd_mode=twd_mode,
            drop=self.drop_config(drops),
            seed=self.seed if seed is None else seed,
            optimizer=self.get('train.optimizer'),
            beta1=self.get_float('train.beta1'),
            beta2=self.get_float('train.beta2'),
            eps=self.get_float('train.eps'),
            eval_every=self.get_int('train.eval_every'),
            weight_decay=self.get_float('train.weight_decay'),
        )

    def eval_settings(self):
        from .harness import EvalSettings

        return EvalSettings(
            K=self.get_int('eval.K'),
            horizons=tuple(self.get_float_list('eval.horizons')),
            metric=self.get('eval.metric'),
            per_agent=self.get_bool('eval.per_agent_min'),
            missing_per_scene=self.get_bool('eval.missing_per_scene'),
            threads=self.get_int('eval.threads'),
            fixed_k=self.get_int('twd.fixed_k'),
            fixed_k_objective=self.get('twd.fixed_k_objective'),
        )

    def training_grid(self) -> List[Tuple[str, str, int]]:
        """(label, twd_mode, drops) for every model the experiment trains."""
        modes = self.get_list('twd.mode')
        drops_grid = self.get_int_list('twd.drops')
        if not modes:
            raise ConfigurationError("twd.mode must name at least one mode")
        if not drops_grid:
            raise ConfigurationError("twd.drops must name at least one drop count")
        grid = []
        for mode in modes:
            if mode == 'off':
                grid.append(('w/o TWD', 'off', 0))
            elif mode == 'stochastic':
                for drops in drops_grid:
                    label = 'w/ TWD' if len(drops_grid) == 1 else f'w/ TWD (D={drops})'
                    grid.append((label, 'stochastic', drops))
            else:
                raise ConfigurationError(f"Unknown twd.mode entry '{mode}'. Expected off or stochastic")
        return grid

    # Reporting

    def effective(self) -> Dict[str, str]:
        return dict(sorted(self._values.items()))

    def effective_text(self, exclude: Tuple[str, ...] = ()) -> str:
        lines = [f"{key} = {value}" for key, value in self.effective().items() if key not in exclude]
        return '\n'.join(lines) + '\n'

    def config_hash(self) -> str:
        """SHA-256 of the effective config without the seed and thread count."""
        return hashlib.sha256(self.effective_text(exclude=UNHASHED_KEYS).encode('utf-8')).hexdigest()

    def validate_config(self) -> bool:
        """Validate current configuration."""
        try:
            _ = self.seed
            if self.get('data.source') not in DATA_SOURCES:
                raise ConfigurationError(f"data.source must be one of {DATA_SOURCES}")
            self.gen_config().validate()
            self.window_spec()
            self.split_fractions()
            self.eval_settings().validate()
            for _, mode, drops in self.training_grid():
                self.train_config(mode, drops).validate()
            if self.get_int('experiment.repeats') < 1:
                raise ConfigurationError("experiment.repeats must be >= 1")
            return True
        except TwdToolsError:
            return False

    def get_config_info(self) -> Dict[str, Any]:
        """Get configuration information for display."""
        return {
            'source': self.config_source,
            'path': str(self.config_path) if self.config_path else 'None',
            'hash': self.config_hash()[:12],
            'seed': self.get('seed'),
            'data_source': self.get('data.source'),
            'valid': self.validate_config(),
        }
