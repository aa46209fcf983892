"""
Experiment harness: train with and without TWD, evaluate on clean and
corrupted test sets, sweep fixed drops, and compare reports with RD%.

`run_experiment` writes a content-addressed artifact directory:

    <out>/<config-hash12>-seed<seed>/
        effective.cfg
        summary.json
        sweep.csv
        seed<s>/models/<slug>/checkpoint.json
        seed<s>/models/<slug>/trace.csv
        seed<s>/sweep.csv
"""

import json
import re
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from ..utils.exceptions import InvalidArgumentError, ShapeMismatchError, StageError, TwdToolsError
from .augment import (
    FIXED_K_OBJECTIVES,
    DropConfig,
    apply_fixed_drop,
    fixed_drop_dataset,
    select_fixed_k,
    stochastic_drop_dataset,
)
from .data_io import dataset_digest, extract_scenes, read_dataset, read_records
from .formatters import console
from .metrics import METRICS, MetricsReport, dataset_metrics, rd_percent
from .predictors import ConstantVelocityPredictor, LearnedPredictor, LinearFitPredictor, Predictor, save_checkpoint
from .rng import RandomSource
from .synthetic import generate, split
from .training import train
from .types import Dataset

if TYPE_CHECKING:
    from .config import ConfigManager

SUMMARY_FORMAT_VERSION = 1


@dataclass(frozen=True)
class EvalSettings:
    """Evaluation protocol shared by every stage of an experiment."""
    K: int = 20
    horizons: Tuple[float, ...] = (1.2, 2.4, 3.6, 4.8)
    metric: str = 'ade'
    per_agent: bool = False
    missing_per_scene: bool = False
    threads: int = 1
    fixed_k: int = 0
    fixed_k_objective: str = 'min-error'

    def validate(self) -> None:
        if self.K < 1:
            raise InvalidArgumentError(f"K must be >= 1, got {self.K}")
        if self.metric not in METRICS:
            raise InvalidArgumentError(f"Unknown metric '{self.metric}'. Expected one of {METRICS}")
        if self.threads < 1:
            raise InvalidArgumentError(f"threads must be >= 1, got {self.threads}")
        if self.fixed_k < 0:
            raise InvalidArgumentError(f"fixed_k must be >= 0 (0 selects on validation), got {self.fixed_k}")
        if self.fixed_k_objective not in FIXED_K_OBJECTIVES:
            raise InvalidArgumentError(
                f"Unknown fixed-k objective '{self.fixed_k_objective}'. Expected one of {FIXED_K_OBJECTIVES}"
            )


def check_compatible(predictor: Predictor, dataset: Dataset) -> None:
    if isinstance(predictor, LearnedPredictor):
        hyper = predictor.hyper
        if (hyper.n, hyper.m) != (dataset.n, dataset.m):
            raise ShapeMismatchError(
                f"Predictor expects (n, m) = ({hyper.n}, {hyper.m}), "
                f"dataset has ({dataset.n}, {dataset.m})"
            )


def evaluate(predictor: Predictor, dataset: Dataset, K: int = 20, horizons: Iterable[float] = (),
             per_agent: bool = False, threads: int = 1) -> MetricsReport:
    """Best-of-K metrics of one predictor on clean scenes."""
    check_compatible(predictor, dataset)
    return dataset_metrics(predictor, dataset, K, horizons, per_agent=per_agent, threads=threads)


@dataclass
class MissingWaypointResult:
    """Reports on the corrupted test set plus the drop that produced it."""
    dropped_k: Optional[int]
    reports: Dict[str, MetricsReport]
    digest: str

    def to_dict(self) -> Dict[str, Any]:
        return {
            'dropped_k': self.dropped_k,
            'digest': self.digest,
            'reports': {label: report.to_dict() for label, report in self.reports.items()},
        }


def _labeled(predictors: Union[Mapping[str, Predictor], Sequence[Predictor]]) -> Dict[str, Predictor]:
    if isinstance(predictors, Mapping):
        return dict(predictors)
    return {f"{index}:{predictor.kind}": predictor for index, predictor in enumerate(predictors)}


def missing_waypoint_eval(predictors: Union[Mapping[str, Predictor], Sequence[Predictor]],
                          dataset: Dataset, K: int = 20, seed: int = 0,
                          horizons: Iterable[float] = (), per_scene: bool = False,
                          per_agent: bool = False, threads: int = 1) -> MissingWaypointResult:
    """
    Evaluate every predictor on the same corrupted test set.

    One index k is drawn per run from fork(seed, 'missing') and dropped (with
    front-padding) from every scene. With per_scene=True each scene gets its
    own k instead and dropped_k is None. The corrupted bytes are hashed and the
    hash is re-checked before each predictor is scored.
    """
    labeled = _labeled(predictors)
    if not labeled:
        raise InvalidArgumentError("missing_waypoint_eval needs at least one predictor")
    src = RandomSource(seed).fork('missing')
    if per_scene:
        dropped_k = None
        corrupted = dataset.with_scenes(
            [apply_fixed_drop(scene, src.uniform_index(dataset.n)) for scene in dataset]
        )
    else:
        dropped_k = src.uniform_index(dataset.n)
        corrupted = fixed_drop_dataset(dataset, dropped_k)
    digest = dataset_digest(corrupted)

    reports = {}
    for label, predictor in labeled.items():
        if dataset_digest(corrupted) != digest:
            raise TwdToolsError(f"Corrupted test set changed before evaluating '{label}'")
        reports[label] = evaluate(predictor, corrupted, K, horizons, per_agent, threads)
    return MissingWaypointResult(dropped_k, reports, digest)


@dataclass
class SweepResult:
    """Validation metrics for every fixed drop index and the test reports at the chosen one."""
    rows: List[Tuple[int, float, float]]
    chosen_k: int
    metric: str
    objective: str
    test_fixed: MetricsReport
    test_stochastic: MetricsReport
    test_clean: MetricsReport

    def to_csv(self) -> str:
        lines = ['k,ade,fde']
        lines += [f"{k},{a!r},{f!r}" for k, a, f in self.rows]
        return '\n'.join(lines) + '\n'

    def to_dict(self) -> Dict[str, Any]:
        return {
            'chosen_k': self.chosen_k,
            'metric': self.metric,
            'objective': self.objective,
            'rows': [{'k': k, 'ade': a, 'fde': f} for k, a, f in self.rows],
            'test': {
                'no_drop': self.test_clean.to_dict(),
                'stochastic_drop': self.test_stochastic.to_dict(),
                'fixed_drop': self.test_fixed.to_dict(),
            },
        }


def fixed_k_sweep(predictor: Predictor, validation: Dataset, test: Dataset, K: int = 20,
                  metric: str = 'ade', objective: str = 'min-error', horizons: Iterable[float] = (),
                  seed: int = 0, drop: DropConfig = DropConfig(), fixed_k: int = 0,
                  threads: int = 1) -> SweepResult:
    """
    Score every fixed drop k in 1..n on validation, pick one, and evaluate on test.

    The test set is scored three ways: fixed drop at the chosen k, one
    stochastic drop per scene (fork(seed, 'test-drop')), and no drop. A nonzero
    fixed_k bypasses the validation choice but the sweep is still reported.
    """
    if validation.n < 2:
        raise InvalidArgumentError(f"Fixed-drop sweep needs n >= 2, got {validation.n}")
    if (validation.n, validation.m) != (test.n, test.m):
        raise ShapeMismatchError("Validation and test sets disagree on (n, m)")
    check_compatible(predictor, validation)
    horizons = tuple(horizons)

    chosen_k, per_k = select_fixed_k(predictor, validation, metric, K, objective, horizons, threads)
    if fixed_k:
        if not 1 <= fixed_k <= validation.n:
            raise InvalidArgumentError(f"Fixed drop index {fixed_k} outside 1..{validation.n}")
        chosen_k = fixed_k
    rows = [(k, per_k[k].min_ade, per_k[k].min_fde) for k in sorted(per_k)]

    stochastic = stochastic_drop_dataset(test, RandomSource(seed).fork('test-drop'), drop)
    return SweepResult(
        rows=rows,
        chosen_k=chosen_k,
        metric=metric,
        objective=objective,
        test_fixed=evaluate(predictor, fixed_drop_dataset(test, chosen_k), K, horizons, threads=threads),
        test_stochastic=evaluate(predictor, stochastic, K, horizons, threads=threads),
        test_clean=evaluate(predictor, test, K, horizons, threads=threads),
    )


@dataclass(frozen=True)
class RDRow:
    name: str
    baseline: float
    ours: float
    rd: float


@dataclass
class RDTable:
    """RD% of `ours` against `baseline` for every metric and horizon."""
    baseline_label: str
    ours_label: str
    rows: List[RDRow] = field(default_factory=list)

    def row(self, name: str) -> RDRow:
        for row in self.rows:
            if row.name == name:
                return row
        raise KeyError(name)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'baseline': self.baseline_label,
            'ours': self.ours_label,
            'rows': [
                {'name': r.name, 'baseline': r.baseline, 'ours': r.ours, 'rd': r.rd} for r in self.rows
            ],
        }


def _safe_rd(baseline: float, ours: float) -> float:
    """RD% with two zeros treated as no difference."""
    if baseline == 0 and ours == 0:
        return 0.0
    return rd_percent(baseline, ours)


def compare(report_a: MetricsReport, report_b: MetricsReport,
            labels: Tuple[str, str] = ('baseline', 'ours')) -> RDTable:
    """RD% of report_b against report_a overall and per horizon."""
    if set(report_a.per_horizon) != set(report_b.per_horizon):
        raise InvalidArgumentError(
            f"Reports cover different horizons: {sorted(report_a.per_horizon)} vs {sorted(report_b.per_horizon)}"
        )
    pairs = [
        ('min_ade', report_a.min_ade, report_b.min_ade),
        ('min_fde', report_a.min_fde, report_b.min_fde),
    ]
    for h in sorted(report_a.per_horizon):
        (ade_a, fde_a), (ade_b, fde_b) = report_a.per_horizon[h], report_b.per_horizon[h]
        pairs.append((f"ade@{h:g}", ade_a, ade_b))
        pairs.append((f"fde@{h:g}", fde_a, fde_b))
    rows = [RDRow(name, a, b, _safe_rd(a, b)) for name, a, b in pairs]
    return RDTable(labels[0], labels[1], rows)


def mean_report(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Field-wise mean of reports over repeated runs."""
    if not reports:
        raise InvalidArgumentError("mean_report needs at least one report")
    count = len(reports)
    horizons = sorted(reports[0].per_horizon)
    return MetricsReport(
        min_ade=sum(r.min_ade for r in reports) / count,
        min_fde=sum(r.min_fde for r in reports) / count,
        per_horizon={
            h: (sum(r.per_horizon[h][0] for r in reports) / count,
                sum(r.per_horizon[h][1] for r in reports) / count)
            for h in horizons
        },
        K=min(r.K for r in reports),
        scene_count=reports[0].scene_count,
    )


def slugify(label: str) -> str:
    """Directory-safe name for a model label, e.g. 'w/ TWD (D=2)' -> 'w-twd-d-2'."""
    return re.sub(r'[^a-z0-9]+', '-', label.lower()).strip('-')


@contextmanager
def _stage(name: str):
    console.print(f"🧪 Stage: [bold]{name}[/bold]")
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(name, e) from e


def load_splits(config: 'ConfigManager', seed: int) -> Tuple[Dataset, Dataset, Dataset]:
    """Produce (train, validation, test) for one run from the configured data source."""
    source = config.get('data.source')
    data_dir = Path(config.get('data.dir'))
    if source == 'synthetic':
        return split(generate(config.gen_config(seed)), config.split_fractions(), seed)
    if source == 'records':
        files = sorted(data_dir.glob('*.txt'))
        if not files:
            raise InvalidArgumentError(f"No *.txt record files in {data_dir}")
        spec = config.window_spec()
        scenes = []
        for path in files:
            scenes.extend(extract_scenes(read_records(path), spec).scenes)
        return split(Dataset(tuple(scenes)), config.split_fractions(), seed)
    if source == 'container':
        return tuple(read_dataset(data_dir / f"{tag}.twds") for tag in ('train', 'validation', 'test'))
    raise InvalidArgumentError(f"Unknown data.source '{source}'")


def _run_once(config: 'ConfigManager', seed: int, settings: EvalSettings, run_dir: Path) -> Dict[str, Any]:
    horizons = settings.horizons
    K, threads, per_agent = settings.K, settings.threads, settings.per_agent

    with _stage('data'):
        train_set, val_set, test_set = load_splits(config, seed)
        console.print(f"   {len(train_set)} train / {len(val_set)} validation / {len(test_set)} test scenes")

    models: Dict[str, LearnedPredictor] = {}
    grid = config.training_grid()
    traces = {}
    with _stage('train'):
        hyper = config.hyper(train_set.n, train_set.m)
        for label, mode, drops in grid:
            predictor = LearnedPredictor.initialize(hyper, seed)
            cfg = config.train_config(mode, drops, seed)
            trace = train(predictor, train_set, val_set, cfg, label)
            model_dir = run_dir / 'models' / slugify(label)
            save_checkpoint(predictor, model_dir / 'checkpoint.json')
            (model_dir / 'trace.csv').write_text(trace.to_csv(), encoding='utf-8')
            models[label] = predictor
            traces[label] = {
                'initial_loss': trace.losses[0],
                'final_loss': trace.losses[-1],
                'val_losses': [[i, loss] for i, loss in trace.val_losses],
            }
            console.print(f"   ✅ {label}: loss {trace.losses[0]:.4f} → {trace.losses[-1]:.4f}")

    baselines = {'constant velocity': ConstantVelocityPredictor(), 'linear fit': LinearFitPredictor()}
    tables: Dict[str, Any] = {}
    with _stage('evaluate'):
        tables['training'] = {
            label: evaluate(model, test_set, K, horizons, per_agent, threads) for label, model in models.items()
        }
        tables['baselines'] = {
            label: evaluate(model, test_set, K, horizons, per_agent, threads) for label, model in baselines.items()
        }
        stochastic = [(label, drops) for label, mode, drops in grid if mode == 'stochastic']
        if len(stochastic) > 1:
            tables['multi_drop'] = {
                label: evaluate(models[label], val_set, K, horizons, per_agent, threads) for label, _ in stochastic
            }

    with _stage('missing'):
        tables['missing_waypoint'] = missing_waypoint_eval(
            {**models, **baselines}, test_set, K, seed, horizons,
            per_scene=settings.missing_per_scene, per_agent=per_agent, threads=threads,
        )

    with _stage('sweep'):
        sweep_label = next((label for label, mode, _ in grid if mode == 'stochastic'), grid[0][0])
        sweep_drops = next((drops for label, _, drops in grid if label == sweep_label), 0) or 1
        sweep = fixed_k_sweep(
            models[sweep_label], val_set, test_set, K, settings.metric, settings.fixed_k_objective,
            horizons, seed, config.drop_config(sweep_drops), settings.fixed_k, threads,
        )
        (run_dir / 'sweep.csv').write_text(sweep.to_csv(), encoding='utf-8')
        tables['fixed_drop'] = sweep
        tables['fixed_drop_model'] = sweep_label

    tables['traces'] = traces
    return tables


def _mean_tables(runs: List[Dict[str, Any]]) -> Dict[str, Any]:
    def means(section: str) -> Dict[str, MetricsReport]:
        return {label: mean_report([run[section][label] for run in runs]) for label in runs[0][section]}

    tables: Dict[str, Any] = {
        'training': means('training'),
        'baselines': means('baselines'),
        'missing_waypoint': {
            label: mean_report([run['missing_waypoint'].reports[label] for run in runs])
            for label in runs[0]['missing_waypoint'].reports
        },
        'fixed_drop': {
            'model': runs[0]['fixed_drop_model'],
            'no_drop': mean_report([run['fixed_drop'].test_clean for run in runs]),
            'stochastic_drop': mean_report([run['fixed_drop'].test_stochastic for run in runs]),
            'fixed_drop': mean_report([run['fixed_drop'].test_fixed for run in runs]),
        },
    }
    if 'multi_drop' in runs[0]:
        tables['multi_drop'] = means('multi_drop')
    return tables


def _comparisons(tables: Dict[str, Any]) -> Dict[str, List[RDTable]]:
    comparisons: Dict[str, List[RDTable]] = {}
    for section in ('training', 'missing_waypoint'):
        reports = tables[section]
        if 'w/o TWD' not in reports:
            continue
        comparisons[section] = [
            compare(reports['w/o TWD'], report, ('w/o TWD', label))
            for label, report in reports.items() if label.startswith('w/ TWD')
        ]
    if 'multi_drop' in tables:
        labels = list(tables['multi_drop'])
        first = tables['multi_drop'][labels[0]]
        comparisons['multi_drop'] = [
            compare(first, tables['multi_drop'][label], (labels[0], label)) for label in labels[1:]
        ]
    fixed = tables['fixed_drop']
    comparisons['fixed_drop'] = [
        compare(fixed['stochastic_drop'], fixed['fixed_drop'], ('S_d at test', 'F_d at test'))
    ]
    return comparisons


def _reports_dict(reports: Mapping[str, MetricsReport]) -> Dict[str, Any]:
    return {label: report.to_dict() for label, report in reports.items()}


def build_summary(config: 'ConfigManager', seeds: List[int], settings: EvalSettings,
                  runs: List[Dict[str, Any]]) -> Dict[str, Any]:
    tables = _mean_tables(runs)
    comparisons = _comparisons(tables)
    fixed = tables['fixed_drop']
    serial_tables: Dict[str, Any] = {
        'training': _reports_dict(tables['training']),
        'baselines': _reports_dict(tables['baselines']),
        'missing_waypoint': _reports_dict(tables['missing_waypoint']),
        'fixed_drop': {
            'model': fixed['model'],
            'chosen_k': [run['fixed_drop'].chosen_k for run in runs],
            'no_drop': fixed['no_drop'].to_dict(),
            'stochastic_drop': fixed['stochastic_drop'].to_dict(),
            'fixed_drop': fixed['fixed_drop'].to_dict(),
        },
    }
    if 'multi_drop' in tables:
        serial_tables['multi_drop'] = _reports_dict(tables['multi_drop'])

    return {
        'format_version': SUMMARY_FORMAT_VERSION,
        'config_hash': config.config_hash(),
        'seeds': seeds,
        'K': settings.K,
        'horizons': list(settings.horizons),
        'tables': serial_tables,
        'comparisons': {
            section: [table.to_dict() for table in rd_tables] for section, rd_tables in comparisons.items()
        },
        'runs': [
            {
                'seed': seed,
                'training': _reports_dict(run['training']),
                'missing_waypoint': run['missing_waypoint'].to_dict(),
                'sweep': run['fixed_drop'].to_dict(),
                'traces': run['traces'],
            }
            for seed, run in zip(seeds, runs)
        ],
    }


def experiment_dir(config: 'ConfigManager', out_root: Union[str, Path]) -> Path:
    return Path(out_root) / f"{config.config_hash()[:12]}-seed{config.seed}"


def run_experiment(config: 'ConfigManager', out_root: Union[str, Path]) -> Path:
    """
    Run the full pipeline for every repeat and write the artifact directory.

    Repeat r uses seed + r. Tables in the summary are means over repeats and
    every RD value is recomputed from those means.
    """
    with _stage('config'):
        settings = config.eval_settings()
        settings.validate()
        repeats = config.get_int('experiment.repeats')
        if repeats < 1:
            raise InvalidArgumentError(f"experiment.repeats must be >= 1, got {repeats}")

    out_dir = experiment_dir(config, out_root)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / 'effective.cfg').write_text(config.effective_text(), encoding='utf-8')

    seeds = [config.seed + r for r in range(repeats)]
    runs = []
    for seed in seeds:
        console.print(f"🎲 Run with seed {seed}")
        runs.append(_run_once(config, seed, settings, out_dir / f"seed{seed}"))

    with _stage('report'):
        summary = build_summary(config, seeds, settings, runs)
        (out_dir / 'summary.json').write_text(json.dumps(summary, indent=2, sort_keys=True) + '\n',
                                              encoding='utf-8')
        (out_dir / 'sweep.csv').write_text(runs[0]['fixed_drop'].to_csv(), encoding='utf-8')
    console.print(f"📄 Wrote {out_dir / 'summary.json'}")
    return out_dir
