"""
Main entry point for TWD Tools.

This module allows the package to be run as:
    python -m twd_tools [command] [args]

Examples:
    python -m twd_tools generate --config gen.cfg --out data/
    python -m twd_tools train --data data/ --twd stochastic --out runs/twd
    python -m twd_tools eval --model runs/twd/checkpoint.json --out runs/eval
    python -m twd_tools run --config experiment.cfg --out results/
    python -m twd_tools report results/<hash>-seed0 --format markdown
"""

import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import click
from rich.console import Console

from . import __version__
from .core.augment import DROP_MODES, FIXED_K_OBJECTIVES, fixed_drop_dataset, stochastic_drop_dataset
from .core.config import ConfigManager
from .core.data_io import WindowSpec, extract_scenes, read_dataset, read_records, write_dataset, write_predictions
from .core.formatters import console, file_manager, json_formatter, load_summary, markdown_formatter, report_formatter
from .core.harness import (
    SUMMARY_FORMAT_VERSION,
    compare,
    evaluate,
    fixed_k_sweep,
    missing_waypoint_eval,
    run_experiment,
    slugify,
)
from .core.predictors import LearnedPredictor, Predictor, build_predictor, load_checkpoint, save_checkpoint
from .core.rng import RandomSource
from .core.synthetic import generate as generate_dataset
from .core.synthetic import split
from .core.training import train as train_predictor
from .core.types import Dataset
from .utils.exceptions import ConfigurationError, DataError, StageError, TrainingDivergedError, TwdToolsError

err_console = Console(stderr=True)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DIVERGED = 3

BASELINES = ('constant_velocity', 'linear_fit')
DEFAULT_OUT = 'twd-output'
REPORT_SUFFIXES = {'text': 'txt', 'markdown': 'md', 'json': 'json'}


def exit_code_for(error: Exception) -> int:
    """Map an exception to the CLI exit code."""
    if isinstance(error, StageError):
        return exit_code_for(error.cause)
    if isinstance(error, TrainingDivergedError):
        return EXIT_DIVERGED
    if isinstance(error, ConfigurationError):
        return EXIT_USAGE
    return EXIT_DATA


def common_options(command):
    """Flags every subcommand accepts."""
    options = [
        click.option('--config', 'config_path', type=click.Path(exists=True, dir_okay=False),
                     help='Config file (flat key = value, or YAML)'),
        click.option('--seed', type=click.IntRange(0, 2 ** 64 - 1), help='Override the seed'),
        click.option('--out', 'out_dir', type=click.Path(file_okay=False), help='Output directory'),
        click.option('--quiet', is_flag=True, help='Suppress progress output'),
        click.option('--threads', type=click.IntRange(min=1), help='Cap evaluation parallelism'),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def load_config(config_path: Optional[str], seed: Optional[int], threads: Optional[int],
                quiet: bool, **overrides) -> ConfigManager:
    console.quiet = quiet
    config = ConfigManager(config_path, {'seed': seed, 'eval.threads': threads, **overrides})
    console.print(f"📡 Configuration source: {config.config_source}")
    return config


def prepare_out(out_dir: Optional[str], config: ConfigManager, default: str = DEFAULT_OUT) -> Path:
    """Create the output directory and echo the effective config into it."""
    path = Path(out_dir or default)
    path.mkdir(parents=True, exist_ok=True)
    (path / 'effective.cfg').write_text(config.effective_text(), encoding='utf-8')
    return path


def read_split(data_dir: Path, tag: str) -> Dataset:
    path = data_dir / f"{tag}.twds"
    if not path.is_file():
        raise DataError(f"No {tag} split at {path}. Run 'generate' or 'ingest' first")
    return read_dataset(path)


def write_splits(splits: Sequence[Dataset], out: Path) -> None:
    for dataset in splits:
        path = write_dataset(dataset, out / f"{dataset.split_tag}.twds")
        console.print(f"   📄 {path} ({len(dataset)} scenes)")


def model_label(path: Path) -> str:
    return path.parent.name if path.stem == 'checkpoint' else path.stem


def load_predictors(models: Sequence[str], baselines: Sequence[str]) -> Dict[str, Predictor]:
    predictors: Dict[str, Predictor] = {}
    for model in models:
        predictors[model_label(Path(model))] = load_checkpoint(model)
    for kind in baselines:
        predictors[kind.replace('_', ' ')] = build_predictor(kind)
    if not predictors:
        raise click.UsageError("Give at least one --model or --baseline")
    return predictors


def write_summary(out: Path, config: ConfigManager, section: str, reports) -> Path:
    """Write a summary.json holding one table so `report` can render it."""
    settings = config.eval_settings()
    labels = list(reports)
    comparisons = [compare(reports[labels[0]], reports[label], (labels[0], label)) for label in labels[1:]]
    for rd_table in comparisons:
        report_formatter.print_rd_table(rd_table)
    summary = {
        'format_version': SUMMARY_FORMAT_VERSION,
        'config_hash': config.config_hash(),
        'seeds': [config.seed],
        'K': settings.K,
        'horizons': list(settings.horizons),
        'tables': {section: {label: report.to_dict() for label, report in reports.items()}},
        'comparisons': {section: [rd_table.to_dict() for rd_table in comparisons]},
    }
    path = out / 'summary.json'
    path.write_text(json_formatter.format_summary_to_json(summary) + '\n', encoding='utf-8')
    return path


@click.group()
@click.version_option(version=__version__)
def cli():
    """
    🧪 TWD Tools - Temporal Waypoint Dropping for trajectory forecasting

    Generate or ingest scenes, train with and without TWD, evaluate on clean
    and corrupted inputs, and report RD(%) comparisons.
    """
    pass


@cli.command()
@common_options
def generate(config_path, seed, out_dir, quiet, threads):
    """Generate synthetic scenes and write train/validation/test containers."""
    config = load_config(config_path, seed, threads, quiet)
    out = prepare_out(out_dir, config, default=config.get('data.dir'))
    gen = config.gen_config()
    console.print(f"🎲 Generating {gen.scene_count} synthetic scenes (seed {gen.seed})...")
    splits = split(generate_dataset(gen), config.split_fractions(), config.seed)
    write_splits(splits, out)
    console.print("✅ Synthetic data written")


@cli.command()
@click.argument('record_files', nargs=-1, required=True, type=click.Path(exists=True, dir_okay=False))
@common_options
def ingest(record_files, config_path, seed, out_dir, quiet, threads):
    """
    Cut scenes from `frame agent x y` record files and write split containers.

    Every RECORD_FILE is windowed separately; the scenes are pooled and split.
    """
    config = load_config(config_path, seed, threads, quiet)
    out = prepare_out(out_dir, config, default=config.get('data.dir'))
    spec: WindowSpec = config.window_spec()
    scenes = []
    for record_file in record_files:
        dataset = extract_scenes(read_records(record_file), spec)
        console.print(f"   📥 {record_file}: {len(dataset)} scenes")
        scenes.extend(dataset.scenes)
    write_splits(split(Dataset(tuple(scenes)), config.split_fractions(), config.seed), out)
    console.print("✅ Records ingested")


@cli.command()
@click.option('--data', 'data_dir', type=click.Path(file_okay=False), help='Directory with split containers')
@click.option('--twd', 'twd_mode', type=click.Choice(['off', 'stochastic']), help='Training-time TWD')
@click.option('--drops', type=click.IntRange(min=0), help='Number of drops D per scene')
@click.option('--iterations', type=click.IntRange(min=1), help='Override train.iterations')
@common_options
def train(data_dir, twd_mode, drops, iterations, config_path, seed, out_dir, quiet, threads):
    """Train the learned predictor; writes checkpoint.json and trace.csv."""
    config = load_config(config_path, seed, threads, quiet, **{'train.iterations': iterations})
    data = Path(data_dir or config.get('data.dir'))
    train_set, val_set = read_split(data, 'train'), read_split(data, 'validation')
    if twd_mode is None:
        twd_mode = 'stochastic' if drops else 'off'
    cfg = config.train_config(twd_mode, drops)
    cfg.validate(train_set.n)

    out = prepare_out(out_dir, config)
    predictor = LearnedPredictor.initialize(config.hyper(train_set.n, train_set.m), config.seed)
    label = 'w/ TWD' if twd_mode == 'stochastic' else 'w/o TWD'
    trace = train_predictor(predictor, train_set, val_set, cfg, label)
    save_checkpoint(predictor, out / 'checkpoint.json')
    (out / 'trace.csv').write_text(trace.to_csv(), encoding='utf-8')
    console.print(f"✅ {label}: loss {trace.losses[0]:.4f} → {trace.losses[-1]:.4f}")
    console.print(f"   📄 {out / 'checkpoint.json'}")


@cli.command(name='eval')
@click.option('--data', 'data_dir', type=click.Path(file_okay=False), help='Directory with split containers')
@click.option('--split', 'split_tag', type=click.Choice(['train', 'validation', 'test']), default='test')
@click.option('--model', 'models', multiple=True, type=click.Path(exists=True, dir_okay=False),
              help='Checkpoint to evaluate (repeatable)')
@click.option('--baseline', 'baselines', multiple=True, type=click.Choice(BASELINES),
              help='Closed-form baseline to evaluate (repeatable)')
@click.option('--predictions', is_flag=True, help='Also write per-scene predictions as JSON')
@click.option('--twd', 'twd_mode', type=click.Choice(DROP_MODES), default='off',
              help='Drop waypoints from the inputs before scoring')
@click.option('--drops', type=click.IntRange(min=1), help='Drops per scene for --twd stochastic')
@click.option('--fixed-k', type=click.IntRange(min=1), help='Dropped timestamp for --twd fixed')
@common_options
def evaluate_command(data_dir, split_tag, models, baselines, predictions, twd_mode, drops, fixed_k,
                     config_path, seed, out_dir, quiet, threads):
    """Evaluate predictors on clean or dropped scenes; the first one is the RD baseline."""
    config = load_config(config_path, seed, threads, quiet, **{'twd.fixed_k': fixed_k})
    settings = config.eval_settings()
    settings.validate()
    dataset = read_split(Path(data_dir or config.get('data.dir')), split_tag)
    predictors = load_predictors(models, baselines)
    if twd_mode == 'stochastic':
        drop = config.drop_config(drops)
        drop.check_window(dataset.n)
        dataset = stochastic_drop_dataset(dataset, RandomSource(config.seed).fork('test-drop'), drop)
    elif twd_mode == 'fixed':
        if not settings.fixed_k:
            raise click.UsageError("--twd fixed needs --fixed-k (or twd.fixed_k in the config)")
        dataset = fixed_drop_dataset(dataset, settings.fixed_k)
    out = prepare_out(out_dir, config)

    condition = {'off': 'clean', 'stochastic': 'S_d', 'fixed': f'F_d k={settings.fixed_k}'}[twd_mode]
    reports = {}
    for label, predictor in predictors.items():
        reports[label] = evaluate(predictor, dataset, settings.K, settings.horizons,
                                  settings.per_agent, settings.threads)
        report_formatter.print_report(reports[label], title=f"{label} on {split_tag} ({condition})")
        if predictions:
            sets = [predictor.predict(scene.observed, dataset.m).head(settings.K) for scene in dataset]
            write_predictions(dataset, sets, out / f"predictions-{slugify(label)}.json")
    (out / 'metrics.csv').write_text(
        ''.join(report.to_csv() for report in reports.values()), encoding='utf-8'
    )
    path = write_summary(out, config, 'evaluation', reports)
    console.print(f"📄 Wrote {path}")


@cli.command()
@click.option('--data', 'data_dir', type=click.Path(file_okay=False), help='Directory with split containers')
@click.option('--model', 'models', multiple=True, type=click.Path(exists=True, dir_okay=False))
@click.option('--baseline', 'baselines', multiple=True, type=click.Choice(BASELINES))
@click.option('--per-scene', is_flag=True, help='Draw the missing index per scene')
@common_options
def robustness(data_dir, models, baselines, per_scene, config_path, seed, out_dir, quiet, threads):
    """Drop the same waypoint from every test scene and evaluate every predictor on it."""
    config = load_config(config_path, seed, threads, quiet, **{'eval.missing_per_scene': True if per_scene else None})
    settings = config.eval_settings()
    settings.validate()
    dataset = read_split(Path(data_dir or config.get('data.dir')), 'test')
    predictors = load_predictors(models, baselines)
    out = prepare_out(out_dir, config)

    result = missing_waypoint_eval(predictors, dataset, settings.K, config.seed, settings.horizons,
                                   settings.missing_per_scene, settings.per_agent, settings.threads)
    where = 'per scene' if result.dropped_k is None else f"k = {result.dropped_k}"
    console.print(f"🕳️  Missing waypoint at {where} (inputs {result.digest[:12]})")
    for label, report in result.reports.items():
        report_formatter.print_report(report, title=label)
    (out / 'robustness.json').write_text(json_formatter.format_summary_to_json(result.to_dict()) + '\n',
                                         encoding='utf-8')
    path = write_summary(out, config, 'missing_waypoint', result.reports)
    console.print(f"📄 Wrote {path}")


@cli.command()
@click.option('--data', 'data_dir', type=click.Path(file_okay=False), help='Directory with split containers')
@click.option('--model', type=click.Path(exists=True, dir_okay=False), help='Checkpoint to sweep')
@click.option('--baseline', type=click.Choice(BASELINES), help='Sweep a closed-form baseline instead')
@click.option('--fixed-k', type=click.IntRange(min=0), help='Use this k instead of the validation choice')
@click.option('--fixed-k-objective', type=click.Choice(FIXED_K_OBJECTIVES), help='Selection rule for k')
@click.option('--metric', type=click.Choice(['ade', 'fde']), help='Selection metric')
@common_options
def sweep(data_dir, model, baseline, fixed_k, fixed_k_objective, metric, config_path, seed, out_dir,
          quiet, threads):
    """Score every fixed drop index on validation and evaluate the chosen one on test."""
    config = load_config(config_path, seed, threads, quiet, **{
        'twd.fixed_k': fixed_k, 'twd.fixed_k_objective': fixed_k_objective, 'eval.metric': metric,
    })
    settings = config.eval_settings()
    settings.validate()
    data = Path(data_dir or config.get('data.dir'))
    validation, test = read_split(data, 'validation'), read_split(data, 'test')
    predictors = load_predictors([model] if model else [], [baseline] if baseline else [])
    if len(predictors) != 1:
        raise click.UsageError("Give exactly one of --model or --baseline")
    out = prepare_out(out_dir, config)

    result = fixed_k_sweep(next(iter(predictors.values())), validation, test, settings.K, settings.metric,
                           settings.fixed_k_objective, settings.horizons, config.seed,
                           config.drop_config(), settings.fixed_k, settings.threads)
    report_formatter.print_sweep(result)
    (out / 'sweep.csv').write_text(result.to_csv(), encoding='utf-8')
    (out / 'sweep.json').write_text(json_formatter.format_summary_to_json(result.to_dict()) + '\n',
                                    encoding='utf-8')
    console.print(f"📄 Wrote {out / 'sweep.csv'}")


@cli.command()
@click.argument('summary_path', type=click.Path(exists=True))
@click.option('--format', 'output_format', type=click.Choice(['text', 'markdown', 'json']), default='text',
              help='Output format')
@click.option('--output', '-o', help='Write to this file instead of the console')
@common_options
def report(summary_path, output_format, output, config_path, seed, out_dir, quiet, threads):
    """
    Render a summary.json (or an experiment directory) as tables with RD(%) rows.

    --out writes report.<format> into that directory and --quiet prints the
    report as plain text without status lines. A --config file is parsed, so
    unknown keys fail here as they do for every other command.
    """
    console.quiet = quiet
    if config_path:
        ConfigManager(config_path, {'seed': seed, 'eval.threads': threads})
    summary = load_summary(summary_path)
    if output is None and out_dir:
        output = str(Path(out_dir) / f"report.{REPORT_SUFFIXES[output_format]}")

    if output_format == 'markdown':
        content = markdown_formatter.format_summary_to_markdown(summary)
    elif output_format == 'json':
        content = json_formatter.format_summary_to_json(summary) + '\n'
    elif output or quiet:
        content = report_formatter.render_text(summary)
    else:
        report_formatter.print_summary(summary)
        return

    if output:
        path = file_manager.save_to_file(content, 'report', custom_path=output)
        console.print(f"📄 Report saved to {path}")
    else:
        click.echo(content, nl=False)


@cli.command()
@common_options
def run(config_path, seed, out_dir, quiet, threads):
    """Run the full experiment grid and write a content-addressed result directory."""
    config = load_config(config_path, seed, threads, quiet)
    result_dir = run_experiment(config, out_dir or DEFAULT_OUT)
    if not quiet:
        report_formatter.print_summary(load_summary(result_dir))
    console.print(f"✅ Results in {result_dir}")


def main(argv: Optional[List[str]] = None) -> int:
    """Run the CLI and return its exit code instead of exiting."""
    try:
        result = cli.main(args=argv, prog_name='twd_tools', standalone_mode=False)
        return result if isinstance(result, int) else EXIT_OK
    except click.UsageError as e:
        e.show()
        if e.ctx is not None:
            click.echo(e.ctx.get_help(), err=True)
        return EXIT_USAGE
    except click.Abort:
        err_console.print("❌ Aborted", style="red")
        return EXIT_USAGE
    except TwdToolsError as e:
        err_console.print(f"❌ {e}", style="red")
        return exit_code_for(e)
    finally:
        console.quiet = False


if __name__ == '__main__':
    sys.exit(main())
