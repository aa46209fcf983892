#!/usr/bin/env python3
"""
Simple local smoke runner for TWD Tools.

Checks that a checkout is usable without running the full pytest suite.
Run with: python tests/test_runner.py

Features:
- Configuration validation
- Report template rendering
- Core numerics (RNG vector, RD, metrics on a tiny synthetic set)
- CLI entry point
- Rich output with progress indicators
"""

import subprocess
import sys
from pathlib import Path
from typing import List, Optional

current_dir = Path(__file__).parent
parent_dir = current_dir.parent
sys.path.insert(0, str(parent_dir))

from rich.console import Console
from rich.panel import Panel
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn
from rich.table import Table

console = Console()


class TestResult:
    """Represents the result of a smoke check."""

    def __init__(self, name: str, passed: bool, message: str = "", error: Optional[str] = None):
        self.name = name
        self.passed = passed
        self.message = message
        self.error = error


class TestRunner:
    """Runs the smoke checks and prints a summary table."""

    def __init__(self):
        self.project_root = parent_dir
        self.results: List[TestResult] = []

    def run_all_tests(self) -> bool:
        """Run every category and return overall success."""
        console.print(Panel(
            "[bold green]TWD Tools - Local Smoke Runner[/bold green]\n\n"
            "Running quick validation checks...",
            title="Smoke Suite"
        ))

        categories = [
            ("Configuration", self._test_configuration),
            ("Report Template", self._test_template),
            ("Core Numerics", self._test_core),
            ("CLI", self._test_cli),
        ]

        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            TaskProgressColumn(),
            console=console
        ) as progress:
            for name, check in categories:
                task = progress.add_task(f"Running {name} checks...", total=1)
                self._guarded(name, check)
                progress.update(task, completed=1)

        self._display_results()
        return all(result.passed for result in self.results)

    def _guarded(self, name: str, check) -> None:
        try:
            check()
        except Exception as e:
            self.results.append(TestResult(name, False, "Check raised", str(e)))

    def _test_configuration(self):
        from twd_tools.core.config import ConfigManager

        config = ConfigManager(environ={})
        info = config.get_config_info()
        self.results.append(TestResult(
            "Default Configuration",
            info['valid'],
            f"Source: {info['source']}, hash {info['hash']}"
        ))

    def _test_template(self):
        from twd_tools.core.formatters import MarkdownFormatter

        summary = {
            'config_hash': '0' * 64,
            'seeds': [0],
            'K': 1,
            'horizons': [],
            'tables': {'evaluation': {'constant velocity': {'min_ade': 0.5, 'min_fde': 1.0,
                                                            'per_horizon': {}, 'K': 1, 'scene_count': 1}}},
            'comparisons': {},
        }
        text = MarkdownFormatter().format_summary_to_markdown(summary)
        self.results.append(TestResult(
            "Markdown Report",
            'constant velocity' in text,
            "Template renders a summary"
        ))

    def _test_core(self):
        from twd_tools.core.metrics import dataset_metrics, rd_percent
        from twd_tools.core.predictors import ConstantVelocityPredictor
        from twd_tools.core.rng import RandomSource
        from twd_tools.core.synthetic import GenConfig, generate

        src = RandomSource(42, 54)
        vector = [src.next_u32() for _ in range(3)]
        self.results.append(TestResult(
            "PCG32 Reference Vector",
            vector == [0xa15c02b7, 0x7b47f409, 0xba1d3330],
            " ".join(f"{value:08x}" for value in vector)
        ))

        rd = round(rd_percent(0.13, 0.11), 1)
        self.results.append(TestResult("RD(%)", rd == 16.7, f"RD(0.13, 0.11) = {rd}"))

        data = generate(GenConfig(scene_count=20, motion_mix={'linear': 1.0}, noise_sigma=0.0, seed=1))
        report = dataset_metrics(ConstantVelocityPredictor(), data, K=1)
        self.results.append(TestResult(
            "Constant Velocity on Clean Lines",
            report.min_ade < 1e-9,
            f"minADE {report.min_ade:.2e} over {report.scene_count} scenes"
        ))

    def _test_cli(self):
        result = subprocess.run(
            [sys.executable, "-m", "twd_tools", "--help"],
            cwd=str(self.project_root), capture_output=True, text=True, timeout=60,
        )
        self.results.append(TestResult(
            "CLI Help Command",
            result.returncode == 0 and "generate" in result.stdout,
            "Help command works" if result.returncode == 0 else result.stderr.strip()[:80]
        ))

    def _display_results(self):
        table = Table(title="Smoke Results")
        table.add_column("Check", style="cyan")
        table.add_column("Status", style="bold")
        table.add_column("Message", style="yellow")

        for result in self.results:
            status = "[green]PASS[/green]" if result.passed else "[red]FAIL[/red]"
            table.add_row(result.name, status, result.message)
        console.print(table)

        failed = [r for r in self.results if not r.passed]
        if not failed:
            console.print(f"\nAll {len(self.results)} checks passed.")
            return
        console.print(f"\n{len(self.results) - len(failed)}/{len(self.results)} checks passed")
        for result in failed:
            console.print(f"  - {result.name}: {result.message}")
            if result.error:
                console.print(f"    Error: {result.error}")


def main():
    """Main entry point."""
    runner = TestRunner()
    sys.exit(0 if runner.run_all_tests() else 1)


if __name__ == "__main__":
    main()
