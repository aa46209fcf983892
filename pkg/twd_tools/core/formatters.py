"""
Report formatters for different output types.

This module provides the shared console used for all status output, plus
console tables, markdown export (Jinja2), JSON output, and file operations
for metric reports and experiment summaries.
"""

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from jinja2 import Environment, FileSystemLoader, TemplateError, select_autoescape
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from ..utils.exceptions import FormatError

console = Console()

SECTION_TITLES = {
    'evaluation': 'Evaluation (clean scenes)',
    'training': 'Training-time TWD (clean test)',
    'baselines': 'Closed-form baselines (clean test)',
    'multi_drop': 'Single vs multiple drops (validation)',
    'missing_waypoint': 'Missing waypoint at test',
    'fixed_drop': 'Test-time drop',
}
SECTION_ORDER = ('evaluation', 'training', 'multi_drop', 'missing_waypoint', 'fixed_drop', 'baselines')
FIXED_DROP_ROWS = (('no_drop', 'no drop'), ('stochastic_drop', 'S_d at test'), ('fixed_drop', 'F_d at test'))


def format_pair(ade: float, fde: float, digits: int = 3) -> str:
    return f"{ade:.{digits}f}/{fde:.{digits}f}"


def format_rd(rd_ade: float, rd_fde: float) -> str:
    """RD% pair to one decimal, e.g. '19.7/18.2'."""
    return f"{rd_ade:.1f}/{rd_fde:.1f}"


@dataclass
class SectionView:
    """One summary table laid out as rows of ADE/FDE cells plus RD% rows."""
    key: str
    title: str
    columns: List[str]
    rows: List[Tuple[str, List[str]]] = field(default_factory=list)
    rd_rows: List[Tuple[str, List[str]]] = field(default_factory=list)


def _report_cells(report: Dict[str, Any], horizons: Sequence[str]) -> List[str]:
    cells = [format_pair(report['min_ade'], report['min_fde'])]
    for h in horizons:
        entry = report['per_horizon'][h]
        cells.append(format_pair(entry['min_ade'], entry['min_fde']))
    return cells


def _rd_cells(table: Dict[str, Any], horizons: Sequence[str]) -> List[str]:
    rd = {row['name']: row['rd'] for row in table['rows']}
    cells = [format_rd(rd['min_ade'], rd['min_fde'])]
    cells += [format_rd(rd[f'ade@{h}'], rd[f'fde@{h}']) for h in horizons]
    return cells


def _horizon_keys(report: Dict[str, Any]) -> List[str]:
    return sorted(report['per_horizon'], key=float)


def summary_sections(summary: Dict[str, Any]) -> List[SectionView]:
    """Lay out every table of an experiment summary for rendering."""
    tables = summary.get('tables')
    if not isinstance(tables, dict):
        raise FormatError("Summary has no 'tables' section")
    comparisons = summary.get('comparisons', {})
    sections = []
    for key in SECTION_ORDER:
        if key not in tables:
            continue
        table = tables[key]
        if key == 'fixed_drop':
            reports = {label: table[name] for name, label in FIXED_DROP_ROWS}
            chosen = ', '.join(str(k) for k in table.get('chosen_k', []))
            title = f"{SECTION_TITLES[key]} (model: {table.get('model')}, chosen k: {chosen})"
        else:
            reports = table
            title = SECTION_TITLES[key]
        if not reports:
            continue
        horizons = _horizon_keys(next(iter(reports.values())))
        view = SectionView(key, title, ['Overall'] + [f"{h}s" for h in horizons])
        view.rows = [(label, _report_cells(report, horizons)) for label, report in reports.items()]
        view.rd_rows = [
            (f"RD(%) {rd_table['ours']} vs {rd_table['baseline']}", _rd_cells(rd_table, horizons))
            for rd_table in comparisons.get(key, [])
        ]
        sections.append(view)
    return sections


class ReportFormatter:
    """
    Rich console formatter for metric reports and experiment summaries.

    Cells show ADE/FDE pairs; RD% rows are formatted to one decimal.
    """

    def __init__(self, output: Optional[Console] = None):
        self.console = output or console

    def _table(self, section: SectionView) -> Table:
        table = Table(title=section.title, show_header=True, header_style="bold magenta")
        table.add_column("Model", style="cyan", no_wrap=True)
        for column in section.columns:
            table.add_column(column, justify="right")
        for label, cells in section.rows:
            table.add_row(label, *cells)
        for label, cells in section.rd_rows:
            table.add_row(f"[bold]{label}[/bold]", *[f"[green]{c}[/green]" for c in cells])
        return table

    def print_summary(self, summary: Dict[str, Any]) -> None:
        seeds = ', '.join(str(s) for s in summary.get('seeds', []))
        self.console.print(Panel(
            f"K = {summary.get('K')}   seeds: {seeds}   config: {summary.get('config_hash', '')[:12]}",
            title="🧪 [bold cyan]TWD experiment summary[/bold cyan]",
            border_style="blue",
        ))
        for section in summary_sections(summary):
            self.console.print(self._table(section))

    def render_text(self, summary: Dict[str, Any], width: int = 120) -> str:
        """Plain aligned text rendering of a summary."""
        recorder = Console(file=io.StringIO(), record=True, width=width, color_system=None)
        ReportFormatter(recorder).print_summary(summary)
        return recorder.export_text()

    def print_report(self, report, title: str = "Metrics") -> None:
        data = report.to_dict() if hasattr(report, 'to_dict') else report
        horizons = _horizon_keys(data)
        table = Table(title=title, show_header=True, header_style="bold magenta")
        table.add_column("Horizon", style="cyan")
        table.add_column("minADE", justify="right")
        table.add_column("minFDE", justify="right")
        for h in horizons:
            entry = data['per_horizon'][h]
            table.add_row(f"{h}s", f"{entry['min_ade']:.3f}", f"{entry['min_fde']:.3f}")
        table.add_row("[bold]full[/bold]", f"{data['min_ade']:.3f}", f"{data['min_fde']:.3f}")
        self.console.print(table)
        self.console.print(f"   K = {data['K']}, {data['scene_count']} scenes")

    def print_sweep(self, sweep) -> None:
        table = Table(title=f"Fixed drop sweep (chosen k = {sweep.chosen_k})", header_style="bold magenta")
        table.add_column("k", justify="right", style="cyan")
        table.add_column("minADE", justify="right")
        table.add_column("minFDE", justify="right")
        for k, a, f in sweep.rows:
            marker = " ⭐" if k == sweep.chosen_k else ""
            table.add_row(f"{k}{marker}", f"{a:.4f}", f"{f:.4f}")
        self.console.print(table)

    def print_rd_table(self, rd_table) -> None:
        table = Table(title=f"RD(%) {rd_table.ours_label} vs {rd_table.baseline_label}",
                      header_style="bold magenta")
        for column in ("Metric", rd_table.baseline_label, rd_table.ours_label, "RD(%)"):
            table.add_column(column, justify="right")
        for row in rd_table.rows:
            table.add_row(row.name, f"{row.baseline:.3f}", f"{row.ours:.3f}", f"{row.rd:.1f}")
        self.console.print(table)


class MarkdownFormatter:
    """
    Markdown formatter for experiment summaries.

    Renders `report.md.j2` from the template directory with Jinja2.
    """

    def __init__(self, template_dir: Union[str, Path] = None):
        self.template_dir = Path(template_dir) if template_dir else self._get_default_template_dir()
        self.env = Environment(
            loader=FileSystemLoader([str(self.template_dir)]),
            autoescape=select_autoescape(['html', 'xml']),
            trim_blocks=True,
            lstrip_blocks=True,
        )

    def _get_default_template_dir(self) -> Path:
        """Get default template directory (project root/templates)."""
        project_root = Path(__file__).parent.parent.parent
        return project_root / "templates"

    def format_summary_to_markdown(self, summary: Dict[str, Any],
                                   template_name: str = 'report.md.j2') -> str:
        try:
            template = self.env.get_template(template_name)
            return template.render(summary=summary, sections=summary_sections(summary))
        except TemplateError as e:
            raise FormatError(f"Cannot render {template_name}: {e}")


class JSONFormatter:
    """Pretty-printed, key-sorted JSON for programmatic consumption."""

    def format_summary_to_json(self, summary: Dict[str, Any], indent: int = 2) -> str:
        return json.dumps(summary, indent=indent, ensure_ascii=False, sort_keys=True)


class OutputFileManager:
    """
    Handles file operations for report output.

    Manages output directories, file naming, and file writing operations.
    """

    def __init__(self, base_output_dir: str = "twd-output"):
        self.base_output_dir = Path(base_output_dir)

    def save_to_file(self, content: str, name: str, output_format: str = "md",
                     custom_path: Optional[str] = None) -> Path:
        if custom_path:
            output_path = Path(custom_path)
        else:
            safe_name = "".join(c for c in name if c.isalnum() or c in ('-', '_'))
            output_path = self.base_output_dir / f"{safe_name}.{output_format}"
        output_path.parent.mkdir(parents=True, exist_ok=True)
        output_path.write_text(content, encoding='utf-8')
        return output_path


def load_summary(path: Union[str, Path]) -> Dict[str, Any]:
    """Read summary.json from a file or an experiment directory."""
    path = Path(path)
    if path.is_dir():
        path = path / 'summary.json'
    try:
        return json.loads(path.read_text(encoding='utf-8'))
    except FileNotFoundError:
        raise FormatError(f"No summary at {path}")
    except json.JSONDecodeError as e:
        raise FormatError(f"Summary {path} is not valid JSON: {e}")


# Global formatter instances for easy access
report_formatter = ReportFormatter()
markdown_formatter = MarkdownFormatter()
json_formatter = JSONFormatter()
file_manager = OutputFileManager()
