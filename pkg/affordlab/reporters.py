"""
Result reporting and visualization utilities
"""

import csv
import json
import time
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import matplotlib
matplotlib.use('Agg')
matplotlib.rcParams['svg.hashsalt'] = 'affordlab'
import matplotlib.pyplot as plt  # noqa: E402


class BaseReporter:
    """Base class for run reporters"""

    def __init__(self):
        self.start_time: Optional[float] = None
        self.end_time: Optional[float] = None
        self.title = "Run"

    def start_reporting(self, title: str = "Run"):
        """Called when a command starts"""
        self.title = title
        self.start_time = time.time()

    def end_reporting(self):
        """Called when a command ends"""
        self.end_time = time.time()

    @property
    def duration(self) -> float:
        if self.start_time is None:
            return 0.0
        return (self.end_time or time.time()) - self.start_time

    def report_metrics(self, metrics: Dict[str, Any]):
        """Report final metrics; ``metrics['rows']`` holds tabular results"""
        raise NotImplementedError

    def report_progress(self, elapsed_time: float, metrics: Dict[str, Any]):
        """Report progress during a long-running step"""
        pass


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value)


def format_rows(rows: Sequence[Dict[str, Any]]) -> str:
    """Fixed-width text table over the union of row keys"""
    if not rows:
        return "(no rows)"
    columns: List[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    cells = [[_format_value(row.get(c, "")) for c in columns] for row in rows]
    widths = [max(len(c), *(len(r[i]) for r in cells)) for i, c in enumerate(columns)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(columns, widths)),
             "  ".join("-" * w for w in widths)]
    lines.extend("  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in cells)
    return "\n".join(lines)


class ConsoleReporter(BaseReporter):
    """Reporter that prints progress and results to the console"""

    def __init__(self, show_progress: bool = True, progress_interval: float = 10.0):
        super().__init__()
        self.show_progress = show_progress
        self.progress_interval = progress_interval
        self.last_progress_time = 0.0

    def start_reporting(self, title: str = "Run"):
        super().start_reporting(title)
        print(f"🚀 {title} started...")
        print("=" * 60)

    def end_reporting(self):
        super().end_reporting()
        print("=" * 60)
        print(f"✅ {self.title} completed in {self.duration:.2f} seconds")

    def report_metrics(self, metrics: Dict[str, Any]):
        print("\n📊 Final Results")
        print("=" * 40)
        for key, value in metrics.items():
            if key == 'rows':
                continue
            print(f"{key + ':':<22}{_format_value(value)}")
        if metrics.get('rows'):
            print()
            print(format_rows(metrics['rows']))

        rate = metrics.get('success_rate')
        if rate is not None:
            if rate >= 95:
                print("🟢 Plan Status: EXCELLENT")
            elif rate >= 90:
                print("🟡 Plan Status: GOOD")
            elif rate >= 80:
                print("🟠 Plan Status: FAIR")
            else:
                print("🔴 Plan Status: POOR")

    def report_progress(self, elapsed_time: float, metrics: Dict[str, Any]):
        if not self.show_progress:
            return
        now = time.time()
        if now - self.last_progress_time < self.progress_interval:
            return
        self.last_progress_time = now
        parts = " | ".join(f"{k}: {_format_value(v)}" for k, v in metrics.items())
        print(f"⏱️  {elapsed_time:.0f}s | {parts}")


class CSVReporter(BaseReporter):
    """Writes ``metrics['rows']`` as a CSV table"""

    def __init__(self, output_file: Union[str, Path], fieldnames: Optional[Sequence[str]] = None,
                 announce: bool = True):
        super().__init__()
        self.output_file = Path(output_file)
        self.fieldnames = list(fieldnames) if fieldnames else None
        self.announce = announce

    def report_metrics(self, metrics: Dict[str, Any]):
        rows = metrics.get('rows', [])
        fieldnames = self.fieldnames
        if fieldnames is None:
            fieldnames = []
            for row in rows:
                fieldnames.extend(k for k in row if k not in fieldnames)
        self.output_file.parent.mkdir(parents=True, exist_ok=True)
        with open(self.output_file, 'w', newline='', encoding='utf-8') as f:
            writer = csv.DictWriter(f, fieldnames=fieldnames, lineterminator='\n')
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
        if self.announce:
            print(f"📄 Results saved to: {self.output_file}")


class JSONReporter(BaseReporter):
    """Reporter that writes run info, progress and final metrics to JSON"""

    def __init__(self, output_file: Union[str, Path], include_timing: bool = True):
        super().__init__()
        self.output_file = Path(output_file)
        self.include_timing = include_timing
        self.test_data: Dict[str, Any] = {'run_info': {}, 'progress': [], 'final_metrics': {}}

    def start_reporting(self, title: str = "Run"):
        super().start_reporting(title)
        self.test_data['run_info'] = {'title': title}
        if self.include_timing:
            self.test_data['run_info']['start_time'] = datetime.fromtimestamp(self.start_time).isoformat()

    def end_reporting(self):
        super().end_reporting()
        if self.include_timing:
            self.test_data['run_info'].update({
                'end_time': datetime.fromtimestamp(self.end_time).isoformat(),
                'duration_seconds': self.end_time - self.start_time,
            })

    def report_metrics(self, metrics: Dict[str, Any]):
        self.test_data['final_metrics'] = metrics
        self.output_file.parent.mkdir(parents=True, exist_ok=True)
        with open(self.output_file, 'w', encoding='utf-8') as f:
            json.dump(self.test_data, f, indent=2, sort_keys=True)
        print(f"📄 Results saved to: {self.output_file}")

    def report_progress(self, elapsed_time: float, metrics: Dict[str, Any]):
        entry = {'metrics': dict(metrics)}
        if self.include_timing:
            entry['elapsed_time'] = elapsed_time
        self.test_data['progress'].append(entry)


class SVGChartReporter(BaseReporter):
    """Grouped bar chart of success rate per inventory size.

    Rows need ``size`` and ``success_rate`` (percent); bars are grouped by
    ``group_key`` (default ``model``).
    """

    def __init__(self, output_file: Union[str, Path], group_key: str = 'model',
                 title: str = "Plan success rate"):
        super().__init__()
        self.output_file = Path(output_file)
        self.group_key = group_key
        self.chart_title = title

    def report_metrics(self, metrics: Dict[str, Any]):
        rows = metrics.get('rows', [])
        groups: Dict[str, Dict[int, float]] = {}
        for row in rows:
            groups.setdefault(str(row.get(self.group_key, 'all')), {})[int(row['size'])] = float(row['success_rate'])
        sizes = sorted({size for values in groups.values() for size in values})

        fig, ax = plt.subplots(figsize=(7.0, 4.0))
        width = 0.8 / max(1, len(groups))
        for i, (name, values) in enumerate(sorted(groups.items())):
            xs = [j + (i - (len(groups) - 1) / 2) * width for j in range(len(sizes))]
            ax.bar(xs, [values.get(s, 0.0) for s in sizes], width=width, label=name)
        ax.set_xticks(range(len(sizes)))
        ax.set_xticklabels([str(s) for s in sizes])
        ax.set_xlabel("Inventory size")
        ax.set_ylabel("Success rate (%)")
        ax.set_ylim(0, 105)
        ax.set_title(self.chart_title)
        if groups:
            ax.legend()
        self.output_file.parent.mkdir(parents=True, exist_ok=True)
        # no timestamp in the SVG
        fig.savefig(self.output_file, format='svg', bbox_inches='tight', metadata={'Date': None})
        plt.close(fig)
        print(f"📊 Chart saved to: {self.output_file}")


class MultiReporter(BaseReporter):
    """Reporter that fans out to several reporters"""

    def __init__(self, reporters: List[BaseReporter]):
        super().__init__()
        self.reporters = reporters

    def start_reporting(self, title: str = "Run"):
        super().start_reporting(title)
        for reporter in self.reporters:
            reporter.start_reporting(title)

    def end_reporting(self):
        super().end_reporting()
        for reporter in self.reporters:
            reporter.end_reporting()

    def report_metrics(self, metrics: Dict[str, Any]):
        for reporter in self.reporters:
            reporter.report_metrics(metrics)

    def report_progress(self, elapsed_time: float, metrics: Dict[str, Any]):
        for reporter in self.reporters:
            reporter.report_progress(elapsed_time, metrics)
