"""
Static run reports: line-delimited metric records, an HTML and an XLSX
comparison table, and matplotlib figures.
"""
import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
from jinja2 import Environment, PackageLoader, select_autoescape  # noqa: E402
from openpyxl import Workbook, load_workbook  # noqa: E402
from openpyxl.styles import Font  # noqa: E402

from ..models import CLASS_NAMES, DEFAULT_PALETTE, DepthMetrics, SegMetrics  # noqa: E402

logger = logging.getLogger(__name__)

SUMMARY_NAME = 'summary.jsonl'
HTML_NAME = 'comparison.html'
XLSX_NAME = 'comparison.xlsx'
IOU_PLOT_NAME = 'per_class_iou.png'
ERROR_HIST_NAME = 'depth_error_hist.png'
DEPTH_FIELDS = ('rmse', 'abs_rel', 'delta1', 'delta2', 'delta3', 'median_abs_rel')
SEG_FIELDS = ('miou', 'pixel_accuracy')
IOU_PREFIX = 'iou/'


@dataclass
class RunMetrics:
    """Metrics of one evaluated run as rendered in a report"""
    run_id: str
    dataset: str = ''
    split: str = 'test'
    depth: Optional[DepthMetrics] = None
    seg: Optional[SegMetrics] = None
    class_names: Sequence[str] = CLASS_NAMES
    relative_errors: Optional[np.ndarray] = None
    extra: Dict[str, float] = field(default_factory=dict)

    def records(self) -> List[Dict]:
        """One summary record per metric"""
        base = {'run_id': self.run_id, 'dataset': self.dataset, 'split': self.split}
        rows = []
        if self.depth is not None:
            for name in DEPTH_FIELDS:
                rows.append(dict(base, metric=name, value=getattr(self.depth, name)))
        if self.seg is not None:
            for name in SEG_FIELDS:
                rows.append(dict(base, metric=name, value=getattr(self.seg, name)))
            for index, value in sorted(self.seg.per_class_iou.items()):
                rows.append(dict(base, metric=f"{IOU_PREFIX}{self._class_name(index)}", value=value))
        for name, value in sorted(self.extra.items()):
            rows.append(dict(base, metric=name, value=value))
        return rows

    def _class_name(self, index: int) -> str:
        return self.class_names[index] if index < len(self.class_names) else str(index)


def _json_value(value):
    if value is None:
        return None
    value = float(value)
    return None if math.isnan(value) else value


def write_summary(runs: Sequence[RunMetrics], path: str) -> str:
    with open(path, 'w') as handle:
        for run in runs:
            for record in run.records():
                record['value'] = _json_value(record['value'])
                handle.write(json.dumps(record, sort_keys=True) + '\n')
    return path


def load_report(out_dir: str) -> List[RunMetrics]:
    """Parse summary.jsonl back into RunMetrics, in first-seen run order"""
    path = out_dir if out_dir.endswith('.jsonl') else os.path.join(out_dir, SUMMARY_NAME)
    grouped: Dict[str, Dict] = {}
    with open(path) as handle:
        for line in handle:
            if not line.strip():
                continue
            record = json.loads(line)
            entry = grouped.setdefault(record['run_id'], {
                'dataset': record['dataset'], 'split': record['split'], 'values': {}, 'order': [],
            })
            entry['values'][record['metric']] = record['value']
            entry['order'].append(record['metric'])

    runs = []
    for run_id, entry in grouped.items():
        values = entry['values']
        nan = float('nan')
        depth = None
        if all(name in values for name in DEPTH_FIELDS[:5]):
            depth = DepthMetrics(**{name: nan if values.get(name) is None else values[name]
                                    for name in DEPTH_FIELDS if name in values})
        seg = None
        class_names = []
        if 'miou' in values:
            per_class = {}
            for metric in entry['order']:
                if metric.startswith(IOU_PREFIX):
                    class_names.append(metric[len(IOU_PREFIX):])
                    per_class[len(per_class)] = values[metric]
            seg = SegMetrics(per_class_iou=per_class,
                             miou=nan if values['miou'] is None else values['miou'],
                             pixel_accuracy=nan if values.get('pixel_accuracy') is None else values['pixel_accuracy'])
        known = set(DEPTH_FIELDS) | set(SEG_FIELDS)
        extra = {k: v for k, v in values.items() if k not in known and not k.startswith(IOU_PREFIX)}
        runs.append(RunMetrics(run_id=run_id, dataset=entry['dataset'], split=entry['split'], depth=depth,
                               seg=seg, class_names=tuple(class_names) or CLASS_NAMES, extra=extra))
    return runs


# ============================================================================
# TABLES
# ============================================================================

def _table_rows(runs: Sequence[RunMetrics]):
    class_names: List[str] = []
    for run in runs:
        if run.seg is not None:
            for index in sorted(run.seg.per_class_iou):
                name = run._class_name(index)
                if name not in class_names:
                    class_names.append(name)
    rows = []
    for run in runs:
        row = {'run_id': run.run_id, 'dataset': run.dataset, 'split': run.split}
        for name in DEPTH_FIELDS:
            row[name] = getattr(run.depth, name) if run.depth is not None else None
        for name in SEG_FIELDS:
            row[name] = getattr(run.seg, name) if run.seg is not None else None
        per_class = {}
        if run.seg is not None:
            per_class = {run._class_name(i): v for i, v in run.seg.per_class_iou.items()}
        row['classes'] = [per_class.get(name) for name in class_names]
        rows.append(row)
    return class_names, rows


def _environment() -> Environment:
    environment = Environment(loader=PackageLoader('aerodepth', 'templates'),
                              autoescape=select_autoescape(['html']))
    environment.filters['metric'] = lambda v: '' if v is None or (isinstance(v, float) and math.isnan(v)) \
        else repr(float(v))
    return environment


def write_html(runs: Sequence[RunMetrics], path: str, title: str = 'Run comparison') -> str:
    class_names, rows = _table_rows(runs)
    html = _environment().get_template('report.html').render(
        title=title, depth_fields=DEPTH_FIELDS, seg_fields=SEG_FIELDS, class_names=class_names, rows=rows,
    )
    with open(path, 'w') as handle:
        handle.write(html)
    return path


def write_xlsx(runs: Sequence[RunMetrics], path: str) -> str:
    class_names, rows = _table_rows(runs)
    workbook = Workbook()
    sheet = workbook.active
    sheet.title = 'comparison'
    header = ['run_id', 'dataset', 'split', *DEPTH_FIELDS, *SEG_FIELDS, *[f"{IOU_PREFIX}{n}" for n in class_names]]
    sheet.append(header)
    for cell in sheet[1]:
        cell.font = Font(bold=True)
    for row in rows:
        values = [row['run_id'], row['dataset'], row['split'],
                  *[row[n] for n in DEPTH_FIELDS], *[row[n] for n in SEG_FIELDS], *row['classes']]
        sheet.append([_json_value(v) if isinstance(v, (int, float)) and not isinstance(v, bool) else v
                      for v in values])
    workbook.save(path)
    return path


def read_xlsx(path: str) -> List[Dict]:
    sheet = load_workbook(path, read_only=True).active
    rows = list(sheet.iter_rows(values_only=True))
    if not rows:
        return []
    header = rows[0]
    return [dict(zip(header, row)) for row in rows[1:]]


# ============================================================================
# FIGURES
# ============================================================================

def plot_per_class_iou(runs: Sequence[RunMetrics], path: str) -> str:
    class_names, rows = _table_rows([r for r in runs if r.seg is not None])
    figure, axis = plt.subplots(figsize=(max(6, len(class_names) * 0.9), 4))
    width = 0.8 / max(len(rows), 1)
    positions = np.arange(len(class_names))
    for k, row in enumerate(rows):
        heights = [0.0 if v is None else v for v in row['classes']]
        axis.bar(positions + k * width, heights, width, label=row['run_id'])
    axis.set_xticks(positions + width * (len(rows) - 1) / 2 if rows else positions)
    axis.set_xticklabels(class_names, rotation=30, ha='right')
    axis.set_ylim(0, 1)
    axis.set_ylabel('IoU')
    if rows:
        axis.legend(fontsize='small')
    figure.tight_layout()
    figure.savefig(path, dpi=100)
    plt.close(figure)
    return path


def plot_depth_error_histogram(runs: Sequence[RunMetrics], path: str, bins: int = 50) -> str:
    figure, axis = plt.subplots(figsize=(6, 4))
    with_errors = [r for r in runs if r.relative_errors is not None and len(r.relative_errors)]
    upper = max([float(np.percentile(r.relative_errors, 99)) for r in with_errors] or [1.0])
    for run in with_errors:
        axis.hist(np.clip(run.relative_errors, 0, upper), bins=bins, range=(0, upper), histtype='step',
                  density=True, label=run.run_id)
    axis.set_xlabel('|d_hat - d| / d')
    axis.set_ylabel('density')
    if with_errors:
        axis.legend(fontsize='small')
    figure.tight_layout()
    figure.savefig(path, dpi=100)
    plt.close(figure)
    return path


def save_prediction_grid(path: str, rows: Sequence[Dict], max_depth: float, palette=DEFAULT_PALETTE) -> str:
    """One row per frame: RGB, GT depth, predicted depth, GT classes, predicted classes"""
    columns = [('rgb', 'RGB'), ('gt_depth', 'GT depth'), ('pred_depth', 'depth'),
               ('gt_seg', 'GT classes'), ('pred_seg', 'classes')]
    colors = np.asarray(palette, dtype=np.uint8)
    figure, axes = plt.subplots(len(rows), len(columns), figsize=(2.2 * len(columns), 2.2 * len(rows)),
                                squeeze=False)
    for r, row in enumerate(rows):
        for c, (key, title) in enumerate(columns):
            axis = axes[r][c]
            axis.axis('off')
            value = row.get(key)
            if value is None:
                continue
            if key.endswith('depth'):
                axis.imshow(np.minimum(value, max_depth), cmap='magma_r', vmin=0, vmax=max_depth)
            elif key.endswith('seg'):
                axis.imshow(colors[np.clip(value, 0, len(colors) - 1)])
            else:
                axis.imshow(value)
            if r == 0:
                axis.set_title(title, fontsize='small')
    figure.tight_layout()
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    figure.savefig(path, dpi=100)
    plt.close(figure)
    return path


class ReportService:
    """Writes every report artifact for a set of runs into one directory"""

    def __init__(self, app=None):
        self.app = app
        self.title = 'Run comparison'

        if app:
            self.init_app(app)

    def init_app(self, app):
        self.app = app
        self.title = app.config.get('REPORT_TITLE', self.title)

    def emit_report(self, runs: Sequence[RunMetrics], out_dir: str) -> Dict[str, str]:
        """
        Returns:
            Mapping artifact name -> path
        """
        os.makedirs(out_dir, exist_ok=True)
        outputs = {
            'summary': write_summary(runs, os.path.join(out_dir, SUMMARY_NAME)),
            'html': write_html(runs, os.path.join(out_dir, HTML_NAME), self.title),
            'xlsx': write_xlsx(runs, os.path.join(out_dir, XLSX_NAME)),
            'per_class_iou': plot_per_class_iou(runs, os.path.join(out_dir, IOU_PLOT_NAME)),
            'depth_error_hist': plot_depth_error_histogram(runs, os.path.join(out_dir, ERROR_HIST_NAME)),
        }
        logger.info(f"Wrote report for {len(runs)} runs to {out_dir}")
        return outputs


report_service = ReportService()
