"""CSV, JSON and self-contained SVG exports of analysis artifacts."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ExportError, InvalidInputError
from .evalanalysis import EvalReport
from .fisher import SensitivityTable
from .training import LossTrace

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")
_W, _H, _M = 640, 480, 56  # canvas and margin


@dataclass
class Embedding2D:
    """A labeled 2-D embedding ready for plotting or CSV export."""

    coords: np.ndarray
    labels: list[str]
    layer: int

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.float64)
        if self.coords.ndim != 2 or self.coords.shape[1] != 2:
            raise InvalidInputError("embedding coords must be (N, 2)")
        if len(self.labels) != self.coords.shape[0]:
            raise InvalidInputError("one label per embedded point required")


def export_report(obj, path, fmt: str):
    """Write ``obj`` to ``path`` in the requested format (csv, json or svg)."""
    fmt = fmt.lower()
    writers = {
        LossTrace: {"csv": _trace_csv, "svg": _trace_svg, "json": _trace_json},
        EvalReport: {"json": _report_json, "csv": _report_samples_csv},
        SensitivityTable: {"csv": _sensitivity_csv, "svg": _sensitivity_svg},
        Embedding2D: {"csv": _embedding_csv, "svg": _embedding_svg},
    }
    for klass, table in writers.items():
        if isinstance(obj, klass):
            if fmt not in table:
                raise InvalidInputError(f"{klass.__name__} cannot be exported as {fmt}")
            return _write(path, table[fmt](obj))
    raise InvalidInputError(f"no exporter for {type(obj).__name__}")


def _write(path, text: str):
    try:
        with open(path, "w", encoding="utf-8") as f:
            f.write(text)
    except OSError as e:
        raise ExportError(f"{path}: {e}") from e


# ---------------------------------------------------------------------------
# CSV / JSON

def _trace_csv(trace: LossTrace) -> str:
    lines = ["iteration,ce_loss,ewc_penalty,total_loss"]
    for r in trace.records:
        lines.append(f"{r.iteration},{r.ce_loss!r},{r.ewc_penalty!r},{r.total_loss!r}")
    return "\n".join(lines) + "\n"


def _trace_json(trace: LossTrace) -> str:
    return json.dumps(trace.meta, sort_keys=True, indent=2) + "\n"


def _report_json(report: EvalReport) -> str:
    return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"


def _report_samples_csv(report: EvalReport) -> str:
    lines = ["a,op,b,truth,prediction"]
    for s in report.samples:
        lines.append(f"{s['a']},{s['op']},{s['b']},{s['truth']},{s['prediction']}")
    return "\n".join(lines) + "\n"


def _sensitivity_csv(table: SensitivityTable) -> str:
    header = "flat_index,layer," + ",".join(f"score_{t}" for t in table.tasks)
    lines = [header]
    for i, idx in enumerate(table.indices):
        scores = ",".join(repr(float(v)) for v in table.scores[i])
        lines.append(f"{idx},{table.layer},{scores}")
    return "\n".join(lines) + "\n"


def _embedding_csv(emb: Embedding2D) -> str:
    lines = ["x,y,label,layer"]
    for (x, y), label in zip(emb.coords, emb.labels):
        lines.append(f"{float(x)!r},{float(y)!r},{label},{emb.layer}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# SVG

def _bounds(values):
    lo, hi = float(min(values)), float(max(values))
    if hi == lo:
        lo, hi = lo - 1.0, hi + 1.0
    return lo, hi


def _scale(v, lo, hi, out_lo, out_hi):
    return out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)


def _svg_open(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W // 2}" y="20" text-anchor="middle" font-size="14" '
        f'font-family="sans-serif">{title}</text>',
        f'<rect x="{_M}" y="{_M}" width="{_W - 2 * _M}" height="{_H - 2 * _M}" '
        f'fill="none" stroke="#999"/>',
    ]


def _axis_labels(xlo, xhi, ylo, yhi) -> list[str]:
    f = lambda v: f"{v:.3g}"
    return [
        f'<text x="{_M}" y="{_H - _M + 16}" font-size="10" font-family="sans-serif">{f(xlo)}</text>',
        f'<text x="{_W - _M}" y="{_H - _M + 16}" text-anchor="end" font-size="10" '
        f'font-family="sans-serif">{f(xhi)}</text>',
        f'<text x="{_M - 4}" y="{_H - _M}" text-anchor="end" font-size="10" '
        f'font-family="sans-serif">{f(ylo)}</text>',
        f'<text x="{_M - 4}" y="{_M + 10}" text-anchor="end" font-size="10" '
        f'font-family="sans-serif">{f(yhi)}</text>',
    ]


def _polyline(xs, ys, xlo, xhi, ylo, yhi, color) -> str:
    pts = " ".join(
        f"{_scale(x, xlo, xhi, _M, _W - _M):.2f},{_scale(y, ylo, yhi, _H - _M, _M):.2f}"
        for x, y in zip(xs, ys)
    )
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'


def _legend(entries) -> list[str]:
    out = []
    for i, (name, color) in enumerate(entries):
        y = _M + 14 + 16 * i
        out.append(f'<rect x="{_W - _M - 110}" y="{y - 9}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{_W - _M - 96}" y="{y}" font-size="11" '
                   f'font-family="sans-serif">{name}</text>')
    return out


def _line_plot(series: dict[str, list[float]], title: str) -> str:
    ys_all = [v for vs in series.values() for v in vs if np.isfinite(v)]
    n = max(len(vs) for vs in series.values())
    xlo, xhi = 0, max(n - 1, 1)
    ylo, yhi = _bounds(ys_all or [0.0])
    parts = _svg_open(title) + _axis_labels(xlo, xhi, ylo, yhi)
    entries = []
    for i, (name, vs) in enumerate(series.items()):
        color = PALETTE[i % len(PALETTE)]
        parts.append(_polyline(range(len(vs)), vs, xlo, xhi, ylo, yhi, color))
        entries.append((name, color))
    parts += _legend(entries)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _scatter_plot(coords, labels, title: str) -> str:
    xlo, xhi = _bounds(coords[:, 0])
    ylo, yhi = _bounds(coords[:, 1])
    order = sorted(dict.fromkeys(labels))
    color_of = {lab: PALETTE[i % len(PALETTE)] for i, lab in enumerate(order)}
    parts = _svg_open(title) + _axis_labels(xlo, xhi, ylo, yhi)
    for (x, y), lab in zip(coords, labels):
        cx = _scale(x, xlo, xhi, _M, _W - _M)
        cy = _scale(y, ylo, yhi, _H - _M, _M)
        parts.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="2.5" fill="{color_of[lab]}" '
                     f'fill-opacity="0.7"/>')
    parts += _legend([(lab, color_of[lab]) for lab in order])
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _trace_svg(trace: LossTrace) -> str:
    return _line_plot({"ce": trace.ce(), "ewc": trace.penalties()},
                      f"loss trace (lambda={trace.meta.get('lambda')})")


def _sensitivity_svg(table: SensitivityTable) -> str:
    series = {t: [float(v) for v in table.scores[:, i]] for i, t in enumerate(table.tasks)}
    return _line_plot(series, f"vital-parameter sensitivity, layer {table.layer}")


def _embedding_svg(emb: Embedding2D) -> str:
    return _scatter_plot(emb.coords, emb.labels, f"parameter-space embedding, layer {emb.layer}")
