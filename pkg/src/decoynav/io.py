"""Deterministic CSV, SVG and manifest writers."""
from __future__ import annotations

import csv
import dataclasses
import io
import math
import os

import numpy as np

from .metrics import MetricRow, TrajectoryRecord

FLOAT_FORMAT = "%.6f"
METRIC_COLUMNS = [f.name for f in dataclasses.fields(MetricRow)]
TRAINING_LOG_COLUMNS = ["episode", "steps", "path_cost", "tau", "mean_real_posterior", "reached_real"]
PURSUIT_COLUMNS = ["scenario_id", "placement_seed", "agent_kind", "captured", "capture_step", "agent_cost", "steps"]


class OutputError(OSError):
    """A file could not be written or read; the message names the path."""


def _fmt(v, float_format=FLOAT_FORMAT) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return float_format % v
    return str(v)


def _as_dict(row) -> dict:
    if dataclasses.is_dataclass(row):
        return dataclasses.asdict(row)
    return dict(row)


def csv_text(rows, columns=None, float_format=FLOAT_FORMAT) -> str:
    """Render rows (dicts or dataclasses) as CSV text with a fixed column order."""
    rows = [_as_dict(r) for r in rows]
    if columns is None:
        if not rows:
            raise ValueError("columns are required for an empty row set")
        columns = list(rows[0])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c], float_format) for c in columns])
    return buf.getvalue()


def _write(path, text: str) -> None:
    try:
        d = os.path.dirname(os.fspath(path))
        if d:
            os.makedirs(d, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def write_text(path, text: str) -> None:
    """Write ``text`` to ``path``, creating parent directories."""
    _write(path, text)


def emit_csv(path, rows, columns=None, float_format=FLOAT_FORMAT) -> None:
    _write(path, csv_text(rows, columns, float_format))


def read_csv(path) -> list:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror or exc}") from exc


def _parse(v: str):
    if v in ("true", "false"):
        return v == "true"
    try:
        return int(v)
    except ValueError:
        pass
    try:
        return float(v)
    except ValueError:
        return v


def read_metric_rows(path) -> list:
    return [MetricRow(**{c: _parse(r[c]) if c not in ("scenario_id", "agent") else r[c] for c in METRIC_COLUMNS})
            for r in read_csv(path)]


# ---------------------------------------------------------------------------
# trajectories


def trajectory_rows(rec: TrajectoryRecord) -> tuple:
    """Per-step rows of a record; floats are written losslessly so metrics can be recomputed."""
    k = rec.posteriors.shape[1]
    cols = ["t", "x", "y", "action", "cum_cost"] + [f"p{i}" for i in range(k)] + [f"r{i}" for i in range(k)]
    rows = []
    for t, s in enumerate(rec.states):
        a = rec.actions[t] if t < len(rec.actions) else None
        row = {"t": t, "x": float(s[0]), "y": float(s[1]), "cum_cost": float(rec.cum_cost[t])}
        if a is None:
            row["action"] = ""
        elif np.ndim(a) == 0:
            row["action"] = str(int(a))
        else:
            row["action"] = " ".join(repr(float(v)) for v in a)
        for i in range(k):
            row[f"p{i}"] = float(rec.posteriors[t, i])
            row[f"r{i}"] = float(rec.rewards[t, i]) if t < len(rec.rewards) else ""
        rows.append(row)
    return rows, cols


def emit_trajectory(path, rec: TrajectoryRecord) -> None:
    rows, cols = trajectory_rows(rec)
    header = f"# scenario={rec.scenario_id} agent={rec.agent} seed={rec.seed} real={rec.real_index} reached={int(rec.reached_real)}\n"
    _write(path, header + csv_text(rows, cols, "%.17g"))


def read_trajectory(path, mode: str = "discrete") -> TrajectoryRecord:
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            header = fh.readline()
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror or exc}") from exc
    meta = dict(kv.split("=", 1) for kv in header[1:].split())
    k = sum(1 for c in rows[0] if c.startswith("p"))
    conv = int if mode == "discrete" else float
    states = [(conv(float(r["x"])), conv(float(r["y"]))) for r in rows]
    actions = []
    for r in rows[:-1]:
        parts = r["action"].split()
        actions.append(int(parts[0]) if len(parts) == 1 else np.array([float(p) for p in parts]))
    return TrajectoryRecord(
        states=states,
        actions=actions,
        rewards=np.array([[float(r[f"r{i}"]) for i in range(k)] for r in rows[:-1]]).reshape(-1, k),
        posteriors=np.array([[float(r[f"p{i}"]) for i in range(k)] for r in rows]),
        cum_cost=np.array([float(r["cum_cost"]) for r in rows]),
        real_index=int(meta["real"]),
        reached_real=meta["reached"] == "1",
        scenario_id=meta["scenario"],
        agent=meta["agent"],
        seed=int(meta["seed"]),
    )


# ---------------------------------------------------------------------------
# SVG


def _svg(width, height, body) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}">\n' + "".join(body) + "</svg>\n")


def heatmap_svg(heatmap: np.ndarray, scn=None, path=None, cell: int = 20) -> str:
    """Grayscale visit counts (darker = more visits), with start, goals and a path overlaid.

    Row ``y`` of the matrix is drawn with ``y`` increasing upward.
    """
    h, w = heatmap.shape
    top = heatmap.max() if heatmap.size and heatmap.max() > 0 else 1
    body = []
    for y in range(h):
        for x in range(w):
            level = 255 - int(round(255 * heatmap[y, x] / top))
            body.append(f'<rect x="{x * cell}" y="{(h - 1 - y) * cell}" width="{cell}" height="{cell}" '
                        f'fill="rgb({level},{level},{level})"/>\n')
    centre = lambda p: ((p[0] + 0.5) * cell, (h - 0.5 - p[1]) * cell)  # noqa: E731
    if scn is not None:
        for (ox, oy) in sorted(scn.map.obstacles):
            body.append(f'<rect x="{ox * cell}" y="{(h - 1 - oy) * cell}" width="{cell}" height="{cell}" fill="#8b0000"/>\n')
        for i, g in enumerate(scn.goal_cells):
            cx, cy = centre(g)
            colour = "#1a9850" if i == scn.candidates.real_index else "#fdae61"
            body.append(f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="{cell * 0.4:.1f}" fill="{colour}"/>\n')
        sx, sy = centre(scn.start_cell)
        body.append(f'<rect x="{sx - cell * 0.3:.1f}" y="{sy - cell * 0.3:.1f}" width="{cell * 0.6:.1f}" '
                    f'height="{cell * 0.6:.1f}" fill="#2166ac"/>\n')
    if path:
        pts = " ".join("%.1f,%.1f" % centre((math.floor(p[0]), math.floor(p[1])) if isinstance(p[0], float) else p)
                       for p in path)
        body.append(f'<polyline points="{pts}" fill="none" stroke="#d73027" stroke-width="{cell * 0.15:.1f}"/>\n')
    return _svg(w * cell, h * cell, body)


def curves_svg(curves: dict, width: int = 480, height: int = 320, pad: int = 30) -> str:
    """Line plot with one polyline per named curve of ``(x, y)`` points."""
    pts = [p for c in curves.values() for p in c if np.isfinite(p[1])]
    if pts:
        xs, ys = zip(*pts)
        x0, x1 = min(xs), max(xs)
        y0, y1 = min(ys), max(ys)
    else:
        x0 = y0 = 0.0
        x1 = y1 = 1.0
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0
    sx = lambda v: pad + (v - x0) / (x1 - x0) * (width - 2 * pad)  # noqa: E731
    sy = lambda v: height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)  # noqa: E731
    palette = ["#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02"]
    body = [f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>\n',
            f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>\n',
            f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>\n']
    for j, (name, c) in enumerate(curves.items()):
        colour = palette[j % len(palette)]
        pts = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in c if np.isfinite(y))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="2"><title>{name}</title></polyline>\n')
        body.append(f'<text x="{width - pad - 90}" y="{pad + 14 * j}" fill="{colour}" font-size="11">{name}</text>\n')
    return _svg(width, height, body)


def emit_svg(path, svg: str) -> None:
    _write(path, svg)


def heatmap_csv(heatmap: np.ndarray) -> str:
    """Count matrix as CSV, first line is row ``y = 0``."""
    return "".join(",".join(str(int(v)) for v in row) + "\n" for row in heatmap)


# ---------------------------------------------------------------------------
# manifest


def manifest_text(entries: dict) -> str:
    return "".join(f"{k}={_fmt(entries[k])}\n" for k in sorted(entries))


def write_manifest(path, entries: dict) -> None:
    _write(path, manifest_text(entries))


def read_manifest(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            return dict(line.rstrip("\n").split("=", 1) for line in fh if "=" in line)
    except OSError as exc:
        raise OutputError(f"cannot read {path}: {exc.strerror or exc}") from exc
