"""Deterministic text, CSV and gnuplot-data report writers."""
from __future__ import annotations

import csv
import io
import math
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .protocol import TransferVerdict
from .sim import STRATEGIES, DemoReport, Trajectory


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "nan" if math.isnan(value) else format(float(value), ".10g")
    return str(value)


def csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


def dat_text(header: Sequence[str], rows) -> str:
    """Whitespace-separated columns with a ``#`` header, as gnuplot reads them."""
    lines = ["# " + " ".join(header)]
    lines += [" ".join(fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def transfer_report(v: TransferVerdict) -> str:
    lines = [
        "transfer test",
        f"hypothesis: {v.hypothesis}",
        f"alpha: {v.alpha:g}",
        f"phase A sessions: {len(v.phase_a_medians)}",
        f"phase C sessions: {len(v.phase_c_medians)}",
        f"U: {v.u_statistic:g}",
        f"p: {v.p_value:.6g}",
        f"method: {'exact' if v.exact else 'normal approximation'}",
        f"verdict: {v.label}",
    ]
    return "\n".join(lines) + "\n"


def transfer_files(v: TransferVerdict, stem: str = "transfer") -> dict[str, str]:
    rows = [("A", m) for m in v.phase_a_medians] + [("C", m) for m in v.phase_c_medians]
    return {
        "report.txt": transfer_report(v),
        f"{stem}_medians.csv": csv_text(("phase", "median_interval_ms"), rows),
        f"{stem}_intervals.dat": dat_text(("phase_index", "median_interval_ms"),
                                          [(0 if p == "A" else 1, m) for p, m in rows]),
    }


def policy_convergence(traj: Trajectory, window: int = 25) -> tuple:
    """Trailing-window choice frequency of each strategy per episode."""
    chosen = np.array([STRATEGIES.index(r.strategy) for r in traj.records])
    rows = []
    for i in range(len(chosen)):
        recent = chosen[max(0, i - window + 1): i + 1]
        freq = np.bincount(recent, minlength=len(STRATEGIES)) / recent.size
        rows.append((i,) + tuple(float(f) for f in freq))
    return ("episode",) + tuple(s.value for s in STRATEGIES), rows


def trajectory_files(traj: Trajectory, stem: str = "trajectory") -> dict[str, str]:
    header, rows = traj.csv_rows()
    ph, prows = policy_convergence(traj)
    return {f"{stem}.csv": csv_text(header, rows),
            f"{stem}_policy.dat": dat_text(ph, prows)}


def demo_files(rep: DemoReport) -> dict[str, str]:
    files = {"demo_report.txt": rep.text()}
    for name, (header, rows) in sorted(rep.tables.items()):
        files[name] = csv_text(header, rows)
    h1, r1 = rep.tables["demo1_proxy_mismatch.csv"]
    files["demo1_feature_traces.dat"] = dat_text(
        ("state_index", "t_ms", "valence"),
        [(["settled", "wandering", "drowsy", "suppressing"].index(s), t, v) for s, t, v in r1])
    h3, r3 = rep.tables["demo3_sessions.csv"]
    files["demo3_interval_distribution.dat"] = dat_text(
        ("agent_index", "phase", "median_interval_ms"),
        [(0 if row[0] == "device-trained" else 1, row[2], row[5]) for row in r3])
    return files


def write_reports(results: Mapping[str, object], out_dir) -> list[Path]:
    """Write every result into ``out_dir``; returns the file paths, sorted.

    Values may be a :class:`TransferVerdict`, :class:`DemoReport`,
    :class:`Trajectory`, plain text, or a ``(header, rows)`` table (the
    key then names the file).
    """
    if not results:
        raise ValueError("no results to write")
    files: dict[str, str] = {}
    for key, value in results.items():
        if isinstance(value, TransferVerdict):
            files.update(transfer_files(value))
        elif isinstance(value, DemoReport):
            files.update(demo_files(value))
        elif isinstance(value, Trajectory):
            files.update(trajectory_files(value, key))
        elif isinstance(value, str):
            files[key] = value
        elif isinstance(value, tuple) and len(value) == 2:
            files[key] = csv_text(*value)
        else:
            raise TypeError(f"cannot write result {key!r} of type {type(value).__name__}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name in sorted(files):
        p = out / name
        p.write_text(files[name], encoding="utf-8")
        paths.append(p)
    return paths
