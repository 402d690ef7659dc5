"""Deterministic text exports: patterns, schedules, sweeps, run summaries.

Floats are rendered with %.17g (shortest exact round-trip for doubles), rows
are emitted in a fixed order, and files always use "\n" line endings, so a
rerun with identical inputs reproduces every file byte for byte.
"""

import json

import numpy as np

from .fields import HarmonicPattern, power_db
from .modulation import PulseSchedule

DB_FLOOR = -400.0


def format_float(x) -> str:
    return "%.17g" % float(x)


def _write_text(path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def write_pattern_csv(path, pattern: HarmonicPattern, reference: float) -> None:
    """Power pattern over the full grid, one row per (u, v) node.

    Rows are row-major in (u, v); invisible nodes carry zero power and are
    flagged by the visible column. power_db is relative to the reference and
    floored at DB_FLOOR.
    """
    grid = pattern.grid
    power = pattern.power
    db = power_db(power, reference, floor_db=DB_FLOOR)
    vis = grid.visible
    lines = [
        f"# harmonic: {pattern.harmonic}",
        f"# omega_rad_s: {format_float(pattern.omega_rad_s)}",
        f"# reference_power: {format_float(reference)}",
        f"# db_floor: {format_float(DB_FLOOR)}",
        "u,v,visible,power_linear,power_db",
    ]
    for iu in range(grid.u.size):
        su = format_float(grid.u[iu])
        for iv in range(grid.v.size):
            lines.append(",".join((
                su,
                format_float(grid.v[iv]),
                "1" if vis[iu, iv] else "0",
                format_float(power[iu, iv]),
                format_float(db[iu, iv]),
            )))
    _write_text(path, "\n".join(lines) + "\n")


def write_schedule_csv(path, schedule: PulseSchedule) -> None:
    """Per-cell pulse parameters, one row per cell, row-major, 1-based."""
    p, q = schedule.shape
    lines = [
        f"# rows: {p}",
        f"# cols: {q}",
        f"# period_s: {format_float(schedule.period_s)}",
        "p,q,rise,duty",
    ]
    for i in range(p):
        for j in range(q):
            lines.append(",".join((
                str(i + 1), str(j + 1),
                format_float(schedule.rise[i, j]),
                format_float(schedule.duty[i, j]),
            )))
    _write_text(path, "\n".join(lines) + "\n")


def read_schedule_csv(path) -> PulseSchedule:
    period_s = None
    rows = cols = None
    entries = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                key = key.strip()
                if key == "rows":
                    rows = int(value)
                elif key == "cols":
                    cols = int(value)
                elif key == "period_s":
                    period_s = float(value)
                continue
            if line.startswith("p,"):
                continue
            p_s, q_s, rise_s, duty_s = line.split(",")
            entries[(int(p_s) - 1, int(q_s) - 1)] = (float(rise_s), float(duty_s))
    if rows is None or cols is None or period_s is None:
        raise ValueError(f"{path} is missing rows/cols/period_s headers")
    if len(entries) != rows * cols:
        raise ValueError(f"{path} holds {len(entries)} cells, expected {rows * cols}")
    rise = np.empty((rows, cols))
    duty = np.empty((rows, cols))
    for (i, j), (r, d) in entries.items():
        rise[i, j] = r
        duty[i, j] = d
    return PulseSchedule(period_s=period_s, rise=rise, duty=duty)


def write_convergence_csv(path, history) -> None:
    history = np.asarray(history, dtype=float)
    lines = ["iteration,best_cost"]
    for i, value in enumerate(history):
        lines.append(f"{i},{format_float(value)}")
    _write_text(path, "\n".join(lines) + "\n")


_SWEEP_COLUMNS = "kind,angle_deg,phi,xi,p_sigma,p_delta,floored,iterations,stop_reason,source"


def write_sweep_csv(path, samples, vary: str) -> None:
    """Sweep or localization samples plus one trailing best-sample summary row."""
    lines = [f"# vary: {vary}", _SWEEP_COLUMNS]

    def row(kind, s, iterations, stop_reason, source):
        return ",".join((
            kind,
            format_float(s.angle_deg),
            format_float(s.phi),
            format_float(s.xi),
            format_float(s.p_sigma),
            format_float(s.p_delta),
            "1" if s.floored else "0",
            str(iterations),
            stop_reason,
            source,
        ))

    for s in samples:
        lines.append(row("sample", s, s.iterations, s.stop_reason, s.source))
    scored = [s for s in samples if s.source != "skipped"]
    if scored:
        best = min(scored, key=lambda s: (-s.xi, s.angle_deg))
        total_iters = sum(s.iterations for s in samples)
        lines.append(row("summary", best, total_iters, "", "argmax_xi"))
    _write_text(path, "\n".join(lines) + "\n")


def _jsonable(obj):
    """Strict-JSON copy: non-finite floats become strings, arrays become lists."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else format_float(v)
    return obj


def write_json(path, payload: dict) -> None:
    text = json.dumps(_jsonable(payload), sort_keys=True, indent=2, allow_nan=False)
    _write_text(path, text + "\n")
