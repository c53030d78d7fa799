"""Evaluation metrics and report/export machinery.

Success ratio = parked within budget / resolved spawns (agents still
searching at horizon end are censored and excluded from both numerator and
denominator). Search time averages successful attempts only. Regime deltas
bin agents by the availability fraction at their spawn tick. Zone reports
restrict to parks inside each zone's cells. Undefined quantities (no
spawns, no successes, empty bin) are None, never 0.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .grid import GridSpec

REGIME_BINS = (
    ("low", 0.00, 0.05),
    ("intermediate", 0.20, 0.25),
    ("high", 0.40, 0.45),
)

GROUPS = ("participant", "competitor")
STATUS_PARKED, STATUS_FAILED, STATUS_CENSORED = 0, 1, 2


def _window_mask(outcomes, group_code, window):
    lo, hi = window
    return (
        (outcomes.group == group_code)
        & (outcomes.spawn >= lo)
        & (outcomes.spawn < hi)
    )


def success_ratio(outcomes, group_code: int, window: tuple[int, int]) -> float | None:
    m = _window_mask(outcomes, group_code, window)
    resolved = m & (outcomes.status != STATUS_CENSORED)
    n = int(resolved.sum())
    if n == 0:
        return None
    return float((outcomes.status[resolved] == STATUS_PARKED).sum() / n)


def avg_search_time(outcomes, group_code: int, window: tuple[int, int]) -> float | None:
    m = _window_mask(outcomes, group_code, window) & (outcomes.status == STATUS_PARKED)
    if not m.any():
        return None
    return float(np.mean(outcomes.terminal[m] - outcomes.spawn[m]))


def group_counts(outcomes, group_code: int, window: tuple[int, int]) -> dict:
    m = _window_mask(outcomes, group_code, window)
    return {
        "spawned": int(m.sum()),
        "parked": int((m & (outcomes.status == STATUS_PARKED)).sum()),
        "failed": int((m & (outcomes.status == STATUS_FAILED)).sum()),
        "censored": int((m & (outcomes.status == STATUS_CENSORED)).sum()),
    }


def regime_gap(outcomes, availability: np.ndarray, bins=REGIME_BINS) -> dict[str, float | None]:
    """Participant-minus-competitor success ratio per availability regime.

    Agents are binned by the availability fraction recorded at their spawn
    tick; spawns outside every bin are ignored.
    """
    out: dict[str, float | None] = {}
    for label, lo, hi in bins:
        tick_in = (availability >= lo) & (availability < hi)
        deltas = []
        for code in (0, 1):
            m = (outcomes.group == code) & (outcomes.status != STATUS_CENSORED)
            m &= tick_in[np.clip(outcomes.spawn, 0, len(availability) - 1)]
            n = int(m.sum())
            if n == 0:
                deltas.append(None)
            else:
                deltas.append(float((outcomes.status[m] == STATUS_PARKED).sum() / n))
        if deltas[0] is None or deltas[1] is None:
            out[label] = None
        else:
            out[label] = deltas[0] - deltas[1]
    return out


def zone_report(outcomes, zones: dict[str, list[int]], window: tuple[int, int]) -> dict:
    """Per-zone average search time for each group (parks in the zone only)."""
    out = {}
    for zone_id in sorted(zones):
        members = np.asarray(zones[zone_id], dtype=np.int64)
        row = {}
        for code, name in enumerate(GROUPS):
            m = (
                _window_mask(outcomes, code, window)
                & (outcomes.status == STATUS_PARKED)
                & np.isin(outcomes.park_cell, members)
            )
            row[name] = float(np.mean(outcomes.terminal[m] - outcomes.spawn[m])) if m.any() else None
        out[zone_id] = row
    return out


def hourly_series(outcomes, horizon: int) -> list[dict]:
    rows = []
    for hour in range(horizon // 60):
        window = (hour * 60, (hour + 1) * 60)
        for code, name in enumerate(GROUPS):
            counts = group_counts(outcomes, code, window)
            rows.append(
                {
                    "hour": hour,
                    "group": name,
                    "success_ratio": success_ratio(outcomes, code, window),
                    "avg_search_time": avg_search_time(outcomes, code, window),
                    "n": counts["parked"] + counts["failed"],
                }
            )
    return rows


def build_report(cfg, grid: GridSpec, results) -> dict:
    """Assemble the full multi-run report dict (json-serializable)."""
    window = tuple(cfg.peak_window)
    full = (0, cfg.horizon)
    runs = []
    for res in results:
        o = res.outcomes
        run = {
            "seed": res.seed,
            "peak": {},
            "full_day": {},
            "hourly": hourly_series(o, cfg.horizon),
            "regimes": regime_gap(o, res.availability),
            "zones": zone_report(o, grid.zones(), window),
            "mean_availability": float(res.availability.mean()) if len(res.availability) else None,
        }
        for code, name in enumerate(GROUPS):
            for label, win in (("peak", window), ("full_day", full)):
                run[label][name] = {
                    "success_ratio": success_ratio(o, code, win),
                    "avg_search_time": avg_search_time(o, code, win),
                    **group_counts(o, code, win),
                }
        runs.append(run)

    def _mean(vals):
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    aggregate = {"peak": {}, "full_day": {}, "regimes": {}}
    for name in GROUPS:
        for label in ("peak", "full_day"):
            aggregate[label][name] = {
                "success_ratio": _mean([r[label][name]["success_ratio"] for r in runs]),
                "avg_search_time": _mean([r[label][name]["avg_search_time"] for r in runs]),
            }
    for label, _, _ in REGIME_BINS:
        aggregate["regimes"][label] = _mean([r["regimes"][label] for r in runs])

    return {
        "config": cfg.to_dict(),
        "strategy": cfg.strategy.value,
        "master_seed": cfg.seed,
        "runs": runs,
        "aggregate": aggregate,
    }


# --- exports ---

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def export_series_csv(report: dict, path):
    """hour, strategy, group, success_ratio, avg_search_time, n; multi-run
    reports append per-run success ratio columns after the means."""
    runs = report["runs"]
    multi = len(runs) > 1
    header = ["hour", "strategy", "group", "success_ratio", "avg_search_time", "n"]
    if multi:
        header += [f"success_ratio_r{i}" for i in range(len(runs))]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        if not runs:
            return
        n_rows = len(runs[0]["hourly"])
        for ridx in range(n_rows):
            per_run = [r["hourly"][ridx] for r in runs]
            base = per_run[0]
            ratios = [p["success_ratio"] for p in per_run]
            times = [p["avg_search_time"] for p in per_run]
            mean_ratio = np.mean([x for x in ratios if x is not None]) if any(x is not None for x in ratios) else None
            mean_time = np.mean([x for x in times if x is not None]) if any(x is not None for x in times) else None
            row = [
                base["hour"],
                report["strategy"],
                base["group"],
                _fmt(None if mean_ratio is None else float(mean_ratio)),
                _fmt(None if mean_time is None else float(mean_time)),
                sum(p["n"] for p in per_run),
            ]
            if multi:
                row += [_fmt(x) for x in ratios]
            w.writerow(row)


def export_regimes_csv(report: dict, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["strategy", "bin", "delta"])
        for label, _, _ in REGIME_BINS:
            w.writerow([report["strategy"], label, _fmt(report["aggregate"]["regimes"][label])])


def export_zones_csv(report: dict, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["zone", "group", "avg_search_time"])
        runs = report["runs"]
        if not runs:
            return
        zone_ids = sorted(runs[0]["zones"])
        for zone_id in zone_ids:
            for name in GROUPS:
                vals = [r["zones"][zone_id][name] for r in runs]
                vals = [v for v in vals if v is not None]
                w.writerow([zone_id, name, _fmt(float(np.mean(vals)) if vals else None)])


_RAMP = (
    (0.00, "#1b7e7a"),
    (0.20, "#3fae9f"),
    (0.40, "#9cd3b1"),
    (0.60, "#f3b272"),
    (0.80, "#e8704f"),
    (1.00, "#c8254f"),
)


def _ramp_color(x: float) -> str:
    for stop, color in _RAMP:
        if x <= stop + 1e-9:
            return color
    return _RAMP[-1][1]


def export_heatmap_svg(report: dict, grid: GridSpec, path, group: str = "participant"):
    """Zone-grid (or cell-grid) heatmap of average search time with labels."""
    runs = report["runs"]
    zones = grid.zones()
    cell_px = 64
    if zones:
        ids = sorted(zones)
        vals = {}
        for zid in ids:
            per_run = [r["zones"][zid][group] for r in runs if r["zones"][zid][group] is not None]
            vals[zid] = float(np.mean(per_run)) if per_run else None
        side = int(np.ceil(np.sqrt(len(ids))))
        items = [(zid, vals[zid]) for zid in ids]
    else:
        side = grid.n
        items = [(str(k), None) for k in range(grid.n * grid.n)]
    finite = [v for _, v in items if v is not None]
    vmax = max(finite) if finite else 1.0
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{side * cell_px}" height="{side * cell_px + 24}">',
        f'<text x="4" y="16" font-family="monospace" font-size="12">avg search time (min), {group}</text>',
    ]
    for idx, (label, val) in enumerate(items):
        x = (idx % side) * cell_px
        y = (idx // side) * cell_px + 24
        color = "#dddddd" if val is None else _ramp_color(val / vmax if vmax else 0.0)
        lines.append(
            f'<rect x="{x}" y="{y}" width="{cell_px}" height="{cell_px}" fill="{color}" stroke="#ffffff"/>'
        )
        text = "-" if val is None else f"{val:.1f}"
        lines.append(
            f'<text x="{x + cell_px / 2:.0f}" y="{y + cell_px / 2:.0f}" font-family="monospace" '
            f'font-size="11" text-anchor="middle">{label}: {text}</text>'
        )
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def export_report(report: dict, out_dir, grid: GridSpec, formats=("csv", "svg")):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        export_series_csv(report, out / "series.csv")
        export_regimes_csv(report, out / "regimes.csv")
        export_zones_csv(report, out / "zones.csv")
        written += ["series.csv", "regimes.csv", "zones.csv"]
    if "json" in formats:
        with open(out / "report.json", "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append("report.json")
    if "svg" in formats:
        for group in GROUPS:
            export_heatmap_svg(report, grid, out / f"heatmap_{group}.svg", group)
            written.append(f"heatmap_{group}.svg")
    return written


# --- event-log folding (report reconstruction from events.ndjson) ---

def fold_events(path, t_max: int, horizon: int):
    """Rebuild outcome arrays from an event log; independent of the engine's
    in-memory bookkeeping, used for recount checks and `report`."""
    from .engine import RunOutcomes

    spawns: dict[int, tuple[int, int]] = {}
    terminal: dict[int, tuple[int, int, int]] = {}
    groups = {"participant": 0, "competitor": 1}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            ev = json.loads(line)
            aid = ev["agent_id"]
            if ev["event"] == "spawn":
                spawns[aid] = (groups[ev["group"]], ev["tick"])
            elif ev["event"] == "park":
                terminal[aid] = (STATUS_PARKED, ev["tick"], ev["cell"])
            elif ev["event"] == "fail":
                terminal[aid] = (STATUS_FAILED, ev["tick"], -1)
    rows = []
    for aid, (group, spawn) in sorted(spawns.items()):
        if aid in terminal:
            status, tick, cell = terminal[aid]
            rows.append((group, spawn, status, tick, cell))
        else:
            rows.append((group, spawn, STATUS_CENSORED, -1, -1))
    out = RunOutcomes.from_lists(rows)
    for park_t, spawn_t, status in zip(out.terminal, out.spawn, out.status):
        if status == STATUS_PARKED and park_t - spawn_t > t_max:
            raise ValidationError(f"parked search time {park_t - spawn_t} exceeds budget {t_max}")
    return out
