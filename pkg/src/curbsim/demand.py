"""Demand ingestion and generation.

Pipeline: 15-minute traffic-intensity records -> per-cell minute bins
(largest-remainder apportionment) -> participant/competitor arrival series
(error-diffusion share split). synth_demand generates desk-scale series
directly from documented closed-form intensities.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from datetime import datetime

import numpy as np

from .errors import ConfigError, ParseError, ValidationError

INTENSITY_COLS = ("segment_id", "interval_start", "count", "geohash7", "overlap_fraction")
SERIES_COLS = ("cell", "minute", "group", "count")


@dataclass
class IntensityRecord:
    segment_id: str
    interval_start: datetime
    count: int
    cell: int
    overlap_fraction: float


@dataclass
class ArrivalSeries:
    """Integer arrivals per (cell, minute) for each driver group."""

    horizon: int
    participants: dict[tuple[int, int], int] = field(default_factory=dict)
    competitors: dict[tuple[int, int], int] = field(default_factory=dict)

    def total(self, group: str) -> int:
        src = self.participants if group == "participant" else self.competitors
        return sum(src.values())


def parse_intensity(source, label_to_cell=None, strict: bool = True) -> list[IntensityRecord]:
    """Materialize intensity rows; malformed rows are reported with line numbers.

    `label_to_cell` maps geohash labels to cell indices; when None, labels
    must already be integer cell indices. With strict=True the per-segment
    overlap fractions must sum to 1 for each interval.
    """
    if hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise ParseError("empty intensity file")
    delim = "\t" if "\t" in lines[0] else ","
    reader = csv.DictReader(io.StringIO(text), delimiter=delim)
    for col in INTENSITY_COLS:
        if col not in (reader.fieldnames or []):
            raise ParseError(f"intensity file missing column {col!r}")

    records = []
    for lineno, row in enumerate(reader, start=2):
        try:
            ts = datetime.fromisoformat(row["interval_start"])
        except (TypeError, ValueError):
            raise ParseError(f"bad ISO-8601 timestamp {row['interval_start']!r}", line=lineno) from None
        if ts.minute % 15 or ts.second or ts.microsecond:
            raise ParseError(f"timestamp {ts.isoformat()} not 15-minute aligned", line=lineno)
        try:
            count = int(row["count"])
            frac = float(row["overlap_fraction"])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad numeric field: {exc}", line=lineno) from None
        if count < 0:
            raise ValidationError(f"line {lineno}: negative count {count}")
        if not (0.0 < frac <= 1.0):
            raise ValidationError(f"line {lineno}: overlap_fraction {frac} outside (0, 1]")
        label = row["geohash7"]
        if label_to_cell is not None:
            if label not in label_to_cell:
                raise ValidationError(f"line {lineno}: unknown geohash {label!r}")
            cell = label_to_cell[label]
        else:
            try:
                cell = int(label)
            except ValueError:
                raise ValidationError(f"line {lineno}: geohash {label!r} needs a label mapping") from None
        records.append(IntensityRecord(row["segment_id"], ts, count, cell, frac))

    if strict:
        sums: dict[tuple[str, datetime], float] = {}
        for rec in records:
            key = (rec.segment_id, rec.interval_start)
            sums[key] = sums.get(key, 0.0) + rec.overlap_fraction
        for (seg, ts), total in sums.items():
            if abs(total - 1.0) > 1e-6:
                raise ValidationError(
                    f"segment {seg} at {ts.isoformat()}: overlap fractions sum to {total}, not 1"
                )
    return records


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def largest_remainder(total: int, slots: int) -> list[int]:
    """Apportion `total` units over `slots` equal-quota bins; ties go to the
    earliest bins. Sums exactly to total."""
    base, rem = divmod(total, slots)
    return [base + 1 if s < rem else base for s in range(slots)]


def disaggregate(records: list[IntensityRecord], origin: datetime | None = None) -> dict[tuple[int, int], int]:
    """Minute-level counts per cell.

    Each record contributes round(count * overlap_fraction) vehicles, split
    uniformly over its 15 one-minute bins by largest-remainder apportionment.
    Minute indices are offsets from `origin` (default: midnight of the
    earliest record's day).
    """
    out: dict[tuple[int, int], int] = {}
    if not records:
        return out
    if origin is None:
        first = min(r.interval_start for r in records)
        origin = first.replace(hour=0, minute=0, second=0, microsecond=0)
    for rec in records:
        target = _round_half_up(rec.count * rec.overlap_fraction)
        if target == 0:
            continue
        start_min = int((rec.interval_start - origin).total_seconds() // 60)
        if start_min < 0:
            raise ValidationError(f"record at {rec.interval_start} precedes origin {origin}")
        for offset, c in enumerate(largest_remainder(target, 15)):
            if c:
                key = (rec.cell, start_min + offset)
                out[key] = out.get(key, 0) + c
    return out


def split_demand(
    minute_counts: dict[tuple[int, int], int],
    participant_share: float,
    competitor_share: float,
    horizon: int | None = None,
) -> ArrivalSeries:
    """Split per-minute vehicle counts into the two searching groups.

    Fractional per-tick arrivals are carried forward per cell (error
    diffusion), so realized totals track the configured share within one
    vehicle per cell over the horizon.
    """
    if participant_share < 0 or competitor_share < 0:
        raise ConfigError("shares must be non-negative")
    if participant_share + competitor_share > 1.0 + 1e-12:
        raise ConfigError("participant + competitor share must not exceed 1")
    if horizon is None:
        horizon = max((m for (_, m) in minute_counts), default=-1) + 1
    series = ArrivalSeries(horizon)
    if not minute_counts or (participant_share == 0 and competitor_share == 0):
        return series

    by_cell: dict[int, list[tuple[int, int]]] = {}
    for (cell, minute), count in minute_counts.items():
        if minute >= horizon:
            raise ValidationError(f"minute {minute} outside horizon {horizon}")
        by_cell.setdefault(cell, []).append((minute, count))

    for cell in sorted(by_cell):
        for share, dest in (
            (participant_share, series.participants),
            (competitor_share, series.competitors),
        ):
            if share == 0:
                continue
            carry = 0.0
            for minute, count in sorted(by_cell[cell]):
                x = count * share + carry
                n = int(math.floor(x + 1e-9))  # guard exact products against float dust
                carry = x - n
                if n:
                    dest[(cell, minute)] = n
    return series


@dataclass
class SynthSpec:
    """Closed-form synthetic demand.

    Patterns (rate = searching arrivals per cell per minute):
      uniform  rate(k, m) = magnitude
      diurnal  rate(k, m) = magnitude * 0.5 * (1 - cos(2*pi*(m - peak_minute + H/2) / H))
               (peaks at peak_minute, vanishes half a day away; H = horizon)
      hotspot  rate(k, m) = magnitude * exp(-d(k, center) / decay) summed over
               centers, where d is Manhattan distance; stationary in time
               unless rotate_every > 0, in which case exactly one center is
               active at a time and the active index is (m // rotate_every)
               mod len(centers). static_centers, when given, contribute their
               weight at every minute regardless of rotation.

    Realization is deterministic error diffusion per cell and group; the seed
    only places hotspot centers when none are given.
    """

    pattern: str
    n: int
    horizon: int = 1440
    magnitude: float = 1.0
    peak_minute: int = 720
    seed: int = 0
    participant_share: float = 0.015
    competitor_share: float = 0.08
    centers: list[tuple[int, int]] | None = None
    static_centers: list[tuple[int, int]] | None = None
    n_centers: int = 2
    decay: float = 3.0
    rotate_every: int = 0


def _synth_rates(spec: SynthSpec) -> np.ndarray:
    """(cells, minutes) rate array for the documented closed forms."""
    k = spec.n * spec.n
    minutes = np.arange(spec.horizon, dtype=np.float64)
    if spec.pattern == "uniform":
        return np.full((k, spec.horizon), spec.magnitude)
    if spec.pattern == "diurnal":
        phase = 2.0 * np.pi * (minutes - spec.peak_minute + spec.horizon / 2.0) / spec.horizon
        per_min = spec.magnitude * 0.5 * (1.0 - np.cos(phase))
        return np.tile(per_min, (k, 1))
    if spec.pattern == "hotspot":
        centers = spec.centers
        if centers is None:
            gen = np.random.default_rng(np.random.SeedSequence([spec.seed, 0x5E0D]))
            centers = [tuple(int(x) for x in gen.integers(0, spec.n, 2)) for _ in range(spec.n_centers)]
        ii, jj = np.divmod(np.arange(k), spec.n)
        weights = np.stack(
            [np.exp(-(np.abs(ii - ci) + np.abs(jj - cj)) / spec.decay) for ci, cj in centers]
        )
        static = np.zeros(k)
        for ci, cj in spec.static_centers or ():
            static += np.exp(-(np.abs(ii - ci) + np.abs(jj - cj)) / spec.decay)
        if spec.rotate_every > 0:
            active = (minutes.astype(np.int64) // spec.rotate_every) % len(centers)
            return spec.magnitude * (weights[active].T + static[:, None])
        return np.outer(spec.magnitude * (weights.sum(axis=0) + static), np.ones(spec.horizon))
    raise ConfigError(f"unknown demand pattern {spec.pattern!r}")


def synth_demand(spec: SynthSpec) -> ArrivalSeries:
    """Deterministic ArrivalSeries realizing the pattern's closed form.

    Combined arrivals per cell follow the cumulative-floor of the rate (total
    counts exact within rounding); the participant stream then takes its
    share of that integer stream by a second cumulative floor, so group
    totals stay within one vehicle of the configured split per cell.
    """
    rates = _synth_rates(spec)
    total_share = spec.participant_share + spec.competitor_share
    if total_share <= 0:
        return ArrivalSeries(spec.horizon)
    p_frac = spec.participant_share / total_share
    series = ArrivalSeries(spec.horizon)
    for cell in range(rates.shape[0]):
        row = rates[cell]
        if row.sum() <= 0:
            continue
        cum_total = np.floor(np.cumsum(row) + 1e-9).astype(np.int64)
        totals = np.diff(cum_total, prepend=0)
        cum_p = np.floor(cum_total * p_frac + 1e-9).astype(np.int64)
        parts = np.diff(cum_p, prepend=0)
        comps = totals - parts
        for m in np.flatnonzero(parts):
            series.participants[(cell, int(m))] = int(parts[m])
        for m in np.flatnonzero(comps):
            series.competitors[(cell, int(m))] = int(comps[m])
    return series


def scale_series(series: ArrivalSeries, scale: float) -> ArrivalSeries:
    """Multiply arrival counts by `scale`, error-diffused per cell so integer
    totals track the scaled demand. scale=1 returns the series unchanged."""
    if scale < 0:
        raise ConfigError("demand scale must be >= 0")
    if scale == 1.0:
        return series
    out = ArrivalSeries(series.horizon)
    for src, dest in (
        (series.participants, out.participants),
        (series.competitors, out.competitors),
    ):
        by_cell: dict[int, list[tuple[int, int]]] = {}
        for (cell, minute), count in src.items():
            by_cell.setdefault(cell, []).append((minute, count))
        for cell in sorted(by_cell):
            carry = 0.0
            for minute, count in sorted(by_cell[cell]):
                x = count * scale + carry
                n = int(math.floor(x + 1e-9))
                carry = x - n
                if n:
                    dest[(cell, minute)] = n
    return out


def save_series(path, series: ArrivalSeries):
    """Serialize as (cell, minute, group, count) rows."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SERIES_COLS)
        for group, src in (("participant", series.participants), ("competitor", series.competitors)):
            for (cell, minute) in sorted(src):
                writer.writerow([cell, minute, group, src[(cell, minute)]])


def load_series(source) -> ArrivalSeries:
    if hasattr(source, "read"):
        text = source.read()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            text = fh.read()
    reader = csv.DictReader(io.StringIO(text))
    for col in SERIES_COLS:
        if col not in (reader.fieldnames or []):
            raise ParseError(f"series file missing column {col!r}")
    series = ArrivalSeries(0)
    horizon = 0
    for lineno, row in enumerate(reader, start=2):
        try:
            cell, minute, count = int(row["cell"]), int(row["minute"]), int(row["count"])
        except (TypeError, ValueError) as exc:
            raise ParseError(f"bad series row: {exc}", line=lineno) from None
        if count < 0:
            raise ValidationError(f"line {lineno}: negative count")
        group = row["group"]
        if group not in ("participant", "competitor"):
            raise ValidationError(f"line {lineno}: unknown group {group!r}")
        dest = series.participants if group == "participant" else series.competitors
        dest[(cell, minute)] = dest.get((cell, minute), 0) + count
        horizon = max(horizon, minute + 1)
    series.horizon = horizon
    return series
