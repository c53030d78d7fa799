"""Online availability forecasting for cord-approx.

Maintains a corpus of hourly per-cell parking success ratios, builds
time-of-day / weekday / cell / trend features, fits closed-form ridge
regression (intercept unpenalized) with deterministic cross-validated
regularization, and serves predictions clamped to [0.01, 1].
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SchemaError, SingularityError, ValidationError

BUCKET_MINUTES = 60
CLAMP_LO = 0.01
DEFAULT_LAMBDA_GRID = (0.01, 0.1, 1.0, 10.0, 100.0)
TREND_BUCKETS = 3
TREND_DEFAULT = 0.5


@dataclass
class HistoryRecord:
    cell: int
    bucket_start: int  # absolute minutes from corpus epoch
    rho: float
    attempts: int = 0


@dataclass
class HistoryCorpus:
    """Observed success ratios per (cell, hour bucket)."""

    n_cells: int
    base_weekday: int = 0
    records: list[HistoryRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def trend(self, cell: int, bucket_start: int) -> float:
        """Mean rho of the cell over the trailing TREND_BUCKETS buckets
        strictly before bucket_start; TREND_DEFAULT when nothing is there."""
        lo = bucket_start - TREND_BUCKETS * BUCKET_MINUTES
        vals = [r.rho for r in self.records
                if r.cell == cell and lo <= r.bucket_start < bucket_start]
        return float(np.mean(vals)) if vals else TREND_DEFAULT

    def trend_vector(self, bucket_start: int) -> np.ndarray:
        """Per-cell trailing trend for one bucket, vectorized over cells."""
        lo = bucket_start - TREND_BUCKETS * BUCKET_MINUTES
        sums = np.zeros(self.n_cells)
        counts = np.zeros(self.n_cells)
        for r in self.records:
            if lo <= r.bucket_start < bucket_start:
                sums[r.cell] += r.rho
                counts[r.cell] += 1
        out = np.full(self.n_cells, TREND_DEFAULT)
        hit = counts > 0
        out[hit] = sums[hit] / counts[hit]
        return out


@dataclass
class RidgeModel:
    coefficients: np.ndarray
    intercept: float
    lam: float
    schema: str

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if self.lam < 0:
            raise ConfigError("lambda must be >= 0")


def feature_schema(n_cells: int) -> str:
    return f"tod2+wd7+cell{n_cells}+trend1"


def feature_dim(n_cells: int) -> int:
    return 2 + 7 + n_cells + 1


def build_features(
    cells: np.ndarray,
    bucket_starts: np.ndarray,
    trends: np.ndarray,
    n_cells: int,
    base_weekday: int = 0,
) -> np.ndarray:
    """Feature rows: cyclical time of day, weekday one-hot, cell one-hot, trend."""
    cells = np.asarray(cells, dtype=np.int64)
    bucket_starts = np.asarray(bucket_starts, dtype=np.int64)
    if (cells < 0).any() or (cells >= n_cells).any():
        raise SchemaError(f"cell index outside schema range 0..{n_cells - 1}")
    m = len(cells)
    x = np.zeros((m, feature_dim(n_cells)))
    minute_of_day = bucket_starts % 1440
    theta = 2.0 * np.pi * minute_of_day / 1440.0
    x[:, 0] = np.sin(theta)
    x[:, 1] = np.cos(theta)
    weekday = (bucket_starts // 1440 + base_weekday) % 7
    x[np.arange(m), 2 + weekday] = 1.0
    x[np.arange(m), 9 + cells] = 1.0
    x[:, -1] = trends
    return x


def corpus_design(corpus: HistoryCorpus) -> tuple[np.ndarray, np.ndarray]:
    """(X, y) over the whole corpus, trend computed per record.

    Trends use a per-cell sliding window over bucket-sorted records, so this
    stays linear in corpus size (corpus.trend is the per-record contract).
    """
    recs = corpus.records
    cells = np.array([r.cell for r in recs], dtype=np.int64)
    starts = np.array([r.bucket_start for r in recs], dtype=np.int64)
    y = np.array([r.rho for r in recs])
    trends = np.full(len(recs), TREND_DEFAULT)
    order = np.lexsort((starts, cells))
    span = TREND_BUCKETS * BUCKET_MINUTES
    i = 0
    while i < len(order):
        j = i
        cell = cells[order[i]]
        while j < len(order) and cells[order[j]] == cell:
            j += 1
        w_lo = w_hi = i
        ssum = 0.0
        for p in range(i, j):
            b = starts[order[p]]
            while w_hi < p and starts[order[w_hi]] < b:
                ssum += y[order[w_hi]]
                w_hi += 1
            while w_lo < w_hi and starts[order[w_lo]] < b - span:
                ssum -= y[order[w_lo]]
                w_lo += 1
            if w_hi > w_lo:
                trends[order[p]] = ssum / (w_hi - w_lo)
        i = j
    x = build_features(cells, starts, trends, corpus.n_cells, corpus.base_weekday)
    return x, y


def fit_ridge(x: np.ndarray, y: np.ndarray, lam: float, schema: str = "raw") -> RidgeModel:
    """Solve the penalized normal equations; the intercept is unpenalized."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.ndim == 1:
        x = x[:, None]
    if len(x) != len(y) or len(y) < 1:
        raise ValidationError("X and y must have the same positive number of rows")
    if lam < 0:
        raise ConfigError("lambda must be >= 0")
    n, p = x.shape
    design = np.hstack([np.ones((n, 1)), x])
    gram = design.T @ design
    penalty = np.zeros(p + 1)
    penalty[1:] = lam
    gram += np.diag(penalty)
    rhs = design.T @ y
    try:
        beta = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError:
        rank = int(np.linalg.matrix_rank(design))
        raise SingularityError(
            f"normal equations singular at lambda={lam}: design rank {rank} < {p + 1}"
        ) from None
    if lam == 0.0 and np.linalg.matrix_rank(design) < p + 1:
        rank = int(np.linalg.matrix_rank(design))
        raise SingularityError(f"normal equations singular at lambda=0: design rank {rank} < {p + 1}")
    return RidgeModel(beta[1:], float(beta[0]), float(lam), schema)


def select_lambda(x: np.ndarray, y: np.ndarray, grid, folds: int) -> float:
    """Grid value minimizing mean fold MSE; ties go to the smaller lambda.

    Deterministic fold split: record index modulo folds.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    grid = list(grid)
    if not grid:
        raise ConfigError("lambda grid must be nonempty")
    if folds < 2:
        raise ConfigError("need at least 2 folds")
    if len(y) < folds:
        raise ConfigError(f"{len(y)} rows is fewer than {folds} folds")
    idx = np.arange(len(y))
    best_lam = None
    best_mse = np.inf
    for lam in grid:
        errs = []
        for fold in range(folds):
            test = idx % folds == fold
            model = fit_ridge(x[~test], y[~test], lam)
            pred = model.intercept + x[test] @ model.coefficients
            errs.append(float(np.mean((y[test] - pred) ** 2)))
        mse = float(np.mean(errs))
        if mse < best_mse or (mse == best_mse and lam < best_lam):
            best_mse, best_lam = mse, lam
    return float(best_lam)


def predict_availability(model: RidgeModel, cell: int, tick: int, corpus: HistoryCorpus) -> float:
    """Clamped availability probability for one cell at one tick."""
    if model.schema != feature_schema(corpus.n_cells):
        raise SchemaError(f"model schema {model.schema!r} does not cover this corpus")
    bucket = (tick // BUCKET_MINUTES) * BUCKET_MINUTES
    trend = corpus.trend(cell, bucket)
    x = build_features([cell], [bucket], [trend], corpus.n_cells, corpus.base_weekday)
    raw = float(model.intercept + x[0] @ model.coefficients)
    return float(min(1.0, max(CLAMP_LO, raw)))


def predict_many(model: RidgeModel, cells: np.ndarray, tick: int, trend_vec: np.ndarray,
                 n_cells: int, base_weekday: int = 0) -> np.ndarray:
    """Vectorized clamped predictions for several cells at one tick."""
    cells = np.asarray(cells, dtype=np.int64)
    if len(cells) and (cells.min() < 0 or cells.max() >= n_cells):
        raise SchemaError(f"cell index outside schema range 0..{n_cells - 1}")
    bucket = (tick // BUCKET_MINUTES) * BUCKET_MINUTES
    x = build_features(cells, np.full(len(cells), bucket), trend_vec[cells], n_cells, base_weekday)
    raw = model.intercept + x @ model.coefficients
    return np.clip(raw, CLAMP_LO, 1.0)


def uniform_model(n_cells: int, p: float = 0.5) -> RidgeModel:
    """Constant-prediction fallback used before any history exists."""
    return RidgeModel(np.zeros(feature_dim(n_cells)), p, 1.0, feature_schema(n_cells))


def update_history(corpus: HistoryCorpus, observations: dict[tuple[int, int], tuple[int, int]]) -> HistoryCorpus:
    """Append rho = successes/attempts per (cell, bucket_start); zero-attempt
    buckets are skipped."""
    for (cell, bucket_start) in sorted(observations):
        attempts, successes = observations[(cell, bucket_start)]
        if attempts < 0 or successes < 0:
            raise ValidationError("counts must be non-negative")
        if successes > attempts:
            raise ValidationError(f"successes {successes} > attempts {attempts}")
        if attempts == 0:
            continue
        corpus.records.append(HistoryRecord(cell, bucket_start, successes / attempts, attempts))
    return corpus


def retrain(
    corpus: HistoryCorpus,
    grid=DEFAULT_LAMBDA_GRID,
    folds: int = 5,
) -> RidgeModel:
    """Fresh fit over the full corpus with cross-validated lambda.

    Empty corpus falls back to the uniform 0.5 prior. Corpora smaller than
    the fold count skip CV and use lambda = 1.0.
    """
    if len(corpus) == 0:
        return uniform_model(corpus.n_cells)
    x, y = corpus_design(corpus)
    if len(y) < folds:
        lam = 1.0
    else:
        lam = select_lambda(x, y, grid, folds)
    return fit_ridge(x, y, lam, schema=feature_schema(corpus.n_cells))


# --- persistence ---

def save_corpus(path, corpus: HistoryCorpus):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("k,bucket_start,rho,attempts\n")
        for r in corpus.records:
            fh.write(f"{r.cell},{r.bucket_start},{r.rho!r},{r.attempts}\n")


def load_corpus(source, n_cells: int, base_weekday: int = 0) -> HistoryCorpus:
    if hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        with open(source, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "k,bucket_start,rho,attempts":
        raise ValidationError("history file must start with header k,bucket_start,rho,attempts")
    corpus = HistoryCorpus(n_cells, base_weekday)
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != 4:
            raise ValidationError(f"line {lineno}: expected 4 fields")
        cell, bucket, rho, attempts = int(parts[0]), int(parts[1]), float(parts[2]), int(parts[3])
        if not (0.0 <= rho <= 1.0):
            raise ValidationError(f"line {lineno}: rho {rho} outside [0, 1]")
        if cell >= n_cells:
            raise SchemaError(f"line {lineno}: cell {cell} outside grid with {n_cells} cells")
        corpus.records.append(HistoryRecord(cell, bucket, rho, attempts))
    return corpus


def save_model(path, model: RidgeModel):
    payload = {
        "schema": model.schema,
        "intercept": model.intercept,
        "lambda": model.lam,
        "beta": model.coefficients.tolist(),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(source) -> RidgeModel:
    if hasattr(source, "read"):
        payload = json.load(source)
    else:
        with open(source, "r", encoding="utf-8") as fh:
            payload = json.load(fh)
    return RidgeModel(np.array(payload["beta"]), payload["intercept"], payload["lambda"], payload["schema"])
