"""Benchmarking protocol: random splits, correction schemes, metrics,
ensemble analyte estimation, and aggregation into plot-ready tables.

Determinism contract: every random draw derives from the root seed plus a
counter path (split id, ensemble round), so any single record can be
reproduced in isolation and results do not depend on worker count or
execution order.
"""

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np

from .errors import (
    ConstantInputError,
    DimensionError,
    ParameterError,
    ZeroReferenceError,
)
from .operators import eigensystem
from .regression import mean_center, pls_fit, pls_predict, select_latent_dim
from .smoothers import AirplsConfig, airpls_baseline, eilers_baseline
from .spbc import SpbcConfig, spbc_i, spbc_n

logger = logging.getLogger(__name__)

METHODS = ("NONE", "EILERS", "AIRPLS", "SPBC_N", "SPBC_I")
SPBC_METHODS = ("SPBC_N", "SPBC_I")
SCHEMES = ("full", "partial")
DEFAULT_LAMBDAS = (1.0, 10.0, 100.0, 1000.0)
DEFAULT_FRACTIONS = (0.45, 0.05, 0.50)


def _rng(seed, *path):
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, path)]))


@lru_cache(maxsize=8)
def _eig(order, n):
    return eigensystem(order, n)


# =========================
# Metrics
# =========================

def mard(y_hat, y):
    """Mean absolute relative difference, in percent."""
    y_hat = np.asarray(y_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    if y_hat.shape != y.shape or y.ndim != 1:
        raise DimensionError(f"shape mismatch: {y_hat.shape} vs {y.shape}")
    zero = np.flatnonzero(y == 0)
    if zero.size:
        raise ZeroReferenceError(zero)
    return float(np.mean(100.0 * np.abs((y_hat - y) / y)))


def pearson_correlation(u, v):
    """Plain Pearson correlation; rejects constant inputs."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape or u.ndim != 1 or u.size < 2:
        raise DimensionError(f"need two equal-length vectors of size >= 2, got {u.shape}, {v.shape}")
    du = u - u.mean()
    dv = v - v.mean()
    su = np.linalg.norm(du)
    sv = np.linalg.norm(dv)
    if su == 0 or sv == 0:
        raise ConstantInputError("correlation is undefined for constant input")
    return float(du @ dv / (su * sv))


def r2(y_hat, y):
    """Squared Pearson correlation between references and predictions."""
    c = pearson_correlation(y_hat, y)
    return c * c


# =========================
# Splits
# =========================

@dataclass(frozen=True)
class SplitPlan:
    seed: int
    m: int
    n_splits: int
    fractions: tuple = DEFAULT_FRACTIONS
    indices: list = field(default_factory=list, repr=False)  # (cal, tune, val) per split


def split_sizes(m, fractions=DEFAULT_FRACTIONS):
    # floor for tuning (clamped to >= 1), round for validation, rest calibrates
    n_tune = max(1, int(np.floor(fractions[1] * m)))
    n_val = int(round(fractions[2] * m))
    n_cal = m - n_tune - n_val
    return n_cal, n_tune, n_val


def make_splits(m, n_splits, seed, fractions=DEFAULT_FRACTIONS):
    """Random calibration/tuning/validation partitions, deterministic in seed."""
    if abs(sum(fractions) - 1.0) > 1e-12:
        raise ParameterError(f"fractions must sum to 1, got {fractions}")
    if m < 10:
        raise DimensionError(f"need m >= 10 for a non-empty tuning set, got m={m}")
    if n_splits < 1:
        raise ParameterError(f"n_splits must be >= 1, got {n_splits}")
    n_cal, n_tune, n_val = split_sizes(m, fractions)
    if n_cal < 2:
        raise DimensionError(f"calibration set would have {n_cal} samples; need >= 2")
    indices = []
    for split_id in range(n_splits):
        perm = _rng(seed, split_id).permutation(m)
        indices.append(
            (perm[:n_cal], perm[n_cal : n_cal + n_tune], perm[n_cal + n_tune :])
        )
    return SplitPlan(seed=int(seed), m=int(m), n_splits=int(n_splits),
                     fractions=tuple(fractions), indices=indices)


# =========================
# Ensemble analyte estimation (partial scheme)
# =========================

def ensemble_estimate_a2(x1, a1, x2, n_rounds=25, subsample=0.80, seed=0, max_lv=10):
    """Estimate unknown analyte values by an ensemble of PLS models.

    Each round fits on a random 80% of the calibration pairs and predicts
    the query spectra; per query sample, estimates outside the Tukey
    interval [Q1 - 1.5 IQR, Q3 + 1.5 IQR] are discarded and the rest
    averaged.  If trimming removes everything for a sample, the untrimmed
    median is used instead (and logged).
    """
    x1 = np.asarray(x1, dtype=float)
    a1 = np.asarray(a1, dtype=float)
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    if x1.shape[0] != a1.shape[0]:
        raise DimensionError("calibration spectra and analyte sizes differ")
    n_sub = max(2, int(np.floor(subsample * x1.shape[0])))
    if n_sub > x1.shape[0]:
        raise DimensionError("calibration set too small to subsample")
    estimates = np.empty((n_rounds, x2.shape[0]))
    for round_id in range(n_rounds):
        rng = _rng(seed, round_id)
        chosen = rng.choice(x1.shape[0], size=n_sub, replace=False)
        xc, ac, mu_x, mu_a = mean_center(x1[chosen], a1[chosen])
        lv = min(max_lv, n_sub - 1, x1.shape[1])
        model = pls_fit(xc, ac, lv, x_mean=mu_x, y_mean=mu_a)
        estimates[round_id] = pls_predict(model, x2, lv)

    q1, q3 = np.percentile(estimates, [25, 75], axis=0)
    iqr = q3 - q1
    keep = (estimates >= q1 - 1.5 * iqr) & (estimates <= q3 + 1.5 * iqr)
    kept_counts = keep.sum(axis=0)
    with np.errstate(invalid="ignore"):
        trimmed_mean = (estimates * keep).sum(axis=0) / np.maximum(kept_counts, 1)
    all_trimmed = kept_counts == 0
    if np.any(all_trimmed):
        logger.warning(
            "ensemble trimming removed every estimate for %d sample(s); "
            "falling back to the untrimmed median", int(all_trimmed.sum())
        )
        trimmed_mean[all_trimmed] = np.median(estimates[:, all_trimmed], axis=0)
    return trimmed_mean


# =========================
# Scheme execution
# =========================

@dataclass(frozen=True)
class SchemeConfig:
    """One benchmark cell: method, penalty, operator order, and (for the
    supervised methods) whether validation analyte values are known."""

    method: str
    lam: float | None = None
    order: int = 1
    scheme: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ParameterError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.order not in (1, 2):
            raise ParameterError(f"order must be 1 or 2, got {self.order}")
        if self.method in SPBC_METHODS:
            if self.scheme not in SCHEMES:
                raise ParameterError(
                    f"SPBC methods need scheme in {SCHEMES}, got {self.scheme!r}"
                )
        elif self.scheme is not None:
            raise ParameterError(f"scheme only applies to SPBC methods, got {self.scheme!r}")
        if self.method == "NONE":
            if self.lam is not None:
                raise ParameterError("NONE takes no penalty value")
        elif self.lam is not None and self.lam <= 0:
            raise ParameterError(
                f"lambda must be positive for {self.method} (lambda=0 reduces the "
                f"corrected spectra to zero), got {self.lam}"
            )


@dataclass(frozen=True)
class MetricsRecord:
    split_id: int
    method: str
    scheme: str | None
    lam: float | None
    order: int
    chosen_lv: int
    mard: float
    r2: float
    failed: bool = False
    error: str = ""

    def key(self):
        return (
            self.split_id,
            self.method,
            self.scheme or "",
            self.lam if self.lam is not None else -1.0,
            self.order,
        )


def _build_baseline(x_stack, a_stack, cfg):
    if cfg.method == "NONE":
        return np.zeros_like(x_stack)
    eig = _eig(cfg.order, x_stack.shape[1])
    if cfg.method == "EILERS":
        return eilers_baseline(x_stack, cfg.lam, eig).baseline
    if cfg.method == "AIRPLS":
        return airpls_baseline(x_stack, AirplsConfig(lam=cfg.lam, order=cfg.order), eig).baseline
    spbc_cfg = SpbcConfig(lam=cfg.lam, order=cfg.order)
    if cfg.method == "SPBC_N":
        return spbc_n(x_stack, a_stack, spbc_cfg, eig).baseline
    return spbc_i(x_stack, a_stack, spbc_cfg, eig).baseline


def run_scheme(x, a, y, cfg, split, max_lv=20, seed=0, split_id=0):
    """Run one (method, lambda, split) cell and score it.

    The baseline is always built from the stacked calibration + tuning +
    validation spectra (the supervised methods are batch methods); the
    partial scheme replaces the tuning and validation analyte values by the
    ensemble estimate before stacking.  The latent dimension comes from the
    tuning-set rank selection, and the returned record scores the
    validation predictions.  Failures come back as a failed record instead
    of raising.
    """
    cal, tune, val = (np.asarray(ix, dtype=int) for ix in split)
    try:
        x = np.asarray(x, dtype=float)
        a = np.asarray(a, dtype=float)
        y = np.asarray(y, dtype=float)
        x_stack = np.vstack([x[cal], x[tune], x[val]])
        if cfg.method in SPBC_METHODS and cfg.scheme == "partial":
            query = np.vstack([x[tune], x[val]])
            a_query = ensemble_estimate_a2(x[cal], a[cal], query, seed=seed)
            a_stack = np.concatenate([a[cal], a_query])
        else:
            a_stack = np.concatenate([a[cal], a[tune], a[val]])
        z = _build_baseline(x_stack, a_stack, cfg)
        corrected = x_stack - z
        n_cal, n_tune = cal.size, tune.size
        x1c = corrected[:n_cal]
        xtc = corrected[n_cal : n_cal + n_tune]
        x2c = corrected[n_cal + n_tune :]

        x1cc, y1c, mu_x, mu_y = mean_center(x1c, y[cal])
        lv_cap = min(max_lv, n_cal - 1, x.shape[1])
        model = pls_fit(x1cc, y1c, lv_cap, x_mean=mu_x, y_mean=mu_y)

        mard_t = np.empty(lv_cap)
        r2_t = np.empty(lv_cap)
        r2_usable = tune.size >= 2
        for lv in range(1, lv_cap + 1):
            yt_hat = pls_predict(model, xtc, lv)
            mard_t[lv - 1] = mard(yt_hat, y[tune])
            if r2_usable:
                try:
                    r2_t[lv - 1] = r2(yt_hat, y[tune])
                except ConstantInputError:
                    r2_usable = False
        if r2_usable:
            chosen = select_latent_dim(mard_t, r2_t).chosen_lv
        else:
            # single-sample or degenerate tuning predictions: rank MARD alone
            chosen = int(np.argmin(mard_t)) + 1
        y2_hat = pls_predict(model, x2c, chosen)
        return MetricsRecord(
            split_id=split_id,
            method=cfg.method,
            scheme=cfg.scheme,
            lam=cfg.lam,
            order=cfg.order,
            chosen_lv=chosen,
            mard=mard(y2_hat, y[val]),
            r2=r2(y2_hat, y[val]),
        )
    except Exception as exc:  # noqa: BLE001 - a failed cell must not kill the sweep
        return MetricsRecord(
            split_id=split_id,
            method=cfg.method,
            scheme=cfg.scheme,
            lam=cfg.lam,
            order=cfg.order,
            chosen_lv=0,
            mard=float("nan"),
            r2=float("nan"),
            failed=True,
            error=f"{type(exc).__name__}: {exc}",
        )


# =========================
# Benchmark sweep
# =========================

@dataclass(frozen=True)
class BoxplotSummary:
    """Middle-80% box statistics (whiskers are the data min/max)."""

    method: str
    scheme: str | None
    lam: float | None
    order: int
    metric: str
    vmin: float
    p10: float
    median: float
    p90: float
    vmax: float


@dataclass(frozen=True)
class BenchmarkReport:
    seed: int
    n_splits: int
    records: list = field(repr=False)
    summaries: list = field(repr=False)
    n_failed: int = 0


def _run_cell(args):
    x, a, y, cfg, split, max_lv, seed, split_id = args
    return run_scheme(x, a, y, cfg, split, max_lv=max_lv, seed=seed, split_id=split_id)


def expand_cells(methods, lambdas):
    """NONE runs once; every other method is crossed with the penalty grid."""
    cells = [SchemeConfig(method="NONE")]
    for cfg in methods:
        if cfg.method == "NONE":
            continue
        for lam in lambdas:
            cells.append(replace(cfg, lam=float(lam)))
    return cells


def run_benchmark(dataset, methods, analyte, response, lambdas=DEFAULT_LAMBDAS,
                  n_splits=200, seed=0, max_lv=20, n_jobs=1):
    """Full methods x lambdas x splits sweep with boxplot aggregation.

    ``methods`` is a list of :class:`SchemeConfig`; their ``lam`` fields are
    ignored in favor of the grid.  A NONE record is always produced per
    split so every method has a paired unsupervised reference.  Failed
    records are counted, excluded from summaries, and kept in the record
    list.
    """
    x = dataset.spectra.values
    a = dataset.analyte(analyte)
    y = dataset.analyte(response)
    if any(lam <= 0 for lam in lambdas):
        raise ParameterError(f"penalty grid must be positive, got {lambdas}")
    plan = make_splits(x.shape[0], n_splits, seed)
    cells = expand_cells(methods, lambdas)
    work = [
        (x, a, y, cfg, plan.indices[split_id], max_lv, seed, split_id)
        for split_id in range(n_splits)
        for cfg in cells
    ]
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            records = list(pool.map(_run_cell, work, chunksize=max(1, len(work) // (4 * n_jobs))))
    else:
        records = [_run_cell(item) for item in work]
    records.sort(key=MetricsRecord.key)
    summaries = summarize(records)
    n_failed = sum(rec.failed for rec in records)
    if n_failed:
        logger.warning("%d of %d benchmark cells failed", n_failed, len(records))
    return BenchmarkReport(
        seed=int(seed), n_splits=int(n_splits), records=records,
        summaries=summaries, n_failed=n_failed,
    )


def summarize(records):
    """Boxplot statistics per (method, scheme, lambda, order) and metric."""
    groups = {}
    for rec in records:
        if rec.failed:
            continue
        groups.setdefault((rec.method, rec.scheme, rec.lam, rec.order), []).append(rec)
    summaries = []
    for (method, scheme, lam, order), recs in sorted(
        groups.items(), key=lambda kv: (kv[0][0], kv[0][1] or "", kv[0][2] or -1.0, kv[0][3])
    ):
        for metric in ("mard", "r2"):
            values = np.array([getattr(rec, metric) for rec in recs])
            summaries.append(
                BoxplotSummary(
                    method=method, scheme=scheme, lam=lam, order=order, metric=metric,
                    vmin=float(values.min()),
                    p10=float(np.percentile(values, 10)),
                    median=float(np.median(values)),
                    p90=float(np.percentile(values, 90)),
                    vmax=float(values.max()),
                )
            )
    return summaries


# =========================
# Serialization
# =========================

RECORDS_HEADER = ["split_id", "method", "scheme", "lambda", "order", "chosen_lv", "mard", "r2"]
SUMMARY_HEADER = ["method", "scheme", "lambda", "order", "metric",
                  "min", "p10", "median", "p90", "max"]


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


def write_records(report, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RECORDS_HEADER)
        for rec in report.records:
            writer.writerow([
                rec.split_id, rec.method, rec.scheme or "", _fmt(rec.lam),
                rec.order, rec.chosen_lv, _fmt(rec.mard), _fmt(rec.r2),
            ])


def write_summary(report, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SUMMARY_HEADER)
        for s in report.summaries:
            writer.writerow([
                s.method, s.scheme or "", _fmt(s.lam), s.order, s.metric,
                _fmt(s.vmin), _fmt(s.p10), _fmt(s.median), _fmt(s.p90), _fmt(s.vmax),
            ])
