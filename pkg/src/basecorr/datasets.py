"""Spectra table ingestion and synthetic data with known ground truth.

File format: delimited text, one header row, one sample per row.  Spectral
columns carry a common prefix followed by the wavelength in nm (for example
``wl_1100``); analyte columns are named plainly.  The loader never coerces:
every cell must parse as a float, rows must all have the header's width,
and wavelengths must increase strictly.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DatasetFormatError,
    DimensionError,
    FeasibilityError,
    ParameterError,
)
from .operators import eigensystem


@dataclass(frozen=True)
class SpectraMatrix:
    """An ``m x n`` block of spectra (rows are samples) with optional
    wavelengths in nm."""

    values: np.ndarray = field(repr=False)
    wavelengths: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DimensionError(f"spectra must be a 2-d array, got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 3:
            raise DimensionError(
                f"need at least 1 sample and 3 channels, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ParameterError("spectra contain non-finite entries")
        object.__setattr__(self, "values", values)
        if self.wavelengths is not None:
            wl = np.asarray(self.wavelengths, dtype=float)
            if wl.shape != (values.shape[1],):
                raise DimensionError(
                    f"wavelengths must have length {values.shape[1]}, got {wl.shape}"
                )
            if np.any(np.diff(wl) <= 0):
                raise ParameterError("wavelengths must be strictly increasing")
            object.__setattr__(self, "wavelengths", wl)

    @property
    def m(self):
        return self.values.shape[0]

    @property
    def n(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class Dataset:
    """Spectra plus named analyte vectors, with optional synthetic truth."""

    spectra: SpectraMatrix
    analytes: dict = field(repr=False)
    provenance: str = ""
    true_baseline: np.ndarray | None = field(default=None, repr=False)
    true_signal: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        for name, vec in self.analytes.items():
            vec = np.asarray(vec, dtype=float)
            if vec.shape != (self.spectra.m,):
                raise DimensionError(
                    f"analyte {name!r} must have length {self.spectra.m}, got {vec.shape}"
                )
            self.analytes[name] = vec

    @property
    def wavelengths(self):
        return self.spectra.wavelengths

    def analyte(self, name):
        if name not in self.analytes:
            raise ParameterError(
                f"unknown analyte {name!r}; available: {sorted(self.analytes)}"
            )
        return self.analytes[name]


@dataclass(frozen=True)
class DatasetSchema:
    """Names the analyte columns and the spectral-column prefix."""

    analytes: tuple
    spectral_prefix: str = "wl_"
    delimiter: str = ","


def load_dataset(path, schema):
    """Read and validate a spectra table.

    Raises ``DatasetFormatError`` with the offending row/column for ragged
    rows, non-numeric cells, missing analyte columns, absent spectral
    columns, or non-increasing wavelengths.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetFormatError(f"{path}: file is empty") from None
        header = [h.strip() for h in header]
        rows = [row for row in reader if row]

    missing = [name for name in schema.analytes if name not in header]
    if missing:
        raise DatasetFormatError(f"{path}: missing analyte columns {missing}")
    spectral = []
    for idx, name in enumerate(header):
        if name.startswith(schema.spectral_prefix):
            try:
                wl = float(name[len(schema.spectral_prefix):])
            except ValueError:
                raise DatasetFormatError(
                    f"{path}: column {name!r} has a non-numeric wavelength suffix"
                ) from None
            spectral.append((idx, wl))
    if not spectral:
        raise DatasetFormatError(
            f"{path}: no spectral columns with prefix {schema.spectral_prefix!r}"
        )
    wavelengths = np.array([wl for _, wl in spectral])
    if np.any(np.diff(wavelengths) <= 0):
        raise DatasetFormatError(f"{path}: spectral columns are not strictly increasing")

    values = np.empty((len(rows), len(spectral)))
    analyte_cols = {name: header.index(name) for name in schema.analytes}
    analytes = {name: np.empty(len(rows)) for name in schema.analytes}
    for r, row in enumerate(rows):
        if len(row) != len(header):
            raise DatasetFormatError(
                f"{path}: row {r + 2} has {len(row)} cells, header has {len(header)}"
            )
        for c, (idx, _) in enumerate(spectral):
            try:
                values[r, c] = float(row[idx])
            except ValueError:
                raise DatasetFormatError(
                    f"{path}: row {r + 2}, column {header[idx]!r}: "
                    f"cannot parse {row[idx]!r} as a number"
                ) from None
        for name, idx in analyte_cols.items():
            try:
                analytes[name][r] = float(row[idx])
            except ValueError:
                raise DatasetFormatError(
                    f"{path}: row {r + 2}, column {name!r}: "
                    f"cannot parse {row[idx]!r} as a number"
                ) from None

    spectra = SpectraMatrix(values=values, wavelengths=wavelengths)
    return Dataset(spectra=spectra, analytes=analytes, provenance=str(path))


def _format_cell(x):
    # 17 significant digits round-trip float64 exactly
    return format(float(x), ".17g")


def save_dataset(dataset, path, spectral_prefix="wl_", delimiter=","):
    """Write a dataset back to the table format accepted by the loader."""
    wl = dataset.wavelengths
    if wl is None:
        wl = np.arange(dataset.spectra.n, dtype=float)
    names = sorted(dataset.analytes)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow(names + [f"{spectral_prefix}{v:g}" for v in wl])
        for i in range(dataset.spectra.m):
            row = [_format_cell(dataset.analytes[name][i]) for name in names]
            row += [_format_cell(v) for v in dataset.spectra.values[i]]
            writer.writerow(row)


def save_spectra_table(path, values, wavelengths=None, spectral_prefix="wl_", delimiter=","):
    """Write a bare matrix (baselines, corrected spectra, ground truth)."""
    values = np.atleast_2d(np.asarray(values, dtype=float))
    if wavelengths is None:
        wavelengths = np.arange(values.shape[1], dtype=float)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=delimiter)
        writer.writerow([f"{spectral_prefix}{v:g}" for v in wavelengths])
        for row in values:
            writer.writerow([_format_cell(v) for v in row])


def load_spectra_table(path, spectral_prefix="wl_", delimiter=","):
    """Inverse of :func:`save_spectra_table`."""
    schema = DatasetSchema(analytes=(), spectral_prefix=spectral_prefix, delimiter=delimiter)
    dataset = load_dataset(path, schema)
    return dataset.spectra.values


@dataclass(frozen=True)
class SynthSpec:
    """Controls for the synthetic generator.

    The true baseline of sample ``i`` is ``baseline_amplitude * a_i`` times a
    fixed unit-norm combination of the ``baseline_smoothness`` smoothest
    loading vectors of the first-difference penalty, so supervised methods
    can in principle remove it exactly.  The response enters the spectra
    through Gaussian peak profiles scaled by ``signal_amplitude``; analyte
    and response are drawn with an exact sample correlation of ``target_r``
    and then mapped affinely to the positive range [1, 2].
    """

    m: int
    n: int
    baseline_amplitude: float = 5.0
    baseline_smoothness: int = 3
    target_r: float = 0.9
    noise_sigma: float = 0.1
    seed: int = 0
    signal_amplitude: float = 1.0

    def __post_init__(self):
        if self.m < 3:
            raise FeasibilityError(
                f"need at least 3 samples to realize a target correlation, got m={self.m}"
            )
        if self.n < 8:
            raise ParameterError(f"need n >= 8 channels, got {self.n}")
        if abs(self.target_r) > 1:
            raise ParameterError(f"target_r must be in [-1, 1], got {self.target_r}")
        if self.noise_sigma < 0:
            raise ParameterError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if not 1 <= self.baseline_smoothness < self.n:
            raise ParameterError(
                f"baseline_smoothness must be in [1, n), got {self.baseline_smoothness}"
            )


def _to_unit_range(u, lo=1.0, hi=2.0):
    span = u.max() - u.min()
    if span == 0:
        return np.full_like(u, (lo + hi) / 2.0)
    return lo + (u - u.min()) / span * (hi - lo)


def _gaussian_profile(t, centers, widths, amps):
    out = np.zeros_like(t)
    for c, w, a in zip(centers, widths, amps):
        out += a * np.exp(-0.5 * ((t - c) / w) ** 2)
    return out


def synth_generate(spec):
    """Generate spectra = signal + baseline + noise with known ground truth.

    The sample correlation between the analyte and the response equals
    ``target_r`` exactly (up to rounding): the response is built from the
    standardized analyte plus an orthogonalized nuisance direction, and the
    final affine rescaling to [1, 2] preserves correlation.
    """
    rng = np.random.default_rng(spec.seed)
    m, n, r = spec.m, spec.n, spec.target_r

    a_raw = rng.normal(size=m)
    az = a_raw - a_raw.mean()
    if np.linalg.norm(az) == 0:
        raise FeasibilityError("degenerate analyte draw; change the seed")
    az /= np.linalg.norm(az)
    if abs(r) == 1.0:
        y_std = np.copysign(1.0, r) * az
    else:
        v = rng.normal(size=m)
        vz = v - v.mean()
        vz -= (vz @ az) * az
        norm_vz = np.linalg.norm(vz)
        if norm_vz < 1e-12:
            raise FeasibilityError(
                "nuisance direction collapsed; increase m or change the seed"
            )
        y_std = r * az + np.sqrt(1.0 - r * r) * (vz / norm_vz)
    a = _to_unit_range(az)
    y = _to_unit_range(y_std)

    achieved = np.corrcoef(a, y)[0, 1]
    if abs(achieved - r) > 0.05:
        raise FeasibilityError(
            f"achieved correlation {achieved:.4f} misses target {r:.4f} by more than 0.05"
        )

    eig = eigensystem(1, n)
    g = rng.normal(size=spec.baseline_smoothness)
    g /= np.linalg.norm(g)
    combo = eig.loadings[:, -spec.baseline_smoothness:] @ g
    true_baseline = spec.baseline_amplitude * np.outer(a, combo)

    t = np.linspace(0.0, 1.0, n)
    centers = rng.uniform(0.15, 0.85, size=3)
    widths = rng.uniform(0.02, 0.06, size=3)
    amps = rng.uniform(0.6, 1.2, size=3)
    response_profile = _gaussian_profile(t, centers, widths, amps)
    common_profile = _gaussian_profile(
        t, rng.uniform(0.1, 0.9, size=2), rng.uniform(0.03, 0.08, size=2),
        rng.uniform(0.3, 0.7, size=2),
    )
    true_signal = spec.signal_amplitude * np.outer(y, response_profile) + common_profile

    noise = rng.normal(scale=spec.noise_sigma, size=(m, n)) if spec.noise_sigma > 0 else 0.0
    values = true_signal + true_baseline + noise
    wavelengths = 1100.0 + 2.0 * np.arange(n)
    spectra = SpectraMatrix(values=values, wavelengths=wavelengths)
    return Dataset(
        spectra=spectra,
        analytes={"analyte": a, "response": y},
        provenance=f"synthetic(seed={spec.seed}, target_r={r})",
        true_baseline=true_baseline,
        true_signal=true_signal,
    )
