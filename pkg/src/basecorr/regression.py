"""PLS1 calibration (NIPALS), mean-centered prediction, and rank-based
selection of the latent dimension."""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateResponseError,
    DimensionError,
    InvalidMetricError,
    ParameterError,
)


@dataclass(frozen=True)
class PlsModel:
    """Per-component regression vectors plus the stored centering.

    ``coefficients[k - 1]`` is the length-n vector for a k-component model.
    ``n_components`` can be below the requested maximum when deflation
    exhausts the signal early; coefficient vectors repeat from there on.
    """

    max_lv: int
    coefficients: np.ndarray = field(repr=False)  # (max_lv, n)
    x_mean: np.ndarray = field(repr=False)
    y_mean: float
    n_components: int = 0


@dataclass(frozen=True)
class LatentSelection:
    mard_per_lv: np.ndarray
    r2_per_lv: np.ndarray
    ranks_mard: np.ndarray
    ranks_r2: np.ndarray
    chosen_lv: int


def mean_center(x, y):
    """Center columns of ``x`` and entries of ``y``; returns the centered
    data plus the means needed to undo it at prediction time."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise DimensionError(
            f"expected matching matrix/vector, got shapes {x.shape} and {y.shape}"
        )
    if x.shape[0] < 2:
        raise DimensionError("need at least 2 samples to mean-center")
    mu_x = x.mean(axis=0)
    mu_y = float(y.mean())
    return x - mu_x, y - mu_y, mu_x, mu_y


def pls_fit(x_centered, y_centered, max_lv, x_mean=None, y_mean=0.0):
    """NIPALS PLS1 on centered data.

    Per component: weight ``w = X^T y / ||X^T y||``, score ``t = X w``,
    loadings ``p = X^T t / (t^T t)`` and ``q = y^T t / (t^T t)``, then
    deflate both ``X`` and ``y``.  Coefficients are assembled for every
    component count ``1..max_lv``.
    """
    x = np.array(x_centered, dtype=float)
    y = np.array(y_centered, dtype=float)
    m, n = x.shape
    if max_lv < 1 or max_lv > min(m - 1, n):
        raise ParameterError(
            f"max_lv must be in [1, min(m - 1, n)] = [1, {min(m - 1, n)}], got {max_lv}"
        )
    if np.allclose(y, y[0]):
        raise DegenerateResponseError("response has no variance")
    if x_mean is None:
        x_mean = np.zeros(n)

    weights, loadings, y_loadings = [], [], []
    for _ in range(max_lv):
        w = x.T @ y
        nw = np.linalg.norm(w)
        if nw < 1e-13:
            break
        w /= nw
        t = x @ w
        tt = t @ t
        if tt < 1e-13:
            break
        p = x.T @ t / tt
        q = float(y @ t / tt)
        x -= np.outer(t, p)
        y -= q * t
        weights.append(w)
        loadings.append(p)
        y_loadings.append(q)

    k_eff = len(weights)
    if k_eff == 0:
        raise DegenerateResponseError("response is uncorrelated with every channel")
    w_mat = np.column_stack(weights)
    p_mat = np.column_stack(loadings)
    q_vec = np.asarray(y_loadings)
    coefficients = np.zeros((max_lv, n))
    for k in range(1, k_eff + 1):
        # b_k = W_k (P_k^T W_k)^{-1} q_k maps raw centered X to fitted y
        coefficients[k - 1] = w_mat[:, :k] @ np.linalg.solve(
            p_mat[:, :k].T @ w_mat[:, :k], q_vec[:k]
        )
    for k in range(k_eff, max_lv):
        coefficients[k] = coefficients[k_eff - 1]
    return PlsModel(
        max_lv=max_lv,
        coefficients=coefficients,
        x_mean=np.asarray(x_mean, dtype=float),
        y_mean=float(y_mean),
        n_components=k_eff,
    )


def pls_predict(model, x_new, lv):
    """Predict with the stored centering: ``(X - mu_x) b_lv + mu_y``."""
    if not 1 <= lv <= model.max_lv:
        raise ParameterError(f"lv must be in [1, {model.max_lv}], got {lv}")
    x_new = np.atleast_2d(np.asarray(x_new, dtype=float))
    if x_new.shape[1] != model.coefficients.shape[1]:
        raise DimensionError(
            f"model expects {model.coefficients.shape[1]} channels, got {x_new.shape[1]}"
        )
    return (x_new - model.x_mean) @ model.coefficients[lv - 1] + model.y_mean


def _ordinal_ranks(values, descending=False):
    values = np.asarray(values, dtype=float)
    order = np.argsort(-values if descending else values, kind="stable")
    ranks = np.empty(len(values), dtype=int)
    ranks[order] = np.arange(1, len(values) + 1)
    return ranks


def select_latent_dim(mard_per_lv, r2_per_lv):
    """Pick the latent dimension whose (MARD rank, R2 rank) pair is closest
    to the origin.

    MARD ranks ascend from the lowest value, R2 ranks from the highest; ties
    get ordinal ranks in first-occurrence order, and distance ties resolve
    to the smaller dimension.
    """
    mard_per_lv = np.asarray(mard_per_lv, dtype=float)
    r2_per_lv = np.asarray(r2_per_lv, dtype=float)
    if mard_per_lv.shape != r2_per_lv.shape or mard_per_lv.ndim != 1 or mard_per_lv.size == 0:
        raise DimensionError("metric sequences must be equal-length non-empty vectors")
    if np.any(np.isnan(mard_per_lv)) or np.any(np.isnan(r2_per_lv)):
        raise InvalidMetricError("metric sequences contain NaN entries")
    ranks_mard = _ordinal_ranks(mard_per_lv)
    ranks_r2 = _ordinal_ranks(r2_per_lv, descending=True)
    distance = np.hypot(ranks_mard, ranks_r2)
    chosen = int(np.argmin(distance)) + 1
    return LatentSelection(
        mard_per_lv=mard_per_lv,
        r2_per_lv=r2_per_lv,
        ranks_mard=ranks_mard,
        ranks_r2=ranks_r2,
        chosen_lv=chosen,
    )
