"""Supervised penalized baseline correction.

Both algorithms alternate exact block minimizations of a joint objective in
the baseline matrix ``Z`` and a regression vector ``w``:

* the NIPALS form deflates the spectra by the outer product ``a w^T`` and
  re-smooths the residual, so its ``Z``-update is the plain penalized
  smoother applied to ``X - a w^T``;
* the inverse-least-squares form regresses the analyte on the corrected
  spectra and feeds the prediction residual back into a rank-one-plus-penalty
  system for ``Z``.

Baselines are batch quantities here: every sample's baseline depends on the
whole input set through ``w``, so rows cannot be corrected one at a time.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateAnalyteError,
    DegenerateRegressionError,
    DimensionError,
    ParameterError,
)
from .operators import make_operator
from .smoothers import as_spectra, smooth_rows

_DENSE_SOLVE_MAX_N = 1024


@dataclass(frozen=True)
class SpbcConfig:
    """ALS loop controls shared by both supervised algorithms.

    ``ridge_tau_rel`` only affects the inverse-least-squares variant: the
    regression step solves ``(B^T B + tau^2 I) w = B^T a`` with
    ``tau = ridge_tau_rel * sigma_1(X)``, kept small for stability rather
    than tuned.
    """

    lam: float
    order: int = 1
    tol: float = 1e-8
    max_iter: int = 50
    ridge_tau_rel: float = 1e-6

    def __post_init__(self):
        if self.lam <= 0 or not np.isfinite(self.lam):
            raise ParameterError(f"lambda must be positive and finite, got {self.lam}")
        if self.order not in (1, 2):
            raise ParameterError(f"order must be 1 or 2, got {self.order}")
        if self.tol <= 0:
            raise ParameterError(f"tol must be positive, got {self.tol}")
        if self.max_iter < 1:
            raise ParameterError(f"max_iter must be >= 1, got {self.max_iter}")
        if not 0 < self.ridge_tau_rel <= 1e-2:
            raise ParameterError(
                f"ridge_tau_rel must be in (0, 1e-2], got {self.ridge_tau_rel}"
            )


@dataclass(frozen=True)
class SpbcResult:
    """Converged baseline matrix with the ALS diagnostics.

    ``objective_trace[k]`` is the joint objective evaluated after iteration
    ``k + 1``; each half-step is an exact minimizer, so the trace is
    non-increasing up to rounding.
    """

    baseline: np.ndarray = field(repr=False)
    w: np.ndarray = field(repr=False)
    iterations: int
    objective_trace: np.ndarray = field(repr=False)
    converged: bool


@dataclass(frozen=True)
class SvdCache:
    """Right singular structure of the spectra matrix, computed once per run.

    ``right_vectors`` spans ``range(X^T)`` (rank columns) and ``nullspace``
    the orthogonal complement; the latter is empty when ``X`` has full
    column rank.
    """

    singular_values: np.ndarray = field(repr=False)
    right_vectors: np.ndarray = field(repr=False)
    nullspace: np.ndarray = field(repr=False)
    rank: int

    @property
    def sigma_max(self):
        return float(self.singular_values[0]) if self.singular_values.size else 0.0


def svd_cache(x):
    """Precompute the SVD pieces reused across an ALS run."""
    x = as_spectra(x)
    _, sigma, vt = np.linalg.svd(x, full_matrices=True)
    tol = 1e-12 * (sigma[0] if sigma.size else 0.0)
    rank = int(np.sum(sigma > tol))
    return SvdCache(
        singular_values=sigma,
        right_vectors=vt[:rank].T.copy(),
        nullspace=vt[rank:].T.copy(),
        rank=rank,
    )


def ridge_solve(cache, d, tau):
    """Solve ``(X^T X + tau^2 I) w = d`` from the cached SVD of ``X``.

    In the right singular basis the system is diagonal with entries
    ``sigma_i^2 + tau^2``; directions in the nullspace of ``X`` carry the
    eigenvalue ``tau^2`` alone.
    """
    if tau <= 0:
        raise ParameterError(f"ridge parameter must be positive, got {tau}")
    d = np.asarray(d, dtype=float)
    q = cache.right_vectors
    if d.shape != (q.shape[0],):
        raise DimensionError(f"right-hand side must have shape ({q.shape[0]},), got {d.shape}")
    sigma = cache.singular_values[: cache.rank]
    w = (q / (sigma**2 + tau**2)) @ (q.T @ d)
    if cache.nullspace.size:
        w = w + cache.nullspace @ (cache.nullspace.T @ d) / tau**2
    return w


def solve_rank_one_penalty(w, eig, lam, method="auto"):
    """Solve ``(w w^T + lambda^2 C) u = w`` for the ILS baseline update.

    ``lambda^2 C`` is singular exactly on the nullspace of ``D``, so the
    rank-one term must be folded in before inversion.  Folding it into the
    eigenbasis of ``C`` collapses the solution onto the nullspace:
    ``u = V0 (V0^T w) / ||V0^T w||^2``, which satisfies the system exactly
    and is the minimum-norm solution whenever the system is singular.  The
    dense route factors the full matrix and is the default up to
    ``n = 1024`` channels.

    Raises ``DegenerateRegressionError`` when ``w`` is orthogonal (to
    within 1e-10 relative) to the nullspace of ``D``: the baseline magnitude
    grows like ``1 / ||V0^T w||`` and the update is no longer meaningful.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (eig.n,):
        raise DimensionError(f"w must have shape ({eig.n},), got {w.shape}")
    norm_w = np.linalg.norm(w)
    if norm_w < 1e-14:
        raise DegenerateRegressionError("regression vector collapsed to zero")
    w0 = eig.nullspace.T @ w
    if np.linalg.norm(w0) < 1e-10 * norm_w:
        raise DegenerateRegressionError(
            "regression vector has no component on the penalty nullspace; "
            "the baseline update diverges"
        )
    if method == "auto":
        method = "dense" if eig.n <= _DENSE_SOLVE_MAX_N else "eigen"
    if method == "eigen":
        return eig.nullspace @ (w0 / (w0 @ w0))
    if method != "dense":
        raise ParameterError(f"unknown method {method!r}")
    d = make_operator(eig.order, eig.n)
    dense = d.dense()
    m = np.outer(w, w) + lam**2 * (dense.T @ dense)
    if eig.order == 1:
        try:
            return np.linalg.solve(m, w)
        except np.linalg.LinAlgError:
            pass
    # order 2 is structurally singular (a nullspace direction orthogonal to w
    # always exists); the system stays consistent, so take the min-norm solution
    return np.linalg.lstsq(m, w, rcond=None)[0]


def spbc_step4_fast(r, w, eig, lam):
    """Fast baseline update shared by both ALS loops.

    A matrix ``r`` is treated as the NIPALS residual and smoothed row-wise
    (two projections against the cached eigenbasis); a vector ``r`` is the
    ILS prediction residual and yields the rank-one baseline
    ``r u^T`` with ``u`` from :func:`solve_rank_one_penalty`.
    """
    r = np.asarray(r, dtype=float)
    if r.ndim == 2:
        return smooth_rows(r, eig, lam)
    if r.ndim != 1:
        raise DimensionError(f"residual must be a vector or matrix, got shape {r.shape}")
    u = solve_rank_one_penalty(w, eig, lam)
    return np.outer(r, u)


def _check_supervised_inputs(x, a, eig):
    x = as_spectra(x)
    a = np.asarray(a, dtype=float)
    if a.ndim != 1 or a.shape[0] != x.shape[0]:
        raise DimensionError(
            f"analyte must be a length-{x.shape[0]} vector, got shape {a.shape}"
        )
    if not np.all(np.isfinite(a)):
        raise ParameterError("analyte contains non-finite entries")
    if x.shape[1] != eig.n:
        raise DimensionError(
            f"eigensystem is for n={eig.n} channels but spectra have {x.shape[1]}"
        )
    return x, a


def _roughness(z, d):
    return float(np.sum(d.apply(z) ** 2))


def spbc_n(x, a, cfg, eig):
    """Supervised baseline correction, NIPALS (outer-product) form.

    Alternates ``w = (X - Z)^T a / (a^T a)`` with re-smoothing the deflated
    matrix ``X - a w^T``, tracking the joint objective
    ``||(X - Z) - a w^T||_F^2 + lambda^2 ||D Z^T||_F^2``.  Stops when the
    relative Frobenius change of ``Z`` falls below ``cfg.tol``.

    A numerically zero analyte is refused: the method then degenerates to
    the unsupervised smoother, which the caller should invoke directly.
    """
    x, a = _check_supervised_inputs(x, a, eig)
    if np.linalg.norm(a) < 1e-12 * np.sqrt(a.shape[0]):
        raise DegenerateAnalyteError(
            "analyte vector is numerically zero; use eilers_baseline instead"
        )
    d = make_operator(cfg.order, eig.n)
    ata = a @ a
    z = np.zeros_like(x)
    trace = []
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        w = (x - z).T @ a / ata
        residual = x - np.outer(a, w)
        z_new = smooth_rows(residual, eig, cfg.lam)
        trace.append(
            float(np.sum((residual - z_new) ** 2)) + cfg.lam**2 * _roughness(z_new, d)
        )
        change = np.linalg.norm(z_new - z) / max(1.0, np.linalg.norm(z))
        z = z_new
        if change < cfg.tol:
            converged = True
            break
    return SpbcResult(
        baseline=z,
        w=w,
        iterations=iterations,
        objective_trace=np.asarray(trace),
        converged=converged,
    )


def spbc_i(x, a, cfg, eig, xsvd=None):
    """Supervised baseline correction, inverse-least-squares (inner) form.

    Each iteration solves the regression step
    ``(B^T B + tau^2 I) w = B^T a`` with ``B = X - Z`` (the ridge keeps the
    step well posed on rank-deficient spectra; ``tau = ridge_tau_rel *
    sigma_1(X)`` from the cached SVD), forms the prediction residual
    ``r = X w - a`` and rebuilds the baseline from the rank-one-plus-penalty
    system.  The regression step is computed through the dual ``m x m``
    system ``w = B^T (B B^T + tau^2 I)^{-1} a``, which is the same solution
    without forming the badly conditioned ``n x n`` matrix.

    Objective: ``||(X - Z) w - a||^2 + lambda^2 ||D Z^T||_F^2``.
    """
    x, a = _check_supervised_inputs(x, a, eig)
    if xsvd is None:
        xsvd = svd_cache(x)
    if xsvd.right_vectors.shape[0] != x.shape[1]:
        raise DimensionError("SVD cache does not match the spectra matrix")
    tau = cfg.ridge_tau_rel * xsvd.sigma_max
    if tau <= 0:
        raise DegenerateAnalyteError("spectra matrix is zero; nothing to correct")
    d = make_operator(cfg.order, eig.n)
    m = x.shape[0]
    z = np.zeros_like(x)
    trace = []
    converged = False
    iterations = 0
    for iterations in range(1, cfg.max_iter + 1):
        b = x - z
        gram = b @ b.T
        gram[np.diag_indices(m)] += tau**2
        w = b.T @ np.linalg.solve(gram, a)
        if np.linalg.norm(w) < 1e-14:
            raise DegenerateRegressionError("regression vector collapsed to zero")
        r = x @ w - a
        z_new = spbc_step4_fast(r, w, eig, cfg.lam)
        trace.append(
            float(np.sum(((x - z_new) @ w - a) ** 2)) + cfg.lam**2 * _roughness(z_new, d)
        )
        change = np.linalg.norm(z_new - z) / max(1.0, np.linalg.norm(z))
        z = z_new
        if change < cfg.tol:
            converged = True
            break
    return SpbcResult(
        baseline=z,
        w=w,
        iterations=iterations,
        objective_trace=np.asarray(trace),
        converged=converged,
    )
