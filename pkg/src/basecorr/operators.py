"""Difference operators and their spectral decompositions.

The penalty matrix of every smoother in this package is ``C = D^T D`` where
``D`` is a first- or second-order finite difference operator.  For the first
order, the full eigendecomposition of ``C`` is available in closed form
(a cosine basis), so the smoothing systems can be solved by projection
instead of factorization.  For the second order the eigensystem is computed
numerically, which is cheap at the matrix sizes this package targets.
"""

import os
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ParameterError

_STENCILS = {1: (1.0, -1.0), 2: (1.0, -2.0, 1.0)}

CACHE_MAGIC = b"SBEG"
CACHE_VERSION = 1


def _check_order(order):
    if order not in (1, 2):
        raise ParameterError(f"difference order must be 1 or 2, got {order!r}")


@dataclass(frozen=True)
class DerivativeOperator:
    """Banded finite-difference operator of shape ``(n - order, n)``.

    The row stencil is ``[1, -1]`` (order 1) or ``[1, -2, 1]`` (order 2).
    Application is done with the banded stencil; :meth:`dense` exists so
    that tests can compare against explicit linear algebra.
    """

    order: int
    n: int

    @property
    def rows(self):
        return self.n - self.order

    @property
    def stencil(self):
        return _STENCILS[self.order]

    def apply(self, x):
        """Apply the operator to a vector or to the rows of a matrix.

        Returns ``x @ D.T`` for 2-d input, i.e. differences are always taken
        along the last axis.
        """
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise DimensionError(
                f"operator expects length-{self.n} input along the last axis, "
                f"got shape {x.shape}"
            )
        if self.order == 1:
            return x[..., :-1] - x[..., 1:]
        return x[..., :-2] - 2.0 * x[..., 1:-1] + x[..., 2:]

    def dense(self):
        """Dense materialization, for oracles and small-scale tests only."""
        d = np.zeros((self.rows, self.n))
        for offset, coeff in enumerate(self.stencil):
            rows = np.arange(self.rows)
            d[rows, rows + offset] = coeff
        return d

    def gram_banded_lower(self):
        """Lower banded storage of ``C = D^T D`` as used by
        :func:`scipy.linalg.solveh_banded` (``lower=True``).
        """
        c = self.dense().T @ self.dense()
        ab = np.zeros((self.order + 1, self.n))
        for k in range(self.order + 1):
            ab[k, : self.n - k] = np.diagonal(c, -k)
        return ab


def make_operator(order, n):
    """Construct the order-1 or order-2 difference operator for ``n`` channels.

    Parameters
    ----------
    order : {1, 2}
        Derivative order.
    n : int
        Number of channels (columns).  Must exceed ``order``.
    """
    _check_order(order)
    if n <= order:
        raise DimensionError(f"need n > order, got n={n} with order={order}")
    return DerivativeOperator(order=order, n=int(n))


@dataclass(frozen=True)
class EigenSystem:
    """Full eigendecomposition of ``C = D^T D``.

    Attributes
    ----------
    order, n : int
        Operator order and channel count.
    values : ndarray, shape (n,)
        Squared singular values of ``D`` in descending order; the trailing
        ``order`` entries are exactly zero.
    loadings : ndarray, shape (n, n)
        Orthonormal eigenvectors as columns, ordered like ``values``.  The
        trailing ``order`` columns are the analytic nullspace basis.
    nullspace : ndarray, shape (n, order)
        The orthonormal basis of ``null(D)``: the normalized constant vector,
        plus the centered normalized ramp for order 2.
    """

    order: int
    n: int
    values: np.ndarray = field(repr=False)
    loadings: np.ndarray = field(repr=False)
    nullspace: np.ndarray = field(repr=False)


def nullspace_basis(order, n):
    """Orthonormal basis of the nullspace of the difference operator.

    Column 1 is ``ones(n)/sqrt(n)``; for order 2, column 2 is the ramp
    ``[1..n]`` centered against column 1 and normalized (one Gram-Schmidt
    step, which is exact here).
    """
    _check_order(order)
    if n <= order:
        raise DimensionError(f"need n > order, got n={n} with order={order}")
    v1 = np.full(n, 1.0 / np.sqrt(n))
    if order == 1:
        return v1[:, None]
    ramp = np.arange(1.0, n + 1.0)
    t = ramp - ramp.mean()
    return np.column_stack([v1, t / np.linalg.norm(t)])


def _fix_signs(vectors):
    # deterministic orientation: first entry of significant magnitude positive
    v = np.asarray(vectors)
    anchor = np.argmax(np.abs(v) > 1e-12 * np.abs(v).max(axis=0, keepdims=True), axis=0)
    signs = np.sign(v[anchor, np.arange(v.shape[1])])
    signs[signs == 0] = 1.0
    return v * signs


def closed_form_eigensystem(n):
    """Closed-form eigensystem of ``C = D1^T D1`` for ``n`` channels.

    The squared singular values are ``2 - 2*cos((n - j)*pi/n)`` for
    ``j = 1..n`` (descending; the last one is zero) and the eigenvector
    entries are ``cos((n - j)*(2i - 1)*pi/(2n))``, normalized per column.
    The final column is the constant nullspace vector.
    """
    if n < 2:
        raise DimensionError(f"need n >= 2, got n={n}")
    j = np.arange(1, n + 1)
    values = 2.0 - 2.0 * np.cos((n - j) * np.pi / n)
    values[-1] = 0.0
    i = np.arange(1, n + 1)[:, None]
    loadings = np.cos((n - j)[None, :] * (2 * i - 1) * np.pi / (2.0 * n))
    loadings /= np.linalg.norm(loadings, axis=0)
    loadings = _fix_signs(loadings)
    return EigenSystem(
        order=1,
        n=int(n),
        values=values,
        loadings=loadings,
        nullspace=loadings[:, -1:].copy(),
    )


def eigensystem(order, n):
    """Eigensystem of ``C = D^T D`` for either operator order.

    Order 1 uses the closed form; order 2 falls back to a dense symmetric
    eigendecomposition with the trailing columns replaced by the analytic
    nullspace basis (the numerical nullspace is only determined up to
    rotation).
    """
    _check_order(order)
    if order == 1:
        return closed_form_eigensystem(n)
    if n <= order:
        raise DimensionError(f"need n > order, got n={n} with order={order}")
    d = make_operator(order, n)
    dense = d.dense()
    evals, evecs = np.linalg.eigh(dense.T @ dense)
    evals = evals[::-1].copy()
    evecs = evecs[:, ::-1].copy()
    v0 = nullspace_basis(order, n)
    evals[-order:] = 0.0
    evecs[:, -order:] = v0
    evecs = _fix_signs(evecs)
    return EigenSystem(order=order, n=int(n), values=evals, loadings=evecs, nullspace=v0)


@dataclass(frozen=True)
class FilterBank:
    """Filter factors ``1 / (1 + lambda^2 * s^2)`` for a grid of penalties.

    ``factors`` has one row per penalty value and one column per
    eigendirection; nullspace directions (``s^2 = 0``) always get factor 1,
    so they pass through every smoother untouched.
    """

    order: int
    n: int
    lambdas: np.ndarray = field(repr=False)
    factors: np.ndarray = field(repr=False)


def filter_bank(eig, lambdas):
    """Build the per-``lambda`` filter factors for an eigensystem.

    Parameters
    ----------
    eig : EigenSystem
    lambdas : sequence of float
        Penalty values, all ``>= 0``.  An empty sequence is rejected.
    """
    lam = np.atleast_1d(np.asarray(lambdas, dtype=float))
    if lam.size == 0:
        raise ParameterError("lambda list must not be empty")
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ParameterError(f"penalty values must be finite and >= 0, got {lambdas!r}")
    factors = 1.0 / (1.0 + lam[:, None] ** 2 * eig.values[None, :])
    return FilterBank(order=eig.order, n=eig.n, lambdas=lam, factors=factors)


def save_eigensystem(eig, path):
    """Serialize an eigensystem to the binary cache format.

    Layout: magic ``SBEG``, then ``version``, ``order``, ``n`` as
    little-endian u32, then values, loadings and nullspace as row-major
    little-endian float64.
    """
    with open(path, "wb") as fh:
        fh.write(CACHE_MAGIC)
        fh.write(struct.pack("<III", CACHE_VERSION, eig.order, eig.n))
        fh.write(np.ascontiguousarray(eig.values, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(eig.loadings, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(eig.nullspace, dtype="<f8").tobytes())


def load_eigensystem(path):
    """Inverse of :func:`save_eigensystem`."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CACHE_MAGIC:
            raise ParameterError(f"{path}: not an eigensystem cache (magic {magic!r})")
        version, order, n = struct.unpack("<III", fh.read(12))
        if version != CACHE_VERSION:
            raise ParameterError(f"unsupported eigensystem cache version {version}")
        values = np.frombuffer(fh.read(8 * n), dtype="<f8").copy()
        loadings = np.frombuffer(fh.read(8 * n * n), dtype="<f8").reshape(n, n).copy()
        nullspace = np.frombuffer(fh.read(8 * n * order), dtype="<f8").reshape(n, order).copy()
    return EigenSystem(order=int(order), n=int(n), values=values,
                       loadings=loadings, nullspace=nullspace)


def cached_eigensystem(order, n, cache_dir=None):
    """Return the eigensystem, reading/writing a cache file when a directory
    is given (or set through the ``BASECORR_CACHE_DIR`` environment variable).
    """
    if cache_dir is None:
        cache_dir = os.environ.get("BASECORR_CACHE_DIR")
    if not cache_dir:
        return eigensystem(order, n)
    os.makedirs(cache_dir, exist_ok=True)
    path = os.path.join(cache_dir, f"eigensystem_d{order}_n{n}.bin")
    if os.path.exists(path):
        return load_eigensystem(path)
    eig = eigensystem(order, n)
    save_eigensystem(eig, path)
    return eig
