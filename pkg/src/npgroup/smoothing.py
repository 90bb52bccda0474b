"""Multivariate local polynomial regression for null-model residuals.

Design columns are the centred monomials of total degree <= q, ordered by
total degree and then by multi-index in descending lexicographic order, so
for r = 2, q = 2 the columns are

    1, dx1, dx2, dx1**2, dx1*dx2, dx2**2

which agrees with (1, dx', vech(dx dx')') for degrees up to 2.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from npgroup.errors import InfeasibleRates, SingularFit, TooFewObservations, ValidationError

COND_LIMIT = 1e12
RIDGE_SCALE = 1e-8
# cap on n_rows * n * gamma floats held at once while building smoother rows
_CHUNK_FLOATS = 2_000_000


@dataclass(frozen=True)
class KernelSpec:
    """Product kernel with bounded support.

    ``support_radius`` is in bandwidth-standardized units.  The Epanechnikov
    kernel has natural support 1; the Gaussian is truncated at 4 by default.
    """

    family: Literal["epanechnikov", "gaussian"] = "epanechnikov"
    support_radius: float | None = None

    def __post_init__(self):
        if self.family not in ("epanechnikov", "gaussian"):
            raise ValidationError(f"unknown kernel family {self.family!r}")
        if self.support_radius is not None and not self.support_radius > 0:
            raise ValidationError("support_radius must be positive")

    @property
    def radius(self) -> float:
        if self.support_radius is not None:
            return float(self.support_radius)
        return 1.0 if self.family == "epanechnikov" else 4.0

    def __call__(self, u: NDArray) -> NDArray:
        """Evaluate the product kernel over the last axis of ``u``."""
        u = np.asarray(u, dtype=float)
        R = self.radius
        inside = np.all(np.abs(u) <= R, axis=-1)
        if self.family == "epanechnikov":
            t = u / R
            vals = np.prod(np.clip(0.75 * (1.0 - t * t) / R, 0.0, None), axis=-1)
        else:
            vals = np.prod(np.exp(-0.5 * u * u) / np.sqrt(2 * np.pi), axis=-1)
        return np.where(inside, vals, 0.0)


@dataclass(frozen=True)
class Bandwidth:
    """Diagonal bandwidth matrix H^{1/2} = diag(lambdas), in covariate units."""

    lambdas: NDArray[np.floating]
    exponent: float | None = None
    constant: float | None = None

    def __post_init__(self):
        lam = np.atleast_1d(np.asarray(self.lambdas, dtype=float))
        if lam.ndim != 1:
            raise ValidationError("bandwidth must be a vector")
        if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
            raise ValidationError("bandwidth entries must be positive and finite")
        object.__setattr__(self, "lambdas", lam)

    def as_dict(self) -> dict:
        return {
            "lambdas": [float(v) for v in self.lambdas],
            "exponent": self.exponent,
            "constant": self.constant,
        }


@dataclass
class LocalPolyFit:
    order_q: int
    fitted: NDArray[np.floating]
    residuals: NDArray[np.floating]
    effective_columns: int
    bandwidth: Bandwidth | None = None
    n_ridged: int = 0
    diagnostics: dict = field(default_factory=dict)


def gamma_dim(r: int, q: int) -> int:
    """Number of r-variate monomials of total degree at most q."""
    if r < 0 or q < 0:
        raise ValidationError("need r >= 0 and q >= 0")
    return len(_exponents(r, q))


@lru_cache(maxsize=None)
def _exponents(r: int, q: int) -> tuple[tuple[int, ...], ...]:
    out = []
    for deg in range(q + 1):
        block = [k for k in itertools.product(range(deg + 1), repeat=r) if sum(k) == deg]
        out.extend(sorted(block, reverse=True))
    return tuple(out)


def _monomials(delta: NDArray, q: int) -> NDArray:
    # delta: (..., r) -> (..., gamma)
    r = delta.shape[-1]
    E = np.array(_exponents(r, q), dtype=int).reshape(-1, r)
    return np.prod(delta[..., None, :] ** E, axis=-1)


def design_row(x_j: ArrayLike, x0: ArrayLike, q: int) -> NDArray[np.floating]:
    """Centred monomial expansion of ``x_j - x0`` up to total degree ``q``."""
    d = np.atleast_1d(np.asarray(x_j, dtype=float)) - np.atleast_1d(np.asarray(x0, dtype=float))
    return _monomials(d, q)


def default_bandwidth(X: ArrayLike, q: int = 1, c: float = 1.0) -> Bandwidth:
    """Rate-compliant plug-in bandwidth ``c * sd(X_i) * n**(-a)``.

    The exponent ``a`` must lie strictly between 1/(4(q+1)) and 1/(2r) so that
    n*lam**(4(q+1)) -> 0 and n*lam**(2r)/log(n)**2 -> inf.  We use a = 1/4 when
    it is feasible and the midpoint of the band otherwise.
    """
    X = _as_matrix(X)
    n, r = X.shape
    if n < 10:
        raise TooFewObservations(f"default bandwidth needs n >= 10, got {n}")
    lo = 1.0 / (4 * (q + 1))
    hi = 1.0 / (2 * r) if r > 0 else np.inf
    if not lo < hi:
        raise InfeasibleRates(r, q)
    a = 0.25 if lo < 0.25 < hi else 0.5 * (lo + hi)
    sd = X.std(axis=0, ddof=1)
    if np.any(sd <= 0):
        raise ValidationError("cannot derive a bandwidth for a constant covariate")
    return Bandwidth(c * sd * n ** (-a), exponent=a, constant=c)


def rates_satisfied(lam: float, n: int, r: int, q: int) -> tuple[float, float]:
    """Finite-n values of the two rate quantities (first should be small, second large)."""
    return n * lam ** (4 * (q + 1)), n * lam ** (2 * r) / np.log(n) ** 2


def _as_matrix(X: ArrayLike) -> NDArray[np.floating]:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValidationError("covariates must be a vector or a 2-d matrix")
    return X


def _smoother_rows(
    X: NDArray, kernel: KernelSpec, lam: NDArray, q: int
) -> Iterator[tuple[slice, NDArray, int]]:
    """Yield blocks of the linear smoother matrix (rows = evaluation points).

    The local design uses bandwidth-scaled increments; this changes only the
    non-intercept coefficients, not the fitted value, and keeps the normal
    matrix well scaled.
    """
    n, r = X.shape
    gamma = gamma_dim(r, q)
    e1 = np.zeros(gamma)
    e1[0] = 1.0
    step = max(1, _CHUNK_FLOATS // max(1, n * gamma))
    for start in range(0, n, step):
        sl = slice(start, min(n, start + step))
        U = (X[None, :, :] - X[sl, None, :]) / lam  # (b, n, r)
        W = kernel(U) / np.prod(lam)  # (b, n)
        D = _monomials(U, q)  # (b, n, gamma)
        M = np.einsum("bj,bjk,bjl->bkl", W, D, D)
        ev = np.linalg.eigvalsh(M)
        bad = ~(ev[:, 0] > 0) | (ev[:, -1] > COND_LIMIT * np.maximum(ev[:, 0], 0))
        n_ridged = 0
        if np.any(bad):
            idx = np.flatnonzero(bad)
            tr = np.trace(M[idx], axis1=1, axis2=2)
            # intercept left unpenalized so constants are still reproduced exactly
            M[idx] += (RIDGE_SCALE * tr / gamma)[:, None, None] * np.diag(1.0 - e1)
            ev2 = np.linalg.eigvalsh(M[idx])
            still = ~(ev2[:, 0] > 0) | (ev2[:, -1] > COND_LIMIT * ev2[:, 0])
            if np.any(still):
                raise SingularFit(int(start + idx[np.argmax(still)]))
            n_ridged = len(idx)
        coef = np.linalg.solve(M, np.broadcast_to(e1, (M.shape[0], gamma))[..., None])[..., 0]
        rows = W * np.einsum("bjk,bk->bj", D, coef)
        yield sl, rows, n_ridged


def smoother_matrix(
    X: ArrayLike, kernel: KernelSpec | None = None, h: Bandwidth | None = None, q: int = 1
) -> NDArray[np.floating]:
    """Dense n x n matrix of equivalent-kernel weights w~(X_i, X_j)."""
    X = _as_matrix(X)
    kernel = kernel or KernelSpec()
    lam = _resolve_bandwidth(X, h, q).lambdas if X.shape[1] else np.ones(0)
    S = np.empty((X.shape[0], X.shape[0]))
    for sl, rows, _ in _smoother_rows(X, kernel, lam, q):
        S[sl] = rows
    return S


def _resolve_bandwidth(X: NDArray, h: Bandwidth | None, q: int) -> Bandwidth:
    if h is None:
        return default_bandwidth(X, q)
    if len(h.lambdas) == 1 and X.shape[1] > 1:
        return Bandwidth(np.repeat(h.lambdas, X.shape[1]), h.exponent, h.constant)
    if len(h.lambdas) != X.shape[1]:
        raise ValidationError(
            f"bandwidth has {len(h.lambdas)} entries for {X.shape[1]} covariates"
        )
    return h


def local_poly_fit(
    X: ArrayLike,
    Y: ArrayLike,
    kernel: KernelSpec | None = None,
    h: Bandwidth | None = None,
    q: int = 1,
) -> LocalPolyFit:
    """Local polynomial fit of order ``q`` evaluated at every design point.

    A covariate matrix with zero columns gives the constant (global mean) fit.
    If ``h`` is None the rate-compliant default bandwidth is used.

    Raises
    ------
    SingularFit
        If a local normal matrix stays ill-conditioned after one ridge step.
    """
    X = _as_matrix(X)
    Y = np.asarray(Y, dtype=float).ravel()
    n, r = X.shape
    if len(Y) != n:
        raise ValidationError(f"Y has {len(Y)} entries but X has {n} rows")
    gamma = gamma_dim(r, q)
    if n <= gamma:
        raise TooFewObservations(f"local fit needs n > {gamma}, got {n}")
    kernel = kernel or KernelSpec()
    if r == 0:
        fitted = np.full(n, Y.mean())
        return LocalPolyFit(q, fitted, Y - fitted, gamma)
    h = _resolve_bandwidth(X, h, q)
    fitted = np.empty(n)
    ridged = 0
    for sl, rows, nr in _smoother_rows(X, kernel, h.lambdas, q):
        fitted[sl] = rows @ Y
        ridged += nr
    return LocalPolyFit(q, fitted, Y - fitted, gamma, bandwidth=h, n_ridged=ridged)
