"""Univariate surrogates for multivariate groups.

``supervised_pc`` turns a tested group Z into one score per observation;
``sir`` estimates the K x d reduction matrix used by group selection.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from npgroup.anovatest import TestConfig, null_residuals, univariate_test
from npgroup.errors import (
    DegenerateCovariance,
    DegenerateGroup,
    SingularCovariance,
    ValidationError,
)

COV_RTOL = 1e-12


@dataclass
class ProjectionResult:
    selected: NDArray[np.intp]
    coef: NDArray[np.floating]
    scores: NDArray[np.floating]
    pvalues: NDArray[np.floating]
    diagnostics: dict = field(default_factory=dict)


@dataclass
class SirEstimate:
    """SIR directions; ``b_matrix @ x`` gives the K reduced coordinates."""

    b_matrix: NDArray[np.floating]
    eigvals: NDArray[np.floating]
    n_slices: int
    k: int


def _sign_normalize(v: NDArray) -> NDArray:
    i = int(np.argmax(np.abs(v)))
    return -v if v[i] < 0 else v


def first_pc(M: ArrayLike, standardize: bool = False) -> NDArray[np.floating]:
    """Leading unit eigenvector of the sample covariance of column-centred M.

    Columns are not rescaled unless ``standardize`` is set.  The sign makes
    the largest-magnitude coordinate positive.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim == 1:
        M = M[:, None]
    n, k = M.shape
    if k < 1 or n < 2:
        raise ValidationError("first_pc needs k >= 1 columns and n >= 2 rows")
    C = M - M.mean(axis=0)
    if standardize:
        sd = C.std(axis=0, ddof=1)
        if np.any(sd == 0):
            raise DegenerateCovariance("constant column cannot be standardized")
        C = C / sd
    cov = C.T @ C / (n - 1)
    vals, vecs = np.linalg.eigh(cov)
    scale = max(np.max(np.abs(M)) ** 2, 1.0)
    if vals[-1] <= COV_RTOL * scale:
        raise DegenerateCovariance("sample covariance is numerically zero")
    v = vecs[:, -1]
    return _sign_normalize(v / np.linalg.norm(v))


def select_indices(
    pvalues: ArrayLike, theta: float, rule: Literal["rule1", "rule2"] = "rule1"
) -> NDArray[np.intp]:
    """Indices entering the supervised PC, sorted ascending.

    rule1: p_j < theta.  rule2: rule1 plus the smallest remaining p-value.
    Fewer than two indices fall back to the two smallest p-values.
    Ties in p-values are broken by index.
    """
    pv = np.asarray(pvalues, dtype=float)
    rank = np.argsort(pv, kind="stable")
    chosen = set(np.flatnonzero(pv < theta).tolist())
    if rule == "rule2":
        rest = [j for j in rank if j not in chosen]
        if rest:
            chosen.add(int(rest[0]))
    elif rule != "rule1":
        raise ValidationError(f"unknown rule {rule!r}")
    if len(chosen) < 2:
        chosen = set(rank[: min(2, len(pv))].tolist())
    return np.array(sorted(chosen), dtype=np.intp)


def supervised_pc(
    Y: ArrayLike,
    X_keep: ArrayLike,
    Z: ArrayLike,
    theta: float = 0.05,
    rule: Literal["rule1", "rule2"] = "rule1",
    cfg: TestConfig | None = None,
    residuals: ArrayLike | None = None,
) -> ProjectionResult:
    """First principal component of the coordinates of Z that look relevant.

    Each coordinate is screened with :func:`univariate_test` against the null
    residuals of Y on X_keep; constant coordinates are dropped (their
    p-value is reported as 1) and listed under ``diagnostics["dropped"]``.
    """
    cfg = cfg or TestConfig()
    Y = np.asarray(Y, dtype=float).ravel()
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    n, s = Z.shape
    if s < 1:
        raise ValidationError("Z must have at least one column")
    if not 0 < theta < 1:
        raise ValidationError("theta must lie in (0, 1)")
    if residuals is None:
        residuals, _ = null_residuals(Y, X_keep, cfg)
    if s == 1:
        pv = np.array([univariate_test(Y, None, Z[:, 0], cfg, residuals=residuals).p_value])
        return ProjectionResult(np.array([0]), np.ones(1), Z[:, 0].copy(), pv)

    live = np.flatnonzero(np.ptp(Z, axis=0) > 0)
    diag: dict = {}
    if len(live) < s:
        diag["dropped"] = [int(j) for j in np.setdiff1d(np.arange(s), live)]
    if len(live) == 0:
        raise DegenerateGroup("every coordinate of the tested group is constant")
    pvalues = np.ones(s)
    for j in live:
        pvalues[j] = univariate_test(Y, None, Z[:, j], cfg, residuals=residuals).p_value
    sel_live = select_indices(pvalues[live], theta, rule)
    selected = live[sel_live]
    coef = np.zeros(s)
    coef[selected] = first_pc(Z[:, selected], standardize=cfg.standardize_pca)
    diag["pca"] = "standardized" if cfg.standardize_pca else "centered"
    return ProjectionResult(selected, coef, Z @ coef, pvalues, diag)


def _inv_sqrt(cov: NDArray) -> NDArray:
    vals, vecs = np.linalg.eigh(cov)
    if vals[0] <= 1e-10 * max(vals[-1], 1e-300):
        raise SingularCovariance("covariate covariance is singular (d >= n or collinear columns)")
    return (vecs / np.sqrt(vals)) @ vecs.T


def slice_labels(Y: ArrayLike, n_slices: int) -> NDArray[np.intp]:
    """Slice membership by response order; a two-valued response slices by class."""
    Y = np.asarray(Y, dtype=float).ravel()
    levels = np.unique(Y)
    if len(levels) == 2:
        return (Y == levels[1]).astype(np.intp)
    order = np.argsort(Y, kind="stable")
    labels = np.empty(len(Y), dtype=np.intp)
    for h, idx in enumerate(np.array_split(order, n_slices)):
        labels[idx] = h
    return labels


def sir(X: ArrayLike, Y: ArrayLike, n_slices: int | None = None, k: int = 2) -> SirEstimate:
    """Sliced inverse regression estimate of the reduction matrix B.

    ``n_slices`` defaults to 2 for a binary response and 10 otherwise.  Rows
    of ``b_matrix`` satisfy B Sigma B' = I, i.e. they are orthonormal in the
    standardized-covariate metric.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float).ravel()
    n, d = X.shape
    binary = len(np.unique(Y)) == 2
    if n_slices is None:
        n_slices = 2 if binary else 10
    if n_slices < 2:
        raise ValidationError("SIR needs at least 2 slices")
    if n < n_slices or n <= d:
        raise ValidationError(f"SIR needs n > d and n >= n_slices (n={n}, d={d})")
    if not 1 <= k <= d:
        raise ValidationError(f"k must lie in [1, {d}], got {k}")
    mu = X.mean(axis=0)
    root = _inv_sqrt(np.cov(X, rowvar=False, bias=True).reshape(d, d))
    Xs = (X - mu) @ root
    labels = slice_labels(Y, n_slices)
    M = np.zeros((d, d))
    for h in np.unique(labels):
        idx = labels == h
        m = Xs[idx].mean(axis=0)
        M += idx.mean() * np.outer(m, m)
    vals, vecs = np.linalg.eigh(M)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    eta = np.stack([_sign_normalize(vecs[:, j]) for j in range(k)])
    B = eta @ root
    return SirEstimate(b_matrix=B, eigvals=np.clip(vals, 0, None), n_slices=int(len(np.unique(labels))), k=k)
