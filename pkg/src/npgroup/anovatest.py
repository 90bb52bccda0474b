"""ANOVA-type significance test for a group of covariates.

Null-model residuals are arranged into overlapping nearest-neighbour cells
along a univariate surrogate score, and the balanced one-way ANOVA contrast
MST - MSE over these augmented cells is standardized with a difference-based
fourth-moment estimate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.stats import norm

from npgroup.errors import (
    DegenerateVariance,
    EmptyGroup,
    TooFewCells,
    TooFewObservations,
    ValidationError,
)
from npgroup.smoothing import Bandwidth, KernelSpec, default_bandwidth, local_poly_fit

# residuals below this fraction of sd(Y) are treated as an exact null fit
EXACT_FIT_RTOL = 1e-9

VARIANTS = {
    "a": ("rule1", 0.05),
    "b": ("rule1", 0.2),
    "c": ("rule2", 0.05),
    "d": ("rule2", 0.2),
}


@dataclass
class TestConfig:
    """Tuning of the group test.

    ``theta`` and ``rule`` control which coordinates enter the supervised
    principal component; see :data:`VARIANTS` for the four standard settings.
    """

    __test__ = False  # not a pytest class

    p: int = 11
    theta: float = 0.05
    rule: Literal["rule1", "rule2"] = "rule1"
    q: int = 1
    kernel: KernelSpec = field(default_factory=KernelSpec)
    bandwidth: Bandwidth | None = None
    bandwidth_c: float = 1.0
    standardize_pca: bool = False

    def __post_init__(self):
        _check_window_size(self.p)
        if not 0 < self.theta < 1:
            raise ValidationError(f"theta must lie in (0, 1), got {self.theta}")
        if self.rule not in ("rule1", "rule2"):
            raise ValidationError(f"unknown rule {self.rule!r}")
        if self.q < 0:
            raise ValidationError("q must be non-negative")

    @classmethod
    def variant(cls, name: str, **kw) -> "TestConfig":
        rule, theta = VARIANTS[name]
        return cls(rule=rule, theta=theta, **kw)

    def as_dict(self) -> dict:
        return {
            "p": self.p,
            "theta": self.theta,
            "rule": self.rule,
            "q": self.q,
            "kernel": self.kernel.family,
            "bandwidth": None if self.bandwidth is None else self.bandwidth.as_dict()["lambdas"],
            "bandwidth_c": self.bandwidth_c,
            "standardize_pca": self.standardize_pca,
        }


@dataclass
class WindowLayout:
    """Nearest-neighbour cells over sorted scores.

    ``windows[i]`` holds the sorted positions of cell i; ``members[i]`` the
    corresponding original observation indices.
    """

    order: NDArray[np.intp]
    p: int
    windows: NDArray[np.intp]
    n_cells: int

    @property
    def n(self) -> int:
        return len(self.order)

    @property
    def members(self) -> NDArray[np.intp]:
        return self.order[self.windows]


@dataclass
class TestResult:
    __test__ = False

    mst: float
    mse: float
    tau2_hat: float
    z: float
    p_value: float
    p: int
    n: int
    diagnostics: dict = field(default_factory=dict)


def _check_window_size(p: int) -> None:
    if int(p) != p or p < 3 or p % 2 == 0:
        raise ValidationError(f"window size p must be an odd integer >= 3, got {p}")


def build_windows(scores: ArrayLike, p: int) -> WindowLayout:
    """Sort scores (ties by original index) and form the n - p + 1 interior cells."""
    _check_window_size(p)
    scores = np.asarray(scores, dtype=float).ravel()
    n = len(scores)
    if n < p:
        raise TooFewObservations(f"need at least p={p} observations, got {n}")
    order = np.argsort(scores, kind="stable")
    n_cells = n - p + 1
    windows = np.arange(n_cells)[:, None] + np.arange(p)[None, :]
    return WindowLayout(order=order, p=int(p), windows=windows, n_cells=n_cells)


def augmented_cells(residuals: ArrayLike, layout: WindowLayout) -> NDArray[np.floating]:
    """The (n_cells, p) array of residuals making up each augmented cell."""
    residuals = np.asarray(residuals, dtype=float).ravel()
    if len(residuals) != layout.n:
        raise ValidationError("residuals and layout disagree on n")
    return residuals[layout.members]


def mst_mse(residuals: ArrayLike, layout: WindowLayout) -> tuple[float, float]:
    cells = augmented_cells(residuals, layout)
    N, p = cells.shape
    if N < 2:
        raise TooFewCells(f"need at least 2 cells, got {N}")
    means = cells.mean(axis=1)
    grand = means.mean()
    mst = p * np.sum((means - grand) ** 2) / (N - 1)
    mse = np.sum((cells - means[:, None]) ** 2) / (N * (p - 1))
    return float(mst), float(mse)


def quadratic_form_oracle(residuals: ArrayLike, layout: WindowLayout) -> float:
    """MST - MSE written as a dense quadratic form in the augmented vector.

    Slow (O((Np)^2) memory); only meant for cross-checking :func:`mst_mse`.
    """
    xi = augmented_cells(residuals, layout).ravel()
    N, p = layout.n_cells, layout.p
    if N < 2:
        raise TooFewCells(f"need at least 2 cells, got {N}")
    Np = N * p
    block = np.kron(np.eye(N), np.ones((p, p)))
    A = (
        (Np - 1) / (N * (N - 1) * p * (p - 1)) * block
        - np.ones((Np, Np)) / (N * (N - 1) * p)
        - np.eye(Np) / (N * (p - 1))
    )
    return float(xi @ A @ xi)


def tau2_hat(residuals_sorted: ArrayLike) -> float:
    """Rice-type estimate of E[sigma^4] from lag-1 differences of ordered residuals."""
    e = np.asarray(residuals_sorted, dtype=float).ravel()
    n = len(e)
    if n < 4:
        raise TooFewObservations(f"tau2_hat needs n >= 4, got {n}")
    d2 = np.diff(e) ** 2
    return float(np.sum(d2[:-2] * d2[2:]) / (4 * (n - 3)))


def variance_constant(p: int) -> float:
    """Asymptotic variance of sqrt(n)(MST - MSE) in units of E[sigma^4]."""
    return 2 * p * (2 * p - 1) / (3 * (p - 1))


def standardize(mst: float, mse: float, tau2: float, n: int, p: int) -> tuple[float, float]:
    """One-sided standardization; large z means evidence against the null."""
    if not np.isfinite(tau2) or tau2 <= 0:
        raise DegenerateVariance(f"tau2 must be positive and finite, got {tau2}")
    z = np.sqrt(n) * (mst - mse) / np.sqrt(variance_constant(p) * tau2)
    return float(z), float(norm.sf(z))


def residual_test(
    residuals: ArrayLike,
    scores: ArrayLike,
    p: int = 11,
    y_scale: float | None = None,
    diagnostics: dict | None = None,
) -> TestResult:
    """Test statistic from given residuals and univariate scores.

    Two degenerate inputs short-circuit to z = 0, p-value = 1/2 with
    MST = MSE: residuals that vanish relative to ``y_scale`` (exact null fit),
    and constant scores (a single factor level).
    """
    e = np.asarray(residuals, dtype=float).ravel()
    s = np.asarray(scores, dtype=float).ravel()
    n = len(e)
    if len(s) != n:
        raise ValidationError("scores and residuals have different lengths")
    diag = dict(diagnostics or {})
    scale = float(np.std(e)) if y_scale is None else float(y_scale)
    reason = None
    if scale == 0 or np.max(np.abs(e - e.mean())) <= EXACT_FIT_RTOL * scale:
        reason = "exact_fit"
    elif np.ptp(s) == 0:
        reason = "constant_scores"
    if reason is not None:
        build_windows(s, p)  # still validate n >= p
        v = float(np.var(e, ddof=1)) if reason == "constant_scores" else 0.0
        diag["degenerate"] = reason
        return TestResult(v, v, 0.0, 0.0, 0.5, p, n, diag)
    layout = build_windows(s, p)
    mst, mse = mst_mse(e, layout)
    t2 = tau2_hat(e[layout.order])
    z, pval = standardize(mst, mse, t2, n, p)
    return TestResult(mst, mse, t2, z, pval, p, n, diag)


def _as_columns(A: ArrayLike, n: int, what: str) -> NDArray[np.floating]:
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None] if A.size else A.reshape(n, 0)
    if A.ndim != 2 or A.shape[0] != n:
        raise ValidationError(f"{what} must have {n} rows")
    return A


def null_residuals(
    Y: ArrayLike, X_keep: ArrayLike, cfg: TestConfig | None = None
) -> tuple[NDArray[np.floating], dict]:
    """Residuals of the local polynomial fit of Y on X_keep.

    Constant columns of X_keep carry no information and are dropped; with no
    columns left the null model is the global mean.
    """
    cfg = cfg or TestConfig()
    Y = np.asarray(Y, dtype=float).ravel()
    X = _as_columns(X_keep, len(Y), "X_keep")
    keep = np.ptp(X, axis=0) > 0 if X.shape[1] else np.zeros(0, dtype=bool)
    diag: dict = {}
    if not np.all(keep):
        diag["dropped_constant_x"] = [int(j) for j in np.flatnonzero(~keep)]
    X = X[:, keep]
    h = cfg.bandwidth
    if X.shape[1] and h is None:
        h = default_bandwidth(X, cfg.q, cfg.bandwidth_c)
    fit = local_poly_fit(X, Y, cfg.kernel, h, cfg.q)
    diag["bandwidth"] = None if fit.bandwidth is None else [float(v) for v in fit.bandwidth.lambdas]
    if fit.n_ridged:
        diag["n_ridged"] = fit.n_ridged
    return fit.residuals, diag


def univariate_test(
    Y: ArrayLike,
    X_keep: ArrayLike,
    z_col: ArrayLike,
    cfg: TestConfig | None = None,
    residuals: ArrayLike | None = None,
) -> TestResult:
    """Test a single covariate, using its own values as the scores.

    Pass precomputed null ``residuals`` to skip refitting Y on X_keep.
    """
    cfg = cfg or TestConfig()
    Y = np.asarray(Y, dtype=float).ravel()
    diag: dict = {}
    if residuals is None:
        residuals, diag = null_residuals(Y, X_keep, cfg)
    z_col = np.asarray(z_col, dtype=float).ravel()
    diag["scores"] = "covariate"
    return residual_test(residuals, z_col, cfg.p, y_scale=float(np.std(Y)), diagnostics=diag)


def group_test(
    Y: ArrayLike, X_keep: ArrayLike, Z_group: ArrayLike, cfg: TestConfig | None = None
) -> TestResult:
    """Test H0: E[Y | X, Z] does not depend on Z.

    Multivariate groups are reduced to the supervised first principal
    component before windows are formed.
    """
    from npgroup.projection import supervised_pc

    cfg = cfg or TestConfig()
    Y = np.asarray(Y, dtype=float).ravel()
    n = len(Y)
    Z = _as_columns(Z_group, n, "Z_group")
    if Z.shape[1] == 0:
        raise EmptyGroup("the tested group has no covariates")
    if not (np.all(np.isfinite(Y)) and np.all(np.isfinite(Z))):
        raise ValidationError("non-finite values in Y or Z")
    residuals, diag = null_residuals(Y, X_keep, cfg)
    if Z.shape[1] == 1:
        scores = Z[:, 0]
        diag["scores"] = "covariate"
    else:
        proj = supervised_pc(Y, X_keep, Z, cfg.theta, cfg.rule, cfg, residuals=residuals)
        scores = proj.scores
        diag["scores"] = "supervised_pc"
        diag["selected"] = [int(j) for j in proj.selected]
        diag["coef"] = [float(c) for c in proj.coef]
        diag["univariate_pvalues"] = [float(v) for v in proj.pvalues]
        diag.update(proj.diagnostics)
    return residual_test(residuals, scores, cfg.p, y_scale=float(np.std(Y)), diagnostics=diag)
