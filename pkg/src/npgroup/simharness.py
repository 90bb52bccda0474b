"""Seeded simulation designs and a replication engine for power and selection studies.

Randomness: every replication draws from its own Philox (counter-based,
64-bit) stream keyed by ``SeedSequence([seed, replication])``.  Streams do
not depend on scheduling, so serial and pooled runs give identical reports.
Within a rejection study all grid points of one replication share the same
stream (common random numbers), which makes power curves smoother.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
from numpy.typing import NDArray

from npgroup.anovatest import TestConfig, group_test
from npgroup.data import Dataset
from npgroup.errors import NumericalError, ValidationError
from npgroup.selection import GroupMap, SelectConfig, backward_select

log = logging.getLogger(__name__)

CONFIG_PREFIX = "# npgroup-config: "

DesignName = Literal["additive", "nonadditive", "hetero"]

# design -> (default theta grid, null columns, tested columns)
REJECTION_DESIGNS: dict[str, tuple[str, tuple[float, ...]]] = {
    "table1": ("additive", (0.0, 0.2, 0.4, 0.6, 0.8)),
    "table2": ("nonadditive", (0.0, 0.02, 0.04, 0.06, 0.08)),
    "table3": ("hetero", (0.0, 0.3, 0.6, 1.0, 2.0)),
}
DESIGN_ROLES = {
    "additive": (["X1"], ["Z1", "Z2", "Z3"]),
    "nonadditive": (["X1", "X2"], ["Z1", "Z2"]),
    "hetero": (["X1"], ["Z1", "Z2"]),
}
# design -> (family, model, default n)
SELECTION_DESIGNS: dict[str, tuple[str, int, int]] = {
    "table4-model1": ("continuous", 1, 100),
    "table4-model2": ("continuous", 2, 100),
    "table4-model3": ("continuous", 3, 100),
    "table5-model1": ("logistic", 1, 100),
    "table5-model2": ("logistic", 2, 100),
    "table5-model3": ("logistic", 3, 200),
}

LOGISTIC_BETA = {
    1: np.array([1, -2.2, 2, 0, 0, 0, 0, 0, 0, 0, 1, 2, 0, 0, 0, 0], dtype=float),
    2: np.array([1, -2.2, 3, 0, 0, 0, 0, 0, 0, 0, 1, 3, 0, 0, 0, 0], dtype=float),
}


def make_rng(seed: int | Sequence[int]) -> np.random.Generator:
    entropy = [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def signed_power(base: NDArray, expo: NDArray) -> NDArray:
    """sign(base) * |base|**expo, a real-valued stand-in for base**expo."""
    with np.errstate(divide="ignore", over="ignore"):
        return np.sign(base) * np.abs(base) ** expo


def gen_model_check(
    design: DesignName, theta: float, n: int, seed: int | Sequence[int]
) -> Dataset:
    """One sample from the additive, non-additive or heteroscedastic design."""
    if n < 1:
        raise ValidationError("n must be positive")
    rng = make_rng(seed)
    if design == "additive":
        U = rng.standard_normal((n, 4))
        eps = rng.standard_normal(n)
        X1, Z = U[:, 0], U[:, 1:]
        y = X1 + theta * Z.sum(axis=1) + eps
    elif design == "nonadditive":
        U = rng.standard_normal((n, 4))
        eps = 0.1 * rng.standard_normal(n)
        X1, X2, Z1, Z2 = U.T
        s = theta * (Z1 + Z2)
        y = signed_power(X1, X2) * (1 + s) + signed_power(X2, s) + eps
    elif design == "hetero":
        U = rng.standard_normal((n, 3))
        eps = 0.5 * rng.standard_normal(n)
        X1, Z1, Z2 = U.T
        y = X1 + theta * np.sin(Z1 * Z2) + Z1 * Z2 * eps
    else:
        raise ValidationError(f"unknown design {design!r}")
    null, tested = DESIGN_ROLES[design]
    return Dataset(y, U, null + tested)


def continuous_mean(model: int, X3: NDArray, X6: NDArray) -> NDArray:
    a = X3**3 + X3**2 + X3
    b = X6**3 / 3 - X6**2 + 2 * X6 / 3
    if model == 1:
        return a + b
    if model == 2:
        return np.sin(a) + b
    if model == 3:
        return 10 * np.sin(a) + 5 * np.sin(b)
    raise ValidationError(f"unknown continuous model {model}")


def gen_group_continuous(model: int, n: int, seed: int | Sequence[int]) -> tuple[Dataset, GroupMap]:
    """16 equicorrelated latent covariates, each expanded to (X^3, X^2, X)."""
    if n < 1:
        raise ValidationError("n must be positive")
    rng = make_rng(seed)
    Zl = rng.standard_normal((n, 16))
    W = rng.standard_normal((n, 1))
    eps = 2.0 * rng.standard_normal(n)
    L = (Zl + W) / np.sqrt(2)
    x = np.stack([L**3, L**2, L], axis=2).reshape(n, 48)
    y = continuous_mean(model, L[:, 2], L[:, 5]) + eps
    names = [f"X{i + 1}^{k}" for i in range(16) for k in (3, 2, 1)]
    gm = GroupMap.sequential(48, 3)
    return Dataset(y, x, names), gm


def logistic_prob(model: int, X: NDArray) -> NDArray:
    if model in LOGISTIC_BETA:
        eta = LOGISTIC_BETA[model][0] + X @ LOGISTIC_BETA[model][1:]
    elif model == 3:
        eta = 18 * np.sin(np.pi * X[:, 1]) + 18 * np.sin(np.pi * X[:, 7])
    else:
        raise ValidationError(f"unknown logistic model {model}")
    return 1.0 / (1.0 + np.exp(-eta))


def gen_group_logistic(model: int, n: int, seed: int | Sequence[int]) -> tuple[Dataset, GroupMap]:
    if n < 1:
        raise ValidationError("n must be positive")
    rng = make_rng(seed)
    if model in (1, 2):
        X = rng.uniform(0, 1, (n, 15))
    elif model == 3:
        X = np.column_stack([rng.uniform(0, 3, (n, 11)), rng.normal(-3, 1, n)])
    else:
        raise ValidationError(f"unknown logistic model {model}")
    y = (rng.uniform(size=n) < logistic_prob(model, X)).astype(float)
    d = X.shape[1]
    return Dataset(y, X, [f"X{j + 1}" for j in range(d)]), GroupMap.sequential(d, 3)


def true_groups(design: str) -> list[int]:
    family, model, _ = SELECTION_DESIGNS[design]
    if family == "continuous":
        return [2, 5]
    return [0, 3] if model in (1, 2) else [0, 2]


def score_selection(retained: Sequence[int], truth: Sequence[int]) -> tuple[int, int]:
    """(number of true groups retained, number of other groups retained)."""
    r, t = set(retained), set(truth)
    return len(r & t), len(r - t)


@dataclass
class SimConfig:
    design: str
    grid: tuple[float, ...] | None = None
    n: int | None = None
    replications: int = 500
    seed: int = 0
    alpha: float = 0.05
    test: TestConfig = field(default_factory=TestConfig)
    select: SelectConfig = field(default_factory=SelectConfig)
    jobs: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValidationError("replications must be >= 1")
        if self.design not in REJECTION_DESIGNS and self.design not in SELECTION_DESIGNS:
            known = sorted([*REJECTION_DESIGNS, *SELECTION_DESIGNS])
            raise ValidationError(f"unknown design {self.design!r}; choose from {known}")
        if self.grid is not None:
            self.grid = tuple(float(g) for g in self.grid)
            if not self.grid:
                raise ValidationError("grid must be nonempty")

    @property
    def kind(self) -> str:
        return "rejection" if self.design in REJECTION_DESIGNS else "selection"

    def resolved_grid(self) -> tuple[float, ...]:
        if self.kind == "selection":
            return ()
        return self.grid if self.grid is not None else REJECTION_DESIGNS[self.design][1]

    def resolved_n(self) -> int:
        if self.n is not None:
            return self.n
        return 200 if self.kind == "rejection" else SELECTION_DESIGNS[self.design][2]

    def as_dict(self) -> dict:
        out = {
            "design": self.design,
            "n": self.resolved_n(),
            "replications": self.replications,
            "seed": self.seed,
            "alpha": self.alpha,
        }
        if self.kind == "rejection":
            out["grid"] = list(self.resolved_grid())
            out["test"] = self.test.as_dict()
        else:
            out["select"] = self.select.as_dict()
        return out


@dataclass
class SimReport:
    kind: str
    columns: list[str]
    rows: list[dict]
    config: dict
    notes: list[str] = field(default_factory=list)
    wall_clock: float = 0.0  # not serialized, keeps output byte-stable

    def _fmt(self, v) -> str:
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    def footer(self) -> list[str]:
        lines = [f"# note: {s}" for s in self.notes]
        lines.append(CONFIG_PREFIX + json.dumps(self.config, sort_keys=True))
        return lines

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for row in self.rows:
            w.writerow([self._fmt(row[c]) for c in self.columns])
        return buf.getvalue() + "\n".join(self.footer()) + "\n"

    def to_text(self) -> str:
        cells = [self.columns] + [[self._fmt(r[c]) for c in self.columns] for r in self.rows]
        widths = [max(len(row[i]) for row in cells) for i in range(len(self.columns))]
        rule = "-" * (sum(widths) + 2 * (len(widths) - 1))
        lines = ["  ".join(h.rjust(w) for h, w in zip(cells[0], widths)), rule]
        lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells[1:]]
        return "\n".join(lines + [rule] + self.footer()) + "\n"


def _mc_se(rate: float, reps: int) -> float:
    return float(np.sqrt(rate * (1 - rate) / reps)) if reps else float("nan")


def _map(fn: Callable, items: list, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))


def _rejection_rep(args) -> list[float | None]:
    cfg, rep = args
    design = REJECTION_DESIGNS[cfg.design][0]
    null, tested = DESIGN_ROLES[design]
    out: list[float | None] = []
    for theta in cfg.resolved_grid():
        ds = gen_model_check(design, theta, cfg.resolved_n(), (cfg.seed, rep))
        try:
            out.append(group_test(ds.y, ds.columns(null), ds.columns(tested), cfg.test).p_value)
        except NumericalError as exc:
            log.warning("replication %d, theta=%g failed: %s", rep, theta, exc)
            out.append(None)
    return out


def run_rejection_study(cfg: SimConfig) -> SimReport:
    """Rejection rates at level ``cfg.alpha`` over the theta grid."""
    if cfg.kind != "rejection":
        raise ValidationError(f"{cfg.design} is not a rejection-rate design")
    t0 = time.perf_counter()
    pvals = _map(_rejection_rep, [(cfg, r) for r in range(cfg.replications)], cfg.jobs)
    rows = []
    for gi, theta in enumerate(cfg.resolved_grid()):
        ok = [p[gi] for p in pvals if p[gi] is not None]
        rate = float(np.mean([p <= cfg.alpha for p in ok])) if ok else float("nan")
        rows.append(
            {
                "design": cfg.design,
                "theta": theta,
                "n": cfg.resolved_n(),
                "reps": len(ok),
                "failed": cfg.replications - len(ok),
                "rate": rate,
                "se": _mc_se(rate, len(ok)),
            }
        )
    cols = ["design", "theta", "n", "reps", "failed", "rate", "se"]
    report = SimReport("rejection", cols, rows, cfg.as_dict())
    if REJECTION_DESIGNS[cfg.design][0] == "nonadditive":
        report.notes.append("x**y evaluated as sign(x)*|x|**y")
    report.wall_clock = time.perf_counter() - t0
    return report


def generate_selection_data(design: str, n: int, seed) -> tuple[Dataset, GroupMap]:
    family, model, _ = SELECTION_DESIGNS[design]
    gen = gen_group_continuous if family == "continuous" else gen_group_logistic
    return gen(model, n, seed)


def _selection_rep(args) -> tuple[int, int] | None:
    cfg, rep = args
    ds, gm = generate_selection_data(cfg.design, cfg.resolved_n(), (cfg.seed, rep))
    try:
        trace = backward_select(ds.y, ds.x, gm, cfg.alpha, cfg.select)
    except NumericalError as exc:
        log.warning("replication %d failed: %s", rep, exc)
        return None
    return score_selection(trace.retained, true_groups(cfg.design))


def run_selection_study(cfg: SimConfig) -> SimReport:
    """Mean numbers of correctly and incorrectly retained groups."""
    if cfg.kind != "selection":
        raise ValidationError(f"{cfg.design} is not a selection design")
    t0 = time.perf_counter()
    res = _map(_selection_rep, [(cfg, r) for r in range(cfg.replications)], cfg.jobs)
    ok = np.array([r for r in res if r is not None], dtype=float).reshape(-1, 2)
    m = len(ok)

    def mean_se(col):
        if m == 0:
            return float("nan"), float("nan")
        sd = ok[:, col].std(ddof=1) if m > 1 else 0.0
        return float(ok[:, col].mean()), float(sd / np.sqrt(m))

    (mc, sc), (mi, si) = mean_se(0), mean_se(1)
    row = {
        "design": cfg.design,
        "n": cfg.resolved_n(),
        "reps": m,
        "failed": cfg.replications - m,
        "correct": mc,
        "se_correct": sc,
        "incorrect": mi,
        "se_incorrect": si,
    }
    cols = list(row)
    report = SimReport("selection", cols, [row], cfg.as_dict())
    truth = ", ".join(f"g{g + 1}" for g in true_groups(cfg.design))
    report.notes.append(f"counts are groups; true groups: {truth}")
    if cfg.design in ("table5-model1", "table5-model2"):
        report.notes.append("published column may count covariates rather than groups for this model")
    report.wall_clock = time.perf_counter() - t0
    return report


def run_study(cfg: SimConfig) -> SimReport:
    return run_rejection_study(cfg) if cfg.kind == "rejection" else run_selection_study(cfg)
