"""Command-line interface: ``npgroup test | select | simulate``.

Settings resolve as flags > ``--config`` file > defaults.  The config file is
one flat JSON object whose keys are the :class:`RunConfig` field names, e.g.
``{"p": 11, "alpha": 0.1, "k": 2}``.  Every report ends with a line
``# npgroup-config: <json>`` holding the resolved configuration.

Exit codes: 0 success, 2 invalid input, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import secrets
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from npgroup.anovatest import TestConfig, group_test
from npgroup.data import ingest_csv
from npgroup.errors import NumericalError, ValidationError
from npgroup.selection import SELECT_BANDWIDTH_C, SelectConfig, backward_select
from npgroup.simharness import CONFIG_PREFIX, SimConfig, run_study
from npgroup.smoothing import Bandwidth

EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 2, 3
MIN_N = 10


@dataclass
class RunConfig:
    p: int = 11
    theta: float = 0.05
    rule: str = "rule1"
    q: int = 1
    bandwidth: float | list[float] | None = None
    bandwidth_c: float | None = None  # None: 1.0 for tests, 1.25 inside selection
    alpha: float = 0.05
    k: int = 2
    n_slices: int | None = None
    seed: int | None = None

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValidationError(f"alpha must lie in (0, 1), got {self.alpha}")
        self.test_config()  # validates p, theta, rule, q, bandwidth

    def test_config(self, default_c: float = 1.0) -> TestConfig:
        bw = None
        if self.bandwidth is not None:
            bw = Bandwidth(np.atleast_1d(np.asarray(self.bandwidth, dtype=float)))
        return TestConfig(
            p=self.p, theta=self.theta, rule=self.rule, q=self.q,
            bandwidth=bw, bandwidth_c=default_c if self.bandwidth_c is None else self.bandwidth_c,
        )

    def select_config(self) -> SelectConfig:
        return SelectConfig(
            test=self.test_config(SELECT_BANDWIDTH_C), k=self.k, n_slices=self.n_slices, seed=self.seed
        )


def _config_line(cfg: dict) -> str:
    return CONFIG_PREFIX + json.dumps(cfg, sort_keys=True)


def load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError("config file must hold a flat JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
    return data


def resolve_config(args: argparse.Namespace) -> RunConfig:
    merged = load_config_file(getattr(args, "config", None))
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            merged[f.name] = v
    return RunConfig(**merged)


def _split(s: str | None) -> list[str]:
    return [c for c in (s or "").split(",") if c]


def _load(args, group_spec=None):
    ds, gm = ingest_csv(args.data, args.response, group_spec)
    if ds.n < MIN_N:
        raise ValidationError(f"need at least {MIN_N} observations, got {ds.n}")
    return ds, gm


def _write(path: str | None, text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")


def cmd_test(args) -> int:
    rc = resolve_config(args)
    ds, _ = _load(args)
    null_cols, test_cols = _split(args.null_cols), _split(args.test_cols)
    if not test_cols:
        raise ValidationError("--test-cols must name at least one column")
    overlap = set(null_cols) & set(test_cols)
    if overlap:
        raise ValidationError(f"columns in both --null-cols and --test-cols: {sorted(overlap)}")
    tc = rc.test_config()
    res = group_test(ds.y, ds.columns(null_cols), ds.columns(test_cols), tc)
    cfg = {**asdict(rc), "bandwidth_c": tc.bandwidth_c, "command": "test", "null_cols": null_cols, "test_cols": test_cols}
    cols = ["n", "p", "mst", "mse", "tau2_hat", "z", "p_value"]
    vals = [res.n, res.p, res.mst, res.mse, res.tau2_hat, res.z, res.p_value]
    lines = [f"{c:<9}{v:.6g}" if isinstance(v, float) else f"{c:<9}{v}" for c, v in zip(cols, vals)]
    lines.append("diagnostics " + json.dumps(res.diagnostics, sort_keys=True))
    lines.append(_config_line(cfg))
    print("\n".join(lines))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    w.writerow([repr(v) if isinstance(v, float) else v for v in vals])
    _write(args.out, buf.getvalue() + _config_line(cfg) + "\n")
    return EXIT_OK


def cmd_select(args) -> int:
    rc = resolve_config(args)
    if not args.groups:
        raise ValidationError("--groups is required")
    spec = args.groups[0] if len(args.groups) == 1 else args.groups
    ds, gm = _load(args, spec)
    sc = rc.select_config()
    trace = backward_select(ds.y, ds.x, gm, rc.alpha, sc)
    cfg = {**asdict(rc), "bandwidth_c": sc.test.bandwidth_c, "command": "select"}
    cols = ["iteration", "group", "pvalue", "z", "cutoff_k", "eliminated"]
    rows = []
    for it_no, it in enumerate(trace.iterations, start=1):
        for g, pv, z in zip(it.active_groups, it.pvalues, it.z):
            rows.append([it_no, trace.labels[g], pv, z, it.cutoff_k, int(g == it.eliminated_group)])
    out = [f"{'iter':>4}  {'group':<12}{'p-value':>12}{'z':>10}  k  eliminated"]
    for it_no, label, pv, z, k, el in rows:
        out.append(f"{it_no:>4}  {label:<12}{pv:>12.4g}{z:>10.3f}  {k}  {'*' if el else ''}")
    out.append("retained: " + (", ".join(trace.retained_labels) or "(none)"))
    out.append(_config_line(cfg))
    print("\n".join(out))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    buf.write("# retained: " + ",".join(trace.retained_labels) + "\n")
    _write(args.out, buf.getvalue() + _config_line(cfg) + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    rc = resolve_config(args)
    seed = rc.seed if rc.seed is not None else secrets.randbits(32)
    grid = None
    if args.grid:
        grid = tuple(float(v) for tok in args.grid for v in _split(tok))
    test_cfg = rc.test_config()
    sel = rc.select_config()
    if args.variant:
        test_cfg = TestConfig.variant(args.variant, p=rc.p, q=rc.q, bandwidth=test_cfg.bandwidth,
                                      bandwidth_c=test_cfg.bandwidth_c)
        sel.test = TestConfig.variant(args.variant, p=rc.p, q=rc.q, bandwidth=sel.test.bandwidth,
                                      bandwidth_c=sel.test.bandwidth_c)
    sel.seed = seed
    cfg = SimConfig(
        design=args.design, grid=grid, n=args.n, replications=args.reps, seed=seed,
        alpha=rc.alpha, test=test_cfg, select=sel, jobs=args.jobs,
    )
    report = run_study(cfg)
    logging.getLogger(__name__).info("wall clock %.2fs", report.wall_clock)
    sys.stdout.write(report.to_text())
    _write(args.out, report.to_csv())
    return EXIT_OK


def _add_tuning(p: argparse.ArgumentParser, threshold_flag: str = "--theta") -> None:
    g = p.add_argument_group("tuning (override --config)")
    g.add_argument("--config", help="flat JSON file with RunConfig keys")
    g.add_argument("--p", type=int, help="window size, odd >= 3 (default 11)")
    g.add_argument(threshold_flag, dest="theta", type=float,
                   help="p-value threshold for the supervised PC (default 0.05)")
    g.add_argument("--rule", choices=["rule1", "rule2"])
    g.add_argument("--q", type=int, help="local polynomial order (default 1)")
    g.add_argument("--bandwidth", type=float, help="fixed bandwidth, in covariate units")
    g.add_argument("--bandwidth-c", dest="bandwidth_c", type=float,
                   help="constant of the default bandwidth (default 1.0; 1.25 in select)")
    g.add_argument("--alpha", type=float, help="level (default 0.05)")
    g.add_argument("--k", type=int, help="SIR dimension K (default 2)")
    g.add_argument("--n-slices", dest="n_slices", type=int, help="SIR slices")
    g.add_argument("--seed", type=int)
    p.add_argument("--out", help="also write the report as CSV")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="npgroup", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="test the significance of a group of covariates")
    t.add_argument("data", help="CSV file with a header row")
    t.add_argument("--response", required=True)
    t.add_argument("--null-cols", default="", help="comma-separated covariates kept under H0")
    t.add_argument("--test-cols", required=True, help="comma-separated covariates tested")
    _add_tuning(t)
    t.set_defaults(func=cmd_test)

    s = sub.add_parser("select", help="backward-elimination group selection")
    s.add_argument("data")
    s.add_argument("--response", required=True)
    s.add_argument("--groups", action="append",
                   help="'name:col1,col2 name2:col3' (repeatable) or a column,group CSV file")
    _add_tuning(s)
    s.set_defaults(func=cmd_select)

    m = sub.add_parser("simulate", help="run a simulation study")
    m.add_argument("--design", required=True,
                   help="table1..table3 or table4-model1..3, table5-model1..3")
    m.add_argument("--theta", dest="grid", action="append",
                   help="effect size(s) for rejection designs; repeatable or comma-separated")
    m.add_argument("--reps", type=int, default=500)
    m.add_argument("--n", type=int)
    m.add_argument("--variant", choices=["a", "b", "c", "d"])
    m.add_argument("--jobs", type=int, default=1)
    _add_tuning(m, threshold_flag="--threshold")
    m.set_defaults(func=cmd_simulate)
    return ap


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
