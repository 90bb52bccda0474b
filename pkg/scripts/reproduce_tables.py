"""Run the rejection-rate and selection studies and write one CSV per table.

    python3 scripts/reproduce_tables.py --reps 500 --out results/
    python3 scripts/reproduce_tables.py --designs table1 table3 --reps 200
"""

import argparse
import logging
from pathlib import Path

from npgroup.anovatest import TestConfig
from npgroup.simharness import REJECTION_DESIGNS, SELECTION_DESIGNS, SimConfig, run_study

log = logging.getLogger("reproduce")


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--designs", nargs="+", default=[*REJECTION_DESIGNS, *SELECTION_DESIGNS])
    ap.add_argument("--reps", type=int, default=500)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--variant", choices=["a", "b", "c", "d"], default="a")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    args.out.mkdir(parents=True, exist_ok=True)

    for design in args.designs:
        cfg = SimConfig(design, replications=args.reps, seed=args.seed, jobs=args.jobs)
        if cfg.kind == "rejection":
            cfg.test = TestConfig.variant(args.variant)
        report = run_study(cfg)
        path = args.out / f"{design}.csv"
        path.write_text(report.to_csv())
        print(report.to_text())
        log.info("%s done in %.1fs -> %s", design, report.wall_clock, path)


if __name__ == "__main__":
    main()
