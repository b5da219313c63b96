"""Run every study config and write one table per config.

    python3 scripts/run_studies.py                      # all configs, csv into results/
    python3 scripts/run_studies.py --format json poisson_*.cfg
"""
from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from fesharp.study import StudyConfig, emit, run_study, summary

HERE = Path(__file__).resolve().parent


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("patterns", nargs="*", default=["*.cfg"], help="config globs inside --configs")
    ap.add_argument("--configs", type=Path, default=HERE / "configs")
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--format", choices=("csv", "json"), default="csv")
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)

    paths = sorted({p for pat in args.patterns for p in args.configs.glob(pat)})
    if not paths:
        print(f"no configs match {args.patterns} in {args.configs}", file=sys.stderr)
        return 1
    args.out.mkdir(parents=True, exist_ok=True)
    verdicts = {}
    for path in paths:
        cfg = StudyConfig.from_file(path)
        t0 = time.perf_counter()
        table = run_study(cfg, threads=args.threads)
        target = args.out / f"{path.stem}.{args.format}"
        emit(table, args.format, target)
        print(summary(table))
        print(f"  -> {target} ({time.perf_counter() - t0:.1f} s)\n")
        verdicts[path.stem] = table.verdict

    width = max(map(len, verdicts))
    for name, v in verdicts.items():
        print(f"{name:<{width}}  {v}")
    return 2 if "FAIL" in verdicts.values() else 0


if __name__ == "__main__":
    sys.exit(main())
