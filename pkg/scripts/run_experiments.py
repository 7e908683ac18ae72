"""Run every pre-registered experiment and print one verdict line each.

    python scripts/run_experiments.py            # full presets
    python scripts/run_experiments.py --quick    # smoke presets (seconds)

The quick presets only exercise the pipeline; their Monte Carlo budgets are
too small for the verdicts to mean much.
"""
import argparse
import time
from pathlib import Path

from gmfc.cli import main
from gmfc.experiments import EXPERIMENTS

HERE = Path(__file__).resolve().parent
VERDICTS = {0: "pass", 1: "fail", 5: "inconclusive"}


def run(quick: bool, out: str, seed, workers):
    cfg_dir = HERE / "configs" / ("quick" if quick else "")
    codes = {}
    for exp_id in EXPERIMENTS:
        argv = ["experiment", exp_id, "--config", str(cfg_dir / f"{exp_id}.toml"), "--out", out]
        if seed is not None:
            argv += ["--seed", str(seed)]
        if workers is not None:
            argv += ["--workers", str(workers)]
        t0 = time.perf_counter()
        codes[exp_id] = main(argv)
        print(f"experiment={exp_id} verdict={VERDICTS.get(codes[exp_id], 'error')} "
              f"seconds={time.perf_counter() - t0:.1f}")
    return codes


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--out", default="out/experiments")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()
    codes = run(args.quick, args.out, args.seed, args.workers)
    # verdicts are reported above; only configuration or runtime errors fail the script
    raise SystemExit(1 if any(c in (2, 3, 4) for c in codes.values()) else 0)
