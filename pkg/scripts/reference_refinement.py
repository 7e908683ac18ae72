"""Sensitivity of the convergence sweep to the reference size (1600 vs 3200).

Distances at each n should move by less than the Monte Carlo floor.
"""
import argparse

from gmfc import experiments as ex

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=16)
    ap.add_argument("--dt", type=float, default=0.01)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()
    curves = {}
    for ref in (1600, 3200):
        cfg = ex.ConvergenceConfig(ns=(50, 100, 200, 400), ref_n=ref, reps=args.reps, dt=args.dt,
                                   workers=args.workers)
        curves[ref] = ex.run_convergence(cfg).rows
    print("n,distance_ref1600,distance_ref3200,abs_change,combined_stderr")
    for a, b in zip(curves[1600], curves[3200]):
        se = (a["distance_stderr"] ** 2 + b["distance_stderr"] ** 2) ** 0.5
        print(f"{a['n']},{a['distance']:.6g},{b['distance']:.6g},{abs(a['distance'] - b['distance']):.3g},{se:.3g}")
