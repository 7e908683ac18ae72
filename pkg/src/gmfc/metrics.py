"""Wasserstein-1 distances between equal-weight empirical measures, and MC summaries."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import LengthMismatch, NoSnapshot, SizeCapExceeded

ASSIGNMENT_CAP = 512


def _mean_exact(terms) -> float:
    # exactly rounded sum: the result does not depend on the order of the terms
    terms = np.asarray(terms, dtype=float).ravel()
    return math.fsum(terms.tolist()) / terms.size


def _mean_abs_diff_exact(a, b) -> float:
    """Exactly rounded mean of |a_k - b_k|.

    Sums the signed coordinates rather than the rounded differences, so every
    matching with the same exact cost gives the same float.
    """
    sign = np.sign(b - a)
    return math.fsum(np.concatenate([sign * b, -sign * a]).tolist()) / a.size


@dataclass(frozen=True)
class EmpiricalMeasure:
    atoms: np.ndarray  # (m, k)

    def __init__(self, atoms, weights=None):
        a = np.asarray(atoms, dtype=float)
        if a.ndim == 1:
            a = a[:, None]
        if a.shape[0] < 1:
            raise ValueError("an empirical measure needs at least one atom")
        if not np.all(np.isfinite(a)):
            raise ValueError("atoms must be finite")
        if weights is not None and not np.allclose(weights, 1.0 / a.shape[0], rtol=0, atol=1e-15):
            raise ValueError("only equal-weight empirical measures are supported")
        object.__setattr__(self, "atoms", a)

    @property
    def size(self) -> int:
        return self.atoms.shape[0]


def w1_sorted(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.shape != b.shape:
        raise LengthMismatch(f"sample sizes differ: {a.size} vs {b.size}")
    return _mean_abs_diff_exact(a, b)


def w1_1d(a, b) -> float:
    """Exact W1 between 1-d equal-weight empirical measures of any sizes (CDF integral)."""
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if a.size == b.size:
        return _mean_abs_diff_exact(a, b)
    pts = np.concatenate([a, b])
    pts.sort(kind="mergesort")
    gaps = np.diff(pts)
    fa = np.searchsorted(a, pts[:-1], side="right") / a.size
    fb = np.searchsorted(b, pts[:-1], side="right") / b.size
    return float(np.sum(np.abs(fa - fb) * gaps))


def w1_assignment(a, b, cap: int = ASSIGNMENT_CAP) -> float:
    """Exact W1 for equal-size point clouds via min-cost perfect matching."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape != b.shape:
        raise LengthMismatch(f"point clouds differ in shape: {a.shape} vs {b.shape}")
    if a.shape[0] > cap:
        raise SizeCapExceeded(f"assignment limited to {cap} atoms, got {a.shape[0]}")
    if a.shape[1] == 1:
        cost = np.abs(a - b.T)
    else:
        cost = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=-1))
    r, c = linear_sum_assignment(cost)
    if a.shape[1] == 1:
        return _mean_abs_diff_exact(a[r, 0], b[c, 0])
    return _mean_exact(cost[r, c])


def _subsample(x, size, gen):
    if x.shape[0] <= size:
        return x
    return x[np.sort(gen.choice(x.shape[0], size=size, replace=False))]


def w1_points(a, b, cap: int = ASSIGNMENT_CAP, seed=0) -> float:
    """W1 between point clouds: exact in 1-d, matching (on seeded subsamples if needed) otherwise."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1 or a.shape[1] == 1:
        return w1_1d(a, b)
    size = min(a.shape[0], b.shape[0], cap)
    gen = np.random.default_rng(seed)
    return w1_assignment(_subsample(a, size, gen), _subsample(b, size, gen), cap=cap)


def mc_summary(values):
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 1:
        raise ValueError("need at least one value")
    mean = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return mean, se, int(v.size)


@dataclass(frozen=True)
class DistanceCurve:
    times: np.ndarray
    distance: np.ndarray
    stderr: np.ndarray
    mode: str
    n_a: int
    n_b: int

    def rows(self):
        for t, dist, se in zip(self.times, self.distance, self.stderr):
            yield {"t": t, "distance": dist, "stderr": se, "mode": self.mode, "n_a": self.n_a, "n_b": self.n_b}


def stratified_w1(xa, xb, bins: int, cap: int = ASSIGNMENT_CAP, seed=0) -> float:
    """Average over equal label bins of the per-bin W1 between states."""
    na, nb = xa.shape[0], xb.shape[0]
    la = np.arange(1, na + 1) / na
    lb = np.arange(1, nb + 1) / nb
    edges = np.arange(1, bins + 1) / bins
    ba = np.searchsorted(edges, la, side="left")
    bb = np.searchsorted(edges, lb, side="left")
    total = 0.0
    used = 0
    for k in range(bins):
        sa, sb = xa[ba == k], xb[bb == k]
        if len(sa) == 0 or len(sb) == 0:
            continue
        total += w1_points(sa, sb, cap=cap, seed=seed + k)
        used += 1
    return total / max(used, 1)


def flow_distance(traj_a, traj_b, times, mode: str = "state_marginal", bins: int | None = None,
                  cap: int = ASSIGNMENT_CAP, seed=0) -> DistanceCurve:
    """Distance between the empirical flows of two trajectory sets.

    Replication r of ``traj_a`` is paired with replication r of ``traj_b``;
    the curve reports the mean over pairs and its standard error.
    """
    if mode not in ("state_marginal", "label_stratified"):
        raise ValueError(f"unknown mode {mode!r}")
    na, nb = traj_a.n, traj_b.n
    tol = max(traj_a.config.dt, traj_b.config.dt) * (1 + 1e-9)
    if bins is None:
        bins = math.ceil(math.sqrt(min(na, nb)))
    pairs = min(len(traj_a), len(traj_b))
    times = np.atleast_1d(np.asarray(times, dtype=float))
    dist, ses = [], []
    for t in times:
        vals = []
        for r in range(pairs):
            xa = traj_a[r].snapshot(t, tol)
            xb = traj_b[r].snapshot(t, tol)
            if xa is None or xb is None:
                raise NoSnapshot(f"no stored snapshot within {tol:g} of t={t:g}")
            if mode == "state_marginal":
                vals.append(w1_points(xa, xb, cap=cap, seed=seed))
            else:
                vals.append(stratified_w1(xa, xb, bins, cap=cap, seed=seed))
        m, se, _ = mc_summary(vals)
        dist.append(m)
        ses.append(se)
    return DistanceCurve(times, np.array(dist), np.array(ses), mode, na, nb)


def write_distance_csv(path, curves) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "distance", "mode", "n_a", "n_b"])
        for c in curves:
            for row in c.rows():
                w.writerow([format(row["t"], ".17g"), format(row["distance"], ".17g"), row["mode"], row["n_a"], row["n_b"]])
