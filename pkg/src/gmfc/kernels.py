"""Step kernels (finite graphons), cut norm and kernel distances.

Block ``i`` (1-based) of an n-grid is the half-open interval ((i-1)/n, i/n];
the point 0 is assigned to block 1.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numba
import numpy as np

from .errors import (
    DimensionMismatch,
    DomainViolation,
    MarkOutOfBounds,
    NonSquareMatrix,
    SizeCapExceeded,
)

EXACT_CAP = 24
_BOUND_TOL = 1e-12


@dataclass(frozen=True)
class MarkSpace:
    """Box [lower, upper] in R^l holding the edge marks."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch("lower/upper must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("mark space needs lower <= upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    @classmethod
    def interval(cls, lo=0.0, hi=1.0) -> "MarkSpace":
        return cls(np.array([lo]), np.array([hi]))

    def violations(self, marks: np.ndarray) -> np.ndarray:
        """Boolean mask over the leading axes of ``marks`` (shape (..., dim))."""
        return np.any(
            (marks < self.lower - _BOUND_TOL) | (marks > self.upper + _BOUND_TOL), axis=-1
        )


def _as_marks(matrix, dim=None) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if m.ndim == 2:
        m = m[:, :, None]
    if m.ndim != 3 or m.shape[0] != m.shape[1]:
        raise NonSquareMatrix(f"expected an n x n matrix of marks, got shape {np.shape(matrix)}")
    if dim is not None and m.shape[2] != dim:
        raise DimensionMismatch(f"marks have dimension {m.shape[2]}, mark space has {dim}")
    return m


@dataclass(frozen=True)
class StepKernel:
    marks: np.ndarray  # (n, n, l)
    mark_space: MarkSpace

    @property
    def n(self) -> int:
        return self.marks.shape[0]

    @property
    def dim(self) -> int:
        return self.marks.shape[2]

    def scalar(self, f: Callable | None = None) -> np.ndarray:
        """n x n matrix of f(mark); identity needs a 1-d mark space."""
        if f is None:
            if self.dim != 1:
                raise DimensionMismatch("identity test map needs one-dimensional marks")
            return self.marks[:, :, 0]
        return np.asarray(f(self.marks), dtype=float).reshape(self.n, self.n)

    def __call__(self, u, v):
        return eval_step_kernel(self, u, v)


def step_kernel_from_matrix(matrix, mark_space: MarkSpace | None = None) -> StepKernel:
    m = _as_marks(matrix)
    if mark_space is None:
        mark_space = MarkSpace.interval(0.0, 1.0) if m.shape[2] == 1 else MarkSpace(
            np.zeros(m.shape[2]), np.ones(m.shape[2])
        )
    if m.shape[2] != mark_space.dim:
        raise DimensionMismatch(f"marks have dimension {m.shape[2]}, mark space has {mark_space.dim}")
    bad = mark_space.violations(m)
    if bad.any():
        i, j = (int(k) for k in np.argwhere(bad)[0])
        raise MarkOutOfBounds(f"mark at ({i}, {j}) = {m[i, j].tolist()} lies outside E", index=(i, j))
    m = m.copy()
    m.setflags(write=False)
    return StepKernel(m, mark_space)


def block_index(u, n: int) -> np.ndarray:
    """0-based block holding u under the (left-open, right-closed] convention."""
    u = np.asarray(u, dtype=float)
    if np.any((u < 0.0) | (u > 1.0)) or np.any(np.isnan(u)):
        raise DomainViolation("labels must lie in [0, 1]")
    grid = np.arange(1, n + 1) / n
    return np.searchsorted(grid, u, side="left")


def eval_step_kernel(k: StepKernel, u, v) -> np.ndarray:
    i = block_index(u, k.n)
    j = block_index(v, k.n)
    return k.marks[i, j]


@dataclass(frozen=True)
class AnalyticGraphon:
    """Closed-form kernel G: [0,1]^2 -> E evaluated on arrays of labels."""

    evaluator: Callable
    mark_space: MarkSpace = field(default_factory=MarkSpace.interval)
    lipschitz: float | None = None
    name: str = "custom"

    def __call__(self, u, v) -> np.ndarray:
        u, v = np.broadcast_arrays(np.asarray(u, dtype=float), np.asarray(v, dtype=float))
        out = np.asarray(self.evaluator(u, v), dtype=float)
        if self.mark_space.dim == 1 and out.shape == u.shape:
            out = out[..., None]
        return np.broadcast_to(out, u.shape + (self.mark_space.dim,))


def sample_from_graphon(g: AnalyticGraphon, n: int) -> StepKernel:
    if n < 1:
        raise ValueError("n must be >= 1")
    grid = np.arange(1, n + 1) / n
    marks = g(grid[:, None], grid[None, :])
    return step_kernel_from_matrix(marks, g.mark_space)


def _constant(c=1.0):
    c = float(c)
    return AnalyticGraphon(lambda u, v: np.full(u.shape, c), MarkSpace.interval(min(0.0, c), max(1.0, c)),
                           lipschitz=0.0, name=f"constant({c:g})")


def _product():
    # Lipschitz 1 for the l1 metric on [0,1]^2
    return AnalyticGraphon(lambda u, v: u * v, lipschitz=1.0, name="product")


def _threshold():
    return AnalyticGraphon(lambda u, v: (u + v > 1.0).astype(float), lipschitz=None, name="threshold")


def _sbm2(p_in=0.8, p_out=0.2):
    p_in, p_out = float(p_in), float(p_out)

    def ev(u, v):
        same = (u <= 0.5) == (v <= 0.5)
        return np.where(same, p_in, p_out)

    return AnalyticGraphon(ev, lipschitz=None, name=f"sbm2({p_in:g},{p_out:g})")


def _minimum():
    return AnalyticGraphon(lambda u, v: np.minimum(u, v), lipschitz=1.0, name="min")


GRAPHONS: dict[str, Callable[..., AnalyticGraphon]] = {
    "constant": _constant,
    "product": _product,
    "threshold": _threshold,
    "sbm2": _sbm2,
    "min": _minimum,
}


def graphon_by_id(graphon_id: str, params=()) -> AnalyticGraphon:
    try:
        factory = GRAPHONS[graphon_id]
    except KeyError:
        raise KeyError(f"unknown graphon {graphon_id!r}; known: {sorted(GRAPHONS)}") from None
    return factory(*params)


# ---------------------------------------------------------------- cut norm


class CutNorm(NamedTuple):
    value: float
    method: str  # "exact" or "lower-bound"


@numba.njit(cache=True)
def _gray_enumerate(w):
    r, c = w.shape
    sums = np.zeros(c)
    best = 0.0
    best_mask = 0
    gray = 0
    for k in range(1, 1 << r):
        bit = 0
        kk = k
        while (kk & 1) == 0:
            kk >>= 1
            bit += 1
        gray ^= 1 << bit
        if gray & (1 << bit):
            for j in range(c):
                sums[j] += w[bit, j]
        else:
            for j in range(c):
                sums[j] -= w[bit, j]
        pos = 0.0
        neg = 0.0
        for j in range(c):
            s = sums[j]
            if s > 0.0:
                pos += s
            else:
                neg -= s
        v = pos if pos > neg else neg
        if v > best:
            best = v
            best_mask = gray
    return best, best_mask


def _weighted(m, row_weights=None, col_weights=None) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2:
        raise DimensionMismatch("cut norm needs a scalar matrix")
    r = np.full(m.shape[0], 1.0 / m.shape[0]) if row_weights is None else np.asarray(row_weights, float)
    c = np.full(m.shape[1], 1.0 / m.shape[1]) if col_weights is None else np.asarray(col_weights, float)
    if r.shape != (m.shape[0],) or c.shape != (m.shape[1],):
        raise DimensionMismatch("block weights do not match the matrix")
    return r[:, None] * m * c[None, :]


def _value_of_rows(w: np.ndarray, rows: np.ndarray) -> float:
    s = w[rows].sum(axis=0)
    return float(max(s[s > 0].sum(), -s[s < 0].sum()))


def cut_norm_exact(m, row_weights=None, col_weights=None, cap: int = EXACT_CAP) -> float:
    """Exact cut norm of the step kernel with block values ``m``.

    Enumerates subsets of the shorter axis; the other axis is chosen in closed
    form from the signs of the restricted sums.
    """
    w = _weighted(m, row_weights, col_weights)
    if w.shape[0] > w.shape[1]:
        w = w.T
    if w.shape[0] > cap:
        raise SizeCapExceeded(f"exact cut norm limited to {cap} blocks, got {w.shape[0]}")
    if not np.any(w):
        return 0.0
    _, mask = _gray_enumerate(np.ascontiguousarray(w))
    rows = np.array([(mask >> i) & 1 for i in range(w.shape[0])], dtype=bool)
    return _value_of_rows(w, rows)


def cut_norm_lower_bound(m, restarts: int = 16, rng_seed=0, row_weights=None, col_weights=None,
                         max_iter: int = 200) -> float:
    """Best value of alternating row/column maximization over random starts."""
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    w = _weighted(m, row_weights, col_weights)
    if not np.any(w):
        return 0.0
    rng = np.random.default_rng(rng_seed)
    best = 0.0
    for _ in range(restarts):
        rows = rng.random(w.shape[0]) < 0.5
        if not rows.any():
            rows[rng.integers(w.shape[0])] = True
        prev = -1.0
        for _ in range(max_iter):
            s = w[rows].sum(axis=0)
            pos, neg = s[s > 0].sum(), -s[s < 0].sum()
            sign = 1.0 if pos >= neg else -1.0
            cols = sign * s > 0
            if not cols.any():
                break
            r = sign * w[:, cols].sum(axis=1)
            rows = r > 0
            if not rows.any():
                break
            val = float(abs(w[np.ix_(rows, cols)].sum()))
            if val <= prev:
                break
            prev = val
        if rows.any():
            best = max(best, prev, _value_of_rows(w, rows))
    return best


# ------------------------------------------------------- kernel comparison


@dataclass(frozen=True)
class WeightedStepKernel:
    row_weights: np.ndarray
    col_weights: np.ndarray
    marks: np.ndarray  # scalar block values


def refine(n1: int, n2: int):
    """Breakpoint union of the 1/n1 and 1/n2 grids.

    Returns block widths and, for each refined block, the index of the
    containing block on each grid. Exact via integer arithmetic on the lcm grid.
    """
    lcm = n1 * n2 // math.gcd(n1, n2)
    pts = np.union1d(np.arange(1, n1 + 1) * (lcm // n1), np.arange(1, n2 + 1) * (lcm // n2))
    widths = np.diff(np.concatenate([[0], pts])) / lcm
    idx1 = (pts - 1) // (lcm // n1)
    idx2 = (pts - 1) // (lcm // n2)
    return widths, idx1, idx2


def difference_kernel(k1: StepKernel, k2: StepKernel, f: Callable | None = None) -> WeightedStepKernel:
    widths, i1, i2 = refine(k1.n, k2.n)
    a = k1.scalar(f)[np.ix_(i1, i1)]
    b = k2.scalar(f)[np.ix_(i2, i2)]
    return WeightedStepKernel(widths, widths, a - b)


def cut_norm_weighted(wk: WeightedStepKernel, cap: int = EXACT_CAP, restarts: int = 32,
                      rng_seed=0) -> CutNorm:
    m = wk.marks
    if np.all(m >= 0) or np.all(m <= 0):
        # one-signed kernel: the full rectangle is optimal
        total = float(abs(np.sum(wk.row_weights[:, None] * m * wk.col_weights[None, :])))
        return CutNorm(total, "exact")
    if min(m.shape) <= cap:
        return CutNorm(cut_norm_exact(m, wk.row_weights, wk.col_weights, cap=cap), "exact")
    val = cut_norm_lower_bound(m, restarts=restarts, rng_seed=rng_seed,
                               row_weights=wk.row_weights, col_weights=wk.col_weights)
    return CutNorm(val, "lower-bound")


def cut_distance(k1: StepKernel, k2: StepKernel, f: Callable | None = None, cap: int = EXACT_CAP,
                 restarts: int = 32, rng_seed=0) -> CutNorm:
    """||f o k1 - f o k2|| in cut norm, on the common refinement of both grids."""
    if k1.dim != k2.dim:
        raise DimensionMismatch("kernels have different mark dimensions")
    return cut_norm_weighted(difference_kernel(k1, k2, f), cap=cap, restarts=restarts, rng_seed=rng_seed)


def l1_distance(k1: StepKernel, k2: StepKernel) -> float:
    if k1.dim != k2.dim:
        raise DimensionMismatch("kernels have different mark dimensions")
    widths, i1, i2 = refine(k1.n, k2.n)
    d = k1.marks[np.ix_(i1, i1)] - k2.marks[np.ix_(i2, i2)]
    norms = np.linalg.norm(d, axis=-1)
    return float(widths @ norms @ widths)


# ------------------------------------------------------------------ CSV IO


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_step_kernel(path, k: StepKernel) -> None:
    lo = ";".join(_fmt(x) for x in k.mark_space.lower)
    hi = ";".join(_fmt(x) for x in k.mark_space.upper)
    with open(path, "w", newline="") as fh:
        fh.write(f"# stepkernel n={k.n} dim={k.dim} lo={lo} hi={hi}\n")
        w = csv.writer(fh, lineterminator="\n")
        for row in k.marks:
            w.writerow([";".join(_fmt(x) for x in cell) for cell in row])


def _parse_header(line: str) -> dict:
    fields = {}
    for tok in line.lstrip("#").split()[1:]:
        key, _, val = tok.partition("=")
        fields[key] = val
    return fields


def load_matrix_csv(path):
    """Read a kernel CSV. Returns (marks (n, n, l), MarkSpace or None)."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh.read().splitlines() if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty matrix file")
    space = None
    header = None
    if lines[0].startswith("#"):
        header = _parse_header(lines[0])
        lines = lines[1:]
        if "lo" in header and "hi" in header:
            space = MarkSpace([float(x) for x in header["lo"].split(";")],
                              [float(x) for x in header["hi"].split(";")])
    rows = [[[float(x) for x in cell.split(";")] for cell in row] for row in csv.reader(lines)]
    try:
        marks = np.array(rows, dtype=float)
    except ValueError:
        raise ValueError(f"{path}: ragged matrix") from None
    if marks.ndim != 3 or marks.shape[0] != marks.shape[1]:
        raise NonSquareMatrix(f"{path}: matrix is not square")
    if header is not None:
        if "n" in header and int(header["n"]) != marks.shape[0]:
            raise ValueError(f"{path}: header n={header['n']} but {marks.shape[0]} rows")
        if "dim" in header and int(header["dim"]) != marks.shape[2]:
            raise ValueError(f"{path}: header dim={header['dim']} but cells have {marks.shape[2]} values")
    return marks, space


def load_step_kernel(path) -> StepKernel:
    marks, space = load_matrix_csv(path)
    if space is None:
        space = MarkSpace(marks.min(axis=(0, 1)), marks.max(axis=(0, 1)))
    return step_kernel_from_matrix(marks, space)
