"""Closed-loop, randomized and n-player controls.

Evaluator conventions (all vectorized, arrays broadcast against each other):

* interaction control ``gamma(t, x, u, y, v, pop)``: x, y states with a trailing
  axis of size d, u, v labels, pop the current (n, d) population (only
  law-dependent families read it).
* regular control ``alpha(t, x, u, pop)``.
* randomized interaction control ``gbar(t, x, u, v, y, u2, v2, pi, pop)`` where
  v, v2 are the per-agent auxiliary uniforms and pi the shared mixing uniform.

Actions in one-dimensional boxes carry no trailing axis.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DimensionMismatch, GridMismatch, WeightsNotNormalized
from .kernels import block_index


@dataclass(frozen=True)
class ActionBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise DimensionMismatch("lower/upper must be vectors of equal length")
        if np.any(lo > hi):
            raise ValueError("action box needs lower <= upper")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def interval(cls, lo=0.0, hi=1.0) -> "ActionBox":
        return cls(np.array([lo]), np.array([hi]))

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def clamp(self, a):
        a = np.asarray(a, dtype=float)
        if self.dim == 1:
            return np.clip(a, self.lower[0], self.upper[0])
        if a.shape[-1:] != (self.dim,):
            raise DimensionMismatch(f"action has trailing size {a.shape[-1:]} but box has dim {self.dim}")
        return np.clip(a, self.lower, self.upper)

    def contains(self, a) -> bool:
        a = np.asarray(a, dtype=float)
        lo = self.lower[0] if self.dim == 1 else self.lower
        hi = self.upper[0] if self.dim == 1 else self.upper
        return bool(np.all((a >= lo) & (a <= hi)))


def clamp_action(a, box: ActionBox):
    a = np.asarray(a, dtype=float)
    if box.dim == 1:
        if a.ndim and a.shape[-1] != 1:
            raise DimensionMismatch(f"vector of size {a.shape[-1]} for a 1-d box")
        return box.clamp(a)
    if a.shape[-1:] != (box.dim,):
        raise DimensionMismatch(f"vector of size {a.shape[-1:]} for a {box.dim}-d box")
    return box.clamp(a)


def _box_shape(box, shape):
    return shape if box.dim == 1 else shape + (box.dim,)


def _table_lookup(table: np.ndarray, u, v=None):
    """Step-function lookup of labels in an m (or m x m) table."""
    i = block_index(np.clip(u, 0.0, 1.0), table.shape[0])
    if v is None:
        return table[i]
    j = block_index(np.clip(v, 0.0, 1.0), table.shape[1])
    return table[i, j]


# ------------------------------------------------------------ regular controls


@dataclass(frozen=True)
class RegularControl:
    family: str
    params: tuple
    box: ActionBox
    fn: Callable = field(repr=False)

    def __call__(self, t, x, u, pop=None):
        x = np.asarray(x, dtype=float)
        out = self.fn(t, x, np.asarray(u, dtype=float), pop)
        out = np.broadcast_to(np.asarray(out, dtype=float), _box_shape(self.box, x.shape[:-1]))
        return self.box.clamp(out)


def regular_constant(a, box: ActionBox | None = None) -> RegularControl:
    box = box or ActionBox.interval(0.0, 1.0)
    a = np.asarray(a, dtype=float)
    val = float(a) if box.dim == 1 else a
    return RegularControl("constant", tuple(np.atleast_1d(a).tolist()), box, lambda t, x, u, pop: val)


def regular_threshold(c, low, high, box: ActionBox | None = None) -> RegularControl:
    """high when the first state coordinate is >= c, else low."""
    box = box or ActionBox.interval(min(low, high), max(low, high))
    return RegularControl("threshold", (c, low, high), box,
                          lambda t, x, u, pop: np.where(x[..., 0] >= c, high, low))


def regular_affine(a0, a_x, a_u=0.0, box: ActionBox | None = None) -> RegularControl:
    """clamp(a0 + a_x . x + a_u * u) for a scalar action."""
    box = box or ActionBox.interval(0.0, 1.0)
    ax = np.atleast_1d(np.asarray(a_x, dtype=float))
    return RegularControl("affine_clamped", (a0, *ax.tolist(), a_u), box,
                          lambda t, x, u, pop: a0 + x @ ax + a_u * u)


def regular_table(table, box: ActionBox | None = None) -> RegularControl:
    """Action read off a table indexed by label blocks."""
    table = np.asarray(table, dtype=float)
    box = box or ActionBox.interval(float(table.min()), float(table.max()))
    return RegularControl("table", tuple(table.ravel().tolist()), box,
                          lambda t, x, u, pop: _table_lookup(table, u))


# -------------------------------------------------------- interaction controls


@dataclass(frozen=True)
class InteractionControl:
    family: str
    params: tuple
    box: ActionBox
    fn: Callable = field(repr=False)
    phi: Callable | None = field(default=None, repr=False)
    law_dependent: bool = False

    def __call__(self, t, x, u, y, v, pop=None):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1], u.shape, v.shape)
        out = np.asarray(self.fn(t, x, u, y, v, pop), dtype=float)
        return self.box.clamp(np.broadcast_to(out, _box_shape(self.box, shape)))


def interaction_constant(a0, box: ActionBox | None = None) -> InteractionControl:
    box = box or ActionBox.interval(0.0, 1.0)
    a = np.asarray(a0, dtype=float)
    val = float(a) if box.dim == 1 else a
    return InteractionControl("constant", tuple(np.atleast_1d(a).tolist()), box,
                              lambda t, x, u, y, v, pop: val)


def bang_bang(phi: Callable, box: ActionBox | None = None, threshold: float = 0.0,
              flipped: bool = False, law_dependent: bool = True) -> InteractionControl:
    """upper action where phi(t, x, y, pop) >= threshold, lower action elsewhere.

    ``flipped`` selects the complementary rule (upper where phi < threshold).
    """
    box = box or ActionBox.interval(0.0, 1.0)
    if box.dim != 1:
        raise DimensionMismatch("bang-bang rule is defined for scalar action boxes")
    lo, hi = box.lower[0], box.upper[0]

    def fn(t, x, u, y, v, pop):
        on = np.asarray(phi(t, x, y, pop)) >= threshold
        if flipped:
            on = ~on
        return np.where(on, hi, lo)

    family = "bang_bang_phi_flipped" if flipped else "bang_bang_phi"
    return InteractionControl(family, (threshold,), box, fn, phi=phi, law_dependent=law_dependent)


def product_form(c, a1, b1, a2, b2, box: ActionBox | None = None) -> InteractionControl:
    """c * (a1 + b1 u) * (a2 + b2 u'), clamped."""
    box = box or ActionBox.interval(0.0, 1.0)
    return InteractionControl("product_form", (c, a1, b1, a2, b2), box,
                              lambda t, x, u, y, v, pop: c * (a1 + b1 * u) * (a2 + b2 * v))


def interaction_table(table, box: ActionBox | None = None) -> InteractionControl:
    """Action read off an m x m table indexed by the label blocks of (u, u')."""
    table = np.asarray(table, dtype=float)
    if table.ndim != 2 or table.shape[0] != table.shape[1]:
        raise DimensionMismatch("interaction table must be square")
    box = box or ActionBox.interval(float(table.min()), float(table.max()))
    return InteractionControl("table", tuple(table.ravel().tolist()), box,
                              lambda t, x, u, y, v, pop: _table_lookup(table, u, v))


def interaction_from_callable(fn, box: ActionBox | None = None, law_dependent=False,
                              family="custom") -> InteractionControl:
    return InteractionControl(family, (), box or ActionBox.interval(0.0, 1.0), fn,
                              law_dependent=law_dependent)


# ------------------------------------------------------- randomized controls

AUX_AXES = ("v", "v2", "pi")


@dataclass(frozen=True)
class RelaxedInteractionControl:
    """Randomized interaction control driven by auxiliary uniforms.

    ``uses`` lists the auxiliary arguments the evaluator actually reads; the
    projection integrates over those axes only.
    """

    fn: Callable = field(repr=False)
    box: ActionBox = field(default_factory=ActionBox.interval)
    uses: tuple = AUX_AXES
    name: str = "custom"

    def __call__(self, t, x, u, v, y, u2, v2, pi, pop=None):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1], np.shape(u), np.shape(u2),
                                    np.shape(v), np.shape(v2), np.shape(pi))
        out = np.asarray(self.fn(t, x, u, v, y, u2, v2, pi, pop), dtype=float)
        return self.box.clamp(np.broadcast_to(out, _box_shape(self.box, shape)))

    @classmethod
    def from_general(cls, fn9, box=None, name="custom"):
        """Wrap a map that also takes the joint coupling uniform; it is fed 0.5."""
        return cls(lambda t, x, u, v, y, u2, v2, pi, pop: fn9(t, x, u, v, y, u2, v2, 0.5, pi, pop),
                   box or ActionBox.interval(), AUX_AXES, name)

    @classmethod
    def from_deterministic(cls, gamma: InteractionControl):
        return cls(lambda t, x, u, v, y, u2, v2, pi, pop: gamma(t, x, u, y, v=u2, pop=pop),
                   gamma.box, (), f"det({gamma.family})")


def relaxed_uniform(box: ActionBox | None = None) -> RelaxedInteractionControl:
    """Action equal to the agent's own auxiliary uniform, mapped affinely onto the box."""
    box = box or ActionBox.interval()
    lo, hi = box.lower[0], box.upper[0]
    return RelaxedInteractionControl(lambda t, x, u, v, y, u2, v2, pi, pop: lo + (hi - lo) * v,
                                     box, ("v",), "uniform")


def relaxed_indicator(p, box: ActionBox | None = None) -> RelaxedInteractionControl:
    """Upper action with probability p (through the agent's uniform)."""
    box = box or ActionBox.interval()
    lo, hi = box.lower[0], box.upper[0]
    return RelaxedInteractionControl(lambda t, x, u, v, y, u2, v2, pi, pop: np.where(v <= p, hi, lo),
                                     box, ("v",), f"indicator({p:g})")


def relaxed_affine(c0, cv, cv2, cpi, box: ActionBox | None = None) -> RelaxedInteractionControl:
    """clamp(c0 + cv v + cv2 v' + cpi pi)."""
    box = box or ActionBox.interval()
    uses = tuple(a for a, c in zip(AUX_AXES, (cv, cv2, cpi)) if c != 0.0)
    return RelaxedInteractionControl(
        lambda t, x, u, v, y, u2, v2, pi, pop: c0 + cv * v + cv2 * v2 + cpi * pi,
        box, uses, f"affine({c0:g},{cv:g},{cv2:g},{cpi:g})")


def barycentric_projection(gbar: RelaxedInteractionControl, quad_points: int = 16) -> InteractionControl:
    """Average of gbar over its auxiliary uniforms (tensor midpoint rule)."""
    if quad_points < 1:
        raise ValueError("quad_points must be >= 1")
    nodes = (np.arange(quad_points) + 0.5) / quad_points
    axes = [a for a in AUX_AXES if a in gbar.uses]
    grid = list(itertools.product(nodes, repeat=len(axes)))
    weight = 1.0 / len(grid)

    def fn(t, x, u, y, v, pop):
        acc = 0.0
        for point in grid:
            aux = dict(zip(axes, point))
            acc = acc + gbar(t, x, u, aux.get("v", 0.5), y, v, aux.get("v2", 0.5), aux.get("pi", 0.5), pop)
        return acc * weight

    return InteractionControl("projected", (quad_points,), gbar.box, fn, law_dependent=True)


# ------------------------------------------------------------ n-player lifts


class PairControlMatrix:
    """Per-pair controls gamma^n_ij(t, X) and per-agent alpha^{i,n}(t, X).

    Pair (i, j) only reads (t, x_i, i/n, x_j, j/n) plus, for law-dependent
    families, the population snapshot.
    """

    def __init__(self, n, gamma: InteractionControl | None = None, alpha: RegularControl | None = None,
                 matrix=None, box: ActionBox | None = None):
        self.n = int(n)
        self.gamma = gamma
        self.alpha = alpha
        self.labels = np.arange(1, self.n + 1) / self.n
        if matrix is not None:
            matrix = np.asarray(matrix, dtype=float)
            if matrix.shape[:2] != (self.n, self.n):
                raise DimensionMismatch(f"pair matrix has shape {matrix.shape}, expected ({n}, {n})")
            box = box or (gamma.box if gamma is not None else ActionBox.interval())
            matrix = box.clamp(matrix)
        self.matrix = matrix
        self.box = box or (gamma.box if gamma is not None else ActionBox.interval())

    @property
    def family(self):
        if self.matrix is not None:
            return "matrix"
        return self.gamma.family

    def block(self, t, states, rows=slice(None)) -> np.ndarray:
        """Outgoing actions gamma_ij for i in rows, all j."""
        if self.matrix is not None:
            return self.matrix[rows]
        x = states[rows][:, None, :]
        u = self.labels[rows][:, None]
        return self.gamma(t, x, u, states[None, :, :], self.labels[None, :], states)

    def block_in(self, t, states, rows=slice(None)) -> np.ndarray:
        """Incoming actions gamma_ji for i in rows, all j (row i holds column i)."""
        if self.matrix is not None:
            m = self.matrix
            return np.swapaxes(m, 0, 1)[rows]
        y = states[rows][:, None, :]
        v = self.labels[rows][:, None]
        return self.gamma(t, states[None, :, :], self.labels[None, :], y, v, states)

    def dense(self, t, states) -> np.ndarray:
        return self.block(t, states)

    def pair(self, t, states, i, j):
        """gamma^n_ij for 1-based agent indices."""
        if self.matrix is not None:
            return self.matrix[i - 1, j - 1]
        return self.gamma(t, states[i - 1], self.labels[i - 1], states[j - 1], self.labels[j - 1], states)

    def regular(self, t, states):
        if self.alpha is None:
            return None
        return self.alpha(t, states, self.labels, states)


def lift_to_nplayer(gamma: InteractionControl, alpha: RegularControl | None, n: int) -> PairControlMatrix:
    if n < 1:
        raise ValueError("n must be >= 1")
    return PairControlMatrix(n, gamma, alpha)


class RelaxedPairControl:
    """n-player lift of a randomized control; realized once per step from fresh uniforms."""

    def __init__(self, n, gbar: RelaxedInteractionControl, alpha: RegularControl | None = None):
        self.n = int(n)
        self.gbar = gbar
        self.alpha = alpha
        self.box = gbar.box
        self.labels = np.arange(1, self.n + 1) / self.n

    family = "relaxed"

    def realize(self, t, states, v_agents, pi) -> PairControlMatrix:
        lab = self.labels
        mat = self.gbar(t, states[:, None, :], lab[:, None], v_agents[:, None],
                        states[None, :, :], lab[None, :], v_agents[None, :], pi, states)
        return PairControlMatrix(self.n, None, self.alpha, matrix=mat, box=self.box)


def sample_relaxed_realization(gbar: RelaxedInteractionControl, n, t, states, rng,
                               alpha: RegularControl | None = None) -> PairControlMatrix:
    """Draw V_1..V_n and a shared pi, and evaluate gbar on every pair."""
    states = np.asarray(states, dtype=float)
    if states.ndim == 1:
        states = states[:, None]
    pi = rng.random()
    v = rng.random(n)
    return RelaxedPairControl(n, gbar, alpha).realize(t, states, v, pi)


# --------------------------------------------------------- chattering selector


class ChatteringSelector:
    """Deterministic map (s, t) -> action reproducing block frequencies.

    Each 1/n cell (j, l) is split along s into k consecutive intervals of
    lengths Lambda^{i}/n. ``mode="strip"`` assigns action i on the i-th s
    interval for every t in the cell; ``mode="cyclic"`` shifts the split by
    the position of t inside its cell so that both marginal integrals match.
    """

    def __init__(self, weights, n, actions, mode="strip"):
        weights = np.asarray(weights, dtype=float)
        if weights.ndim == 1:
            weights = weights[:, None, None]
        if weights.ndim != 3 or weights.shape[1] != weights.shape[2]:
            raise DimensionMismatch("weights must have shape (k, m, m)")
        k, m, _ = weights.shape
        if np.any(weights < -1e-15) or not np.allclose(weights.sum(axis=0), 1.0, atol=1e-12, rtol=0):
            raise WeightsNotNormalized("weights must be nonnegative and sum to 1 in every block")
        if n % m:
            raise GridMismatch(f"n={n} is not a multiple of the weight grid m={m}")
        actions = np.asarray(actions, dtype=float)
        if actions.shape[0] != k:
            raise DimensionMismatch(f"{actions.shape[0]} actions for {k} weight layers")
        if mode not in ("strip", "cyclic"):
            raise ValueError(f"unknown mode {mode!r}")
        self.weights, self.n, self.m, self.k = weights, int(n), m, k
        self.actions = actions
        self.mode = mode
        self._cum = np.cumsum(weights, axis=0)  # (k, m, m)
        self._cum[-1] = 1.0

    def cell_weights(self, j, ell):
        """Weights on the 0-based n-cell pair (j, ell)."""
        q = self.m * j // self.n, self.m * ell // self.n
        return self.weights[:, q[0], q[1]]

    def intervals(self, j, ell):
        """Endpoints of the k s-subintervals of cell j (for t in cell ell, strip mode)."""
        w = self.cell_weights(j, ell)
        edges = j / self.n + np.concatenate([[0.0], np.cumsum(w)]) / self.n
        return list(zip(edges[:-1], edges[1:]))

    def index(self, s, t):
        s = np.asarray(s, dtype=float)
        t = np.asarray(t, dtype=float)
        j = block_index(s, self.n)
        ell = block_index(t, self.n)
        p = s * self.n - j  # position in (0, 1]
        if self.mode == "cyclic":
            q = t * self.n - ell
            p = p + q
            p = np.where(p > 1.0, p - 1.0, p)
        qj = self.m * j // self.n
        ql = self.m * ell // self.n
        cum = self._cum[:, qj, ql]  # (k, ...)
        idx = np.sum(p[None, ...] > cum, axis=0)
        return np.minimum(idx, self.k - 1)

    def __call__(self, s, t):
        return self.actions[self.index(s, t)]


def chattering_selector(weights, n, actions, mode="strip") -> ChatteringSelector:
    return ChatteringSelector(weights, n, actions, mode=mode)
