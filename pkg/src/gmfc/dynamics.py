"""n-particle controlled SDE system with per-pair interaction controls.

The drift and running cost use a separable pairwise form

    b(t, x_i, M1_i, M2_i, a) = b0(t, x_i, a)
        + 1/n sum_j gamma_ij * b1(pair_ij) + 1/n sum_j gamma_ji * b2(pair_ij)
    L(t, x_i, M1_i, M2_i, a) = L0(t, x_i, a)
        + 1/n sum_j l1(pair_ij, gamma_ij) + 1/n sum_j l2(pair_ij, gamma_ji)

where ``pair_ij`` carries (t, xi_ij, x_i, u_i, x_j, u_j, population).  Models
that do not fit can supply ``general_drift`` / ``general_cost`` working on the
raw :class:`InteractionSets`.
"""
from __future__ import annotations

import csv
import math
import multiprocessing as mp
import os
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from . import rng as rngmod
from .controls import ActionBox, PairControlMatrix, RelaxedPairControl
from .errors import BadSpec, ConfigError, IndexOutOfRange, NonFiniteState, SizeMismatch
from .kernels import StepKernel, block_index

ROW_BLOCK = 256


@dataclass
class ParticleEnsemble:
    states: np.ndarray  # (n, d)
    time: float = 0.0

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim == 1:
            s = s[:, None]
        self.states = s

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def d(self) -> int:
        return self.states.shape[1]

    @property
    def labels(self) -> np.ndarray:
        return np.arange(1, self.n + 1) / self.n

    def empirical(self) -> np.ndarray:
        """Atoms (x, u) of the empirical measure mu^n_t, shape (n, d + 1)."""
        return np.column_stack([self.states, self.labels])


@dataclass(frozen=True)
class InteractionSampleSet:
    """Equal-weight atoms (action, state, label, mark) of one agent's M1 or M2."""

    actions: np.ndarray
    states: np.ndarray
    labels: np.ndarray
    marks: np.ndarray

    def atoms(self) -> np.ndarray:
        a = self.actions.reshape(len(self.labels), -1)
        return np.column_stack([a, self.states, self.labels, self.marks])


@dataclass(frozen=True)
class InteractionSets:
    """Dense M1/M2 data for all agents: out_actions[i, j] = gamma_ij, in_actions[i, j] = gamma_ji."""

    out_actions: np.ndarray
    in_actions: np.ndarray
    states: np.ndarray
    labels: np.ndarray
    marks: np.ndarray  # (n, n, l), row i = xi_i.

    def outgoing(self, i: int) -> InteractionSampleSet:
        """M1 of agent i (0-based)."""
        return InteractionSampleSet(self.out_actions[i], self.states, self.labels, self.marks[i])

    def incoming(self, i: int) -> InteractionSampleSet:
        """M2 of agent i (0-based)."""
        return InteractionSampleSet(self.in_actions[i], self.states, self.labels, self.marks[i])


def build_interaction_sets(ens: ParticleEnsemble, pairs: PairControlMatrix, kernel: StepKernel) -> InteractionSets:
    if kernel.n != ens.n or pairs.n != ens.n:
        raise SizeMismatch(f"ensemble n={ens.n}, kernel n={kernel.n}, controls n={pairs.n}")
    out = np.asarray(pairs.block(ens.time, ens.states))
    inc = np.asarray(pairs.block_in(ens.time, ens.states))
    return InteractionSets(out, inc, ens.states, ens.labels, kernel.marks)


class PairArgs(NamedTuple):
    """Broadcastable pair data for a block of rows i against all columns j."""

    t: float
    marks: np.ndarray  # (B, n, l)
    x: np.ndarray  # (B, 1, d)
    u: np.ndarray  # (B, 1)
    y: np.ndarray  # (1, n, d)
    uy: np.ndarray  # (1, n)
    pop: np.ndarray  # (n, d)


@dataclass(frozen=True)
class ModelSpec:
    name: str = "custom"
    d: int = 1
    int_box: ActionBox = field(default_factory=ActionBox.interval)
    reg_box: ActionBox = field(default_factory=ActionBox.interval)
    sigma: float | Callable = 1.0
    drift_self: Callable | None = None  # b0(t, x (n,d), a) -> (n, d)
    drift_out: Callable | None = None  # b1(PairArgs) -> (B, n[, d])
    drift_in: Callable | None = None  # b2(PairArgs) -> (B, n[, d])
    cost_self: Callable | None = None  # L0(t, x, a) -> (n,)
    cost_out: Callable | None = None  # l1(PairArgs, gamma_ij) -> (B, n)
    cost_in: Callable | None = None  # l2(PairArgs, gamma_ji) -> (B, n)
    terminal: Callable | None = None  # g(x (n,d), states (n,d), marks (n,n,l)) -> (n,)
    general_drift: Callable | None = None  # (t, ens, sets, alpha) -> (n, d)
    general_cost: Callable | None = None  # (t, ens, sets, alpha) -> (n,)
    fast_drift: Callable | None = None  # (t, states, policy, kernel) -> (n, d) or None
    b_max: float | None = None
    theta: float | None = None
    monotone_declared: bool = False
    concave_in_action: bool = False
    params: dict = field(default_factory=dict)

    @property
    def has_pair_drift(self) -> bool:
        return self.drift_out is not None or self.drift_in is not None

    @property
    def has_pair_cost(self) -> bool:
        return self.cost_out is not None or self.cost_in is not None

    def diffusion(self, t, x) -> np.ndarray | float:
        if callable(self.sigma):
            return self.sigma(t, x)
        return float(self.sigma)


def check_nondegeneracy(model: ModelSpec, samples: int = 64, seed: int = 0) -> bool:
    """Sample states and test sigma sigma^T >= theta I (skipped when theta is undeclared)."""
    if model.theta is None:
        return True
    gen = np.random.default_rng(seed)
    x = gen.normal(scale=3.0, size=(samples, model.d))
    t = gen.random()
    s = model.diffusion(t, x)
    if np.isscalar(s):
        return s * s >= model.theta
    s = np.asarray(s)
    cov = np.einsum("nij,nkj->nik", s, s)
    return bool(np.all(np.linalg.eigvalsh(cov) >= model.theta - 1e-12))


def _as_vec(a, d):
    a = np.asarray(a, dtype=float)
    return a[..., None] if (d == 1 and a.ndim == 2) else a


def pair_terms(t, states, model: ModelSpec, policy: PairControlMatrix, kernel: StepKernel,
               alpha=None, need_cost=True, block=ROW_BLOCK):
    """Return (drift (n, d), running cost rate per agent (n,)) at the current state."""
    n, d = states.shape
    drift = np.zeros((n, d))
    cost = np.zeros(n)
    if model.drift_self is not None:
        drift += _as_vec(model.drift_self(t, states, alpha), d).reshape(n, d)
    if need_cost and model.cost_self is not None:
        cost += np.asarray(model.cost_self(t, states, alpha), dtype=float).reshape(n)

    if model.general_drift is not None or (need_cost and model.general_cost is not None):
        ens = ParticleEnsemble(states, t)
        sets = build_interaction_sets(ens, policy, kernel)
        if model.general_drift is not None:
            drift += np.asarray(model.general_drift(t, ens, sets, alpha), dtype=float).reshape(n, d)
        if need_cost and model.general_cost is not None:
            cost += np.asarray(model.general_cost(t, ens, sets, alpha), dtype=float).reshape(n)

    pair_drift = model.has_pair_drift
    fast = model.fast_drift(t, states, policy, kernel) if (pair_drift and model.fast_drift) else None
    if fast is not None:
        drift += np.asarray(fast).reshape(n, d)
        pair_drift = False
    pair_cost = need_cost and model.has_pair_cost
    if not (pair_drift or pair_cost):
        return drift, cost

    labels = np.arange(1, n + 1) / n
    y = states[None, :, :]
    uy = labels[None, :]
    need_out = model.drift_out is not None or model.cost_out is not None
    need_in = model.drift_in is not None or model.cost_in is not None
    for start in range(0, n, block):
        rows = slice(start, min(n, start + block))
        args = PairArgs(t, kernel.marks[rows], states[rows][:, None, :], labels[rows][:, None], y, uy, states)
        # contiguous copies keep the reduction order independent of how the policy stores actions
        g_out = np.ascontiguousarray(policy.block(t, states, rows), dtype=float) if need_out else None
        g_in = np.ascontiguousarray(policy.block_in(t, states, rows), dtype=float) if need_in else None
        if pair_drift and model.drift_out is not None:
            b1 = _as_vec(model.drift_out(args), d)
            drift[rows] += np.einsum("ij,ijk->ik", g_out, np.broadcast_to(b1, g_out.shape + (d,))) / n
        if pair_drift and model.drift_in is not None:
            b2 = _as_vec(model.drift_in(args), d)
            drift[rows] += np.einsum("ij,ijk->ik", g_in, np.broadcast_to(b2, g_in.shape + (d,))) / n
        if pair_cost and model.cost_out is not None:
            cost[rows] += np.broadcast_to(model.cost_out(args, g_out), g_out.shape).sum(axis=1) / n
        if pair_cost and model.cost_in is not None:
            cost[rows] += np.broadcast_to(model.cost_in(args, g_in), g_in.shape).sum(axis=1) / n
    return drift, cost


def _diffuse(model: ModelSpec, t, states, dt, z):
    s = model.diffusion(t, states)
    if np.isscalar(s):
        return s * math.sqrt(dt) * z
    return math.sqrt(dt) * np.einsum("nij,nj->ni", np.asarray(s), z)


def euler_step(ens: ParticleEnsemble, model: ModelSpec, pairs: PairControlMatrix, kernel: StepKernel,
               dt: float, rng=None, noise=None) -> ParticleEnsemble:
    """One explicit Euler-Maruyama step; interaction sets frozen at the left endpoint."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if kernel.n != ens.n:
        raise SizeMismatch(f"kernel n={kernel.n} does not match ensemble n={ens.n}")
    alpha = pairs.regular(ens.time, ens.states)
    drift, _ = pair_terms(ens.time, ens.states, model, pairs, kernel, alpha, need_cost=False)
    if noise is None:
        rng = rng if rng is not None else np.random.default_rng()
        noise = rng.standard_normal(ens.states.shape)
    with np.errstate(over="ignore", invalid="ignore"):  # checked right below
        new = ens.states + drift * dt + _diffuse(model, ens.time, ens.states, dt, noise)
    if not np.all(np.isfinite(new)):
        raise NonFiniteState("non-finite state after Euler step")
    return ParticleEnsemble(new, ens.time + dt)


# ------------------------------------------------------------ initial laws

INIT_FAMILIES = ("dirac", "gaussian", "uniform", "per_label_table")


@dataclass(frozen=True)
class InitSpec:
    family: str = "dirac"
    params: tuple = (0.0,)

    def __post_init__(self):
        if self.family not in INIT_FAMILIES:
            raise BadSpec(f"unknown initial law {self.family!r}; known: {INIT_FAMILIES}", field="init.family")
        need = {"dirac": 1, "gaussian": 2, "uniform": 2, "per_label_table": 1}[self.family]
        if len(self.params) < need:
            raise BadSpec(f"initial law {self.family!r} needs at least {need} parameter(s)", field="init.params")
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))


def _init_states(spec: InitSpec, n, d, draw: Callable[[tuple], np.ndarray]) -> np.ndarray:
    p = spec.params
    if spec.family == "dirac":
        pt = np.broadcast_to(np.asarray(p[:d] if len(p) >= d else p[:1]), (d,))
        return np.tile(pt, (n, 1)).astype(float)
    if spec.family == "per_label_table":
        table = np.asarray(p, dtype=float)
        if d > 1:
            if table.size % d:
                raise BadSpec("per_label_table length must be a multiple of d", field="init.params")
            table = table.reshape(-1, d)
        else:
            table = table.reshape(-1, 1)
        return table[block_index(np.arange(1, n + 1) / n, table.shape[0])].copy()
    if spec.family == "gaussian":
        mean, std = p[0], p[1]
        if std < 0:
            raise BadSpec("gaussian std must be >= 0", field="init.params")
        return mean + std * draw("normal")
    lo, hi = p[0], p[1]
    if hi < lo:
        raise BadSpec("uniform needs lo <= hi", field="init.params")
    return lo + (hi - lo) * draw("uniform")


def initial_sampler(spec: InitSpec, n: int, d: int = 1, rng=None) -> ParticleEnsemble:
    rng = rng if rng is not None else np.random.default_rng()

    def draw(kind):
        return rng.standard_normal((n, d)) if kind == "normal" else rng.random((n, d))

    return ParticleEnsemble(_init_states(spec, n, d, draw), 0.0)


def lattice_initial(spec: InitSpec, n, d, seed, rep, lattice) -> np.ndarray:
    """Initial states for agents sitting on a shared label lattice (coupled across n)."""
    idx = rngmod.lattice_index(n, lattice)

    def draw(kind):
        g = rngmod.stream(seed, "init", rep, 0)
        z = g.standard_normal((lattice, d)) if kind == "normal" else g.random((lattice, d))
        return z[idx]

    return _init_states(spec, n, d, draw)


# -------------------------------------------------------------- simulation


@dataclass(frozen=True)
class SimConfig:
    n: int
    T: float = 1.0
    dt: float = 0.01
    reps: int = 1
    seed: int = 0
    store_stride: int = 1
    workers: int = 1
    lattice: int | None = None  # label lattice for common noise; defaults to n

    def __post_init__(self):
        if int(self.n) < 1:
            raise ConfigError("n must be >= 1", field="n")
        if not self.dt > 0:
            raise ConfigError("dt must be > 0", field="dt")
        if not self.T > 0:
            raise ConfigError("T must be > 0", field="T")
        steps = self.T / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(1.0, steps):
            raise ConfigError(f"T/dt = {steps} is not an integer", field="dt")
        if int(self.reps) < 1:
            raise ConfigError("reps must be >= 1", field="reps")
        if int(self.store_stride) < 1:
            raise ConfigError("store_stride must be >= 1", field="store_stride")
        if self.lattice is not None and int(self.lattice) % int(self.n):
            raise ConfigError(f"lattice {self.lattice} is not a multiple of n={self.n}", field="lattice")

    @property
    def steps(self) -> int:
        return int(round(self.T / self.dt))

    @property
    def lattice_size(self) -> int:
        return int(self.lattice) if self.lattice is not None else int(self.n)


@dataclass
class Trajectory:
    rep: int
    times: np.ndarray  # (S,)
    states: np.ndarray  # (S, n, d)
    running_cost: float
    terminal_cost: float | None = None

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def total_cost(self) -> float:
        return self.running_cost + (self.terminal_cost or 0.0)

    def snapshot(self, t, tol):
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > tol:
            return None
        return self.states[k]


@dataclass
class TrajectorySet:
    trajectories: list
    kernel: StepKernel
    config: SimConfig
    model_name: str = "custom"

    def __len__(self):
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)

    def __getitem__(self, k):
        return self.trajectories[k]

    @property
    def n(self) -> int:
        return self.config.n

    def totals(self) -> np.ndarray:
        return np.array([tr.total_cost() for tr in self.trajectories])


def _simulate_one(model: ModelSpec, policy, kernel: StepKernel, cfg: SimConfig, init: InitSpec, rep: int) -> Trajectory:
    n, d, dt = cfg.n, model.d, cfg.dt
    lat = cfg.lattice_size
    idx = rngmod.lattice_index(n, lat)
    states = lattice_initial(init, n, d, cfg.seed, rep, lat)
    relaxed = isinstance(policy, RelaxedPairControl)
    need_cost = model.has_pair_cost or model.cost_self is not None or model.general_cost is not None
    times = [0.0]
    snaps = [states.copy()]
    running = 0.0
    for k in range(cfg.steps):
        t = k * dt
        if relaxed:
            g = rngmod.stream(cfg.seed, "relaxed", rep, k)
            pi = g.random()
            v = g.random(lat)[idx]
            pol = policy.realize(t, states, v, pi)
        else:
            pol = policy
        alpha = pol.regular(t, states)
        drift, rate = pair_terms(t, states, model, pol, kernel, alpha, need_cost=need_cost)
        if need_cost:
            running += float(rate.mean()) * dt
        z = rngmod.stream(cfg.seed, "noise", rep, k).standard_normal((lat, d))[idx]
        with np.errstate(over="ignore", invalid="ignore"):  # checked right below
            states = states + drift * dt + _diffuse(model, t, states, dt, z)
        if not np.all(np.isfinite(states)):
            raise NonFiniteState(f"replication {rep}: non-finite state at step {k + 1}", replication=rep, step=k + 1)
        if (k + 1) % cfg.store_stride == 0 or k + 1 == cfg.steps:
            times.append((k + 1) * dt)
            snaps.append(states.copy())
    return Trajectory(rep, np.array(times), np.stack(snaps), running)


_JOB = None


def _run_job(rep):
    model, policy, kernel, cfg, init = _JOB
    return _simulate_one(model, policy, kernel, cfg, init, rep)


def default_workers() -> int:
    env = os.environ.get("GMFC_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def simulate(model: ModelSpec, policy, kernel: StepKernel, cfg: SimConfig, init: InitSpec | None = None) -> TrajectorySet:
    """Run cfg.reps independent replications; results do not depend on cfg.workers."""
    global _JOB
    init = init or InitSpec()
    if kernel.n != cfg.n or policy.n != cfg.n:
        raise SizeMismatch(f"config n={cfg.n}, kernel n={kernel.n}, controls n={policy.n}")
    if policy.box.dim != model.int_box.dim or not (
        np.allclose(policy.box.lower, model.int_box.lower) and np.allclose(policy.box.upper, model.int_box.upper)
    ):
        raise ConfigError("interaction control box does not match the model's", field="controls")
    workers = max(1, min(int(cfg.workers), cfg.reps))
    if workers == 1:
        trajs = [_simulate_one(model, policy, kernel, cfg, init, r) for r in range(cfg.reps)]
    else:
        _JOB = (model, policy, kernel, cfg, init)
        try:
            with mp.get_context("fork").Pool(workers) as pool:
                trajs = pool.map(_run_job, range(cfg.reps), chunksize=1)
        finally:
            _JOB = None
    ts = TrajectorySet(trajs, kernel, cfg, model.name)
    evaluate_cost(ts, model)
    return ts


def terminal_measure(ens: ParticleEnsemble, kernel: StepKernel, i: int):
    """Atoms (X_j, xi_ij) of R^{i,n}; ``i`` is 1-based."""
    if not 1 <= i <= ens.n:
        raise IndexOutOfRange(f"agent index {i} outside 1..{ens.n}")
    if kernel.n != ens.n:
        raise SizeMismatch("kernel and ensemble sizes differ")
    return ens.states.copy(), kernel.marks[i - 1].copy()


def terminal_costs(model: ModelSpec, states: np.ndarray, kernel: StepKernel) -> np.ndarray:
    if model.terminal is None:
        return np.zeros(states.shape[0])
    return np.asarray(model.terminal(states, states, kernel.marks), dtype=float).reshape(states.shape[0])


def evaluate_cost(trajs: TrajectorySet, model: ModelSpec):
    """Monte Carlo mean and standard error of J_n over replications."""
    from .metrics import mc_summary

    for tr in trajs:
        tr.terminal_cost = float(terminal_costs(model, tr.final, trajs.kernel).mean())
    mean, se, _ = mc_summary(trajs.totals())
    return mean, se


# ------------------------------------------------------------------ output


def _f(x) -> str:
    return format(float(x), ".17g")


def write_trajectories_csv(path, trajs: TrajectorySet) -> None:
    d = trajs.trajectories[0].states.shape[2]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "rep", "agent"] + [f"x_{k + 1}" for k in range(d)])
        for tr in trajs:
            for t, snap in zip(tr.times, tr.states):
                for a, x in enumerate(snap, start=1):
                    w.writerow([_f(t), tr.rep, a] + [_f(v) for v in x])


def write_costs_csv(path, trajs: TrajectorySet) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "running", "terminal", "total"])
        for tr in trajs:
            w.writerow([tr.rep, _f(tr.running_cost), _f(tr.terminal_cost or 0.0), _f(tr.total_cost())])


def write_cost_summary_csv(path, trajs: TrajectorySet, mean, se) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "n", "dt", "M", "J_mean", "J_stderr"])
        w.writerow([trajs.model_name, trajs.n, _f(trajs.config.dt), len(trajs), _f(mean), _f(se)])
