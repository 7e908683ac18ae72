"""Catalog of ready-made models (the two worked examples plus test models)."""
from __future__ import annotations

import importlib

import numba
import numpy as np

from .controls import ActionBox, PairControlMatrix
from .dynamics import ModelSpec
from .errors import ConfigError

# ----------------------------------------------------------------- Example 1
# drift   b_i = 1/n sum_j gamma_ij Phi(t, x_i, x_j, mu^n_t),  sigma = 1,  L = 0
# reward  g(x, R) = G(state marginal of R)


def phi_tanh(scale=1.0):
    def phi(t, x, y, pop):
        return np.tanh(scale * (y[..., 0] - x[..., 0]))

    phi.family = "tanh"
    phi.scale = float(scale)
    return phi


def phi_constant(c):
    def phi(t, x, y, pop):
        return np.full(np.broadcast_shapes(x.shape[:-1], y.shape[:-1]), float(c))

    phi.family = "constant"
    phi.value = float(c)
    return phi


def phi_y_minus_mean(scale=1.0):
    def phi(t, x, y, pop):
        shape = np.broadcast_shapes(x.shape[:-1], y.shape[:-1])
        return np.broadcast_to(scale * (y[..., 0] - pop[:, 0].mean()), shape)

    phi.family = "y_minus_mean"
    phi.scale = float(scale)
    return phi


PHI_FAMILIES = {"tanh": phi_tanh, "constant": phi_constant, "y_minus_mean": phi_y_minus_mean}


def make_phi(family: str, params=()):
    try:
        return PHI_FAMILIES[family](*params)
    except KeyError:
        raise ConfigError(f"unknown Phi family {family!r}; known: {sorted(PHI_FAMILIES)}", field="phi") from None


@numba.njit(cache=True)
def _positive_tanh_mean(x, s):
    """out_i = 1/n sum_j max(tanh(s (x_j - x_i)), 0) in O(n^2 / 2) via sorting."""
    n = x.shape[0]
    order = np.argsort(x)
    xs = x[order]
    c = xs[n // 2]
    spread = 2.0 * s * max(xs[n - 1] - c, c - xs[0])
    res = np.empty(n)
    if spread < 600.0:
        e = np.exp(2.0 * s * (xs - c))
        for i in range(n):
            ei = e[i]
            acc = 0.0
            for j in range(i + 1, n):
                acc += (e[j] - ei) / (e[j] + ei)
            res[i] = acc / n
    else:
        for i in range(n):
            acc = 0.0
            for j in range(i + 1, n):
                acc += np.tanh(s * (xs[j] - xs[i]))
            res[i] = acc / n
    out = np.empty(n)
    out[order] = res
    return out


def _example1_fast(phi):
    def fast(t, states, policy, kernel):
        if not isinstance(policy, PairControlMatrix) or policy.matrix is not None or states.shape[1] != 1:
            return None
        g = policy.gamma
        if getattr(phi, "family", None) != "tanh" or phi.scale <= 0:
            return None
        box = g.box
        if g.family == "bang_bang_phi" and g.phi is phi and g.params[0] == 0.0 \
                and box.lower[0] == 0.0 and box.upper[0] == 1.0:
            return _positive_tanh_mean(np.ascontiguousarray(states[:, 0]), phi.scale)[:, None]
        return None

    return fast


def terminal_mean(x, states, marks):
    return np.full(x.shape[0], states[:, 0].mean())


def example1_model(phi="tanh", phi_params=(1.0,), G="mean", sigma=1.0, fast=True) -> ModelSpec:
    phi_fn = make_phi(phi, phi_params)
    if G != "mean":
        raise ConfigError(f"unknown terminal functional {G!r}; known: ['mean']", field="G")
    b_max = 1.0 if phi == "tanh" else (abs(phi_params[0]) if phi == "constant" else None)
    return ModelSpec(
        name="example1",
        d=1,
        sigma=float(sigma),
        drift_out=lambda a: phi_fn(a.t, a.x, a.y, a.pop),
        terminal=terminal_mean,
        fast_drift=_example1_fast(phi_fn) if fast else None,
        b_max=b_max,
        theta=float(sigma) ** 2,
        # G = mean has derivative 1 in x; every catalog Phi is nondecreasing in y
        monotone_declared=True,
        params={"phi": phi, "phi_params": tuple(phi_params), "G": G, "sigma": sigma, "phi_fn": phi_fn},
    )


# ----------------------------------------------------------------- Example 2
# drift   1/n sum_j gamma_ij b1(xi_ij, x_j) + 1/n sum_j gamma_ji b2(xi_ij, x_j)
# reward  1/n sum_j L(gamma_ij, xi_ij, x_j) running, g(x_i) terminal

RUNNING_FAMILIES = ("neg_square", "linear", "concave_quadratic")
TERMINAL_FAMILIES = ("zero", "identity", "neg_square")


def running_reward(family: str, params=()):
    if family == "neg_square":
        return lambda a, e: -(e ** 2), True
    if family == "linear":
        return lambda a, e: e * a.marks[..., 0], True
    if family == "concave_quadratic":
        defaults = (1.0, 0.0, 0.0)
        curv, slope, center = (tuple(float(p) for p in params) + defaults[len(params):])[:3]
        return lambda a, e: -curv * (e - center) ** 2 + slope * e, curv >= 0
    raise ConfigError(f"unknown running reward {family!r}; known: {RUNNING_FAMILIES}", field="running")


def terminal_reward(family: str):
    if family == "zero":
        return None
    if family == "identity":
        return lambda x, states, marks: x[:, 0].copy()
    if family == "neg_square":
        return lambda x, states, marks: -(x[:, 0] ** 2)
    raise ConfigError(f"unknown terminal reward {family!r}; known: {TERMINAL_FAMILIES}", field="terminal")


def example2_model(b1_scale=1.0, b2_scale=-0.5, sigma=1.0, running="neg_square", running_params=(),
                   terminal="identity") -> ModelSpec:
    L, concave = running_reward(running, running_params)
    return ModelSpec(
        name="example2",
        d=1,
        sigma=float(sigma),
        drift_out=lambda a: b1_scale * a.marks[..., 0] * np.tanh(a.y[..., 0]),
        drift_in=lambda a: b2_scale * a.marks[..., 0] * np.tanh(a.y[..., 0]),
        cost_out=L,
        terminal=terminal_reward(terminal),
        b_max=abs(b1_scale) + abs(b2_scale),
        theta=float(sigma) ** 2,
        concave_in_action=concave,
        params={"b1_scale": b1_scale, "b2_scale": b2_scale, "sigma": sigma, "running": running,
                "running_params": tuple(running_params), "terminal": terminal},
    )


# -------------------------------------------------------------- test models


def brownian_model(sigma=1.0, d=1, terminal="square") -> ModelSpec:
    """No drift; terminal reward |x|^2 so that J equals E|X_T|^2."""
    term = (lambda x, s, m: (x ** 2).sum(axis=1)) if terminal == "square" else None
    return ModelSpec(name="brownian", d=int(d), sigma=float(sigma), terminal=term, b_max=0.0,
                     params={"sigma": sigma, "d": d, "terminal": terminal})


def constant_drift_model(c=1.0, sigma=0.0, d=1) -> ModelSpec:
    c = float(c)
    return ModelSpec(name="constant_drift", d=int(d), sigma=float(sigma),
                     drift_self=lambda t, x, a: np.full(x.shape, c), b_max=abs(c) * np.sqrt(d),
                     params={"c": c, "sigma": sigma, "d": d})


def _meanfield_fast(t, states, policy, kernel):
    if isinstance(policy, PairControlMatrix) and policy.matrix is None and policy.gamma.family == "constant":
        c = float(policy.gamma.params[0])
        return np.broadcast_to(c * states.mean(axis=0), states.shape)
    return None


def meanfield_average_model(sigma=0.0, d=1, fast=True) -> ModelSpec:
    """b1(x_j) = x_j: each agent drifts toward gamma-weighted population average."""
    return ModelSpec(name="meanfield_avg", d=int(d), sigma=float(sigma),
                     drift_out=lambda a: np.broadcast_to(a.y, np.broadcast_shapes(a.x.shape, a.y.shape)),
                     fast_drift=_meanfield_fast if fast else None,
                     params={"sigma": sigma, "d": d})


MODELS = {
    "example1": example1_model,
    "example2": example2_model,
    "brownian": brownian_model,
    "constant_drift": constant_drift_model,
    "meanfield_avg": meanfield_average_model,
}


def model_by_id(model_id: str, **params) -> ModelSpec:
    if model_id == "custom":
        ref = params.pop("ref", None)
        if not ref or ":" not in ref:
            raise ConfigError("custom model needs ref = 'module:function'", field="model.ref")
        mod, _, fn = ref.partition(":")
        return getattr(importlib.import_module(mod), fn)(**params)
    try:
        factory = MODELS[model_id]
    except KeyError:
        raise ConfigError(f"unknown model {model_id!r}; known: {sorted(MODELS) + ['custom']}", field="model.id") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for model {model_id!r}: {exc}", field="model") from None
