import numpy as np
import pytest
from hypothesis import given, strategies as st

from gmfc.controls import (
    ActionBox,
    RelaxedPairControl,
    bang_bang,
    barycentric_projection,
    chattering_selector,
    clamp_action,
    interaction_constant,
    interaction_from_callable,
    lift_to_nplayer,
    product_form,
    relaxed_affine,
    relaxed_indicator,
    relaxed_uniform,
    sample_relaxed_realization,
)
from gmfc.dynamics import pair_terms
from gmfc.errors import DimensionMismatch, GridMismatch, WeightsNotNormalized
from gmfc.kernels import graphon_by_id, sample_from_graphon
from gmfc.models import example2_model, phi_constant


def test_clamp_examples():
    box = ActionBox.interval(0.0, 1.0)
    assert clamp_action(0.3, box) == 0.3
    assert clamp_action(2.0, box) == 1.0
    assert clamp_action(-1.0, box) == 0.0


def test_clamp_dimension_mismatch():
    box = ActionBox(np.zeros(2), np.ones(2))
    with pytest.raises(DimensionMismatch):
        clamp_action(np.zeros(3), box)


def test_bang_bang_on_constant_phi():
    x = np.zeros((4, 1))
    off = bang_bang(phi_constant(-1.0))
    on = bang_bang(phi_constant(1.0))
    assert np.all(off(0.0, x, 0.5, x, 0.5) == 0.0)
    assert np.all(on(0.0, x, 0.5, x, 0.5) == 1.0)
    flip = bang_bang(phi_constant(1.0), flipped=True)
    assert np.all(flip(0.0, x, 0.5, x, 0.5) == 0.0)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5),
       st.floats(-10, 10), st.floats(0, 1))
def test_product_form_stays_in_box(c, a1, b1, a2, b2, x, u):
    g = product_form(c, a1, b1, a2, b2)
    out = g(0.0, np.array([x]), u, np.array([-x]), 1 - u)
    assert g.box.contains(out)


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(0, 1), st.floats(0, 1))
def test_relaxed_affine_stays_in_box(c0, cv, cv2, cpi, v, pi):
    g = relaxed_affine(c0, cv, cv2, cpi)
    x = np.zeros(1)
    assert g.box.contains(g(0.0, x, 0.5, v, x, 0.5, 1 - v, pi))


def test_lift_respects_dependency_restriction():
    g = interaction_from_callable(lambda t, x, u, y, v, pop: 0.5 + 0.5 * np.tanh(x[..., 0] - y[..., 0]) * u * v)
    n = 7
    pm = lift_to_nplayer(g, None, n)
    rng = np.random.default_rng(0)
    states = rng.standard_normal((n, 1))
    before = pm.dense(0.0, states)
    k = 3
    moved = states.copy()
    moved[k] += 10.0
    after = pm.dense(0.0, moved)
    keep = np.ones(n, bool)
    keep[k] = False
    assert np.array_equal(before[np.ix_(keep, keep)], after[np.ix_(keep, keep)])
    assert not np.array_equal(before[k], after[k])


def test_pair_accessor_is_one_based():
    g = interaction_from_callable(lambda t, x, u, y, v, pop: u * v)
    pm = lift_to_nplayer(g, None, 4)
    states = np.zeros((4, 1))
    assert pm.pair(0.0, states, 2, 4) == pytest.approx(0.5)
    assert pm.block_in(0.0, states)[1, 3] == pytest.approx(0.5)


def test_projection_of_uniform_and_indicator():
    x = np.zeros(1)
    assert barycentric_projection(relaxed_uniform())(0.0, x, 0.3, x, 0.6) == pytest.approx(0.5, abs=1e-15)
    # p on the midpoint grid boundary: exact
    assert barycentric_projection(relaxed_indicator(0.25), 16)(0.0, x, 0.3, x, 0.6) == 0.25
    g = relaxed_affine(0.1, 0.2, 0.3, 0.4)
    assert barycentric_projection(g, 4)(0.0, x, 0.3, x, 0.6) == pytest.approx(0.1 + 0.45, abs=1e-14)


def test_projection_of_deterministic_is_identity():
    base = product_form(1.0, 0.2, 0.5, 0.3, 0.4)
    from gmfc.controls import RelaxedInteractionControl

    proj = barycentric_projection(RelaxedInteractionControl.from_deterministic(base))
    x = np.zeros(1)
    for u, v in [(0.1, 0.9), (0.5, 0.5), (1.0, 0.0)]:
        assert proj(0.0, x, u, x, v) == base(0.0, x, u, x, v)


def test_projection_reproduces_expected_linear_drift():
    """Drift linear in the action: projected drift equals the average randomized drift."""
    model = example2_model()
    n = 12
    kernel = sample_from_graphon(graphon_by_id("product"), n)
    rng = np.random.default_rng(5)
    states = rng.standard_normal((n, 1))
    gbar = relaxed_affine(0.1, 0.5, 0.2, 0.1)
    proj = lift_to_nplayer(barycentric_projection(gbar, 8), None, n)
    d_proj, _ = pair_terms(0.0, states, model, proj, kernel, need_cost=False)
    # drift is affine in each agent's uniform and in pi: averaging over a symmetric grid is exact
    nodes = (np.arange(8) + 0.5) / 8
    acc = np.zeros_like(d_proj)
    rel = RelaxedPairControl(n, gbar)
    for q in nodes:
        for p in nodes:
            d, _ = pair_terms(0.0, states, model, rel.realize(0.0, states, np.full(n, q), p), kernel, need_cost=False)
            acc += d
    np.testing.assert_allclose(acc / 64, d_proj, atol=1e-13)


def test_sample_relaxed_realization_is_seeded():
    states = np.linspace(-1, 1, 6)
    a = sample_relaxed_realization(relaxed_uniform(), 6, 0.0, states, np.random.default_rng(9))
    b = sample_relaxed_realization(relaxed_uniform(), 6, 0.0, states, np.random.default_rng(9))
    assert np.array_equal(a.matrix, b.matrix)
    assert a.box.contains(a.matrix)
    # gbar = v: row i carries agent i's uniform
    assert np.all(a.matrix == a.matrix[:, :1])


def test_constant_interaction_vector_box():
    box = ActionBox(np.zeros(2), np.ones(2))
    g = interaction_constant([0.2, 2.0], box)
    out = g(0.0, np.zeros((3, 1)), 0.5, np.zeros((3, 1)), 0.5)
    assert out.shape == (3, 2)
    assert np.all(out[:, 1] == 1.0)


# ------------------------------------------------------------ chattering


def _weights(k, m, seed):
    w = np.random.default_rng(seed).random((k, m, m))
    return w / w.sum(axis=0)


@pytest.mark.parametrize("mode", ["strip", "cyclic"])
@pytest.mark.parametrize("k,m,n", [(2, 1, 3), (3, 2, 4), (4, 3, 6)])
def test_chattering_selector_reproduces_weights(mode, k, m, n):
    w = _weights(k, m, k * 10 + m)
    sel = chattering_selector(w, n, np.arange(k, dtype=float), mode=mode)
    res = 4000
    s_off = (np.arange(res) + 0.5) / res
    for j in range(n):
        for ell in range(n):
            s = (j + s_off) / n
            # s-measure of each action for a few t positions inside the cell
            for q in (0.1, 0.5, 0.9):
                t = np.full(res, (ell + q) / n)
                frac = np.bincount(sel.index(s, t), minlength=k) / res
                np.testing.assert_allclose(frac, sel.cell_weights(j, ell), atol=2.0 / res)


def test_chattering_intervals_have_exact_lengths():
    w = _weights(3, 2, 0)
    sel = chattering_selector(w, 4, [0.0, 0.5, 1.0])
    for j in range(4):
        for ell in range(4):
            lengths = np.array([b - a for a, b in sel.intervals(j, ell)])
            np.testing.assert_allclose(lengths, sel.cell_weights(j, ell) / 4, atol=1e-15)
            assert sel.intervals(j, ell)[0][0] == j / 4


def test_cyclic_selector_has_exact_t_marginal():
    w = _weights(2, 1, 4)
    sel = chattering_selector(w, 2, [0.0, 1.0], mode="cyclic")
    res = 2000
    t_off = (np.arange(res) + 0.5) / res
    for j in range(2):
        for ell in range(2):
            t = (ell + t_off) / 2
            s = np.full(res, (j + 0.3) / 2)
            frac = np.bincount(sel.index(s, t), minlength=2) / res
            np.testing.assert_allclose(frac, w[:, 0, 0], atol=2.0 / res)


def test_chattering_errors():
    with pytest.raises(WeightsNotNormalized):
        chattering_selector(np.array([0.5, 0.6]), 2, [0.0, 1.0])
    with pytest.raises(GridMismatch):
        chattering_selector(_weights(2, 3, 0), 4, [0.0, 1.0])
