import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmfc import experiments as ex
from gmfc.controls import interaction_constant
from gmfc.dynamics import InitSpec, SimConfig
from gmfc.errors import BudgetTooSmall, ConcavityNotDeclared, ConfigError
from gmfc.kernels import graphon_by_id, sample_from_graphon
from gmfc.models import brownian_model, example1_model, running_reward

QUICK = dict(n=16, reps=6, dt=0.05)


def test_example1_negative_phi_matches_zero_control_exactly():
    rep = ex.run_example1(ex.Example1Config(phi="constant", phi_params=(-1.0,), **QUICK))
    assert rep.verdict == ex.PASS
    assert ("exact_equality_with_zero", True, "per-replication costs and terminal states") in rep.checks


def test_example1_positive_phi_matches_one_control_exactly():
    rep = ex.run_example1(ex.Example1Config(phi="constant", phi_params=(1.0,), **QUICK))
    assert dict((c[0], c[1]) for c in rep.checks)["exact_equality_with_one"]


def test_example1_mean_field_phi_beats_full_interaction():
    cfg = ex.Example1Config(phi="y_minus_mean", phi_params=(1.0,), n=40, reps=16, dt=0.05, baselines=("one",))
    rep = ex.run_example1(cfg)
    assert rep.verdict == ex.PASS


def test_example1_report_mentions_plug_in():
    rep = ex.run_example1(ex.Example1Config(**QUICK, baselines=("zero",)))
    assert any("plug-in" in note for note in rep.notes)


def test_example1_rejects_unknown_baseline():
    with pytest.raises(ConfigError):
        ex.run_example1(ex.Example1Config(**QUICK, baselines=("bogus",)))


def test_jensen_oracle_closed_forms():
    neg_sq = lambda e: -e * e
    assert ex.jensen_gap_oracle(ex.make_relaxed("uniform"), neg_sq, 1.0) == pytest.approx(1 / 12, abs=1e-10)
    assert ex.jensen_gap_oracle(ex.make_relaxed("indicator", (0.3,)), neg_sq, 2.0) == pytest.approx(
        2 * 0.3 * 0.7, abs=1e-8)
    assert ex.jensen_gap_oracle(ex.make_relaxed("deterministic", (0.4,)), neg_sq, 1.0) == 0.0
    # two independent uniforms with coefficients 0.3 and 0.2: variance (0.09 + 0.04) / 12
    g = ex.make_relaxed("affine", (0.1, 0.3, 0.2, 0.0))
    assert ex.jensen_gap_oracle(g, neg_sq, 1.0) == pytest.approx(0.13 / 12, abs=1e-10)


def test_example2_deterministic_is_exact():
    rep = ex.run_example2(ex.Example2Config(n=12, reps=4, dt=0.1, gbar="deterministic", gbar_params=(0.3,)))
    rows = {r["quantity"]: r for r in rep.rows}
    assert rows["J_randomized"]["value"] == rows["J_projected"]["value"]
    assert rep.verdict == ex.PASS


def test_example2_requires_concavity():
    with pytest.raises(ConcavityNotDeclared):
        ex.run_example2(ex.Example2Config(n=8, reps=2, dt=0.1, running="concave_quadratic", running_params=(-1.0,)))


@settings(max_examples=6)
@given(st.floats(0.0, 2.0), st.floats(-1.0, 1.0), st.floats(0.0, 1.0))
def test_example2_gap_nonnegative_on_concave_family(curv, slope, center):
    cfg = ex.Example2Config(n=10, reps=6, dt=0.1, running="concave_quadratic",
                            running_params=(curv, slope, center))
    rep = ex.run_example2(cfg)
    assert dict((c[0], c[1]) for c in rep.checks)["projected>=randomized"]


def test_running_reward_concavity_flags():
    assert running_reward("neg_square")[1]
    assert running_reward("concave_quadratic", (2.0,))[1]
    assert not running_reward("concave_quadratic", (-0.5,))[1]


def test_convergence_sweep_row_count():
    cfg = ex.ConvergenceConfig(ns=(50, 100), ref_n=400, reps=3, dt=0.1)
    rep = ex.run_convergence(cfg)
    assert [r["n"] for r in rep.rows] == [50, 100]
    assert all(r["coupled"] for r in rep.rows)


def test_convergence_sweep_validates_inputs():
    with pytest.raises(ConfigError):
        ex.run_convergence(ex.ConvergenceConfig(ns=(100, 50), ref_n=400))
    with pytest.raises(ConfigError):
        ex.run_convergence(ex.ConvergenceConfig(ns=(50, 100), ref_n=100))


def test_decoupled_sweep_sits_at_sampling_floor():
    """No interaction: distances to the reference match independent-sample distances."""
    m = brownian_model()
    gamma = interaction_constant(0.0)
    cfg = ex.ConvergenceConfig(reps=8, dt=0.1, T=0.5)
    rep = ex.convergence_sweep(m, gamma, None, graphon_by_id("constant"), [20, 40], 160, cfg,
                               InitSpec("gaussian", (0.0, 1.0)))
    # coupled agents are exact lattice subsets of the reference: no drift means no law error
    for r in rep.rows:
        assert r["abs_J_diff"] < 4 * r["abs_J_diff_stderr"] + 1e-12


def test_kernel_convergence_examples():
    const = ex.kernel_convergence_check(graphon_by_id("constant"), [2, 4, 8])
    assert all(r["cut_distance"] == 0.0 for r in const.rows) and const.verdict == ex.PASS
    sbm = ex.kernel_convergence_check(graphon_by_id("sbm2"), [2, 4, 8])
    assert all(r["cut_distance"] == 0.0 for r in sbm.rows)
    assert any("trend-only" in note for note in sbm.notes)
    prod = ex.kernel_convergence_check(graphon_by_id("product"), [4, 8, 16, 32])
    vals = [r["cut_distance"] for r in prod.rows]
    assert prod.verdict == ex.PASS
    # the difference to the reference is one-signed, so the cut norm is its total mass
    ref = 64
    expected = [((n + 1) / (2 * n)) ** 2 - ((ref + 1) / (2 * ref)) ** 2 for n in (4, 8, 16, 32)]
    np.testing.assert_allclose(vals, expected, rtol=1e-12)


def test_kernel_convergence_unknown_map():
    with pytest.raises(ConfigError):
        ex.kernel_convergence_check(graphon_by_id("product"), [2, 4], f="cube")


def test_optimizer_budget_and_degenerate_init():
    m = example1_model()
    fam = ex.control_family("threshold", m)
    k = sample_from_graphon(graphon_by_id("constant"), 10)
    cfg = SimConfig(n=10, T=0.2, dt=0.1, reps=2)
    with pytest.raises(BudgetTooSmall):
        ex.optimize_control(m, fam, k, cfg, budget=4, pop_size=8)
    theta, _, _ = ex.optimize_control(m, fam, k, cfg, budget=16, pop_size=8, init_mean=[0.25], init_std=[0.0])
    assert theta.tolist() == [0.25]


def test_optimizer_finds_boundary_optimum():
    m = example1_model("constant", (1.0,))
    fam = ex.control_family("constant", m)
    k = sample_from_graphon(graphon_by_id("constant"), 10)
    cfg = SimConfig(n=10, T=1.0, dt=0.1, reps=3)
    theta, _, rep = ex.optimize_control(m, fam, k, cfg, budget=64, pop_size=16, init_mean=[0.5], init_std=[0.5])
    assert abs(theta[0] - 1.0) <= 0.05
    assert rep.verdict == ex.PASS


def test_report_write_is_deterministic(tmp_path):
    rep = ex.run_kernelconv(ex.KernelConvConfig(ns=(2, 4)))
    a = rep.write(tmp_path / "a")
    b = rep.write(tmp_path / "b")
    for name in ("report.csv", "summary.csv", "config_resolved.json", "cut_distance_vs_n.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    assert (a / "summary.csv").read_text().splitlines()[-1].startswith("verdict,pass")
