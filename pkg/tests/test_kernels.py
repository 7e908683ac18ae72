import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from gmfc.errors import DomainViolation, MarkOutOfBounds, NonSquareMatrix, SizeCapExceeded
from gmfc.kernels import (
    MarkSpace,
    block_index,
    cut_distance,
    cut_norm_exact,
    cut_norm_lower_bound,
    eval_step_kernel,
    graphon_by_id,
    l1_distance,
    load_step_kernel,
    refine,
    sample_from_graphon,
    save_step_kernel,
    step_kernel_from_matrix,
)


def brute_cut_norm(m):
    """max over all row and column subsets of |sum|, with uniform 1/n weights."""
    r, c = m.shape
    w = m / (r * c)
    best = 0.0
    for rows in itertools.product([False, True], repeat=r):
        rows = np.array(rows)
        for cols in itertools.product([False, True], repeat=c):
            best = max(best, abs(w[np.ix_(rows, np.array(cols))].sum()))
    return best


small = st.integers(1, 5).flatmap(
    lambda r: st.integers(1, 5).flatmap(
        lambda c: arrays(float, (r, c), elements=st.floats(-3, 3, allow_nan=False, width=32))
    )
)


def test_block_convention_is_left_open():
    assert block_index(0.25, 4) == 0
    assert block_index(0.0, 4) == 0
    assert block_index(0.2500001, 4) == 1
    assert block_index(1.0, 4) == 3


def test_block_index_rejects_outside_unit_interval():
    with pytest.raises(DomainViolation):
        block_index(1.5, 4)
    with pytest.raises(DomainViolation):
        block_index(np.nan, 4)


def test_step_kernel_lookup():
    k = step_kernel_from_matrix([[0.1, 0.2], [0.3, 0.4]])
    assert eval_step_kernel(k, 0.5, 0.51)[0] == 0.2
    assert eval_step_kernel(k, 1.0, 0.0)[0] == 0.3
    assert k.n == 2 and k.dim == 1


def test_step_kernel_errors():
    with pytest.raises(NonSquareMatrix):
        step_kernel_from_matrix(np.zeros((2, 3)))
    with pytest.raises(MarkOutOfBounds) as exc:
        step_kernel_from_matrix([[0.0, 0.5], [2.0, 0.1]])
    assert exc.value.index == (1, 0)


def test_step_kernel_is_read_only():
    k = step_kernel_from_matrix(np.eye(3))
    with pytest.raises(ValueError):
        k.marks[0, 0, 0] = 0.5


def test_cut_norm_trivial_values():
    assert cut_norm_exact(np.zeros((3, 3))) == 0.0
    assert cut_norm_exact(np.ones((3, 3))) == 1.0
    # checkerboard: best rectangle picks the positive cells of one row block
    assert cut_norm_exact(np.array([[1.0, -1.0], [-1.0, 1.0]])) == pytest.approx(0.25)


@given(small)
def test_exact_cut_norm_matches_brute_force(m):
    assert cut_norm_exact(m) == pytest.approx(brute_cut_norm(m), abs=1e-12)


@given(small, st.integers(0, 1000))
def test_lower_bound_never_exceeds_exact(m, seed):
    assert cut_norm_lower_bound(m, restarts=4, rng_seed=seed) <= cut_norm_exact(m) + 1e-12


def test_exact_cap():
    with pytest.raises(SizeCapExceeded):
        cut_norm_exact(np.random.default_rng(0).standard_normal((30, 30)))
    # the cap applies to the shorter side only
    cut_norm_exact(np.random.default_rng(0).standard_normal((4, 40)))


def test_refine_breakpoints():
    widths, i1, i2 = refine(2, 3)
    np.testing.assert_allclose(np.cumsum(widths), [1 / 3, 1 / 2, 2 / 3, 1.0])
    assert i1.tolist() == [0, 0, 1, 1]
    assert i2.tolist() == [0, 1, 1, 2]


@given(st.integers(1, 40), st.integers(1, 40))
def test_refine_widths_sum_to_one(a, b):
    widths, i1, i2 = refine(a, b)
    assert abs(widths.sum() - 1.0) < 1e-12
    assert i1.max() == a - 1 and i2.max() == b - 1


def test_cut_distance_identity_and_aligned_sbm():
    g = graphon_by_id("sbm2")
    ref = sample_from_graphon(g, 16)
    for n in (2, 4, 8):
        assert cut_distance(sample_from_graphon(g, n), ref).value == 0.0
    k = sample_from_graphon(graphon_by_id("product"), 5)
    assert cut_distance(k, k).value == 0.0


def test_one_signed_shortcut_agrees_with_enumeration():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = step_kernel_from_matrix(rng.random((5, 5)) * 0.5 + 0.5)
        b = step_kernel_from_matrix(rng.random((3, 3)) * 0.5)
        fast = cut_distance(a, b)
        widths, i1, i2 = refine(5, 3)
        diff = a.scalar()[np.ix_(i1, i1)] - b.scalar()[np.ix_(i2, i2)]
        assert fast.method == "exact"
        assert fast.value == pytest.approx(cut_norm_exact(diff, widths, widths), abs=1e-14)


@given(st.integers(1, 6), st.integers(1, 6), st.integers(0, 10_000))
def test_cut_distance_bounded_by_l1(n1, n2, seed):
    rng = np.random.default_rng(seed)
    a = step_kernel_from_matrix(rng.random((n1, n1)))
    b = step_kernel_from_matrix(rng.random((n2, n2)))
    assert cut_distance(a, b).value <= l1_distance(a, b) + 1e-12


def test_kernel_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(1)
    k = step_kernel_from_matrix(rng.random((4, 4, 2)), MarkSpace([0, 0], [1, 1]))
    save_step_kernel(tmp_path / "k.csv", k)
    back = load_step_kernel(tmp_path / "k.csv")
    assert np.array_equal(back.marks, k.marks)
    assert np.array_equal(back.mark_space.upper, k.mark_space.upper)
    assert (tmp_path / "k.csv").read_text().startswith("# stepkernel n=4 dim=2 lo=0;0 hi=1;1")


def test_unknown_graphon():
    with pytest.raises(KeyError):
        graphon_by_id("nope")
