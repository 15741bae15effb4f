import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ftcl.filtering import NormalizedSample
from ftcl.history import (
    HistoryStack,
    eig_extremes,
    jacobi_eigenvalues,
    rank_condition,
    record,
    spectral_norm,
)

from oracles import charpoly_3, poly_roots_by_scan


def sample(d):
    d = np.asarray(d, dtype=float)
    return NormalizedSample(d, np.zeros(1), np.zeros(1), 1.0, np.zeros(1))


def fill(capacity, vectors):
    stack = HistoryStack.empty(capacity, len(vectors[0]), require_rank_capacity=False)
    for k, v in enumerate(vectors):
        _, stack = record(stack, sample(v), k)
    return stack


@pytest.mark.parametrize(
    "S, expected",
    [
        (np.eye(3), (1.0, 1.0)),
        (np.diag([0.2, 5.0]), (0.2, 5.0)),
        (np.array([[2.0, 1.0], [1.0, 2.0]]), (1.0, 3.0)),
    ],
)
def test_eig_extremes_examples(S, expected):
    lo, hi = eig_extremes(S)
    assert lo == pytest.approx(expected[0], abs=1e-12)
    assert hi == pytest.approx(expected[1], abs=1e-12)


def test_eig_extremes_rejects_asymmetric():
    with pytest.raises(ValueError):
        eig_extremes(np.array([[1.0, 2.0], [0.0, 1.0]]))


@pytest.mark.parametrize("n", [2, 3])
def test_jacobi_matches_characteristic_polynomial(n):
    rng = np.random.default_rng(n)
    for _ in range(20):
        A = rng.normal(size=(n, n))
        S = A @ A.T
        bound = np.abs(S).sum()
        roots = poly_roots_by_scan(charpoly_3(S), -1e-9, bound + 1.0)
        lo, hi = eig_extremes(S)
        assert lo == pytest.approx(roots[0], abs=1e-8)
        assert hi == pytest.approx(roots[-1], abs=1e-8)


def test_jacobi_zero_and_empty():
    assert jacobi_eigenvalues(np.zeros((3, 3))) == [0.0, 0.0, 0.0]
    assert jacobi_eigenvalues(np.zeros((0, 0))) == []


def test_spectral_norm():
    W = np.array([[3.0, 0.0], [4.0, 0.0]])
    assert spectral_norm(W) == pytest.approx(5.0)
    assert spectral_norm(np.array([[-2.0]])) == pytest.approx(2.0)


def test_fill_phase_accepts():
    stack = HistoryStack.empty(3, 3)
    accepted, stack = record(stack, sample([0.1, 0.2, 0.3]), 1)
    assert accepted and len(stack) == 1


def test_duplicate_rejected_on_perfect_stack():
    stack = fill(2, [[1.0, 0.0], [0.0, 1.0]])
    assert stack.ratio == pytest.approx(1.0)
    accepted, new = record(stack, sample([1.0, 0.0]), 5)
    assert not accepted and new is stack


def test_swap_makes_identity():
    stack = fill(2, [[1.0, 0.0], [1.0, 0.0]])
    assert stack.lam_min == pytest.approx(0.0, abs=1e-15)
    accepted, new = record(stack, sample([0.0, 1.0]), 2)
    assert accepted
    np.testing.assert_allclose(new.S, np.eye(2), atol=1e-15)
    assert new.ratio == pytest.approx(1.0)
    # tie between both slots goes to the lowest index
    assert new.columns[0].tau == 2


def test_rank_condition_cases():
    assert rank_condition(fill(3, list(np.eye(3))))
    assert not rank_condition(fill(3, [np.zeros(3)] * 3))
    assert not rank_condition(fill(3, [[1.0, 0, 0]] * 3))


def test_rank_capacity_enforced():
    with pytest.raises(ValueError):
        HistoryStack.empty(2, 3)


def test_record_rejects_wrong_dimension():
    with pytest.raises(ValueError):
        record(HistoryStack.empty(3, 3), sample([1.0, 2.0]), 0)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_ratio_never_decreases(seed):
    rng = np.random.default_rng(seed)
    stack = fill(3, list(rng.normal(size=(3, 3))))
    for k in range(40):
        before = stack.ratio
        _, stack = record(stack, sample(rng.normal(size=3)), k)
        assert stack.ratio >= before
        np.testing.assert_allclose(stack.S, stack.M @ stack.M.T, atol=1e-12)


def test_to_csv_roundtrip(tmp_path):
    stack = fill(2, [[0.1, 0.2], [0.3, -0.4]])
    path = tmp_path / "stack.csv"
    stack.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "tau,d_bar1,d_bar2,l_bar1,x_bar1"
    assert float(lines[2].split(",")[2]) == -0.4
