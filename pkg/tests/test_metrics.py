import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ppmh.metrics import SolveCounter, Tally, blockwise_mixed_norms, inner_error, mixed_norm, pp_error

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_mixed_norm_identical_is_zero():
    u = np.array([1.0, -2.0, 3.0])
    assert mixed_norm(u, u) == 0.0


def test_mixed_norm_absolute_boundary():
    v = np.array([1e-6, 0.0])
    assert mixed_norm(np.zeros(2), v) == pytest.approx(1.0, rel=1e-12)


def test_mixed_norm_relative_case():
    u = np.array([1.0, 0.0])
    v = np.array([1.0 - 1e-3, 0.0])
    assert mixed_norm(u, v) == pytest.approx(1e-3 / (1e-6 + 1e-3), rel=1e-10)


def test_mixed_norm_normalizes_by_first_argument():
    u, v = np.array([10.0]), np.array([0.0])
    assert mixed_norm(u, v) != mixed_norm(v, u)
    assert mixed_norm(u, v) == pytest.approx(10 / (1e-6 + 1e-2))


def test_pp_error_pairs_and_wrap():
    U = np.array([[1.0], [2.0], [3.0]])
    F = np.array([[2.0], [3.0], [1.0]])  # F_n is the propagation ending at T_n
    assert pp_error(U, F) == 0.0
    F_wrap = F.copy()
    F_wrap[2, 0] = 1.5
    assert pp_error(U, F_wrap) == pytest.approx(mixed_norm(U[0], F_wrap[2]))


def test_pp_error_two_windows_by_hand():
    U = np.array([[1.0], [-1.0]])
    F = np.array([[-0.999], [1.002]])
    by_hand = max(0.001 / (1e-6 + 1e-3), 0.002 / (1e-6 + 1e-3))
    assert pp_error(U, F) == pytest.approx(by_hand)


def test_inner_error_single_block():
    A = np.zeros((4, 2))
    B = A.copy()
    B[2] = [3e-6, 4e-6]
    assert inner_error(B, A) == pytest.approx(5e-6 / (1e-6 + 1e-3 * 5e-6))


@given(arrays(float, (5, 3), elements=finite), arrays(float, (5, 3), elements=finite))
def test_inner_error_is_max_of_blockwise(U, V):
    expected = max(mixed_norm(u, v) for u, v in zip(U, V))
    assert inner_error(U, V) == pytest.approx(expected, rel=1e-12)


@settings(max_examples=50)
@given(st.integers(0, 4), arrays(float, (5, 2), elements=st.floats(-10, 10)), st.floats(1e-3, 1.0))
def test_single_perturbation_isolated(k, U, eps):
    V = U.copy()
    V[k, 0] += eps
    norms = blockwise_mixed_norms(V, U)
    assert np.count_nonzero(norms) == 1 and norms[k] > 0


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        blockwise_mixed_norms(np.zeros((2, 2)), np.zeros((3, 2)))


def test_solve_counter_bookkeeping():
    c = SolveCounter(3)
    c.per_worker[0] += Tally(2, 5)
    c.per_worker[2] += Tally(1, 0)
    assert c.effective() == 7
    assert c.total() == 8
    assert c.factor_solves() == 3 and c.cached_resolves() == 5
    assert c.effective() <= c.total() <= c.workers * c.effective()
    assert c.to_dict()["total"] == 8
