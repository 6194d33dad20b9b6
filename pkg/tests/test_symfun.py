import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from hessianlab import symfun
from hessianlab.errors import AdmissibilityError, DomainError

from conftest import random_admissible, random_symmetric


def brute_sigma(lam, k):
    return sum(math.prod(c) for c in itertools.combinations(lam, k))


def charpoly_sigma(lam, k):
    # prod (x - lam_i) = sum_j (-1)^j sigma_j x^{n-j}
    return (-1) ** k * np.poly(lam)[k]


# ---------------------------------------------------------------- sigma_elem

@pytest.mark.parametrize("lam,k,expected", [
    ((1, 1, 1), 2, 3.0),
    ((1, 2, 3), 2, 11.0),
    ((1, 2, 3), 0, 1.0),
    ((-4.0, 7.5), 0, 1.0),
    ((1, 2, 3), 3, 6.0),
])
def test_sigma_elem_examples(lam, k, expected):
    assert symfun.sigma_elem(lam, k) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("k", [-1, 4])
def test_sigma_elem_order_out_of_range(k):
    with pytest.raises(DomainError):
        symfun.sigma_elem((1.0, 2.0, 3.0), k)


@given(hnp.arrays(float, st.integers(1, 5), elements=st.floats(-5, 5)), st.data())
def test_sigma_elem_matches_subset_enumeration(lam, data):
    k = data.draw(st.integers(0, lam.size))
    ref = brute_sigma(lam, k)
    assert symfun.sigma_elem(lam, k) == pytest.approx(ref, rel=1e-10, abs=1e-9)


def test_sigma_elem_matches_characteristic_polynomial(rng):
    for _ in range(50):
        lam = rng.uniform(-3, 3, size=4)
        for k in range(5):
            assert symfun.sigma_elem(lam, k) == pytest.approx(charpoly_sigma(lam, k), abs=1e-10)


def test_sigma_elem_batch_axes(rng):
    lam = rng.standard_normal((7, 3))
    batch = symfun.sigma_elem(lam, 2)
    assert batch.shape == (7,)
    for row, v in zip(lam, batch):
        assert v == pytest.approx(brute_sigma(row, 2), abs=1e-12)


@given(hnp.arrays(float, 3, elements=st.floats(-5, 5)), st.floats(0.1, 4.0), st.integers(0, 3))
def test_sigma_elem_homogeneous(lam, t, k):
    assert symfun.sigma_elem(t * lam, k) == pytest.approx(t**k * symfun.sigma_elem(lam, k),
                                                          rel=1e-9, abs=1e-9)


# --------------------------------------------------------------- sigma_minor

def test_sigma_minor_examples():
    assert symfun.sigma_minor(np.eye(3), 2) == pytest.approx(3.0)
    assert symfun.sigma_minor(np.diag([1.0, 2.0, 3.0]), 3) == pytest.approx(6.0)
    assert symfun.sigma_minor(np.eye(2), 0) == 1.0


def test_sigma_minor_rejects_nonfinite():
    A = np.eye(3)
    A[0, 1] = A[1, 0] = np.nan
    with pytest.raises(DomainError):
        symfun.sigma_minor(A, 2)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_dual_route_random(n, rng):
    for _ in range(200):
        A = random_symmetric(rng, n, scale=2.0)
        for k in range(n + 1):
            m = symfun.sigma_minor(A, k)
            e = symfun.sigma_elem(np.linalg.eigvalsh(A), k)
            assert abs(m - e) <= 1e-10 * max(1.0, abs(e))


@given(hnp.arrays(float, (3, 3), elements=st.floats(-3, 3)), st.integers(0, 3))
def test_dual_route_property(M, k):
    A = 0.5 * (M + M.T)
    e = symfun.sigma_elem(np.linalg.eigvalsh(A), k)
    assert abs(symfun.sigma_minor(A, k) - e) <= 1e-10 * max(1.0, abs(e))


def test_sigma_minor_orthogonal_invariance(rng):
    A = random_symmetric(rng, 4)
    Q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    for k in range(5):
        assert symfun.sigma_minor(Q @ A @ Q.T, k) == pytest.approx(symfun.sigma_minor(A, k), abs=1e-12)


def test_eigenvalues_symmetrize_and_validate():
    A = np.array([[2.0, 1.0], [1.0 + 1e-14, 2.0]])
    assert symfun.eigenvalues(A) == pytest.approx([1.0, 3.0])
    with pytest.raises(DomainError):
        symfun.eigenvalues(np.array([[1.0, 0.0], [1.0, 1.0]]))


# -------------------------------------------------------------- sigma_partial

def test_sigma_partial_examples():
    assert symfun.sigma_partial((1, 1, 1), 2) == pytest.approx((2, 2, 2))
    assert symfun.sigma_partial((1, 2, 3), 3) == pytest.approx((6, 3, 2))


def test_sigma_partial_positive_on_cone(rng):
    for n, k in [(2, 2), (3, 2), (3, 3), (4, 2), (4, 3)]:
        for _ in range(50):
            lam = np.linalg.eigvalsh(random_admissible(rng, n, k))
            assert min(symfun.sigma_partial(lam, k)) > 0.0


def test_sigma_partial_is_derivative(rng):
    lam = rng.standard_normal(4)
    d = 1e-6
    for i, g in enumerate(symfun.sigma_partial(lam, 3)):
        e = np.zeros(4)
        e[i] = d
        fd = (symfun.sigma_elem(lam + e, 3) - symfun.sigma_elem(lam - e, 3)) / (2 * d)
        assert g == pytest.approx(fd, rel=1e-7, abs=1e-9)


# -------------------------------------------------------------------- in_gamma

def test_in_gamma_examples():
    assert symfun.in_gamma((1, 1, 1), 3).member
    v = symfun.in_gamma((-1, 5, 5), 2)
    assert v.member and v.first_failing_j is None
    assert v.sigma_values == pytest.approx((9.0, 15.0))
    v = symfun.in_gamma((-1, 5, 5), 3)
    assert not v and v.first_failing_j == 3
    assert v.sigma_values[2] == pytest.approx(-25.0)


def test_in_gamma_is_strict():
    v = symfun.in_gamma((0.0, 1.0), 2)
    assert not v.member and v.first_failing_j == 2


@given(hnp.arrays(float, 4, elements=st.floats(-3, 3)), st.integers(1, 4))
def test_cone_nesting(lam, k):
    v = symfun.in_gamma(lam, k)
    if v.member:
        assert all(symfun.in_gamma(lam, j).member for j in range(1, k))
    else:
        j = v.first_failing_j
        assert not v.sigma_values[j - 1] > 0
        assert all(s > 0 for s in v.sigma_values[: j - 1])


def test_batch_cone_member_agrees(rng):
    lam = rng.standard_normal((200, 3)) + 0.5
    member, first = symfun.batch_cone_member(lam, 3)
    for row, m, f in zip(lam, member, first):
        v = symfun.in_gamma(row, 3)
        assert m == v.member
        assert f == (0 if v.member else v.first_failing_j)


# ------------------------------------------------------------------- operator

def test_hessian_op_examples():
    assert symfun.hessian_op(np.eye(3), 2) == pytest.approx(math.sqrt(3))
    for t in (0.5, 2.0, 7.0):
        assert symfun.hessian_op(t * np.eye(4), 3) == pytest.approx(t * math.comb(4, 3) ** (1 / 3))


def test_hessian_op_rejects_negative():
    with pytest.raises(AdmissibilityError) as info:
        symfun.hessian_op(np.diag([-1.0, 5.0, 5.0]), 3)
    assert info.value.verdict.first_failing_j == 3


def test_hessian_op_power_round_trip(rng):
    for _ in range(20):
        A = random_admissible(rng, 3, 2)
        assert symfun.hessian_op(A, 2) ** 2 == pytest.approx(symfun.sigma_minor(A, 2), rel=1e-12)


def test_hessian_op_homogeneous(rng):
    A = random_admissible(rng, 4, 3)
    for t in (0.1, 3.0):
        assert symfun.hessian_op(t * A, 3) == pytest.approx(t * symfun.hessian_op(A, 3), rel=1e-12)


def test_hessian_op_grad_identity():
    G = symfun.hessian_op_grad(np.eye(3), 2)
    assert G == pytest.approx(np.eye(3) / math.sqrt(3), abs=1e-15)


def test_hessian_op_grad_requires_positive_sigma():
    with pytest.raises(AdmissibilityError):
        symfun.hessian_op_grad(np.diag([1.0, 0.0]), 2)


@pytest.mark.parametrize("n,k", [(2, 2), (3, 2), (3, 3), (4, 2), (4, 3), (4, 4)])
def test_hessian_op_grad_properties(n, k, rng):
    for _ in range(20):
        A = random_admissible(rng, n, k)
        Fij = symfun.hessian_op_grad(A, k)
        assert np.allclose(Fij, Fij.T, atol=1e-14)
        # Euler identity of a 1-homogeneous function
        assert np.sum(Fij * A) == pytest.approx(symfun.hessian_op(A, k), rel=1e-10)
        assert np.min(np.linalg.eigvalsh(Fij)) > 0.0
        d = 1e-5
        for i, j in itertools.combinations_with_replacement(range(n), 2):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            fd = (symfun.hessian_op(A + d * E, k) - symfun.hessian_op(A - d * E, k)) / (2 * d)
            exact = Fij[i, i] if i == j else 2 * Fij[i, j]
            assert fd == pytest.approx(exact, rel=1e-6, abs=1e-9)


def test_batch_operator_matches_pointwise(rng):
    H = np.stack([random_admissible(rng, 3, 2) for _ in range(10)] + [np.diag([-1.0, -1.0, -1.0])])
    sig, F, Fij = symfun.batch_operator(H, 2)
    for m in range(10):
        assert F[m] == pytest.approx(symfun.hessian_op(H[m], 2), rel=1e-13)
        assert Fij[m] == pytest.approx(symfun.hessian_op_grad(H[m], 2), rel=1e-12)
    # sigma_2 of -I is positive but the matrix is outside the cone; F is still defined
    assert sig[-1] == pytest.approx(3.0)


def test_batch_operator_nan_outside_closure():
    sig, F, Fij = symfun.batch_operator(np.diag([-1.0, 1.0])[None], 2)
    assert sig[0] == pytest.approx(-1.0)
    assert np.isnan(F[0]) and np.all(np.isnan(Fij[0]))


# ------------------------------------------------------------------- G matrix

@pytest.mark.parametrize("n,k", [(2, 2), (3, 2), (4, 3)])
def test_g_matrix_identity(n, k):
    assert symfun.normalized_g_matrix(np.eye(n), k) == pytest.approx(np.eye(n) / n, abs=1e-15)


def test_g_matrix_diag_example():
    G = symfun.normalized_g_matrix(np.diag([2.0, 1.0]), 2)
    assert G == pytest.approx(np.diag([1 / 3, 2 / 3]), abs=1e-15)


def test_g_matrix_unit_trace(rng):
    for _ in range(50):
        G = symfun.normalized_g_matrix(random_admissible(rng, 4, 2), 2)
        assert abs(np.trace(G) - 1.0) <= 1e-14
        assert np.min(np.linalg.eigvalsh(G)) > 0.0


def test_g_matrix_scale_invariant(rng):
    # F^ij is 0-homogeneous, so tiny admissible matrices stay far from degenerate
    A = random_admissible(rng, 3, 2)
    assert symfun.normalized_g_matrix(1e-150 * A, 2) == pytest.approx(symfun.normalized_g_matrix(A, 2), rel=1e-10)


# --------------------------------------------------------- structural oracles

def test_trace_identity_examples():
    assert symfun.trace_identity_residual(np.eye(4), 2) == pytest.approx(0.0, abs=1e-15)
    assert symfun.trace_identity_residual(np.diag([1.0, 2.0, 3.0]), 2) == pytest.approx(0.0, abs=1e-15)
    assert np.diag(symfun.sigma_grad_matrix(np.diag([1.0, 2.0, 3.0]), 2)) == pytest.approx([5, 4, 3])


@given(hnp.arrays(float, (4, 4), elements=st.floats(-10, 10)), st.integers(1, 4))
def test_trace_identity_property(M, k):
    assert symfun.trace_identity_residual(0.5 * (M + M.T), k) <= 1e-9


def test_maclaurin_examples():
    assert symfun.maclaurin_gap(np.eye(3), 2) == pytest.approx(3 ** -0.5)
    assert symfun.maclaurin_bound(3, 2) == pytest.approx(3 ** -0.5)
    a = symfun.maclaurin_gap(0.2 * np.eye(3), 2)
    b = symfun.maclaurin_gap(9.0 * np.eye(3), 2)
    assert a == pytest.approx(b, rel=1e-14)


def test_maclaurin_inequality_sweep(rng):
    bound = symfun.maclaurin_bound(3, 2)
    worst = max(symfun.maclaurin_gap(random_admissible(rng, 3, 2, margin=1e-3), 2) for _ in range(1000))
    assert worst <= bound + 1e-12


def test_maclaurin_requires_cone():
    with pytest.raises(AdmissibilityError):
        symfun.maclaurin_gap(np.diag([-1.0, -1.0, 0.5]), 2)


def test_newton_lower_gap_examples(rng):
    A = random_admissible(rng, 3, 2)
    assert symfun.newton_lower_gap(A, 2) == pytest.approx(1.0, rel=1e-14)
    assert symfun.newton_lower_gap(np.eye(4), 3) == pytest.approx(1.5)
    B = random_admissible(rng, 4, 3)
    assert symfun.newton_lower_gap(5.0 * B, 3) == pytest.approx(symfun.newton_lower_gap(B, 3), rel=1e-12)


def test_newton_lower_gap_positive_inf(rng):
    vals = [symfun.newton_lower_gap(random_admissible(rng, 4, 3, margin=1e-3), 3) for _ in range(300)]
    assert min(vals) > 0.0


def test_concavity_witness_examples(rng):
    A = random_admissible(rng, 3, 2)
    B = random_admissible(rng, 3, 2)
    assert symfun.concavity_witness(A, A, 0.3, 2) == pytest.approx(0.0, abs=1e-14)
    assert symfun.concavity_witness(A, B, 0.0, 2) == pytest.approx(0.0, abs=1e-14)
    with pytest.raises(DomainError):
        symfun.concavity_witness(A, B, 1.5, 2)
    with pytest.raises(AdmissibilityError):
        symfun.concavity_witness(A, -np.eye(3), 0.5, 2)


def test_concavity_sweep(rng):
    for _ in range(500):
        A = random_admissible(rng, 3, 2)
        B = random_admissible(rng, 3, 2)
        assert symfun.concavity_witness(A, B, 0.5, 2) >= -1e-12


def test_as_symmetric_rejects_nonfinite():
    with pytest.raises(DomainError):
        symfun.as_symmetric(np.array([[1.0, np.inf], [np.inf, 1.0]]))
