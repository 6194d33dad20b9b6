import io
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hessianlab import disc, symfun
from hessianlab.errors import AssemblyError, DomainError, ResolutionError


@pytest.fixture(scope="module")
def ball2():
    return disc.build_domain(disc.Ball(1.0, 2), 1 / 16)


@pytest.fixture(scope="module")
def ball3():
    return disc.build_domain(disc.Ball(1.0, 3), 1 / 8)


def quad(x, C):
    return np.einsum("mi,ij,mj->m", x, C, x)


# ----------------------------------------------------------------- build_domain

def test_box_enumeration():
    dom = disc.build_domain(disc.Box((1.0, 1.0)), 0.5)
    assert dom.n_interior == 9
    assert dom.n_boundary == 16
    assert sorted(map(tuple, dom.interior_index)) == [(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)]
    assert np.allclose(np.max(np.abs(dom.boundary_points), axis=1), 1.0)


def test_ball_area_limit():
    dom = disc.build_domain(disc.Ball(1.0, 2), 1 / 64)
    assert dom.n_interior * dom.h**2 == pytest.approx(math.pi, rel=0.02)


def test_resolution_guard():
    with pytest.raises(ResolutionError):
        disc.build_domain(disc.Box((1.0, 1.0)), 3.0)
    with pytest.raises(ResolutionError):
        disc.build_domain(disc.Ball(1.0, 2), 0.0)


def test_distance_invariants(ball2, ball3):
    for dom in (ball2, ball3):
        d = dom.distance
        assert np.all(d[: dom.n_interior] > 0)
        assert np.all(d[dom.n_interior:] == 0)
        exact = 1.0 - np.linalg.norm(dom.points, axis=1)
        assert np.max(np.abs(d - exact)) <= dom.h
        assert np.allclose(np.linalg.norm(dom.boundary_points, axis=1), 1.0, atol=1e-12)


def test_every_stencil_resolved(ball3):
    for S in ball3.stencils:
        counts = np.diff(S.indptr)
        assert np.all(counts == 3)
        assert np.all(S.indices < ball3.n_nodes)


# ------------------------------------------------------------------- fd_hessian

@pytest.mark.parametrize("fixture", ["ball2", "ball3"])
def test_exact_on_quadratics(fixture, request, rng):
    dom = request.getfixturevalue(fixture)
    n = dom.n
    C = rng.standard_normal((n, n))
    C = 0.5 * (C + C.T)
    b = rng.standard_normal(n)
    u = dom.sample(lambda x: quad(x, C) + x @ b + 0.3)
    H = disc.fd_hessian(u).matrices
    assert np.max(np.abs(H - 2 * C)) <= 1e-12 * max(1.0, np.max(np.abs(C))) * 100
    assert np.array_equal(H, np.swapaxes(H, 1, 2))


def test_cubic_taylor():
    dom = disc.build_domain(disc.Box((1.5, 1.5)), 0.1)
    u = dom.sample(lambda x: x[:, 0] ** 3)
    H = disc.fd_hessian(u).matrices
    node = int(np.argmin(np.linalg.norm(dom.interior_points - [1.0, 0.0], axis=1)))
    assert np.allclose(dom.interior_points[node], [1.0, 0.0])
    assert H[node, 0, 0] == pytest.approx(6.0, rel=0.01)


def test_constant_zero(ball2):
    # cut-cell weights do not sum to zero bit-exactly; uniform stencils do
    H = disc.fd_hessian(ball2.sample(lambda x: np.full(len(x), 4.2))).matrices
    assert np.max(np.abs(H)) < 1e-9
    box = disc.build_domain(disc.Box((1.0, 1.0)), 1 / 8)
    assert np.all(disc.fd_hessian(box.sample(lambda x: np.full(len(x), 4.2))).matrices == 0.0)


def test_missing_value_raises(ball2):
    vals = np.zeros(ball2.n_nodes)
    vals[5] = np.nan
    with pytest.raises(AssemblyError, match="node"):
        disc.fd_hessian(ball2.field(vals))
    with pytest.raises(AssemblyError):
        disc.fd_hessian(ball2.field(np.zeros(ball2.n_interior)))


def test_linearity(ball2, rng):
    a = ball2.field(rng.standard_normal(ball2.n_nodes))
    b = ball2.field(rng.standard_normal(ball2.n_nodes))
    lhs = disc.fd_hessian(2.0 * a + b).matrices
    rhs = 2.0 * disc.fd_hessian(a).matrices + disc.fd_hessian(b).matrices
    assert np.allclose(lhs, rhs, atol=1e-9)


def test_second_order_on_quartic():
    def exact(x):
        H = np.zeros((len(x), 2, 2))
        H[:, 0, 0] = 12 * x[:, 0] ** 2 + 2 * x[:, 1] ** 2
        H[:, 1, 1] = 2 * x[:, 0] ** 2
        H[:, 0, 1] = H[:, 1, 0] = 4 * x[:, 0] * x[:, 1]
        return H

    errs = []
    for h in (1 / 8, 1 / 16, 1 / 32):
        dom = disc.build_domain(disc.Box((1.0, 1.0)), h)
        u = dom.sample(lambda x: x[:, 0] ** 4 + x[:, 0] ** 2 * x[:, 1] ** 2)
        errs.append(np.max(np.abs(disc.fd_hessian(u).matrices - exact(dom.interior_points))))
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(3.0 <= r <= 5.0 for r in ratios), ratios


# -------------------------------------------------------------- discrete_sigma

def test_discrete_sigma_identity(ball3):
    s = disc.discrete_sigma(ball3.sample(lambda x: 0.5 * np.sum(x * x, axis=1)), 2)
    assert np.allclose(s.values, 3.0, atol=1e-10)


def test_discrete_sigma_radial():
    dom = disc.build_domain(disc.Ball(1.0, 2), 1 / 32)
    u = dom.sample(lambda x: np.linalg.norm(x, axis=1) ** 3 / (3 * math.sqrt(2)))
    s = disc.discrete_sigma(u, 2).values
    r = np.linalg.norm(dom.interior_points, axis=1)
    away = (r > 0.25) & (dom.distance[: dom.n_interior] > 2 * dom.h)
    assert np.max(np.abs(s[away] - r[away] ** 2)) < 0.01


def test_discrete_sigma_concave_flagged(ball2):
    u = ball2.sample(lambda x: -0.5 * np.sum(x * x, axis=1))
    assert np.allclose(disc.discrete_sigma(u, 2).values, 1.0, atol=1e-10)
    rep = disc.admissibility_mask(u, 2)
    assert not rep.admissible and not np.any(rep.mask)


def test_affine_invariance(ball2, rng):
    u = ball2.sample(lambda x: np.exp(np.sum(x * x, axis=1)))
    w = u + ball2.sample(lambda x: x @ np.array([3.0, -1.0]) + 7.0)
    assert np.allclose(disc.discrete_sigma(w, 2).values, disc.discrete_sigma(u, 2).values,
                       rtol=1e-9, atol=1e-9)


@given(st.floats(0.1, 10.0), st.integers(1, 3))
def test_k_homogeneity(t, k):
    dom = disc.build_domain(disc.Ball(1.0, 3), 1 / 4)
    u = dom.sample(lambda x: np.exp(0.5 * np.sum(x * x, axis=1)))
    a = disc.discrete_sigma(u * t, k).values
    b = t**k * disc.discrete_sigma(u, k).values
    assert np.allclose(a, b, rtol=1e-12)


# ------------------------------------------------------------- admissibility

def test_admissibility_examples(ball3, ball2):
    convex = ball3.sample(lambda x: np.sum(x * x, axis=1))
    assert all(disc.admissibility_mask(convex, k).admissible for k in (1, 2, 3))
    saddle = ball2.sample(lambda x: 0.5 * x[:, 0] ** 2 - 0.5 * x[:, 1] ** 2)
    r2 = disc.admissibility_mask(saddle, 2)
    assert not np.any(r2.mask)
    assert r2.worst_verdict.sigma_values[1] < 0
    # sigma_1 = 0 exactly needs exact arithmetic: dyadic box grid
    box = disc.build_domain(disc.Box((1.0, 1.0)), 1 / 8)
    flat = box.sample(lambda x: 0.5 * x[:, 0] ** 2 - 0.5 * x[:, 1] ** 2)
    r1 = disc.admissibility_mask(flat, 1)
    assert not np.any(r1.mask)
    assert r1.worst_verdict.sigma_values == (0.0,)


def test_margin_monotone(ball2):
    u = ball2.sample(lambda x: np.sum(x * x, axis=1) + x[:, 0] ** 4)
    prev = None
    for m in (0.0, 1.0, 2.0, 2.5, 4.0):
        mask = disc.admissibility_mask(u, 2, m).mask
        if prev is not None:
            assert not np.any(mask & ~prev)
        prev = mask
    with pytest.raises(DomainError):
        disc.admissibility_mask(u, 2, -1.0)


# ------------------------------------------------------------------- norms

def test_sup_second_examples(ball2):
    u = ball2.sample(lambda x: 0.5 * np.sum(x * x, axis=1))
    assert disc.sup_second(u) == pytest.approx(1.0, abs=1e-10)
    w = disc.weighted_interior_sup(u)
    assert w == pytest.approx(np.max(1 - np.linalg.norm(ball2.interior_points, axis=1)), abs=1e-10)
    assert w >= 1 - ball2.h


def test_sup_second_radial_converges():
    vals = []
    for h in (1 / 16, 1 / 32, 1 / 64):
        dom = disc.build_domain(disc.Ball(1.0, 2), h)
        u = dom.sample(lambda x: np.linalg.norm(x, axis=1) ** 3 / (3 * math.sqrt(2)))
        vals.append(disc.sup_second(u))
    errs = [abs(v - math.sqrt(2)) for v in vals]
    assert errs[2] < errs[0] and errs[2] < 0.02


# -------------------------------------------------------------------- dump

def test_dump_round_trip(ball2):
    u = ball2.sample(lambda x: np.sin(x[:, 0]) + x[:, 1] ** 2)
    buf = io.StringIO()
    disc.write_dump(u, buf)
    text = buf.getvalue()
    assert text.splitlines()[0] == ",".join(disc.dump_header(2))
    back = disc.read_dump(text, ball2)
    assert np.array_equal(back.values, u.values)
    other = disc.build_domain(disc.Ball(1.0, 2), 1 / 8)
    with pytest.raises(DomainError):
        disc.read_dump(text, other)
