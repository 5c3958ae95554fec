import numpy as np
import pytest

from spinkubo.errors import OddnessViolated
from spinkubo.kernel_algebra import (
    OffsetPeriodicKernel,
    PeriodicKernel,
    box_diagonal_traces,
    box_matrix,
    box_sites,
    commutator_internal,
    commutator_position,
    commutator_position_spin,
    compose_chain,
    compose_periodic,
    diagonal_on_window,
    holmgren_norm,
    line_kernels,
    offset_combine,
    offset_left_multiply,
    offset_right_multiply,
    periodic_on_window,
    position_on_window,
    tail_bound,
)

SPIN = np.diag([0.5, -0.5, 0.5, -0.5]).astype(complex)


def random_kernel(rng, R, d=4):
    b = rng.normal(size=(2 * R + 1, 2 * R + 1, d, d)) + 1j * rng.normal(size=(2 * R + 1, 2 * R + 1, d, d))
    return PeriodicKernel(b)


def window(half):
    return box_sites(-half, half, -half, half)


def interior_pairs(sites, margin):
    keep = np.all(np.abs(sites) <= margin, axis=1)
    return [tuple(s) for s in sites[keep]]


def test_compose_matches_window_product(rng):
    A, B = random_kernel(rng, 2), random_kernel(rng, 1)
    AB = compose_periodic(A, B)
    sites = window(6)
    W = periodic_on_window(A, sites) @ periodic_on_window(B, sites)
    for n in [(0, 0), (1, -2), (3, 3), (-2, 1)]:
        np.testing.assert_allclose(W.block((0, 0), n), AB.block(n), atol=1e-12)


def test_compose_matches_fiber_product(rng):
    A, B = random_kernel(rng, 2), random_kernel(rng, 3)
    M = 13
    np.testing.assert_allclose(compose_periodic(A, B).grid_fibers(M),
                               A.grid_fibers(M) @ B.grid_fibers(M), atol=1e-10)


def test_truncated_compose_bound_covers_dropped_mass(rng):
    A, B = random_kernel(rng, 3), random_kernel(rng, 3)
    full = compose_periodic(A, B)
    cut = compose_periodic(A, B, 2)
    dropped = sum(np.linalg.norm(b, 2) for n, b in full.items() if max(abs(n[0]), abs(n[1])) > 2)
    assert cut.bound >= dropped * (1 - 1e-12)
    chain = compose_chain([A, B, A], 3, 2)
    assert chain.R == 3


def test_adjoint_and_fourier(rng):
    A = random_kernel(rng, 2)
    k = (0.4, -1.3)
    np.testing.assert_allclose(A.adjoint().fourier(*k), A.fourier(*k).conj().T, atol=1e-12)


@pytest.mark.parametrize("j", [1, 2])
def test_position_commutator_is_k_derivative(rng, j):
    A = random_kernel(rng, 2)
    k, h = np.array([0.7, 0.2]), 1e-6
    e = np.eye(2)[j - 1] * h
    fd = (A.fourier(*(k + e)) - A.fourier(*(k - e))) / (2 * h)
    np.testing.assert_allclose(commutator_position(A, j).fourier(*k), -1j * fd, atol=1e-7)


@pytest.mark.parametrize("j", [1, 2])
def test_position_commutator_matches_window(rng, j):
    A = random_kernel(rng, 2)
    sites = window(5)
    Aw, Xw = periodic_on_window(A, sites), position_on_window(sites, j, 4)
    C = Aw @ Xw - Xw @ Aw
    K = commutator_position(A, j)
    for m in [(0, 0), (2, -1), (-3, 2)]:
        for n in [(m[0] + 1, m[1] - 2), m, (m[0] - 2, m[1] + 2)]:
            d = (n[0] - m[0], n[1] - m[1])
            np.testing.assert_allclose(C.block(m, n), K.block(d), atol=1e-12)


@pytest.mark.parametrize("j", [1, 2])
def test_position_spin_commutator_offset_sign(rng, j):
    # row m of [A, X_j S] carries +m_j [A, S]_{0, n-m}
    A = random_kernel(rng, 2)
    sites = window(5)
    Aw = periodic_on_window(A, sites)
    XS = diagonal_on_window(sites[:, j - 1].astype(float), sites, 4, SPIN)
    C = Aw @ XS - XS @ Aw
    Y = commutator_position_spin(A, j, SPIN)
    assert Y.linear and Y.odd_axis == j
    for m in [(0, 0), (3, -1), (-2, 3), (1, 1)]:
        for n in [(m[0] + 2, m[1]), m, (m[0] - 1, m[1] + 1)]:
            np.testing.assert_allclose(C.block(m, n), Y.block(m, n), atol=1e-12)
    Y.check_oddness()


def test_offset_products_match_window(rng):
    A, B = random_kernel(rng, 1), random_kernel(rng, 1)
    Y = commutator_position_spin(A, 1, SPIN)
    sites = window(7)
    Aw, Bw = periodic_on_window(A, sites), periodic_on_window(B, sites)
    XS = diagonal_on_window(sites[:, 0].astype(float), sites, 4, SPIN)
    Yw = Aw @ XS - XS @ Aw
    left, right = offset_left_multiply(B, Y), offset_right_multiply(Y, B)
    both = offset_combine(left, right, cz=-1.0)
    BY, YB = Bw @ Yw, Yw @ Bw
    for m in interior_pairs(sites, 3):
        for n in [m, (m[0] + 1, m[1] - 1), (m[0] - 2, m[1])]:
            np.testing.assert_allclose(BY.block(m, n), left.block(m, n), atol=1e-11)
            np.testing.assert_allclose(YB.block(m, n), right.block(m, n), atol=1e-11)
            np.testing.assert_allclose(BY.block(m, n) - YB.block(m, n), both.block(m, n), atol=1e-11)


def test_oddness_check_rejects_shifted_offset(rng):
    A = random_kernel(rng, 1)
    bad = OffsetPeriodicKernel(A, A, lambda m1, m2: m1 + 1.0, odd_axis=1)
    with pytest.raises(OddnessViolated):
        bad.check_oddness()
    good = OffsetPeriodicKernel(A, A, lambda m1, m2: m1 * m2 ** 2 * 1.0, odd_axis=1)
    good.check_oddness()


def test_internal_commutator(rng):
    A = random_kernel(rng, 1)
    C = commutator_internal(A, SPIN)
    np.testing.assert_allclose(C.block((1, 0)), A.block((1, 0)) @ SPIN - SPIN @ A.block((1, 0)))


def test_holmgren_norm(rng):
    A = random_kernel(rng, 1)
    ref = sum(np.linalg.norm(A.blocks[i, j], 2) for i in range(3) for j in range(3))
    assert holmgren_norm(A) == pytest.approx(ref)


@pytest.mark.parametrize("zeta,radius", [(0.5, 3), (1.3, 5), (2.0, 10)])
def test_tail_bound_matches_brute_sum(zeta, radius):
    r = np.arange(-400, 401)
    n1, n2 = np.meshgrid(r, r, indexing="ij")
    s = np.abs(n1) + np.abs(n2)
    outside = np.maximum(np.abs(n1), np.abs(n2)) > radius
    brute = np.exp(-s[outside] / zeta).sum()
    assert tail_bound(1.0, zeta, radius) == pytest.approx(brute, rel=1e-10)
    brute1 = (s[outside] * np.exp(-s[outside] / zeta)).sum()
    assert tail_bound(1.0, zeta, radius, moment=1) >= brute1


def test_line_kernels_and_box(rng):
    A = random_kernel(rng, 2)
    M2 = 7
    L = line_kernels(A, M2)
    assert L.shape == (M2, 5, 4, 4)
    k2 = 2 * np.pi * 3 / M2
    ref = sum(np.exp(1j * k2 * n2) * A.block((1, n2)) for n2 in range(-2, 3))
    np.testing.assert_allclose(L[3, 1 + 2], ref, atol=1e-12)
    cols = np.arange(-4, 5)
    mat = box_matrix(L[3], cols)
    np.testing.assert_allclose(mat[4 * 4:5 * 4, 5 * 4:6 * 4], ref, atol=1e-12)
    tr = box_diagonal_traces(mat, 4)
    np.testing.assert_allclose(tr, np.trace(L[3, 2]), atol=1e-12)
