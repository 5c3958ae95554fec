import numpy as np
import pytest

from spinkubo.errors import NonRealValue, OddnessViolated, TailNotControlled, WindowTooSmall
from spinkubo.kernel_algebra import (
    OffsetPeriodicKernel,
    PeriodicKernel,
    box_sites,
    commutator_position,
    commutator_position_spin,
    commutator_switch,
    diagonal_on_window,
    periodic_on_window,
)
from spinkubo.lattice_model import SwitchFunction
from spinkubo.spectral import projection_kernel, solve_fibers
from spinkubo.trace_functionals import (
    Estimate,
    StripeDensity,
    TraceSeries,
    classify,
    cyclicity_residual,
    jpv_trace,
    odd_sizes,
    pv_trace,
    square_partial_trace,
    tuv_offset,
    tuv_partial,
    tuv_periodic,
    verify_localization_identities,
)

from conftest import dense_localization_lhs, km

SPIN = np.diag([0.5, -0.5, 0.5, -0.5]).astype(complex)


def test_tuv_identity_and_position_commutator(P_rashba_small):
    assert tuv_periodic(PeriodicKernel.identity(4)) == 4
    assert abs(tuv_periodic(commutator_position(P_rashba_small, 2))) <= 1e-13


@pytest.mark.parametrize("L", [1, 3, 7, 11])
def test_square_partial_trace_of_periodic_kernel_is_exact(P_rashba_small, L):
    assert tuv_partial(P_rashba_small, L) == pytest.approx(tuv_periodic(P_rashba_small), abs=1e-12)


@pytest.mark.parametrize("L", [5, 9, 13])
def test_offset_kernel_odd_part_cancels_per_square(L):
    eye = PeriodicKernel.identity(4)
    A = OffsetPeriodicKernel(eye, eye, lambda m1, m2: np.asarray(m1, float), odd_axis=1)
    assert tuv_offset(A) == 4
    assert tuv_partial(A, L) == pytest.approx(4.0, abs=1e-12)


def test_offset_with_zero_correction_equals_periodic(P_rashba_small):
    zero = PeriodicKernel.zeros(0, 4)
    A = OffsetPeriodicKernel(P_rashba_small, zero, lambda m1, m2: np.asarray(m2, float), odd_axis=2)
    assert tuv_offset(A) == tuv_periodic(P_rashba_small)


def test_tuv_offset_rejects_even_function():
    eye = PeriodicKernel.identity(4)
    A = OffsetPeriodicKernel(eye, eye, lambda m1, m2: np.abs(m1) * 1.0, odd_axis=1)
    with pytest.raises(OddnessViolated):
        tuv_offset(A)


def test_sigma_offset_kernel_square_traces(P_rashba_small):
    # [P, X_1 S] has an odd offset part; every centred square sees only the periodic part
    Y = commutator_position_spin(P_rashba_small, 1, SPIN)
    for L in (3, 7, 11):
        assert tuv_partial(Y, L) == pytest.approx(tuv_offset(Y), abs=1e-12)


def test_pv_trace_of_finite_diagonal():
    sites = box_sites(-7, 7, -7, 7)
    vals = np.zeros(len(sites))
    for (a, b), v in [((0, 0), 1.0), ((2, -1), 0.75), ((-3, 3), 1.75)]:
        vals[np.flatnonzero((sites[:, 0] == a) & (sites[:, 1] == b))] = v
    D = diagonal_on_window(vals, sites, 4, np.diag([1.0, 0, 0, 0]))
    s = pv_trace(D, 15)
    assert s.verdict == "converged"
    assert s.limit == pytest.approx(3.5, abs=1e-15)
    j = jpv_trace(D, 1, 15, transverse_cutoff=7)
    assert j.verdict == "converged" and j.limit == pytest.approx(3.5, abs=1e-15)
    with pytest.raises(WindowTooSmall):
        pv_trace(D, 17)


def test_pv_trace_of_identity_diverges():
    s = pv_trace(PeriodicKernel.identity(4), 21)
    assert s.verdict == "diverging"
    np.testing.assert_allclose(s.values.real, 4 * s.L ** 2)


def test_line_diagonal_diverges_linearly_under_jpv():
    c = 2.5
    line = lambda m1, m2: np.where(m2 == 0, c, 0.0)
    s = jpv_trace(line, 1, 21, transverse_cutoff=4)
    np.testing.assert_allclose(s.values.real, c * s.L)
    assert s.verdict == "diverging"
    # no decay declared along axis 1 and the diagonal is nonzero at the cutoff
    with pytest.raises(TailNotControlled):
        jpv_trace(line, 2, 21, transverse_cutoff=4)


def test_trace_class_product_is_converged(P_rashba_small):
    P = P_rashba_small.resized(5)
    sites = box_sites(-11, 11, -11, 11)
    C1 = commutator_switch(P, SwitchFunction.sharp(1), sites)
    C2 = commutator_switch(P, SwitchFunction.sharp(2), sites)
    W = C1 @ diagonal_on_window(np.ones(len(sites)), sites, 4, SPIN) @ C2 @ periodic_on_window(P, sites)
    full = pv_trace(W, 23)
    half = pv_trace(W, 11)
    assert full.verdict == "converged"
    assert full.limit == pytest.approx(np.trace(W.matrix), abs=1e-12)
    assert abs(half.limit - full.limit) <= 1e-9 + full.tail_bounds[-1]
    stripe = jpv_trace(W, 1, 23, transverse_cutoff=11)
    assert abs(stripe.limit - full.limit) <= 1e-12


def test_stripe_density_input():
    cols = np.arange(-6, 7)
    dens = np.where(np.abs(cols) <= 1, 0.5, 0.0)
    s = jpv_trace(StripeDensity(1, cols, dens), 1, 13)
    assert s.limit == pytest.approx(1.5)
    assert s.verdict == "converged"
    with pytest.raises(WindowTooSmall):
        jpv_trace(StripeDensity(1, cols, dens), 1, 15)


def test_classify_rules():
    assert classify(np.array([1.0, 1.0, 1.0, 1.0]), np.zeros(4)) == "converged"
    assert classify(np.array([0.0, 1.0, 3.0, 6.0]), np.zeros(4)) == "diverging"
    assert classify(np.array([0.0, 1.0, 0.0, 1.0]), np.zeros(4)) == "oscillating"
    with pytest.raises(ValueError):
        TraceSeries("volume", [1, 4], [0, 0], [0, 0])
    with pytest.raises(ValueError):
        odd_sizes(10)


def test_series_csv_round_trip():
    s = pv_trace(PeriodicKernel.identity(4), 5)
    lines = s.to_csv("tr").strip().splitlines()
    assert lines[0] == "L,tr_re,tr_im,tail_bound"
    assert lines[1].startswith("1,4.0,0.0")


def test_estimate_real_guard():
    assert Estimate(1.0 + 1e-12j).real() == 1.0
    with pytest.raises(NonRealValue):
        Estimate(1.0 + 1e-6j).real()


def test_cyclicity(P_rashba_small):
    P = P_rashba_small
    assert cyclicity_residual(P, P).value == 0
    for B in (commutator_position(P, 2), P.left_internal(SPIN)):
        est = cyclicity_residual(P, B)
        assert est.value <= est.bound


def test_localization_identities_atomic_limit():
    P = projection_kernel(solve_fibers(km((0.0, 1.0, 0.0, 0.0)), 12), 5)
    res = verify_localization_identities(P, SwitchFunction.sharp(1), SwitchFunction.sharp(2))
    for c in res.checks:
        assert c.lhs == 0 and c.rhs == 0 and c.residual == 0


def test_localization_identities_with_rashba(P_rashba_small):
    P = P_rashba_small.resized(5)
    res = verify_localization_identities(P, SwitchFunction.sharp(1), SwitchFunction.sharp(2))
    assert res.ok
    assert abs(res.loc12.lhs) > 1e-4
    shifted = verify_localization_identities(P, SwitchFunction.sharp(1, 3), SwitchFunction.sharp(2, 3))
    for a, b in zip(res.checks, shifted.checks):
        assert a.rhs == pytest.approx(b.rhs, abs=1e-13)
        assert abs(a.lhs - b.lhs) <= a.bound + b.bound + 1e-12


def test_localization_identities_on_finite_window(P_rashba_small):
    P = P_rashba_small.resized(5)
    res = verify_localization_identities(P, SwitchFunction.sharp(1), SwitchFunction.sharp(2),
                                         window=((-4, 4), (-4, 4)))
    assert res.ok
    assert max(c.bound for c in res.checks) > 0


@pytest.mark.parametrize("shift", [0, 2])
def test_localization_identities_match_dense_traces(P_rashba_small, shift):
    P = P_rashba_small.resized(2)
    lam1, lam2 = SwitchFunction.sharp(1, shift), SwitchFunction.sharp(2)
    res = verify_localization_identities(P, lam1, lam2)
    for lhs, check in zip(dense_localization_lhs(P, lam1, lam2), res.checks):
        assert abs(lhs - check.rhs) <= 1e-13
        assert abs(check.rhs) > 1e-8
