import numpy as np
import pytest

from spinkubo.errors import SingularPlaquette
from spinkubo.lattice_model import HoppingKernel, InternalBasis, SIGMA_X, SIGMA_Y, SIGMA_Z, SwitchFunction
from spinkubo.spectral import projection_kernel, solve_fibers
from spinkubo.transport import (
    GK_decomposition,
    charge_conductivity,
    chern_fhs,
    conductance_GK,
    in_quantum_units,
    invariants,
    sigma_K,
    sigma_K_kernel,
    spin_commuting_check,
    spin_projectors,
    torque_kernel,
    torque_response,
    transport_report,
)

from conftest import RASHBA, TOPOLOGICAL, TRIVIAL, km, projector

ATOMIC = (0.0, 1.0, 0.0, 0.0)


def qwz(m):
    """Two-band model h(k) = sin k1 sx + sin k2 sy + (m + cos k1 + cos k2) sz."""
    hop = {
        (0, 0): m * SIGMA_Z,
        (1, 0): SIGMA_X / 2j + SIGMA_Z / 2,
        (0, 1): SIGMA_Y / 2j + SIGMA_Z / 2,
    }
    hop[(-1, 0)] = hop[(1, 0)].conj().T
    hop[(0, -1)] = hop[(0, 1)].conj().T
    return HoppingKernel(InternalBasis(1), hop)


@pytest.fixture(scope="module")
def P_atomic():
    return projector(ATOMIC, 12, 5)


def test_spin_commuting_check():
    assert spin_commuting_check(km(TOPOLOGICAL)) == 0
    assert spin_commuting_check(km((0.0, 1.0, 0.0, 0.0))) == 0
    assert spin_commuting_check(km(RASHBA)) > 0


def test_atomic_limit_is_inert(P_atomic):
    assert sigma_K(P_atomic).value == 0
    assert torque_response(P_atomic).value == 0
    assert charge_conductivity(P_atomic).value == 0
    assert np.abs(torque_kernel(P_atomic).blocks).max() == 0
    g = conductance_GK(P_atomic, SwitchFunction.sharp(1), SwitchFunction.sharp(2), L_max=9)
    assert np.all(g.series.values == 0)


def test_torque_vanishes_without_rashba(P_topo_small):
    small = P_topo_small.resized(6)
    assert np.abs(torque_kernel(small).blocks).max() <= 1e-12
    assert abs(torque_response(P_topo_small).value) <= 1e-30
    K = sigma_K_kernel(small)
    assert np.abs(K.correction.blocks).max() <= 1e-12


def test_torque_kernel_nonzero_but_traceless(P_rashba_small):
    T = torque_kernel(P_rashba_small.resized(6))
    assert np.abs(T.blocks).max() > 1e-4
    assert abs(torque_response(P_rashba_small).value) <= 1e-12


def test_sigma_kernel_correction_equals_torque_kernel(P_rashba_small):
    P = P_rashba_small.resized(5)
    K = sigma_K_kernel(P, "kernel")
    T = torque_kernel(P, "kernel")
    for n in [(1, 0), (0, 1), (0, 0), (-2, 1)]:
        np.testing.assert_allclose(K.correction.block(n), T.block(n), atol=1e-12)


@pytest.mark.parametrize("params", [TOPOLOGICAL, RASHBA])
def test_schemes_agree(params):
    P = projector(params, 24, 8)
    a = sigma_K(P, "analytic")
    g = sigma_K(P, "grid")
    k = sigma_K(P, "kernel")
    assert abs(g.value - a.value) <= g.bound
    assert abs(k.value - a.value) <= k.bound


def test_sigma_matches_spin_resolved_charge_response(P_topo_small):
    # with S_z conserved the spin response is half the difference of the sector Hall responses
    up = charge_conductivity(P_topo_small, spin_block=0).value
    down = charge_conductivity(P_topo_small, spin_block=1).value
    assert sigma_K(P_topo_small).value == pytest.approx(0.5 * (up - down), abs=1e-12)


@pytest.mark.parametrize("frac", [0.25, 0.75])
def test_sigma_independent_of_mu_in_gap(frac):
    H = km(RASHBA)
    ref = projection_kernel(solve_fibers(H, 24), 8)
    a, b = ref.fibers.gap.a, ref.fibers.gap.b
    P = projection_kernel(solve_fibers(H, 24, mu=a + frac * (b - a)), 8)
    assert abs(sigma_K(P).value - sigma_K(ref).value) <= 1e-10


@pytest.mark.parametrize("m", [1.0, -1.0, 3.0, -0.5])
def test_chern_matches_charge_kubo_formula(m):
    P = projection_kernel(solve_fibers(qwz(m), 36, filled_bands=1), 8)
    c = chern_fhs(P.fibers.projectors)
    assert c.residual <= 1e-10
    kubo = in_quantum_units(charge_conductivity(P).value)
    assert kubo == pytest.approx(c.value, abs=1e-3)


def test_chern_qwz_phases():
    vals = {m: chern_fhs(solve_fibers(qwz(m), 24, filled_bands=1).projectors).value
            for m in (-3.0, -1.0, 1.0, 3.0)}
    assert vals[3.0] == 0 and vals[-3.0] == 0
    assert abs(vals[1.0]) == 1 and vals[-1.0] == -vals[1.0]


def test_chern_constant_field():
    proj = np.zeros((8, 8, 2, 2), dtype=complex)
    proj[..., 0, 0] = 1
    r = chern_fhs(proj)
    assert r.value == 0 and r.residual == 0


def test_chern_singular_plaquette():
    proj = np.zeros((4, 4, 2, 2), dtype=complex)
    proj[..., 0, 0] = 1
    proj[::2, :, 0, 0] = 0
    proj[::2, :, 1, 1] = 1
    with pytest.raises(SingularPlaquette):
        chern_fhs(proj)


def test_spin_chern_numbers():
    F = solve_fibers(km(TOPOLOGICAL), 30)
    up = chern_fhs(spin_projectors(F.projectors, 0))
    down = chern_fhs(spin_projectors(F.projectors, 1))
    assert abs(up.value) == 1 and up.residual <= 1e-10
    assert up.value + down.value == 0
    Ft = solve_fibers(km(TRIVIAL), 30)
    assert chern_fhs(spin_projectors(Ft.projectors, 0)).value == 0


def test_invariants_report(P_topo_small, P_rashba_small):
    rep = invariants(P_topo_small, km(TOPOLOGICAL))
    assert rep.chern_total.value == 0
    assert rep.chern_up.value == -rep.chern_down.value
    rep = invariants(P_rashba_small, km(RASHBA))
    assert rep.chern_up is None and rep.spin_commuting_norm > 0


def test_time_reversal_kills_charge_response(P_rashba_small):
    assert abs(charge_conductivity(P_rashba_small).value) <= 1e-10


def test_spin_sector_charge_response_is_quantized(P_topo_small):
    up = in_quantum_units(charge_conductivity(P_topo_small, spin_block=0).value)
    assert abs(abs(up) - 1) <= 1e-3


def test_conductance_matches_sigma(P_topo_small):
    g = conductance_GK(P_topo_small, SwitchFunction.sharp(1), SwitchFunction.sharp(2), L_max=31)
    assert g.series.verdict == "converged"
    assert abs(g.value.value - sigma_K(P_topo_small, "grid").value) <= 1e-4
    c_up = chern_fhs(spin_projectors(P_topo_small.fibers.projectors, 0)).value
    assert abs(in_quantum_units(g.value.value) - c_up) <= in_quantum_units(g.value.bound)


def test_decomposition_without_rashba(P_topo_small):
    d = GK_decomposition(P_topo_small, 5, L_max=15)
    assert d.max_G_b_partial <= 1e-14
    assert abs(d.G_a_over_l.value - sigma_K(P_topo_small, "grid").value) <= 1e-4


def test_transport_report(P_rashba_small):
    rep = transport_report(P_rashba_small, L_max=9, parameters={"x": 1})
    d = rep.as_dict()
    assert d["sigma_K_e2h"]["value"] == pytest.approx(in_quantum_units(d["sigma_K"]["value"]))
    assert "G_K" in d and d["parameters"] == {"x": 1}
