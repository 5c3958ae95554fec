import numpy as np
import pytest

from spinkubo.errors import DecayTooSlow, GapClosed, LTooSmall
from spinkubo.spectral import BZGrid, band_spectrum, projection_kernel, solve_fibers
from spinkubo.torus_oracle import (
    build_torus,
    central_row,
    check_decay,
    torus_fermi_projection,
    torus_sigma_K,
    torus_spectrum,
    torus_torque,
)
from spinkubo.transport import sigma_K, torque_response

from conftest import RASHBA, TOPOLOGICAL, km


def test_atomic_torus_is_diagonal():
    sy = build_torus(km((0.0, 1.0, 0.0, 0.0)), 5)
    H = sy.hamiltonian
    assert H.shape == (100, 100)
    assert np.count_nonzero(H - np.diag(np.diag(H))) == 0
    np.testing.assert_allclose(np.diag(H).real, np.tile([1, 1, -1, -1], 25))


def test_graphene_bond_count():
    sy = build_torus(km((1.0, 0.0, 0.0, 0.0)), 9)
    # 81 A sites, 3 bonds each, 2 spins, both directions
    assert np.count_nonzero(sy.hamiltonian) == 81 * 3 * 2 * 2
    np.testing.assert_allclose(sy.hamiltonian, sy.hamiltonian.conj().T)


@pytest.mark.parametrize("params", [TOPOLOGICAL, RASHBA])
def test_spectral_duality(params):
    L = 9
    H = km(params)
    E = torus_spectrum(build_torus(H, L))
    bands = band_spectrum(H, BZGrid(L))
    assert np.abs(np.sort(E) - np.sort(bands.ravel())).max() <= 1e-12


def test_size_guards():
    H = km(RASHBA)
    with pytest.raises(LTooSmall):
        build_torus(H, 3)
    with pytest.raises(ValueError):
        build_torus(H, 8)


def test_gap_closed_on_dirac_torus():
    sy = build_torus(km((1.0, 0.0, 0.0, 0.0)), 9)
    with pytest.raises(GapClosed):
        torus_fermi_projection(sy, 0.0)


def test_projector_properties_and_blocks():
    H = km(RASHBA)
    L = 11
    sy = build_torus(H, L)
    F = solve_fibers(H, L)
    P = torus_fermi_projection(sy, F.gap.mu)
    assert np.abs(P @ P - P).max() <= 1e-12
    assert np.abs(P - P.conj().T).max() <= 1e-14
    assert np.trace(P).real == pytest.approx(2 * L * L)
    K = projection_kernel(F, (L - 1) // 2)
    assert np.abs(central_row(sy, P).blocks - K.blocks).max() <= 1e-12


def test_torus_matches_pipeline_at_small_size():
    H = km(RASHBA)
    L = 11
    sy = build_torus(H, L)
    F = solve_fibers(H, L)
    P = torus_fermi_projection(sy, F.gap.mu)
    K = projection_kernel(F, (L - 1) // 2)
    assert abs(torus_sigma_K(sy, P) - sigma_K(K, "grid").value) <= 1e-10
    assert abs(torus_torque(sy, P) - torque_response(K, "grid").value) <= 1e-10


def test_atomic_torus_sigma_vanishes():
    sy = build_torus(km((0.0, 1.0, 0.0, 0.0)), 5)
    P = torus_fermi_projection(sy, 0.0)
    assert torus_sigma_K(sy, P) == 0
    assert torus_torque(sy, P) == 0


def _rank_one(sy, zeta):
    n = np.abs(sy.sites).sum(axis=1)
    v = np.kron(np.exp(-n / zeta) if zeta else np.ones(len(n)), [1.0, 0, 0, 0])
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())


def test_decay_check():
    sy = build_torus(km(RASHBA), 9)
    assert check_decay(sy, _rank_one(sy, 0.5)) == pytest.approx(0.5)
    with pytest.raises(DecayTooSlow):
        check_decay(sy, _rank_one(sy, 10.0))
    with pytest.raises(DecayTooSlow):
        check_decay(sy, _rank_one(sy, None))
    atomic = np.zeros_like(sy.hamiltonian)
    atomic[0, 0] = 1
    assert check_decay(sy, atomic) is None
