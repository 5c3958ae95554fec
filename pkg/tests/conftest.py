import numpy as np
import pytest

from spinkubo.lattice_model import KaneMeleParams, build_kane_mele
from spinkubo.spectral import projection_kernel, solve_fibers

TOPOLOGICAL = (1.0, 0.1, 0.06, 0.0)
RASHBA = (1.0, 0.1, 0.06, 0.05)
TRIVIAL = (1.0, 1.0, 0.03, 0.0)


def km(params):
    return build_kane_mele(KaneMeleParams(*params))


def projector(params, M, R):
    return projection_kernel(solve_fibers(km(params), M), R)


def dense_localization_lhs(P, lam1, lam2, spin=None):
    """Left sides of the three localization identities as dense traces.

    Operators are restricted to a box of half width ``3R + 1`` around the
    switch corner, which holds every nonvanishing term for a kernel of
    radius ``R`` and sharp switches at the origin.
    """
    if spin is None:
        spin = np.diag([0.5, -0.5, 0.5, -0.5])
    h = 3 * P.R + 1
    a, b = np.meshgrid(np.arange(-h, h + 1), np.arange(-h, h + 1), indexing="ij")
    sites = np.stack([a.ravel(), b.ravel()], axis=1)
    d = P.dim
    diff = sites[None, :, :] - sites[:, None, :]
    inside = (np.abs(diff[..., 0]) <= P.R) & (np.abs(diff[..., 1]) <= P.R)
    blocks = P.blocks[np.clip(diff[..., 0] + P.R, 0, 2 * P.R), np.clip(diff[..., 1] + P.R, 0, 2 * P.R)]
    n = len(sites) * d
    Pw = (blocks * inside[..., None, None]).swapaxes(1, 2).reshape(n, n)
    jump = lambda lam, j: (lambda v: v[None, :] - v[:, None])(np.repeat(lam(sites[:, j]), d))
    D1, D2 = jump(lam1, 0), jump(lam2, 0 if lam2.axis == 1 else 1)
    Pp = np.eye(n) - Pw
    A = (Pw * D1) @ np.kron(np.eye(len(sites)), spin)
    C1 = Pw * D1
    tr = lambda X, Y: np.sum(X * Y.T)
    loc12 = tr(A @ Pp, Pw * D2)
    loc2_0 = tr(A @ (Pp * D2), C1)
    loc2_1 = tr(A @ (Pw * D2), Pw @ C1)
    return loc12, loc2_0, loc2_1


@pytest.fixture(scope="session")
def P_rashba_small():
    return projector(RASHBA, 36, 12)


@pytest.fixture(scope="session")
def P_topo_small():
    return projector(TOPOLOGICAL, 36, 12)


@pytest.fixture
def rng():
    return np.random.default_rng(7)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
