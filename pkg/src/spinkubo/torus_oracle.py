"""Brute-force reference on an ``L x L`` torus.

The Hamiltonian is assembled as a dense matrix with cyclically wrapped
hoppings and diagonalized directly.  Position commutators use minimal-image
displacements, so no switch functions or Bloch fibers are involved; the
results are compared with the Brillouin-zone pipeline at ``M = L``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DecayTooSlow, DegenerateFit, GapClosed, LTooSmall
from .kernel_algebra import PeriodicKernel
from .lattice_model import HoppingKernel
from .spectral import decay_profile, shell_maxima

PROJECTOR_GAP = 1e-10


@dataclass(frozen=True)
class TorusSystem:
    """Dense torus Hamiltonian; site ``i`` holds cell ``sites[i]`` with ``|n_j| <= (L-1)/2``."""

    L: int
    dim: int
    sites: np.ndarray
    hamiltonian: np.ndarray

    @property
    def half(self) -> int:
        return self.L // 2

    def site_index(self, n1: int, n2: int) -> int:
        h = self.half
        return ((n1 + h) % self.L) * self.L + (n2 + h) % self.L

    def wrap(self, x):
        """Minimal image of coordinate differences, in ``[-(L-1)/2, (L-1)/2]``."""
        h = self.half
        return (np.asarray(x) + h) % self.L - h

    def displacements(self) -> tuple[np.ndarray, np.ndarray]:
        """Minimal-image ``n - m`` for all site pairs, per axis."""
        s = self.sites
        return (self.wrap(s[None, :, 0] - s[:, None, 0]), self.wrap(s[None, :, 1] - s[:, None, 1]))


def build_torus(kernel: HoppingKernel, L: int) -> TorusSystem:
    """Wrap a hopping kernel onto the ``L x L`` torus (``L`` odd).

    Raises
    ------
    LTooSmall
        If ``L <= 2 range(kernel)``, where wrapped hoppings would overlap.
    """
    if L % 2 == 0:
        raise ValueError("L must be odd")
    if L <= 2 * kernel.range:
        raise LTooSmall(f"L={L} must exceed twice the hopping range {kernel.range}")
    h = L // 2
    d = kernel.dim
    r = np.arange(-h, h + 1)
    a, b = np.meshgrid(r, r, indexing="ij")
    sites = np.stack([a.ravel(), b.ravel()], axis=1)
    ns = len(sites)
    Hd = np.zeros((ns, d, ns, d), dtype=complex)
    src = np.arange(ns)
    for (d1, d2), blk in kernel.hoppings.items():
        t1 = (sites[:, 0] + d1 + h) % L
        t2 = (sites[:, 1] + d2 + h) % L
        Hd[src, :, t1 * L + t2, :] += blk
    return TorusSystem(L, d, sites, Hd.reshape(ns * d, ns * d))


def torus_spectrum(system: TorusSystem) -> np.ndarray:
    return np.linalg.eigvalsh(system.hamiltonian)


def torus_fermi_projection(system: TorusSystem, mu: float) -> np.ndarray:
    """Dense ``P = chi_(-inf, mu)(H)``.

    Raises
    ------
    GapClosed
        If an eigenvalue lies within ``1e-10`` of ``mu``.
    """
    E, V = np.linalg.eigh(system.hamiltonian)
    if np.any(np.abs(E - mu) <= PROJECTOR_GAP):
        raise GapClosed(f"an eigenvalue lies within {PROJECTOR_GAP:g} of mu={mu}")
    occ = V[:, E < mu]
    return occ @ occ.conj().T


def central_row(system: TorusSystem, P: np.ndarray) -> PeriodicKernel:
    """Blocks ``P_{0,n}`` of a dense operator for ``||n||_inf <= (L-1)/2``."""
    d, L = system.dim, system.L
    i0 = system.site_index(0, 0)
    row = P[i0 * d:(i0 + 1) * d].reshape(d, L, L, d)
    return PeriodicKernel(np.transpose(row, (1, 2, 0, 3)))


def check_decay(system: TorusSystem, P: np.ndarray, max_ratio: float = 0.25) -> float | None:
    """Decay length of the central row; ``DecayTooSlow`` if it exceeds ``max_ratio * L``.

    Tori with ``L < 9`` have too few shells for a fit and are not checked.
    On a torus the fitted length saturates near ``L / 8`` even for narrow
    gaps, so the check only rejects grossly delocalized projectors.
    """
    if system.L < 9:
        return None
    row = central_row(system, P)
    try:
        fit = decay_profile(row)
    except DegenerateFit:
        _, maxima = shell_maxima(row, start=1)
        if np.all(maxima < 1e-15):
            return None
        raise DecayTooSlow("central row of the projector does not decay") from None
    if fit.zeta > max_ratio * system.L:
        raise DecayTooSlow(f"decay length {fit.zeta:.2f} is not small against L={system.L}")
    return fit.zeta


def torus_sigma_K(system: TorusSystem, P: np.ndarray, spin: np.ndarray | None = None,
                  check: bool = True) -> complex:
    """Unit-cell trace of ``i P [[P, X_1 S], [P, X_2]] P`` on the torus.

    Commutators with positions become minimal-image weights,
    ``[P, X_j] -> (n - m)_j P_{m,n}`` and ``n_1 n_2 P_{m,n}`` for the mixed
    term, and the Leibniz expansion of ``[P, X_1 S]`` is used with the
    reference cell at the origin, where the ``X_1 [P, S]`` part has no
    diagonal weight.
    """
    if check:
        check_decay(system, P)
    d = system.dim
    ns = len(system.sites)
    if spin is None:
        spin = 0.5 * np.kron(np.eye(d // 2), np.diag([1.0, -1.0]))
    W1, W2 = system.displacements()
    ex = lambda W: np.kron(W, np.ones((d, d)))
    S = np.kron(np.eye(ns), spin)
    D1, D2, D12 = ex(W1) * P, ex(W2) * P, ex(W1 * W2) * P
    C = P @ S - S @ P
    i0 = system.site_index(0, 0)
    rows = slice(i0 * d, (i0 + 1) * d)
    # only the reference-cell rows of each product are needed
    Pr, D1r = P[rows], D1[rows]
    sigma = 1j * (Pr @ D1 @ S @ D2 @ P + D1r @ C @ D2 @ P - Pr @ D2 @ D1 @ S @ P
                  - Pr @ D12 @ C @ P - D1r @ D2 @ C @ P)
    return complex(np.trace(sigma[:, rows]))


def torus_torque(system: TorusSystem, P: np.ndarray, spin: np.ndarray | None = None) -> complex:
    """Unit-cell trace of ``i P [[P, S], [P, X_2]] P`` on the torus."""
    d = system.dim
    ns = len(system.sites)
    if spin is None:
        spin = 0.5 * np.kron(np.eye(d // 2), np.diag([1.0, -1.0]))
    _, W2 = system.displacements()
    S = np.kron(np.eye(ns), spin)
    D2 = np.kron(W2, np.ones((d, d))) * P
    C = P @ S - S @ P
    i0 = system.site_index(0, 0)
    rows = slice(i0 * d, (i0 + 1) * d)
    T = 1j * P[rows] @ (C @ D2 - D2 @ C) @ P
    return complex(np.trace(T[:, rows]))
