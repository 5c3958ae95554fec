"""Spin conductivity, spin conductance, torque response and Chern numbers.

Conventions
-----------
``S = S_z``, ``D_j = [P, X_j]`` (kernel ``n_j P_{0,n}``, fiber ``-i d_j P``)
and ``C = [P, S]``.  The spin conductivity kernel is

    Sigma_K = i P [[P, X_1 S], [P, X_2]] P,

which is not periodic: its row ``m`` equals ``Sigma0_{0,n-m} + m_1 T_{0,n-m}``
with ``T = i P [C, D_2] P`` the torque response and

    Sigma0 = i (P D1 S D2 P + D1 C D2 P - P D2 D1 S P - P D12 C P - D1 D2 C P),

``D12`` having kernel ``n_1 n_2 P_{0,n}``.  Unit-cell traces of periodic
operators are averages of fiber traces over the Brillouin zone.

Three evaluation schemes are available for those traces:

``analytic``
    exact ``P(k)`` with k-derivatives from the Daleckii-Krein formula; no
    real-space truncation, quadrature error only.
``grid``
    exact ``P(k)``; the commutators ``D_j, D12`` are built from the
    truncated kernel ``||n||_inf <= R`` and evaluated on the same grid.
``kernel``
    everything composed in real space from the truncated kernel.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import SingularPlaquette, TailNotControlled
from .kernel_algebra import (
    OffsetPeriodicKernel,
    PeriodicKernel,
    block_norms,
    box_matrix,
    commutator_internal,
    commutator_position,
    commutator_position_spin,
    compose_chain,
    compose_periodic,
    holmgren_norm,
    line_kernels,
    offset_combine,
    offset_left_multiply,
    offset_right_multiply,
)
from .lattice_model import HoppingKernel, SwitchFunction, approximate_position, spin_commutator
from .spectral import FermiProjectionKernel
from .trace_functionals import (
    Estimate,
    StripeDensity,
    TraceSeries,
    jpv_trace,
    odd_sizes,
    tuv_offset,
    tuv_periodic,
)

SCHEMES = ("analytic", "grid", "kernel")
TWO_PI = 2 * np.pi


def spin_matrix(dim: int) -> np.ndarray:
    """``S_z = 1/2 Id_N x s_z`` for an internal dimension ``2N``."""
    return 0.5 * np.kron(np.eye(dim // 2), np.diag([1.0, -1.0])).astype(complex)


# ---------------------------------------------------------------- fibers


@dataclass
class FiberFactors:
    """``P(k)`` and the commutator fibers on the Brillouin-zone grid."""

    P: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    D12: np.ndarray
    S: np.ndarray
    scheme: str

    @property
    def C(self) -> np.ndarray:
        return self.P @ self.S - self.S @ self.P

    @property
    def M(self) -> int:
        return self.P.shape[0]


def fiber_factors(P: FermiProjectionKernel, scheme: str = "analytic",
                  spin_block: int | None = None) -> FiberFactors:
    """Fibers of ``P``, ``[P,X_1]``, ``[P,X_2]`` and ``n_1 n_2 P`` in a scheme.

    ``spin_block`` (0 up, 1 down) restricts everything to one spin sector,
    which is meaningful only when ``P`` commutes with ``S_z``.
    """
    if scheme not in ("analytic", "grid"):
        raise ValueError(f"fiber scheme must be 'analytic' or 'grid', got {scheme!r}")
    fib = P.fibers
    if fib is None:
        raise ValueError("projection kernel carries no fibers")
    if scheme == "analytic":
        D1 = -1j * fib.derivative(1)
        D2 = -1j * fib.derivative(2)
        D12 = -fib.derivative(1, 2)
    else:
        base = PeriodicKernel(P.blocks)
        D1 = commutator_position(base, 1).grid_fibers(P.M)
        D2 = commutator_position(base, 2).grid_fibers(P.M)
        D12 = base.weighted(lambda a, b: (a * b).astype(float)).grid_fibers(P.M)
    Pk = fib.projectors
    S = spin_matrix(P.dim)
    if spin_block is not None:
        idx = np.arange(P.dim // 2) * 2 + spin_block
        sel = np.ix_(idx, idx)
        Pk, D1, D2, D12 = (a[..., sel[0], sel[1]] for a in (Pk, D1, D2, D12))
        S = S[sel]
    return FiberFactors(Pk, D1, D2, D12, S, scheme)


def sigma_fibers(F: FiberFactors) -> np.ndarray:
    """Fibers of the periodic part ``Sigma0`` of the spin conductivity kernel."""
    P, D1, D2, D12, S = F.P, F.D1, F.D2, F.D12, F.S
    C = F.C
    return 1j * (P @ D1 @ S @ D2 @ P + D1 @ C @ D2 @ P - P @ D2 @ D1 @ S @ P
                 - P @ D12 @ C @ P - D1 @ D2 @ C @ P)


def torque_fibers(F: FiberFactors) -> np.ndarray:
    """Fibers of ``T = i P [[P,S],[P,X_2]] P``."""
    C = F.C
    return 1j * F.P @ (C @ F.D2 - F.D2 @ C) @ F.P


def charge_fibers(F: FiberFactors) -> np.ndarray:
    """Fibers of ``i P [[P,X_1],[P,X_2]] P``."""
    return 1j * F.P @ (F.D1 @ F.D2 - F.D2 @ F.D1) @ F.P


def _coarse_stride(M: int) -> int | None:
    for s in range(2, M):
        if M % s == 0 and M // s >= 3:
            return s
    return None


def cell_trace(fibers: np.ndarray) -> Estimate:
    """Brillouin-zone average of ``tr A(k)`` with a quadrature error estimate.

    The estimate is the change against the coarser grid obtained by
    subsampling with the smallest divisor of ``M``; for analytic periodic
    integrands the error falls geometrically with ``M``, so this bounds the
    fine-grid error from above.
    """
    tr = np.trace(fibers, axis1=-2, axis2=-1)
    value = complex(tr.mean())
    s = _coarse_stride(tr.shape[0])
    bound = float(abs(tr[::s, ::s].mean() - value)) if s else float("nan")
    return Estimate(value, bound)


def synthesize(fibers: np.ndarray, R: int) -> PeriodicKernel:
    """Kernel ``A_{0,n} = M^-2 sum_k exp(-i k.n) A(k)`` for ``||n||_inf <= R``.

    ``bound`` is the mass of all grid offsets outside the square.
    """
    M = fibers.shape[0]
    if 2 * R >= M:
        raise ValueError("R must be below M/2")
    full = np.fft.fft2(fibers, axes=(0, 1)) / M ** 2
    r = np.arange(-R, R + 1)
    kept = full[np.ix_(r % M, r % M)]
    dropped = float(block_norms(full).sum() - block_norms(kept).sum())
    return PeriodicKernel(kept, max(dropped, 0.0))


# ---------------------------------------------------------------- kernels


def _real_space_factors(P: PeriodicKernel):
    base = PeriodicKernel(P.blocks, P.bound)
    S = spin_matrix(P.dim)
    return base, S, commutator_internal(base, S), commutator_position(base, 2)


def torque_kernel(P: FermiProjectionKernel, scheme: str = "kernel",
                  R_out: int | None = None) -> PeriodicKernel:
    """Kernel of ``T = i P [[P, S_z], [P, X_2]] P``.

    ``scheme="kernel"`` composes the truncated kernels in real space;
    ``"analytic"`` and ``"grid"`` synthesize the kernel from fibers.
    """
    R_out = P.R if R_out is None else R_out
    if scheme == "kernel":
        base, _, C, D2 = _real_space_factors(P)
        R_mid = 2 * P.R
        left = compose_chain([base, C, D2, base], R_out, R_mid)
        right = compose_chain([base, D2, C, base], R_out, R_mid)
        return (left - right).scaled(1j)
    return synthesize(torque_fibers(fiber_factors(P, scheme)), R_out)


def sigma_K_kernel(P: FermiProjectionKernel, scheme: str = "kernel",
                   R_out: int | None = None) -> OffsetPeriodicKernel:
    """Kernel of ``Sigma_K = i P [[P, X_1 S_z], [P, X_2]] P``.

    Returned as periodic part plus ``g(m) = m_1`` times the correction,
    which equals the torque kernel.  In the ``kernel`` scheme the split is
    produced by the offset-kernel algebra (no use of the torque formula);
    otherwise both parts are synthesized from fibers.
    """
    R_out = P.R if R_out is None else R_out
    if scheme == "kernel":
        base, S, _, D2 = _real_space_factors(P)
        R_mid = 2 * P.R
        Y = commutator_position_spin(base, 1, S)
        Z = offset_combine(offset_right_multiply(Y, D2, R_mid),
                           offset_left_multiply(D2, Y, R_mid), cz=-1.0)
        Z = offset_right_multiply(Z, base, R_mid)
        out = offset_left_multiply(base, Z, R_out)
        return OffsetPeriodicKernel(out.periodic.scaled(1j), out.correction.scaled(1j),
                                    out.g, 1, True)
    F = fiber_factors(P, scheme)
    per = synthesize(sigma_fibers(F), R_out)
    corr = synthesize(torque_fibers(F), R_out)
    return OffsetPeriodicKernel(per, corr, lambda m1, m2: np.asarray(m1) * 1.0, 1, True)


# ---------------------------------------------------------------- scalars


def _real(est: Estimate, bound: float | None = None) -> Estimate:
    return Estimate(est.real(), est.bound if bound is None else bound)


def torque_response(P: FermiProjectionKernel, scheme: str = "analytic") -> Estimate:
    """``tau(T)``: unit-cell trace of the torque response (real part)."""
    if scheme == "kernel":
        value = tuv_periodic(torque_kernel(P, "kernel"))
        ref = cell_trace(torque_fibers(fiber_factors(P, "analytic")))
        return _real(Estimate(value, abs(value - ref.value) + ref.bound))
    est = cell_trace(torque_fibers(fiber_factors(P, scheme)))
    if scheme == "grid":
        ref = cell_trace(torque_fibers(fiber_factors(P, "analytic")))
        est = Estimate(est.value, abs(est.value - ref.value) + ref.bound)
    return _real(est)


def sigma_K(P: FermiProjectionKernel, scheme: str = "analytic") -> Estimate:
    """Spin conductivity ``tau(Sigma_K)``, the unit-cell trace of ``Sigma0``.

    The odd correction ``m_1 T`` does not contribute (``tuv_offset`` checks
    its oddness).  Values are in units with ``e = hbar = 1``;
    ``in_quantum_units`` converts to multiples of ``e^2/h``.

    The bound is the quadrature estimate of ``cell_trace``; for the
    truncated schemes the distance to the analytic value is added.
    """
    if scheme == "kernel":
        value = tuv_offset(sigma_K_kernel(P, "kernel"))
        ref = cell_trace(sigma_fibers(fiber_factors(P, "analytic")))
        return _real(Estimate(value, abs(value - ref.value) + ref.bound))
    F = fiber_factors(P, scheme)
    sf = sigma_fibers(F)
    K = OffsetPeriodicKernel(synthesize(sf, 0), synthesize(torque_fibers(F), 0),
                             lambda m1, m2: np.asarray(m1) * 1.0, 1, True)
    est = Estimate(tuv_offset(K), cell_trace(sf).bound)
    if scheme == "grid":
        ref = cell_trace(sigma_fibers(fiber_factors(P, "analytic")))
        est = Estimate(est.value, abs(est.value - ref.value) + ref.bound)
    return _real(est)


def charge_conductivity(P: FermiProjectionKernel, spin_block: int | None = None,
                        scheme: str = "analytic") -> Estimate:
    """``tau(i P [[P,X_1],[P,X_2]] P)``, optionally within one spin sector."""
    return _real(cell_trace(charge_fibers(fiber_factors(P, scheme, spin_block))))


def in_quantum_units(x: float) -> float:
    """Convert a conductivity to multiples of ``e^2/h`` (factor ``2 pi``)."""
    return TWO_PI * x


def spin_commuting_check(kernel: HoppingKernel) -> float:
    """Holmgren norm of the kernel of ``[H, S_z]``; zero iff ``H`` conserves ``S_z``."""
    return holmgren_norm(spin_commutator(kernel))


# ---------------------------------------------------------------- Chern numbers


@dataclass(frozen=True)
class ChernResult:
    value: int
    raw: float
    residual: float

    def as_dict(self) -> dict:
        return {"value": self.value, "raw": self.raw, "residual": self.residual}


def occupied_frames(projectors: np.ndarray, rank: int | None = None) -> np.ndarray:
    """Orthonormal frames spanning the range of each ``P(k)``."""
    if rank is None:
        rank = int(round(float(np.trace(projectors[0, 0]).real)))
    _, v = np.linalg.eigh(projectors)
    return v[..., -rank:]


def chern_fhs(projectors: np.ndarray, rank: int | None = None,
              singular_tolerance: float = 1e-8) -> ChernResult:
    """Lattice field-strength Chern number of a projector field on an ``M x M`` grid.

    With link variables ``U_j(k) = det(V(k)^dagger V(k + e_j))`` the
    plaquette phase is ``arg(U_1(k) U_2(k+e_1) / (U_1(k+e_2) U_2(k)))`` and
    the Chern number is their sum over ``2 pi``.

    Raises
    ------
    SingularPlaquette
        If some link determinant has modulus below ``singular_tolerance``.
    """
    projectors = np.asarray(projectors)
    ranks = np.trace(projectors, axis1=-2, axis2=-1).real
    if rank is None:
        rank = int(round(float(ranks.mean())))
    if np.abs(ranks - rank).max() > 1e-8:
        raise ValueError("projector rank varies over the grid")
    if rank == 0:
        return ChernResult(0, 0.0, 0.0)
    V = occupied_frames(projectors, rank)
    Vh = np.conj(np.swapaxes(V, -1, -2))

    def link(axis):
        return np.linalg.det(Vh @ np.roll(V, -1, axis=axis))

    U1, U2 = link(0), link(1)
    if min(np.abs(U1).min(), np.abs(U2).min()) < singular_tolerance:
        raise SingularPlaquette("link overlap below tolerance; refine the grid")
    U1, U2 = U1 / np.abs(U1), U2 / np.abs(U2)
    F = np.angle(U1 * np.roll(U2, -1, axis=0) / (np.roll(U1, -1, axis=1) * U2))
    raw = float(F.sum() / TWO_PI)
    n = int(round(raw))
    return ChernResult(n, raw, abs(raw - n))


def spin_projectors(projectors: np.ndarray, spin_block: int) -> np.ndarray:
    dim = projectors.shape[-1]
    idx = np.arange(dim // 2) * 2 + spin_block
    return projectors[..., idx[:, None], idx[None, :]]


@dataclass
class InvariantReport:
    chern_total: ChernResult
    chern_up: ChernResult | None
    chern_down: ChernResult | None
    spin_commuting_norm: float

    def as_dict(self) -> dict:
        return {
            "chern_total": self.chern_total.as_dict(),
            "chern_up": None if self.chern_up is None else self.chern_up.as_dict(),
            "chern_down": None if self.chern_down is None else self.chern_down.as_dict(),
            "spin_commuting_norm": self.spin_commuting_norm,
        }


def invariants(P: FermiProjectionKernel, kernel: HoppingKernel,
               spin_tolerance: float = 1e-12) -> InvariantReport:
    """Total Chern number and, when ``[H, S_z] = 0``, the two spin-sector ones."""
    proj = P.fibers.projectors
    total = chern_fhs(proj)
    norm = spin_commuting_check(kernel)
    up = down = None
    if norm <= spin_tolerance:
        up = chern_fhs(spin_projectors(proj, 0))
        down = chern_fhs(spin_projectors(proj, 1))
    return InvariantReport(total, up, down, norm)


# ---------------------------------------------------------------- conductance


@dataclass
class LineOperators:
    """``P`` and ``[P, X_2]`` on a column box, one matrix per momentum ``k2``.

    ``P`` is exact in ``k2`` and truncated at ``|n_1| <= R``; ``[P, X_2]``
    comes from the truncated kernel ``||n||_inf <= R``.  The transverse sum
    of a diagonal ``A [B, Lambda_2] C`` over ``m_2`` equals the
    ``m_2 = 0`` diagonal of ``A [B, X_2] C``, so column densities of the
    conductance are exact in the transverse direction.
    """

    columns: np.ndarray
    P_line: np.ndarray
    D_line: np.ndarray
    dim: int

    def box(self, j: int) -> tuple[np.ndarray, np.ndarray]:
        return box_matrix(self.P_line[j], self.columns), box_matrix(self.D_line[j], self.columns)

    @property
    def n_momenta(self) -> int:
        return self.P_line.shape[0]


def line_operators(P: FermiProjectionKernel, columns: np.ndarray) -> LineOperators:
    fib = P.fibers
    M, R = P.M, P.R
    mixed = np.fft.fft(fib.projectors, axis=0) / M
    r = np.arange(-R, R + 1)
    P_line = np.moveaxis(mixed[r % M], 0, 1)
    D_line = line_kernels(commutator_position(PeriodicKernel(P.blocks), 2), M)
    return LineOperators(np.asarray(columns), P_line, D_line, P.dim)


def _block_diag_traces(left: np.ndarray, right: np.ndarray, rows: np.ndarray, dim: int) -> np.ndarray:
    """``tr (left @ right)_{a,a}`` for row blocks ``rows`` where ``left`` holds only those rows."""
    cols = (rows[:, None] * dim + np.arange(dim)[None, :]).ravel()
    t = np.einsum("ix,xi->i", left, right[:, cols])
    return t.reshape(len(rows), dim).sum(axis=1)


def _map_momenta(fn, n: int, threads: int) -> list:
    if threads <= 1:
        return [fn(j) for j in range(n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n)))


def _gk_density(ops: LineOperators, lam_values: np.ndarray, rows: np.ndarray, threads: int) -> np.ndarray:
    """Column densities of ``i P [[P, Lambda_1 S], [P, X_2]] P`` on ``rows``."""
    d = ops.dim
    sdiag = np.diag(spin_matrix(d)).real
    lamS = np.kron(lam_values, sdiag)
    rsel = (rows[:, None] * d + np.arange(d)[None, :]).ravel()

    def one(j):
        Pb, Db = ops.box(j)
        Y = Pb * lamS[None, :] - lamS[:, None] * Pb
        Z = Y @ Db - Db @ Y
        W = Pb[rsel] @ Z
        return 1j * _block_diag_traces(W, Pb, rows, d)

    return np.mean(_map_momenta(one, ops.n_momenta, threads), axis=0)


def _box_columns(lo: int, hi: int, R: int, hops: int = 2) -> np.ndarray:
    return np.arange(lo - hops * R, hi + hops * R + 1)


@dataclass
class ConductanceResult:
    series: TraceSeries
    value: Estimate
    density: StripeDensity
    switches: tuple[dict, dict]
    truncation: float = 0.0

    def as_dict(self) -> dict:
        return {"value": self.value.as_dict(), "verdict": self.series.verdict,
                "series_bound": self.series.bound, "truncation_estimate": self.truncation,
                "switch_1": self.switches[0], "switch_2": self.switches[1]}


def conductance_GK(P: FermiProjectionKernel, lam1: SwitchFunction, lam2: SwitchFunction,
                   L_max: int = 41, transverse_cutoff: int | None = None, extension: int = 8,
                   threads: int = 1) -> ConductanceResult:
    """Spin conductance ``G_K = 1-pvTr(i P [[P, Lambda_1 S_z], [P, Lambda_2]] P)``.

    Column densities are computed on a box wide enough that every column
    with ``|m_1| <= L_max/2 + extension`` is exact for the truncated kernel;
    the transverse sum is exact (see ``LineOperators``), so
    ``transverse_cutoff`` is not needed.  The tail bound at each ``L`` is
    the observed density mass on the columns between ``L/2`` and
    ``L_max/2 + extension``.  The bound on the value adds a truncation
    estimate: the bound of the grid-scheme spin conductivity, which shares
    the truncated commutator kernels (its distance to the analytic value
    plus the quadrature estimate of the latter).
    """
    if lam1.axis != 1 or lam2.axis != 2:
        raise ValueError("Lambda_1 must act on axis 1 and Lambda_2 on axis 2")
    odd_sizes(L_max)
    h = L_max // 2
    ext = h + extension
    lo, hi = min(-ext, lam1.n_minus), max(ext, lam1.n_plus)
    columns = _box_columns(lo, hi, P.R)
    ops = line_operators(P, columns)
    rows = np.nonzero(np.abs(columns) <= ext)[0]
    dens = _gk_density(ops, lam1(columns), rows, threads)
    cols = columns[rows]
    mass = np.abs(dens)
    outer = lambda L: float(mass[np.abs(cols) > L // 2].sum())
    density = StripeDensity(1, cols, dens, np.zeros(len(cols)), outer)
    series = jpv_trace(density, 1, L_max)
    if series.verdict == "diverging":
        raise TailNotControlled("conductance partial sums keep growing along the stripe")
    est = series.estimate()
    # grid bound = |grid - analytic| + quadrature estimate of the analytic value
    truncation = sigma_K(P, "grid").bound
    return ConductanceResult(series, Estimate(est.real(), est.bound + truncation), density,
                             (lam1.describe(), lam2.describe()), truncation)


@dataclass
class Decomposition:
    """Pieces of the conductance with ``Lambda_1 = Xi^(l)``."""

    l: int
    G_a_total: Estimate
    G_b_series: TraceSeries
    G_b_density: np.ndarray

    @property
    def G_a_over_l(self) -> Estimate:
        return Estimate(complex(self.G_a_total.value).real / self.l, self.G_a_total.bound / self.l)

    @property
    def max_G_b_partial(self) -> float:
        return float(np.abs(self.G_b_series.values).max())

    def as_dict(self) -> dict:
        return {"l": self.l, "G_a_over_l": self.G_a_over_l.as_dict(),
                "G_a_total": self.G_a_total.as_dict(),
                "max_abs_G_b_partial": self.max_G_b_partial}


def GK_decomposition(P: FermiProjectionKernel, l: int, lam2: SwitchFunction | None = None,
                     L_max: int = 41, threads: int = 1) -> Decomposition:
    """Split of ``G_K(X^(l), Lambda_2)`` into ``G_a + adj`` and ``G_b + adj``.

    With ``X = X^(l)`` and ``Q = 1 - P``:

    * ``G_a + adj = i [P, X] S Q D - i D Q S [P, X]`` is trace class; its
      full trace divided by ``l`` is returned.
    * ``G_b + adj = X i C Q D - i D Q C X`` has column density proportional
      to the odd function ``X(m_1)``; its stripe partial sums are returned.

    ``D`` stands for ``[P, Lambda_2]``, handled through ``[P, X_2]`` as in
    ``conductance_GK``.
    """
    if lam2 is None:
        lam2 = SwitchFunction.sharp(2)
    odd_sizes(L_max)
    h = L_max // 2
    support = l // 2 + 2 + P.R
    ext = max(h, support)
    columns = _box_columns(-ext, ext, P.R)
    ops = line_operators(P, columns)
    d = ops.dim
    X = np.kron(approximate_position(l, columns), np.ones(d))
    s = np.tile(np.diag(spin_matrix(d)).real, len(columns))
    rows_a = np.nonzero(np.abs(columns) <= support)[0]
    rows_b = np.nonzero(np.abs(columns) <= h)[0]
    sel_a = (rows_a[:, None] * d + np.arange(d)[None, :]).ravel()
    sel_b = (rows_b[:, None] * d + np.arange(d)[None, :]).ravel()

    def diag_blocks(mat, sel, n):
        return np.einsum("ii->i", mat[:, sel]).reshape(n, d).sum(axis=1)

    def one(j):
        Pb, Db = ops.box(j)
        PX = Pb * X[None, :] - X[:, None] * Pb
        C = Pb * s[None, :] - s[:, None] * Pb
        DQ = Db - Db @ Pb
        PXSQ = PX * s[None, :]
        PXSQ = PXSQ - PXSQ @ Pb
        a_left = 1j * PXSQ[sel_a] @ Db
        a_right = 1j * (DQ[sel_a] * s[None, :]) @ PX
        ga = diag_blocks(a_left - a_right, sel_a, len(rows_a))
        CQ = C[sel_b] - C[sel_b] @ Pb
        b_left = 1j * (X[sel_b][:, None] * CQ) @ Db
        b_right = 1j * (DQ[sel_b] @ C) * X[None, :]
        gb = diag_blocks(b_left - b_right, sel_b, len(rows_b))
        return ga, gb

    out = _map_momenta(one, ops.n_momenta, threads)
    ga = np.mean([o[0] for o in out], axis=0)
    gb = np.mean([o[1] for o in out], axis=0)
    total = complex(ga.sum())
    edge = float(np.abs(ga[np.abs(columns[rows_a]) >= support - 1]).sum())
    stripe = StripeDensity(1, columns[rows_b], gb)
    series = jpv_trace(stripe, 1, L_max)
    return Decomposition(l, Estimate(total, edge), series, gb)


# ---------------------------------------------------------------- report


@dataclass
class TransportReport:
    sigma_K: Estimate
    torque_tau: Estimate
    G_K: ConductanceResult | None = None
    parameters: dict = field(default_factory=dict)
    scheme: str = "analytic"

    def as_dict(self) -> dict:
        out = {
            "parameters": self.parameters,
            "scheme": self.scheme,
            "sigma_K": self.sigma_K.as_dict(),
            "sigma_K_e2h": {"value": in_quantum_units(complex(self.sigma_K.value).real),
                            "bound": TWO_PI * self.sigma_K.bound},
            "torque_tau": self.torque_tau.as_dict(),
        }
        if self.G_K is not None:
            out["G_K"] = self.G_K.as_dict()
        return out


def transport_report(P: FermiProjectionKernel, lam1: SwitchFunction | None = None,
                     lam2: SwitchFunction | None = None, L_max: int | None = None,
                     scheme: str = "analytic", parameters: dict | None = None,
                     threads: int = 1) -> TransportReport:
    s = sigma_K(P, scheme)
    t = torque_response(P, "analytic" if scheme == "kernel" else scheme)
    g = None
    if L_max is not None:
        g = conductance_GK(P, lam1 or SwitchFunction.sharp(1), lam2 or SwitchFunction.sharp(2),
                           L_max, threads=threads)
    return TransportReport(s, t, g, dict(parameters or {}), scheme)
