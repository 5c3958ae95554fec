"""Trace per unit volume, principal value traces and localization identities.

Partial traces are always taken over odd side lengths ``L``: squares
``||m||_inf <= L/2`` for the principal value trace and stripes
``|m_j| <= L/2`` for the directional one.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Iterable

import numpy as np

from .errors import NonRealValue, TailNotControlled, WindowTooSmall
from .kernel_algebra import (
    OffsetPeriodicKernel,
    PeriodicKernel,
    WindowKernel,
    block_norms,
    box_diagonal_traces,
    box_matrix,
    compose_periodic,
    holmgren_norm,
    line_kernels,
)
from .lattice_model import SwitchFunction

TOL_ABS = 1e-9
IMAG_TOLERANCE = 1e-9
_EPS = np.finfo(float).eps


@dataclass(frozen=True)
class Estimate:
    """A complex value with a nonnegative error bound."""

    value: complex
    bound: float = 0.0

    def real(self, tolerance: float = IMAG_TOLERANCE) -> float:
        """Real part, after checking that the imaginary part is negligible."""
        v = complex(self.value)
        if abs(v.imag) > tolerance:
            raise NonRealValue(f"imaginary part {v.imag:.3e} exceeds {tolerance:g}")
        return v.real

    def as_dict(self) -> dict:
        v = complex(self.value)
        return {"value": v.real, "imag": v.imag, "bound": float(self.bound)}


# ---------------------------------------------------------------- series


def classify(values: np.ndarray, tails: np.ndarray, tol_abs: float = TOL_ABS) -> str:
    """Verdict on a sequence of partial sums.

    ``converged`` when the last three increments are below ``tol_abs`` plus
    the attached tail bound; ``diverging`` when they keep a common direction
    without shrinking; ``oscillating`` otherwise.
    """
    values = np.asarray(values, dtype=complex)
    tails = np.asarray(tails, dtype=float)
    if len(values) < 2:
        return "oscillating"
    inc = np.diff(values)[-3:]
    tl = tails[-len(inc):]
    if np.all(np.abs(inc) <= tol_abs + tl):
        return "converged"
    mags = np.abs(inc)
    same_dir = all((inc[i] * np.conj(inc[i + 1])).real > 0 for i in range(len(inc) - 1))
    growing = np.all(mags[1:] >= mags[:-1] * (1 - 1e-9))
    if same_dir and growing:
        return "diverging"
    return "oscillating"


@dataclass
class TraceSeries:
    """Partial traces over growing odd windows.

    Attributes
    ----------
    axis : str
        ``"volume"`` for squares, ``"stripe-1"`` / ``"stripe-2"`` for stripes.
    L : ndarray
        Odd, increasing side lengths.
    values : ndarray
        Complex partial traces.
    tail_bounds : ndarray
        Estimated mass omitted at each ``L`` (transverse truncation, kernel
        truncation, window edges).
    """

    axis: str
    L: np.ndarray
    values: np.ndarray
    tail_bounds: np.ndarray
    verdict: str = ""

    def __post_init__(self):
        self.L = np.asarray(self.L, dtype=int)
        self.values = np.asarray(self.values, dtype=complex)
        self.tail_bounds = np.asarray(self.tail_bounds, dtype=float)
        if np.any(self.L % 2 == 0) or np.any(np.diff(self.L) <= 0):
            raise ValueError("L values must be odd and increasing")
        if not self.verdict:
            self.verdict = classify(self.values, self.tail_bounds)

    @property
    def limit(self) -> complex:
        return complex(self.values[-1])

    @property
    def bound(self) -> float:
        """Tail bound at the largest window plus the last increment."""
        last = abs(self.values[-1] - self.values[-2]) if len(self.values) > 1 else 0.0
        return float(self.tail_bounds[-1] + last)

    def estimate(self) -> Estimate:
        return Estimate(self.limit, self.bound)

    def rows(self) -> list[tuple[int, float, float, float]]:
        return [(int(L), float(v.real), float(v.imag), float(t))
                for L, v, t in zip(self.L, self.values, self.tail_bounds)]

    def to_csv(self, value_name: str = "value") -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["L", f"{value_name}_re", f"{value_name}_im", "tail_bound"])
        for L, re, im, t in self.rows():
            w.writerow([L, repr(re), repr(im), repr(t)])
        return buf.getvalue()


def odd_sizes(L_max: int, L_min: int = 1) -> np.ndarray:
    if L_max < 1 or L_max % 2 == 0:
        raise ValueError("L_max must be a positive odd integer")
    start = L_min if L_min % 2 else L_min + 1
    return np.arange(start, L_max + 1, 2)


# ---------------------------------------------------------------- diagonals


def _diagonal(A, sites: np.ndarray) -> tuple[np.ndarray, float]:
    """``tr A_{m,m}`` on ``sites`` and the tail attached to ``A``."""
    sites = np.asarray(sites, dtype=int)
    if isinstance(A, PeriodicKernel):
        return np.full(len(sites), np.trace(A.block((0, 0))), dtype=complex), A.bound
    if isinstance(A, OffsetPeriodicKernel):
        t0 = np.trace(A.periodic.block((0, 0)))
        tb = np.trace(A.correction.block((0, 0)))
        g = np.broadcast_to(A.g(sites[:, 0], sites[:, 1]), (len(sites),))
        return t0 + g * tb, A.periodic.bound + A.correction.bound
    if isinstance(A, WindowKernel):
        traces = A.diagonal_traces()
        idx = [A._index.get((int(a), int(b))) for a, b in sites]
        if any(i is None for i in idx):
            raise WindowTooSmall("requested diagonal blocks lie outside the kernel window")
        return traces[np.array(idx, dtype=int)], A.tail
    if callable(A):
        return np.asarray(A(sites[:, 0], sites[:, 1]), dtype=complex), 0.0
    raise TypeError(f"unsupported operand {type(A).__name__}")


def _declares_decay(A, axis: int) -> bool:
    if isinstance(A, WindowKernel):
        return axis in A.decay_axes
    return False


# ---------------------------------------------------------------- TUV


def tuv_periodic(A: PeriodicKernel) -> complex:
    """Trace per unit volume of a periodic operator: ``tr A_{0,0}``."""
    return complex(np.trace(A.block((0, 0))))


def tuv_offset(A: OffsetPeriodicKernel, samples: int = 7) -> complex:
    """Trace per unit volume of ``A0 + g B`` with ``g`` odd in one axis.

    The odd part sums to zero over every centred square, leaving
    ``tr A0_{0,0}``.

    Raises
    ------
    OddnessViolated
        If ``g`` fails antisymmetry on the sampled square.
    """
    A.check_oddness(samples)
    return tuv_periodic(A.periodic)


def square_partial_trace(A, L: int) -> complex:
    """``Tr(chi_L A chi_L)`` by explicit summation over the ``L x L`` square."""
    if L % 2 == 0:
        raise ValueError("L must be odd")
    h = L // 2
    r = np.arange(-h, h + 1)
    m1, m2 = np.meshgrid(r, r, indexing="ij")
    diag, _ = _diagonal(A, np.stack([m1.ravel(), m2.ravel()], axis=1))
    return complex(diag.sum())


def tuv_partial(A, L: int) -> complex:
    """``Tr(chi_L A chi_L) / L^2``."""
    return square_partial_trace(A, L) / L ** 2


# ---------------------------------------------------------------- pv traces


def pv_trace(A, L_max: int, tol_abs: float = TOL_ABS) -> TraceSeries:
    """Principal value trace: partial sums over squares ``||m||_inf <= L/2``.

    ``A`` may be a periodic, offset-periodic or window kernel, or a
    callable ``f(m1, m2)`` returning diagonal traces.
    """
    Ls = odd_sizes(L_max)
    h = L_max // 2
    r = np.arange(-h, h + 1)
    m1, m2 = np.meshgrid(r, r, indexing="ij")
    sites = np.stack([m1.ravel(), m2.ravel()], axis=1)
    diag, tail = _diagonal(A, sites)
    shell = np.maximum(np.abs(sites[:, 0]), np.abs(sites[:, 1]))
    per_shell = np.bincount(shell, weights=diag.real, minlength=h + 1) \
        + 1j * np.bincount(shell, weights=diag.imag, minlength=h + 1)
    values = np.cumsum(per_shell)[Ls // 2]
    tails = np.full(len(Ls), float(tail))
    return TraceSeries("volume", Ls, values, tails, classify(values, tails, tol_abs))


@dataclass
class StripeDensity:
    """Column sums ``g(m_j) = sum_{m_other} tr A_{m,m}`` along axis ``j``.

    Used when the transverse sum has been carried out exactly (or with a
    controlled truncation) by other means.  ``tails`` holds, for each
    column, the estimated transverse mass left out.
    """

    axis: int
    columns: np.ndarray
    density: np.ndarray
    tails: np.ndarray | None = None
    outer_tail: Callable[[int], float] | None = field(default=None, repr=False)

    def __post_init__(self):
        self.columns = np.asarray(self.columns, dtype=int)
        self.density = np.asarray(self.density, dtype=complex)
        if self.tails is None:
            self.tails = np.zeros(len(self.columns))


def jpv_trace(A, j: int, L_max: int, transverse_cutoff: int | None = None,
              tol_abs: float = TOL_ABS) -> TraceSeries:
    """Directional principal value trace along axis ``j``.

    Partial sums run over stripes ``|m_j| <= L/2``; the transverse axis is
    summed up to ``transverse_cutoff`` (or exactly when ``A`` is a
    ``StripeDensity``).

    Raises
    ------
    TailNotControlled
        If ``A`` declares no decay along the transverse axis and its
        diagonal does not vanish on the transverse cutoff.
    """
    if j not in (1, 2):
        raise ValueError("j must be 1 or 2")
    Ls = odd_sizes(L_max)
    h = L_max // 2
    if isinstance(A, StripeDensity):
        if A.axis != j:
            raise ValueError("stripe density is along a different axis")
        want = np.arange(-h, h + 1)
        pos = {int(c): i for i, c in enumerate(A.columns)}
        if any(int(c) not in pos for c in want):
            raise WindowTooSmall("stripe density does not cover |m_j| <= L_max/2")
        idx = np.array([pos[int(c)] for c in want])
        dens = A.density[idx]
        tails_col = A.tails[idx]
        ring = np.abs(want)
        per = np.bincount(ring, weights=dens.real, minlength=h + 1) \
            + 1j * np.bincount(ring, weights=dens.imag, minlength=h + 1)
        per_tail = np.bincount(ring, weights=tails_col, minlength=h + 1)
        values = np.cumsum(per)[Ls // 2]
        tails = np.cumsum(per_tail)[Ls // 2]
        if A.outer_tail is not None:
            tails = tails + np.array([A.outer_tail(int(L)) for L in Ls])
        return TraceSeries(f"stripe-{j}", Ls, values, tails, classify(values, tails, tol_abs))

    if transverse_cutoff is None:
        raise ValueError("transverse_cutoff is required for kernel operands")
    other = 2 if j == 1 else 1
    a = np.arange(-h, h + 1)
    b = np.arange(-transverse_cutoff, transverse_cutoff + 1)
    aa, bb = np.meshgrid(a, b, indexing="ij")
    sites = np.stack([aa.ravel(), bb.ravel()], axis=1) if j == 1 else \
        np.stack([bb.ravel(), aa.ravel()], axis=1)
    diag, tail = _diagonal(A, sites)
    edge = np.abs(sites[:, other - 1]) == transverse_cutoff
    if not _declares_decay(A, other) and np.abs(diag[edge]).max(initial=0.0) > 1e-12:
        raise TailNotControlled(
            f"no decay declared along axis {other} and the diagonal does not vanish at the cutoff")
    ring = np.abs(sites[:, j - 1])
    per = np.bincount(ring, weights=diag.real, minlength=h + 1) \
        + 1j * np.bincount(ring, weights=diag.imag, minlength=h + 1)
    values = np.cumsum(per)[Ls // 2]
    tails = np.full(len(Ls), float(tail))
    return TraceSeries(f"stripe-{j}", Ls, values, tails, classify(values, tails, tol_abs))


# ---------------------------------------------------------------- cyclicity


def cyclicity_residual(A: PeriodicKernel, B: PeriodicKernel) -> Estimate:
    """``|tau(AB) - tau(BA)|`` with the truncation bound of the two products.

    Only the ``(0,0)`` blocks of the products are formed.  Both traces are
    sums of ``tr(A_{0,n} B_{0,-n})`` and ``tr(B_{0,n} A_{0,-n})``; inside
    the common square every term is kept, so omitted terms pair an omitted
    block of ``A`` with one of ``B``.  Stored mass outside the common square
    is counted as omitted.
    """
    ab = compose_periodic(A, B, 0)
    ba = compose_periodic(B, A, 0)
    res = abs(tuv_periodic(ab) - tuv_periodic(ba))
    d = A.dim
    r = min(A.R, B.R)
    outside = lambda K: float(block_norms(K.blocks).sum() - block_norms(K.resized(r).blocks).sum())
    trunc = 2 * d * (A.bound + outside(A)) * (B.bound + outside(B))
    rounding = 8 * _EPS * d * holmgren_norm(A) * holmgren_norm(B)
    return Estimate(res, trunc + rounding)


# ---------------------------------------------------------------- Appendix-type identities


def switch_window_weights(switch: SwitchFunction, offsets: np.ndarray,
                          window: tuple[int, int] | None) -> np.ndarray:
    """``W(c) = sum_{m in window} (Lambda(m + c) - Lambda(m))``.

    Without a window the sum runs over all of Z, where it equals ``c``.
    """
    offsets = np.asarray(offsets, dtype=int)
    if window is None:
        return offsets.astype(float)
    lo, hi = window
    m = np.arange(lo, hi + 1)
    return (switch(m[None, :] + offsets[:, None]) - switch(m)[None, :]).sum(axis=1)


@dataclass
class IdentityCheck:
    """Both sides of one localization identity."""

    name: str
    lhs: complex
    rhs: complex
    bound: float

    @property
    def residual(self) -> float:
        return float(abs(self.lhs - self.rhs))

    @property
    def ok(self) -> bool:
        return self.residual <= self.bound

    def as_dict(self) -> dict:
        return {"name": self.name, "lhs_re": complex(self.lhs).real, "lhs_im": complex(self.lhs).imag,
                "rhs_re": complex(self.rhs).real, "rhs_im": complex(self.rhs).imag,
                "residual": self.residual, "bound": self.bound}


def _loc12(A: PeriodicKernel, B: PeriodicKernel, C: PeriodicKernel, lam1: SwitchFunction,
           lam2: SwitchFunction, window: tuple[tuple[int, int], tuple[int, int]] | None
           ) -> IdentityCheck:
    """``Tr([A,L1] B [C,L2])`` against ``-tr(A X1 B X2 C)_{0,0}`` for periodic A, B, C.

    With ``n = m + a`` and ``p = m + b`` the left side is
    ``sum_{a,b} K1(a1) K2(b2) tr(A_{0,a} B_{0,b-a} C_{0,-b})`` where ``K1, K2``
    are switch sums over the window; over all of Z they become ``a1`` and
    ``-b2``.
    """
    w1 = w2 = None
    if window is not None:
        w1, w2 = window
    r = np.arange(-A.R, A.R + 1)
    k1 = switch_window_weights(lam1, r, w1)
    AK = PeriodicKernel(A.blocks * k1[:, None, None, None])
    AX = PeriodicKernel(A.blocks * r[:, None, None, None].astype(float))
    F = compose_periodic(AK, B)
    G = compose_periodic(AX, B)
    Rf = F.R
    rb = np.arange(-Rf, Rf + 1)
    k2 = -switch_window_weights(lam2, rb, w2)
    Cr = C.resized(Rf).blocks[::-1, ::-1]
    terms_l = np.einsum("abij,abji->ab", F.blocks, Cr) * k2[None, :]
    terms_r = np.einsum("abij,abji->ab", G.blocks, Cr) * rb[None, :]
    lhs = terms_l.sum()
    rhs = -terms_r.sum()
    # omitted window contributions, bounded term by term
    absF = np.einsum("abij,abji->ab", np.abs(compose_periodic(
        PeriodicKernel(np.abs(A.blocks) * np.abs(k1 - r)[:, None, None, None]),
        PeriodicKernel(np.abs(B.blocks))).blocks), np.abs(Cr)).real
    omitted = float((absF * np.abs(rb)[None, :]).sum())
    dK2 = np.abs(k2 + rb)
    absG = np.einsum("abij,abji->ab", np.abs(compose_periodic(
        PeriodicKernel(np.abs(A.blocks) * np.abs(r)[:, None, None, None]),
        PeriodicKernel(np.abs(B.blocks))).blocks), np.abs(Cr)).real
    omitted += float((absG * dK2[None, :]).sum())
    scale = float(np.abs(terms_l).sum() + np.abs(terms_r).sum())
    return IdentityCheck("loc12", lhs, rhs, omitted + 64 * _EPS * max(scale, 1.0))


def _line_ops(P: PeriodicKernel, lam1: SwitchFunction, columns: np.ndarray, M2: int):
    """Box matrices (per k2) of P and of [P, Lambda_1]."""
    Pl = box_matrix(line_kernels(P, M2), columns)
    lam = np.kron(lam1(columns), np.ones(P.dim))
    comm = Pl * (lam[None, :] - lam[:, None])[None]
    return Pl, comm


def _offsets_from_k(F: np.ndarray) -> np.ndarray:
    """Axis-2 offset components ``F_e`` from samples ``F(k2)`` (index ``e mod M2``)."""
    return np.fft.fft(F, axis=0) / F.shape[0]


def _loc2(P: PeriodicKernel, s: np.ndarray, lam1: SwitchFunction, lam2: SwitchFunction,
          window: tuple[int, int] | None, variant: int) -> IdentityCheck:
    """``Tr(A [B,L2] C)`` against ``-Tr(A X2 B chi_{2,1} C)`` on a column box.

    ``A = [P,L1] S``; ``B = P_perp, C = [P,L1]`` (variant 0) or
    ``B = P, C = P [P,L1]`` (variant 1).  All three are periodic along
    axis 2 and handled as box matrices per momentum ``k2``.
    """
    R = P.R
    if lam1.axis != 1 or lam2.axis != 2:
        raise ValueError("loc2 expects Lambda_1 on axis 1 and Lambda_2 on axis 2")
    columns = np.arange(lam1.n_minus - 2 * R - 1, lam1.n_plus + 2 * R + 1)
    M2 = 6 * R + 1
    Pl, comm = _line_ops(P, lam1, columns, M2)
    S = np.kron(np.eye(len(columns)), s)
    A = comm @ S
    eye = np.eye(Pl.shape[-1])
    if variant == 0:
        B, C = eye[None] - Pl, comm
    else:
        B, C = Pl, Pl @ comm
    AB, BC = A @ B, B @ C
    # offset components along axis 2, index e mod M2
    ABe, Ce = _offsets_from_k(AB), _offsets_from_k(C)
    Ae, BCe = _offsets_from_k(A), _offsets_from_k(BC)
    e = np.arange(M2)
    e = np.where(e > M2 // 2, e - M2, e)
    neg = (-e) % M2
    t1 = np.einsum("eij,eji->e", ABe, Ce[neg])   # Tr1[(AB)_e C_{-e}]
    t2 = np.einsum("eij,eji->e", Ae, BCe[neg])   # Tr1[A_d (BC)_{-d}]
    W = switch_window_weights(lam2, e, window)
    lhs = (W * t1).sum() - (W * t2).sum()
    rhs = (e * t1).sum() - (e * t2).sum()
    omitted = float((np.abs(W - e) * (np.abs(t1) + np.abs(t2))).sum())
    scale = float((np.abs(e) * (np.abs(t1) + np.abs(t2))).sum())
    return IdentityCheck(f"loc2[{variant}]", lhs, rhs, omitted + 64 * _EPS * max(scale, 1.0) * M2)


@dataclass
class LocalizationResiduals:
    checks: list[IdentityCheck]

    @property
    def loc12(self) -> IdentityCheck:
        return next(c for c in self.checks if c.name == "loc12")

    @property
    def loc2(self) -> list[IdentityCheck]:
        return [c for c in self.checks if c.name.startswith("loc2")]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def residual_pair(self) -> tuple[float, float]:
        return max(c.residual for c in self.loc2), self.loc12.residual


def verify_localization_identities(P: PeriodicKernel, lam1: SwitchFunction, lam2: SwitchFunction,
                                   spin: np.ndarray | None = None,
                                   window: tuple[tuple[int, int], tuple[int, int]] | None = None
                                   ) -> LocalizationResiduals:
    """Evaluate both sides of the switch-to-position identities.

    Two identities are checked for operators built from ``P``:

    * ``Tr([P,L1] S P_perp [P,L2]) = -tr(P X1 S P_perp X2 P)_{0,0}`` (loc12);
    * ``Tr(A [B,L2] C) = -Tr(A X2 B chi_{2,1} C)`` with ``A = [P,L1] S`` and
      two choices of ``B, C`` (loc2).

    Left sides are windowed sums over ``window = ((lo1, hi1), (lo2, hi2))``
    (all of Z when omitted, exact for truncated kernels).  Each check
    carries the term-by-term bound on contributions missed by the window
    plus a rounding allowance.
    """
    if spin is None:
        spin = 0.5 * np.kron(np.eye(P.dim // 2), np.diag([1.0, -1.0]))
    if lam1.axis != 1 or lam2.axis != 2:
        raise ValueError("switches must act on axes 1 and 2")
    Pperp = PeriodicKernel.identity(P.dim) - P
    Pperp = Pperp.resized(P.R)
    checks = [_loc12(P, Pperp.left_internal(spin), P, lam1, lam2, window)]
    w2 = None if window is None else window[1]
    for variant in (0, 1):
        checks.append(_loc2(P, spin, lam1, lam2, w2, variant))
    return LocalizationResiduals(checks)
