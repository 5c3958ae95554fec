"""Bloch-fiber diagonalization, gap detection and the Fermi-projection kernel."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AliasingRisk, DegenerateFit, GapClosed
from .kernel_algebra import PeriodicKernel, block_norms, compose_periodic, tail_bound
from .lattice_model import HoppingKernel, bloch_fibers

GAP_TOLERANCE = 1e-8


@dataclass(frozen=True)
class BZGrid:
    """Uniform grid ``k_ij = 2 pi (i, j) / M``, ``0 <= i, j < M``."""

    M: int
    require_div3: bool = False

    def __post_init__(self):
        if self.M < 2:
            raise ValueError("M must be at least 2")
        if self.require_div3 and self.M % 3:
            raise ValueError("M must be divisible by 3 to contain the Dirac momenta")

    def momenta(self) -> tuple[np.ndarray, np.ndarray]:
        k = 2 * np.pi * np.arange(self.M) / self.M
        return np.meshgrid(k, k, indexing="ij")


def max_radius(M: int) -> int:
    """Largest truncation radius with ``R < M / 2``."""
    return (M - 1) // 2


def default_radius(M: int, zeta: float | None = None) -> int:
    """``min(M/2 - 1, ceil(36 zeta))``, or ``M/2 - 1`` before ``zeta`` is known."""
    r = max(M // 2 - 1, 1) if M % 2 == 0 else max_radius(M)
    if zeta is None or not np.isfinite(zeta) or zeta <= 0:
        return r
    return int(min(r, max(math.ceil(36 * zeta), 1)))


def band_spectrum(kernel: HoppingKernel, grid: BZGrid) -> np.ndarray:
    """Ascending fiber eigenvalues, shape ``(M*M, 2N)`` with row ``i*M + j``."""
    if not kernel.is_hermitian(1e-12):
        raise ValueError("kernel is not Hermitian")
    k1, k2 = grid.momenta()
    return np.linalg.eigvalsh(bloch_fibers(kernel, k1, k2)).reshape(grid.M ** 2, kernel.dim)


@dataclass(frozen=True)
class GapInfo:
    """Spectral gap ``(a, b)`` around the Fermi level ``mu``."""

    a: float
    b: float
    mu: float
    filled_bands: int

    @property
    def width(self) -> float:
        return self.b - self.a

    def as_dict(self) -> dict:
        return {"a": self.a, "b": self.b, "mu": self.mu, "filled_bands": self.filled_bands,
                "width": self.width}


def detect_gap(bands: np.ndarray, filled_bands: int, mu: float | None = None,
               tolerance: float = GAP_TOLERANCE) -> GapInfo:
    """Gap between band ``filled_bands`` and ``filled_bands + 1`` over all k.

    Raises
    ------
    GapClosed
        If the gap is at most ``tolerance`` or ``mu`` lies outside it.
    """
    bands = np.asarray(bands)
    n = bands.shape[-1]
    if not 1 <= filled_bands < n:
        raise ValueError(f"filled_bands must lie in [1, {n - 1}]")
    a = float(bands[..., filled_bands - 1].max())
    b = float(bands[..., filled_bands].min())
    if b - a <= tolerance:
        raise GapClosed(f"gap {b - a:.3e} at filling {filled_bands} is below {tolerance:g}")
    if mu is None:
        mu = 0.5 * (a + b)
    elif not a < mu < b:
        raise GapClosed(f"mu={mu} lies outside the gap ({a}, {b})")
    return GapInfo(a, b, float(mu), filled_bands)


def _divided_differences(E: np.ndarray, occ: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """First and second divided differences of the step function ``E < mu``.

    Only pairs and triples straddling the gap contribute, so denominators
    never vanish for a gapped spectrum.
    """
    f = occ.astype(float)
    Ei, Ej = E[..., :, None], E[..., None, :]
    cross = occ[..., :, None] != occ[..., None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        f1 = np.where(cross, (f[..., :, None] - f[..., None, :]) / np.where(cross, Ei - Ej, 1.0), 0.0)
    # f2[i, l, j]
    oi, ol, oj = occ[..., :, None, None], occ[..., None, :, None], occ[..., None, None, :]
    ei, el, ej = E[..., :, None, None], E[..., None, :, None], E[..., None, None, :]
    fi, fl, fj = f[..., :, None, None], f[..., None, :, None], f[..., None, None, :]
    safe = lambda x: np.where(np.abs(x) > 0, x, 1.0)
    case_a = (oi == oj) & (ol != oi)
    case_b = (oi == ol) & (oj != oi)
    case_c = (ol == oj) & (oi != ol)
    f2 = np.zeros(np.broadcast_shapes(ei.shape, el.shape, ej.shape))
    f2 = np.where(case_a, (fi - fl) / safe((ei - el) * (el - ej)), f2)
    f2 = np.where(case_b, -(fl - fj) / safe((el - ej) * (ei - ej)), f2)
    f2 = np.where(case_c, (fi - fl) / safe((ei - el) * (ei - ej)), f2)
    return f1, f2


@dataclass
class FermiFibers:
    """Fermi projectors ``P(k)`` on a grid, with the eigen-data behind them."""

    kernel: HoppingKernel
    grid: BZGrid
    gap: GapInfo
    energies: np.ndarray
    vectors: np.ndarray
    projectors: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def M(self) -> int:
        return self.grid.M

    @property
    def dim(self) -> int:
        return self.kernel.dim

    def _rotated(self, derivative: tuple[int, int]) -> np.ndarray:
        key = ("h", derivative)
        if key not in self._cache:
            k1, k2 = self.grid.momenta()
            h = bloch_fibers(self.kernel, k1, k2, derivative)
            v = self.vectors
            self._cache[key] = np.conj(np.swapaxes(v, -1, -2)) @ h @ v
        return self._cache[key]

    def _dd(self):
        if "dd" not in self._cache:
            self._cache["dd"] = _divided_differences(self.energies, self.energies < self.gap.mu)
        return self._cache["dd"]

    def derivative(self, a: int, b: int = 0) -> np.ndarray:
        """Analytic ``d_a P(k)`` (``b = 0``) or ``d_a d_b P(k)`` for axes ``a, b`` in {1, 2}.

        Uses the Daleckii-Krein expansion of ``P = f(H(k))`` in the
        eigenbasis; exact up to rounding because ``f`` is locally constant
        on the spectrum.
        """
        key = ("dP", a, b)
        if key in self._cache:
            return self._cache[key]
        f1, f2 = self._dd()
        ea = (1, 0) if a == 1 else (0, 1)
        ha = self._rotated(ea)
        if b == 0:
            inner = f1 * ha
        else:
            eb = (1, 0) if b == 1 else (0, 1)
            hb = self._rotated(eb)
            hab = self._rotated((ea[0] + eb[0], ea[1] + eb[1]))
            inner = f1 * hab + np.einsum("...ilj,...il,...lj->...ij", f2, ha, hb) \
                + np.einsum("...ilj,...il,...lj->...ij", f2, hb, ha)
        v = self.vectors
        out = v @ inner @ np.conj(np.swapaxes(v, -1, -2))
        self._cache[key] = out
        return out

    def rank(self) -> np.ndarray:
        return np.trace(self.projectors, axis1=-2, axis2=-1).real

    def idempotency_residual(self) -> float:
        P = self.projectors
        return float(np.abs(P @ P - P).max())


def fermi_fibers(kernel: HoppingKernel, grid: BZGrid, gap: GapInfo) -> FermiFibers:
    """Spectral projectors onto states below ``gap.mu`` at every grid momentum.

    Raises
    ------
    GapClosed
        If an eigenvalue lies within ``GAP_TOLERANCE`` of ``mu`` or the
        occupied rank varies over the grid.
    """
    k1, k2 = grid.momenta()
    E, V = np.linalg.eigh(bloch_fibers(kernel, k1, k2))
    if np.any(np.abs(E - gap.mu) <= GAP_TOLERANCE):
        raise GapClosed("an eigenvalue lies at the Fermi level")
    occ = E < gap.mu
    if not np.all(occ.sum(axis=-1) == gap.filled_bands):
        raise GapClosed("occupied rank is not constant over the grid")
    Vo = V[..., :gap.filled_bands]
    P = Vo @ np.conj(np.swapaxes(Vo, -1, -2))
    return FermiFibers(kernel, grid, gap, E, V, P)


def solve_fibers(kernel: HoppingKernel, M: int, filled_bands: int | None = None,
                 mu: float | None = None) -> FermiFibers:
    """Grid, gap detection and projectors in one call (half filling by default)."""
    grid = BZGrid(M)
    if filled_bands is None:
        filled_bands = kernel.dim // 2
    gap = detect_gap(band_spectrum(kernel, grid).reshape(M, M, -1), filled_bands, mu)
    return fermi_fibers(kernel, grid, gap)


@dataclass
class DecayFit:
    """Envelope ``||P_{0,n}|| <= C exp(-||n||_1 / zeta)`` fitted over shell maxima."""

    C: float
    zeta: float
    r_squared: float
    shells: np.ndarray
    maxima: np.ndarray
    C_regression: float

    def as_dict(self) -> dict:
        return {"C": self.C, "zeta": self.zeta, "r_squared": self.r_squared,
                "C_regression": self.C_regression}


@dataclass
class FermiProjectionKernel(PeriodicKernel):
    """Truncated Fermi-projection kernel ``P_{0,n}``, ``||n||_inf <= R``."""

    M: int = 0
    mu: float = 0.0
    fit: DecayFit | None = None
    fibers: FermiFibers | None = field(default=None, repr=False)

    @property
    def tail_estimate(self) -> float:
        return self.bound


def shell_maxima(K: PeriodicKernel, start: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Max block norm on each complete shell ``||n||_1 = s`` for ``start <= s <= R``."""
    n1, n2 = K.offsets()
    s = np.abs(n1) + np.abs(n2)
    norms = block_norms(K.blocks)
    shells = np.arange(start, K.R + 1)
    maxima = np.array([norms[s == r].max() for r in shells])
    return shells, maxima


def decay_profile(P: PeriodicKernel) -> DecayFit:
    """Least-squares fit of ``log max_{||n||_1 = s} ||P_{0,n}||`` against ``s``.

    Shells 0 and 1 are skipped.  ``C`` is the smallest prefactor for which
    the fitted slope bounds every fitted shell; ``r_squared`` is the
    regression quality.

    Raises
    ------
    DegenerateFit
        If every off-diagonal block is below ``1e-15``.
    """
    if P.R < 4:
        raise ValueError("decay_profile needs R >= 4")
    shells, maxima = shell_maxima(P, start=2)
    _, all_max = shell_maxima(P, start=1)
    if np.all(all_max < 1e-15):
        raise DegenerateFit("all off-diagonal blocks vanish (atomic limit)")
    keep = maxima > 1e-15
    if keep.sum() < 2:
        raise DegenerateFit("fewer than two shells above 1e-15")
    x, y = shells[keep].astype(float), np.log(maxima[keep])
    slope, intercept = np.polyfit(x, y, 1)
    if slope >= 0:
        raise DegenerateFit("shell maxima do not decrease")
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - float((resid ** 2).sum()) / ss_tot if ss_tot > 0 else 1.0
    zeta = -1.0 / slope
    C = float(np.exp((y + x / zeta).max()))
    return DecayFit(C, float(zeta), r2, shells, maxima, float(np.exp(intercept)))


def projection_kernel(fibers: FermiFibers, R: int | None = None) -> FermiProjectionKernel:
    """``P_{0,n} = M^-2 sum_k exp(-i k.n) P(k)`` for ``||n||_inf <= R``.

    Without ``R`` a first pass at the largest safe radius fixes the decay
    length and ``R = min(M/2 - 1, ceil(36 zeta))`` is used.

    Raises
    ------
    AliasingRisk
        If ``R >= M / 2``.
    """
    M = fibers.M
    if R is None:
        first = projection_kernel(fibers, default_radius(M))
        R = default_radius(M, first.fit.zeta if first.fit else None)
    if 2 * R >= M:
        raise AliasingRisk(f"R={R} is not below M/2={M / 2}")
    full = np.fft.fft2(fibers.projectors, axes=(0, 1)) / M ** 2
    r = np.arange(-R, R + 1)
    blocks = full[np.ix_(r % M, r % M)]
    kern = FermiProjectionKernel(blocks, M=M, mu=fibers.gap.mu, fibers=fibers)
    if R >= 4:
        try:
            kern.fit = decay_profile(kern)
            kern.bound = tail_bound(kern.fit.C, kern.fit.zeta, R)
        except DegenerateFit:
            kern.fit = None
    return kern


def idempotency_residual(P: PeriodicKernel, radius: int | None = None) -> float:
    """``max ||(P P - P)_{0,n}||`` over ``||n||_inf <= radius`` (default ``R/2``)."""
    if radius is None:
        radius = P.R // 2
    sq = compose_periodic(P, P, P.R)
    diff = (sq - P).resized(radius)
    return float(block_norms(diff.blocks).max())
