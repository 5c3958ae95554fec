"""Operator kernels on Z^2: periodic kernels, offset-periodic kernels, windows.

A periodic kernel ``A`` is stored through its row ``A_{0,n}`` for
``||n||_inf <= R``; the operator is ``A_{m,n} = A_{0,n-m}``.  Every kernel
carries ``bound``, an estimate of the Holmgren norm of the difference
between the stored truncation and the operator it stands for.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping

import numpy as np

from .errors import OddnessViolated, WindowTooSmall
from .lattice_model import HoppingKernel, SwitchFunction

Offset = tuple[int, int]


def block_norms(blocks: np.ndarray) -> np.ndarray:
    """Spectral norms of a stack of square blocks (last two axes)."""
    if blocks.size == 0:
        return np.zeros(blocks.shape[:-2])
    return np.linalg.norm(blocks, ord=2, axis=(-2, -1))


@dataclass
class PeriodicKernel:
    """Kernel row ``A_{0,n}`` on the square ``||n||_inf <= R``.

    ``blocks[n1 + R, n2 + R]`` holds ``A_{0,(n1,n2)}``.
    """

    blocks: np.ndarray
    bound: float = 0.0

    def __post_init__(self):
        b = np.asarray(self.blocks, dtype=complex)
        if b.ndim != 4 or b.shape[0] != b.shape[1] or b.shape[0] % 2 != 1 or b.shape[2] != b.shape[3]:
            raise ValueError(f"blocks must have shape (2R+1, 2R+1, d, d), got {b.shape}")
        self.blocks = b

    @property
    def R(self) -> int:
        return (self.blocks.shape[0] - 1) // 2

    @property
    def dim(self) -> int:
        return self.blocks.shape[2]

    # ------------------------------------------------------------ builders

    @classmethod
    def zeros(cls, R: int, dim: int) -> "PeriodicKernel":
        return cls(np.zeros((2 * R + 1, 2 * R + 1, dim, dim), dtype=complex))

    @classmethod
    def identity(cls, dim: int) -> "PeriodicKernel":
        k = cls.zeros(0, dim)
        k.blocks[0, 0] = np.eye(dim)
        return k

    @classmethod
    def from_dict(cls, blocks: Mapping[Offset, np.ndarray], dim: int | None = None,
                  R: int | None = None) -> "PeriodicKernel":
        if dim is None:
            dim = next(iter(blocks.values())).shape[0]
        if R is None:
            R = max((max(abs(d[0]), abs(d[1])) for d in blocks), default=0)
        k = cls.zeros(R, dim)
        for d, b in blocks.items():
            if max(abs(d[0]), abs(d[1])) <= R:
                k.blocks[d[0] + R, d[1] + R] += b
        return k

    @classmethod
    def from_hopping(cls, kernel: HoppingKernel) -> "PeriodicKernel":
        return cls.from_dict(kernel.hoppings, dim=kernel.dim, R=kernel.max_offset)

    # ------------------------------------------------------------ access

    def block(self, n: Offset) -> np.ndarray:
        R = self.R
        if abs(n[0]) > R or abs(n[1]) > R:
            return np.zeros((self.dim, self.dim), dtype=complex)
        return self.blocks[n[0] + R, n[1] + R]

    def offsets(self) -> np.ndarray:
        """Grids ``(N1, N2)`` of offsets matching ``blocks``."""
        r = np.arange(-self.R, self.R + 1)
        return np.meshgrid(r, r, indexing="ij")

    def items(self) -> Iterator[tuple[Offset, np.ndarray]]:
        """Offsets and blocks with a nonzero entry, in lexicographic order."""
        R = self.R
        nz = np.argwhere(np.any(self.blocks != 0, axis=(2, 3)))
        for i, j in nz:
            yield (int(i) - R, int(j) - R), self.blocks[i, j]

    def to_dict(self) -> dict[Offset, np.ndarray]:
        return {d: b.copy() for d, b in self.items()}

    def resized(self, R_out: int) -> "PeriodicKernel":
        """Pad with zeros or truncate to radius ``R_out``; truncation adds the dropped mass to ``bound``."""
        R = self.R
        if R_out >= R:
            p = R_out - R
            b = np.pad(self.blocks, ((p, p), (p, p), (0, 0), (0, 0)))
            return PeriodicKernel(b, self.bound)
        c = R - R_out
        kept = self.blocks[c:c + 2 * R_out + 1, c:c + 2 * R_out + 1]
        dropped = block_norms(self.blocks).sum() - block_norms(kept).sum()
        return PeriodicKernel(kept.copy(), self.bound + max(float(dropped), 0.0))

    # ------------------------------------------------------------ algebra

    def adjoint(self) -> "PeriodicKernel":
        """``(A^dagger)_{0,n} = (A_{0,-n})^dagger``."""
        return PeriodicKernel(np.conj(self.blocks[::-1, ::-1]).swapaxes(-1, -2), self.bound)

    def _aligned(self, other: "PeriodicKernel") -> tuple[np.ndarray, np.ndarray]:
        R = max(self.R, other.R)
        return self.resized(R).blocks, other.resized(R).blocks

    def __add__(self, other: "PeriodicKernel") -> "PeriodicKernel":
        a, b = self._aligned(other)
        return PeriodicKernel(a + b, self.bound + other.bound)

    def __sub__(self, other: "PeriodicKernel") -> "PeriodicKernel":
        a, b = self._aligned(other)
        return PeriodicKernel(a - b, self.bound + other.bound)

    def __neg__(self) -> "PeriodicKernel":
        return PeriodicKernel(-self.blocks, self.bound)

    def scaled(self, c: complex) -> "PeriodicKernel":
        return PeriodicKernel(c * self.blocks, abs(c) * self.bound)

    def weighted(self, w: Callable[[np.ndarray, np.ndarray], np.ndarray],
                 growth: float = 0.0) -> "PeriodicKernel":
        """Multiply block ``n`` by ``w(n1, n2)``.

        ``growth`` scales the attached bound (an upper bound of ``|w|`` on
        the omitted tail is not available in general, so callers pass one).
        """
        n1, n2 = self.offsets()
        return PeriodicKernel(self.blocks * w(n1, n2)[..., None, None], self.bound * growth)

    def right_internal(self, s: np.ndarray) -> "PeriodicKernel":
        """Kernel of ``A S`` for an on-site internal matrix ``S``."""
        return PeriodicKernel(self.blocks @ s, self.bound * float(np.linalg.norm(s, 2)))

    def left_internal(self, s: np.ndarray) -> "PeriodicKernel":
        """Kernel of ``S A`` for an on-site internal matrix ``S``."""
        return PeriodicKernel(s @ self.blocks, self.bound * float(np.linalg.norm(s, 2)))

    def fourier(self, k1, k2) -> np.ndarray:
        """``A(k) = sum_n exp(i k.n) A_{0,n}`` for broadcastable momenta."""
        k1, k2 = np.broadcast_arrays(np.asarray(k1, float), np.asarray(k2, float))
        n1, n2 = self.offsets()
        ph = np.exp(1j * (np.multiply.outer(k1, n1.ravel()) + np.multiply.outer(k2, n2.ravel())))
        return np.einsum("...n,nij->...ij", ph, self.blocks.reshape(-1, self.dim, self.dim))

    def grid_fibers(self, M: int) -> np.ndarray:
        """Fibers on the ``M x M`` grid ``k = 2 pi (i, j) / M``, shape ``(M, M, d, d)``.

        Offsets are folded modulo ``M``; this is exact when ``2R < M``.
        """
        acc = np.zeros((M, M, self.dim, self.dim), dtype=complex)
        n1, n2 = self.offsets()
        np.add.at(acc, (n1 % M, n2 % M), self.blocks)
        return np.fft.ifft2(acc, axes=(0, 1)) * M * M


def compose_periodic(A: PeriodicKernel, B: PeriodicKernel, R_out: int | None = None) -> PeriodicKernel:
    """Kernel of ``A B``: ``(AB)_{0,n} = sum_p A_{0,p} B_{0,n-p}``.

    The convolution is exact over the stored supports and truncated to
    ``||n||_inf <= R_out`` (default ``R_A + R_B``).  The attached bound
    combines the input bounds with the exactly computed dropped mass.
    """
    RA, RB = A.R, B.R
    if R_out is None:
        R_out = RA + RB
    if R_out > RA + RB:
        raise ValueError("R_out must not exceed R_A + R_B")
    Rf = RA + RB
    d = A.dim
    out = np.zeros((2 * Rf + 1, 2 * Rf + 1, d, d), dtype=complex)
    for (p1, p2), a in A.items():
        out[p1 + RA:p1 + RA + 2 * RB + 1, p2 + RA:p2 + RA + 2 * RB + 1] += a @ B.blocks
    full = PeriodicKernel(out)
    hA, hB = holmgren_norm(A), holmgren_norm(B)
    res = full.resized(R_out)
    res.bound += A.bound * hB + hA * B.bound + A.bound * B.bound
    return res


def compose_chain(kernels: list[PeriodicKernel], R_final: int, R_margin: int) -> PeriodicKernel:
    """Left-to-right product with intermediate radius ``R_final + R_margin``."""
    acc = kernels[0]
    for k in kernels[1:-1]:
        acc = compose_periodic(acc, k, min(R_final + R_margin, acc.R + k.R))
    return compose_periodic(acc, kernels[-1], min(R_final, acc.R + kernels[-1].R))


def commutator_position(A: PeriodicKernel, j: int) -> PeriodicKernel:
    """Kernel of ``[A, X_j]``: blocks ``n_j A_{0,n}``."""
    if j not in (1, 2):
        raise ValueError("j must be 1 or 2")
    growth = A.R + 1.0
    return A.weighted(lambda n1, n2: (n1 if j == 1 else n2).astype(float), growth=growth)


def commutator_internal(A: PeriodicKernel, s: np.ndarray) -> PeriodicKernel:
    """Kernel of ``[A, S]`` for an on-site matrix ``S``: blocks ``A_{0,n} S - S A_{0,n}``."""
    return PeriodicKernel(A.blocks @ s - s @ A.blocks, 2 * A.bound * float(np.linalg.norm(s, 2)))


@dataclass
class OffsetPeriodicKernel:
    """Operator ``A_{m,n} = A0_{0,n-m} + g(m) B_{0,n-m}``.

    Parameters
    ----------
    periodic, correction : PeriodicKernel
    g : callable
        Offset function of ``m = (m1, m2)`` (arrays allowed).
    odd_axis : int
        Axis ``j`` in which ``g`` is odd.
    """

    periodic: PeriodicKernel
    correction: PeriodicKernel
    g: Callable[[np.ndarray, np.ndarray], np.ndarray]
    odd_axis: int
    linear: bool = False

    def block(self, m: Offset, n: Offset) -> np.ndarray:
        d = (n[0] - m[0], n[1] - m[1])
        return self.periodic.block(d) + self.g(np.asarray(m[0]), np.asarray(m[1])) * self.correction.block(d)

    def check_oddness(self, radius: int = 7) -> None:
        """Raise ``OddnessViolated`` unless ``g`` is odd in ``odd_axis`` on samples."""
        r = np.arange(-radius, radius + 1)
        m1, m2 = np.meshgrid(r, r, indexing="ij")
        if self.odd_axis == 1:
            flipped = self.g(-m1, m2)
        elif self.odd_axis == 2:
            flipped = self.g(m1, -m2)
        else:
            raise OddnessViolated(f"invalid odd axis {self.odd_axis}")
        base = np.broadcast_to(self.g(m1, m2), m1.shape)
        if not np.allclose(np.broadcast_to(flipped, m1.shape), -base, atol=1e-14, rtol=0):
            raise OddnessViolated(f"offset function is not odd in axis {self.odd_axis}")


def commutator_position_spin(A: PeriodicKernel, j: int, s: np.ndarray) -> OffsetPeriodicKernel:
    """``[A, X_j S] = [A, X_j] S + X_j [A, S]`` split into periodic and odd parts.

    Row ``m`` of the operator is ``n_j A_{0,n-m} S - m_j S A_{0,n-m}``, which
    equals the periodic part ``d_j A_{0,d} S`` plus ``m_j [A,S]_{0,d}``
    (``d = n - m``), so ``g(m) = +m_j``.
    """
    periodic = commutator_position(A, j).right_internal(s)
    correction = commutator_internal(A, s)
    return OffsetPeriodicKernel(periodic, correction, _position_function(j), odd_axis=j, linear=True)


def _position_function(j: int) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    return (lambda m1, m2: np.asarray(m1) * 1.0) if j == 1 else (lambda m1, m2: np.asarray(m2) * 1.0)


def _require_linear(Y: OffsetPeriodicKernel) -> None:
    if not Y.linear:
        raise ValueError("products are implemented for g(m) = m_j only")


def offset_left_multiply(A: PeriodicKernel, Y: OffsetPeriodicKernel,
                         R_out: int | None = None) -> OffsetPeriodicKernel:
    """``A (Y0 + X_j B) = (A Y0 + [A, X_j] B) + X_j (A B)``."""
    _require_linear(Y)
    j = Y.odd_axis
    per = compose_periodic(A, Y.periodic, R_out) + compose_periodic(commutator_position(A, j),
                                                                  Y.correction, R_out)
    return OffsetPeriodicKernel(per, compose_periodic(A, Y.correction, R_out), Y.g, j, True)


def offset_right_multiply(Y: OffsetPeriodicKernel, A: PeriodicKernel,
                          R_out: int | None = None) -> OffsetPeriodicKernel:
    """``(Y0 + X_j B) A = Y0 A + X_j (B A)``."""
    _require_linear(Y)
    return OffsetPeriodicKernel(compose_periodic(Y.periodic, A, R_out),
                                compose_periodic(Y.correction, A, R_out), Y.g, Y.odd_axis, True)


def offset_combine(Y: OffsetPeriodicKernel, Z: OffsetPeriodicKernel, cz: complex = 1.0,
                   cy: complex = 1.0) -> OffsetPeriodicKernel:
    """``cy Y + cz Z`` for kernels sharing the same offset function."""
    _require_linear(Y)
    _require_linear(Z)
    if Y.odd_axis != Z.odd_axis:
        raise ValueError("offset functions differ")
    return OffsetPeriodicKernel(Y.periodic.scaled(cy) + Z.periodic.scaled(cz),
                                Y.correction.scaled(cy) + Z.correction.scaled(cz),
                                Y.g, Y.odd_axis, True)


def holmgren_norm(A) -> float:
    """Max of sup-row and sup-column sums of block norms.

    For a periodic kernel the row sum is ``sum_n ||A_{0,n}||`` and the column
    sum is the same set of blocks, so both coincide.
    """
    if isinstance(A, PeriodicKernel):
        return float(block_norms(A.blocks).sum())
    if isinstance(A, WindowKernel):
        norms = block_norms(A.block_array())
        return float(max(norms.sum(axis=1).max(initial=0.0), norms.sum(axis=0).max(initial=0.0)))
    if isinstance(A, HoppingKernel):
        return float(sum(np.linalg.norm(b, 2) for b in A.hoppings.values()))
    raise TypeError(f"unsupported kernel type {type(A).__name__}")


def tail_bound(C: float, zeta: float, radius: int, moment: int = 0) -> float:
    """Bound on ``sum_{||n||_inf > radius} C ||n||_1^moment exp(-||n||_1 / zeta)``.

    With ``q = exp(-1/zeta)`` the full lattice sum factorizes into 1D
    geometric series ``sum_{n in Z} q^|n| = (1 + q) / (1 - q)``; the sum over
    the square ``||n||_inf <= radius`` is subtracted in closed form.  A
    positive ``moment`` is handled by summing shells of ``||n||_1``
    explicitly until the remainder is below double precision.
    """
    if zeta <= 0:
        raise ValueError("zeta must be positive")
    q = np.exp(-1.0 / zeta)
    if moment == 0:
        full = ((1 + q) / (1 - q)) ** 2
        inner = (1 + 2 * q * (1 - q ** radius) / (1 - q)) ** 2
        return float(C * max(full - inner, 0.0))
    # ||n||_inf > radius implies ||n||_1 > radius; shells have at most 4 s points
    total = 0.0
    s = radius + 1
    while True:
        term = 4 * s * s ** moment * q ** s
        total += term
        if term < 1e-18 * max(total, 1e-300) or s > radius + 20000:
            break
        s += 1
    return float(C * total)


# ---------------------------------------------------------------- windows


@dataclass
class WindowKernel:
    """Dense kernel restricted to a finite set of sites.

    ``matrix`` is indexed by ``(site, internal)`` pairs with the internal
    index fastest.  ``decay_axes`` lists the axes along which the kernel is
    known to be confined; ``tail`` estimates the omitted mass.
    """

    sites: np.ndarray
    matrix: np.ndarray
    dim: int
    decay_axes: tuple[int, ...] = ()
    tail: float = 0.0
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.sites = np.asarray(self.sites, dtype=int).reshape(-1, 2)
        self._index = {(int(a), int(b)): i for i, (a, b) in enumerate(self.sites)}

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    def block_array(self) -> np.ndarray:
        ns, d = self.n_sites, self.dim
        return self.matrix.reshape(ns, d, ns, d).swapaxes(1, 2)

    def block(self, m: Offset, n: Offset) -> np.ndarray:
        i, j = self._index.get(tuple(m)), self._index.get(tuple(n))
        if i is None or j is None:
            return np.zeros((self.dim, self.dim), dtype=complex)
        d = self.dim
        return self.matrix[i * d:(i + 1) * d, j * d:(j + 1) * d]

    def diagonal_traces(self) -> np.ndarray:
        """``tr A_{m,m}`` for every site in order."""
        ns, d = self.n_sites, self.dim
        return np.einsum("aiai->a", self.matrix.reshape(ns, d, ns, d))

    def __matmul__(self, other: "WindowKernel") -> "WindowKernel":
        if not np.array_equal(self.sites, other.sites):
            raise ValueError("window kernels must share their site list")
        axes = tuple(sorted(set(self.decay_axes) | set(other.decay_axes)))
        return WindowKernel(self.sites, self.matrix @ other.matrix, self.dim, axes,
                            self.tail + other.tail)

    def __add__(self, other: "WindowKernel") -> "WindowKernel":
        axes = tuple(sorted(set(self.decay_axes) & set(other.decay_axes)))
        return WindowKernel(self.sites, self.matrix + other.matrix, self.dim, axes,
                            self.tail + other.tail)

    def __sub__(self, other: "WindowKernel") -> "WindowKernel":
        axes = tuple(sorted(set(self.decay_axes) & set(other.decay_axes)))
        return WindowKernel(self.sites, self.matrix - other.matrix, self.dim, axes,
                            self.tail + other.tail)

    def scaled(self, c: complex) -> "WindowKernel":
        return WindowKernel(self.sites, c * self.matrix, self.dim, self.decay_axes, abs(c) * self.tail)

    def adjoint(self) -> "WindowKernel":
        return WindowKernel(self.sites, self.matrix.conj().T, self.dim, self.decay_axes, self.tail)


def box_sites(lo1: int, hi1: int, lo2: int, hi2: int) -> np.ndarray:
    """Sites ``(m1, m2)`` with ``lo <= m <= hi`` in row-major order."""
    a, b = np.meshgrid(np.arange(lo1, hi1 + 1), np.arange(lo2, hi2 + 1), indexing="ij")
    return np.stack([a.ravel(), b.ravel()], axis=1)


def periodic_on_window(A: PeriodicKernel, sites: np.ndarray) -> WindowKernel:
    """Restrict a periodic kernel to ``sites``: blocks ``A_{0,n-m}``."""
    sites = np.asarray(sites, dtype=int)
    d, R = A.dim, A.R
    diff = sites[None, :, :] - sites[:, None, :]
    inside = (np.abs(diff[..., 0]) <= R) & (np.abs(diff[..., 1]) <= R)
    i1 = np.clip(diff[..., 0] + R, 0, 2 * R)
    i2 = np.clip(diff[..., 1] + R, 0, 2 * R)
    blocks = A.blocks[i1, i2] * inside[..., None, None]
    ns = len(sites)
    return WindowKernel(sites, blocks.swapaxes(1, 2).reshape(ns * d, ns * d), d, (1, 2), A.bound)


def diagonal_on_window(values: np.ndarray, sites: np.ndarray, dim: int,
                       internal: np.ndarray | None = None) -> WindowKernel:
    """Multiplication operator ``f(m) S`` on a window (``S`` defaults to identity)."""
    s = np.eye(dim) if internal is None else internal
    return WindowKernel(sites, np.kron(np.diag(np.asarray(values, dtype=complex)), s), dim)


def position_on_window(sites: np.ndarray, j: int, dim: int) -> WindowKernel:
    return diagonal_on_window(np.asarray(sites)[:, j - 1].astype(float), sites, dim)


def commutator_switch(A: PeriodicKernel, switch: SwitchFunction, sites: np.ndarray | None = None,
                      tolerance: float | None = None, decay: tuple[float, float] | None = None
                      ) -> WindowKernel:
    """``[A, Lambda]`` on a window: blocks ``A_{0,n-m} (Lambda(n_j) - Lambda(m_j))``.

    Without ``sites`` the window is the band of rows within ``A.R`` cells of
    the jump window along the switch axis, ``A.R`` cells wide transversally.
    With ``tolerance`` and a decay fit ``(C, zeta)``, ``WindowTooSmall`` is
    raised when the rows omitted along the switch axis may carry more mass
    than the tolerance allows.
    """
    j = switch.axis
    R = A.R
    if sites is None:
        lo, hi = switch.n_minus - R - 1, switch.n_plus + R
        sites = box_sites(lo, hi, -R, R) if j == 1 else box_sites(-R, R, lo, hi)
    sites = np.asarray(sites, dtype=int)
    base = periodic_on_window(A, sites)
    lam = switch(sites[:, j - 1])
    d = A.dim
    ns = len(sites)
    factor = (lam[None, :] - lam[:, None])
    mat = base.block_array() * factor[..., None, None]
    tail = A.bound
    if decay is not None:
        C, zeta = decay
        coord = sites[:, j - 1]
        dist = min(switch.n_minus - coord.min(), coord.max() - switch.n_plus + 1)
        tail += 2 * tail_bound(C, zeta, max(int(dist), 0))
        if tolerance is not None and tail > tolerance:
            raise WindowTooSmall(f"window leaves tail {tail:.3e} above tolerance {tolerance:.3e}")
    return WindowKernel(sites, mat.swapaxes(1, 2).reshape(ns * d, ns * d), d, (j,), tail)


# ---------------------------------------------------------------- lines
#
# Operators periodic along axis 2 are handled in a mixed representation:
# real space along axis 1 (a finite box of columns) and Bloch momenta k2
# along axis 2.  A periodic kernel becomes, for every k2, a banded matrix
# on the box.


def line_kernels(A: PeriodicKernel, M2: int) -> np.ndarray:
    """``sum_{n2} exp(i k2 n2) A_{0,(n1,n2)}`` on the grid ``k2 = 2 pi j / M2``.

    Returns shape ``(M2, 2R+1, d, d)`` indexed by ``(k2, n1 + R)``.  Exact as
    a representation of products when ``M2`` exceeds their total range
    along axis 2.
    """
    acc = np.zeros((A.blocks.shape[0], M2, A.dim, A.dim), dtype=complex)
    r = np.arange(-A.R, A.R + 1)
    np.add.at(acc, (slice(None), r % M2), A.blocks)
    return np.moveaxis(np.fft.ifft(acc, axis=1) * M2, 1, 0)


def box_matrix(kern1d: np.ndarray, columns: np.ndarray) -> np.ndarray:
    """Dense matrix with blocks ``K[x_n - x_m]`` for ``|x_n - x_m| <= R``.

    ``kern1d`` has shape ``(..., 2R+1, d, d)``; leading axes are kept.
    """
    R = (kern1d.shape[-3] - 1) // 2
    d = kern1d.shape[-1]
    diff = columns[None, :] - columns[:, None]
    inside = np.abs(diff) <= R
    blocks = kern1d[..., np.clip(diff + R, 0, 2 * R), :, :] * inside[..., None, None]
    nb = len(columns)
    lead = kern1d.shape[:-3]
    return np.swapaxes(blocks, -3, -2).reshape(lead + (nb * d, nb * d))


def box_diagonal_traces(mat: np.ndarray, dim: int) -> np.ndarray:
    """Per-column traces ``tr A_{m,m}`` of box matrices (leading axes kept)."""
    nb = mat.shape[-1] // dim
    shaped = mat.reshape(mat.shape[:-2] + (nb, dim, nb, dim))
    return np.einsum("...aiai->...a", shaped)
