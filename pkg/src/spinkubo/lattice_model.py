"""Periodic tight-binding Hamiltonians on Z^2 with sublattice and spin.

The internal space of every cell is ``C^N (orbital) x C^2 (spin)`` with the
orbital index running slowest, so for the honeycomb lattice the canonical
ordering is ``(A up, A down, B up, B down)``.

A periodic operator is stored through its kernel row ``H_{0,d}``; the full
matrix follows from ``H_{m,n} = H_{0,n-m}``.  Bloch fibers use the
convention ``H(k) = sum_d exp(i k.d) H_{0,d}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)

Offset = tuple[int, int]


@dataclass(frozen=True)
class InternalBasis:
    """Orbital x spin internal space of one unit cell."""

    n_orbitals: int = 2

    def __post_init__(self):
        if self.n_orbitals < 1:
            raise ValueError("n_orbitals must be positive")

    @property
    def dim(self) -> int:
        return 2 * self.n_orbitals

    def index(self, orbital: int, spin: int) -> int:
        """Position of ``(orbital, spin)`` in the internal ordering (spin 0 is up)."""
        return 2 * orbital + spin

    def spin_operator(self) -> np.ndarray:
        """``S_z = 1/2 Id_N x s_z``."""
        return 0.5 * np.kron(np.eye(self.n_orbitals), SIGMA_Z)

    def spin_indices(self, spin: int) -> np.ndarray:
        """Internal indices carrying the given spin (0 up, 1 down)."""
        return np.arange(self.n_orbitals) * 2 + spin


@dataclass(frozen=True)
class KaneMeleParams:
    """Couplings of the Kane-Mele model; lattice spacing is fixed to 1."""

    t: float = 1.0
    lambda_v: float = 0.0
    lambda_so: float = 0.0
    lambda_r: float = 0.0

    def __post_init__(self):
        for name in ("t", "lambda_v", "lambda_so", "lambda_r"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.t, self.lambda_v, self.lambda_so, self.lambda_r)


@dataclass
class HoppingKernel:
    """Finite-range periodic Hamiltonian given by its kernel row ``H_{0,d}``.

    Parameters
    ----------
    basis : InternalBasis
    hoppings : dict
        Maps offsets ``d = (d1, d2)`` to complex ``2N x 2N`` blocks.
    """

    basis: InternalBasis
    hoppings: dict[Offset, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        dim = self.basis.dim
        clean = {}
        for d, block in self.hoppings.items():
            block = np.asarray(block, dtype=complex)
            if block.shape != (dim, dim):
                raise ValueError(f"block at {d} has shape {block.shape}, expected {(dim, dim)}")
            clean[(int(d[0]), int(d[1]))] = block
        self.hoppings = clean

    @property
    def dim(self) -> int:
        return self.basis.dim

    @property
    def range(self) -> int:
        """Largest ``|d1| + |d2|`` over offsets carrying a nonzero block."""
        r = [abs(d[0]) + abs(d[1]) for d, b in self.hoppings.items() if np.any(b != 0)]
        return max(r, default=0)

    @property
    def max_offset(self) -> int:
        """Largest ``max(|d1|, |d2|)`` over nonzero blocks."""
        r = [max(abs(d[0]), abs(d[1])) for d, b in self.hoppings.items() if np.any(b != 0)]
        return max(r, default=0)

    def support(self) -> list[Offset]:
        """Offsets with a nonzero block, in sorted order."""
        return sorted(d for d, b in self.hoppings.items() if np.any(b != 0))

    def block(self, d: Offset) -> np.ndarray:
        return self.hoppings.get(tuple(d), np.zeros((self.dim, self.dim), dtype=complex))

    def hermiticity_residual(self) -> float:
        """``max_d ||H_{0,-d} - H_{0,d}^dagger||``; zero for a Hermitian operator."""
        res = 0.0
        for d, b in self.hoppings.items():
            partner = self.block((-d[0], -d[1]))
            res = max(res, float(np.abs(partner - b.conj().T).max()))
        return res

    def is_hermitian(self, tol: float = 1e-13) -> bool:
        return self.hermiticity_residual() <= tol

    def arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """Offsets as an ``(n, 2)`` int array and blocks as ``(n, 2N, 2N)``."""
        support = self.support()
        if not support:
            return np.zeros((0, 2), dtype=int), np.zeros((0, self.dim, self.dim), dtype=complex)
        offsets = np.array(support, dtype=int)
        blocks = np.array([self.hoppings[d] for d in support])
        return offsets, blocks

    @classmethod
    def from_entries(cls, n_orbitals: int, entries: Iterable[tuple[Offset, int, int, complex]]
                     ) -> "HoppingKernel":
        """Build a Hermitian kernel from single matrix elements.

        Each entry ``(d, row, col, value)`` sets ``H_{0,d}[row, col]`` and its
        Hermitian partner ``H_{0,-d}[col, row]``.  Diagonal on-site entries
        keep only their real part.
        """
        basis = InternalBasis(n_orbitals)
        dim = basis.dim
        hop: dict[Offset, np.ndarray] = {}
        for d, row, col, value in entries:
            d = (int(d[0]), int(d[1]))
            if not (0 <= row < dim and 0 <= col < dim):
                raise ValueError(f"entry index ({row}, {col}) outside 0..{dim - 1}")
            if d == (0, 0) and row == col:
                hop.setdefault(d, np.zeros((dim, dim), complex))[row, col] += complex(value).real
                continue
            hop.setdefault(d, np.zeros((dim, dim), complex))[row, col] += value
            md = (-d[0], -d[1])
            hop.setdefault(md, np.zeros((dim, dim), complex))[col, row] += np.conj(value)
        return cls(basis, hop)


def _add(hop: dict, d: Offset, block: np.ndarray) -> None:
    hop[d] = hop.get(d, 0) + block


# A(cell m) -> B(cell m + c_i) for the three nearest-neighbour vectors d_1, d_2, d_3
NN_CELL_OFFSETS: tuple[Offset, ...] = ((0, 0), (1, 1), (0, 1))
# a_1, a_2, a_3 = -a_1 - a_2 in Bravais coordinates
NNN_CELL_OFFSETS: tuple[Offset, ...] = ((1, 0), (0, 1), (-1, -1))


def rashba_matrices() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Spin matrices ``(s x d_i)_z`` for the three nearest-neighbour bonds."""
    r3 = np.sqrt(3.0)
    return (-(r3 * SIGMA_X + SIGMA_Y) / 2, (r3 * SIGMA_X - SIGMA_Y) / 2, SIGMA_Y.copy())


def build_kane_mele(params: KaneMeleParams) -> HoppingKernel:
    """Kane-Mele Hamiltonian ``t H_NN + lambda_v H_v + lambda_so H_SO + lambda_R H_R``.

    Cell ``n`` holds the A site at ``n1 a1 + n2 a2`` and the B site at
    ``A + d1``.  The bond ``d_i`` from A in cell ``m`` ends on B in cell
    ``m + c_i`` with ``c = (0,0), (1,1), (0,1)``.  The spin-orbit term is
    ``i lambda_so (chi_A - chi_B) s_z`` on each second-neighbour hop along
    ``+a_i``.
    """
    t, lv, lso, lr = params.as_tuple()
    basis = InternalBasis(2)
    hop: dict[Offset, np.ndarray] = {}
    e_ab = np.array([[0.0, 1.0], [0.0, 0.0]])
    stagger = np.diag([1.0, -1.0])

    if lv != 0:
        _add(hop, (0, 0), lv * np.kron(stagger, SIGMA_0))
    if t != 0 or lr != 0:
        for c, m in zip(NN_CELL_OFFSETS, rashba_matrices()):
            blk = np.kron(e_ab, t * SIGMA_0 - 1j * lr * m)
            _add(hop, c, blk)
            _add(hop, (-c[0], -c[1]), blk.conj().T)
    if lso != 0:
        for a in NNN_CELL_OFFSETS:
            blk = np.kron(stagger, 1j * lso * SIGMA_Z)
            _add(hop, a, blk)
            _add(hop, (-a[0], -a[1]), blk.conj().T)
    hop = {d: b for d, b in hop.items() if np.any(b != 0)}
    return HoppingKernel(basis, hop)


def bloch_fibers(kernel: HoppingKernel, k1, k2, derivative: tuple[int, int] = (0, 0)) -> np.ndarray:
    """Vectorized Bloch fibers and their k-derivatives.

    Parameters
    ----------
    k1, k2 : array_like
        Broadcastable arrays of momenta (Bravais components).
    derivative : (int, int)
        Orders ``(a, b)`` of ``d^a/dk1^a d^b/dk2^b``.

    Returns
    -------
    ndarray
        Shape ``broadcast(k1, k2).shape + (2N, 2N)``.
    """
    k1, k2 = np.broadcast_arrays(np.asarray(k1, float), np.asarray(k2, float))
    offsets, blocks = kernel.arrays()
    out_shape = k1.shape + (kernel.dim, kernel.dim)
    if len(offsets) == 0:
        return np.zeros(out_shape, dtype=complex)
    phase = np.exp(1j * (np.multiply.outer(k1, offsets[:, 0]) + np.multiply.outer(k2, offsets[:, 1])))
    a, b = derivative
    weight = (1j * offsets[:, 0]) ** a * (1j * offsets[:, 1]) ** b
    return np.einsum("...d,dij->...ij", phase * weight, blocks)


def bloch_fiber(kernel: HoppingKernel, k: Sequence[float]) -> np.ndarray:
    """``H(k) = sum_d exp(i k.d) H_{0,d}`` at a single momentum."""
    return bloch_fibers(kernel, k[0], k[1])


def time_reversal_partner(block: np.ndarray, n_orbitals: int) -> np.ndarray:
    """Apply ``Theta = exp(i pi s_y / 2) K`` to one kernel block."""
    ty = np.kron(np.eye(n_orbitals), SIGMA_Y)
    return ty @ block.conj() @ ty


def verify_time_reversal(kernel: HoppingKernel) -> float:
    """Largest spectral-norm deviation of ``Theta H_{0,d} Theta^-1`` from ``H_{0,d}``.

    ``Theta`` acts on position space as the identity, so each kernel block is
    compared with its conjugated partner at the same offset.
    """
    n = kernel.basis.n_orbitals
    res = 0.0
    for b in kernel.hoppings.values():
        res = max(res, float(np.linalg.norm(time_reversal_partner(b, n) - b, 2)))
    return res


def spin_commutator(kernel: HoppingKernel) -> HoppingKernel:
    """Kernel of ``[H, S_z]``."""
    s = kernel.basis.spin_operator()
    return HoppingKernel(kernel.basis, {d: b @ s - s @ b for d, b in kernel.hoppings.items()})


# ---------------------------------------------------------------- switches


def _as_fraction(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x).limit_denominator(10**12)


@dataclass(frozen=True)
class SwitchFunction:
    """Monotone profile along one axis: 0 below ``n_minus``, 1 from ``n_plus``.

    ``values[i]`` is the profile at ``n_minus + i``.  Values are kept as
    fractions so that summation identities can be checked exactly.
    """

    axis: int
    n_minus: int
    n_plus: int
    values: tuple[Fraction, ...]
    label: str = "custom"

    def __post_init__(self):
        if self.axis not in (1, 2):
            raise ValueError("axis must be 1 or 2")
        if self.n_plus <= self.n_minus:
            raise ValueError("jump window must be non-empty")
        vals = tuple(_as_fraction(v) for v in self.values)
        if len(vals) != self.n_plus - self.n_minus:
            raise ValueError("values must cover the jump window")
        if any(v < 0 or v > 1 for v in vals):
            raise ValueError("profile values must lie in [0, 1]")
        object.__setattr__(self, "values", vals)

    def exact(self, n: int) -> Fraction:
        if n < self.n_minus:
            return Fraction(0)
        if n >= self.n_plus:
            return Fraction(1)
        return self.values[n - self.n_minus]

    def __call__(self, n) -> np.ndarray:
        n = np.asarray(n)
        table = np.array([float(v) for v in self.values])
        idx = np.clip(n - self.n_minus, 0, len(table) - 1)
        return np.where(n < self.n_minus, 0.0, np.where(n >= self.n_plus, 1.0, table[idx]))

    def summation_identity(self, n: int) -> Fraction:
        """Exact ``sum_m (Lambda(m + n) - Lambda(m))``; equals ``n`` for any switch."""
        lo = self.n_minus - abs(n) - 1
        hi = self.n_plus + abs(n) + 1
        return sum((self.exact(m + n) - self.exact(m) for m in range(lo, hi)), Fraction(0))

    @classmethod
    def sharp(cls, axis: int, at: int = 0) -> "SwitchFunction":
        """Step with ``Lambda(n) = 1`` for ``n >= at``."""
        return cls(axis, at, at + 1, (Fraction(1),), label="sharp")

    @classmethod
    def linear_ramp(cls, axis: int, n_minus: int = -5, n_plus: int = 6) -> "SwitchFunction":
        """``Lambda(n) = (n - n_minus) / (n_plus - n_minus)`` on the jump window."""
        w = n_plus - n_minus
        return cls(axis, n_minus, n_plus, tuple(Fraction(i, w) for i in range(w)), label="ramp")

    @classmethod
    def xi(cls, axis: int, l: int) -> "SwitchFunction":
        """``Xi^(l)(n) = Xi(n / l)`` with ``Xi`` rising linearly on ``[-1/2, 1/2)``."""
        if l < 1:
            raise ValueError("l must be a positive integer")
        lo = -((l + 1) // 2) - 1
        hi = l // 2 + 2
        vals = []
        for n in range(lo, hi):
            x = Fraction(n, l)
            vals.append(Fraction(0) if x < Fraction(-1, 2) else
                        (Fraction(1) if x >= Fraction(1, 2) else x + Fraction(1, 2)))
        return cls(axis, lo, hi, tuple(vals), label=f"xi{l}")

    def describe(self) -> dict:
        return {"axis": self.axis, "profile": self.label, "n_minus": self.n_minus,
                "n_plus": self.n_plus}


def approximate_position(l: int, n) -> np.ndarray:
    """``X^(l)(n) = l (Xi^(l)(n) - 1/2)``; odd in ``n`` and equal to ``n`` for ``|n| < l/2``."""
    sw = SwitchFunction.xi(1, l)
    return l * (sw(n) - 0.5)


def switch_from_mapping(axis: int, profile: Mapping[int, float]) -> SwitchFunction:
    """Switch defined by explicit values on a window of consecutive integers."""
    keys = sorted(profile)
    if keys != list(range(keys[0], keys[-1] + 1)):
        raise ValueError("profile keys must be consecutive integers")
    return SwitchFunction(axis, keys[0], keys[-1] + 1, tuple(profile[k] for k in keys))
