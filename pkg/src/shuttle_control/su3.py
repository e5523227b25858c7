"""su(3) basis, structure constants and Hamiltonian assembly.

The basis is a rearrangement of the Gell-Mann matrices into eight
skew-Hermitian, traceless 3x3 matrices ``X_1 .. X_8``.  Public functions take
1-based indices so that ``basis_matrix(7)`` is ``X_7``; coefficient vectors are
plain length-8 float arrays where entry ``l - 1`` multiplies ``X_l``.
"""

from __future__ import annotations

import itertools

import numpy as np

SQRT3 = np.sqrt(3.0)

_BASIS = np.zeros((8, 3, 3), dtype=np.complex128)
_BASIS[0] = [[0, 1j, 0], [1j, 0, 0], [0, 0, 0]]
_BASIS[1] = [[0, 0, 0], [0, 0, 1j], [0, 1j, 0]]
_BASIS[2] = [[0, 0, 1], [0, 0, 0], [-1, 0, 0]]
_BASIS[3] = [[0, 1, 0], [-1, 0, 0], [0, 0, 0]]
_BASIS[4] = [[0, 0, 0], [0, 0, 1], [0, -1, 0]]
_BASIS[5] = [[0, 0, 1j], [0, 0, 0], [1j, 0, 0]]
_BASIS[6] = np.diag([1j, -1j, 0])
_BASIS[7] = np.diag([1j, 1j, -2j]) / SQRT3
_BASIS.setflags(write=False)

# Independent nonzero constants C_ij^k; everything else follows by total
# antisymmetry.
_INDEPENDENT = {
    (1, 2, 3): -1.0,
    (1, 4, 7): -2.0,
    (1, 5, 6): 1.0,
    (2, 4, 6): -1.0,
    (2, 5, 7): 1.0,
    (2, 5, 8): -SQRT3,
    (3, 4, 5): 1.0,
    (3, 6, 7): 1.0,
    (3, 6, 8): SQRT3,
}


def _permutation_sign(perm: tuple[int, ...]) -> int:
    sign = 1
    perm = list(perm)
    for i in range(len(perm)):
        while perm[i] != i:
            j = perm[i]
            perm[i], perm[j] = perm[j], perm[i]
            sign = -sign
    return sign


def _build_structure_constants() -> np.ndarray:
    table = np.zeros((8, 8, 8))
    for triple, value in _INDEPENDENT.items():
        for perm in itertools.permutations(range(3)):
            idx = tuple(triple[p] - 1 for p in perm)
            table[idx] = _permutation_sign(perm) * value
    table.setflags(write=False)
    return table


#: Dense table ``STRUCTURE_CONSTANTS[i-1, j-1, k-1] == C_ij^k``.
STRUCTURE_CONSTANTS = _build_structure_constants()

# Sparse form used by the compiled integrator kernels.
NONZERO_INDICES = np.ascontiguousarray(np.argwhere(STRUCTURE_CONSTANTS != 0).astype(np.int64))
NONZERO_VALUES = np.ascontiguousarray(STRUCTURE_CONSTANTS[tuple(NONZERO_INDICES.T)])


def _check_index(*indices: int) -> None:
    for idx in indices:
        if isinstance(idx, bool) or not isinstance(idx, (int, np.integer)):
            raise TypeError(f"basis index must be an integer, got {idx!r}")
        if not 1 <= idx <= 8:
            raise ValueError(f"basis index must lie in 1..8, got {idx}")


def basis_matrix(l: int) -> np.ndarray:
    """Return a copy of the basis matrix ``X_l`` (1-based)."""
    _check_index(l)
    return _BASIS[l - 1].copy()


def basis() -> np.ndarray:
    """All eight basis matrices stacked as a read-only ``(8, 3, 3)`` array."""
    return _BASIS


def structure_constant(i: int, j: int, k: int) -> float:
    """Structure constant ``C_ij^k`` defined by ``[X_i, X_j] = sum_k C_ij^k X_k``."""
    _check_index(i, j, k)
    return float(STRUCTURE_CONSTANTS[i - 1, j - 1, k - 1])


def commutator_coefficients(i: int, j: int) -> np.ndarray:
    """Expansion coefficients of ``[X_i, X_j]`` over the basis (length 8)."""
    _check_index(i, j)
    return STRUCTURE_CONSTANTS[i - 1, j - 1].copy()


def as_coefficients(values, name: str = "coefficients") -> np.ndarray:
    """Validate and return a length-8 finite float vector."""
    arr = np.asarray(values, dtype=float)
    if arr.shape != (8,):
        raise ValueError(f"{name} must have exactly 8 components, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def assemble_hamiltonian(a, u) -> np.ndarray:
    """Hermitian traceless ``H = -i * sum_l (a_l + u_l) X_l``.

    Both arguments are length-8 coefficient vectors (drift and control parts).
    """
    coeffs = as_coefficients(a, "a") + as_coefficients(u, "u")
    return -1j * np.tensordot(coeffs, _BASIS, axes=1)


def hamiltonians_from_coefficients(coeffs: np.ndarray) -> np.ndarray:
    """Vectorised assembly for an ``(N, 8)`` array of total coefficients."""
    return -1j * np.tensordot(np.asarray(coeffs, dtype=float), _BASIS, axes=1)


def coefficients_from_hamiltonian(h: np.ndarray) -> np.ndarray:
    """Project a traceless Hermitian 3x3 matrix back onto the basis.

    Uses orthogonality ``tr(X_k^dag X_l) = 2 delta_kl``; any trace part of ``h``
    is discarded.
    """
    ih = 1j * np.asarray(h, dtype=np.complex128)
    return np.real(np.einsum("kab,ab->k", _BASIS.conj(), ih)) / 2.0
