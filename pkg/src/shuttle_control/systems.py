"""The two three-site shuttling models.

Each model is a :class:`SystemModel`: a drift coefficient vector, the set of
basis directions that carry controls, and the linear maps between physical
controls (the knobs a user sets, in meV), canonical controls (coefficients of
the basis matrices) and momentum functions.  The running cost is quadratic in
the physical controls, ``L = 1/2 y^T Q y``, so the stationarity condition
``dL/du = phi`` is linear and solved once at construction.

Hand-expanded momentum dynamics and Jacobians for both models are provided as
independent cross-checks of the generic structure-constant evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .su3 import SQRT3, as_coefficients


class ConfigurationError(ValueError):
    """Raised when a model is built from an inconsistent specification."""


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Immutable description of a controlled three-site system.

    Attributes
    ----------
    name : str
        Model identifier (``"triple_dot"`` or ``"donor_chain"``).
    drift : ndarray, shape (8,)
        Drift coefficients ``a_l`` in meV.
    active : tuple of int
        1-based basis indices carrying the canonical controls ``u_l``.
    control_names : tuple of str
        Names of the physical controls, in column order.
    cost_matrix : ndarray, shape (p, p)
        Symmetric positive-definite ``Q`` of the running cost over physical
        controls.
    phys_from_canonical : ndarray, shape (p, p)
        Linear map ``y = P u`` from canonical to physical controls.
    parameters : dict
        Physical parameters the model was built from.
    """

    name: str
    drift: np.ndarray
    active: tuple[int, ...]
    control_names: tuple[str, ...]
    cost_matrix: np.ndarray
    phys_from_canonical: np.ndarray
    parameters: dict = field(default_factory=dict)
    specialized_rhs: Callable | None = None
    specialized_jacobian: Callable | None = None

    def __post_init__(self):
        drift = as_coefficients(self.drift, "drift")
        p = len(self.active)
        if len(set(self.active)) != p or not all(1 <= l <= 8 for l in self.active):
            raise ConfigurationError(f"invalid active control indices {self.active}")
        if len(self.control_names) != p:
            raise ConfigurationError("one control name per active index is required")
        q = np.asarray(self.cost_matrix, dtype=float)
        pmap = np.asarray(self.phys_from_canonical, dtype=float)
        if q.shape != (p, p) or pmap.shape != (p, p):
            raise ConfigurationError("cost matrix and control map must be p x p")
        if not np.allclose(q, q.T, rtol=0, atol=1e-14):
            raise ConfigurationError("cost matrix must be symmetric")
        try:
            np.linalg.cholesky(q)
        except np.linalg.LinAlgError as exc:
            raise ConfigurationError("cost matrix must be positive definite") from exc
        if abs(np.linalg.det(pmap)) < 1e-12:
            raise ConfigurationError("physical/canonical control map is singular")

        canon_from_phys = np.linalg.inv(pmap)
        # dL/du = P^T Q P u = phi  =>  u = (P^T Q P)^{-1} phi
        canon_from_momentum = np.linalg.inv(pmap.T @ q @ pmap)
        momentum_map = np.zeros((8, 8))
        idx = np.asarray(self.active) - 1
        momentum_map[np.ix_(idx, idx)] = canon_from_momentum

        for arr in (drift, q, pmap, canon_from_phys, canon_from_momentum, momentum_map):
            arr.setflags(write=False)
        object.__setattr__(self, "drift", drift)
        object.__setattr__(self, "cost_matrix", q)
        object.__setattr__(self, "phys_from_canonical", pmap)
        object.__setattr__(self, "canonical_from_phys", canon_from_phys)
        object.__setattr__(self, "canonical_from_momentum", canon_from_momentum)
        object.__setattr__(self, "momentum_map", momentum_map)

    @property
    def n_controls(self) -> int:
        return len(self.active)

    @property
    def active_slice(self) -> np.ndarray:
        """0-based positions of the active indices."""
        return np.asarray(self.active) - 1

    def canonical_controls(self, phi: np.ndarray) -> np.ndarray:
        """Canonical controls ``u_l`` (l in active) for momentum vector(s) ``phi``."""
        phi = np.asarray(phi, dtype=float)
        return phi[..., self.active_slice] @ self.canonical_from_momentum.T

    def physical_from_canonical(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float) @ self.phys_from_canonical.T

    def canonical_from_physical(self, y: np.ndarray) -> np.ndarray:
        return np.asarray(y, dtype=float) @ self.canonical_from_phys.T

    def physical_controls(self, phi: np.ndarray) -> np.ndarray:
        return self.physical_from_canonical(self.canonical_controls(phi))

    def embed(self, u: np.ndarray) -> np.ndarray:
        """Scatter canonical controls into full length-8 coefficient vectors."""
        u = np.asarray(u, dtype=float)
        out = np.zeros(u.shape[:-1] + (8,))
        out[..., self.active_slice] = u
        return out

    def coefficients(self, physical: np.ndarray) -> np.ndarray:
        """Total Hamiltonian coefficients ``a + u`` for physical control value(s)."""
        return self.drift + self.embed(self.canonical_from_physical(physical))

    def running_cost(self, physical: np.ndarray) -> np.ndarray:
        """``L = 1/2 y^T Q y`` evaluated row-wise."""
        y = np.asarray(physical, dtype=float)
        return 0.5 * np.einsum("...i,ij,...j->...", y, self.cost_matrix, y)


# -- hand-expanded forms ---------------------------------------------------


def triple_dot_rhs(phi, J1: float, J2: float) -> np.ndarray:
    """Momentum dynamics of the triple dot written out term by term."""
    p1, p2, p3, p4, p5, p6, p7, p8 = np.asarray(phi, dtype=float)
    return np.array([
        J2 * p3 - p4 * p7 / 2 - SQRT3 / 6 * p4 * p8,
        -J1 * p3 - p5 * p8 / SQRT3,
        -J2 * p1 + J1 * p2 + p6 * p7 / 2 + SQRT3 / 2 * p6 * p8,
        p1 * p7 / 2 + SQRT3 / 6 * p1 * p8 - J2 * p6 - 2 * J1 * p7,
        p2 * p8 / SQRT3 + J1 * p6 + J2 * p7 - SQRT3 * J2 * p8,
        -p3 * p7 / 2 - SQRT3 / 2 * p3 * p8 + J2 * p4 - J1 * p5,
        2 * J1 * p4 - J2 * p5,
        SQRT3 * J2 * p5,
    ])


def triple_dot_jacobian(phi, J1: float, J2: float) -> np.ndarray:
    p1, p2, p3, p4, p5, p6, p7, p8 = np.asarray(phi, dtype=float)
    s = SQRT3
    return np.array([
        [0, 0, J2, -p7 / 2 - s * p8 / 6, 0, 0, -p4 / 2, -s * p4 / 6],
        [0, 0, -J1, 0, -p8 / s, 0, 0, -p5 / s],
        [-J2, J1, 0, 0, 0, s * p8 / 2 + p7 / 2, p6 / 2, s * p6 / 2],
        [s * p8 / 6 + p7 / 2, 0, 0, 0, 0, -J2, p1 / 2 - 2 * J1, s * p1 / 6],
        [0, p8 / s, 0, 0, 0, J1, J2, p2 / s - s * J2],
        [0, 0, -s * p8 / 2 - p7 / 2, J2, -J1, 0, -p3 / 2, -s * p3 / 2],
        [0, 0, 0, 2 * J1, -J2, 0, 0, 0],
        [0, 0, 0, 0, s * J2, 0, 0, 0],
    ], dtype=float)


def donor_chain_rhs(phi, delta: float) -> np.ndarray:
    """Momentum dynamics of the donor chain written out term by term."""
    p1, p2, p3, p4, p5, p6, p7, p8 = np.asarray(phi, dtype=float)
    return np.array([
        p2 * p3 + delta * p4,
        -p1 * p3 - delta * p5,
        0.0,
        -delta * p1 - p2 * p6 - 2 * p1 * p7,
        delta * p2 + p1 * p6 + p2 * p7 - SQRT3 * p2 * p8,
        p2 * p4 - p1 * p5,
        2 * p1 * p4 - p2 * p5,
        SQRT3 * p2 * p5,
    ])


def donor_chain_jacobian(phi, delta: float) -> np.ndarray:
    p1, p2, p3, p4, p5, p6, p7, p8 = np.asarray(phi, dtype=float)
    s = SQRT3
    return np.array([
        [0, p3, p2, delta, 0, 0, 0, 0],
        [-p3, 0, -p1, 0, -delta, 0, 0, 0],
        [0, 0, 0, 0, 0, 0, 0, 0],
        [-delta - 2 * p7, -p6, 0, 0, 0, -p2, -2 * p1, 0],
        [p6, delta + p7 - s * p8, 0, 0, 0, p1, p2, -s * p2],
        [-p5, p4, 0, p2, -p1, 0, 0, 0],
        [2 * p4, -p5, 0, 2 * p1, -p2, 0, 0, 0],
        [0, s * p5, 0, 0, s * p2, 0, 0, 0],
    ], dtype=float)


def triple_dot_matrix(J1: float, J2: float, mu_L: float, mu_R: float) -> np.ndarray:
    """The triple-dot Hamiltonian built entry by entry (with its trace)."""
    return np.array([[mu_L, J1, 0], [J1, 0, J2], [0, J2, mu_R]], dtype=np.complex128)


def donor_chain_matrix(delta: float, omega12: float, omega23: float) -> np.ndarray:
    """The donor-chain Hamiltonian built entry by entry (with its trace)."""
    return np.array(
        [[0, -omega12, 0], [-omega12, delta, -omega23], [0, -omega23, 0]],
        dtype=np.complex128,
    )


# -- model constructors ----------------------------------------------------


def triple_dot_model(J1: float, J2: float) -> SystemModel:
    """Triple quantum dot with on-site energies ``(mu_L, mu_R)`` as controls."""
    J1, J2 = float(J1), float(J2)
    if not (np.isfinite(J1) and np.isfinite(J2)):
        raise ConfigurationError("J1 and J2 must be finite")
    drift = np.zeros(8)
    drift[0], drift[1] = J1, J2
    # mu_L = 2 u_7, mu_R = u_7 - sqrt(3) u_8
    pmap = np.array([[2.0, 0.0], [1.0, -SQRT3]])
    return SystemModel(
        name="triple_dot",
        drift=drift,
        active=(7, 8),
        control_names=("mu_L", "mu_R"),
        cost_matrix=np.eye(2),
        phys_from_canonical=pmap,
        parameters={"J1": J1, "J2": J2},
        specialized_rhs=lambda phi: triple_dot_rhs(phi, J1, J2),
        specialized_jacobian=lambda phi: triple_dot_jacobian(phi, J1, J2),
    )


def donor_chain_model(delta: float) -> SystemModel:
    """Ionised donor chain with tunnel rates ``(Omega_12, Omega_23)`` as controls."""
    delta = float(delta)
    if not np.isfinite(delta):
        raise ConfigurationError("delta must be finite")
    drift = np.zeros(8)
    drift[6] = -delta / 2
    drift[7] = delta / (2 * SQRT3)
    return SystemModel(
        name="donor_chain",
        drift=drift,
        active=(1, 2),
        control_names=("omega12", "omega23"),
        cost_matrix=np.eye(2),
        phys_from_canonical=-np.eye(2),
        parameters={"delta": delta},
        specialized_rhs=lambda phi: donor_chain_rhs(phi, delta),
        specialized_jacobian=lambda phi: donor_chain_jacobian(phi, delta),
    )


def model_from_parameters(name: str, **params) -> SystemModel:
    if name == "triple_dot":
        return triple_dot_model(params["J1"], params["J2"])
    if name == "donor_chain":
        return donor_chain_model(params["delta"])
    raise ConfigurationError(f"unknown system {name!r}")
