"""Reduced momentum dynamics and their sensitivity to the initial condition.

The momentum functions obey the closed system

    dphi_l/dt = (1/hbar) * sum_{i,j} (a_j + u_j(phi)) C_jl^i phi_i

where ``u(phi)`` solves the stationarity condition of the quadratic running
cost.  Because ``C`` is totally antisymmetric the flow is a rotation and
``|phi|^2`` is conserved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm, expm_frechet

from . import _kernels
from .su3 import NONZERO_INDICES, NONZERO_VALUES, STRUCTURE_CONSTANTS, as_coefficients
from .systems import SystemModel
from .units import HBAR_MEV_NS

INTEGRATORS = ("lawson", "rk4")


class IntegrationDiverged(RuntimeError):
    """A non-finite state was produced while integrating the momentum ODE."""

    def __init__(self, t: float, message: str | None = None):
        super().__init__(message or f"momentum integration diverged at t = {t:.6g} ns")
        self.t = t


@dataclass(frozen=True, eq=False)
class MomentumTrajectory:
    """Momentum functions sampled on the slice grid ``t_k = k T / N``.

    ``sensitivity[k]`` is ``dphi(t_k)/dphi(0)`` (``None`` when not requested).
    """

    times: np.ndarray
    phi: np.ndarray
    sensitivity: np.ndarray | None
    dt: float

    @property
    def n_slices(self) -> int:
        return len(self.times) - 1

    def sample(self, k: int):
        sens = None if self.sensitivity is None else self.sensitivity[k]
        return self.times[k], self.phi[k], sens

    def norm_drift(self) -> float:
        """Largest relative deviation of ``|phi|^2`` from its initial value."""
        sq = np.einsum("ki,ki->k", self.phi, self.phi)
        if sq[0] == 0.0:
            return float(np.max(sq))
        return float(np.max(np.abs(sq - sq[0])) / sq[0])


def controls_from_momentum(model: SystemModel, phi) -> np.ndarray:
    """Physical controls solving ``dL/du_l = phi_l`` for one or many ``phi``."""
    return model.physical_controls(phi)


def _coefficient_matrix(coeffs: np.ndarray) -> np.ndarray:
    # M[l, i] = sum_j c_j C_jl^i, so that S = M @ phi
    return np.einsum("j,jli->li", coeffs, STRUCTURE_CONSTANTS)


def momentum_rhs(model: SystemModel, phi) -> np.ndarray:
    """Right-hand side ``S(phi)`` in meV (time derivative times hbar)."""
    phi = as_coefficients(phi, "phi")
    coeffs = model.drift + model.momentum_map @ phi
    return _coefficient_matrix(coeffs) @ phi


def momentum_jacobian(model: SystemModel, phi) -> np.ndarray:
    """Jacobian ``dS_i/dphi_j`` of :func:`momentum_rhs`."""
    phi = as_coefficients(phi, "phi")
    coeffs = model.drift + model.momentum_map @ phi
    through_controls = np.einsum("jli,i,jk->lk", STRUCTURE_CONSTANTS, phi, model.momentum_map)
    return _coefficient_matrix(coeffs) + through_controls


def _validate_grid(T: float, N: int, substeps: int) -> None:
    if not (np.isfinite(T) and T > 0):
        raise ValueError(f"T must be positive, got {T}")
    if int(N) != N or N < 1:
        raise ValueError(f"N must be a positive integer, got {N}")
    if int(substeps) != substeps or substeps < 1:
        raise ValueError(f"substeps must be a positive integer, got {substeps}")


def _run_kernel(model, phi0, T, N, substeps, method, with_sens):
    h = T / N / substeps
    scale = 1.0 / HBAR_MEV_NS
    if method == "lawson":
        drift_gen = scale * _coefficient_matrix(model.drift)
        E = expm(0.5 * h * drift_gen)
        cdrift = np.zeros(8)
    elif method == "rk4":
        E = np.eye(8)
        cdrift = np.array(model.drift)
    else:
        raise ValueError(f"unknown integrator {method!r}; expected one of {INTEGRATORS}")
    W = np.ascontiguousarray(model.momentum_map)
    w_cols = np.ascontiguousarray(model.active_slice.astype(np.int64))
    return _kernels.integrate(
        np.array(phi0, dtype=float), int(N), int(substeps), h,
        np.ascontiguousarray(E), cdrift, W, w_cols,
        NONZERO_INDICES, NONZERO_VALUES, scale, with_sens,
    )


def _run_frozen(model, phi0, T, N, with_sens):
    # Controls held at their left-endpoint value within each slice; the slice
    # flow is then linear and integrated exactly.
    dt = T / N
    scale = 1.0 / HBAR_MEV_NS
    phis = np.zeros((N + 1, 8))
    sens = np.zeros((N + 1, 8, 8)) if with_sens else None
    phi = np.array(phi0, dtype=float)
    Y = np.eye(8)
    phis[0] = phi
    if with_sens:
        sens[0] = Y
    W = model.momentum_map
    active = model.active_slice
    unit_generators = [scale * dt * STRUCTURE_CONSTANTS[j] for j in active]
    for k in range(N):
        coeffs = model.drift + W @ phi
        gen = scale * dt * _coefficient_matrix(coeffs)
        if with_sens:
            step = expm(gen)
            jac = step.copy()
            for j, unit in zip(active, unit_generators):
                _, frechet = expm_frechet(gen, unit)
                jac += np.outer(frechet @ phi, W[j])
            new_phi = step @ phi
            Y = jac @ Y
        else:
            new_phi = expm(gen) @ phi
        if not np.all(np.isfinite(new_phi)) or (with_sens and not np.all(np.isfinite(Y))):
            return phis, sens, k
        phi = new_phi
        phis[k + 1] = phi
        if with_sens:
            sens[k + 1] = Y
    return phis, sens, -1


def integrate_with_sensitivity(
    model: SystemModel,
    phi0,
    T: float,
    N: int,
    substeps: int = 4,
    *,
    method: str = "lawson",
    frozen_controls: bool = False,
    sensitivity: bool = True,
) -> MomentumTrajectory:
    """Integrate the momentum ODE over ``[0, T]`` on ``N`` equal slices.

    Parameters
    ----------
    model : SystemModel
    phi0 : array_like, shape (8,)
        Initial momentum vector in meV.
    T : float
        Duration in ns.
    N : int
        Number of control slices; samples are returned at the ``N + 1`` slice
        boundaries.
    substeps : int
        Integrator steps per slice.
    method : {"lawson", "rk4"}
        ``"lawson"`` treats the drift rotation exactly (default); ``"rk4"`` is
        classical RK4 on the full vector field.
    frozen_controls : bool
        Hold the controls at their slice left-endpoint value inside each slice
        instead of letting them follow ``phi`` continuously.  Slow; meant for
        sensitivity studies of the discretisation convention.
    sensitivity : bool
        Also propagate ``dphi/dphi(0)``.

    Raises
    ------
    IntegrationDiverged
        If the state becomes non-finite.
    """
    phi0 = as_coefficients(phi0, "phi0")
    _validate_grid(T, N, substeps)
    N = int(N)
    if frozen_controls:
        phis, sens, failed = _run_frozen(model, phi0, T, N, sensitivity)
    else:
        phis, sens, failed = _run_kernel(model, phi0, T, N, int(substeps), method, sensitivity)
        if not sensitivity:
            sens = None
    dt = T / N
    if failed >= 0:
        raise IntegrationDiverged((failed + 1) * dt)
    times = np.arange(N + 1) * dt
    return MomentumTrajectory(times=times, phi=phis, sensitivity=sens, dt=dt)


def integrate_momentum(model: SystemModel, phi0, T: float, N: int, substeps: int = 4, **kwargs):
    """Same as :func:`integrate_with_sensitivity` without the sensitivity matrices."""
    return integrate_with_sensitivity(model, phi0, T, N, substeps, sensitivity=False, **kwargs)
