"""Density-matrix propagation under piecewise-constant controls.

Each slice Hamiltonian is diagonalised, ``H = T diag(gamma) T^dag``, and the
slice propagator ``U = T exp(-i gamma dt / hbar) T^dag`` is applied exactly.
The same eigensystems give the exact derivative of the final fidelity with
respect to every slice control value.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .su3 import basis, hamiltonians_from_coefficients
from .systems import SystemModel
from .units import HBAR_MEV_NS

#: Below this value of |gamma_b - gamma_a| dt / hbar the degenerate limit is used.
DEGENERACY_THRESHOLD = 1e-9


@dataclass(frozen=True, eq=False)
class PiecewiseControls:
    """Physical control values, one row per slice, held constant over ``dt``."""

    values: np.ndarray
    dt: float
    model: SystemModel

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1 and self.model.n_controls == 1:
            values = values[:, None]
        if values.ndim != 2 or values.shape[1] != self.model.n_controls or len(values) < 1:
            raise ValueError(
                f"controls must have shape (N >= 1, {self.model.n_controls}), got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("control values must be finite")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be positive")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n_slices(self) -> int:
        return self.values.shape[0]

    @property
    def duration(self) -> float:
        return self.n_slices * self.dt

    @property
    def times(self) -> np.ndarray:
        """Slice left endpoints."""
        return np.arange(self.n_slices) * self.dt

    def hamiltonians(self) -> np.ndarray:
        """Traceless slice Hamiltonians, shape ``(N, 3, 3)``."""
        return hamiltonians_from_coefficients(self.model.coefficients(self.values))

    def scaled(self, factor: float) -> "PiecewiseControls":
        return PiecewiseControls(self.values * factor, self.dt, self.model)


@dataclass(frozen=True)
class EigenSystem3:
    """Eigen-decomposition ``H = basis @ diag(gamma) @ basis^dag``.

    ``analytic`` is False when the closed form was unavailable and a numerical
    solver produced the result.
    """

    gamma: np.ndarray
    basis: np.ndarray
    analytic: bool = False

    def reconstruct(self) -> np.ndarray:
        return (self.basis * self.gamma) @ self.basis.conj().T


# -- states ----------------------------------------------------------------


def site_projector(site: int) -> np.ndarray:
    """Pure state with the electron on ``site`` (1-based)."""
    if site not in (1, 2, 3):
        raise ValueError(f"site must be 1, 2 or 3, got {site}")
    rho = np.zeros((3, 3), dtype=np.complex128)
    rho[site - 1, site - 1] = 1.0
    return rho


def validate_density_matrix(rho, atol: float = 1e-12) -> np.ndarray:
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.shape != (3, 3):
        raise ValueError(f"density matrix must be 3x3, got {rho.shape}")
    if np.abs(rho - rho.conj().T).max() > atol:
        raise ValueError("density matrix must be Hermitian")
    if abs(np.trace(rho) - 1.0) > atol:
        raise ValueError("density matrix must have unit trace")
    if np.linalg.eigvalsh(rho).min() < -1e-10:
        raise ValueError("density matrix must be positive semidefinite")
    return rho


# -- eigensystems and propagators ------------------------------------------


def eigensystem(h) -> EigenSystem3:
    gamma, vecs = np.linalg.eigh(np.asarray(h, dtype=np.complex128))
    return EigenSystem3(gamma=gamma, basis=vecs, analytic=False)


def analytic_donor_eigensystem(
    omega12: float, omega23: float, delta: float, *, traceless: bool = True
) -> EigenSystem3:
    """Closed-form eigensystem of the donor-chain Hamiltonian.

    With ``traceless=True`` the eigenvalues are those of the propagated
    (global-phase-free) Hamiltonian: ``-delta/3`` and ``(delta +- 3 g1)/6``.
    With ``traceless=False`` they are shifted by ``+delta/3`` and reconstruct
    the matrix with ``delta`` on the middle site.  Eigenvectors are identical in
    both cases.  Degenerate inputs (both tunnel rates zero) fall back to the
    numerical solver, flagged by ``analytic=False``.
    """
    gammas, vecs, ok = _analytic_donor_batch(
        np.atleast_1d(float(omega12)), np.atleast_1d(float(omega23)), float(delta)
    )
    shift = 0.0 if traceless else delta / 3.0
    if not ok[0]:
        from .systems import donor_chain_matrix

        h = donor_chain_matrix(delta, omega12, omega23)
        if traceless:
            h = h - delta / 3.0 * np.eye(3)
        es = eigensystem(h)
        return EigenSystem3(gamma=es.gamma, basis=es.basis, analytic=False)
    return EigenSystem3(gamma=gammas[0] + shift, basis=vecs[0].astype(np.complex128), analytic=True)


def _analytic_donor_batch(o12: np.ndarray, o23: np.ndarray, delta: float):
    """Vectorised closed form; returns (gamma, T, ok) with traceless eigenvalues."""
    g2sq = o12**2 + o23**2
    g2 = np.sqrt(g2sq)
    g1 = np.sqrt(delta**2 + 4.0 * g2sq)
    ok = g2 > 0.0
    # g1 +- delta without cancellation: (g1 + delta)(g1 - delta) = 4 g2^2
    with np.errstate(divide="ignore", invalid="ignore"):
        if delta >= 0:
            gp = g1 + delta
            gm = np.where(ok, 4.0 * g2sq / gp, 0.0)
        else:
            gm = g1 - delta
            gp = np.where(ok, 4.0 * g2sq / gm, 0.0)
        ok &= (gp > 0) & (gm > 0)
        n2 = np.sqrt(g1 * gp / 2.0)
        n3 = np.sqrt(g1 * gm / 2.0)
        T = np.zeros(o12.shape + (3, 3))
        T[..., 0, 0] = -o23 / g2
        T[..., 2, 0] = o12 / g2
        T[..., 0, 1] = o12 / n2
        T[..., 1, 1] = -np.sqrt(gp / (2.0 * g1))
        T[..., 2, 1] = o23 / n2
        T[..., 0, 2] = o12 / n3
        T[..., 1, 2] = np.sqrt(gm / (2.0 * g1))
        T[..., 2, 2] = o23 / n3
    gamma = np.stack(
        [np.full_like(g1, -delta / 3.0), (delta + 3.0 * g1) / 6.0, (delta - 3.0 * g1) / 6.0],
        axis=-1,
    )
    return gamma, T, ok


def slice_eigensystems(controls: PiecewiseControls, use_analytic: bool | None = None):
    """Eigenvalues ``(N, 3)`` and eigenvectors ``(N, 3, 3)`` of every slice."""
    model = controls.model
    if use_analytic is None:
        use_analytic = model.name == "donor_chain"
    hams = controls.hamiltonians()
    if use_analytic and model.name == "donor_chain":
        delta = model.parameters["delta"]
        gamma, T, ok = _analytic_donor_batch(controls.values[:, 0], controls.values[:, 1], delta)
        T = T.astype(np.complex128)
        if not np.all(ok):
            g_num, t_num = np.linalg.eigh(hams[~ok])
            gamma[~ok] = g_num
            T[~ok] = t_num
        return gamma, T
    return np.linalg.eigh(hams)


def _unitaries(gamma: np.ndarray, T: np.ndarray, dt: float) -> np.ndarray:
    phases = np.exp(-1j * gamma * (dt / HBAR_MEV_NS))
    return np.einsum("...ab,...b,...cb->...ac", T, phases, T.conj())


def slice_propagator(h, dt: float) -> np.ndarray:
    """``exp(-i H dt / hbar)`` for a Hermitian ``H`` in meV and ``dt`` in ns."""
    es = eigensystem(h)
    return _unitaries(es.gamma, es.basis, dt)


def slice_unitaries(controls: PiecewiseControls, use_analytic: bool | None = None) -> np.ndarray:
    gamma, T = slice_eigensystems(controls, use_analytic)
    return _unitaries(gamma, T, controls.dt)


def propagate(rho0, controls: PiecewiseControls, use_analytic: bool | None = None) -> np.ndarray:
    """States ``rho_0 .. rho_N`` as an ``(N + 1, 3, 3)`` array."""
    rho0 = validate_density_matrix(rho0)
    U = np.ascontiguousarray(slice_unitaries(controls, use_analytic))
    return _kernels.forward_states(rho0, U)


def fidelity(rho_final, rho_target) -> float:
    """``Re tr(rho_target rho_final)``."""
    return float(np.real(np.trace(np.asarray(rho_target) @ np.asarray(rho_final))))


def populations(states: np.ndarray) -> np.ndarray:
    """Site populations (diagonal) of a stack of density matrices."""
    return np.real(np.einsum("kii->ki", states))


def fluence(controls: PiecewiseControls) -> float:
    """Time integral of the running cost over the piecewise-constant pulse."""
    return float(np.sum(controls.model.running_cost(controls.values)) * controls.dt)


def _phi_matrix(gamma: np.ndarray, dt: float) -> np.ndarray:
    # Phi_ab = int_0^dt exp(i (gamma_b - gamma_a) tau / hbar) dtau
    omega = (gamma[..., None, :] - gamma[..., :, None]) / HBAR_MEV_NS
    x = omega * dt
    small = np.abs(x) < DEGENERACY_THRESHOLD
    safe = np.where(small, 1.0, omega)
    out = (np.exp(1j * x) - 1.0) / (1j * safe)
    return np.where(small, dt, out)


@dataclass(frozen=True, eq=False)
class GradientResult:
    fidelity: float
    canonical: np.ndarray
    physical: np.ndarray
    forward: np.ndarray
    backward: np.ndarray


def fidelity_and_gradient(
    controls: PiecewiseControls, rho0, rho_target, use_analytic: bool | None = None
) -> GradientResult:
    """Fidelity plus its exact gradient w.r.t. canonical and physical controls."""
    rho0 = validate_density_matrix(rho0)
    rho_target = validate_density_matrix(rho_target)
    model = controls.model
    gamma, T = slice_eigensystems(controls, use_analytic)
    U = np.ascontiguousarray(_unitaries(gamma, T, controls.dt))
    fwd = _kernels.forward_states(rho0, U)
    bwd = _kernels.backward_states(rho_target, U)
    lam, rho = bwd[1:], fwd[1:]
    comm = lam @ rho - rho @ lam
    # tr(comm T ((T^dag X T) o Phi) T^dag) = tr((T^dag comm T) ((T^dag X T) o Phi))
    comm_eig = T.conj().transpose(0, 2, 1) @ comm @ T
    phi_mat = _phi_matrix(gamma, controls.dt)
    X = basis()[model.active_slice]
    x_eig = np.einsum("kba,mbc,kcd->kmad", T.conj(), X, T)
    grad = np.einsum("kda,kmad->km", comm_eig, x_eig * phi_mat[:, None]).real / HBAR_MEV_NS
    physical = grad @ model.canonical_from_phys
    return GradientResult(
        fidelity=fidelity(fwd[-1], rho_target),
        canonical=grad,
        physical=physical,
        forward=fwd,
        backward=bwd,
    )


def gradient_wrt_controls(controls: PiecewiseControls, rho0, rho_target) -> np.ndarray:
    """``dF/dy_m(k)`` for every slice ``k`` and physical control ``m``, shape ``(N, p)``."""
    return fidelity_and_gradient(controls, rho0, rho_target).physical
