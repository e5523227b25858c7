"""Gradient ascent on the initial momentum vector.

The fidelity depends on the whole pulse only through the eight numbers
``phi(0)``: they fix the momentum trajectory, the trajectory fixes the slice
controls, and the controls fix the final state.  The gradient is assembled by
the chain rule

    dF/dphi_l(0) = sum_k sum_m dF/du_m(k) * du_m/dphi_s * dphi_s(t_k)/dphi_l(0)

from the exact slice gradient, the constant control map and the integrated
sensitivity matrices.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .lie_poisson import INTEGRATORS, IntegrationDiverged, integrate_with_sensitivity
from .propagator import PiecewiseControls, fidelity, fidelity_and_gradient, fluence, propagate, site_projector
from .su3 import SQRT3, as_coefficients
from .systems import SystemModel

log = logging.getLogger(__name__)

#: Per-model defaults that depend on the time scales of the drift.
MODEL_DEFAULTS = {
    "donor_chain": {"N": 8000, "substeps": 4, "init_scale": 1e-4},
    "triple_dot": {"N": 500, "substeps": 32, "init_scale": 0.05},
}


class OptimizationFailed(RuntimeError):
    """Every restart diverged; ``diagnostics`` holds one message per restart."""

    def __init__(self, diagnostics: list[str]):
        super().__init__("all restarts diverged:\n  " + "\n  ".join(diagnostics))
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class OptimizerConfig:
    T: float = 1.0
    N: int = 500
    substeps: int = 4
    epsilon0: float | None = None
    max_iters: int = 5000
    fidelity_target: float = 0.999
    grad_tol: float = 1e-8
    restarts: int = 8
    seed: int = 0
    init_scale: float = 0.05
    integrator: str = "lawson"
    frozen_controls: bool = False
    initial_site: int = 1
    target_site: int = 3
    max_halvings: int = 40
    growth: float = 1.5
    max_step_fraction: float | None = 0.25
    stop_at_target: bool = False
    stall_window: int | None = 50
    stall_fraction: float = 0.25

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError("T must be positive")
        if int(self.N) != self.N or self.N < 1:
            raise ValueError("N must be a positive integer")
        if int(self.substeps) != self.substeps or self.substeps < 1:
            raise ValueError("substeps must be a positive integer")
        if not 0 < self.fidelity_target <= 1:
            raise ValueError("fidelity_target must lie in (0, 1]")
        if self.restarts < 1:
            raise ValueError("restarts must be at least 1")
        if self.max_iters < 0:
            raise ValueError("max_iters must be non-negative")
        if not self.init_scale > 0:
            raise ValueError("init_scale must be positive")
        if self.epsilon0 is not None and not self.epsilon0 > 0:
            raise ValueError("epsilon0 must be positive")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"integrator must be one of {INTEGRATORS}")
        if self.max_step_fraction is not None and not self.max_step_fraction > 0:
            raise ValueError("max_step_fraction must be positive or None")
        if self.stall_window is not None and self.stall_window < 1:
            raise ValueError("stall_window must be positive or None")
        if not 0 <= self.stall_fraction < 1:
            raise ValueError("stall_fraction must lie in [0, 1)")
        if self.initial_site == self.target_site:
            raise ValueError("initial and target sites must differ")

    @classmethod
    def for_model(cls, model: SystemModel, **overrides) -> "OptimizerConfig":
        params = dict(MODEL_DEFAULTS.get(model.name, {}))
        params.update(overrides)
        return cls(**params)

    def step0(self, gradient_norm: float) -> float:
        """Initial ascent step; by default the first trial moves phi by init_scale / 10."""
        if self.epsilon0 is not None:
            return self.epsilon0
        if gradient_norm == 0.0:
            return self.init_scale**2
        return 0.1 * self.init_scale / gradient_norm

    @property
    def rho0(self) -> np.ndarray:
        return site_projector(self.initial_site)

    @property
    def rho_target(self) -> np.ndarray:
        return site_projector(self.target_site)


@dataclass
class OptimizationResult:
    phi0_star: np.ndarray
    fidelity: float
    fluence: float
    controls: PiecewiseControls
    history: list[tuple[int, float, float, float]]
    converged: bool
    restart_index: int
    reason: str = ""
    restarts: list[dict] = field(default_factory=list)


def du_dphi(model: SystemModel) -> np.ndarray:
    """Constant ``(p, 8)`` matrix of ``du_m/dphi_s`` over the active controls."""
    return model.momentum_map[model.active_slice]


def pulse_from_momentum(model: SystemModel, phi0, config: OptimizerConfig, trajectory=None):
    """Physical piecewise-constant pulse generated by ``phi0``."""
    if trajectory is None:
        trajectory = integrate_with_sensitivity(
            model, phi0, config.T, config.N, config.substeps,
            method=config.integrator, frozen_controls=config.frozen_controls, sensitivity=False,
        )
    values = model.physical_controls(trajectory.phi[:-1])
    return PiecewiseControls(values, trajectory.dt, model)


def evaluate_fidelity(model: SystemModel, phi0, config: OptimizerConfig) -> float:
    controls = pulse_from_momentum(model, phi0, config)
    return fidelity(propagate(config.rho0, controls)[-1], config.rho_target)


@dataclass(frozen=True, eq=False)
class InitialGradient:
    fidelity: float
    gradient: np.ndarray
    control_gradient: np.ndarray
    trajectory: object
    controls: PiecewiseControls


def _initial_gradient(model, phi0, config) -> InitialGradient:
    traj = integrate_with_sensitivity(
        model, phi0, config.T, config.N, config.substeps,
        method=config.integrator, frozen_controls=config.frozen_controls,
    )
    controls = pulse_from_momentum(model, phi0, config, traj)
    g = fidelity_and_gradient(controls, config.rho0, config.rho_target)
    grad = np.einsum("km,ms,ksl->l", g.canonical, du_dphi(model), traj.sensitivity[:-1])
    return InitialGradient(g.fidelity, grad, g.canonical, traj, controls)


def fidelity_gradient_wrt_initial(model: SystemModel, phi0, config: OptimizerConfig) -> np.ndarray:
    """``dF/dphi(0)`` by the generic chain rule."""
    return _initial_gradient(model, as_coefficients(phi0, "phi0"), config).gradient


def donor_gradient_expanded(control_gradient: np.ndarray, sensitivity: np.ndarray) -> np.ndarray:
    """Donor-chain chain rule written out: controls follow phi_1 and phi_2 one to one."""
    g1, g2 = control_gradient[:, 0], control_gradient[:, 1]
    Y = sensitivity[: len(g1)]
    return (g1[:, None] * Y[:, 0, :] + g2[:, None] * Y[:, 1, :]).sum(axis=0)


def triple_dot_gradient_expanded(control_gradient: np.ndarray, sensitivity: np.ndarray) -> np.ndarray:
    """Triple-dot chain rule written out with the fixed control-map weights."""
    g7, g8 = control_gradient[:, 0], control_gradient[:, 1]
    Y = sensitivity[: len(g7)]
    y7, y8 = Y[:, 6, :], Y[:, 7, :]
    w = 1.0 / (4.0 * SQRT3)
    terms = (
        0.25 * g7[:, None] * y7
        + w * g7[:, None] * y8
        + w * g8[:, None] * y7
        + 5.0 / 12.0 * g8[:, None] * y8
    )
    return terms.sum(axis=0)


def _initial_guess(config: OptimizerConfig, restart: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, restart]))
    return rng.uniform(-config.init_scale, config.init_scale, size=8)


def _ascend(model, phi, config, restart):
    current = _initial_gradient(model, phi, config)
    history = [(0, current.fidelity, float(np.linalg.norm(current.gradient)), 0.0)]
    step = config.step0(history[0][2])
    reason = "max_iters"
    for it in range(1, config.max_iters + 1):
        f, grad = current.fidelity, current.gradient
        gnorm = float(np.linalg.norm(grad))
        if f >= config.fidelity_target:
            reason = "fidelity_target"
            break
        if gnorm <= config.grad_tol:
            reason = "grad_tol"
            break
        accepted = None
        trial_step = step
        if config.max_step_fraction is not None:
            # keep |delta phi| a fraction of |phi| so the momentum norm (and with it
            # the pulse amplitude) grows gradually from the initial guess
            cap = config.max_step_fraction * max(float(np.linalg.norm(phi)), config.init_scale)
            trial_step = min(trial_step, cap / gnorm)
        for halving in range(config.max_halvings + 1):
            trial = phi + trial_step * grad
            try:
                f_trial = evaluate_fidelity(model, trial, config)
            except IntegrationDiverged:
                f_trial = -np.inf
            if f_trial > f:
                accepted = (trial, trial_step, halving)
                break
            trial_step *= 0.5
        if accepted is None:
            reason = "line_search_stalled"
            break
        phi, used, halvings = accepted
        current = _initial_gradient(model, phi, config)
        step = used * config.growth if halvings == 0 else used
        history.append((it, current.fidelity, float(np.linalg.norm(current.gradient)), used))
        log.debug("restart %d iter %d F=%.8f |g|=%.3e eps=%.3e", restart, it, current.fidelity,
                  history[-1][2], used)
        window = config.stall_window
        if window is not None and it >= window and current.fidelity < config.fidelity_target:
            # abandon a run that closed less than stall_fraction of its remaining
            # infidelity over the last `window` iterations
            f_old = history[it - window][1]
            if current.fidelity - f_old < config.stall_fraction * (1.0 - f_old):
                reason = "stalled"
                break
    else:
        if current.fidelity >= config.fidelity_target:
            reason = "fidelity_target"
        elif np.linalg.norm(current.gradient) <= config.grad_tol:
            reason = "grad_tol"
    return phi, current, history, reason


def optimize(model: SystemModel, config: OptimizerConfig, initial_phi0=None) -> OptimizationResult:
    """Maximise the transfer fidelity over ``phi(0)`` with seeded restarts.

    ``initial_phi0``, when given, replaces the random guess of the first
    restart.  The best restart (highest fidelity, lowest index on ties) is
    returned.
    """
    best = None
    summaries = []
    diagnostics = []
    for r in range(config.restarts):
        phi_init = (
            as_coefficients(initial_phi0, "initial_phi0").copy()
            if (initial_phi0 is not None and r == 0)
            else _initial_guess(config, r)
        )
        try:
            phi, current, history, reason = _ascend(model, phi_init, config, r)
        except IntegrationDiverged as exc:
            diagnostics.append(f"restart {r}: {exc}")
            summaries.append({"restart": r, "diverged": True, "message": str(exc)})
            continue
        converged = reason in ("fidelity_target", "grad_tol")
        summaries.append({
            "restart": r,
            "diverged": False,
            "fidelity": current.fidelity,
            "iterations": history[-1][0],
            "reason": reason,
        })
        log.info("restart %d: F=%.6f after %d iterations (%s)", r, current.fidelity,
                 history[-1][0], reason)
        if best is None or current.fidelity > best[1].fidelity:
            best = (r, current, phi, history, reason, converged)
        if config.stop_at_target and reason == "fidelity_target":
            break
    if best is None:
        raise OptimizationFailed(diagnostics)
    r, current, phi, history, reason, converged = best
    return OptimizationResult(
        phi0_star=phi,
        fidelity=current.fidelity,
        fluence=fluence(current.controls),
        controls=current.controls,
        history=history,
        converged=converged,
        restart_index=r,
        reason=reason,
        restarts=summaries,
    )


def with_resolution(config: OptimizerConfig, N: int, **changes) -> OptimizerConfig:
    return replace(config, N=N, **changes)
