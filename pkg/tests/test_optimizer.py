import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shuttle_control.lie_poisson import integrate_with_sensitivity
from shuttle_control.optimizer import (
    OptimizationFailed,
    OptimizerConfig,
    donor_gradient_expanded,
    du_dphi,
    evaluate_fidelity,
    fidelity_gradient_wrt_initial,
    optimize,
    pulse_from_momentum,
    triple_dot_gradient_expanded,
    _initial_gradient,
)
from shuttle_control.su3 import SQRT3
from shuttle_control.systems import donor_chain_model, triple_dot_model

DOT = triple_dot_model(-0.07, -0.14)
DONOR = donor_chain_model(2.7)


def test_du_dphi_donor():
    expected = np.zeros((2, 8))
    expected[0, 0] = expected[1, 1] = 1.0
    np.testing.assert_array_equal(du_dphi(DONOR), expected)


def test_du_dphi_dot():
    d = du_dphi(DOT)
    assert d.shape == (2, 8)
    np.testing.assert_allclose(d[:, 6:], [[1 / 4, 1 / (4 * SQRT3)], [SQRT3 / 12, 5 / 12]], rtol=1e-14)
    np.testing.assert_array_equal(d[:, :6], 0.0)


@pytest.mark.parametrize(
    "bad",
    [dict(T=0), dict(N=0), dict(fidelity_target=0), dict(fidelity_target=1.1), dict(restarts=0),
     dict(integrator="euler"), dict(init_scale=0), dict(initial_site=3), dict(stall_window=0),
     dict(epsilon0=-1.0)],
)
def test_config_validation(bad):
    with pytest.raises(ValueError):
        OptimizerConfig(**bad)


def test_config_model_defaults():
    assert OptimizerConfig.for_model(DONOR).N == 8000
    assert OptimizerConfig.for_model(DOT, N=100).N == 100
    assert OptimizerConfig().step0(2.0) == pytest.approx(0.1 * 0.05 / 2.0)
    assert OptimizerConfig(epsilon0=1e-3).step0(2.0) == 1e-3


def test_pulse_samples_left_endpoints():
    cfg = OptimizerConfig(N=40, substeps=4)
    phi0 = np.linspace(-0.02, 0.03, 8)
    traj = integrate_with_sensitivity(DOT, phi0, cfg.T, cfg.N, cfg.substeps, sensitivity=False)
    pulse = pulse_from_momentum(DOT, phi0, cfg)
    np.testing.assert_allclose(pulse.values, DOT.physical_controls(traj.phi[:-1]))
    assert pulse.dt == pytest.approx(1 / 40)


def _fd_gradient(model, phi0, cfg):
    h = 1e-7 * max(np.linalg.norm(phi0), cfg.init_scale)
    out = np.zeros(8)
    for j in range(8):
        e = np.zeros(8)
        e[j] = h
        out[j] = (evaluate_fidelity(model, phi0 + e, cfg) - evaluate_fidelity(model, phi0 - e, cfg)) / (2 * h)
    return out


@pytest.mark.parametrize(
    ("model", "cfg"),
    [
        (DONOR, OptimizerConfig(N=2000, substeps=4, init_scale=1e-3)),
        (DOT, OptimizerConfig(N=200, substeps=16, init_scale=0.05)),
    ],
    ids=["donor", "dot"],
)
def test_initial_gradient_finite_differences(model, cfg):
    rng = np.random.default_rng(12)
    phi0 = rng.uniform(-cfg.init_scale, cfg.init_scale, size=8)
    grad = fidelity_gradient_wrt_initial(model, phi0, cfg)
    fd = _fd_gradient(model, phi0, cfg)
    assert np.abs(grad - fd).max() / np.abs(fd).max() <= 1e-4


def test_initial_gradient_frozen_controls():
    cfg = OptimizerConfig(N=60, init_scale=0.05, frozen_controls=True)
    phi0 = np.linspace(-0.04, 0.03, 8)
    grad = fidelity_gradient_wrt_initial(DOT, phi0, cfg)
    fd = _fd_gradient(DOT, phi0, cfg)
    assert np.abs(grad - fd).max() / np.abs(fd).max() <= 1e-4


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_expanded_chain_rule(seed):
    rng = np.random.default_rng(seed)
    for model, expanded, cfg in (
        (DONOR, donor_gradient_expanded, OptimizerConfig(N=300, init_scale=1e-3)),
        (DOT, triple_dot_gradient_expanded, OptimizerConfig(N=100, substeps=8)),
    ):
        phi0 = rng.uniform(-cfg.init_scale, cfg.init_scale, size=8)
        g = _initial_gradient(model, phi0, cfg)
        alt = expanded(g.control_gradient, g.trajectory.sensitivity)
        assert np.abs(alt - g.gradient).max() <= 1e-10 * max(1.0, np.abs(g.gradient).max())


def test_history_monotone_and_deterministic():
    cfg = OptimizerConfig(N=100, substeps=8, max_iters=15, restarts=2, seed=3, stall_window=None)
    a = optimize(DOT, cfg)
    b = optimize(DOT, cfg)
    fids = [h[1] for h in a.history]
    assert all(y >= x for x, y in zip(fids, fids[1:]))
    assert a.history == b.history
    np.testing.assert_array_equal(a.phi0_star, b.phi0_star)
    assert len(a.restarts) == 2


def test_history_records_evaluated_fidelity():
    cfg = OptimizerConfig(N=100, substeps=8, max_iters=5, restarts=1, stall_window=None)
    res = optimize(DOT, cfg)
    assert res.history[-1][1] == res.fidelity
    assert evaluate_fidelity(DOT, res.phi0_star, cfg) == pytest.approx(res.fidelity, abs=1e-12)


def test_grad_tol_termination():
    cfg = OptimizerConfig(N=50, max_iters=10, restarts=1, grad_tol=1e9)
    res = optimize(DOT, cfg)
    assert res.reason == "grad_tol" and res.converged
    assert len(res.history) == 1


def test_target_termination_and_early_stop():
    cfg = OptimizerConfig(N=50, max_iters=10, restarts=4, fidelity_target=1e-9, stop_at_target=True)
    res = optimize(DOT, cfg)
    assert res.reason == "fidelity_target" and res.converged
    assert len(res.restarts) == 1


def test_initial_phi0_used_for_first_restart():
    cfg = OptimizerConfig(N=50, max_iters=0, restarts=1)
    phi0 = np.linspace(-0.01, 0.01, 8)
    res = optimize(DOT, cfg, initial_phi0=phi0)
    np.testing.assert_array_equal(res.phi0_star, phi0)
    assert res.reason == "max_iters" and not res.converged


def test_all_restarts_diverged():
    cfg = OptimizerConfig(N=5, substeps=1, integrator="rk4", init_scale=1e7, restarts=3)
    with pytest.raises(OptimizationFailed) as info:
        optimize(DOT, cfg)
    assert len(info.value.diagnostics) == 3


def test_stall_detection():
    # a single iteration window with an impossible progress requirement
    cfg = OptimizerConfig(N=50, max_iters=20, restarts=1, stall_window=1, stall_fraction=0.999)
    res = optimize(DOT, cfg)
    assert res.reason == "stalled"
    assert res.history[-1][0] == 1


def test_best_restart_selected():
    cfg = OptimizerConfig(N=100, substeps=8, max_iters=3, restarts=3, stall_window=None)
    res = optimize(DOT, cfg)
    finals = [r["fidelity"] for r in res.restarts]
    assert res.fidelity == max(finals)
    assert res.restart_index == finals.index(max(finals))
