import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shuttle_control.propagator import (
    PiecewiseControls,
    _phi_matrix,
    analytic_donor_eigensystem,
    eigensystem,
    fidelity,
    fidelity_and_gradient,
    fluence,
    gradient_wrt_controls,
    populations,
    propagate,
    site_projector,
    slice_eigensystems,
    slice_propagator,
    slice_unitaries,
    validate_density_matrix,
)
from shuttle_control.su3 import SQRT3
from shuttle_control.systems import donor_chain_matrix, donor_chain_model, triple_dot_model
from shuttle_control.units import HBAR_MEV_NS

DELTA = 2.7
DOT = triple_dot_model(-0.07, -0.14)
DONOR = donor_chain_model(DELTA)
RHO1, RHO3 = site_projector(1), site_projector(3)


def _random_hermitian(rng, scale=1.0):
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    return scale * (a + a.conj().T) / 2


def _random_controls(model, n, scale, seed):
    rng = np.random.default_rng(seed)
    return PiecewiseControls(rng.uniform(-scale, scale, size=(n, 2)), 1.0 / n, model)


# -- controls container -----------------------------------------------------


def test_controls_validation():
    with pytest.raises(ValueError):
        PiecewiseControls(np.zeros((4, 3)), 0.1, DONOR)
    with pytest.raises(ValueError):
        PiecewiseControls(np.zeros((0, 2)), 0.1, DONOR)
    with pytest.raises(ValueError):
        PiecewiseControls(np.full((2, 2), np.inf), 0.1, DONOR)
    with pytest.raises(ValueError):
        PiecewiseControls(np.zeros((2, 2)), 0.0, DONOR)


def test_controls_properties():
    c = PiecewiseControls(np.ones((4, 2)), 0.25, DONOR)
    assert c.n_slices == 4 and c.duration == 1.0
    np.testing.assert_array_equal(c.times, [0, 0.25, 0.5, 0.75])
    with pytest.raises(ValueError):
        c.values[0, 0] = 2.0


def test_density_matrix_validation():
    with pytest.raises(ValueError):
        validate_density_matrix(np.eye(3))
    with pytest.raises(ValueError):
        validate_density_matrix(np.diag([1.5, -0.5, 0]))
    with pytest.raises(ValueError):
        validate_density_matrix(np.eye(2) / 2)
    with pytest.raises(ValueError):
        site_projector(4)


# -- slice propagators -------------------------------------------------------


def test_zero_hamiltonian_propagator():
    np.testing.assert_allclose(slice_propagator(np.zeros((3, 3)), 0.3), np.eye(3), atol=1e-15)


def test_pi_phase():
    dt = np.pi * HBAR_MEV_NS / DELTA
    u = slice_propagator(np.diag([0, DELTA, 0]), dt)
    np.testing.assert_allclose(u, np.diag([1, -1, 1]), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-4, 1.0))
def test_propagator_unitary(seed, dt):
    u = slice_propagator(_random_hermitian(np.random.default_rng(seed)), dt)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(3), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_eigensystem_reconstructs(seed):
    h = _random_hermitian(np.random.default_rng(seed))
    es = eigensystem(h)
    np.testing.assert_allclose(es.reconstruct(), h, atol=1e-12)
    np.testing.assert_allclose(es.basis.conj().T @ es.basis, np.eye(3), atol=1e-12)


# -- analytic donor eigensystem ---------------------------------------------


def test_analytic_reconstructs_full_matrix():
    es = analytic_donor_eigensystem(0.1, 0.1, DELTA, traceless=False)
    assert es.analytic
    np.testing.assert_allclose(es.reconstruct(), donor_chain_matrix(DELTA, 0.1, 0.1), atol=1e-12)
    np.testing.assert_allclose(es.basis.conj().T @ es.basis, np.eye(3), atol=1e-12)


def test_analytic_eigenvalues():
    g1 = np.sqrt(DELTA**2 + 4 * (0.1**2 + 0.2**2))
    es = analytic_donor_eigensystem(0.1, 0.2, DELTA)
    np.testing.assert_allclose(es.gamma, [-DELTA / 3, (DELTA + 3 * g1) / 6, (DELTA - 3 * g1) / 6])
    for o12, o23 in [(1e-4, 3e-4), (2.0, -1.0), (-0.3, 0.0)]:
        assert analytic_donor_eigensystem(o12, o23, DELTA).gamma[0] == pytest.approx(-DELTA / 3)


def test_analytic_degenerate_falls_back():
    es = analytic_donor_eigensystem(0.0, 0.0, DELTA)
    assert not es.analytic
    np.testing.assert_allclose(es.reconstruct(), np.diag([-0.9, 1.8, -0.9]), atol=1e-12)


def test_analytic_small_tunnelling_stable():
    # tunnel rates 1e-8 of delta: no cancellation in g1 - delta
    es = analytic_donor_eigensystem(3e-8, -2e-8, DELTA, traceless=False)
    np.testing.assert_allclose(es.reconstruct(), donor_chain_matrix(DELTA, 3e-8, -2e-8), atol=1e-14)


@pytest.mark.parametrize("delta", [2.7, -1.3])
def test_analytic_matches_numeric(delta):
    rng = np.random.default_rng(11)
    model = donor_chain_model(delta)
    values = rng.uniform(-1, 1, size=(1000, 2)) * 10.0 ** rng.uniform(-5, 0, size=(1000, 1))
    controls = PiecewiseControls(values, 1e-3, model)
    ga, ta = slice_eigensystems(controls, use_analytic=True)
    gn, tn = slice_eigensystems(controls, use_analytic=False)
    np.testing.assert_allclose(np.sort(ga, axis=1), gn, atol=1e-12)
    rec = lambda g, t: np.einsum("kab,kb,kcb->kac", t, g, t.conj())
    np.testing.assert_allclose(rec(ga, ta), rec(gn, tn), atol=1e-12)


# -- propagation and observables ---------------------------------------------


def test_zero_drift_zero_controls():
    from shuttle_control.systems import SystemModel

    free = SystemModel("free", np.zeros(8), (1, 2), ("a", "b"), np.eye(2), np.eye(2))
    states = propagate(RHO1, PiecewiseControls(np.zeros((5, 2)), 0.2, free))
    for rho in states:
        np.testing.assert_allclose(rho, RHO1, atol=1e-15)


@pytest.mark.parametrize("model", [DOT, DONOR], ids=["dot", "donor"])
def test_states_remain_density_matrices(model):
    states = propagate(RHO1, _random_controls(model, 200, 0.5, 4))
    assert states.shape == (201, 3, 3)
    for rho in states:
        validate_density_matrix(rho, atol=1e-12)
    np.testing.assert_allclose(populations(states).sum(axis=1), 1.0, atol=1e-12)


def test_fidelity_examples():
    assert fidelity(RHO3, RHO3) == 1.0
    assert fidelity(RHO1, RHO3) == 0.0
    assert fidelity(np.eye(3) / 3, RHO3) == pytest.approx(1 / 3)


def test_fluence_examples():
    assert fluence(PiecewiseControls(np.zeros((10, 2)), 0.1, DONOR)) == 0.0
    c = PiecewiseControls(np.column_stack([np.full(10, 0.3), np.zeros(10)]), 0.1, DONOR)
    assert fluence(c) == pytest.approx(0.5 * 0.09 * 1.0)
    rand = _random_controls(DOT, 30, 1.0, 9)
    assert fluence(rand.scaled(2.0)) == pytest.approx(4 * fluence(rand))


def test_analytic_and_numeric_propagation_agree():
    c = _random_controls(DONOR, 300, 0.05, 2)
    a = propagate(RHO1, c, use_analytic=True)
    b = propagate(RHO1, c, use_analytic=False)
    np.testing.assert_allclose(a, b, atol=1e-11)


# -- gradient -----------------------------------------------------------------


def test_phi_matrix_degenerate_limit():
    gamma = np.array([[0.1, 0.1, 0.1 + 1e-16]])
    np.testing.assert_allclose(_phi_matrix(gamma, 0.01), np.full((1, 3, 3), 0.01))
    gamma = np.array([[0.0, 1.0, -1.0]])
    dt = 0.01
    w = (gamma[0, 1] - gamma[0, 0]) / HBAR_MEV_NS
    assert _phi_matrix(gamma, dt)[0, 0, 1] == pytest.approx((np.exp(1j * w * dt) - 1) / (1j * w))


@pytest.mark.parametrize(("model", "scale"), [(DOT, 0.3), (DONOR, 0.05)], ids=["dot", "donor"])
def test_control_gradient_finite_differences(model, scale):
    controls = _random_controls(model, 50, scale, 1)
    grad = gradient_wrt_controls(controls, RHO1, RHO3)
    h = 1e-6
    fd = np.zeros_like(grad)
    for k in range(50):
        for m in range(2):
            for sign in (1, -1):
                v = controls.values.copy()
                v[k, m] += sign * h
                f = fidelity(propagate(RHO1, PiecewiseControls(v, controls.dt, model))[-1], RHO3)
                fd[k, m] += sign * f / (2 * h)
    assert np.abs(fd - grad).max() / np.abs(grad).max() <= 1e-5


def test_canonical_gradient_chain():
    controls = _random_controls(DOT, 20, 0.3, 3)
    g = fidelity_and_gradient(controls, RHO1, RHO3)
    np.testing.assert_allclose(g.physical, g.canonical @ DOT.canonical_from_phys)
    # mu_L = 2 u7 so dF/du7 contains 2 dF/dmu_L + dF/dmu_R
    np.testing.assert_allclose(g.canonical[:, 0], 2 * g.physical[:, 0] + g.physical[:, 1])
    np.testing.assert_allclose(g.canonical[:, 1], -SQRT3 * g.physical[:, 1])


@pytest.mark.parametrize("model", [DOT, DONOR], ids=["dot", "donor"])
def test_forward_backward_invariant(model):
    g = fidelity_and_gradient(_random_controls(model, 200, 0.2, 8), RHO1, RHO3)
    overlaps = np.real(np.einsum("kab,kba->k", g.backward, g.forward))
    assert np.ptp(overlaps) <= 1e-12
    assert overlaps[0] == pytest.approx(g.fidelity, abs=1e-12)


def test_gradient_vanishes_with_identical_target():
    # rho_target = rho0 and zero pulse: F = 1 at the maximum for the donor with
    # no tunnelling, since site 1 is then an eigenstate
    c = PiecewiseControls(np.zeros((20, 2)), 0.05, DONOR)
    g = fidelity_and_gradient(c, RHO1, RHO1)
    assert g.fidelity == pytest.approx(1.0)
    assert np.abs(g.physical).max() <= 1e-12


def test_unitaries_shape():
    u = slice_unitaries(_random_controls(DONOR, 7, 0.1, 0))
    assert u.shape == (7, 3, 3)
