"""Newton stepping, momentum initialization, and rollout behavior."""

import numpy as np
import pytest
from conftest import ConstantField, FreeParticleField

from laglearn import integrator, systems
from laglearn.integrator import (
    NewtonConfig,
    NewtonDiverged,
    SingularJacobian,
    del_residual,
    discrete_momentum,
    initialize,
    rollout,
    step,
)

DT = 0.125  # dyadic step: free-particle arithmetic stays exact in floating point


def harmonic_dlag(dt):
    return systems.MidpointLagrangian(systems.harmonic_oscillator(), dt)


def harmonic_reference(q0, q1, n_steps, dt):
    """Closed-form midpoint discrete flow: q_{k+1} = 2 kappa q_k - q_{k-1}."""
    kappa = (1 - dt**2 / 4) / (1 + dt**2 / 4)
    pts = [q0, q1]
    for _ in range(n_steps - 1):
        pts.append(2 * kappa * pts[-1] - pts[-2])
    return np.array(pts)


class TestDelResidual:
    def test_free_particle_uniform_motion_is_zero(self):
        field = FreeParticleField(DT)
        res = del_residual(field, np.array([0.0]), np.array([1.0]), np.array([2.0]))
        np.testing.assert_allclose(res, [0.0], atol=1e-14)

    def test_free_particle_wrong_extrapolation(self):
        field = FreeParticleField(DT)
        res = del_residual(field, np.array([0.0]), np.array([1.0]), np.array([3.0]))
        np.testing.assert_allclose(res, [-1.0 / DT], rtol=1e-14)

    def test_constant_field_residual_zero(self):
        res = del_residual(ConstantField(5.0), np.zeros(2), np.ones(2), 2 * np.ones(2))
        np.testing.assert_array_equal(res, np.zeros(2))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            del_residual(FreeParticleField(DT), np.zeros(2), np.zeros(1), np.zeros(1))


class TestStep:
    def test_free_particle_linear(self):
        nxt = step(FreeParticleField(DT), np.array([0.0]), np.array([1.0]))
        assert nxt[0] == pytest.approx(2.0, abs=1e-14)

    def test_harmonic_oscillator_matches_closed_form(self):
        dt = 0.1
        dlag = harmonic_dlag(dt)
        ref = harmonic_reference(np.array([1.0]), np.array([0.995]), 20, dt)
        cfg = NewtonConfig(tolerance=1e-13)
        for k in range(1, 20):
            nxt = step(dlag, ref[k - 1], ref[k], cfg)
            np.testing.assert_allclose(nxt, ref[k + 1], atol=1e-12)

    def test_constant_field_singular_jacobian(self):
        with pytest.raises(SingularJacobian):
            step(ConstantField(1.0), np.zeros(2), np.ones(2))

    def test_divergence_reports_residual(self):
        # One iteration cannot solve a nonlinear step from a poor state.
        dlag = systems.MidpointLagrangian(systems.cartpend(), 0.5)
        cfg = NewtonConfig(tolerance=1e-14, max_iterations=1)
        with pytest.raises(NewtonDiverged) as excinfo:
            step(dlag, np.array([0.0, 0.1]), np.array([2.0, 2.5]), cfg)
        assert excinfo.value.iterations == 1
        assert excinfo.value.residual_norm > 1e-14


class TestInitialize:
    def test_free_particle_momentum_relation(self):
        q1 = initialize(FreeParticleField(DT), np.array([0.0]), np.array([1.0]))
        assert q1[0] == pytest.approx(DT, abs=1e-15)

    def test_zero_momentum_at_equilibrium_stays_put(self):
        dlag = harmonic_dlag(0.1)
        q1 = initialize(dlag, np.array([0.0]), np.array([0.0]))
        np.testing.assert_allclose(q1, [0.0], atol=1e-12)

    def test_matches_generate_output_bit_for_bit(self):
        system = systems.cartpend()
        q0 = np.array([0.0, np.pi - 0.4])
        p0 = system.momentum(q0, np.array([0.1, 0.0]))
        fine_dt = 1e-3
        traj = systems.generate(system, q0, p0, fine_dt, 1e-2, 5)
        dlag = systems.MidpointLagrangian(system, fine_dt)
        q1 = initialize(dlag, q0, p0)
        manual = rollout(dlag, q0, q1, 50).trajectory.points[::10]
        np.testing.assert_array_equal(traj.points, manual)


class TestDiscreteMomentum:
    def test_free_particle_difference_quotient(self):
        p = discrete_momentum(FreeParticleField(DT), np.array([1.0]), np.array([3.0]))
        assert p[0] == pytest.approx(2.0 / DT, rel=1e-14)

    def test_constant_field_zero(self):
        p = discrete_momentum(ConstantField(2.0), np.zeros(2), np.ones(2))
        np.testing.assert_array_equal(p, np.zeros(2))

    def test_cartpend_translation_momentum_constant_along_rollout(self):
        system = systems.cartpend()
        dlag = systems.MidpointLagrangian(system, 0.01)
        q0 = np.array([0.0, np.pi - 0.5])
        p0 = system.momentum(q0, np.array([0.2, 0.0]))
        cfg = NewtonConfig(tolerance=1e-12)
        q1 = initialize(dlag, q0, p0, cfg)
        pts = rollout(dlag, q0, q1, 200, cfg).trajectory.points
        momenta = np.array(
            [discrete_momentum(dlag, pts[k], pts[k + 1])[0] for k in range(200)]
        )
        assert momenta.max() - momenta.min() < 1e-9


class TestRollout:
    def test_free_particle_exact_progression(self):
        field = FreeParticleField(DT)
        result = rollout(field, np.array([0.0]), np.array([DT]), 1000)
        assert result.ok
        expected = np.arange(1001) * DT
        np.testing.assert_array_equal(result.trajectory.points[:, 0], expected)

    def test_harmonic_energy_bounded_long_run(self):
        dt = 0.1
        dlag = harmonic_dlag(dt)
        q0 = np.array([1.0])
        q1 = initialize(dlag, q0, np.array([0.0]))
        result = rollout(dlag, q0, q1, 10_000)
        assert result.ok
        pts = result.trajectory.points
        # Discrete energy from discrete momenta: exactly conserved up to solver
        # tolerance for this linear system, so no secular drift can survive.
        momenta = np.array(
            [discrete_momentum(dlag, pts[k], pts[k + 1])[0] for k in range(0, 10_000, 100)]
        )
        qs = pts[:-1:100, 0]
        energy = 0.5 * (momenta**2 + qs**2)
        assert energy.max() - energy.min() < 1e-8
        assert np.all(np.abs(pts[:, 0]) < 1.01)

    def test_rollout_triples_satisfy_residual_tolerance(self):
        system = systems.cartpend()
        dlag = systems.MidpointLagrangian(system, 0.01)
        q0 = np.array([0.0, np.pi - 0.5])
        q1 = initialize(dlag, q0, system.momentum(q0, np.array([0.2, 0.0])))
        cfg = NewtonConfig(tolerance=1e-10)
        result = rollout(dlag, q0, q1, 100, cfg)
        assert result.ok
        pts = result.trajectory.points
        for k in range(1, 100):
            res = del_residual(dlag, pts[k - 1], pts[k], pts[k + 1])
            assert np.linalg.norm(res) <= 1e-10

    def test_failure_keeps_partial_results(self):
        result = rollout(ConstantField(1.0), np.zeros(2), np.ones(2), 10)
        assert not result.ok
        assert result.failure.index == 2
        assert isinstance(result.failure.error, SingularJacobian)
        assert result.trajectory.points.shape == (2, 2)

    def test_reversed_rollout_returns_to_start(self):
        system = systems.cartpend()
        dlag = systems.MidpointLagrangian(system, 0.01)
        cfg = NewtonConfig(tolerance=1e-12)
        q0 = np.array([0.0, np.pi - 0.5])
        q1 = initialize(dlag, q0, system.momentum(q0, np.array([0.2, 0.0])), cfg)
        fwd = rollout(dlag, q0, q1, 100, cfg).trajectory.points
        back = rollout(dlag, fwd[-1], fwd[-2], 100, cfg).trajectory.points
        np.testing.assert_allclose(back[::-1], fwd, atol=1e-8)

    def test_rollout_rejects_bad_step_count(self):
        with pytest.raises(ValueError):
            rollout(FreeParticleField(DT), np.zeros(1), np.ones(1), 0)


def test_newton_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(tolerance=0.0)
    with pytest.raises(ValueError):
        NewtonConfig(max_iterations=0)
    with pytest.raises(ValueError):
        NewtonConfig(damping=0.0)
