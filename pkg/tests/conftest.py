"""Shared test fixtures: finite-difference oracles and simple analytic fields."""

from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np
import pytest

FD_STEP = 1e-5
FD_RTOL = 1e-5
FD_FLOOR = 1e-8


def central_difference(fun, x, step=FD_STEP):
    """Central finite-difference gradient of a scalar function of a flat vector."""
    x = np.asarray(x, dtype=float)
    grad = np.zeros_like(x)
    for i in range(x.size):
        bump = np.zeros_like(x)
        bump[i] = step
        grad[i] = (fun(x + bump) - fun(x - bump)) / (2.0 * step)
    return grad


def assert_close_fd(exact, approx, rtol=FD_RTOL, floor=FD_FLOOR):
    """Relative comparison with an absolute floor, elementwise."""
    exact = np.asarray(exact, dtype=float)
    approx = np.asarray(approx, dtype=float)
    denom = np.maximum(np.abs(exact), np.abs(approx))
    err = np.abs(exact - approx)
    bad = err > np.maximum(rtol * denom, floor)
    assert not bad.any(), (
        f"finite-difference mismatch: max abs err {err.max():.3e}, "
        f"worst rel {np.max(err / np.maximum(denom, 1e-300)):.3e}"
    )


@dataclass(frozen=True)
class BilinearField:
    """value(q0, q1) = q0^T A q1; cross-Hessian equals A."""

    coupling: np.ndarray

    @property
    def n_q(self):
        return np.asarray(self.coupling).shape[0]

    def value(self, q0, q1):
        return q0 @ jnp.asarray(self.coupling) @ q1


@dataclass(frozen=True)
class ConstantField:
    constant: float
    n_q: int = 2

    def value(self, q0, q1):
        return self.constant + 0.0 * (q0[0] + q1[0])


@dataclass(frozen=True)
class FreeParticleField:
    """Exact discrete Lagrangian of force-free motion: |q1 - q0|^2 / (2 dt)."""

    dt: float
    n_q: int = 1

    def value(self, q0, q1):
        diff = q1 - q0
        return diff @ diff / (2.0 * self.dt)


@pytest.fixture(scope="session")
def small_mlp():
    """Seeded width-8 model shared by derivative-oracle tests."""
    from laglearn import model

    return model.init(seed=11, n_q=2, dt=0.1, hidden=(8, 8, 8))


@pytest.fixture(scope="session")
def cartpend_data():
    """Cart-pendulum reference data generated by its own coarse-step integrator.

    Using the same step for generation and training makes the exact midpoint
    discrete Lagrangian an exact minimizer of the stepping-residual loss.
    """
    import numpy as np

    from laglearn import systems

    system = systems.cartpend()
    q0 = np.array([0.0, np.pi - 0.5])
    p0 = system.momentum(q0, np.array([0.2, 0.0]))
    traj = systems.generate(system, q0, p0, 1e-2, 1e-2, 60)
    return system, traj
