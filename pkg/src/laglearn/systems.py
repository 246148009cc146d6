"""Benchmark systems: exact Lagrangians, midpoint discretization, data generation.

Two production systems are shipped: a pendulum on a cart (``cartpend``) and
the planar two-body gravitational problem (``kepler``).  A free particle and a
1-D harmonic oscillator are included as analytically solvable support systems
for tests and order studies.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import jax
import jax.numpy as jnp
import numpy as np

from .model import SymmetryGenerator
from .trajectory import Trajectory


@dataclass(frozen=True)
class System:
    """A mechanical system defined by its continuous Lagrangian.

    ``lagrangian_fn(q, qdot)`` must be traceable.  ``generator`` is the known
    symmetry generator of the system, when there is one to compare against.
    """

    name: str
    n_q: int
    lagrangian_fn: Callable
    params: dict = field(default_factory=dict)
    generator: Optional[SymmetryGenerator] = None

    def lagrangian(self, q, qdot) -> float:
        """Validated Lagrangian value."""
        q = np.asarray(q, dtype=float)
        qdot = np.asarray(qdot, dtype=float)
        if q.shape != (self.n_q,) or qdot.shape != (self.n_q,):
            raise ValueError(
                f"{self.name}: expected shape ({self.n_q},), got {q.shape}/{qdot.shape}"
            )
        if self.name == "kepler" and float(np.hypot(q[0], q[1])) == 0.0:
            raise ValueError("kepler Lagrangian is singular at the origin")
        return float(self.lagrangian_fn(jnp.asarray(q), jnp.asarray(qdot)))

    def momentum(self, q, qdot) -> np.ndarray:
        """Conjugate momentum: gradient of the Lagrangian in the velocity."""
        return np.asarray(
            jax.grad(self.lagrangian_fn, 1)(jnp.asarray(q, dtype=jnp.float64),
                                            jnp.asarray(qdot, dtype=jnp.float64))
        )

    def conserved_quantity(self, generator: SymmetryGenerator, q, qdot) -> float:
        """Momentum paired with the generator direction at (q, qdot)."""
        q = np.asarray(q, dtype=float)
        direction = np.asarray(generator.matrix) @ q + np.asarray(generator.vector)
        return float(direction @ self.momentum(q, qdot))

    def hamiltonian(self, q, qdot) -> float:
        """Energy via the Legendre transform of the Lagrangian."""
        qdot = np.asarray(qdot, dtype=float)
        return float(qdot @ self.momentum(q, qdot) - self.lagrangian(q, qdot))

    def symmetry_residual(self, generator: SymmetryGenerator, q, qdot) -> float:
        """Directional derivative of the Lagrangian along the generator's flow.

        Zero everywhere iff the system is invariant under the generator: the
        configuration moves along ``matrix q + vector`` and the velocity along
        ``matrix qdot``.
        """
        q = jnp.asarray(q, dtype=jnp.float64)
        qdot = jnp.asarray(qdot, dtype=jnp.float64)
        matrix = jnp.asarray(generator.matrix)
        vector = jnp.asarray(generator.vector)
        grad_q = jax.grad(self.lagrangian_fn, 0)(q, qdot)
        grad_v = jax.grad(self.lagrangian_fn, 1)(q, qdot)
        return float((matrix @ q + vector) @ grad_q + (matrix @ qdot) @ grad_v)


def cartpend(m1: float = 1.0, m2: float = 1.0, l: float = 1.0, g: float = 9.81) -> System:
    """Pendulum (mass m1, length l) on a cart (mass m2); q = (cart position, angle).

    Invariant under cart translations, so the conjugate momentum of the cart
    coordinate is conserved.
    """
    alpha = m1 * l * l
    beta = m1 * l
    gamma = m1 + m2
    d_const = -m1 * g * l

    def lagrangian_fn(q, qdot):
        s_dot, phi_dot = qdot[0], qdot[1]
        phi = q[1]
        kinetic = 0.5 * (
            alpha * phi_dot**2
            + 2.0 * beta * jnp.cos(phi) * s_dot * phi_dot
            + gamma * s_dot**2
        )
        return kinetic + d_const * jnp.cos(phi)

    return System(
        name="cartpend",
        n_q=2,
        lagrangian_fn=lagrangian_fn,
        params={"m1": m1, "m2": m2, "l": l, "g": g,
                "alpha": alpha, "beta": beta, "gamma": gamma, "D": d_const},
        generator=SymmetryGenerator(np.zeros((2, 2)), np.array([1.0, 0.0])),
    )


def kepler(grav: float = 6.673e-26, m1: float = 6e24, m2: float = 100.0) -> System:
    """Planar two-body problem; q = (x, y), unit reduced mass.

    Rotationally invariant: angular momentum is conserved.  The shipped
    generator is the rotation direction normalized to unit Frobenius norm.
    """
    mu = grav * m1 * m2
    half_sqrt2 = math.sqrt(2.0) / 2.0

    def lagrangian_fn(q, qdot):
        r = jnp.sqrt(q[0] ** 2 + q[1] ** 2)
        return 0.5 * (qdot[0] ** 2 + qdot[1] ** 2) + mu / r

    return System(
        name="kepler",
        n_q=2,
        lagrangian_fn=lagrangian_fn,
        params={"G": grav, "m1": m1, "m2": m2, "mu": mu},
        generator=SymmetryGenerator(
            np.array([[0.0, half_sqrt2], [-half_sqrt2, 0.0]]), np.zeros(2)
        ),
    )


def free_particle(n_q: int = 1, mass: float = 1.0) -> System:
    """Force-free particle; exact uniform motion (test support system)."""

    def lagrangian_fn(q, qdot):
        return 0.5 * mass * jnp.sum(qdot**2)

    return System(name="free_particle", n_q=n_q, lagrangian_fn=lagrangian_fn,
                  params={"mass": mass, "n_q": n_q})


def harmonic_oscillator(omega: float = 1.0) -> System:
    """1-D unit-mass oscillator (test and order-study support system)."""

    def lagrangian_fn(q, qdot):
        return 0.5 * qdot[0] ** 2 - 0.5 * (omega**2) * q[0] ** 2

    return System(name="harmonic_oscillator", n_q=1, lagrangian_fn=lagrangian_fn,
                  params={"omega": omega})


SYSTEMS: dict[str, Callable[..., System]] = {
    "cartpend": cartpend,
    "kepler": kepler,
    "free_particle": free_particle,
    "harmonic_oscillator": harmonic_oscillator,
}


def make_system(name: str, params: dict | None = None) -> System:
    if name not in SYSTEMS:
        raise ValueError(f"unknown system {name!r}; available: {sorted(SYSTEMS)}")
    return SYSTEMS[name](**(params or {}))


# Constructor arguments per system; provenance dictionaries may carry extra
# derived constants that must not reach the factory.
_CONSTRUCTOR_KEYS = {
    "cartpend": {"m1": "m1", "m2": "m2", "l": "l", "g": "g"},
    "kepler": {"G": "grav", "m1": "m1", "m2": "m2"},
    "free_particle": {"mass": "mass", "n_q": "n_q"},
    "harmonic_oscillator": {"omega": "omega"},
}


def system_from_provenance(provenance: dict) -> System:
    """Rebuild the generating system recorded in a trajectory's provenance."""
    name = provenance.get("system")
    if name not in _CONSTRUCTOR_KEYS:
        raise ValueError(f"provenance does not identify a known system: {name!r}")
    stored = provenance.get("system_params", {})
    keymap = _CONSTRUCTOR_KEYS[name]
    kwargs = {arg: stored[key] for key, arg in keymap.items() if key in stored}
    if "n_q" in kwargs:
        kwargs["n_q"] = int(kwargs["n_q"])
    return make_system(name, kwargs)


@dataclass(frozen=True)
class MidpointLagrangian:
    """Exact midpoint discretization of a system's Lagrangian.

    Value is ``dt * L((q0+q1)/2, (q1-q0)/dt)``: the step-sized Lagrangian at
    the interval midpoint with the finite-difference velocity.
    """

    system: System
    dt: float

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @property
    def n_q(self) -> int:
        return self.system.n_q

    def value(self, q0, q1):
        mid = 0.5 * (q0 + q1)
        vel = (q1 - q0) / self.dt
        return self.dt * self.system.lagrangian_fn(mid, vel)


def discrete_midpoint(system: System, q0, q1, dt: float) -> float:
    """Validated midpoint discrete Lagrangian value for one step."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    if q0.shape != (system.n_q,) or q1.shape != (system.n_q,):
        raise ValueError(
            f"{system.name}: expected shape ({system.n_q},), got {q0.shape}/{q1.shape}"
        )
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    mid = 0.5 * (q0 + q1)
    if system.name == "kepler" and float(np.hypot(mid[0], mid[1])) == 0.0:
        raise ValueError("kepler midpoint hit the origin")
    dlag = MidpointLagrangian(system, dt)
    return float(dlag.value(jnp.asarray(q0), jnp.asarray(q1)))


def _subsample_ratio(coarse_dt: float, fine_dt: float) -> int:
    ratio = coarse_dt / fine_dt
    rounded = round(ratio)
    if rounded < 1 or abs(ratio - rounded) > 1e-9 * max(1.0, abs(ratio)):
        raise ValueError(
            f"coarse_dt={coarse_dt} is not an integer multiple of fine_dt={fine_dt}"
        )
    return rounded


def generate(
    system: System,
    q0,
    p0,
    fine_dt: float,
    coarse_dt: float,
    n_steps: int,
    seed: int | None = None,
    newton=None,
) -> Trajectory:
    """Reference trajectory: fine-step variational rollout, subsampled to coarse_dt.

    Integration starts from (q0, p0) via the discrete-momentum relation and uses
    the system's exact midpoint discrete Lagrangian at ``fine_dt``.  The result
    holds ``n_steps + 1`` points spaced ``coarse_dt`` apart.
    """
    from . import integrator

    ratio = _subsample_ratio(coarse_dt, fine_dt)
    q0 = np.asarray(q0, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    dlag = MidpointLagrangian(system, fine_dt)
    q1 = integrator.initialize(dlag, q0, p0, newton)
    result = integrator.rollout(dlag, q0, q1, n_steps * ratio, newton)
    if result.failure is not None:
        raise result.failure.error
    points = result.trajectory.points[::ratio]
    provenance = {
        "system": system.name,
        "system_params": {k: float(v) for k, v in system.params.items()},
        "q0": q0.tolist(),
        "p0": p0.tolist(),
        "fine_dt": fine_dt,
        "seed": seed,
        "noise_variance": 0.0,
    }
    return Trajectory(dt=coarse_dt, points=points, provenance=provenance)


def add_noise(traj: Trajectory, variance: float, seed: int) -> Trajectory:
    """I.i.d. zero-mean Gaussian perturbation of every configuration component."""
    if variance < 0:
        raise ValueError(f"variance must be non-negative, got {variance}")
    if variance == 0.0:
        return traj
    rng = np.random.default_rng(seed)
    noisy = traj.points + rng.normal(0.0, math.sqrt(variance), size=traj.points.shape)
    return traj.with_points(noisy, noise_variance=variance, noise_seed=seed)


def sample_initial_conditions(
    base_q0, base_p0, count: int, seed: int, spread: float = 0.1
) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded family of initial conditions scattered around a base point."""
    rng = np.random.default_rng(seed)
    base_q0 = np.asarray(base_q0, dtype=float)
    base_p0 = np.asarray(base_p0, dtype=float)
    conditions = []
    for _ in range(count):
        dq = rng.uniform(-spread, spread, size=base_q0.shape)
        dp = rng.uniform(-spread, spread, size=base_p0.shape)
        conditions.append((base_q0 + dq, base_p0 + dp))
    return conditions
