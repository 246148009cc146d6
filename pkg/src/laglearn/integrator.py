"""Variational integration with an arbitrary discrete Lagrangian.

Time stepping solves the discrete Euler-Lagrange equations
``D2 L(q_prev, q) + D1 L(q, q_next) = 0`` for ``q_next`` with Newton's method,
using the exact cross-Hessian ``D2 D1 L`` as the Jacobian.  Integration is
initialized from ``(q0, p0)`` through the discrete momentum relation
``p0 = -D1 L(q0, q1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import jax.numpy as jnp
import numpy as np

from .diffcore import compiled
from .trajectory import Trajectory

SINGULARITY_RTOL = 1e-12


@dataclass(frozen=True)
class NewtonConfig:
    tolerance: float = 1e-10
    max_iterations: int = 50
    damping: float = 1.0

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0.0 < self.damping <= 1.0:
            raise ValueError("damping must lie in (0, 1]")


DEFAULT_NEWTON = NewtonConfig()


class IntegrationError(RuntimeError):
    """Base class for time-stepping failures."""


class NewtonDiverged(IntegrationError):
    def __init__(self, residual_norm: float, iterations: int):
        super().__init__(
            f"Newton iteration did not converge: residual {residual_norm:.3e} "
            f"after {iterations} iterations"
        )
        self.residual_norm = residual_norm
        self.iterations = iterations


class SingularJacobian(IntegrationError):
    def __init__(self, determinant: float):
        super().__init__(
            f"stepping Jacobian is numerically singular (det {determinant:.3e}); "
            "the discrete Lagrangian is degenerate at this state"
        )
        self.determinant = determinant


@dataclass(frozen=True)
class StepFailure:
    index: int
    error: IntegrationError


@dataclass(frozen=True)
class RolloutResult:
    trajectory: Trajectory
    failure: Optional[StepFailure] = None

    @property
    def ok(self) -> bool:
        return self.failure is None


def _check(dlag, q, label: str) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.shape != (dlag.n_q,):
        raise ValueError(f"{label} has shape {q.shape}, expected ({dlag.n_q},)")
    return q


def del_residual(dlag, q_prev, q, q_next) -> np.ndarray:
    """Discrete Euler-Lagrange residual of a consecutive triple."""
    q_prev = _check(dlag, q_prev, "q_prev")
    q = _check(dlag, q, "q")
    q_next = _check(dlag, q_next, "q_next")
    res = compiled(dlag, "del_residual")(
        jnp.asarray(q_prev), jnp.asarray(q), jnp.asarray(q_next)
    )
    return np.asarray(res)


def discrete_momentum(dlag, q, q_next) -> np.ndarray:
    """Discrete conjugate momentum of the step (q, q_next): ``-D1 L``."""
    q = _check(dlag, q, "q")
    q_next = _check(dlag, q_next, "q_next")
    return -np.asarray(compiled(dlag, "d1")(jnp.asarray(q), jnp.asarray(q_next)))


def _newton(
    residual_and_jacobian: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray]],
    guess: np.ndarray,
    cfg: NewtonConfig,
) -> np.ndarray:
    x = np.asarray(guess, dtype=float)
    n = x.size
    residual_norm = np.inf
    for _ in range(cfg.max_iterations):
        residual, jacobian = residual_and_jacobian(x)
        residual_norm = float(np.linalg.norm(residual))
        if residual_norm <= cfg.tolerance:
            return x
        det = float(np.linalg.det(jacobian))
        scale = max(1.0, float(np.max(np.abs(jacobian))))
        if abs(det) < SINGULARITY_RTOL * scale**n:
            raise SingularJacobian(det)
        x = x - cfg.damping * np.linalg.solve(jacobian, residual)
    # One final residual check at the last iterate.
    residual, _ = residual_and_jacobian(x)
    residual_norm = float(np.linalg.norm(residual))
    if residual_norm <= cfg.tolerance:
        return x
    raise NewtonDiverged(residual_norm, cfg.max_iterations)


def step(dlag, q_prev, q, cfg: NewtonConfig | None = None) -> np.ndarray:
    """Next configuration from the previous two, by solving the stepping equations.

    The initial guess is the linear extrapolation ``2q - q_prev`` (exact for
    force-free motion).
    """
    cfg = cfg or DEFAULT_NEWTON
    q_prev = _check(dlag, q_prev, "q_prev")
    q = _check(dlag, q, "q")
    d2_fixed = np.asarray(compiled(dlag, "d2")(jnp.asarray(q_prev), jnp.asarray(q)))
    d1_and_cross = compiled(dlag, "d1_and_cross")
    q_jnp = jnp.asarray(q)

    def residual_and_jacobian(x):
        d1, cross = d1_and_cross(q_jnp, jnp.asarray(x))
        return d2_fixed + np.asarray(d1), np.asarray(cross)

    return _newton(residual_and_jacobian, 2.0 * q - q_prev, cfg)


def initialize(
    dlag, q0, p0, cfg: NewtonConfig | None = None, initial_guess=None
) -> np.ndarray:
    """First step q1 from (q0, p0), solving ``p0 = -D1 L(q0, q1)``.

    The default guess ``q0 + dt * p0`` treats the momentum as a velocity; pass
    ``initial_guess`` for systems where that scaling is poor.
    """
    cfg = cfg or DEFAULT_NEWTON
    q0 = _check(dlag, q0, "q0")
    p0 = _check(dlag, p0, "p0")
    if initial_guess is None:
        guess = q0 + dlag.dt * p0
    else:
        guess = _check(dlag, initial_guess, "initial_guess")
    d1_and_cross = compiled(dlag, "d1_and_cross")
    q0_jnp = jnp.asarray(q0)

    def residual_and_jacobian(x):
        d1, cross = d1_and_cross(q0_jnp, jnp.asarray(x))
        return p0 + np.asarray(d1), np.asarray(cross)

    return _newton(residual_and_jacobian, guess, cfg)


def rollout(
    dlag, q0, q1, n_steps: int, cfg: NewtonConfig | None = None, t0: float = 0.0
) -> RolloutResult:
    """Trajectory of ``n_steps + 1`` points starting with (q0, q1).

    On a Newton failure at point ``k`` the points computed so far are returned
    together with a :class:`StepFailure` carrying ``k`` and the error.
    """
    if n_steps < 1:
        raise ValueError(f"n_steps must be >= 1, got {n_steps}")
    cfg = cfg or DEFAULT_NEWTON
    q0 = _check(dlag, q0, "q0")
    q1 = _check(dlag, q1, "q1")
    points = np.empty((n_steps + 1, dlag.n_q))
    points[0] = q0
    points[1] = q1
    failure = None
    count = 2
    for k in range(2, n_steps + 1):
        try:
            points[k] = step(dlag, points[k - 2], points[k - 1], cfg)
        except IntegrationError as err:
            failure = StepFailure(index=k, error=err)
            break
        count = k + 1
    traj = Trajectory(dt=dlag.dt, points=points[:count].copy(), t0=t0)
    return RolloutResult(trajectory=traj, failure=failure)
