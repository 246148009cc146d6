"""Continuous Lagrangian and Hamiltonian forms of a discrete model.

A discrete Lagrangian evaluated on midpoint-rule input pairs,

    pullback(q, v) = L_d(q - dt*v/2, q + dt*v/2),

is the continuous Lagrangian whose midpoint discretization reproduces it; the
second-order backward-error correction

    corrected = pullback
              + dt^2/24 * (grad_q - H_qv v)^T H_vv^{-1} (grad_q - H_qv v)
              - dt^2/24 * v^T H_qq v

(all derivatives of the pullback) removes the leading discretization error, so
the corrected Lagrangian matches the dynamics the discrete model actually
generates up to O(dt^4).  In one dimension this reduces to the scalar formula
``pullback + dt^2/24 * ((L_q - L_qv v)^2 / L_vv - L_qq v^2)``; the matrix form
is its direct generalization and is validated by the order test in the suite
rather than against a printed reference.

Note on units: a discrete Lagrangian approximates the action over one step and
therefore carries a factor dt relative to a continuous Lagrangian.  Both the
pullback and the corrected form inherit that factor; divide by dt (the
correction and the Legendre transform commute with that scaling) to express
results in energy units, as :func:`laglearn.evaluation.energy_series` does.
"""

from __future__ import annotations

from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from .diffcore import det, grad_and_hessian_fns
from .trajectory import Trajectory

HESSIAN_DET_FLOOR = 1e-12


class SingularVelocityHessian(RuntimeError):
    def __init__(self, determinant: float):
        super().__init__(
            f"velocity Hessian is numerically singular (det {determinant:.3e}); "
            "the correction is undefined at this state"
        )
        self.determinant = determinant


def pullback_fn(dlag) -> Callable:
    """Continuous (q, v) field of a discrete Lagrangian via the midpoint inputs."""
    half_dt = 0.5 * dlag.dt

    def pullback(q, v):
        return dlag.value(q - half_dt * v, q + half_dt * v)

    return pullback


def _continuous_fns(dlag) -> dict[str, Callable]:
    cache = getattr(dlag, "_vbea_cache", None)
    if cache is None:
        cache = build_continuous_fns(pullback_fn(dlag), dlag.dt)
        try:
            object.__setattr__(dlag, "_vbea_cache", cache)
        except (AttributeError, TypeError):
            pass
    return cache


def build_continuous_fns(lagrangian: Callable, dt: float) -> dict[str, Callable]:
    """Jitted evaluators for a continuous Lagrangian and its corrected form.

    ``lagrangian(q, v)`` must be traceable.  Returns ``value``, ``corrected``,
    ``correction``, ``hvv_det`` (for singularity checks), ``hamiltonian`` and
    ``corrected_hamiltonian``.
    """
    fns = grad_and_hessian_fns(lagrangian)
    grad_q = jax.grad(lagrangian, 0)
    hess_qq = jax.jacfwd(grad_q, 0)
    hess_qv = jax.jacfwd(grad_q, 1)
    hess_vv = jax.jacfwd(jax.grad(lagrangian, 1), 1)
    factor = dt * dt / 24.0

    def correction(q, v):
        a = grad_q(q, v) - hess_qv(q, v) @ v
        quadratic = a @ jnp.linalg.solve(hess_vv(q, v), a)
        return factor * (quadratic - v @ hess_qq(q, v) @ v)

    def corrected(q, v):
        return lagrangian(q, v) + correction(q, v)

    def hamiltonian_of(fun):
        grad_v = jax.grad(fun, 1)

        def ham(q, v):
            return v @ grad_v(q, v) - fun(q, v)

        return ham

    return {
        **fns,
        "correction": jax.jit(correction),
        "corrected": jax.jit(corrected),
        "hvv_det": jax.jit(lambda q, v: det(hess_vv(q, v))),
        "hamiltonian": jax.jit(hamiltonian_of(lagrangian)),
        "corrected_hamiltonian": jax.jit(hamiltonian_of(corrected)),
    }


def _as_state(dlag, q, v) -> tuple[jnp.ndarray, jnp.ndarray]:
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    if q.shape != (dlag.n_q,) or v.shape != (dlag.n_q,):
        raise ValueError(
            f"state must have shape ({dlag.n_q},), got {q.shape}/{v.shape}"
        )
    return jnp.asarray(q), jnp.asarray(v)


def inverse_modified(dlag, q, qdot) -> float:
    """Continuous-form value of the discrete Lagrangian at (q, qdot).

    Carries the step-size factor of the discrete Lagrangian; see the module
    docstring for the unit convention.
    """
    q, v = _as_state(dlag, q, qdot)
    return float(_continuous_fns(dlag)["value"](q, v))


def _check_hvv(fns, q, v) -> None:
    determinant = float(fns["hvv_det"](q, v))
    if abs(determinant) < HESSIAN_DET_FLOOR:
        raise SingularVelocityHessian(determinant)


def vbea_lagrangian(dlag, q, qdot) -> float:
    """Backward-error-corrected continuous Lagrangian value at (q, qdot)."""
    q, v = _as_state(dlag, q, qdot)
    fns = _continuous_fns(dlag)
    _check_hvv(fns, q, v)
    return float(fns["corrected"](q, v))


def vbea_hamiltonian(dlag, q, qdot) -> float:
    """Energy of the corrected continuous Lagrangian, in discrete (dt-scaled) units."""
    q, v = _as_state(dlag, q, qdot)
    fns = _continuous_fns(dlag)
    _check_hvv(fns, q, v)
    return float(fns["corrected_hamiltonian"](q, v))


def hamiltonian(lagrangian: Callable, q, qdot) -> float:
    """Legendre transform ``v . grad_v L - L`` of a continuous Lagrangian."""
    q = jnp.asarray(q, dtype=jnp.float64)
    v = jnp.asarray(qdot, dtype=jnp.float64)
    momentum = jax.grad(lagrangian, 1)(q, v)
    return float(v @ momentum - lagrangian(q, v))


# Five-point interior stencil, fourth-order accurate.
_STENCIL4 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def recover_velocity(traj: Trajectory, k: int, order: int = 2) -> np.ndarray:
    """Finite-difference velocity at index k from positions alone.

    ``order=2`` is the centered difference used throughout evaluation;
    ``order=4`` uses a five-point stencil for studies where the velocity
    estimate must not limit the observable convergence order.
    """
    pts = traj.points
    n = pts.shape[0]
    if order == 2:
        if not 1 <= k <= n - 2:
            raise IndexError(
                f"index {k} out of centered-difference range [1, {n - 2}]"
            )
        return (pts[k + 1] - pts[k - 1]) / (2.0 * traj.dt)
    if order == 4:
        if not 2 <= k <= n - 3:
            raise IndexError(
                f"index {k} out of five-point-stencil range [2, {n - 3}]"
            )
        window = pts[k - 2 : k + 3]
        return (_STENCIL4 @ window) / traj.dt
    raise ValueError(f"order must be 2 or 4, got {order}")
