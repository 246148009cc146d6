"""Differentiation core for two-point scalar fields.

A "two-point field" is any object with an ``n_q`` attribute and a traceable
``value(q0, q1) -> scalar`` method (a discrete Lagrangian, learned or exact).
This module evaluates such fields together with their first input gradients
and the cross-Hessian block, and differentiates scalar objectives built from
those quantities with respect to the field's parameters.  Every derivative is
exact (automatic differentiation), never a finite-difference approximation;
finite differences appear only in the test suite as an independent check.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Protocol, runtime_checkable

import jax
import jax.flatten_util
import jax.numpy as jnp
import numpy as np

jax.config.update("jax_enable_x64", True)

Array = jax.Array


@runtime_checkable
class TwoPointField(Protocol):
    """Scalar field on pairs of configuration points."""

    n_q: int

    def value(self, q0, q1): ...


@dataclass(frozen=True)
class Jet:
    """Value and input derivatives of a two-point field at ``(q0, q1)``.

    ``d1``/``d2`` are the gradients with respect to the first/second point;
    ``d2d1[i, j]`` is the derivative of ``d1[i]`` with respect to ``q1[j]``
    (the cross-Hessian block, which is also the Jacobian of the implicit
    time-stepping equations).
    """

    value: float
    d1: np.ndarray
    d2: np.ndarray
    d2d1: np.ndarray


def _build_transforms(field) -> dict[str, Callable]:
    f = field.value
    d1 = jax.grad(f, 0)
    d2 = jax.grad(f, 1)
    cross = jax.jacfwd(d1, 1)

    def jet(q0, q1):
        return f(q0, q1), d1(q0, q1), d2(q0, q1), cross(q0, q1)

    def d1_and_cross(q0, q1):
        return d1(q0, q1), cross(q0, q1)

    def d2_and_d1(qa, qb, qc):
        # DEL residual ingredients for the triple (qa, qb, qc).
        return d2(qa, qb) + d1(qb, qc)

    return {
        "value": jax.jit(f),
        "d1": jax.jit(d1),
        "d2": jax.jit(d2),
        "cross": jax.jit(cross),
        "jet": jax.jit(jet),
        "d1_and_cross": jax.jit(d1_and_cross),
        "del_residual": jax.jit(d2_and_d1),
    }


def compiled(field, name: str) -> Callable:
    """Jitted derivative transform of ``field.value``, cached on the instance.

    Caching keys on the object, so fields whose parameters are replaced
    (rather than mutated) always get fresh transforms.
    """
    cache = getattr(field, "_diffcore_cache", None)
    if cache is None:
        cache = _build_transforms(field)
        try:
            object.__setattr__(field, "_diffcore_cache", cache)
        except (AttributeError, TypeError):
            pass  # slotted object: fall back to uncached transforms
    return cache[name]


def _check_point(field, q, label: str) -> jnp.ndarray:
    q = jnp.asarray(q, dtype=jnp.float64)
    if q.shape != (field.n_q,):
        raise ValueError(
            f"{label} has shape {q.shape}, expected ({field.n_q},) for this field"
        )
    return q


def eval_jet(field: TwoPointField, q0, q1) -> Jet:
    """Evaluate ``field`` at ``(q0, q1)`` with both gradients and the cross-Hessian."""
    q0 = _check_point(field, q0, "q0")
    q1 = _check_point(field, q1, "q1")
    value, d1, d2, d2d1 = compiled(field, "jet")(q0, q1)
    return Jet(
        value=float(value),
        d1=np.asarray(d1),
        d2=np.asarray(d2),
        d2d1=np.asarray(d2d1),
    )


def flatten_pytree(tree) -> tuple[np.ndarray, Callable]:
    """Flatten a parameter pytree to one vector; returns (vector, unflatten).

    Leaves are visited in pytree order and ravelled row-major.  For the layer
    structure used by :mod:`laglearn.model` this is the canonical parameter
    ordering: layer 0 weights (row-major), layer 0 biases, layer 1 weights, ...
    """
    flat, unravel = jax.flatten_util.ravel_pytree(tree)
    return np.asarray(flat), unravel


def param_grad(objective: Callable, model, generators=None) -> np.ndarray:
    """Gradient of a scalar objective with respect to model parameters.

    ``objective`` receives the model (rebuilt with traced parameters) and, when
    ``generators`` is given, the tuple of generators as a second argument; it
    must return a scalar built from supported operations (field evaluations,
    jets, arithmetic, determinants of cross-Hessians, norms).  The result is a
    flat vector in canonical parameter ordering; generator entries (matrix
    row-major, then vector, per generator) follow the model block.
    """
    if hasattr(model, "params") and hasattr(model, "with_params"):
        params = model.params
        rebuild = model.with_params
    else:  # bare pytree of parameters, objective takes it directly
        params = model
        rebuild = lambda p: p

    if generators is None:

        def fun(p):
            return objective(rebuild(p))

        grads = jax.grad(fun)(params)
    else:
        gen_arrays = tuple((g.matrix, g.vector) for g in generators)

        def fun(arg):
            p, gens = arg
            rebuilt_gens = tuple(
                g.with_arrays(m, w) for g, (m, w) in zip(generators, gens)
            )
            return objective(rebuild(p), rebuilt_gens)

        grads = jax.grad(fun)((params, gen_arrays))

    flat, _ = flatten_pytree(grads)
    if not np.all(np.isfinite(flat)):
        raise FloatingPointError("non-finite entries in parameter gradient")
    return flat


def grad_and_hessian_fns(f: Callable) -> dict[str, Callable]:
    """First and second derivative transforms of a two-argument scalar field.

    Returns jitted callables ``grad0``, ``grad1``, ``hess00``, ``hess01``,
    ``hess11`` where ``hess01(q, v)[i, j]`` is the derivative of
    ``grad0(q, v)[i]`` with respect to ``v[j]``.
    """
    g0 = jax.grad(f, 0)
    g1 = jax.grad(f, 1)
    return {
        "value": jax.jit(f),
        "grad0": jax.jit(g0),
        "grad1": jax.jit(g1),
        "hess00": jax.jit(jax.jacfwd(g0, 0)),
        "hess01": jax.jit(jax.jacfwd(g0, 1)),
        "hess11": jax.jit(jax.jacfwd(g1, 1)),
    }


def det(matrix):
    """Determinant usable inside traced objectives.

    Closed-form expansion for sizes up to 3 (all benchmark systems), LU-based
    ``jnp.linalg.det`` beyond that.
    """
    matrix = jnp.asarray(matrix)
    n = matrix.shape[-1]
    if n == 1:
        return matrix[..., 0, 0]
    if n == 2:
        return (
            matrix[..., 0, 0] * matrix[..., 1, 1]
            - matrix[..., 0, 1] * matrix[..., 1, 0]
        )
    if n == 3:
        a, b, c = matrix[..., 0, 0], matrix[..., 0, 1], matrix[..., 0, 2]
        d, e, f_ = matrix[..., 1, 0], matrix[..., 1, 1], matrix[..., 1, 2]
        g, h, i = matrix[..., 2, 0], matrix[..., 2, 1], matrix[..., 2, 2]
        return a * (e * i - f_ * h) - b * (d * i - f_ * g) + c * (d * h - e * g)
    return jnp.linalg.det(matrix)
