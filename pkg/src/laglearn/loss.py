"""Training objective for discrete Lagrangian learning.

Terms:

* stepping-residual loss: mean squared norm of the discrete Euler-Lagrange
  residual over all interior triples of the training trajectories;
* degeneracy regularizer: penalizes small determinants of the cross-Hessian
  ``D2 D1 L`` so the learned model stays usable inside a Newton stepper and
  cannot collapse to a constant;
* symmetry residual: drives an affine generator (matrix, vector) and the model
  toward joint invariance;
* non-triviality: keeps each generator near the unit sphere of the affine
  algebra, excluding the zero solution;
* orthogonality: keeps multiple generators mutually independent.

The degeneracy nonlinearity is ``1 - sigmoid(slope * det**exponent)`` by
default: bounded in [0, 1], worth 0.5 at zero determinant, vanishing for
strongly non-degenerate models.  The historic unbounded variant
``1 - 1/(1 - exp(-slope * det**exponent))`` is selectable with
``degeneracy_form="unbounded"`` for comparison experiments; it diverges as the
determinant approaches zero from above and is not recommended for training.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import jax
import jax.numpy as jnp
import numpy as np

from .diffcore import det
from .model import apply_mlp
from .trajectory import Trajectory

DEGENERACY_FORMS = ("logistic", "unbounded")


@dataclass(frozen=True)
class LossWeights:
    w_del: float = 1.0
    w_degen: float = 1.0
    w_sym: float = 1.0
    w_nontriv: float = 1.0
    w_orth: float = 1.0
    degeneracy_exponent: int = 2
    degeneracy_slope: float = 0.01
    degeneracy_form: str = "logistic"

    def __post_init__(self):
        for name in ("w_del", "w_degen", "w_sym", "w_nontriv", "w_orth"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.degeneracy_exponent not in (1, 2):
            raise ValueError("degeneracy_exponent must be 1 or 2")
        if self.degeneracy_slope <= 0:
            raise ValueError("degeneracy_slope must be positive")
        if self.degeneracy_form not in DEGENERACY_FORMS:
            raise ValueError(f"degeneracy_form must be one of {DEGENERACY_FORMS}")


@dataclass(frozen=True)
class LossBreakdown:
    del_loss: float
    degeneracy: float
    symmetry: float
    nontriviality: float
    orthogonality: float
    total: float
    symmetry_enabled: bool

    FIELDS = ("del_loss", "degeneracy", "symmetry", "nontriviality", "orthogonality")

    def as_dict(self) -> dict:
        out = {name: getattr(self, name) for name in self.FIELDS}
        out["total"] = self.total
        return out


def stack_triples(trajectories: Sequence[Trajectory], n_q: int) -> np.ndarray:
    """All interior triples (q_{k-1}, q_k, q_{k+1}) pooled across trajectories."""
    chunks = []
    for traj in trajectories:
        pts = traj.points
        if pts.shape[1] != n_q:
            raise ValueError(f"trajectory has n_q={pts.shape[1]}, expected {n_q}")
        if pts.shape[0] < 3:
            raise ValueError("trajectories need at least 3 points to form triples")
        chunks.append(np.stack([pts[:-2], pts[1:-1], pts[2:]], axis=1))
    return np.concatenate(chunks, axis=0)


def stack_pairs(trajectories: Sequence[Trajectory], n_q: int) -> np.ndarray:
    """All consecutive pairs (q_k, q_{k+1}) pooled across trajectories."""
    chunks = []
    for traj in trajectories:
        pts = traj.points
        if pts.shape[1] != n_q:
            raise ValueError(f"trajectory has n_q={pts.shape[1]}, expected {n_q}")
        if pts.shape[0] < 2:
            raise ValueError("trajectories need at least 2 points to form pairs")
        chunks.append(np.stack([pts[:-1], pts[1:]], axis=1))
    return np.concatenate(chunks, axis=0)


def stack_generators(generators) -> tuple[jnp.ndarray, jnp.ndarray]:
    matrices = jnp.stack([jnp.asarray(g.matrix) for g in generators])
    vectors = jnp.stack([jnp.asarray(g.vector) for g in generators])
    return matrices, vectors


# --- core formulas on precomputed arrays ---------------------------------


def del_loss_from_residuals(residuals):
    return jnp.mean(jnp.sum(residuals**2, axis=-1))


def degeneracy_from_dets(dets, exponent: int, slope: float, form: str):
    arg = slope * dets**exponent
    if form == "logistic":
        per_pair = jax.nn.sigmoid(-arg)
    else:
        per_pair = 1.0 - 1.0 / (1.0 - jnp.exp(-arg))
    return jnp.sum(per_pair)


def symmetry_from_grads(matrices, vectors, first, second, d1, d2):
    """Mean squared invariance residual per generator, summed over generators.

    ``first``/``second`` are the (P, n) pair endpoints, ``d1``/``d2`` the field
    gradients at those pairs.
    """

    def one_generator(matrix, vector):
        dir0 = first @ matrix.T + vector
        dir1 = second @ matrix.T + vector
        residual = jnp.sum(dir0 * d1, axis=1) + jnp.sum(dir1 * d2, axis=1)
        return jnp.mean(residual**2)

    return jnp.sum(jax.vmap(one_generator)(matrices, vectors))


def nontriviality_from_arrays(matrices, vectors):
    norms = jnp.sum(matrices**2, axis=(1, 2)) + jnp.sum(vectors**2, axis=1)
    return jnp.sum((norms - 1.0) ** 2)


def orthogonality_from_arrays(matrices, vectors):
    k = matrices.shape[0]
    if k < 2:
        return jnp.asarray(0.0)
    flat = jnp.concatenate(
        [matrices.reshape(k, -1), vectors.reshape(k, -1)], axis=1
    )
    gram = flat @ flat.T
    mask = jnp.tril(jnp.ones((k, k)), k=-1)
    return jnp.sum((gram * mask) ** 2)


# --- evaluation for an arbitrary two-point field --------------------------


def _field_fns(field):
    cache = getattr(field, "_loss_cache", None)
    if cache is None:
        f = field.value
        d1 = jax.grad(f, 0)
        d2 = jax.grad(f, 1)
        cross = jax.jacfwd(d1, 1)

        def residuals(triples):
            prev, cur, nxt = triples[:, 0], triples[:, 1], triples[:, 2]
            return jax.vmap(d2)(prev, cur) + jax.vmap(d1)(cur, nxt)

        def dets(pairs):
            return jax.vmap(lambda a, b: det(cross(a, b)))(pairs[:, 0], pairs[:, 1])

        def pair_grads(pairs):
            first, second = pairs[:, 0], pairs[:, 1]
            return jax.vmap(d1)(first, second), jax.vmap(d2)(first, second)

        cache = {
            "residuals": jax.jit(residuals),
            "dets": jax.jit(dets),
            "pair_grads": jax.jit(pair_grads),
        }
        try:
            object.__setattr__(field, "_loss_cache", cache)
        except (AttributeError, TypeError):
            pass
    return cache


def del_loss(field, trajectories: Sequence[Trajectory]) -> float:
    """Mean squared stepping-residual norm over all interior triples."""
    triples = stack_triples(trajectories, field.n_q)
    residuals = _field_fns(field)["residuals"](jnp.asarray(triples))
    return float(del_loss_from_residuals(residuals))


def degeneracy_loss(
    field,
    trajectories: Sequence[Trajectory],
    exponent: int = 2,
    slope: float = 0.01,
    form: str = "logistic",
) -> float:
    """Summed degeneracy penalty over all consecutive pairs."""
    if exponent not in (1, 2):
        raise ValueError("exponent must be 1 or 2")
    if form not in DEGENERACY_FORMS:
        raise ValueError(f"form must be one of {DEGENERACY_FORMS}")
    pairs = stack_pairs(trajectories, field.n_q)
    dets = _field_fns(field)["dets"](jnp.asarray(pairs))
    return float(degeneracy_from_dets(dets, exponent, slope, form))


def symmetry_loss(field, generators, trajectories: Sequence[Trajectory]) -> float:
    """Invariance residual of the field under each generator, on the data pairs."""
    for g in generators:
        if g.n_q != field.n_q:
            raise ValueError(
                f"generator dimension {g.n_q} does not match field n_q={field.n_q}"
            )
    if not generators:
        return 0.0
    pairs = jnp.asarray(stack_pairs(trajectories, field.n_q))
    d1, d2 = _field_fns(field)["pair_grads"](pairs)
    matrices, vectors = stack_generators(generators)
    return float(
        symmetry_from_grads(matrices, vectors, pairs[:, 0], pairs[:, 1], d1, d2)
    )


def nontriviality_loss(generators) -> float:
    """Squared distance of each generator's squared norm from one, summed."""
    if not generators:
        return 0.0
    matrices, vectors = stack_generators(generators)
    return float(nontriviality_from_arrays(matrices, vectors))


def orthogonality_loss(generators) -> float:
    """Squared pairwise inner products between distinct generators."""
    if not generators:
        return 0.0
    matrices, vectors = stack_generators(generators)
    return float(orthogonality_from_arrays(matrices, vectors))


def total_loss(
    field,
    generators,
    trajectories: Sequence[Trajectory],
    weights: LossWeights,
    symmetry_enabled: bool = True,
) -> LossBreakdown:
    """Weighted objective; symmetry-block terms contribute only when enabled."""
    del_term = del_loss(field, trajectories)
    degen_term = degeneracy_loss(
        field,
        trajectories,
        weights.degeneracy_exponent,
        weights.degeneracy_slope,
        weights.degeneracy_form,
    )
    if symmetry_enabled:
        sym_term = symmetry_loss(field, generators, trajectories)
        nontriv_term = nontriviality_loss(generators)
        orth_term = orthogonality_loss(generators)
    else:
        sym_term = nontriv_term = orth_term = 0.0
    total = (
        weights.w_del * del_term
        + weights.w_degen * degen_term
        + weights.w_sym * sym_term
        + weights.w_nontriv * nontriv_term
        + weights.w_orth * orth_term
    )
    return LossBreakdown(
        del_loss=del_term,
        degeneracy=degen_term,
        symmetry=sym_term,
        nontriviality=nontriv_term,
        orthogonality=orth_term,
        total=total,
        symmetry_enabled=symmetry_enabled,
    )


# --- parameterized objective for the trainer ------------------------------


@lru_cache(maxsize=None)
def _mlp_apply(activation: str):
    def apply(params, q0, q1):
        return apply_mlp(params, activation, q0, q1)

    return apply


def make_objective(
    activation: str,
    triples: np.ndarray,
    pairs: np.ndarray,
    weights: LossWeights,
    symmetry_enabled: bool,
):
    """Objective over (mlp params pytree, (matrices, vectors)) for optimization.

    Returns ``fn(params, matrices, vectors) -> (total, terms)`` with terms in
    :attr:`LossBreakdown.FIELDS` order; everything is traceable so callers can
    JIT and differentiate it.
    """
    apply = _mlp_apply(activation)
    d1 = jax.grad(apply, 1)
    d2 = jax.grad(apply, 2)
    cross = jax.jacfwd(d1, 2)
    triples = jnp.asarray(triples)
    pairs = jnp.asarray(pairs)
    first, second = pairs[:, 0], pairs[:, 1]

    def fn(params, matrices, vectors):
        residuals = jax.vmap(d2, in_axes=(None, 0, 0))(
            params, triples[:, 0], triples[:, 1]
        ) + jax.vmap(d1, in_axes=(None, 0, 0))(params, triples[:, 1], triples[:, 2])
        del_term = del_loss_from_residuals(residuals)

        dets = jax.vmap(lambda a, b: det(cross(params, a, b)))(first, second)
        degen_term = degeneracy_from_dets(
            dets,
            weights.degeneracy_exponent,
            weights.degeneracy_slope,
            weights.degeneracy_form,
        )

        if symmetry_enabled and matrices.shape[0] > 0:
            grads1 = jax.vmap(d1, in_axes=(None, 0, 0))(params, first, second)
            grads2 = jax.vmap(d2, in_axes=(None, 0, 0))(params, first, second)
            sym_term = symmetry_from_grads(
                matrices, vectors, first, second, grads1, grads2
            )
            nontriv_term = nontriviality_from_arrays(matrices, vectors)
            orth_term = orthogonality_from_arrays(matrices, vectors)
        else:
            sym_term = jnp.asarray(0.0)
            nontriv_term = jnp.asarray(0.0)
            orth_term = jnp.asarray(0.0)

        total = (
            weights.w_del * del_term
            + weights.w_degen * degen_term
            + weights.w_sym * sym_term
            + weights.w_nontriv * nontriv_term
            + weights.w_orth * orth_term
        )
        return total, (del_term, degen_term, sym_term, nontriv_term, orth_term)

    return fn
