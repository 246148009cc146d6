"""Full-batch Adam training of the model and its symmetry generators.

Every epoch evaluates the objective and its gradient on all training triples.
Generator parameters share the optimizer state vector with the network but
occupy a separate trailing segment; during the symmetry warmup the symmetry
terms are absent from the objective, so that segment receives exactly zero
gradient and does not move.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from . import loss as loss_mod
from .loss import LossBreakdown, LossWeights
from .model import (
    Checkpoint,
    DiscreteLagrangianModel,
    SymmetryGenerator,
    flatten_params,
    save_checkpoint,
    unflatten_params,
)
from .trajectory import Trajectory


@dataclass(frozen=True)
class TrainConfig:
    epochs: int
    learning_rate: float = 3e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    symmetry_warmup_epochs: int = 5000
    k_generators: int = 0
    seed: int = 0
    weights: LossWeights = field(default_factory=LossWeights)
    checkpoint_interval: int = 0  # 0: final checkpoint only

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("beta1 and beta2 must lie in [0, 1)")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.k_generators < 0:
            raise ValueError("k_generators must be >= 0")


@dataclass
class AdamState:
    step: int
    m: np.ndarray
    v: np.ndarray

    @classmethod
    def zeros(cls, n: int) -> "AdamState":
        return cls(step=0, m=np.zeros(n), v=np.zeros(n))


class NonFiniteLossError(RuntimeError):
    """Raised when the loss or its gradient stops being finite."""

    def __init__(self, epoch: int, last_checkpoint: Checkpoint):
        super().__init__(f"non-finite loss or gradient at epoch {epoch}")
        self.epoch = epoch
        self.last_checkpoint = last_checkpoint


def adam_step(
    params: np.ndarray, grads: np.ndarray, state: AdamState, cfg: TrainConfig
) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update on a flat parameter vector."""
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise ValueError("params, grads, and optimizer state must share one shape")
    t = state.step + 1
    m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads
    v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads**2
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    updated = params - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.epsilon)
    return updated, AdamState(step=t, m=m, v=v)


def default_generator_guesses(k: int, n_q: int, seed: int) -> tuple[SymmetryGenerator, ...]:
    """Small uniform-noise guesses for generators when none are supplied."""
    rng = np.random.default_rng(seed)
    guesses = []
    for _ in range(k):
        guesses.append(
            SymmetryGenerator(
                rng.uniform(-0.1, 0.1, size=(n_q, n_q)),
                rng.uniform(-0.1, 0.1, size=n_q),
            )
        )
    return tuple(guesses)


def _flatten_generators(matrices: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    k = matrices.shape[0]
    if k == 0:
        return np.zeros(0)
    return np.concatenate(
        [np.concatenate([matrices[i].ravel(), vectors[i]]) for i in range(k)]
    )


def _unflatten_generators(flat: np.ndarray, k: int, n_q: int):
    matrices = np.zeros((k, n_q, n_q))
    vectors = np.zeros((k, n_q))
    size = n_q * n_q + n_q
    for i in range(k):
        block = flat[i * size : (i + 1) * size]
        matrices[i] = block[: n_q * n_q].reshape(n_q, n_q)
        vectors[i] = block[n_q * n_q :]
    return jnp.asarray(matrices), jnp.asarray(vectors)


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[LossBreakdown]


def save_history(history: Sequence[LossBreakdown], path) -> None:
    """Loss history CSV: epoch, each term, total."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", *LossBreakdown.FIELDS, "total"])
        for epoch, breakdown in enumerate(history, start=1):
            writer.writerow(
                [epoch]
                + [repr(getattr(breakdown, name)) for name in LossBreakdown.FIELDS]
                + [repr(breakdown.total)]
            )


def train(
    data: Sequence[Trajectory],
    model: DiscreteLagrangianModel,
    generator_guesses: Optional[Sequence[SymmetryGenerator]],
    cfg: TrainConfig,
    out_dir=None,
) -> TrainResult:
    """Optimize the model (and generators, after warmup) on the given trajectories.

    Checkpoints are written under ``out_dir`` at ``cfg.checkpoint_interval`` and
    at the end.  Raises :class:`NonFiniteLossError` on a non-finite loss or
    gradient; the last finite state is still checkpointed when ``out_dir`` is
    given and attached to the exception.
    """
    if not data:
        raise ValueError("training needs at least one trajectory")
    n_q = model.n_q
    triples = loss_mod.stack_triples(data, n_q)
    pairs = loss_mod.stack_pairs(data, n_q)

    k = cfg.k_generators
    if generator_guesses is None:
        generator_guesses = default_generator_guesses(k, n_q, cfg.seed)
    generator_guesses = tuple(generator_guesses)
    if len(generator_guesses) != k:
        raise ValueError(
            f"got {len(generator_guesses)} generator guesses for k_generators={k}"
        )
    for g in generator_guesses:
        if g.n_q != n_q:
            raise ValueError("generator guess dimension does not match the model")

    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)

    template = model.params
    mlp_flat = flatten_params(template)
    n_mlp = mlp_flat.size
    if k > 0:
        matrices = np.stack([np.asarray(g.matrix) for g in generator_guesses])
        vectors = np.stack([np.asarray(g.vector) for g in generator_guesses])
    else:
        matrices = np.zeros((0, n_q, n_q))
        vectors = np.zeros((0, n_q))
    flat = np.concatenate([mlp_flat, _flatten_generators(matrices, vectors)])
    state = AdamState.zeros(flat.size)

    def grad_fn(symmetry_enabled: bool):
        objective = loss_mod.make_objective(
            model.activation, triples, pairs, cfg.weights, symmetry_enabled
        )
        return jax.jit(jax.value_and_grad(objective, argnums=(0, 1, 2), has_aux=True))

    grad_fns = {False: grad_fn(False)}
    if k > 0 and cfg.epochs > cfg.symmetry_warmup_epochs:
        grad_fns[True] = grad_fn(True)

    def snapshot(epoch: int, breakdown: Optional[LossBreakdown]) -> Checkpoint:
        params = unflatten_params(flat[:n_mlp], template)
        gen_matrices, gen_vectors = _unflatten_generators(flat[n_mlp:], k, n_q)
        generators = tuple(
            SymmetryGenerator(np.asarray(gen_matrices[i]), np.asarray(gen_vectors[i]))
            for i in range(k)
        )
        summary = breakdown.as_dict() if breakdown is not None else {}
        return Checkpoint(
            model=model.with_params(params),
            generators=generators,
            seed=cfg.seed,
            epoch=epoch,
            loss_summary=summary,
        )

    history: list[LossBreakdown] = []
    last_breakdown: Optional[LossBreakdown] = None
    for epoch in range(1, cfg.epochs + 1):
        symmetry_enabled = k > 0 and epoch > cfg.symmetry_warmup_epochs
        params = unflatten_params(flat[:n_mlp], template)
        gen_matrices, gen_vectors = _unflatten_generators(flat[n_mlp:], k, n_q)
        (total, terms), grads = grad_fns[symmetry_enabled](
            params, gen_matrices, gen_vectors
        )
        total = float(total)
        breakdown = LossBreakdown(
            del_loss=float(terms[0]),
            degeneracy=float(terms[1]),
            symmetry=float(terms[2]),
            nontriviality=float(terms[3]),
            orthogonality=float(terms[4]),
            total=total,
            symmetry_enabled=symmetry_enabled,
        )
        grad_flat = np.concatenate(
            [
                flatten_params(grads[0]),
                _flatten_generators(np.asarray(grads[1]), np.asarray(grads[2])),
            ]
        )
        if not np.isfinite(total) or not np.all(np.isfinite(grad_flat)):
            ckpt = snapshot(epoch - 1, last_breakdown)
            if out_dir is not None:
                save_checkpoint(ckpt, out_dir / "checkpoint.json")
                save_history(history, out_dir / "loss_history.csv")
            raise NonFiniteLossError(epoch, ckpt)

        history.append(breakdown)
        last_breakdown = breakdown
        flat, state = adam_step(flat, grad_flat, state, cfg)

        if (
            out_dir is not None
            and cfg.checkpoint_interval > 0
            and epoch % cfg.checkpoint_interval == 0
            and epoch < cfg.epochs
        ):
            save_checkpoint(
                snapshot(epoch, breakdown),
                out_dir / f"checkpoint_{epoch:06d}.json",
            )

    final = snapshot(cfg.epochs, last_breakdown)
    if out_dir is not None:
        save_checkpoint(final, out_dir / "checkpoint.json")
        save_history(history, out_dir / "loss_history.csv")
    return TrainResult(checkpoint=final, history=history)
