"""Evaluation artifacts: rollouts, conserved-quantity and energy series, reports.

Index conventions: a series over pairs (discrete momentum based) starts at
k = 0 and has one entry fewer than the trajectory; series needing a centered
velocity start at k = 1 and lose one entry at each end.  Every series function
returns ``(start_index, values)`` so callers can align them.

RMSE convention: ``sqrt(mean over time of |difference|^2 / n_q)`` - the
per-component root-mean-square pooled over components, so a uniform offset of
``delta`` on every component reads as ``|delta|`` regardless of dimension.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import jax
import jax.numpy as jnp
import numpy as np

from . import vbea
from .diffcore import compiled
from .integrator import NewtonConfig, RolloutResult, rollout
from .model import Checkpoint, SymmetryGenerator
from .systems import System
from .trajectory import Trajectory

REPORT_FORMAT_VERSION = 1


def _as_field(model_or_checkpoint):
    if isinstance(model_or_checkpoint, Checkpoint):
        return model_or_checkpoint.model
    return model_or_checkpoint


@dataclass(frozen=True)
class PredictionResult:
    """Rollout over the training window plus its extension."""

    trajectory: Trajectory
    split_index: int  # last index of the recreation phase
    failure: Optional[object] = None

    @property
    def ok(self) -> bool:
        return self.failure is None

    def phase(self, k: int) -> str:
        return "recreation" if k <= self.split_index else "prediction"


def recreate_and_predict(
    model_or_checkpoint,
    traj: Trajectory,
    n_extra: int,
    cfg: NewtonConfig | None = None,
) -> PredictionResult:
    """Re-integrate the observed window from its first two points, then extend it."""
    field = _as_field(model_or_checkpoint)
    if n_extra < 0:
        raise ValueError("n_extra must be >= 0")
    n = traj.n_steps
    result: RolloutResult = rollout(
        field, traj.points[0], traj.points[1], n + n_extra, cfg, t0=traj.t0
    )
    return PredictionResult(
        trajectory=result.trajectory,
        split_index=n,
        failure=result.failure,
    )


def _pair_momenta(field, points: np.ndarray) -> np.ndarray:
    """Discrete momenta -D1 L(q_k, q_{k+1}) for all consecutive pairs."""
    d1 = compiled(field, "d1")
    fn = jax.jit(jax.vmap(lambda a, b: -d1(a, b)))
    return np.asarray(fn(jnp.asarray(points[:-1]), jnp.asarray(points[1:])))


def conserved_series(
    model_or_checkpoint,
    traj: Trajectory,
    generator: SymmetryGenerator,
    mode: str = "nn",
    system: System | None = None,
) -> tuple[int, np.ndarray]:
    """Generator-paired momentum along a trajectory.

    ``mode="nn"`` pairs the model's discrete momentum with the generator
    direction (one value per consecutive pair, starting at k = 0).
    ``mode="true"`` uses the exact system's momentum at centered-difference
    velocities (starting at k = 1).
    """
    pts = traj.points
    matrix = np.asarray(generator.matrix)
    vector = np.asarray(generator.vector)
    if mode == "nn":
        field = _as_field(model_or_checkpoint)
        momenta = _pair_momenta(field, pts)
        directions = pts[:-1] @ matrix.T + vector
        return 0, np.sum(momenta * directions, axis=1)
    if mode == "true":
        if system is None:
            raise ValueError('mode="true" needs the exact system')
        values = np.empty(pts.shape[0] - 2)
        for k in range(1, pts.shape[0] - 1):
            v = vbea.recover_velocity(traj, k)
            p = system.momentum(pts[k], v)
            values[k - 1] = (matrix @ pts[k] + vector) @ p
        return 1, values
    raise ValueError(f'mode must be "nn" or "true", got {mode!r}')


def energy_series(
    model_or_checkpoint,
    traj: Trajectory,
    mode: str = "vbea",
    system: System | None = None,
    velocity_order: int = 2,
) -> tuple[int, np.ndarray]:
    """Energy along a trajectory at finite-difference velocities.

    ``mode="vbea"`` evaluates the corrected Hamiltonian of the discrete model,
    divided by its step size so values are in energy units; ``mode="true"``
    evaluates the exact system's energy.  Start index depends on the velocity
    stencil (1 for order 2, 2 for order 4).
    """
    pts = traj.points
    start = 1 if velocity_order == 2 else 2
    ks = range(start, pts.shape[0] - start)
    if mode == "vbea":
        field = _as_field(model_or_checkpoint)
        values = np.array(
            [
                vbea.vbea_hamiltonian(field, pts[k], vbea.recover_velocity(traj, k, velocity_order))
                / field.dt
                for k in ks
            ]
        )
        return start, values
    if mode == "true":
        if system is None:
            raise ValueError('mode="true" needs the exact system')
        values = np.array(
            [
                system.hamiltonian(pts[k], vbea.recover_velocity(traj, k, velocity_order))
                for k in ks
            ]
        )
        return start, values
    raise ValueError(f'mode must be "vbea" or "true", got {mode!r}')


@dataclass(frozen=True)
class ResidualStats:
    max: float
    mean: float


def pairs_from_trajectory(traj: Trajectory) -> np.ndarray:
    """Consecutive pairs of a trajectory as an (N, 2, n_q) array."""
    return np.stack([traj.points[:-1], traj.points[1:]], axis=1)


def random_pairs(low, high, count: int, seed: int) -> np.ndarray:
    """Uniform pairs in the box [low, high]^n_q, as an (count, 2, n_q) array."""
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    rng = np.random.default_rng(seed)
    return rng.uniform(low, high, size=(count, 2, low.size))


def symmetry_residual(
    model_or_checkpoint, generator: SymmetryGenerator, pairs: np.ndarray
) -> ResidualStats:
    """Invariance-condition residual of the field under the generator, on pairs."""
    field = _as_field(model_or_checkpoint)
    pairs = np.asarray(pairs, dtype=float)
    if pairs.ndim != 3 or pairs.shape[1] != 2 or pairs.shape[2] != field.n_q:
        raise ValueError(
            f"pairs must have shape (count, 2, {field.n_q}), got {pairs.shape}"
        )
    d1 = compiled(field, "d1")
    d2 = compiled(field, "d2")
    matrix = jnp.asarray(generator.matrix)
    vector = jnp.asarray(generator.vector)

    def one(a, b):
        return (matrix @ a + vector) @ d1(a, b) + (matrix @ b + vector) @ d2(a, b)

    residuals = np.asarray(
        jax.jit(jax.vmap(one))(jnp.asarray(pairs[:, 0]), jnp.asarray(pairs[:, 1]))
    )
    abs_res = np.abs(residuals)
    return ResidualStats(max=float(abs_res.max()), mean=float(abs_res.mean()))


def trajectory_error(
    reference: Trajectory, predicted: Trajectory, split_index: int
) -> tuple[float, float]:
    """(recreation, prediction) RMSE between reference and predicted points.

    Recreation covers indices [0, split_index]; prediction covers the rest of
    the reference.  The predicted trajectory must reach at least as far.
    """
    ref = reference.points
    pred = predicted.points
    if ref.shape[1] != pred.shape[1]:
        raise ValueError("reference and predicted dimensions differ")
    if abs(reference.dt - predicted.dt) > 1e-12 * max(reference.dt, predicted.dt):
        raise ValueError("reference and predicted step sizes differ")
    if pred.shape[0] < ref.shape[0]:
        raise ValueError("predicted trajectory is shorter than the reference")
    if not 0 <= split_index < ref.shape[0]:
        raise ValueError(f"split_index {split_index} out of range")

    def rmse(a, b):
        if a.shape[0] == 0:
            return float("nan")
        return float(np.sqrt(np.mean(np.sum((a - b) ** 2, axis=1) / a.shape[1])))

    rec = rmse(ref[: split_index + 1], pred[: split_index + 1])
    pred_err = rmse(ref[split_index + 1 :], pred[split_index + 1 : ref.shape[0]])
    return rec, pred_err


@dataclass
class EvaluationReport:
    prediction: PredictionResult
    series: dict[str, tuple[int, np.ndarray]]
    summary: dict[str, float]


def evaluate(
    model_or_checkpoint,
    reference: Trajectory,
    n_extra: int,
    generator: SymmetryGenerator | None = None,
    system: System | None = None,
    true_generator: SymmetryGenerator | None = None,
    cfg: NewtonConfig | None = None,
) -> EvaluationReport:
    """Full evaluation pipeline: rollout, series, and summary statistics."""
    prediction = recreate_and_predict(model_or_checkpoint, reference, n_extra, cfg)
    traj = prediction.trajectory
    series: dict[str, tuple[int, np.ndarray]] = {}
    summary: dict[str, float] = {}

    if prediction.failure is not None:
        summary["failed_at_index"] = float(prediction.failure.index)

    if traj.points.shape[0] >= 3:
        field = _as_field(model_or_checkpoint)
        if generator is not None:
            series["i_nn"] = conserved_series(field, traj, generator, mode="nn")
            values = series["i_nn"][1]
            summary["i_nn_spread"] = float(values.max() - values.min())
        if system is not None:
            gen_true = true_generator or system.generator
            if gen_true is not None:
                series["i_true"] = conserved_series(
                    field, traj, gen_true, mode="true", system=system
                )
                values = series["i_true"][1]
                summary["i_true_spread"] = float(values.max() - values.min())
            series["h_true"] = energy_series(field, traj, mode="true", system=system)
        series["h_vbea"] = energy_series(field, traj, mode="vbea")
        values = series["h_vbea"][1]
        summary["h_vbea_spread"] = float(values.max() - values.min())

        pairs = pairs_from_trajectory(reference)
        if generator is not None:
            stats = symmetry_residual(field, generator, pairs)
            summary["symmetry_residual_max"] = stats.max
            summary["symmetry_residual_mean"] = stats.mean

    compare_len = min(reference.points.shape[0], traj.points.shape[0])
    if compare_len > 0:
        clipped_ref = Trajectory(
            dt=reference.dt, points=reference.points[:compare_len], t0=reference.t0
        )
        split = min(prediction.split_index, compare_len - 1)
        rec, pred_err = trajectory_error(clipped_ref, traj, split)
        summary["rmse_recreation"] = rec
        if not np.isnan(pred_err):
            summary["rmse_prediction"] = pred_err

    return EvaluationReport(prediction=prediction, series=series, summary=summary)


def write_report(report: EvaluationReport, path) -> None:
    """Report CSV: per-index rows plus a '#'-prefixed summary block."""
    traj = report.prediction.trajectory
    n_q = traj.n_q
    columns = ["k", "t", "phase"] + [f"q{i + 1}" for i in range(n_q)]
    columns += list(report.series.keys())
    times = traj.times
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for k in range(traj.points.shape[0]):
            row = [k, repr(float(times[k])), report.prediction.phase(k)]
            row += [repr(float(x)) for x in traj.points[k]]
            for start, values in report.series.values():
                idx = k - start
                row.append(repr(float(values[idx])) if 0 <= idx < len(values) else "")
            writer.writerow(row)
        fh.write(f"# format_version,{REPORT_FORMAT_VERSION}\n")
        for key, value in report.summary.items():
            fh.write(f"# {key},{value!r}\n")
