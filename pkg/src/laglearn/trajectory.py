"""Trajectory container and CSV round-trip.

CSV layout: header ``t,q1,...,q{n_q}``, one row per time step, values printed
with 17 significant digits so every double round-trips exactly.  Step size,
start time, and provenance live in a JSON sidecar next to the CSV.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

TRAJECTORY_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Trajectory:
    """Configurations sampled at a fixed step size."""

    dt: float
    points: np.ndarray  # (N+1, n_q)
    t0: float = 0.0
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError(f"points must be 2-D (steps, n_q), got shape {pts.shape}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "points", pts)

    @property
    def n_q(self) -> int:
        return self.points.shape[1]

    @property
    def n_steps(self) -> int:
        """Number of steps (points minus one)."""
        return self.points.shape[0] - 1

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.points.shape[0])

    def with_points(self, points, **provenance_updates) -> "Trajectory":
        prov = dict(self.provenance)
        prov.update(provenance_updates)
        return replace(self, points=np.asarray(points, dtype=float), provenance=prov)


def sidecar_path(csv_path) -> Path:
    return Path(csv_path).with_suffix(".meta.json")


def save_trajectory(traj: Trajectory, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = "t," + ",".join(f"q{i + 1}" for i in range(traj.n_q))
    rows = np.column_stack([traj.times, traj.points])
    np.savetxt(path, rows, fmt="%.17g", delimiter=",", header=header, comments="")
    meta = {
        "format_version": TRAJECTORY_FORMAT_VERSION,
        "dt": traj.dt,
        "t0": traj.t0,
        "n_q": traj.n_q,
        "n_points": traj.points.shape[0],
        "provenance": traj.provenance,
    }
    with open(sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=1)
        fh.write("\n")


def load_trajectory(path) -> Trajectory:
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    meta_path = sidecar_path(path)
    if meta_path.exists():
        with open(meta_path) as fh:
            meta = json.load(fh)
        version = meta.get("format_version")
        if version != TRAJECTORY_FORMAT_VERSION:
            raise ValueError(f"unsupported trajectory format_version {version!r}")
        dt = float(meta["dt"])
        t0 = float(meta["t0"])
        provenance = meta.get("provenance", {})
    else:
        # Sidecar lost: recover the step size from the time column.
        times = data[:, 0]
        if len(times) < 2:
            raise ValueError(f"{path}: no sidecar and too few rows to infer dt")
        dt = float(times[1] - times[0])
        t0 = float(times[0])
        provenance = {}
    return Trajectory(dt=dt, points=data[:, 1:], t0=t0, provenance=provenance)
