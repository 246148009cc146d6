"""laglearn: learning discrete Lagrangians and their symmetries from trajectories.

The package trains a neural model of a discrete Lagrangian from
position-only snapshots of a mechanical system, optionally discovers
affine symmetry generators (and hence conserved quantities) alongside it,
simulates the learned model with a variational integrator, and converts
the discrete model to continuous Lagrangian/Hamiltonian form through
backward-error-analysis corrections.
"""

import jax

# All numerics in this package are double precision; tolerances throughout
# (Newton solves, conservation checks) assume it.
jax.config.update("jax_enable_x64", True)

from . import (
    diffcore,
    evaluation,
    integrator,
    loss,
    model,
    systems,
    trainer,
    trajectory,
    vbea,
)
from .model import Checkpoint, DiscreteLagrangianModel, SymmetryGenerator
from .trajectory import Trajectory

__all__ = [
    "Checkpoint",
    "DiscreteLagrangianModel",
    "SymmetryGenerator",
    "Trajectory",
    "diffcore",
    "evaluation",
    "integrator",
    "loss",
    "model",
    "systems",
    "trainer",
    "trajectory",
    "vbea",
]

__version__ = "0.1.0"
