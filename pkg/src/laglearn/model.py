"""Neural discrete Lagrangian, symmetry generators, and checkpoint files."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np

Array = jax.Array
Params = tuple[tuple[Array, Array], ...]

ACTIVATIONS: dict[str, Callable] = {
    "tanh": jnp.tanh,
    "softplus": jax.nn.softplus,
}

CHECKPOINT_FORMAT_VERSION = 1
DEFAULT_HIDDEN = (128, 128, 128)


def apply_mlp(params: Params, activation: str, q0, q1):
    """MLP value at the concatenated pair; traceable in both params and inputs."""
    act = ACTIVATIONS[activation]
    h = jnp.concatenate([q0, q1])
    for weights, bias in params[:-1]:
        h = act(weights @ h + bias)
    weights, bias = params[-1]
    return (weights @ h + bias)[0]


@dataclass(frozen=True)
class DiscreteLagrangianModel:
    """MLP model of a discrete Lagrangian on pairs of configurations.

    ``params`` is a tuple of ``(weights, bias)`` per layer.  The canonical flat
    parameter ordering (used by gradients, the optimizer, and checkpoints) is
    layer 0 weights row-major, layer 0 bias, layer 1 weights, ... through the
    output layer.
    """

    n_q: int
    dt: float
    params: Params
    activation: str = "tanh"

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        dims = [self.params[0][0].shape[1]]
        dims += [w.shape[0] for w, _ in self.params]
        return tuple(dims)

    @property
    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in self.params)

    def value(self, q0, q1):
        """Scalar field value; traceable (no shape checks)."""
        return apply_mlp(self.params, self.activation, q0, q1)

    def with_params(self, params: Params) -> "DiscreteLagrangianModel":
        return replace(self, params=tuple(tuple(layer) for layer in params))


@dataclass(frozen=True)
class SymmetryGenerator:
    """Affine generator: a matrix and a translation vector of matching dimension.

    Generates the one-parameter transformation family q -> exp(eta*matrix) q
    plus a translation along ``vector``; invariance of a discrete Lagrangian
    under it yields a conserved quantity.
    """

    matrix: np.ndarray
    vector: np.ndarray

    def __post_init__(self):
        m = jnp.asarray(self.matrix, dtype=jnp.float64)
        w = jnp.asarray(self.vector, dtype=jnp.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"generator matrix must be square, got {m.shape}")
        if w.shape != (m.shape[0],):
            raise ValueError(
                f"generator vector shape {w.shape} does not match matrix {m.shape}"
            )
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "vector", w)

    @property
    def n_q(self) -> int:
        return self.matrix.shape[0]

    def with_arrays(self, matrix, vector) -> "SymmetryGenerator":
        new = object.__new__(SymmetryGenerator)
        object.__setattr__(new, "matrix", matrix)
        object.__setattr__(new, "vector", vector)
        return new

    def as_vector(self) -> np.ndarray:
        """Flat [matrix row-major, vector] representation (Frobenius pairing)."""
        return np.concatenate(
            [np.asarray(self.matrix).ravel(), np.asarray(self.vector)]
        )

    def normalized(self) -> "SymmetryGenerator":
        scale = float(np.linalg.norm(self.as_vector()))
        if scale == 0.0:
            raise ValueError("cannot normalize the zero generator")
        return SymmetryGenerator(self.matrix / scale, self.vector / scale)


def init(
    seed: int,
    n_q: int,
    dt: float,
    activation: str = "tanh",
    hidden: Sequence[int] = DEFAULT_HIDDEN,
) -> DiscreteLagrangianModel:
    """Seeded model with uniform fan-scaled weights and zero biases."""
    if n_q < 1:
        raise ValueError(f"n_q must be >= 1, got {n_q}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    dims = [2 * n_q, *hidden, 1]
    rng = np.random.default_rng(seed)
    params = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        params.append((jnp.asarray(weights), jnp.zeros(fan_out)))
    return DiscreteLagrangianModel(
        n_q=n_q, dt=float(dt), params=tuple(params), activation=activation
    )


def forward(model: DiscreteLagrangianModel, q0, q1) -> float:
    """Validated scalar evaluation of the model at a configuration pair."""
    q0 = np.asarray(q0, dtype=float)
    q1 = np.asarray(q1, dtype=float)
    if q0.shape != (model.n_q,) or q1.shape != (model.n_q,):
        raise ValueError(
            f"inputs must have shape ({model.n_q},), got {q0.shape} and {q1.shape}"
        )
    from .diffcore import compiled

    return float(compiled(model, "value")(jnp.asarray(q0), jnp.asarray(q1)))


def flatten_params(params: Params) -> np.ndarray:
    """Canonical flat vector: per layer, weights row-major then bias."""
    pieces = []
    for weights, bias in params:
        pieces.append(np.asarray(weights).ravel())
        pieces.append(np.asarray(bias).ravel())
    return np.concatenate(pieces)


def unflatten_params(flat, template: Params) -> Params:
    """Inverse of :func:`flatten_params` for the given layer structure."""
    flat = jnp.asarray(flat)
    layers = []
    offset = 0
    for weights, bias in template:
        w_size = weights.size
        b_size = bias.size
        w = flat[offset : offset + w_size].reshape(weights.shape)
        offset += w_size
        b = flat[offset : offset + b_size].reshape(bias.shape)
        offset += b_size
        layers.append((w, b))
    if offset != flat.size:
        raise ValueError(
            f"flat vector has {flat.size} entries, template needs {offset}"
        )
    return tuple(layers)


@dataclass
class Checkpoint:
    """Model plus generators and training metadata; JSON round-trip is exact."""

    model: DiscreteLagrangianModel
    generators: tuple[SymmetryGenerator, ...] = ()
    seed: int = 0
    epoch: int = 0
    loss_summary: dict = field(default_factory=dict)


def _array_to_lists(a) -> list:
    return np.asarray(a).tolist()


def checkpoint_to_dict(ckpt: Checkpoint) -> dict:
    m = ckpt.model
    return {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "model": {
            "n_q": m.n_q,
            "dt": m.dt,
            "activation": m.activation,
            "layer_dims": list(m.layer_dims),
            "layers": [
                {"weights": _array_to_lists(w), "bias": _array_to_lists(b)}
                for w, b in m.params
            ],
        },
        "generators": [
            {"matrix": _array_to_lists(g.matrix), "vector": _array_to_lists(g.vector)}
            for g in ckpt.generators
        ],
        "seed": ckpt.seed,
        "epoch": ckpt.epoch,
        "loss_summary": ckpt.loss_summary,
    }


def checkpoint_from_dict(data: dict) -> Checkpoint:
    version = data.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint format_version {version!r}")
    m = data["model"]
    params = tuple(
        (jnp.asarray(layer["weights"], dtype=jnp.float64),
         jnp.asarray(layer["bias"], dtype=jnp.float64))
        for layer in m["layers"]
    )
    model = DiscreteLagrangianModel(
        n_q=int(m["n_q"]),
        dt=float(m["dt"]),
        params=params,
        activation=m["activation"],
    )
    generators = tuple(
        SymmetryGenerator(np.asarray(g["matrix"]), np.asarray(g["vector"]))
        for g in data.get("generators", [])
    )
    return Checkpoint(
        model=model,
        generators=generators,
        seed=int(data.get("seed", 0)),
        epoch=int(data.get("epoch", 0)),
        loss_summary=data.get("loss_summary", {}),
    )


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(checkpoint_to_dict(ckpt), fh, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> Checkpoint:
    with open(path) as fh:
        return checkpoint_from_dict(json.load(fh))
