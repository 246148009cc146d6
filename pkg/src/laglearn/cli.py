"""Command-line interface.

Subcommands: ``generate`` (reference data), ``train`` (model fitting),
``rollout`` (forward simulation), ``eval`` (recreation/prediction report),
``vbea-export`` (continuous Lagrangian/Hamiltonian samples).

Exit codes: 0 success, 2 usage or configuration error, 3 integrator failure
(partial outputs are kept), 4 training aborted on a non-finite loss (the last
finite checkpoint is kept).
"""

from __future__ import annotations

import argparse
import itertools
import sys
from pathlib import Path

import numpy as np

from . import config as config_mod
from . import evaluation, integrator, model, systems, trainer, vbea
from .config import ConfigError
from .integrator import IntegrationError
from .trajectory import Trajectory, load_trajectory, save_trajectory

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INTEGRATOR = 3
EXIT_TRAINING = 4

VBEA_EXPORT_FORMAT_VERSION = 1


def _parse_vector(text: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.split(",")], dtype=float)
    except ValueError:
        raise ConfigError(f"could not parse vector {text!r} (expected e.g. '0.1,0.5')")


def _field_from_args(args):
    """Discrete Lagrangian from --model or --true-system/--dt."""
    if getattr(args, "model", None):
        return model.load_checkpoint(args.model)
    if getattr(args, "true_system", None):
        if args.dt is None:
            raise ConfigError("--true-system needs --dt")
        system = systems.make_system(args.true_system)
        return systems.MidpointLagrangian(system, args.dt)
    raise ConfigError("either --model or --true-system is required")


# --- generate --------------------------------------------------------------


def cmd_generate(args) -> int:
    cfg = config_mod.load_config(args.config) if args.config else config_mod.default_config()
    overrides = {
        "system.name": args.system,
        "data.n": args.n,
        "data.dt": args.dt,
        "data.fine_dt": args.fine_dt,
        "data.noise_var": args.noise_var,
        "data.seed": args.seed,
        "data.trajectories": args.trajectories,
    }
    if args.q0 is not None:
        overrides["data.q0"] = _parse_vector(args.q0).tolist()
    if args.p0 is not None:
        overrides["data.p0"] = _parse_vector(args.p0).tolist()
    cfg = config_mod.apply_overrides(cfg, overrides)
    if args.print_config:
        print(config_mod.dump_config(cfg), end="")
        return EXIT_OK

    system = config_mod.build_system(cfg)
    data_cfg = config_mod.require_data_section(cfg)
    base_q0 = np.asarray(data_cfg["q0"], dtype=float)
    base_p0 = np.asarray(data_cfg["p0"], dtype=float)
    if base_q0.shape != (system.n_q,) or base_p0.shape != (system.n_q,):
        raise ConfigError(
            f"q0/p0 must have {system.n_q} components for {system.name}"
        )
    count = int(data_cfg["trajectories"])
    seed = int(data_cfg["seed"])
    noise_var = float(data_cfg["noise_var"])
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if count == 1:
        conditions = [(base_q0, base_p0)]
    else:
        conditions = systems.sample_initial_conditions(
            base_q0, base_p0, count, seed, spread=float(data_cfg["ic_spread"])
        )
    for i, (q0, p0) in enumerate(conditions):
        traj = systems.generate(
            system,
            q0,
            p0,
            float(data_cfg["fine_dt"]),
            float(data_cfg["dt"]),
            int(data_cfg["n"]),
            seed=seed + i,
        )
        if noise_var > 0.0:
            traj = systems.add_noise(traj, noise_var, seed + i)
        path = out_dir / f"traj_{i:03d}.csv"
        save_trajectory(traj, path)
        print(f"wrote {path} ({traj.points.shape[0]} points)")
    return EXIT_OK


# --- train -----------------------------------------------------------------


def _load_data_paths(paths) -> list[Trajectory]:
    files: list[Path] = []
    for entry in paths:
        p = Path(entry)
        if p.is_dir():
            files.extend(sorted(p.glob("*.csv")))
        elif p.exists():
            files.append(p)
        else:
            raise ConfigError(f"data path does not exist: {p}")
    if not files:
        raise ConfigError("no trajectory CSV files found")
    return [load_trajectory(f) for f in files]


def cmd_train(args) -> int:
    cfg = config_mod.load_config(args.config)
    cfg = config_mod.apply_overrides(cfg, {"training.epochs": args.epochs})
    if args.print_config:
        print(config_mod.dump_config(cfg), end="")
        return EXIT_OK

    data = _load_data_paths(args.data)
    n_q = data[0].n_q
    for traj in data:
        if traj.n_q != n_q:
            raise ConfigError("training trajectories have inconsistent dimensions")
    dt = data[0].dt

    train_cfg = config_mod.build_train_config(cfg, args.mode)
    model_cfg = cfg["model"]
    net = model.init(
        seed=int(model_cfg["seed"]),
        n_q=n_q,
        dt=dt,
        activation=model_cfg["activation"],
        hidden=tuple(model_cfg["hidden"]),
    )
    guesses = None
    if args.mode == "symdlnn":
        guesses = config_mod.build_generator_guesses(cfg, n_q)
        if guesses is not None and len(guesses) != train_cfg.k_generators:
            raise ConfigError(
                f"config lists {len(guesses)} generators, "
                f"training.k_generators is {train_cfg.k_generators}"
            )

    if args.dry_run:
        print(config_mod.dump_config(cfg), end="")
        print(
            f"dry run: {len(data)} trajectories, n_q={n_q}, dt={dt}, "
            f"mode={args.mode}, epochs={train_cfg.epochs}, "
            f"parameters={net.parameter_count}"
        )
        return EXIT_OK

    out_dir = Path(args.out)
    try:
        result = trainer.train(data, net, guesses, train_cfg, out_dir=out_dir)
    except trainer.NonFiniteLossError as err:
        print(f"training aborted: {err}", file=sys.stderr)
        return EXIT_TRAINING
    final = result.history[-1]
    print(
        f"trained {train_cfg.epochs} epochs: total {final.total:.6e} "
        f"(stepping {final.del_loss:.6e}); wrote {out_dir / 'checkpoint.json'}"
    )
    return EXIT_OK


# --- rollout ---------------------------------------------------------------


def cmd_rollout(args) -> int:
    field = _field_from_args(args)
    dlag = field.model if isinstance(field, model.Checkpoint) else field
    if args.init_from:
        seed_traj = load_trajectory(args.init_from)
        if seed_traj.points.shape[0] < 2:
            raise ConfigError("--init-from trajectory needs at least 2 points")
        q0, q1 = seed_traj.points[0], seed_traj.points[1]
    elif args.q0 is not None and args.q1 is not None:
        q0 = _parse_vector(args.q0)
        q1 = _parse_vector(args.q1)
    else:
        raise ConfigError("either --init-from or both --q0 and --q1 are required")

    result = integrator.rollout(dlag, q0, q1, args.steps)
    save_trajectory(result.trajectory, args.out)
    if result.failure is not None:
        print(
            f"integration failed at step {result.failure.index}: "
            f"{result.failure.error}; partial trajectory kept in {args.out}",
            file=sys.stderr,
        )
        return EXIT_INTEGRATOR
    print(f"wrote {args.out} ({result.trajectory.points.shape[0]} points)")
    return EXIT_OK


# --- eval ------------------------------------------------------------------


def _resolve_system(traj: Trajectory, args) -> systems.System | None:
    if traj.provenance.get("system"):
        try:
            return systems.system_from_provenance(traj.provenance)
        except ValueError:
            pass
    if getattr(args, "config", None):
        cfg = config_mod.load_config(args.config)
        if cfg["system"].get("name"):
            return config_mod.build_system(cfg)
    return None


def cmd_eval(args) -> int:
    ckpt = model.load_checkpoint(args.model) if args.model else None
    field = ckpt if ckpt is not None else _field_from_args(args)
    reference = load_trajectory(args.data)
    system = _resolve_system(reference, args)

    generator = None
    if args.generator == "learned":
        if ckpt is not None and ckpt.generators:
            generator = ckpt.generators[0]
    elif args.generator == "true":
        if system is None or system.generator is None:
            raise ConfigError(
                "--generator true needs a system with a known generator "
                "(from the data sidecar or --config)"
            )
        generator = system.generator

    report = evaluation.evaluate(
        field,
        reference,
        n_extra=args.n_extra,
        generator=generator,
        system=system,
    )
    evaluation.write_report(report, args.report)
    print(f"wrote {args.report}")
    for key, value in report.summary.items():
        print(f"  {key}: {value:.6e}")
    if report.prediction.failure is not None:
        print(
            f"integration failed at step {report.prediction.failure.index} "
            f"({report.prediction.phase(report.prediction.failure.index)} phase)",
            file=sys.stderr,
        )
        return EXIT_INTEGRATOR
    return EXIT_OK


# --- vbea-export -----------------------------------------------------------


def _parse_grid(spec: str, n_q: int) -> tuple[np.ndarray, np.ndarray]:
    """Grid spec 'q1=lo:hi:n,...,v1=lo:hi:n,...' -> arrays of (q, v) samples."""
    names = [f"q{i + 1}" for i in range(n_q)] + [f"v{i + 1}" for i in range(n_q)]
    axes: dict[str, np.ndarray] = {}
    for part in spec.split(","):
        if "=" not in part:
            raise ConfigError(f"bad grid component {part!r}")
        name, rng = part.split("=", 1)
        name = name.strip()
        if name not in names:
            raise ConfigError(f"unknown grid variable {name!r}; expected {names}")
        pieces = rng.split(":")
        if len(pieces) != 3:
            raise ConfigError(f"grid range must be lo:hi:count, got {rng!r}")
        lo, hi, count = float(pieces[0]), float(pieces[1]), int(pieces[2])
        axes[name] = np.linspace(lo, hi, count)
    missing = [name for name in names if name not in axes]
    if missing:
        raise ConfigError(f"grid spec is missing: {', '.join(missing)}")
    mesh = list(itertools.product(*(axes[name] for name in names)))
    grid = np.asarray(mesh)
    return grid[:, :n_q], grid[:, n_q:]


def cmd_vbea_export(args) -> int:
    field = _field_from_args(args)
    dlag = field.model if isinstance(field, model.Checkpoint) else field
    n_q = dlag.n_q
    if args.from_data:
        traj = load_trajectory(args.from_data)
        if traj.n_q != n_q:
            raise ConfigError("data dimension does not match the model")
        qs, vs = [], []
        for k in range(1, traj.points.shape[0] - 1):
            qs.append(traj.points[k])
            vs.append(vbea.recover_velocity(traj, k))
        qs, vs = np.asarray(qs), np.asarray(vs)
    elif args.grid:
        qs, vs = _parse_grid(args.grid, n_q)
    else:
        raise ConfigError("either --grid or --from-data is required")

    dt = dlag.dt
    with open(args.out, "w") as fh:
        header = [f"q{i + 1}" for i in range(n_q)] + [f"v{i + 1}" for i in range(n_q)]
        header += ["l_invmod", "l_vbea", "h_vbea"]
        fh.write(",".join(header) + "\n")
        for q, v in zip(qs, vs):
            inv = vbea.inverse_modified(dlag, q, v) / dt
            cor = vbea.vbea_lagrangian(dlag, q, v) / dt
            ham = vbea.vbea_hamiltonian(dlag, q, v) / dt
            row = [*q, *v, inv, cor, ham]
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
        fh.write(f"# format_version,{VBEA_EXPORT_FORMAT_VERSION}\n")
    print(f"wrote {args.out} ({len(qs)} samples)")
    return EXIT_OK


# --- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="laglearn",
        description="Learn discrete Lagrangians and symmetries from trajectories.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="generate reference trajectory data")
    p.add_argument("--config", help="preset config file")
    p.add_argument("--system", choices=sorted(systems.SYSTEMS))
    p.add_argument("--n", type=int, help="number of coarse steps")
    p.add_argument("--dt", type=float, help="coarse step size")
    p.add_argument("--fine-dt", type=float, help="integration step size")
    p.add_argument("--q0", help="initial configuration, comma separated")
    p.add_argument("--p0", help="initial momentum, comma separated")
    p.add_argument("--noise-var", type=float, help="Gaussian noise variance")
    p.add_argument("--seed", type=int)
    p.add_argument("--trajectories", type=int, help="number of trajectories")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--print-config", action="store_true")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train a model on trajectory data")
    p.add_argument("--config", required=True)
    p.add_argument("--data", nargs="+", required=True, help="CSV files or directories")
    p.add_argument("--mode", choices=("dlnn", "symdlnn"), default="dlnn")
    p.add_argument("--epochs", type=int, help="override config epochs")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--dry-run", action="store_true")
    p.add_argument("--print-config", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("rollout", help="simulate a discrete Lagrangian forward")
    p.add_argument("--model", help="checkpoint file")
    p.add_argument("--true-system", choices=sorted(systems.SYSTEMS))
    p.add_argument("--dt", type=float, help="step size for --true-system")
    p.add_argument("--q0", help="first configuration, comma separated")
    p.add_argument("--q1", help="second configuration, comma separated")
    p.add_argument("--init-from", help="take q0, q1 from this trajectory CSV")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_rollout)

    p = sub.add_parser("eval", help="recreation/prediction report for a model")
    p.add_argument("--model", help="checkpoint file")
    p.add_argument("--true-system", choices=sorted(systems.SYSTEMS))
    p.add_argument("--dt", type=float, help="step size for --true-system")
    p.add_argument("--data", required=True, help="reference trajectory CSV")
    p.add_argument("--n-extra", type=int, default=0)
    p.add_argument(
        "--generator", choices=("learned", "true", "none"), default="learned"
    )
    p.add_argument("--config", help="config supplying the system when no sidecar")
    p.add_argument("--report", required=True, help="output report CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser(
        "vbea-export", help="sample continuous Lagrangian/Hamiltonian forms"
    )
    p.add_argument("--model", help="checkpoint file")
    p.add_argument("--true-system", choices=sorted(systems.SYSTEMS))
    p.add_argument("--dt", type=float, help="step size for --true-system")
    p.add_argument("--grid", help="grid spec, e.g. 'q1=-1:1:5,v1=-1:1:5'")
    p.add_argument("--from-data", help="sample along a trajectory CSV")
    p.add_argument("--out", required=True, help="output CSV")
    p.set_defaults(func=cmd_vbea_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationError as err:
        print(f"integration error: {err}", file=sys.stderr)
        return EXIT_INTEGRATOR


if __name__ == "__main__":
    sys.exit(main())
