"""Command-line interface: commands, file outputs, exit codes, presets."""

import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from laglearn import cli, model, systems
from laglearn.trajectory import load_trajectory

CONFIGS_DIR = Path(__file__).resolve().parents[1] / "configs"


def run(argv):
    return cli.main(argv)


@pytest.fixture(scope="module")
def desk_config(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "desk.yaml"
    config = {
        "format_version": 1,
        "system": {"name": "cartpend"},
        "data": {
            "n": 12,
            "dt": 0.01,
            "fine_dt": 0.01,
            "q0": [0.0, 2.6],
            "p0": [0.4, -0.18],
            "seed": 1,
        },
        "model": {"hidden": [8, 8], "activation": "tanh", "seed": 3},
        "training": {
            "epochs": 5,
            "learning_rate": 3.0e-3,
            "beta1": 0.9,
            "beta2": 0.999,
            "epsilon": 1.0e-8,
            "symmetry_warmup_epochs": 2,
            "k_generators": 1,
            "degeneracy_exponent": 1,
        },
        "generators": [{"matrix": [[0.1, 0.1], [0.1, 0.1]], "vector": [1.5, 0.5]}],
    }
    path.write_text(yaml.safe_dump(config))
    return path


@pytest.fixture(scope="module")
def generated_data(desk_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert run(["generate", "--config", str(desk_config), "--out", str(out)]) == 0
    return out / "traj_000.csv"


class TestGenerate:
    def test_writes_expected_rows(self, generated_data):
        lines = generated_data.read_text().strip().splitlines()
        assert len(lines) == 14  # header + 13 points (12 steps)
        assert generated_data.with_suffix(".meta.json").exists()

    def test_flag_overrides_config(self, desk_config, tmp_path):
        out = tmp_path / "data"
        assert run(
            ["generate", "--config", str(desk_config), "--n", "5", "--out", str(out)]
        ) == 0
        traj = load_trajectory(out / "traj_000.csv")
        assert traj.points.shape[0] == 6

    def test_multiple_trajectories_distinct(self, desk_config, tmp_path):
        out = tmp_path / "multi"
        assert run(
            [
                "generate", "--config", str(desk_config),
                "--trajectories", "3", "--n", "4", "--out", str(out),
            ]
        ) == 0
        files = sorted(out.glob("traj_*.csv"))
        assert len(files) == 3
        points = [load_trajectory(f).points for f in files]
        assert not np.array_equal(points[0], points[1])
        assert not np.array_equal(points[1], points[2])

    def test_zero_noise_flag_equals_omission(self, desk_config, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        run(["generate", "--config", str(desk_config), "--n", "4", "--out", str(out_a)])
        run(
            [
                "generate", "--config", str(desk_config), "--n", "4",
                "--noise-var", "0", "--out", str(out_b),
            ]
        )
        assert (out_a / "traj_000.csv").read_bytes() == (out_b / "traj_000.csv").read_bytes()

    def test_noise_changes_points(self, desk_config, tmp_path):
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        run(["generate", "--config", str(desk_config), "--n", "4", "--out", str(out_a)])
        run(
            [
                "generate", "--config", str(desk_config), "--n", "4",
                "--noise-var", "1e-3", "--out", str(out_b),
            ]
        )
        a = load_trajectory(out_a / "traj_000.csv")
        b = load_trajectory(out_b / "traj_000.csv")
        assert not np.array_equal(a.points, b.points)
        assert b.provenance["noise_variance"] == 1e-3

    def test_print_config_dumps_yaml(self, desk_config, tmp_path, capsys):
        assert run(
            [
                "generate", "--config", str(desk_config), "--n", "99",
                "--out", str(tmp_path / "x"), "--print-config",
            ]
        ) == 0
        resolved = yaml.safe_load(capsys.readouterr().out)
        assert resolved["data"]["n"] == 99
        assert not (tmp_path / "x").exists()

    def test_missing_system_is_config_error(self, tmp_path):
        code = run(["generate", "--n", "5", "--out", str(tmp_path / "x")])
        assert code == 2

    def test_bad_ratio_is_config_error(self, desk_config, tmp_path):
        code = run(
            [
                "generate", "--config", str(desk_config),
                "--fine-dt", "0.003", "--out", str(tmp_path / "x"),
            ]
        )
        assert code == 2


class TestTrain:
    def test_dlnn_run_writes_outputs(self, desk_config, generated_data, tmp_path):
        out = tmp_path / "run"
        code = run(
            [
                "train", "--config", str(desk_config), "--data", str(generated_data),
                "--mode", "dlnn", "--out", str(out),
            ]
        )
        assert code == 0
        ckpt = model.load_checkpoint(out / "checkpoint.json")
        assert ckpt.epoch == 5
        assert ckpt.generators == ()
        history = (out / "loss_history.csv").read_text().strip().splitlines()
        assert len(history) == 6

    def test_epochs_override(self, desk_config, generated_data, tmp_path):
        out = tmp_path / "run"
        code = run(
            [
                "train", "--config", str(desk_config), "--data", str(generated_data),
                "--epochs", "2", "--out", str(out),
            ]
        )
        assert code == 0
        assert model.load_checkpoint(out / "checkpoint.json").epoch == 2

    def test_symdlnn_trains_generators_after_warmup(
        self, desk_config, generated_data, tmp_path
    ):
        out = tmp_path / "run"
        code = run(
            [
                "train", "--config", str(desk_config), "--data", str(generated_data),
                "--mode", "symdlnn", "--out", str(out),
            ]
        )
        assert code == 0
        ckpt = model.load_checkpoint(out / "checkpoint.json")
        assert len(ckpt.generators) == 1
        guess = np.array([0.1, 0.1, 0.1, 0.1, 1.5, 0.5])
        assert not np.array_equal(ckpt.generators[0].as_vector(), guess)

    def test_dry_run_touches_nothing(self, desk_config, generated_data, tmp_path, capsys):
        out = tmp_path / "dry"
        code = run(
            [
                "train", "--config", str(desk_config), "--data", str(generated_data),
                "--dry-run", "--out", str(out),
            ]
        )
        assert code == 0
        assert not out.exists()
        assert "dry run" in capsys.readouterr().out

    def test_missing_config_exit_2(self, generated_data, tmp_path):
        code = run(
            [
                "train", "--config", "/nonexistent.yaml",
                "--data", str(generated_data), "--out", str(tmp_path / "x"),
            ]
        )
        assert code == 2

    def test_nan_data_aborts_with_exit_4(self, desk_config, generated_data, tmp_path):
        poisoned_dir = tmp_path / "poisoned"
        poisoned_dir.mkdir()
        traj = load_trajectory(generated_data)
        points = traj.points.copy()
        points[3, 0] = np.nan
        from laglearn.trajectory import save_trajectory

        save_trajectory(traj.with_points(points), poisoned_dir / "bad.csv")
        out = tmp_path / "run"
        code = run(
            [
                "train", "--config", str(desk_config),
                "--data", str(poisoned_dir / "bad.csv"), "--out", str(out),
            ]
        )
        assert code == 4
        assert (out / "checkpoint.json").exists()  # last finite state kept


class TestRollout:
    def test_true_system_reproduces_generate(self, desk_config, generated_data, tmp_path):
        out_csv = tmp_path / "roll.csv"
        code = run(
            [
                "rollout", "--true-system", "cartpend", "--dt", "0.01",
                "--init-from", str(generated_data), "--steps", "12",
                "--out", str(out_csv),
            ]
        )
        assert code == 0
        rolled = load_trajectory(out_csv)
        reference = load_trajectory(generated_data)
        np.testing.assert_array_equal(rolled.points, reference.points)

    def test_explicit_seed_points(self, tmp_path):
        out_csv = tmp_path / "fp.csv"
        code = run(
            [
                "rollout", "--true-system", "free_particle", "--dt", "0.125",
                "--q0", "0", "--q1", "0.125", "--steps", "8", "--out", str(out_csv),
            ]
        )
        assert code == 0
        traj = load_trajectory(out_csv)
        np.testing.assert_allclose(traj.points[:, 0], np.arange(9) * 0.125, atol=1e-14)

    def test_model_checkpoint_rollout(self, desk_config, generated_data, tmp_path):
        run_dir = tmp_path / "run"
        run(
            [
                "train", "--config", str(desk_config), "--data", str(generated_data),
                "--epochs", "1", "--out", str(run_dir),
            ]
        )
        out_csv = tmp_path / "nn.csv"
        code = run(
            [
                "rollout", "--model", str(run_dir / "checkpoint.json"),
                "--init-from", str(generated_data), "--steps", "3", "--out", str(out_csv),
            ]
        )
        assert code in (0, 3)  # one-epoch model may legitimately be degenerate
        assert out_csv.exists()

    def test_missing_seed_points_exit_2(self, tmp_path):
        code = run(
            [
                "rollout", "--true-system", "free_particle", "--dt", "0.1",
                "--steps", "3", "--out", str(tmp_path / "x.csv"),
            ]
        )
        assert code == 2


class TestEval:
    def test_report_with_true_system_oracle(self, generated_data, tmp_path):
        report_path = tmp_path / "report.csv"
        code = run(
            [
                "eval", "--true-system", "cartpend", "--dt", "0.01",
                "--data", str(generated_data), "--n-extra", "4",
                "--generator", "true", "--report", str(report_path),
            ]
        )
        assert code == 0
        text = report_path.read_text()
        assert "i_nn" in text.splitlines()[0]
        assert "rmse_recreation" in text

    def test_eval_trained_model(self, desk_config, generated_data, tmp_path):
        run_dir = tmp_path / "run"
        run(
            [
                "train", "--config", str(desk_config), "--data", str(generated_data),
                "--mode", "symdlnn", "--out", str(run_dir),
            ]
        )
        report_path = tmp_path / "report.csv"
        code = run(
            [
                "eval", "--model", str(run_dir / "checkpoint.json"),
                "--data", str(generated_data), "--n-extra", "2",
                "--generator", "learned", "--report", str(report_path),
            ]
        )
        assert report_path.exists()
        assert code in (0, 3)


class TestVbeaExport:
    def test_grid_export_columns(self, tmp_path):
        out = tmp_path / "grid.csv"
        code = run(
            [
                "vbea-export", "--true-system", "harmonic_oscillator", "--dt", "0.1",
                "--grid", "q1=-1:1:5,v1=-1:1:5", "--out", str(out),
            ]
        )
        assert code == 0
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "q1,v1,l_invmod,l_vbea,h_vbea"
        assert len([l for l in lines if not l.startswith("#")]) == 26

    def test_correction_scales_quadratically_in_step(self, tmp_path):
        norms = {}
        for dt in (0.1, 0.05):
            out = tmp_path / f"grid_{dt}.csv"
            run(
                [
                    "vbea-export", "--true-system", "harmonic_oscillator",
                    "--dt", str(dt), "--grid", "q1=-1:1:7,v1=-1:1:7",
                    "--out", str(out),
                ]
            )
            rows = np.loadtxt(
                out, delimiter=",", skiprows=1,
                max_rows=49,
            )
            norms[dt] = np.linalg.norm(rows[:, 3] - rows[:, 2])
        assert norms[0.1] / norms[0.05] == pytest.approx(4.0, rel=0.05)

    def test_from_data_export(self, generated_data, tmp_path):
        out = tmp_path / "fd.csv"
        code = run(
            [
                "vbea-export", "--true-system", "cartpend", "--dt", "0.01",
                "--from-data", str(generated_data), "--out", str(out),
            ]
        )
        assert code == 0
        lines = [l for l in out.read_text().strip().splitlines() if not l.startswith("#")]
        assert len(lines) == 12  # header + 11 interior points

    def test_bad_grid_exit_2(self, tmp_path):
        code = run(
            [
                "vbea-export", "--true-system", "harmonic_oscillator", "--dt", "0.1",
                "--grid", "q1=-1:1:5", "--out", str(tmp_path / "x.csv"),
            ]
        )
        assert code == 2


class TestPresets:
    @pytest.mark.parametrize(
        "preset", sorted(p.name for p in CONFIGS_DIR.glob("*.yaml"))
    )
    def test_preset_parses(self, preset):
        from laglearn import config as config_mod

        cfg = config_mod.load_config(CONFIGS_DIR / preset)
        config_mod.build_system(cfg)
        config_mod.build_train_config(cfg, "dlnn")
        config_mod.require_data_section(cfg)

    def test_presets_cover_three_scenarios_at_two_scales(self):
        names = {p.stem for p in CONFIGS_DIR.glob("*.yaml")}
        for scenario in ("single", "multi", "noisy"):
            assert any(scenario in n and "paper" in n for n in names), scenario
            assert any(scenario in n and "desk" in n for n in names), scenario

    @pytest.mark.parametrize(
        "preset", sorted(p.name for p in CONFIGS_DIR.glob("*desk*.yaml"))
    )
    def test_desk_presets_dry_run(self, preset, tmp_path):
        cfg_path = CONFIGS_DIR / preset
        data_dir = tmp_path / "data"
        assert run(
            ["generate", "--config", str(cfg_path), "--n", "6", "--trajectories", "1",
             "--out", str(data_dir)]
        ) == 0
        code = run(
            [
                "train", "--config", str(cfg_path), "--data", str(data_dir),
                "--mode", "symdlnn", "--dry-run", "--out", str(tmp_path / "run"),
            ]
        )
        assert code == 0


def test_unknown_command_exit_2(capsys):
    with pytest.raises(SystemExit) as excinfo:
        cli.main(["frobnicate"])
    assert excinfo.value.code == 2
