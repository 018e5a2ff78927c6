"""Experiment harness and CLI: configs, presets, outputs, determinism, exit codes."""

import filecmp
import json

import numpy as np
import pytest

from mixopt.cli import main
from mixopt.harness import (
    ConfigError,
    ExperimentConfig,
    PRESETS,
    experiment_hash,
    load_config,
    preset_config,
    run_experiment,
    _grouped_seed,
)
from mixopt.reporting import config_hash, read_table, write_json, write_table
from mixopt.wstar_net import load_checkpoint


def coerm_toml(tmp_path, **overrides):
    lines = [
        'kind = "coerm"',
        "n_sources = 2",
        "dim = 2",
        "n_targets = 4",
        "refine_steps = 30",
        "seeds = [0]",
    ]
    path = tmp_path / "exp.toml"
    path.write_text("\n".join(lines) + "\n[options]\nmu = 0.5\nL = 1.0\n"
                    "radius = 1.0\naudit_pairs = 20\ninstance_seed = 0\n")
    return path


class TestReporting:
    def test_table_round_trip(self, tmp_path):
        path = tmp_path / "deep" / "table.csv"
        header = ["t", "value", "flag"]
        rows = [[1, 0.1 + 0.2, True], [2, -1e-17, False]]
        write_table(path, header, rows, meta={"config_hash": "abc", "seed": 3})
        meta, got_header, got_rows = read_table(path)
        assert meta == {"config_hash": "abc", "seed": "3"}
        assert got_header == header
        # repr round-trips floats exactly; bools are stored as 0/1
        np.testing.assert_array_equal(got_rows,
                                      [[1.0, 0.1 + 0.2, 1.0], [2.0, -1e-17, 0.0]])

    def test_meta_lines_sorted(self, tmp_path):
        path = tmp_path / "t.csv"
        write_table(path, ["x"], [[1.0]], meta={"b_key": 1, "a_key": 2})
        lines = path.read_text().splitlines()
        assert lines[0] == "# a_key: 2"
        assert lines[1] == "# b_key: 1"

    def test_non_numeric_rows_stay_strings(self, tmp_path):
        path = tmp_path / "t.csv"
        write_table(path, ["name", "v"], [["alpha", 1.0]])
        _, _, rows = read_table(path)
        assert rows == [["alpha", "1.0"]]

    def test_json_sorted_and_canonical(self, tmp_path):
        path = tmp_path / "s.json"
        write_json(path, {"b": np.float64(0.5), "a": np.array([1.0, 2.0]),
                          "c": {"y": np.int64(3), "x": None}})
        text = path.read_text()
        assert text.index('"a"') < text.index('"b"') < text.index('"c"')
        assert json.loads(text) == {"a": [1.0, 2.0], "b": 0.5,
                                    "c": {"x": None, "y": 3}}
        assert text.endswith("\n")

    def test_config_hash_order_independent(self):
        assert config_hash({"a": 1, "b": [2, 3]}) == config_hash({"b": [2, 3], "a": 1})
        assert config_hash({"a": 1}) != config_hash({"a": 2})


class TestExperimentConfig:
    def test_validation_names_fields(self):
        with pytest.raises(ConfigError, match="kind"):
            ExperimentConfig(kind="nope")
        with pytest.raises(ConfigError, match="'n_sources'"):
            ExperimentConfig(kind="coerm", n_sources=0)
        with pytest.raises(ConfigError, match="'steps'"):
            ExperimentConfig(kind="coerm", steps=-1)
        with pytest.raises(ConfigError, match="'label_rate'"):
            ExperimentConfig(kind="online", label_rate=1.5)
        with pytest.raises(ConfigError, match="'seeds'"):
            ExperimentConfig(kind="coerm", seeds=())
        with pytest.raises(ConfigError, match="'seeds'"):
            ExperimentConfig(kind="coerm", seeds=(-1,))

    def test_hash_ignores_output_directory(self):
        a = ExperimentConfig(kind="coerm", out_dir="runs/x")
        b = ExperimentConfig(kind="coerm", out_dir="runs/y")
        assert experiment_hash(a) == experiment_hash(b)
        c = ExperimentConfig(kind="coerm", n_targets=65)
        assert experiment_hash(a) != experiment_hash(c)

    def test_presets_cover_every_kind(self):
        for kind in ("mixture", "coerm", "wstar", "online", "grouped", "phase"):
            config = preset_config(kind, "default")
            assert config.kind == kind
        with pytest.raises(ConfigError, match="available"):
            preset_config("coerm", "nope")

    def test_load_config(self, tmp_path):
        path = coerm_toml(tmp_path)
        config = load_config(path)
        assert config.kind == "coerm"
        assert config.n_targets == 4
        assert config.opt("audit_pairs") == 20

    def test_load_config_errors(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text('kind = "coerm"\nbogus_field = 1\n')
        with pytest.raises(ConfigError, match="bogus_field"):
            load_config(path)
        path.write_text("n_sources = 2\n")
        with pytest.raises(ConfigError, match="'kind'"):
            load_config(path)
        path.write_text('kind = "coerm"\nseeds = 5\n')
        with pytest.raises(ConfigError, match="'seeds'"):
            load_config(path)
        path.write_text("kind = [broken\n")
        with pytest.raises(ConfigError):
            load_config(path)
        with pytest.raises(ConfigError, match="not found"):
            load_config(tmp_path / "missing.toml")


class TestCommands:
    def test_coerm_outputs(self, tmp_path):
        config = ExperimentConfig(
            kind="coerm", n_sources=2, dim=2, n_targets=4, refine_steps=30,
            seeds=(0,), out_dir=str(tmp_path / "run"),
            options={"mu": 0.5, "L": 1.0, "radius": 1.0, "audit_pairs": 20,
                     "instance_seed": 0})
        assert run_experiment(config) == 0
        meta, header, rows = read_table(tmp_path / "run" / "solutions.csv")
        assert meta["config_hash"] == experiment_hash(config)
        assert header == ["alpha_0", "alpha_1", "w_0", "w_1", "grad_evals"]
        assert rows.shape == (4, 5)
        np.testing.assert_array_equal(rows[:, 4], np.full(4, 30 * 2))
        summary = json.loads((tmp_path / "run" / "summary.json").read_text())
        assert set(summary) == {"experiment", "config_hash", "seed", "n_mixtures",
                                "grad_evals_total", "audit_pairs", "audit_max_ratio",
                                "audit_bound"}
        assert summary["grad_evals_total"] == 4 * 30 * 2
        assert summary["audit_max_ratio"] <= summary["audit_bound"]

    def test_mixture_outputs(self, tmp_path):
        config = ExperimentConfig(
            kind="mixture", n_sources=3, dim=3, steps=40,
            seeds=(1,), out_dir=str(tmp_path / "run"),
            options={"mu": 0.5, "L": 1.0, "radius": 1.0, "center_scale": 0.5,
                     "smoothing": 0.25, "eta": 0.05, "gamma": 0.05,
                     "record_every": 10, "instance_seed": 2})
        assert run_experiment(config) == 0
        meta, header, rows = read_table(tmp_path / "run" / "trajectory.csv")
        assert header == ["t", "objective", "gap_sq", "alpha_0", "alpha_1", "alpha_2"]
        np.testing.assert_array_equal(rows[:, 0], [10, 20, 30, 40])
        np.testing.assert_allclose(rows[:, 3:].sum(axis=1), 1.0, atol=1e-9)
        summary = json.loads((tmp_path / "run" / "summary.json").read_text())
        assert summary["seed"] == 1
        assert len(summary["final_alpha"]) == 3

    def test_wstar_outputs(self, tmp_path):
        config = ExperimentConfig(
            kind="wstar", n_sources=2, dim=2, n_train=20, steps=30,
            refine_steps=5, width=16, seeds=(0,), out_dir=str(tmp_path / "run"),
            options={"mu": 0.5, "L": 1.0, "radius": 1.0, "center_scale": 0.25,
                     "instance_seed": 7, "trace_every": 10, "eval_points": 32,
                     "test_points": 64})
        assert run_experiment(config) == 0
        meta, header, rows = read_table(tmp_path / "run" / "trace.csv")
        assert header == ["t", "empirical_risk", "label_gap_mean", "test_excess_risk"]
        net = load_checkpoint(tmp_path / "run" / "net.json")
        assert net.width == 16 and net.n_sources == 2 and net.out_dim == 2
        summary = json.loads((tmp_path / "run" / "summary.json").read_text())
        assert summary["test_excess_risk"] >= 0.0

    def test_online_outputs(self, tmp_path):
        config = ExperimentConfig(
            kind="online", n_sources=2, dim=2, steps=128, refine_steps=10,
            label_rate=0.5, seeds=(0,), out_dir=str(tmp_path / "run"),
            options={"mu": 0.5, "L": 1.0, "radius": 1.0, "center_scale": 0.25,
                     "instance_seed": 3})
        assert run_experiment(config) == 0
        meta, header, rows = read_table(tmp_path / "run" / "stream.csv")
        assert header == ["t", "eps_t", "active_center", "created", "Z_t", "loss",
                          "label_count_total"]
        assert rows.shape[0] == 128
        np.testing.assert_array_equal(rows[:, 0], np.arange(1, 129))
        summary = json.loads((tmp_path / "run" / "summary.json").read_text())
        assert summary["total_labels"] == int(rows[-1, 6])
        assert summary["audit_min_margin"] > 0.0

    def test_phase_cost_arithmetic(self, tmp_path):
        config = ExperimentConfig(
            kind="phase", n_sources=3, dim=2, n_train=10, steps=20,
            refine_steps=2, width=16, seeds=(0,), out_dir=str(tmp_path / "run"),
            options={"mu": 0.5, "L": 1.0, "radius": 1.0, "center_scale": 0.25,
                     "solve_steps": 400, "instance_seed": 7,
                     "grid": [1, 2, 4, 1024]})
        assert run_experiment(config) == 0
        _, header, rows = read_table(tmp_path / "run" / "phase.csv")
        assert header == ["n_targets", "solve_cost", "learn_cost"]
        train_cost = 20 * 10 * 2 * 3 + 20 * 10
        for m, solve_cost, learn_cost in rows:
            assert solve_cost == m * 400 * 3
            assert learn_cost == train_cost + m
        # solving is cheaper for one target; learning wins by the top of the grid
        assert rows[0, 1] < rows[0, 2]
        assert rows[-1, 2] < rows[-1, 1]
        summary = json.loads((tmp_path / "run" / "summary.json").read_text())
        expected_cross = next(int(m) for m, s, l in rows if l < s)
        assert summary["crossover_targets"] == expected_cross
        assert summary["train_cost"] == train_cost

    def test_grouped_copy_target_concentrates(self, tmp_path):
        config = ExperimentConfig(
            kind="grouped", n_train=60, steps=400, refine_steps=200, seeds=(0,),
            out_dir=str(tmp_path / "run"),
            options={"instance_seed": 0, "mean_scale": 1.0, "target_mode": "copy",
                     "n_groups": 2, "domains_per_group": 2, "n_features": 4})
        rows = _grouped_seed(config, 0)
        assert len(rows) == 2
        for row in rows:
            # the target IS one of the group's domains, so nearly all mixture
            # mass should land inside that group
            assert row["learned_group_mass"] >= 0.7

    def test_grouped_single_group_degenerate(self, tmp_path):
        config = ExperimentConfig(
            kind="grouped", n_train=60, steps=300, refine_steps=200, seeds=(0,),
            out_dir=str(tmp_path / "run"),
            options={"instance_seed": 1, "mean_scale": 1.0, "n_groups": 1,
                     "domains_per_group": 3, "n_features": 4})
        rows = _grouped_seed(config, 0)
        assert len(rows) == 1
        assert rows[0]["learned_group_mass"] == pytest.approx(1.0)
        for key in ("acc_learned", "acc_uniform", "acc_target_only"):
            assert 0.0 <= rows[0][key] <= 1.0

    def test_grouped_summary_structure(self, tmp_path):
        config = ExperimentConfig(
            kind="grouped", n_train=60, steps=200, refine_steps=100, seeds=(0,),
            out_dir=str(tmp_path / "run"),
            options={"instance_seed": 0, "mean_scale": 1.0, "n_groups": 2,
                     "domains_per_group": 2, "n_features": 4})
        assert run_experiment(config) == 0
        summary = json.loads((tmp_path / "run" / "summary.json").read_text())
        assert set(summary["per_group"]) == {"0", "1"}
        _, header, rows = read_table(tmp_path / "run" / "accuracy.csv")
        assert header == ["seed", "target_group", "acc_learned", "acc_uniform",
                          "acc_target_only", "learned_group_mass"]
        assert rows.shape == (2, 6)

    def test_grouped_rejects_unknown_target_mode(self, tmp_path):
        config = ExperimentConfig(
            kind="grouped", n_train=40, steps=10, refine_steps=10, seeds=(0,),
            out_dir=str(tmp_path / "run"), options={"target_mode": "nope"})
        with pytest.raises(ConfigError, match="target_mode"):
            run_experiment(config)


class TestCli:
    def test_help_exits_zero(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0
        assert "subcommand" in capsys.readouterr().out

    def test_no_subcommand_is_usage_error(self, capsys):
        assert main([]) == 2
        assert "subcommand is required" in capsys.readouterr().err

    def test_missing_config_and_preset(self, capsys):
        assert main(["coerm"]) == 2
        err = capsys.readouterr().err
        assert "one of --config or --preset is required" in err
        assert "usage" in err

    def test_unknown_preset(self, capsys):
        assert main(["coerm", "--preset", "nope"]) == 2
        assert "available" in capsys.readouterr().err

    def test_kind_mismatch(self, tmp_path, capsys):
        path = coerm_toml(tmp_path)
        assert main(["mixture", "--config", str(path)]) == 2
        assert "'kind'" in capsys.readouterr().err

    def test_unknown_field_named(self, tmp_path, capsys):
        path = tmp_path / "bad.toml"
        path.write_text('kind = "coerm"\nwhatever = 3\n')
        assert main(["coerm", "--config", str(path)]) == 2
        assert "whatever" in capsys.readouterr().err

    def test_negative_seed_rejected(self, tmp_path, capsys):
        path = coerm_toml(tmp_path)
        assert main(["coerm", "--config", str(path), "--seed", "-1"]) == 2
        assert "nonnegative" in capsys.readouterr().err

    def test_runs_are_byte_identical(self, tmp_path):
        path = coerm_toml(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["coerm", "--config", str(path), "--out", str(out1)]) == 0
        assert main(["coerm", "--config", str(path), "--out", str(out2)]) == 0
        for name in ("solutions.csv", "summary.json"):
            assert filecmp.cmp(out1 / name, out2 / name, shallow=False), name

    def test_seed_flag_changes_results(self, tmp_path):
        path = coerm_toml(tmp_path)
        out1, out2 = tmp_path / "a", tmp_path / "b"
        assert main(["coerm", "--config", str(path), "--out", str(out1)]) == 0
        assert main(["coerm", "--config", str(path), "--out", str(out2),
                     "--seed", "5"]) == 0
        assert not filecmp.cmp(out1 / "solutions.csv", out2 / "solutions.csv",
                               shallow=False)
