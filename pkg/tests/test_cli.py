import json

import pytest
import yaml

from dibom import cli
from dibom.config import ExperimentConfig, load_config, preset_names
from dibom.datagen import loads_dataset
from dibom.experiments import run


def _write(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data))
    return str(path)


def _small_train(tmp_path, **extra):
    data = {
        "schema_version": 1,
        "experiment": "train",
        "seeds": [0, 1],
        "model": {"kind": "dibom", "n": 2, "L": 3},
        "dataset": {"intrinsic": "single_qubit_times_gcz", "N": 6},
        "training": {"max_iters": 4},
    }
    data.update(extra)
    return _write(tmp_path, data)


@pytest.mark.parametrize("name", preset_names())
def test_presets_validate(name):
    cfg = load_config(name)
    assert cfg.schema_version == 1 and cfg.seeds


def test_every_subcommand_has_a_preset():
    names = set(preset_names())
    assert set(cli.SUBCOMMANDS.values()) <= names


def test_config_rejects_unknown_keys(tmp_path):
    with pytest.raises(Exception):
        load_config(_small_train(tmp_path, mystery=1))


def test_config_requires_seeds():
    with pytest.raises(Exception):
        ExperimentConfig.model_validate({"schema_version": 1, "experiment": "train"})


def test_config_checks_dataset_layers():
    with pytest.raises(Exception):
        ExperimentConfig.model_validate({"schema_version": 1, "experiment": "train", "seeds": [0], "dataset": {"intrinsic": "dibom_shape"}})


def test_train_writes_traces_and_meta(tmp_path, capsys):
    out = tmp_path / "out"
    assert cli.main(["train", "--config", _small_train(tmp_path), "--out-dir", str(out)]) == 0
    assert {p.name for p in out.iterdir()} == {"trace_seed0.csv", "trace_seed1.csv", "meta.json"}
    meta = json.loads((out / "meta.json").read_text())
    assert meta["seeds"] == [0, 1] and meta["experiment"] == "train"
    lines = (out / "trace_seed0.csv").read_text().splitlines()
    assert lines[0] == "iter,train_loss,test_loss,wall_ms" and len(lines) == 6


def test_reruns_are_byte_identical(tmp_path):
    cfg = _small_train(tmp_path)
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    assert cli.main(["train", "--config", cfg, "--out-dir", str(a)]) == 0
    assert cli.main(["train", "--config", cfg, "--out-dir", str(b)]) == 0
    assert cli.main(["train", "--config", cfg, "--out-dir", str(c), "--threads", "2"]) == 0
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes()
        if f.suffix == ".csv":
            assert f.read_bytes() == (c / f.name).read_bytes()


def test_seed_and_iteration_overrides(tmp_path):
    out = tmp_path / "out"
    assert cli.main(["train", "--config", _small_train(tmp_path), "--seed", "7", "--max-iters", "2", "--out-dir", str(out)]) == 0
    assert (out / "trace_seed7.csv").read_text().count("\n") == 4


def test_timing_fills_wall_column(tmp_path):
    out = tmp_path / "out"
    cli.main(["train", "--config", _small_train(tmp_path), "--seed", "0", "--timing", "--out-dir", str(out)])
    assert not (out / "trace_seed0.csv").read_text().splitlines()[1].endswith(",")


def test_config_error_exit_code(tmp_path, capsys):
    assert cli.main(["train", "--config", _small_train(tmp_path, mystery=1), "--out-dir", str(tmp_path)]) == cli.EXIT_CONFIG
    assert cli.main(["train", "--config", "no_such_preset"]) == cli.EXIT_CONFIG
    assert cli.main(["compare", "--config", _small_train(tmp_path)]) == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_numerical_abort_exit_code(tmp_path, monkeypatch):
    from dibom.training import NumericalAbort

    def boom(*a, **k):
        raise NumericalAbort("nan")

    monkeypatch.setattr(cli, "run", boom)
    assert cli.main(["train", "--config", _small_train(tmp_path), "--out-dir", str(tmp_path / "o")]) == cli.EXIT_NUMERICAL


def test_params_command(tmp_path):
    out = tmp_path / "p"
    assert cli.main(["params", "--out-dir", str(out)]) == 0
    text = (out / "params.csv").read_text()
    assert "dibom,3,2241,13449" in text
    rows = [line.split(",") for line in (out / "ratio.csv").read_text().splitlines()[1:]]
    ratios = [float(r[-1]) for r in rows if r[1] == "5"]
    assert len(ratios) == 5
    assert all(b < a for a, b in zip(ratios, ratios[1:]))


def test_dataset_gen_round_trip(tmp_path):
    path = tmp_path / "ds.json"
    args = ["dataset", "gen", "--intrinsic", "dibom_shape", "--L", "3", "--n", "2", "--N", "5", "--seed", "4", "--out", str(path)]
    assert cli.main(args) == 0
    ds = loads_dataset(path.read_text())
    assert len(ds) == 5 and ds.provenance["seed"] == 4
    first = path.read_bytes()
    cli.main(args)
    assert path.read_bytes() == first
    assert cli.main(["dataset", "gen", "--intrinsic", "dibom_shape", "--out", str(path)]) == cli.EXIT_CONFIG


def test_presets_listing(capsys):
    assert cli.main(["presets"]) == 0
    assert "fbe" in capsys.readouterr().out.split()


def test_fbe_fast_records_profile(tmp_path):
    data = {
        "schema_version": 1,
        "experiment": "fbe",
        "seeds": [0],
        "fbe": {"n": 2, "architectures": ["dibom"], "L_grid": [1, 2], "k": 100, "m": 10, "restarts": 1, "inner_iters": 2},
    }
    out = tmp_path / "f"
    assert cli.main(["fbe", "--config", _write(tmp_path, data), "--fast", "--out-dir", str(out)]) == 0
    meta = json.loads((out / "meta.json").read_text())
    assert meta["flags"]["fast"] and "fbe_profile_note" in meta
    rows = (out / "fbe_dibom_seed0.csv").read_text().splitlines()
    assert rows[0] == "L,params,fbe,seconds" and rows[1].endswith(",")


@pytest.mark.parametrize(
    "experiment, extra",
    [
        ("compare", {"compare": {"kinds": ["dibom", "ising_born"], "param_table_L": [5]}}),
        ("landscape", {"landscape": {"points": 3, "pretrain_iters": 2}}),
        ("teleport", {"dataset": {"intrinsic": "teleportation", "N": 4}, "teleport": {"L": 2}}),
        ("corruption", {"corruption": {"ratios": [0.0, 0.5], "layer_sweep_L": [3]}}),
        ("barren", {"barren": {"n_values": [2]}, "dataset": {"intrinsic": "haar_random", "N": 4, "product_inputs": True}}),
    ],
)
def test_other_experiments_run(experiment, extra):
    data = {
        "schema_version": 1,
        "experiment": experiment,
        "seeds": [0],
        "model": {"kind": "dibom", "n": 2, "L": 3},
        "dataset": {"intrinsic": "single_qubit_times_gcz", "N": 6},
        "training": {"max_iters": 2},
    }
    data.update(extra)
    result = run(ExperimentConfig.model_validate(data))
    assert result.files
    for name, text in result.files.items():
        assert name.endswith(".csv") and text.endswith("\n")
