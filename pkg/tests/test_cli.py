"""End-to-end CLI behavior: subcommands, exit codes, file outputs."""

import json

import pytest

from fedbeam.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from fedbeam.report import (
    loss_reduction_percent,
    parse_comparison_csv,
    parse_experiment_csv,
)


def write_config(path, **overrides):
    config = {
        "model": {"kind": "fed_kan"},
        "federation": {"rounds": 2, "local_epochs": 2, "seed": 5},
        "data": {"synthetic": {"seed": 3, "hours": 90, "beams": 2}},
        "out_dir": str(path.parent / "out"),
    }
    for key, value in overrides.items():
        if value is None:
            config.pop(key, None)
        else:
            config[key] = value
    path.write_text(json.dumps(config), encoding="utf-8")
    return config


def test_generate_writes_deterministic_files(tmp_path, capsys):
    out_a = tmp_path / "a"
    out_b = tmp_path / "b"
    assert main(["generate", "--seed", "7", "--hours", "743", "--beams", "4", "--out", str(out_a)]) == EXIT_OK
    assert main(["generate", "--seed", "7", "--hours", "743", "--beams", "4", "--out", str(out_b)]) == EXIT_OK
    files_a = sorted(p.name for p in out_a.iterdir())
    assert files_a == ["beam-01.csv", "beam-02.csv", "beam-03.csv", "beam-04.csv"]
    for name in files_a:
        text = (out_a / name).read_text(encoding="utf-8")
        assert text == (out_b / name).read_text(encoding="utf-8")
        assert len(text.splitlines()) == 744


def test_generate_rejects_bad_counts(tmp_path, capsys):
    assert main(["generate", "--hours", "0", "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "hours" in capsys.readouterr().err


def test_train_writes_report(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    write_config(cfg_path)
    assert main(["train", "--config", str(cfg_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "final average test loss (fed_kan)" in out
    report_path = tmp_path / "out" / "report_fed_kan.csv"
    parsed = parse_experiment_csv(report_path.read_text(encoding="utf-8"))
    assert parsed["rows"].shape[0] == 2
    assert parsed["meta"]["model"]["kind"] == "fed_kan"
    assert parsed["meta"]["federation"]["rounds"] == 2


def test_train_single_round_has_one_row(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    write_config(cfg_path, federation={"rounds": 1, "local_epochs": 1, "seed": 5})
    assert main(["train", "--config", str(cfg_path)]) == EXIT_OK
    parsed = parse_experiment_csv(
        (tmp_path / "out" / "report_fed_kan.csv").read_text(encoding="utf-8")
    )
    assert parsed["rows"].shape[0] == 1


def test_train_rejects_zero_batch_size(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    write_config(cfg_path, federation={"rounds": 1, "batch_size": 0})
    assert main(["train", "--config", str(cfg_path)]) == EXIT_CONFIG
    assert "batch_size" in capsys.readouterr().err


def test_train_requires_model_kind(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    write_config(cfg_path, model={})
    assert main(["train", "--config", str(cfg_path)]) == EXIT_CONFIG
    assert "kind" in capsys.readouterr().err


def test_train_rejects_bad_json(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text("{not json", encoding="utf-8")
    assert main(["train", "--config", str(cfg_path)]) == EXIT_CONFIG
    assert "JSON" in capsys.readouterr().err


def test_train_missing_config_file_is_io_error(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "absent.json")]) == EXIT_IO


def test_train_missing_beam_file_is_io_error(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    write_config(cfg_path, data={"beam_files": [str(tmp_path / "nope.csv")]})
    assert main(["train", "--config", str(cfg_path)]) == EXIT_IO


def test_data_section_needs_exactly_one_source(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    write_config(
        cfg_path,
        data={
            "beam_files": ["x.csv"],
            "synthetic": {"seed": 1, "hours": 50, "beams": 1},
        },
    )
    assert main(["train", "--config", str(cfg_path)]) == EXIT_CONFIG
    err = capsys.readouterr().err
    assert "beam_files" in err and "synthetic" in err

    write_config(cfg_path, data={})
    assert main(["train", "--config", str(cfg_path)]) == EXIT_CONFIG


def test_short_series_fails_with_clear_windowing_error(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    write_config(cfg_path, data={"synthetic": {"seed": 1, "hours": 5, "beams": 1}})
    assert main(["train", "--config", str(cfg_path)]) == EXIT_CONFIG
    assert "windowing needs at least 6" in capsys.readouterr().err


def test_train_on_generated_csv_files(tmp_path):
    gen_dir = tmp_path / "beams"
    assert main(["generate", "--seed", "3", "--hours", "90", "--beams", "2", "--out", str(gen_dir)]) == EXIT_OK
    cfg_path = tmp_path / "cfg.json"
    write_config(
        cfg_path,
        data={"beam_files": [str(gen_dir / "beam-01.csv"), str(gen_dir / "beam-02.csv")]},
    )
    assert main(["train", "--config", str(cfg_path)]) == EXIT_OK
    report = parse_experiment_csv(
        (tmp_path / "out" / "report_fed_kan.csv").read_text(encoding="utf-8")
    )
    assert report["meta"]["data"]["beam_ids"] == ["beam-01", "beam-02"]


def test_compare_outputs_and_summary(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    write_config(cfg_path, model={})
    assert main(["compare", "--config", str(cfg_path)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "1244" in out
    assert "648" in out
    assert "test-loss reduction" in out

    out_dir = tmp_path / "out"
    kan = parse_experiment_csv((out_dir / "report_fed_kan.csv").read_text(encoding="utf-8"))
    mlp = parse_experiment_csv((out_dir / "report_fed_mlp.csv").read_text(encoding="utf-8"))
    comparison = parse_comparison_csv((out_dir / "comparison.csv").read_text(encoding="utf-8"))
    # Fairness: both models saw byte-identical data.
    assert kan["meta"]["dataset_digest"] == mlp["meta"]["dataset_digest"]
    assert comparison["meta"]["params_fed_mlp"] == 1244
    assert comparison["meta"]["params_fed_kan"] == 648
    assert comparison["rows"].shape[0] == 2


def test_compare_is_byte_deterministic(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    write_config(cfg_path, model={})
    for out_name, extra in (("r1", []), ("r2", []), ("r3", ["--parallel-clients"])):
        assert (
            main(["compare", "--config", str(cfg_path), "--out", str(tmp_path / out_name)] + extra)
            == EXIT_OK
        )
    for name in ("report_fed_kan.csv", "report_fed_mlp.csv", "comparison.csv"):
        first = (tmp_path / "r1" / name).read_bytes()
        assert first == (tmp_path / "r2" / name).read_bytes()
        assert first == (tmp_path / "r3" / name).read_bytes()


def test_seed_override_changes_results(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    write_config(cfg_path)
    assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "s5")]) == EXIT_OK
    assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "s6"), "--seed", "6"]) == EXIT_OK
    a = (tmp_path / "s5" / "report_fed_kan.csv").read_text(encoding="utf-8")
    b = (tmp_path / "s6" / "report_fed_kan.csv").read_text(encoding="utf-8")
    assert a != b
    assert parse_experiment_csv(b)["meta"]["federation"]["seed"] == 6


def test_reduction_formula_matches_published_rounding():
    value = loss_reduction_percent(0.2583, 1.1433)
    assert value == pytest.approx((1 - 0.2583 / 1.1433) * 100, abs=1e-12)
    assert f"{value:.2f}" == "77.41"


def test_unknown_config_section_rejected(tmp_path, capsys):
    cfg_path = tmp_path / "cfg.json"
    config = write_config(cfg_path)
    config["experiment"] = {}
    cfg_path.write_text(json.dumps(config), encoding="utf-8")
    assert main(["train", "--config", str(cfg_path)]) == EXIT_CONFIG
    assert "experiment" in capsys.readouterr().err
