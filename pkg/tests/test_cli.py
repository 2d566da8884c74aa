import io
import json
import os

import pytest

from usflab import cli
from usflab.experiments import EXPERIMENTS


def run_cli(*argv, capsys=None):
    code = cli.main(list(argv))
    if capsys is None:
        return code, "", ""
    captured = capsys.readouterr()
    return code, captured.out, captured.err


# ---------------------------------------------------------------------------
# dispatch and exit codes


def test_no_arguments_prints_usage_and_fails(capsys):
    code, out, _ = run_cli(capsys=capsys)
    assert code == cli.EXIT_USAGE
    assert "usage" in out


def test_help_is_success(capsys):
    code, out, _ = run_cli("--help", capsys=capsys)
    assert code == cli.EXIT_OK
    assert "replay" in out and "USF_LAB_CACHE" in out


def test_unknown_command(capsys):
    code, _, err = run_cli("frobnicate", capsys=capsys)
    assert code == cli.EXIT_USAGE
    assert "unknown command" in err


def test_unknown_experiment(capsys):
    code, _, err = run_cli("run", "nonsense", capsys=capsys)
    assert code == cli.EXIT_UNKNOWN_EXPERIMENT
    assert "nonsense" in err


def test_run_without_experiment(capsys):
    code, _, err = run_cli("run", capsys=capsys)
    assert code == cli.EXIT_USAGE


def test_list_names_every_experiment(capsys):
    code, out, _ = run_cli("list", capsys=capsys)
    assert code == cli.EXIT_OK
    for name in EXPERIMENTS:
        assert name in out


def test_list_single_schema(capsys):
    code, out, _ = run_cli("list", "separation", capsys=capsys)
    assert code == cli.EXIT_OK
    assert "--swap-roles" in out and "default 20000" in out


def test_list_unknown_experiment(capsys):
    code, _, err = run_cli("list", "nope", capsys=capsys)
    assert code == cli.EXIT_UNKNOWN_EXPERIMENT


# ---------------------------------------------------------------------------
# run: outputs and determinism


def test_run_writes_csv_and_sidecar(tmp_path, capsys):
    code, out, _ = run_cli(
        "run", "separation", "--n", "4", "--samples", "200",
        "--seed", "9", "--replicas", "2", "--out", str(tmp_path),
        capsys=capsys)
    assert code == cli.EXIT_OK
    csv_path = tmp_path / "separation.csv"
    side_path = tmp_path / "separation.json"
    assert csv_path.exists() and side_path.exists()
    assert "disjoint_freq" in out
    payload = json.loads(side_path.read_text())
    assert payload["experiment"] == "separation"
    assert payload["config"]["samples"] == 200
    assert payload["config"]["master_seed"] == 9
    assert payload["config"]["replicas"] == 2


def test_rerun_is_byte_identical(tmp_path, capsys):
    args = ("run", "separation", "--n", "4", "--samples", "150",
            "--seed", "3", "--replicas", "2")
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli(*args, "--out", str(a), capsys=capsys)[0] == 0
    assert run_cli(*args, "--out", str(b), capsys=capsys)[0] == 0
    assert (a / "separation.csv").read_bytes() == (b / "separation.csv").read_bytes()


def test_worker_count_does_not_change_bytes(tmp_path, capsys):
    args = ("run", "separation", "--n", "4", "--samples", "120",
            "--seed", "3", "--replicas", "3")
    a, b = tmp_path / "a", tmp_path / "b"
    run_cli(*args, "--workers", "1", "--out", str(a), capsys=capsys)
    run_cli(*args, "--workers", "3", "--out", str(b), capsys=capsys)
    assert (a / "separation.csv").read_bytes() == (b / "separation.csv").read_bytes()


def test_run_rejects_unknown_flag(tmp_path, capsys):
    code, _, _ = run_cli("run", "separation", "--bogus", "1", capsys=capsys)
    assert code == cli.EXIT_USAGE


def test_run_rejects_bad_value(capsys):
    code, _, err = run_cli("run", "separation", "--n", "four", capsys=capsys)
    assert code == cli.EXIT_SCHEMA
    assert "bad value" in err


def test_run_rejects_estimator_refusal(tmp_path, capsys):
    # shell geometry outside its regime without the override
    code, _, err = run_cli("run", "shell", "--n", "8", "--samples", "5",
                           "--out", str(tmp_path), capsys=capsys)
    assert code == cli.EXIT_SCHEMA
    assert "override_regime" in err


def test_run_unwritable_output(tmp_path, capsys):
    block = tmp_path / "file"
    block.write_text("x")
    code, _, err = run_cli("run", "separation", "--samples", "5",
                           "--out", str(block / "sub"), capsys=capsys)
    assert code == cli.EXIT_UNWRITABLE


# ---------------------------------------------------------------------------
# config files


def test_config_file_merge_and_flag_priority(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("# comment\nn = 6\nsamples = 100\nexperiment = separation\n")
    code, _, _ = run_cli("run", "separation", "--config", str(cfg),
                         "--samples", "140", "--seed", "2",
                         "--replicas", "2", "--out", str(tmp_path),
                         capsys=capsys)
    assert code == cli.EXIT_OK
    payload = json.loads((tmp_path / "separation.json").read_text())
    assert payload["config"]["n"] == 6          # from the file
    assert payload["config"]["samples"] == 140  # flag wins


def test_boolean_flag(tmp_path, capsys):
    code, _, _ = run_cli("run", "separation", "--swap-roles",
                         "--samples", "30", "--replicas", "1",
                         "--out", str(tmp_path), capsys=capsys)
    assert code == cli.EXIT_OK
    payload = json.loads((tmp_path / "separation.json").read_text())
    assert payload["config"]["swap_roles"] is True


def test_config_file_hyphen_keys(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("swap-roles = true\n")
    code, _, _ = run_cli("run", "separation", "--samples", "30",
                         "--replicas", "1", "--config", str(cfg),
                         "--out", str(tmp_path), capsys=capsys)
    assert code == cli.EXIT_OK
    payload = json.loads((tmp_path / "separation.json").read_text())
    assert payload["config"]["swap_roles"] is True


def test_config_file_unknown_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("no_such = 1\n")
    code, _, err = run_cli("run", "separation", "--config", str(cfg),
                           capsys=capsys)
    assert code == cli.EXIT_SCHEMA
    assert "no_such" in err


def test_config_file_experiment_mismatch(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("experiment = ball\n")
    code, _, err = run_cli("run", "separation", "--config", str(cfg),
                           capsys=capsys)
    assert code == cli.EXIT_SCHEMA


def test_config_file_bad_line(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("just a dangling token\n")
    code, _, err = run_cli("run", "separation", "--config", str(cfg),
                           capsys=capsys)
    assert code == cli.EXIT_SCHEMA
    assert "key=value" in err


def test_config_file_missing(tmp_path, capsys):
    code, _, _ = run_cli("run", "separation", "--config",
                         str(tmp_path / "absent.txt"), capsys=capsys)
    assert code == cli.EXIT_SCHEMA


# ---------------------------------------------------------------------------
# parameter conversion


def test_grid_alias_and_csv_lists(tmp_path, capsys):
    code, _, _ = run_cli("run", "lerw-length", "--N", "3",
                         "--lambda", "0.5,1,2", "--samples", "40",
                         "--replicas", "1", "--out", str(tmp_path),
                         capsys=capsys)
    assert code == cli.EXIT_OK
    payload = json.loads((tmp_path / "lerw-length.json").read_text())
    assert payload["config"]["lambda_grid"] == [0.5, 1, 2]


def test_point_parameter_parses_to_tuple(tmp_path, capsys):
    code, _, _ = run_cli("run", "path-pair", "--x", "2,0,0,0,0",
                         "--n-grid", "2,4", "--escape-radius", "16",
                         "--samples", "50", "--replicas", "1",
                         "--out", str(tmp_path), capsys=capsys)
    assert code == cli.EXIT_OK
    payload = json.loads((tmp_path / "path-pair.json").read_text())
    assert payload["config"]["x"] == [2, 0, 0, 0, 0]


def test_convert_bool_tokens():
    assert cli._convert("swap_roles", False, "true") is True
    assert cli._convert("swap_roles", False, "0") is False
    with pytest.raises(ValueError):
        cli._convert("swap_roles", False, "maybe")


def test_convert_none_typed_parameter():
    assert cli._convert("good_hit_floor", None, "0.01") == 0.01
    assert cli._convert("escape_radius", None, "32") == 32


# ---------------------------------------------------------------------------
# replay


def _small_run(tmp_path, capsys):
    run_cli("run", "separation", "--n", "4", "--samples", "80",
            "--seed", "21", "--replicas", "2", "--out", str(tmp_path),
            capsys=capsys)
    return tmp_path / "separation.json"


def test_replay_roundtrip(tmp_path, capsys):
    sidecar = _small_run(tmp_path, capsys)
    code, out, _ = run_cli("replay", str(sidecar), capsys=capsys)
    assert code == cli.EXIT_OK
    assert "byte-identical" in out


def test_replay_detects_divergence(tmp_path, capsys):
    sidecar = _small_run(tmp_path, capsys)
    original = tmp_path / "separation.csv"
    original.write_bytes(original.read_bytes() + b"tampered\n")
    code, _, err = run_cli("replay", str(sidecar), capsys=capsys)
    assert code == cli.EXIT_REPLAY_MISMATCH
    assert "differs" in err


def test_replay_without_original_still_writes(tmp_path, capsys):
    sidecar = _small_run(tmp_path, capsys)
    (tmp_path / "separation.csv").unlink()
    code, out, _ = run_cli("replay", str(sidecar), capsys=capsys)
    assert code == cli.EXIT_OK
    assert (tmp_path / "separation.replay.csv").exists()


def test_replay_bad_sidecar(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    code, _, _ = run_cli("replay", str(bad), capsys=capsys)
    assert code == cli.EXIT_SCHEMA


def test_replay_sidecar_missing_fields(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"experiment": "separation", "config": {}}))
    code, _, err = run_cli("replay", str(bad), capsys=capsys)
    assert code == cli.EXIT_SCHEMA


def test_replay_restores_point_tuple(tmp_path, capsys):
    # sidecars store lattice points as JSON lists; replay must feed the
    # estimator the tuple form it validates against
    run_cli("run", "path-pair", "--x", "2,0,0,0,0", "--n-grid", "2,4",
            "--escape-radius", "16", "--samples", "60", "--replicas", "1",
            "--seed", "4", "--out", str(tmp_path), capsys=capsys)
    code, out, _ = run_cli("replay", str(tmp_path / "path-pair.json"),
                           capsys=capsys)
    assert code == cli.EXIT_OK
    assert "byte-identical" in out


# ---------------------------------------------------------------------------
# verify


def test_verify_quick_battery(capsys):
    code, out, _ = run_cli("verify", capsys=capsys)
    assert code == cli.EXIT_OK
    for item in ("Q1", "Q2", "Q3", "Q4", "Q5"):
        assert f"{item} " in out
    assert "all 5 checks passed" in out


def test_acceptance_table_layout(tmp_path, capsys):
    # the full battery is hours long; exercise the table writer on the
    # quick tier, which shares the result type
    from usflab import acceptance

    results = acceptance.run_quick(stream=io.StringIO())
    dest = tmp_path / "table.csv"
    acceptance.write_table(results, dest)
    lines = dest.read_text().splitlines()
    assert lines[0] == "item,name,passed,seconds,statistic"
    assert len(lines) == len(results) + 1
    assert all(",pass," in line or ",fail," in line for line in lines[1:])
