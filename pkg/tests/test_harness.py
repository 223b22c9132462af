import json
import os

import pytest

from kinetic1d import harness
from kinetic1d.cli import main
from kinetic1d.errors import ConfigError
from kinetic1d.harness import parse_config, resolve_workers, run_experiment


def quiet(_):
    pass


def test_minimal_config_defaults():
    c = parse_config('{"experiment": "constants", "params": {"force": 2.0}}')
    assert c.params.force == 2.0 and c.params.stick_prob == 0.5
    assert c.params.gap_dist.kind == "exponential" and c.params.gap_dist.mean == 1.0
    assert c.ks_alpha == 0.005 and c.workers == 1 and c.num_trajectories == 1


def test_config_errors_name_the_key():
    with pytest.raises(ConfigError, match=r"params\.force"):
        parse_config('{"params": {"force": -1}}')
    with pytest.raises(ConfigError, match=r"stick_prob must be in \(0,1\]"):
        parse_config('{"params": {"stick_prob": 0}}')
    with pytest.raises(ConfigError, match=r"params\.gap_dist\.bogus"):
        parse_config('{"params": {"gap_dist": {"kind": "uniform", "lo": 0, "hi": 1, "bogus": 1}}}')
    with pytest.raises(ConfigError, match="line 2"):
        parse_config('{\n "n": }')
    with pytest.raises(ConfigError, match="num_trajectories"):
        parse_config('{"num_trajectories": 0}')
    with pytest.raises(ConfigError, match="gap_dist"):
        parse_config('{"params": {"gap_dist": {"kind": "gamma", "shape": 2}}}')


def test_worker_resolution(monkeypatch):
    monkeypatch.setenv("KINETIC1D_WORKERS", "3")
    assert resolve_workers(parse_config("{}")) == 3
    assert resolve_workers(parse_config('{"workers": 2}')) == 2
    assert resolve_workers(parse_config('{"workers": 2}'), 5) == 5
    monkeypatch.delenv("KINETIC1D_WORKERS")
    assert resolve_workers(parse_config("{}")) == 1


def test_constants_experiment(tmp_path, capsys):
    code = main(["constants", "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "sigma_q_hat" in out and "1.241639" in out
    summary = json.loads((tmp_path / "constants" / "summary.json").read_text())
    assert summary["schema"] == 1 and summary["passed"]
    assert (tmp_path / "constants" / "samples.csv").read_text().startswith("name,value")
    assert json.loads((tmp_path / "constants" / "config.echo.json").read_text())["experiment"] == "constants"


def test_cli_config_error(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"params": {"force": -1}}')
    assert main(["lln", "--config", str(cfg)]) == 2
    assert "params.force" in capsys.readouterr().err


@pytest.mark.parametrize(
    "experiment,extra",
    [
        ("decompose", {"n": 400, "n_compare": 50, "num_trajectories": 8}),
        ("couple", {"n": 300, "n_compare": 30, "num_trajectories": 8, "tail_from": 100}),
        ("clt_position", {"n": 300, "num_trajectories": 60}),
    ],
)
def test_worker_count_invariance(tmp_path, experiment, extra):
    cfg = parse_config(json.dumps({"experiment": experiment, "master_seed": 99, **extra}))
    run_experiment(cfg, workers=1, out_dir=str(tmp_path / "w1"), echo=quiet)
    run_experiment(cfg, workers=4, out_dir=str(tmp_path / "w4"), echo=quiet)
    for name in ("summary.json", "samples.csv", "config.echo.json"):
        a = (tmp_path / "w1" / experiment / name).read_bytes()
        b = (tmp_path / "w4" / experiment / name).read_bytes()
        assert a == b, name


def test_samples_csv_format(tmp_path):
    cfg = parse_config('{"experiment": "lln", "n": 200, "num_trajectories": 3}')
    run_experiment(cfg, out_dir=str(tmp_path), echo=quiet)
    raw = (tmp_path / "lln" / "samples.csv").read_bytes()
    lines = raw.decode().split("\r\n")
    assert lines[0] == "trajectory_index,v_bar_n,v_exact_n"
    assert [l.split(",")[0] for l in lines[1:4]] == ["0", "1", "2"]
    assert len(lines[1].split(",")[1].replace("0.", "")) >= 15


def test_couple_all_sticky_is_exactly_zero(tmp_path):
    cfg = parse_config('{"experiment": "couple", "n": 500, "n_compare": 50, "num_trajectories": 5, '
                       '"params": {"stick_prob": 1.0}}')
    assert run_experiment(cfg, out_dir=str(tmp_path), echo=quiet) == 0
    summary = json.loads((tmp_path / "couple" / "summary.json").read_text())
    assert summary["results"]["medians_abs"] == {"dt_scaled": 0.0, "dv2_scaled": 0.0, "delta_sum": 0.0}
    assert summary["results"]["recollisions_total"] == 0


def test_oracle_check_and_velocity(tmp_path):
    cfg = parse_config('{"experiment": "oracle_check", "n": 6, "num_trajectories": 3}')
    assert run_experiment(cfg, out_dir=str(tmp_path), echo=quiet) == 0
    cfg = parse_config('{"experiment": "clt_velocity", "n": 2000, "num_trajectories": 200}')
    assert run_experiment(cfg, out_dir=str(tmp_path), echo=quiet) == 0
    s = json.loads((tmp_path / "clt_velocity" / "summary.json").read_text())
    assert s["results"]["constants"]["sigma_v"] > 0
    assert s["results"]["v_fluct_ks"]["standardized"] is True


def test_exact_clt_mode(tmp_path):
    cfg = parse_config('{"experiment": "clt_position", "process": "exact", "n": 200, "num_trajectories": 60}')
    run_experiment(cfg, out_dir=str(tmp_path), echo=quiet)
    s = json.loads((tmp_path / "clt_position" / "summary.json").read_text())
    assert "exact_position_ks" in s["assertions"]
    assert s["results"]["exact_position_ks"]["target_sigma"] == pytest.approx(1.121947, abs=1e-6)


def test_worker_failure_writes_manifest(tmp_path, monkeypatch):
    def boom(job, consts):
        raise RuntimeError("trajectory exploded")

    monkeypatch.setitem(harness._ROW_FUNCS, "lln", boom)
    cfg = parse_config('{"experiment": "lln", "n": 10, "num_trajectories": 2}')
    assert run_experiment(cfg, workers=1, out_dir=str(tmp_path), echo=quiet) == 2
    manifest = json.loads((tmp_path / "lln" / "partial.json").read_text())
    assert "trajectory exploded" in manifest["error"] and manifest["completed"] is False


def test_reruns_are_bit_identical(tmp_path):
    cfg = parse_config('{"experiment": "decompose", "n": 300, "num_trajectories": 4, "master_seed": 5}')
    run_experiment(cfg, out_dir=str(tmp_path / "a"), echo=quiet)
    run_experiment(cfg, out_dir=str(tmp_path / "b"), echo=quiet)
    assert (tmp_path / "a/decompose/samples.csv").read_bytes() == (tmp_path / "b/decompose/samples.csv").read_bytes()
