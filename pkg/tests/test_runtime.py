import json

import pytest

from rdsync.cli import build_parser, main
from rdsync.config.loader import build_config, config_hash
from rdsync.core.enums import ExitCode
from rdsync.runtime.run_experiment import MANIFEST_NAME, resolve_seeds, run

SYNC_DOC = {
    "command": "sync",
    "field": {"kind": "double_well", "dim": 1},
    "noise": {"seed": 5, "delta": 0.01, "n_seeds": 6},
    "sync": {"x": [1.0], "y": [-1.0], "T": 2.0, "checkpoints": [1.0, 2.0]},
}


def test_resolve_seeds_prefers_explicit_list():
    assert resolve_seeds(build_config(dict(SYNC_DOC, noise={"seeds": [3, 1, 2]}))) == [3, 1, 2]
    assert len(resolve_seeds(build_config(SYNC_DOC))) == 6


def test_sync_run_writes_outputs_and_manifest(tmp_path):
    cfg = build_config(SYNC_DOC)
    m = run(cfg, out_dir=tmp_path)
    assert m.exit_code == 0
    assert set(m.outputs) == {"sync.json", "sync.csv"}
    assert m.config_hash == config_hash(cfg)
    lines = (tmp_path / "sync.csv").read_text().splitlines()
    assert lines[0] == "t,q05,q25,q50,q75,q95,exceed_prob"
    assert len(lines) == 3
    on_disk = json.loads((tmp_path / MANIFEST_NAME).read_text())
    assert on_disk["seeds"] == m.seeds and on_disk["exit_code"] == 0


def test_empty_seed_list_writes_no_sync_output(tmp_path):
    m = run(build_config(dict(SYNC_DOC, noise={"n_seeds": 0})), out_dir=tmp_path)
    assert m.seeds == [] and m.outputs == {} and m.exit_code == 0
    assert (tmp_path / MANIFEST_NAME).is_file()


def test_outputs_do_not_depend_on_worker_count(tmp_path):
    cfg = build_config(SYNC_DOC)
    one = run(cfg, out_dir=tmp_path / "w1", n_workers=1)
    four = run(cfg, out_dir=tmp_path / "w4", n_workers=4)
    assert one.outputs == four.outputs


def test_simulate_and_gibbs_outputs(tmp_path):
    sim = run(build_config({
        "command": "simulate", "field": {"kind": "ou", "dim": 2},
        "noise": {"delta": 0.01, "n_seeds": 2}, "run": {"t1": 0.1, "x0": [[1.0, 0.0], [0.0, 1.0]]},
    }), out_dir=tmp_path / "sim")
    assert "trajectories/seed0001_x01.csv" in sim.outputs
    assert "simulate.json" in sim.outputs
    gibbs = run(build_config({"command": "gibbs", "field": {"kind": "ou", "dim": 1}, "run": {"sigma": 1.4142135623730951}}),
                out_dir=tmp_path / "gibbs")
    assert gibbs.seeds == []
    payload = json.loads((tmp_path / "gibbs" / "gibbs.json").read_text())
    assert payload["Z"] == pytest.approx(2.5066282746, abs=1e-6)


def test_cli_rerun_reproduces_digests(tmp_path):
    cfg_path = tmp_path / "sync.json"
    cfg_path.write_text(json.dumps(SYNC_DOC), encoding="utf-8")
    assert main(["sync", "--config", str(cfg_path), "--out", str(tmp_path / "a")]) == 0
    assert main(["rerun", str(tmp_path / "a" / MANIFEST_NAME), "--out", str(tmp_path / "b"), "--workers", "3"]) == 0
    a = json.loads((tmp_path / "a" / MANIFEST_NAME).read_text())
    b = json.loads((tmp_path / "b" / MANIFEST_NAME).read_text())
    assert a["outputs"] == b["outputs"]
    assert a["config_hash"] == b["config_hash"]


def test_cli_seed_and_set_overrides(tmp_path):
    out = tmp_path / "o"
    code = main(["lyapunov", "--config", "ou_lyapunov", "--seed", "9", "--set", "lyapunov.T=2.0",
                 "--set", "noise.n_seeds=2", "--out", str(out)])
    assert code == 0
    manifest = json.loads((out / MANIFEST_NAME).read_text())
    assert manifest["config"]["noise"]["seed"] == 9
    assert manifest["config"]["lyapunov"]["T"] == 2.0
    assert "lyapunov.json" in manifest["outputs"]
    # one convergence trace per seed
    running = sorted(k for k in manifest["outputs"] if k.startswith("lyapunov_running/"))
    assert running == ["lyapunov_running/seed0000.csv", "lyapunov_running/seed0001.csv"]
    payload = json.loads((out / "lyapunov.json").read_text())
    assert [r["seed"] for r in payload["per_seed"]] == manifest["seeds"]


def test_cli_config_errors_exit_two(tmp_path):
    assert main(["sync", "--config", str(tmp_path / "missing.yaml")]) == int(ExitCode.CONFIG_ERROR)
    assert main(["sync", "--config", "double_well_sync", "--set", "sync.bogus=1"]) == int(ExitCode.CONFIG_ERROR)
    # no field block
    assert main(["sync", "--out", str(tmp_path / "x")]) == int(ExitCode.CONFIG_ERROR)


def test_cli_numerical_failure_exits_three(tmp_path):
    code = main(["simulate", "--set", "field.kind=double_well", "--set", "field.dim=1",
                 "--set", "noise.delta=0.01", "--set", "noise.n_seeds=2",
                 "--set", "run.t1=0.1", "--set", "run.x0=[[.nan]]", "--out", str(tmp_path)])
    assert code == int(ExitCode.NUMERICAL_FAILURE)
    manifest = json.loads((tmp_path / MANIFEST_NAME).read_text())
    assert len(manifest["seed_failures"]) == 2
    assert all(v.startswith("NumericRangeError") for v in manifest["seed_failures"].values())


def test_parser_has_every_subcommand():
    parser = build_parser()
    args = parser.parse_args(["paper-suite", "--scale", "quick", "--only", "A7", "--only", "A8"])
    assert args.scale == "quick" and args.only == ["A7", "A8"]
    with pytest.raises(SystemExit):
        parser.parse_args(["nope"])


def test_sync_seed_failure_lands_in_manifest(tmp_path, monkeypatch):
    from rdsync.core.errors import NewtonDivergenceError
    from rdsync.diagnostics import sync as sync_mod

    cfg = build_config(SYNC_DOC)
    bad = resolve_seeds(cfg)[2]
    real = sync_mod.sample_path

    def sample(seed, *args, **kwargs):
        if seed == bad:
            raise NewtonDivergenceError("implicit step did not converge")
        return real(seed, *args, **kwargs)

    monkeypatch.setattr(sync_mod, "sample_path", sample)
    m = run(cfg, out_dir=tmp_path)
    assert m.exit_code == int(ExitCode.NUMERICAL_FAILURE)
    assert list(m.seed_failures) == [str(bad)]
    assert "sync.json" in m.outputs
    assert json.loads((tmp_path / "sync.json").read_text())["ensemble_size"] == 5


def test_check_command_reports_hessian_at_minima(tmp_path):
    m = run(build_config({
        "command": "check", "field": {"kind": "double_well", "dim": 1},
        "check": {"n_pairs": 200, "minima": [[1.0], [-1.0]]},
    }), out_dir=tmp_path)
    assert m.exit_code == 0
    reports = json.loads((tmp_path / "check.json").read_text())["reports"]
    kinds = [r["report"]["kind"] for r in reports]
    assert kinds == ["one_sided_lipschitz", "hessian_at_minima"]
    assert reports[1]["replayed"] is True
    assert reports[1]["report"]["verdict"] == "satisfied_empirically"
