import json

import numpy as np
import pytest

from circsine import cli, experiments, io
from circsine.config import ExperimentConfig, apply_override


def test_csv_schema_header_and_roundtrip(tmp_path):
    path = io.write_csv(tmp_path / "a" / "t.csv", ["k", "lam", "note"],
                        [{"k": 1, "lam": 0.1, "note": None}, (np.int64(2), np.float64(float("inf")), "x"),
                         (3, np.float64(0.25), np.bool_(True))])
    assert path.read_text().splitlines()[0] == "# schema=1"
    cols, rows = io.read_csv(path)
    assert cols == ["k", "lam", "note"]
    assert rows == [["1", "0.1", ""], ["2", "inf", "x"], ["3", "0.25", "True"]]
    assert float(rows[0][1]) == 0.1


def test_read_csv_rejects_missing_schema(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("k,lam\n1,2\n")
    with pytest.raises(ValueError):
        io.read_csv(p)


def test_manifest_records_outputs_and_hashes(tmp_path):
    cfg = ExperimentConfig()
    m = io.RunManifest("figure", cfg.to_dict(), cfg.digest())
    out = io.write_csv(tmp_path / "x.csv", ["a"], [[1]])
    m.add_output(out)
    m.finish(0)
    d = json.loads(m.save(tmp_path / "manifest.json").read_text())
    assert d["status"] == "pass" and d["exit_code"] == 0
    assert len(d["output_sha256"][str(out)]) == 64
    assert d["config_hash"] == cfg.digest()
    assert set(d["versions"]) == {"circsine", "python", "numpy", "scipy"}


def test_outdir_env_wins(monkeypatch, tmp_path):
    monkeypatch.setenv(io.OUTDIR_ENV, str(tmp_path))
    assert io.resolve_outdir("elsewhere") == tmp_path
    monkeypatch.delenv(io.OUTDIR_ENV)
    assert str(io.resolve_outdir("elsewhere")) == "elsewhere"


def test_apply_override_parses_json():
    data = {}
    apply_override(data, "beta=4")
    apply_override(data, "n_list=[8,16]")
    apply_override(data, "outdir=somewhere")
    apply_override(data, "a.b.c=true")
    assert data == {"beta": 4, "n_list": [8, 16], "outdir": "somewhere", "a": {"b": {"c": True}}}
    with pytest.raises(ValueError):
        apply_override(data, "no-equals-sign")


def test_config_validation_and_unknown_keys():
    with pytest.raises(ValueError, match="unknown"):
        ExperimentConfig.from_dict({"bogus": 1})
    for bad in ({"replicas": 0}, {"n_list": [32, 16]}, {"t_grid": [0.1, -1.0]}, {"u_num": 2.0}):
        cfg = ExperimentConfig(**bad)
        with pytest.raises(ValueError):
            cfg.validate()
    ExperimentConfig().validate()


def test_config_digest_stable():
    assert ExperimentConfig().digest() == ExperimentConfig().digest()
    assert ExperimentConfig(beta=1.0).digest() != ExperimentConfig().digest()


def test_report_exit_codes():
    rep = experiments.Report("x")
    assert rep.exit_code() == 0
    rep.check("soft", False, hard=False)
    assert rep.exit_code() == 0
    rep.check("hard", False, criterion=1)
    assert rep.exit_code() == 3
    assert rep.checks[-1].line().startswith("FAIL [1] hard")
    rep.numerical_failure = True
    assert rep.exit_code() == 2


def test_replica_seed_and_run_replicas():
    assert experiments.replica_seed(1, 2) == experiments.replica_seed(1, 2)
    assert experiments.replica_seed(1, 2) != experiments.replica_seed(1, 3)
    res = experiments.run_replicas(lambda x: 1 / x, [1, 0, 2])
    assert [r["status"] for r in res] == ["ok", "failed", "ok"]


def test_collect_flags_too_many_failures():
    rep = experiments.Report("x")
    ok = experiments._collect(rep, "g", [0, 1], [{"status": "ok", "value": 1},
                                                 {"status": "failed", "error": "boom"}])
    assert ok == [1] and rep.numerical_failure and rep.exit_code() == 2


def run_cli(args, tmp_path, capsys):
    code = cli.main([*args, "--outdir", str(tmp_path)])
    return code, capsys.readouterr()


def test_cli_figure_runs_and_replays(tmp_path, capsys, monkeypatch):
    monkeypatch.delenv(io.OUTDIR_ENV, raising=False)
    code, _ = run_cli(["figure"], tmp_path / "a", capsys)
    assert code == 0
    out = tmp_path / "a" / "figure"
    svg = (out / "figure.svg").read_text()
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["exit_code"] == 0 and manifest["outputs"]
    # replaying the manifest reproduces every output byte for byte
    code, _ = run_cli(["figure", "--config", str(out / "manifest.json")], tmp_path / "b", capsys)
    assert code == 0
    for name in ("figure.svg", "walk.csv", "checks.csv"):
        assert (out / name).read_bytes() == (tmp_path / "b" / "figure" / name).read_bytes()


def test_cli_env_outdir(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(io.OUTDIR_ENV, str(tmp_path / "env"))
    assert cli.main(["figure", "--set", "figure_n=4"]) == 0
    assert (tmp_path / "env" / "figure" / "figure.svg").exists()


def test_cli_config_file_and_overrides(tmp_path, capsys):
    cfgfile = tmp_path / "c.json"
    cfgfile.write_text(json.dumps({"figure_n": 4, "seed": 3}))
    code, _ = run_cli(["figure", "--config", str(cfgfile), "--set", "seed=5"], tmp_path, capsys)
    assert code == 0
    m = json.loads((tmp_path / "figure" / "manifest.json").read_text())
    assert m["config"]["figure_n"] == 4 and m["config"]["seed"] == 5


@pytest.mark.parametrize("args", [
    ["figure", "--set", "replicas=0"],
    ["figure", "--set", "bogus=1"],
    ["figure", "--set", "nonsense"],
    ["heatkernel", "--set", "t_grid=[]"],
    ["figure", "--config", "/nonexistent/c.json"],
])
def test_cli_usage_errors(args, tmp_path, capsys):
    code, captured = run_cli(args, tmp_path, capsys)
    assert code == 1
    assert "usage error" in captured.err


def test_cli_unknown_command_exits_one(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["no-such-command"])
    assert info.value.code == 1


def test_cli_numerical_failure_exit_two(tmp_path, capsys, monkeypatch):
    def boom(cfg):
        raise ArithmeticError("diverged")
    monkeypatch.setitem(cli.COMMANDS, "figure", boom)
    code, captured = run_cli(["figure"], tmp_path, capsys)
    assert code == 2 and "numerical failure" in captured.err
    assert json.loads((tmp_path / "figure" / "manifest.json").read_text())["status"] == "numerical-failure"


def test_cli_acceptance_failure_exit_three(tmp_path, capsys, monkeypatch):
    def failing(cfg):
        rep = experiments.Report("figure")
        rep.check("always fails", False, "", criterion=99)
        return rep
    monkeypatch.setitem(cli.COMMANDS, "figure", failing)
    code, captured = run_cli(["figure"], tmp_path, capsys)
    assert code == 3 and "FAIL [99]" in captured.out


def test_cli_heatkernel_outputs(tmp_path, capsys):
    code, captured = run_cli(["heatkernel", "--set", "t_grid=[0.1,0.5]", "--set", "r_points=50"], tmp_path, capsys)
    assert code == 0
    cols, rows = io.read_csv(tmp_path / "heatkernel" / "heatkernel.csv")
    assert len(rows) == 2 and "t" in cols
    assert "PASS [1]" in captured.out
