import csv
import io
import json
import math

import pytest

from compound_laplace import cli
from compound_laplace.distributions import DistributionSpec
from compound_laplace.verify import MetricCheck


def write_spec(path, family, params, coef=1.0):
    path.write_text(json.dumps({"terms": [{"coef": coef, "family": {family: params}}]}), encoding="utf-8")
    return str(path)


@pytest.fixture
def files(tmp_path):
    data = tmp_path / "d.csv"
    data.write_text("id,v\n" + "".join(f"{i},{i % 9}\n" for i in range(100)), encoding="utf-8")
    return {
        "dir": tmp_path,
        "data": str(data),
        "deg": write_spec(tmp_path / "deg.json", "degenerate", {"k0": 1.0}),
        "gamma": write_spec(tmp_path / "gamma.json", "gamma", {"k": 2.0, "theta": 0.5}),
    }


def run(argv, capsys):
    code = cli.main(argv)
    out, err = capsys.readouterr()
    return code, out, err


def test_analyze(files, capsys):
    code, out, _ = run(["analyze", files["deg"]], capsys)
    rep = json.loads(out)
    assert code == 0
    assert rep["privacy"]["eps_general"] == pytest.approx(1.0, rel=1e-14)
    assert rep["utility"]["usefulness"] == pytest.approx(0.632121, abs=5e-7)
    code, out, _ = run(["analyze", files["gamma"], "--sensitivity", "1", "--gamma", "1"], capsys)
    rep = json.loads(out)
    assert rep["privacy"]["eps_general"] == pytest.approx(1.216395, abs=5e-7)
    assert rep["privacy"]["necessary_condition_holds"] is True
    assert rep["utility"]["l2"] == "inf"


def test_analyze_schema_errors(files, capsys):
    bad = write_spec(files["dir"] / "bad.json", "gamma", {"k": -1.0, "theta": 0.5})
    code, _, err = run(["analyze", bad], capsys)
    assert code == 2 and "terms[0].family.gamma.k" in err
    broken = files["dir"] / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    code, _, err = run(["analyze", str(broken)], capsys)
    assert code == 2 and "invalid JSON" in err


def test_optimize_to_file(files, capsys):
    out = files["dir"] / "opt.json"
    code, _, _ = run(
        ["optimize", "--epsilon", "1", "--families", "degenerate", "--restarts", "2", "--out", str(out)], capsys
    )
    assert code == 0
    res = json.loads(out.read_text(encoding="utf-8"))
    assert res["objective"] == pytest.approx(0.632121, abs=5e-7)
    assert res["improved"] is False
    assert DistributionSpec.from_dict(res["best_spec"]).describe() == "1*degenerate(k0=1)"


def test_optimize_infeasible_and_bad_family(capsys):
    code, _, err = run(["optimize", "--epsilon", "1e-9", "--families", "gamma", "--restarts", "2"], capsys)
    assert code == 3 and "infeasible" in err
    code, _, _ = run(["optimize", "--epsilon", "1", "--families", "cauchy"], capsys)
    assert code == 2
    code, _, _ = run(["optimize"], capsys)
    assert code == 2


def test_run_release(files, capsys):
    argv = ["run", "--data", files["data"], "--column", "id", "--spec", files["deg"], "--seed", "3"]
    code, out, _ = run(argv, capsys)
    assert code == 0
    rec = json.loads(out)
    assert set(rec) == {"noisy_value", "eps_certified", "spec_used", "seed"}
    assert rec["eps_certified"] == 1.0 and rec["seed"] == 3
    assert run(argv, capsys)[1] == out
    code, out, _ = run(argv[:-1] + ["4"], capsys)
    assert json.loads(out)["noisy_value"] != rec["noisy_value"]


def test_run_sum_with_clip(files, capsys):
    code, out, _ = run(
        ["run", "--data", files["data"], "--column", "v", "--query", "sum", "--clip", "0,5", "--spec", files["deg"]],
        capsys,
    )
    assert code == 0
    assert json.loads(out)["eps_certified"] == pytest.approx(5.0)


def test_run_input_errors(files, capsys):
    bad = files["dir"] / "bad.csv"
    bad.write_text("v\n1\nx\n", encoding="utf-8")
    code, _, err = run(["run", "--data", str(bad), "--column", "v", "--spec", files["deg"]], capsys)
    assert code == 2 and "non-numeric" in err
    code, _, err = run(["run", "--data", files["data"], "--column", "nope", "--spec", files["deg"]], capsys)
    assert code == 2
    code, _, err = run(["run", "--data", files["data"], "--column", "v", "--query", "sum", "--spec", files["deg"]], capsys)
    assert code == 2 and "clip" in err
    code, _, err = run(["run", "--data", files["data"], "--column", "v"], capsys)
    assert code == 2 and "epsilon" in err


def test_run_with_optimizer(files, capsys):
    code, out, _ = run(
        ["run", "--data", files["data"], "--column", "id", "--epsilon", "2", "--families", "degenerate,gamma",
         "--restarts", "2"],
        capsys,
    )
    assert code == 0
    assert json.loads(out)["eps_certified"] == pytest.approx(2.0, abs=1e-4)


def test_verify_spec_ok_and_low_confidence_warning(files, capsys):
    code, out, _ = run(["verify", "--spec", files["gamma"], "--samples", "200000"], capsys)
    assert code == 0 and json.loads(out)["passed"] is True
    high = write_spec(files["dir"] / "high.json", "degenerate", {"k0": 8.0})
    code, out, err = run(["verify", "--spec", high, "--samples", "100000"], capsys)
    assert code == 0
    assert "low-confidence" in err
    assert json.loads(out)["reports"][0]["low_confidence"] is True


def test_verify_input_errors(files, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["verify", "--spec", files["deg"], "--seed", "abc"])
    assert exc.value.code == 2
    code, _, _ = run(["verify"], capsys)
    assert code == 2
    code, _, _ = run(["verify", "--spec", files["deg"], "--corpus"], capsys)
    assert code == 2


def test_verify_failure_exit_code(files, capsys, monkeypatch):
    real = cli.verify.verify_spec

    def broken(*args, **kwargs):
        rep = real(*args, **kwargs)
        rep.metric_checks.append(MetricCheck("forced", 1.0, 2.0, 0.0, 0.1, False))
        return rep

    monkeypatch.setattr(cli.verify, "verify_spec", broken)
    code, out, _ = run(["verify", "--spec", files["deg"], "--samples", "20000"], capsys)
    assert code == 4 and json.loads(out)["passed"] is False


def read_sweep(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], rows[1:]


def test_sweep_csv(files, capsys, tmp_path):
    argv = ["sweep", "--eps-min", "0.5", "--eps-max", "6", "--steps", "5", "--gamma", "0.5",
            "--families", "gamma", "--restarts", "4"]
    code, out, _ = run(argv, capsys)
    assert code == 0
    header, rows = read_sweep(out)
    assert tuple(header) == cli.SWEEP_HEADER
    assert len(rows) == 5
    eps = [float(r[0]) for r in rows]
    base = [float(r[1]) for r in rows]
    opt = [float(r[2]) for r in rows]
    for e, b, o in zip(eps, base, opt):
        assert b == pytest.approx(1 - math.exp(-0.5 * e), rel=1e-14)
        assert o >= b - 1e-9
    assert base == sorted(base) and opt == sorted(opt)
    assert {r[4] for r in rows} <= {"true", "false"}
    out_file = tmp_path / "sweep.csv"
    run(argv + ["--out", str(out_file)], capsys)
    assert out_file.read_bytes() == out.encode("utf-8")


def test_config_precedence(files, capsys, tmp_path, monkeypatch):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text('gamma = 0.5\nsensitivity = 2.0\n', encoding="utf-8")
    code, out, _ = run(["analyze", files["deg"], "--config", str(cfg)], capsys)
    rep = json.loads(out)
    assert rep["utility"]["gamma"] == 0.5 and rep["privacy"]["sensitivity"] == 2.0
    code, out, _ = run(["analyze", files["deg"], "--config", str(cfg), "--gamma", "2"], capsys)
    rep = json.loads(out)
    assert rep["utility"]["gamma"] == 2.0 and rep["privacy"]["sensitivity"] == 2.0
    jcfg = tmp_path / "cfg.json"
    jcfg.write_text('{"seed": 11}', encoding="utf-8")
    argv = ["run", "--data", files["data"], "--column", "id", "--spec", files["deg"]]
    monkeypatch.setenv("RDP_SEED", "7")
    assert json.loads(run(argv, capsys)[1])["seed"] == 7
    assert json.loads(run(argv + ["--config", str(jcfg)], capsys)[1])["seed"] == 11
    assert json.loads(run(argv + ["--config", str(jcfg), "--seed", "12"], capsys)[1])["seed"] == 12
    monkeypatch.setenv("RDP_SEED", "seven")
    assert run(argv, capsys)[0] == 2
