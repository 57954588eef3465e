import io
import json
import math
import subprocess
import sys

import pytest

from spinorder.cli import RunConfig, config_from_args, main, run


def invoke(argv):
    out, err = io.StringIO(), io.StringIO()
    try:
        config = config_from_args(argv)
    except SystemExit as exc:
        return exc.code, "", ""
    code = run(config, out, err)
    return code, out.getvalue(), err.getvalue()


def last_row(csv_text):
    lines = csv_text.strip().splitlines()
    header = lines[0].split(",")
    return dict(zip(header, map(float, lines[-1].split(","))))


def test_bound_json():
    code, out, _ = invoke(["bound", "--xi", "1"])
    assert code == 0
    payload = json.loads(out)
    assert set(payload) == {"xi", "kappa", "eta_ci", "t_m"}
    assert payload["kappa"] == pytest.approx(0.267949, abs=1e-6)
    assert payload["eta_ci"] == pytest.approx(0.1727, abs=1e-4)


def test_bounds_alias():
    assert invoke(["bounds", "--xi", "0.5"])[1] == invoke(["bound", "--xi", "0.5"])[1]


def test_evolve_gaussian():
    code, out, err = invoke(["evolve", "--xi", "1", "--gaussian", "1.11,1.30"])
    assert code == 0
    assert out.splitlines()[0] == "t,z1,x1,y2,x3,z3,theta3"
    assert len(out.splitlines()) == 1002
    row = last_row(out)
    assert row["z3"] == pytest.approx(0.2510, abs=1e-3)
    assert row["theta3"] == pytest.approx(math.pi / 2, abs=0.05)
    assert "z3(T)" in err


def test_cinept_json():
    code, out, _ = invoke(["cinept", "--xi", "1", "--format", "json"])
    payload = json.loads(out)
    assert code == 0
    assert payload["simulated"] == pytest.approx(payload["eta_ci"], abs=1e-8)


def test_optimize_roundtrip(tmp_path):
    pulse_file = tmp_path / "pulse.csv"
    code, _, err = invoke(
        ["optimize", "--xi", "1", "--steps", "200", "--max-iters", "50", "--out", str(pulse_file)]
    )
    assert code == 0
    reported = json.loads(err.strip().splitlines()[-1])["efficiency"]
    code, out, _ = invoke(["evolve", "--xi", "1", "--steps", "200", "--pulse", str(pulse_file)])
    assert code == 0
    assert last_row(out)["z3"] == pytest.approx(reported, abs=1e-9)


def test_optimize_random_init_is_seeded(tmp_path):
    outs = []
    for _ in range(2):
        code, out, _ = invoke(
            ["optimize", "--xi", "1", "--steps", "100", "--max-iters", "5", "--init", "random", "--seed", "7"]
        )
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1]


def test_optimize_gaussian_json():
    code, out, err = invoke(["optimize-gaussian", "--xi", "1"])
    assert code == 0
    payload = json.loads(out)
    assert payload["A"] == pytest.approx(1.11, abs=0.03)
    assert payload["sigma"] == pytest.approx(1.30, abs=0.05)


def test_sweep_csv_small():
    code, out, _ = invoke(["sweep", "--xi", "1,0.5", "--steps", "100", "--max-iters", "5"])
    assert code == 0
    lines = out.splitlines()
    assert lines[0] == "xi,A,sigma,eff_gaussian,eff_descent"
    assert [float(line.split(",")[0]) for line in lines[1:]] == [1.0, 0.5]


def test_robustness_writes_legend(tmp_path):
    target = tmp_path / "grid.csv"
    code, _, err = invoke(
        ["robustness", "--a-range", "1.0:1.2:0.1", "--sigma-range", "1.2:1.4:0.1", "--out", str(target)]
    )
    assert code == 0
    rows = target.read_text().splitlines()
    assert len(rows) == 4
    assert len(rows[0].split(",")) == 4
    legend = json.loads((tmp_path / "grid.csv.legend.json").read_text())
    assert legend["bands"][0]["label"] == "white"
    assert "max efficiency" in err


def test_oracle_check():
    code, out, _ = invoke(["oracle-check", "--xi", "0.3", "--steps", "200"])
    assert code == 0
    assert out.splitlines()[-1] == "PASS"
    assert "y2 sign +1" in out


def test_determinism(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        invoke(["evolve", "--xi", "0.4", "--gaussian", "0.9,1.4", "--out", str(path)])
    assert a.read_bytes() == b.read_bytes()


@pytest.mark.parametrize(
    "argv",
    [
        ["frobnicate"],
        ["bound"],
        ["bound", "--xi", "abc"],
        ["evolve", "--xi", "1"],
        ["evolve", "--xi", "1", "--gaussian", "1,0"],
        ["bound", "--xi", "-1"],
        ["sweep"],
        ["robustness", "--a-range", "2:1:0.1"],
        ["cinept", "--xi", "0", "--horizon", "1"],
        ["optimize", "--xi", "1", "--steps", "1"],
    ],
)
def test_invalid_arguments_exit_one(argv):
    code, _, _ = invoke(argv)
    assert code == 1


def test_numerical_failure_exits_two(monkeypatch):
    import spinorder.cli as cli
    from spinorder.oracle import OracleError

    def boom(*args, **kwargs):
        raise OracleError("forced")

    monkeypatch.setattr(cli.oracle, "compare_reduced", boom)
    err = io.StringIO()
    assert run(RunConfig("oracle-check", xi=1.0, steps=10), io.StringIO(), err) == 2
    assert "numerical failure" in err.getvalue()


def test_module_entry_point():
    proc = subprocess.run(
        [sys.executable, "-m", "spinorder", "bound", "--xi", "1"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["kappa"] == pytest.approx(0.267949192431)
    proc = subprocess.run([sys.executable, "-m", "spinorder", "nope"], capture_output=True, text=True)
    assert proc.returncode == 1
    assert "usage" in proc.stderr


def test_main_returns_code(capsys):
    assert main(["bound", "--xi", "2"]) == 0
    assert "kappa" in capsys.readouterr().out
