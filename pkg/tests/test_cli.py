import json

import numpy as np
import pytest

from truncem.cli import main


def read_csv(path):
    lines = open(path).read().splitlines()
    header = lines[0].split(",")
    rows = [list(map(float, l.split(","))) for l in lines[1:] if not l.startswith("#")]
    comments = dict(l[2:].split("=", 1) for l in lines if l.startswith("# "))
    return header, np.array(rows), comments


GBM = ["rates", "--problem", "gbm", "--oracle", "exact", "--dts", "0.125,0.0625,0.03125",
       "--ref-dt", "0.03125", "--paths", "200", "--seed", "1"]


def test_rates_outputs(tmp_cwd):
    assert main(GBM + ["--out", "g"]) == 0
    header, rows, comments = read_csv("g_errors.csv")
    assert header == ["dt", "error", "stderr", "n_paths", "n_failed"]
    assert rows.shape == (3, 5) and np.all(rows[:, 3] == 200)
    assert set(comments) == {"slope", "intercept", "r2"}
    rate = dict(l.split("=") for l in open("g_rate.txt").read().split())
    assert rate["slope"] == comments["slope"]
    # full round-trip precision
    assert float(repr(float(comments["slope"]))) == float(comments["slope"])


def test_repeat_and_workers_byte_identical(tmp_cwd):
    assert main(GBM + ["--out", "a"]) == 0
    assert main(GBM + ["--out", "b"]) == 0
    assert main(GBM + ["--out", "c", "--workers", "3"]) == 0
    a = open("a_errors.csv", "rb").read()
    assert a == open("b_errors.csv", "rb").read() == open("c_errors.csv", "rb").read()


def test_config_file_and_override(tmp_cwd):
    cfg = {"problem": "gbm", "dts": [0.125, 0.0625], "ref_dt": 0.0625, "paths": 50,
           "oracle": "exact", "seed": 3, "out": "fromfile"}
    (tmp_cwd / "c.json").write_text(json.dumps(cfg))
    assert main(["rates", "--config", "c.json"]) == 0
    assert main(["rates", "--config", "c.json", "--paths", "60", "--out", "flag"]) == 0
    assert read_csv("fromfile_errors.csv")[1][0, 3] == 50
    assert read_csv("flag_errors.csv")[1][0, 3] == 60


def test_seed_precedence(tmp_cwd, monkeypatch):
    base = ["simulate", "--problem", "gbm", "--dt", "0.01"]
    assert main(base + ["--seed", "5", "--out", "s5"]) == 0
    assert main(base + ["--seed", "6", "--out", "s6"]) == 0
    monkeypatch.setenv("TRUNCEM_SEED", "5")
    assert main(base + ["--out", "env"]) == 0
    assert main(base + ["--seed", "6", "--out", "flag"]) == 0
    read = lambda p: open(f"{p}_trajectory.csv").read()
    assert read("env") == read("s5")
    assert read("flag") == read("s6") != read("s5")


def test_simulate_first_row_is_x0(tmp_cwd):
    assert main(["simulate", "--problem", "gbm", "--dt", "1e-3", "--seed", "1", "--out", "s"]) == 0
    header, rows, _ = read_csv("s_trajectory.csv")
    assert header == ["t", "x1"]
    assert rows[0].tolist() == [0.0, 1.0]
    assert len(rows) == 1001 and rows[-1, 0] == 1.0


def test_simulate_continuous(tmp_cwd):
    assert main(["simulate", "--problem", "example1", "--dt", "1e-2", "--noise-dt", "1e-3",
                 "--emit-continuous", "--out", "s"]) == 0
    _, cont, _ = read_csv("s_continuous.csv")
    _, traj, _ = read_csv("s_trajectory.csv")
    assert len(cont) == 1001
    assert np.array_equal(cont[::10, 1], traj[:, 1])


def test_probe_example1_clean(tmp_cwd):
    assert main(["probe", "--problem", "example1", "--q", "4", "--samples", "500",
                 "--out", "p"]) == 0
    text = open("p_probe.csv").read()
    assert "# violations=0" in text and "# samples_tested=500" in text


def test_moments_table(tmp_cwd):
    assert main(["moments", "--problem", "example1", "--p", "2", "--dts", "0.1,0.01",
                 "--paths", "50", "--out", "m"]) == 0
    header, rows, comments = read_csv("m_moments.csv")
    assert header == ["dt", "moment"] and rows.shape == (2, 2)
    assert float(comments["max_over_min"]) <= 3


def test_timechanged_emit_paths(tmp_cwd):
    assert main(["timechanged", "--problem", "timechanged2d", "--dts", "1e-2,1e-3",
                 "--ref-dt", "1e-4", "--paths", "4", "--seed", "7", "--emit-paths",
                 "--out", "tc"]) == 0
    _, d, _ = read_csv("tc_D.csv")
    _, e, _ = read_csv("tc_E.csv")
    assert np.all(np.diff(d[:, 1]) > 0)
    levels = e[:, 1] / 1e-3
    assert np.allclose(levels, np.rint(levels)) and np.all(np.diff(e[:, 1]) >= 0)
    for name in ("tc_y1.csv", "tc_y2.csv"):
        header, y, _ = read_csv(name)
        assert len(header) == 2 and np.all(np.isfinite(y))


def test_identity_walk_file_matches_classical(tmp_cwd):
    (tmp_cwd / "walk.txt").write_text("0.0078125\n" * 200)
    common = ["--problem", "timechanged2d", "--dts", "0.0625,0.015625", "--ref-dt", "0.0078125",
              "--paths", "10", "--seed", "2"]
    assert main(["timechanged", *common, "--horizon", "1", "--subordinator-file", "walk.txt",
                 "--out", "tc"]) == 0
    assert main(["rates", *common, "--out", "cl"]) == 0
    assert np.array_equal(read_csv("tc_errors.csv")[1], read_csv("cl_errors.csv")[1])


@pytest.mark.parametrize("argv", [
    ["rates", "--epsilon", "0.3"],
    ["rates", "--dts", "0.1,abc"],
    ["rates", "--paths", "1"],
    ["rates", "--seed", "-4"],
    ["rates", "--dts", "0.1,0.025", "--ref-dt", "0.01", "--paths", "5"],
    ["timechanged", "--alpha-s", "1.2"],
    ["timechanged", "--horizon", "100"],
    ["timechanged", "--subordinator-file", "missing.txt"],
    ["probe", "--q", "2"],
    ["rates", "--problem", "nope"],
    ["rates", "--config", "missing.json"],
])
def test_config_errors_exit_2(tmp_cwd, argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:        # argparse rejects unknown choices itself
        code = exc.code
    assert code == 2
    err = capsys.readouterr().err.strip().splitlines()
    assert err and "error" in err[-1]


def test_unknown_config_key_exit_2(tmp_cwd):
    (tmp_cwd / "c.json").write_text('{"pathz": 3}')
    assert main(["rates", "--config", "c.json"]) == 2


def test_estimator_failure_exit_3(tmp_cwd, capsys):
    code = main(["rates", "--problem", "example1", "--mode", "classical", "--dts", "0.1",
                 "--ref-dt", "0.01", "--paths", "5", "--out", "x"])
    assert code == 3
    assert "failed" in capsys.readouterr().err
