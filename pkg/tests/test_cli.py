import csv
import json

import pytest

from rsnn.cli import build_parser, main, parse_m_list, read_config_file, resolve_settings

FAST = ["--dim-M", "20", "--num-eigs", "2", "--quad-points", "10", "--eps-tol", "0", "--n-max", "12"]


def test_parse_m_list():
    assert parse_m_list("300") == [300]
    assert parse_m_list("50, 100,200") == [50, 100, 200]
    for bad in ("", "a,b", "0", "-5"):
        with pytest.raises(ValueError):
            parse_m_list(bad)


def test_config_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nproblem = ho-coupled\ndim_M = 40\nnum-eigs=4  # inline\n"
                    "gamma = 1e-9\npod-gram = stiffness\nno-reduce = false\n\n")
    s = read_config_file(path)
    assert s == {"problem": "ho-coupled", "M": [40], "k": 4, "gamma": 1e-9,
                 "pod_gram": "stiffness", "no_reduce": False}
    path.write_text("colour = blue\n")
    with pytest.raises(ValueError, match="unknown key"):
        read_config_file(path)
    path.write_text("seed\n")
    with pytest.raises(ValueError, match="key = value"):
        read_config_file(path)
    path.write_text("no-reduce = maybe\n")
    with pytest.raises(ValueError, match=":1:"):
        read_config_file(path)


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("problem = ho-coupled\nseed = 3\ngamma = 1e-9\nno-reduce = true\n")
    args = build_parser().parse_args(["run", "--config", str(path), "--seed", "7"])
    cfg, M = resolve_settings(args)
    assert (cfg.problem, cfg.seed, cfg.gamma, cfg.reduce, cfg.out) == ("ho-coupled", 7, 1e-9, False, "rsnn-out")
    assert M is None
    args = build_parser().parse_args(["run", "--no-reduce", "--dim-M", "10,20"])
    cfg, M = resolve_settings(args)
    assert cfg.reduce is False and M == [10, 20]


def test_run_command(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["run", "--problem", "laplace2d", *FAST, "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "laplace2d: K=" in text and "l= 1 (1,1)" in text
    rows = list(csv.DictReader(open(out / "errors.csv")))
    assert len(rows) == 2 and rows[1]["n1"] == "2"
    assert json.load(open(out / "meta.json"))["config"]["seed"] == 1


def test_run_rejects_multiple_m(tmp_path):
    with pytest.raises(SystemExit):
        main(["run", "--dim-M", "10,20", "--out", str(tmp_path)])


def test_errors_are_reported_not_raised(tmp_path, capsys):
    assert main(["run", "--dim-M", "5", "--num-eigs", "9", "--out", str(tmp_path)]) == 1
    assert capsys.readouterr().err.startswith("error:")
    assert main(["run", "--config", str(tmp_path / "missing.cfg")]) == 1


def test_sweep_command(tmp_path, capsys):
    args = ["sweep", "--problem", "ho-decoupled", *FAST, "--out", str(tmp_path)]
    args[args.index("20")] = "10,20"
    assert main(args) == 0
    assert capsys.readouterr().out.count("M=") == 2
    assert (tmp_path / "sweep.csv").exists()


def test_cond_report_command(tmp_path, capsys):
    assert main(["cond-report", *FAST, "--out", str(tmp_path),
                 "--dump-matrices", str(tmp_path / "m")]) == 0
    text = capsys.readouterr().out
    assert "mass" in text and "stiffness" in text
    rows = list(csv.DictReader(open(tmp_path / "conditions.csv")))
    assert [r["pod_gram"] for r in rows] == ["mass", "stiffness"]
    assert (tmp_path / "m" / "M20_stiffness_Ared.bin").exists()


def test_unknown_problem_rejected():
    with pytest.raises(SystemExit):
        main(["run", "--problem", "heat"])
