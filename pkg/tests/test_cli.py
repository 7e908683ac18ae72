import csv
import json

import numpy as np
import pytest

from gmfc.cli import build_parser, main

MINIMAL = """
[model]
id = "brownian"

[sim]
n = 8
T = 0.5
dt = 0.1
reps = 4

[init]
family = "dirac"
params = [0.0]
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_help_lists_commands_and_flags(capsys):
    with pytest.raises(SystemExit):
        build_parser().parse_args(["--help"])
    out = capsys.readouterr().out
    for word in ("simulate", "cutnorm", "experiment", "--config", "--out", "--seed", "--workers"):
        assert word in out


def test_simulate_minimal(tmp_path, capsys):
    cfg = write(tmp_path, "c.toml", MINIMAL)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o"), "--workers", "1"]) == 0
    rows = list(csv.reader(open(tmp_path / "o" / "costs.csv")))
    assert rows[0] == ["rep", "running", "terminal", "total"] and len(rows) == 1 + 4
    summary = list(csv.reader(open(tmp_path / "o" / "cost_summary.csv")))
    assert summary[0] == ["model", "n", "dt", "M", "J_mean", "J_stderr"]
    traj = list(csv.reader(open(tmp_path / "o" / "trajectories.csv")))
    assert traj[0] == ["t", "rep", "agent", "x_1"] and len(traj) == 1 + 4 * 6 * 8
    resolved = json.loads((tmp_path / "o" / "config_resolved.json").read_text())
    assert resolved["sim"]["n"] == 8
    assert "J_mean=" in capsys.readouterr().out


def test_simulate_missing_n(tmp_path, capsys):
    cfg = write(tmp_path, "c.toml", MINIMAL.replace("n = 8\n", ""))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "'n'" in capsys.readouterr().err


def test_simulate_unknown_key(tmp_path, capsys):
    cfg = write(tmp_path, "c.toml", MINIMAL + "\n[extra]\nfoo = 1\n")
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    cfg = write(tmp_path, "d.toml", MINIMAL.replace("reps = 4", "reps = 4\nrepz = 2"))
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o")]) == 2
    assert "repz" in capsys.readouterr().err


def test_simulate_seed_override(tmp_path):
    cfg = write(tmp_path, "c.toml", MINIMAL)
    outs = {}
    for tag, seed in (("a", "1"), ("b", "1"), ("c", "2")):
        main(["--seed", seed, "simulate", "--config", cfg, "--out", str(tmp_path / tag), "--workers", "1"])
        outs[tag] = (tmp_path / tag / "trajectories.csv").read_bytes()
    assert outs["a"] == outs["b"] != outs["c"]


def test_simulate_relaxed_and_matrix_kernel(tmp_path):
    np.savetxt(tmp_path / "k.csv", np.full((6, 6), 0.5), delimiter=",")
    text = """
[model]
id = "example2"
[kernel]
source = "matrix"
path = "k.csv"
[controls]
relaxed = true
gamma = { family = "uniform" }
[sim]
n = 6
dt = 0.25
reps = 2
"""
    cfg = write(tmp_path, "r.toml", text)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o"), "--workers", "1"]) == 0


def test_simulate_runtime_failure(tmp_path):
    text = MINIMAL.replace('id = "brownian"', 'id = "constant_drift"\nc = 1e308').replace(
        'params = [0.0]', 'params = [1.7e308]')
    cfg = write(tmp_path, "c.toml", text)
    assert main(["simulate", "--config", cfg, "--out", str(tmp_path / "o"), "--workers", "1"]) == 3


def test_cutnorm_examples(tmp_path, capsys):
    np.savetxt(tmp_path / "z.csv", np.zeros((3, 3)), delimiter=",")
    np.savetxt(tmp_path / "one.csv", np.ones((3, 3)), delimiter=",")
    assert main(["cutnorm", "--matrix", str(tmp_path / "z.csv")]) == 0
    assert main(["cutnorm", "--matrix", str(tmp_path / "one.csv")]) == 0
    out = capsys.readouterr().out.splitlines()
    assert out == ["cutnorm=0 method=exact", "cutnorm=1 method=exact"]


def test_cutnorm_cap_and_heuristic(tmp_path, capsys):
    np.savetxt(tmp_path / "big.csv", np.random.default_rng(0).standard_normal((40, 40)), delimiter=",")
    assert main(["cutnorm", "--matrix", str(tmp_path / "big.csv"), "--exact"]) == 4
    assert main(["cutnorm", "--matrix", str(tmp_path / "big.csv")]) == 0
    assert capsys.readouterr().out.strip().endswith("method=lower-bound")
    assert main(["cutnorm", "--graphon", "product", "--n", "4", "--heuristic"]) == 0


def test_cutnorm_parse_error(tmp_path):
    (tmp_path / "bad.csv").write_text("1,2\n3\n")
    assert main(["cutnorm", "--matrix", str(tmp_path / "bad.csv")]) == 2
    assert main(["cutnorm"]) == 2


def test_experiment_example1_negative_phi(tmp_path, capsys):
    cfg = write(tmp_path, "e.toml", 'n = 10\nreps = 4\ndt = 0.1\nphi = "constant"\nphi_params = [-1.0]\n')
    assert main(["experiment", "example1", "--config", cfg, "--out", str(tmp_path / "o"), "--workers", "1"]) == 0
    assert "verdict=pass" in capsys.readouterr().out
    assert (tmp_path / "o" / "example1" / "report.csv").exists()
    assert (tmp_path / "o" / "example1" / "costs.svg").exists()


def test_experiment_unknown_id_and_key(tmp_path):
    assert main(["experiment", "nope"]) == 2
    cfg = write(tmp_path, "e.toml", "bogus = 1\n")
    assert main(["experiment", "kernelconv", "--config", cfg, "--out", str(tmp_path)]) == 2


def test_experiment_converge_smoke(tmp_path):
    cfg = write(tmp_path, "c.toml", "ns = [50, 100]\nref_n = 400\nreps = 2\ndt = 0.1\n")
    code = main(["experiment", "converge", "--config", cfg, "--out", str(tmp_path / "o"), "--workers", "1"])
    assert code in (0, 1)
    rows = list(csv.reader(open(tmp_path / "o" / "converge" / "report.csv")))
    assert len(rows) == 1 + 2


def test_experiment_fail_verdict_exit_code(tmp_path):
    # a bound that cannot hold: graphon Lipschitz constant declared as 0 for the product graphon
    cfg = write(tmp_path, "k.toml", "ns = [2, 4]\ngraphon_lipschitz = 0.0\n")
    assert main(["experiment", "kernelconv", "--config", cfg, "--out", str(tmp_path / "o")]) == 1


def test_experiment_optimize_exit_code(tmp_path):
    cfg = write(tmp_path, "o.toml", "n = 6\nreps = 1\ndt = 0.25\nbudget = 8\npop_size = 8\n"
                                    "init_std = [0.0]\ninit_mean = [0.0]\nfamily = \"threshold\"\n")
    assert main(["experiment", "optimize", "--config", cfg, "--out", str(tmp_path / "o"), "--workers", "1"]) == 0


def test_experiment_inconclusive_exit_code(tmp_path, monkeypatch):
    from gmfc import experiments as ex

    def runner(cfg):
        return ex.ExperimentReport("kernelconv", {}, ["n"], [], verdict=ex.INCONCLUSIVE)

    monkeypatch.setitem(ex.EXPERIMENTS, "kernelconv", (ex.KernelConvConfig, runner))
    assert main(["experiment", "kernelconv", "--out", str(tmp_path)]) == 5
