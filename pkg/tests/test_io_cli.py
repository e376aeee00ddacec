import math

import numpy as np
import pytest

from ibplab import Parameters, simulate
from ibplab.cli import main, render_cell
from ibplab.io import (ConfigError, export_summary, export_trajectory, parse_config,
                       read_trajectory_csv, trajectory_header)
from ibplab.process import geometric_checkpoints

GOLDEN_HEADER = ("t,D,T,Tbar,S,Z,Pbar,Kbar,R,lambda,Lambda,"
                 "K_tag1,P_tag1,tau_tag1,K_tag2,P_tag2,tau_tag2")


def test_flags_override_file(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# comment\nbeta = 0.5\nalpha=2\nmaster-seed = 4\n")
    cfg = parse_config(f, {"beta": 0.3, "alpha": None})
    assert cfg.beta == 0.3 and cfg.alpha == 2.0 and cfg.master_seed == 4


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="master_seed"):
        parse_config(None, {"alpha": 1.0})
    with pytest.raises(ConfigError, match="unknown key: bogus"):
        parse_config(None, {"bogus": 1, "seed": 1})
    with pytest.raises(ConfigError, match="alpha"):
        parse_config(None, {"alpha": -1.0, "seed": 1})
    f = tmp_path / "bad.cfg"
    f.write_text("nonsense line\n")
    with pytest.raises(ConfigError, match="key=value"):
        parse_config(f, {"seed": 1})


def test_checkpoint_grid_count():
    ck = geometric_checkpoints(10**6, 40)
    assert ck.size == math.floor(40 * 6) + 1
    assert ck[0] == 1 and ck[-1] == 10**6


def test_golden_header():
    assert trajectory_header(2) == GOLDEN_HEADER


def test_trajectory_roundtrip_and_missing_fields(tmp_path):
    # alpha tiny: D stays 0 for a while, so Pbar/Kbar must be empty fields
    p = Parameters(0.05, 0.5, 1.0, 0.8, 0.3)
    tr = simulate(p, 5000, n_tagged=2, seed=3)
    assert tr.D[0] == 0
    path = tmp_path / "tr.csv"
    export_trajectory(tr, path, {"alpha": 0.05, "master_seed": 3})
    text = path.read_text().splitlines()
    assert text[0].startswith("# build: ibplab-")
    header_line = [l for l in text if not l.startswith("#")][0]
    assert header_line == GOLDEN_HEADER
    first = [l for l in text if not l.startswith("#")][1].split(",")
    assert first[6] == "" and first[7] == ""
    cols, meta = read_trajectory_csv(path)
    assert meta["master_seed"] == "3"
    for name in ("t", "D", "T"):
        assert np.array_equal(cols[name], getattr(tr, name).astype(float))
    for name in ("Tbar", "S", "Z", "Pbar", "Kbar", "R", "Lambda"):
        assert np.array_equal(cols[name], tr.column(name), equal_nan=True)
    assert np.array_equal(cols["lambda"], tr.column("lambda"))
    assert np.array_equal(cols["K_tag1"], tr.tag_K[:, 0], equal_nan=True)
    assert np.array_equal(cols["P_tag2"], tr.tag_P[:, 1], equal_nan=True)


def test_identical_config_gives_identical_file(tmp_path):
    p = Parameters(2.0, 0.5, 1.0, 1.0, 0.0)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        export_trajectory(simulate(p, 3000, seed=7), path, {"seed": 7})
    assert a.read_bytes() == b.read_bytes()


def test_cli_simulate_writes_csv(tmp_path):
    out = tmp_path / "sim.csv"
    rc = main(["simulate", "--alpha", "2", "--beta", "0.5", "--w", "1", "--iota", "0",
               "--horizon", "100000", "--seed", "7", "--n-tagged", "2", "-o", str(out)])
    assert rc == 0
    cols, meta = read_trajectory_csv(out)
    assert cols["t"][-1] == 100000 and meta["beta"] == "0.5" and meta["horizon"] == "100000"


def test_cli_report_cites_table_cell(capsys):
    rc = main(["report", "--alpha", "2", "--beta", "0.8", "--w", "0.4", "--horizon", "20000",
               "--seed", "1"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "Kbar: β/(β−w)  [limit = 2;" in out
    assert "PASS identities" in out


def test_cli_errors(capsys):
    rc = main(["clt", "mean", "--alpha", "2", "--beta", "0.9", "--w", "0.4", "--seed", "1"])
    assert rc == 1 and "requires β<w" in capsys.readouterr().err
    assert main(["simulate", "--alpha", "2"]) == 1
    assert "master_seed is required" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--no-such-flag"])
    assert exc.value.code == 1


def test_cli_gate_failure_exit_code(capsys):
    # the noiseless SA gap at 10^4 is about 0.045 > 1e-3
    rc = main(["recursion-lab", "sa", "--horizon", "10000", "--seed", "1"])
    assert rc == 2 and "verdict: fail" in capsys.readouterr().out


def test_cli_ensemble_summary(tmp_path):
    out, table = tmp_path / "sum.txt", tmp_path / "tab.csv"
    rc = main(["ensemble", "--alpha", "2", "--beta", "0.3", "--w", "0.7", "--iota", "0.2",
               "--horizon", "2000", "--replicas", "3", "--seed", "2", "-o", str(out),
               "--table", str(table)])
    assert rc == 0
    text = out.read_text()
    assert "[regime]" in text and "[Z]" in text and "master_seed: 2" in text
    rows = [l for l in table.read_text().splitlines() if not l.startswith("#")]
    assert rows[0].startswith("replica,") and len(rows) == 4


def test_cli_estimate_and_clt_dish(capsys):
    assert main(["estimate", "--alpha", "1", "--beta", "0.4", "--w", "0.9", "--iota", "0.2",
                 "--horizon", "10000", "--replicas", "2", "--seed", "3"]) == 0
    assert "beta_hat:" in capsys.readouterr().out
    rc = main(["clt", "dish", "--alpha", "2", "--beta", "0.5", "--w", "1", "--iota", "0.3",
               "--horizon", "10000", "--replicas", "5", "--seed", "3"])
    assert rc in (0, 2)
    assert "shift_ratio" in capsys.readouterr().out


def test_render_cell():
    assert render_cell("beta/(beta-w)") == "β/(β−w)"
    assert render_cell("t^(w-beta)*Z*beta/(alpha*(w-beta))") == "t^(w−β)·Z*∞·β/(α·(w−β))"


def test_export_summary_sections(tmp_path):
    from ibplab import run_ensemble

    s = run_ensemble(Parameters(2.0, 0.8, 1.0, 0.4), 2000, 2, master_seed=1)
    path = tmp_path / "s.txt"
    export_summary(s, path, config={"seed": 1})
    text = path.read_text()
    assert "[Kbar]" in text and "limit_kind: deterministic" in text


def test_small_sample_verdict_is_inconclusive(capsys):
    rc = main(["recursion-lab", "clt", "--replicas", "5", "--horizon", "10000", "--seed", "1"])
    assert rc == 0 and "verdict: inconclusive" in capsys.readouterr().out
