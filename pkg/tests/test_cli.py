import json

import numpy as np

from popcon.cli import main
from popcon.traceio import read_trace


def run_cli(*argv):
    return main(list(argv))


def test_ode_command_writes_trace_and_manifest(tmp_path):
    out = tmp_path / "ode"
    rc = run_cli("ode", "--s", "3", "--rho", "0.2", "--t-end", "2.0",
                 "--record-every", "10", "--out", str(out))
    assert rc == 0
    tr = read_trace(out / "meanfield_trace.txt")
    assert tr.system_tag == "meanfield" and tr.s == 3
    assert tr.sample_times[-1] >= 2.0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "ode"
    assert manifest["config"]["rho"] == 0.2
    assert "numpy" in manifest["versions"]
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary) == {"config", "results", "bound_reports", "deviation_reports"}


def test_ode_bounds_and_phase_schedule(tmp_path):
    out = tmp_path / "ode"
    rc = run_cli("ode", "--s", "2", "--rho", "0.5", "--t-end", "30",
                 "--record-every", "10", "--bounds", "--theta", "0.5",
                 "--n-ref", "1000", "--out", str(out))
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["results"]["bounds_all_hold"] in (True, False)
    assert len(summary["bound_reports"]) > 5
    sched = summary["results"].get("phase_schedule")
    if summary["results"]["T1"] is not None:
        assert sched["T2"] == sched["T1"] + 64 * 4


def test_sim_command(tmp_path):
    out = tmp_path / "sim"
    rc = run_cli("sim", "--n", "200", "--s", "2", "--rho", "0.5", "--seed", "7",
                 "--horizon", "5", "--out", str(out))
    assert rc == 0
    tr = read_trace(out / "random_trace.txt")
    assert tr.n == 200 and tr.seed == 7


def test_ensemble_golden_values(tmp_path):
    # frozen regression: n=200, s=2, rho=0.5, base seed 12345, 3 trials
    out = tmp_path / "ens"
    rc = run_cli("ensemble", "--n", "200", "--s", "2", "--rho", "0.5",
                 "--seed", "12345", "--horizon", "80", "--trials", "3",
                 "--out", str(out))
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    rows = summary["results"]["per_trial"]
    assert [r["consensus_step"] for r in rows] == [5166, 9138, 5543]
    assert [r["total_communications"] for r in rows] == [2645, 4655, 2818]
    assert all(r["consensus_correct"] for r in rows)
    assert summary["results"]["correct_consensus"] == 3


def test_ensemble_summary_reproducible(tmp_path):
    argv = ["ensemble", "--n", "100", "--s", "2", "--rho", "0.5", "--seed", "3",
            "--horizon", "10", "--trials", "2"]
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert run_cli(*argv, "--out", str(out1)) == 0
    assert run_cli(*argv, "--out", str(out2)) == 0
    assert (out1 / "summary.json").read_bytes() == (out2 / "summary.json").read_bytes()
    assert (out1 / "manifest.json").read_bytes() == (out2 / "manifest.json").read_bytes()


def test_config_file_with_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 100, "s": 2, "rho": 0.5, "seed": 3,
                               "horizon": 4, "trials": 2}))
    out = tmp_path / "out"
    rc = run_cli("ensemble", "--config", str(cfg), "--trials", "1", "--out", str(out))
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["trials"] == 1  # flag wins
    assert summary["config"]["n"] == 100  # file value kept


def test_bad_config_is_exit_2(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    assert run_cli("ensemble", "--config", str(cfg)) == 2
    assert "not valid JSON" in capsys.readouterr().err
    assert run_cli("ensemble", "--config", str(tmp_path / "missing.json")) == 2


def test_compare_command(tmp_path):
    out_sim = tmp_path / "sim"
    n = 400
    run_cli("sim", "--n", str(n), "--s", "2", "--rho", "0.5", "--seed", "5",
            "--horizon", "0.2", "--sample-interval", str(4 / n),
            "--full-horizon", "--out", str(out_sim))
    out_ode = tmp_path / "ode"
    run_cli("ode", "--s", "2", "--rho", "0.5", "--t-end", "0.2",
            "--step", str(4 / n), "--out", str(out_ode))
    out = tmp_path / "cmp"
    rc = run_cli("compare", "--random-trace", str(out_sim / "random_trace.txt"),
                 "--ode-trace", str(out_ode / "meanfield_trace.txt"),
                 "--out", str(out))
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["deviation_reports"]) == 1
    sups = summary["deviation_reports"][0]["per_variable_sup"]
    assert 0.0 <= sups["alpha"] <= 1.0


def test_corrupted_trace_names_file_and_exits_2(tmp_path, capsys):
    bad = tmp_path / "corrupt.txt"
    bad.write_text("# popcon-trace 1\n# system=random s=2 n=10 rho=0.5 seed=1 dt=1.0\n"
                   "# columns: " + " ".join(["t"] + ["x"] * 36) + "\n")
    out = tmp_path / "out"
    rc = run_cli("plotdata", "--trace", str(bad), "--out", str(out))
    assert rc == 2
    assert "corrupt.txt" in capsys.readouterr().err


def test_plotdata_panels_and_figures(tmp_path):
    out_ode = tmp_path / "ode"
    run_cli("ode", "--s", "2", "--rho", "0.2", "--t-end", "5", "--record-every", "10",
            "--out", str(out_ode))
    out = tmp_path / "panels"
    rc = run_cli("plotdata", "--trace", str(out_ode / "meanfield_trace.txt"),
                 "--out", str(out))
    assert rc == 0
    txts = sorted(p.name for p in out.glob("panel_*.txt"))
    assert len(txts) == 6
    pngs = sorted(p.name for p in out.glob("panel_*.png"))
    assert len(pngs) == 6  # a figure rendered beside every columnar file
    # normalized advantage columns start at rho
    adv = next(p for p in out.glob("panel_advantages_*.txt"))
    names, data = __import__("popcon.traceio", fromlist=["read_columns"]).read_columns(adv)
    assert names[1] == "xi"
    assert abs(data[0, 1] - 0.2) < 1e-12
    assert np.max(np.abs(data[0, 2:] - 0.2)) < 1e-12


def test_plotdata_unanimous_alpha_column_zero(tmp_path):
    out_ode = tmp_path / "ode"
    run_cli("ode", "--s", "2", "--rho", "1.0", "--t-end", "2", "--record-every", "10",
            "--out", str(out_ode))
    out = tmp_path / "panels"
    rc = run_cli("plotdata", "--trace", str(out_ode / "meanfield_trace.txt"),
                 "--no-render", "--out", str(out))
    assert rc == 0
    from popcon.traceio import read_columns

    ab = next(p for p in out.glob("panel_alpha_beta_*.txt"))
    _, data = read_columns(ab)
    assert np.all(data[:, 1] == 0.0)
    assert not list(out.glob("*.png"))


def test_log_ratio_panel_orders_leader_ahead(tmp_path):
    # late in the run the leader error ratio sits below every bin ratio
    out_ode = tmp_path / "ode"
    run_cli("ode", "--s", "5", "--rho", "0.02", "--t-end", "120",
            "--record-every", "100", "--out", str(out_ode))
    out = tmp_path / "panels"
    run_cli("plotdata", "--trace", str(out_ode / "meanfield_trace.txt"),
            "--no-render", "--out", str(out))
    from popcon.traceio import read_columns

    panel = next(p for p in out.glob("panel_log_ratios_*.txt"))
    names, data = read_columns(panel)
    assert names[1] == "log_leader_error_ratio"
    late = data[-1]
    assert np.all(late[1] < late[2:])


def test_reset_command(tmp_path):
    out = tmp_path / "reset"
    rc = run_cli("reset", "--n", "500", "--s", "2", "--rho", "0.2", "--seed", "17",
                 "--horizon", "20", "--block-length", "5", "--out", str(out))
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["results"]["blocks"]) >= 2
    assert list(out.glob("overlay_alpha_beta_reset.png"))


def test_sweep_single_cell(tmp_path):
    out = tmp_path / "sweep"
    rc = run_cli("sweep", "--n-grid", "200", "--s-grid", "2", "--rho-grid", "0.5",
                 "--trials", "2", "--seed", "3", "--horizon", "40",
                 "--no-render", "--out", str(out))
    assert rc == 0
    summary = json.loads((out / "summary.json").read_text())
    cells = summary["results"]["cells"]
    assert len(cells) == 1 and "error" not in cells[0]
    assert cells[0]["success_rate"] >= 0.0
    if cells[0]["comm_rate"] is not None:
        # per-step communication cost sits in the [1/s, 3/s] band
        assert 1 / 2 - 0.05 <= cells[0]["comm_rate"] <= 3 / 2


def test_sweep_cell_failure_recorded_run_continues(tmp_path):
    out = tmp_path / "sweep"
    # second cell invalid (s does not divide n); first succeeds
    rc = run_cli("sweep", "--n-grid", "200", "--s-grid", "2,3", "--rho-grid", "0.5",
                 "--trials", "1", "--seed", "3", "--horizon", "10",
                 "--no-render", "--out", str(out))
    assert rc == 0
    cells = json.loads((out / "summary.json").read_text())["results"]["cells"]
    assert len(cells) == 2
    assert "error" not in cells[0]
    assert "error" in cells[1]


def test_verify_smoke(tmp_path, capsys):
    out = tmp_path / "verify"
    rc = run_cli("verify", "--smoke", "--out", str(out))
    assert rc == 0
    report = json.loads((out / "verify_report.json").read_text())
    assert report["all_passed"]
    assert "PASS" in capsys.readouterr().out


def test_verify_selected_criterion(tmp_path):
    out = tmp_path / "verify"
    rc = run_cli("verify", "--criteria", "1", "--out", str(out))
    assert rc == 0
    report = json.loads((out / "verify_report.json").read_text())
    assert report["criteria"][0]["name"] == "kernel_meanfield_consistency"
    assert run_cli("verify", "--criteria", "99", "--out", str(out)) == 2
