import csv

import pytest
import runez

from nru_coexist import ParameterError
from nru_coexist.experiment import COLUMNS, emit_results, ResultRow, RUNNERS, Status, trace_path, TRACE_COLUMNS


def csv_lines(path):
    return runez.to_path(path).read_bytes().split(b"\r\n")


def csv_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_analyze(cli):
    config = cli.tests_path("sample-config1.yml")
    cli.run("-c", config, "analyze", "-o", "out.csv")
    assert cli.succeeded
    assert "Cat4-LBT" in cli.logged.stdout
    assert "Wrote 6 rows to out.csv" in cli.logged

    lines = csv_lines("out.csv")
    assert lines[0].decode() == ",".join(COLUMNS)
    assert len(lines) == 8  # Header, 2 sweep points x 3 methods, trailing empty split
    assert lines[-1] == b""

    rows = csv_rows("out.csv")
    assert [r["sweep_value"] for r in rows] == ["5", "5", "5", "10", "10", "10"]
    assert [r["method"] for r in rows[:3]] == ["proposed", "Cat4-LBT", "COT-adjust"]
    assert all(r["status"] == "ok" and r["seed"] == "7" for r in rows)
    assert all(float(r["tau_w"]) > 0 for r in rows)
    assert float(rows[0]["tau_w"]) > float(rows[3]["tau_w"])

    # Same inputs, same bytes, whether run in order or on a process pool
    cli.run("-c", config, "analyze", "-o", "again.csv")
    assert cli.succeeded
    cli.run("-c", config, "analyze", "-o", "pool.csv", "-j2")
    assert cli.succeeded
    expected = runez.to_path("out.csv").read_bytes()
    assert runez.to_path("again.csv").read_bytes() == expected
    assert runez.to_path("pool.csv").read_bytes() == expected

    cli.run("-c", config, "run", "--mode", "analytic", "-mproposed")
    assert cli.succeeded
    assert "COT-adjust" not in cli.logged.stdout


def test_tune_window(cli):
    cli.run("tune-window", "-s", "wifi-nodes=5,10", "-o", "tune.csv")
    assert cli.succeeded
    rows = csv_rows("tune.csv")
    assert len(rows) == 2
    assert int(rows[0]["window_in_class"]) in (15, 31, 63)
    assert float(rows[1]["window"]) > float(rows[0]["window"])
    assert abs(float(rows[0]["imbalance"])) < 0.01


def test_fairness(cli):
    cli.run("-c", cli.tests_path("sample-config1.yml"), "fairness", "-s", "wifi-nodes=10", "-o", "fair.csv")
    assert cli.succeeded
    rows = csv_rows("fair.csv")
    assert len(rows) == 1
    row = rows[0]
    if row["status"] == "infeasible":
        # Rate floor out of reach for this draw, reported rather than failed
        assert "unreachable" in cli.logged
        return

    assert row["status"] == "ok"
    assert row["channel"] == "0"
    assert float(row["wifi_rate"]) > 0
    assert float(row["nr_rate"]) == pytest.approx(float(row["nr_dl_rate"]) + float(row["nr_ul_rate"]), rel=1e-6)
    assert float(row["nr_rate"]) >= float(row["rate_floor"]) * (1 - 1e-6)


@pytest.mark.parametrize("sweep", ["p-dk-max=23,29,35", "payload=800,1500,2048", "mcot=8,10"])
def test_fairness_holds(cli, sweep):
    # Wherever the rate floor is met, WiFi does at least as well as next to the virtual WiFi network
    cli.run("-c", cli.tests_path("sample-config1.yml"), "fairness", "-r1", "-s", sweep, "-o", "fair.csv")
    assert cli.succeeded
    rows = csv_rows("fair.csv")
    assert len(rows) == len(sweep.split(","))
    assert all(r["status"] in ("ok", "boundary", "not-converged", "infeasible") for r in rows)
    met = [r for r in rows if r["status"] == "ok"]
    assert met
    for row in met:
        assert float(row["wifi_rate"]) >= float(row["virtual_wifi_rate"]) * (1 - 1e-6)


def test_optimize_and_compare(cli):
    runez.write("no-fairness.yml", "include: %s\nscenario:\n  fairness: false\n" % cli.tests_path("sample-config1.yml"), logger=None)
    cli.run("-c", "no-fairness.yml", "optimize", "-s", "wifi-nodes=10", "-o", "opt.csv", "--trace")
    assert cli.succeeded
    rows = csv_rows("opt.csv")
    assert len(rows) == 1
    assert rows[0]["channel"] == "all"
    assert rows[0]["rate_floor"] == "0"

    trace = csv_lines("opt-trace.csv")
    assert trace[0].decode() == ",".join(TRACE_COLUMNS)
    assert len(trace) > 2

    cli.run("-c", "no-fairness.yml", "compare", "-s", "wifi-nodes=10", "-o", "compare.csv", "--replicates", "2")
    assert cli.succeeded
    rows = {r["method"]: r for r in csv_rows("compare.csv")}
    assert sorted(rows) == ["ETEP", "ETOP", "OTEP", "proposed"]
    assert all(r["replicates"] == "2" for r in rows.values())
    rate = {k: float(r["nr_rate"]) for k, r in rows.items()}
    assert rate["proposed"] >= max(rate["ETOP"], rate["OTEP"]) * (1 - 1e-8)
    assert min(rate["ETOP"], rate["OTEP"]) >= rate["ETEP"] * (1 - 1e-8)

    cli.run("optimize", "--trace")
    assert cli.failed
    assert "--trace requires --out" in cli.logged


def test_simulate(cli):
    cli.run("-c", cli.tests_path("sample-config1.yml"), "simulate", "-o", "sim.csv", "--trace")
    assert cli.succeeded
    assert "No allocator ran, no trace to write" in cli.logged
    assert not runez.to_path("sim-trace.csv").exists()
    rows = csv_rows("sim.csv")
    assert len(rows) == 1
    assert rows[0]["sweep_value"] == "3"
    assert 0 <= float(rows[0]["model_gap"]) < 0.25
    assert 0 < float(rows[0]["tau_l"]) < 1


def test_bad_invocations(cli, monkeypatch):
    cli.run("analyze", "-s", "foo=1")
    assert cli.failed
    assert "--sweep foo: unknown axis 'foo'" in cli.logged

    cli.run("analyze", "-s", "wifi-nodes")
    assert cli.failed
    assert "--sweep must be of the form axis=v1,v2" in cli.logged

    cli.run("-c", cli.tests_path("sample-invalid.yml"), "analyze")
    assert cli.failed
    assert "sample-invalid.yml:9 sweep/values[2]: 70 is out of range [1, 64]" in cli.logged

    cli.run("-c", "no-such-config.yml", "analyze")
    assert cli.failed
    assert "does not exist" in cli.logged

    cli.run("analyze", "-mfoo")
    assert cli.failed

    def broken(task, wifi, nru, spec):
        raise ParameterError("something is off")

    monkeypatch.setitem(RUNNERS, "analyze", broken)
    cli.run("analyze", "-mproposed", "-o", "broken.csv")
    assert cli.failed
    assert "1 row failed: something is off" in cli.logged
    assert csv_rows("broken.csv")[0]["status"] == "failed"

    def crashing(task, wifi, nru, spec):
        return 1 / 0

    monkeypatch.setitem(RUNNERS, "analyze", crashing)
    cli.run("analyze", "-mproposed", "-s", "wifi-nodes=5,10", "-o", "crashed.csv")
    assert cli.failed
    assert "2 rows failed: ZeroDivisionError: division by zero" in cli.logged
    rows = csv_rows("crashed.csv")
    assert [r["status"] for r in rows] == ["failed", "failed"]
    assert [r["sweep_value"] for r in rows] == ["5", "10"]


def test_diagnostics(cli):
    cli.run("diagnostics")
    assert cli.succeeded
    assert "no config" in cli.logged.stdout
    assert "default config:" in cli.logged.stdout
    assert "T_s_w" in cli.logged.stdout
    assert "T_d" in cli.logged.stdout

    cli.run("-c", cli.tests_path("sample-config1.yml"), "diagnostics")
    assert cli.succeeded
    assert "sample-config1.yml" in cli.logged.stdout
    assert "sample-config2.yml" in cli.logged.stdout


def test_emit_results(temp_folder):
    row = ResultRow("mcot", 8, "proposed", "0", Status.boundary, 1, 3, {"tau_w": 0.1234567891234, "nr_rate": 2e7}, {"tau_w": 0.0})
    path = emit_results([row], "sub/one.csv")
    lines = csv_lines(path)
    assert len(lines) == 3
    values = dict(zip(COLUMNS, lines[1].decode().split(",")))
    assert values["status"] == "boundary"
    assert values["tau_w"] == "0.123456789"
    assert values["tau_w_std"] == "0"
    assert values["nr_rate"] == "20000000"
    assert values["p_w"] == ""

    assert str(trace_path("sub/one.csv")) == "sub/one-trace.csv"

    with pytest.raises(ParameterError):
        emit_results([], "empty.csv")

    with pytest.raises(ParameterError):
        emit_results([row], "one.json", fmt="json")
