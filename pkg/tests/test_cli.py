import json
import subprocess
import sys

CLI = [sys.executable, "-m", "replikit.cli"]


def run_cli(*args, check=True):
    proc = subprocess.run(CLI + list(args), capture_output=True, text=True)
    if check and proc.returncode != 0:
        raise AssertionError(f"cli failed ({proc.returncode}): {proc.stderr}")
    return proc


def test_coins_list_byte_identical(tmp_path):
    args = ["coins", "estimate-list", "--dim", "2", "--eps", "0.1",
            "--delta", "0.05", "--bias", "0.3,0.55", "--runs", "25", "--seed", "7"]
    a = run_cli(*args, "--out", str(tmp_path / "a.json"))
    b = run_cli(*args, "--out", str(tmp_path / "b.json"))
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert a.stdout == b.stdout
    doc = json.loads((tmp_path / "a.json").read_text())
    assert doc["kind"] == "list"
    assert doc["list_size"] <= 3
    assert sum(o["count"] for o in doc["outputs"]) == 25


def test_coins_list_stdout_when_no_out():
    proc = run_cli("coins", "estimate-list", "--dim", "1", "--eps", "0.5",
                   "--delta", "0.1", "--bias", "0.4", "--runs", "3", "--seed", "0")
    doc = json.loads(proc.stdout)
    assert doc["outputs"][0]["id"] == "trivial"


def test_coins_cert_sweep(tmp_path):
    out = tmp_path / "cert.json"
    run_cli("coins", "estimate-cert", "--dim", "2", "--eps", "0.2",
            "--delta", "0.25", "--bias", "0.31111111111111112,0.53333333333333333",
            "--runs", "10", "--seed", "0", "--out", str(out))
    doc = json.loads(out.read_text())
    assert doc["ell"] == 3
    assert len(doc["cert_rows"]) == 8
    assert doc["predicted_bad"] == [3, 8]


def test_coins_cert_single_certificate():
    proc = run_cli("coins", "estimate-cert", "--dim", "1", "--eps", "0.2",
                   "--delta", "0.5", "--bias", "0.45", "--cert", "2",
                   "--runs", "6", "--seed", "1")
    doc = json.loads(proc.stdout)
    assert [row["r"] for row in doc["cert_rows"]] == [2]


def test_coins_cert_bad_ell_exits_two():
    proc = run_cli("coins", "estimate-cert", "--dim", "2", "--eps", "0.2",
                   "--delta", "0.25", "--bias", "0.4,0.6", "--ell", "5",
                   "--runs", "2", check=False)
    assert proc.returncode == 2
    assert "error:" in proc.stderr


def test_usage_error_exits_two():
    proc = run_cli("coins", "estimate-list", "--dim", "2", "--eps", "0.1",
                   "--delta", "0.05", "--bias", "0.9", "--runs", "2", check=False)
    assert proc.returncode == 2  # bias length != dim


def test_hard_violation_exits_one(tmp_path):
    from replikit import save_spec, unit_grid_spec
    from replikit.partitions import SecludedProfile

    spec = tmp_path / "forged.json"
    save_spec(unit_grid_spec(1), spec,
              profile=SecludedProfile(k=1, rho=0.5, probes=10, witness=(0.0,)))
    proc = run_cli("coins", "estimate-list", "--dim", "1", "--eps", "0.4",
                   "--delta", "0.4", "--bias", "0.4", "--runs", "60",
                   "--seed", "0", "--spec", str(spec),
                   "--out", str(tmp_path / "r.json"), check=False)
    assert proc.returncode == 1
    assert "bound" in proc.stderr


def test_config_file_with_flag_override(tmp_path):
    cfg = {"algorithm": "coins", "mode": "list", "dim": 2, "eps": 0.1,
           "delta": 0.05, "truth": [0.3, 0.55], "runs": 10, "seed": 3}
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    base = run_cli("coins", "estimate-list", "--config", str(path))
    assert json.loads(base.stdout)["runs"] == 10
    bumped = run_cli("coins", "estimate-list", "--config", str(path), "--runs", "4")
    assert json.loads(bumped.stdout)["runs"] == 4


def test_learn_threshold_list_and_cert(tmp_path):
    out = tmp_path / "thr.json"
    run_cli("learn", "threshold", "--dim", "2", "--eps", "0.2", "--delta", "0.1",
            "--truth", "0.7,0.9", "--mode", "list", "--nu", "0.02",
            "--runs", "20", "--seed", "5", "--out", str(out))
    doc = json.loads(out.read_text())
    assert doc["error_metric"] == "err_unif"
    assert doc["list_size"] <= 3

    proc = run_cli("learn", "threshold", "--dim", "1", "--eps", "0.4",
                   "--delta", "0.5", "--truth", "0.8", "--mode", "cert",
                   "--nu", "0.05", "--cert", "2", "--runs", "10", "--seed", "3")
    doc = json.loads(proc.stdout)
    assert doc["kind"] == "cert"
    assert doc["cert_rows"][0]["replicating"]


def test_partition_verify_and_search(tmp_path):
    proc = run_cli("partition", "verify", "--dim", "2", "--probes", "5000", "--seed", "2")
    doc = json.loads(proc.stdout)
    assert doc["schema"] == "replikit/verification-report/v1"
    assert doc["passed"] is True
    assert doc["k"] == 3

    # the 1/3-shift brick fails at the brick-wall parameters
    from fractions import Fraction

    from replikit import brick_spec, save_spec

    spec = tmp_path / "third.json"
    save_spec(brick_spec(Fraction(1, 3)), spec)
    bad = run_cli("partition", "verify", "--spec", str(spec), "--radius", "0.25",
                  "--k", "3", "--probes", "5000", "--seed", "2")
    doc = json.loads(bad.stdout)
    assert doc["passed"] is False
    assert doc["violations"]

    search = run_cli("partition", "search", "--dim", "2", "--budget", "8", "--seed", "0")
    sdoc = json.loads(search.stdout)
    assert sdoc["schema"] == "replikit/search-report/v1"
    assert sdoc["candidates_scored"] >= 1
    assert sdoc["passed"] is True


def test_partition_verify_needs_exactly_one_source():
    assert run_cli("partition", "verify", check=False).returncode == 2
    assert run_cli("partition", "verify", "--dim", "1", "--spec", "x.json",
                   check=False).returncode == 2


def test_report_show_and_csv(tmp_path):
    rep = tmp_path / "rep.json"
    run_cli("coins", "estimate-list", "--dim", "2", "--eps", "0.1",
            "--delta", "0.05", "--bias", "0.3,0.55", "--runs", "10",
            "--seed", "0", "--out", str(rep))
    shown = run_cli("report", "show", "--in", str(rep))
    assert "list" in shown.stdout
    assert shown.stdout == run_cli("report", "show", "--in", str(rep)).stdout
    csv = tmp_path / "rep.csv"
    run_cli("report", "show", "--in", str(rep), "--csv", str(csv))
    assert csv.read_text().startswith("id,count,frequency,error,value")

    ver = tmp_path / "ver.json"
    run_cli("partition", "verify", "--dim", "1", "--probes", "2000",
            "--seed", "0", "--out", str(ver))
    vshown = run_cli("report", "show", "--in", str(ver))
    assert "pass" in vshown.stdout.lower()
    # CSV export only applies to replication reports
    assert run_cli("report", "show", "--in", str(ver), "--csv",
                   str(tmp_path / "x.csv"), check=False).returncode == 2


def test_missing_file_is_clean_error():
    proc = run_cli("report", "show", "--in", "/nonexistent/nope.json", check=False)
    assert proc.returncode == 2
    assert proc.stderr.startswith("error:")
