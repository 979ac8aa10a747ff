import json

import numpy as np
import pytest

from replikit import (
    ExperimentConfig,
    adversarial_biases,
    brick_spec,
    certs_to_test,
    default_partition,
    load_config,
    run_cert_experiment,
    run_experiment,
    run_list_experiment,
    save_spec,
    unit_grid_spec,
)
from replikit.partitions import SecludedProfile

COIN_LIST_CFG = ExperimentConfig(
    algorithm="coins", mode="list", dim=2, eps=0.1, delta=0.05,
    truth=(0.3, 0.55), runs=40, seed=0)


def test_config_validation():
    with pytest.raises(ValueError):
        ExperimentConfig(algorithm="dice", mode="list", dim=1, eps=0.1,
                         delta=0.1, truth=(0.5,))
    with pytest.raises(ValueError):
        ExperimentConfig(algorithm="coins", mode="adaptive-list", dim=1,
                         eps=0.1, delta=0.1, truth=(0.5,))
    with pytest.raises(ValueError):
        ExperimentConfig(algorithm="coins", mode="list", dim=2, eps=0.1,
                         delta=0.1, truth=(0.5,))  # truth length
    with pytest.raises(ValueError):
        ExperimentConfig(algorithm="coins", mode="list", dim=1, eps=0.1,
                         delta=0.1, truth=(1.5,))
    with pytest.raises(ValueError):
        ExperimentConfig(algorithm="coins", mode="list", dim=1, eps=0.1,
                         delta=0.1, truth=(0.5,), runs=0)


def test_config_json_roundtrip(tmp_path):
    d = COIN_LIST_CFG.to_json_dict()
    assert ExperimentConfig.from_json_dict(d) == COIN_LIST_CFG
    with pytest.raises(ValueError):
        ExperimentConfig.from_json_dict({**d, "surprise": 1})
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(d))
    assert load_config(p) == COIN_LIST_CFG


def test_list_experiment_basics():
    rep = run_list_experiment(COIN_LIST_CFG)
    assert rep.kind == "list"
    assert sum(o["count"] for o in rep.outputs) == 40
    assert rep.list_size == len(rep.outputs) <= 3
    assert rep.list_bound == 3
    assert rep.max_error <= 0.1
    assert rep.success_fraction == 1.0
    assert rep.hard_violations == []
    counts = [o["count"] for o in rep.outputs]
    assert counts == sorted(counts, reverse=True)
    # elapsed wall-clock is measured but kept out of the canonical report
    assert "elapsed_s" not in rep.to_json_dict()
    assert rep.elapsed_s > 0


def test_list_experiment_deterministic_across_threads():
    a = run_list_experiment(COIN_LIST_CFG, threads=1).to_json()
    b = run_list_experiment(COIN_LIST_CFG, threads=4).to_json()
    assert a == b


def test_single_run_list():
    cfg = ExperimentConfig(algorithm="coins", mode="list", dim=1, eps=0.1,
                           delta=0.1, truth=(0.42,), runs=1, seed=5)
    rep = run_list_experiment(cfg)
    assert rep.list_size == 1
    assert rep.outputs[0]["frequency"] == 1.0


def test_trivial_eps_bound_is_one():
    cfg = ExperimentConfig(algorithm="coins", mode="list", dim=2, eps=0.6,
                           delta=0.1, truth=(0.2, 0.9), runs=5, seed=1)
    rep = run_list_experiment(cfg)
    assert rep.list_bound == 1
    assert rep.list_size == 1
    assert rep.outputs[0]["id"] == "trivial"


def test_adaptive_list_bound_is_two_to_the_q():
    cfg = ExperimentConfig(algorithm="threshold", mode="adaptive-list", dim=2,
                           eps=0.3, delta=0.1, truth=(0.7, 0.9), nu=0.05,
                           runs=30, seed=2)
    rep = run_list_experiment(cfg)
    assert rep.list_bound == 4
    assert rep.list_size <= 4
    assert sum(o["count"] for o in rep.outputs) == 30


def test_threshold_list_experiment():
    cfg = ExperimentConfig(algorithm="threshold", mode="list", dim=2, eps=0.2,
                           delta=0.1, truth=(0.7, 0.9), nu=0.02, runs=30, seed=3)
    rep = run_list_experiment(cfg)
    assert rep.error_metric == "err_unif"
    assert rep.list_size <= 3
    assert rep.max_error <= 0.2
    assert "formula" in rep.slack
    # floor is in run counts: (1-delta)*R - 3*sqrt(R*delta*(1-delta))
    expect = 0.9 * 30 - 3 * np.sqrt(30 * 0.1 * 0.9)
    assert rep.slack["coverage_floor"] == pytest.approx(expect)


def test_hard_violation_on_forged_profile(tmp_path):
    # a grid profile claiming k=1 cannot cover a junction truth: two ids show
    # up and the report records a hard violation instead of hiding it
    path = tmp_path / "forged.json"
    save_spec(unit_grid_spec(1), path,
              profile=SecludedProfile(k=1, rho=0.5, probes=10, witness=(0.0,)))
    cfg = ExperimentConfig(algorithm="coins", mode="list", dim=1, eps=0.4,
                           delta=0.4, truth=(0.4,), runs=60, seed=0,
                           partition_spec=str(path))
    rep = run_list_experiment(cfg)
    assert rep.list_size == 2
    assert rep.hard_violations
    assert "bound" in rep.hard_violations[0]


def test_adversarial_biases_attain_list_bound():
    for d, expect in ((1, 2), (2, 3)):
        partition = default_partition(d)
        biases = adversarial_biases(d, partition, eps=0.1)
        assert all(b.shape == (d,) and b.min() > 0 and b.max() <= 1 for b in biases)
        sizes = []
        for i, b in enumerate(biases):
            cfg = ExperimentConfig(algorithm="coins", mode="list", dim=d,
                                   eps=0.1, delta=0.05, truth=tuple(b),
                                   runs=150, seed=7 + i)
            sizes.append(run_list_experiment(cfg).list_size)
        assert max(sizes) == expect


def test_adversarial_biases_need_verified_profile():
    from replikit import build_partition

    with pytest.raises(ValueError):
        adversarial_biases(2, build_partition(brick_spec()), eps=0.1)


def test_interior_bias_single_output():
    cfg = ExperimentConfig(algorithm="coins", mode="list", dim=2, eps=0.1,
                           delta=0.05, truth=(0.3, 0.55), runs=150, seed=11)
    assert run_list_experiment(cfg).list_size == 1


def test_cert_experiment_sweep_matches_predicted_bad():
    # truth on the full candidate grid: exactly the predicted certificates
    # fail unanimity, all others replicate
    truth = (14 * 0.2 / 9, 24 * 0.2 / 9)
    cfg = ExperimentConfig(algorithm="coins", mode="cert", dim=2, eps=0.2,
                           delta=0.25, truth=truth, seed=0, runs_per_cert=20)
    rep = run_cert_experiment(cfg)
    assert rep.kind == "cert"
    assert rep.ell == 3
    assert len(rep.cert_rows) == 8
    for row in rep.cert_rows:
        assert sum(row["counts"].values()) == 20
    assert rep.predicted_bad == [3, 8]
    not_replicating = [row["r"] for row in rep.cert_rows if not row["replicating"]]
    assert not_replicating == [3, 8]
    assert rep.replicating_count == 6
    assert rep.replicating_fraction == 0.75
    assert not rep.non_evidentiary


def test_cert_experiment_all_replicate_at_safe_truth():
    # both coordinates sit exactly halfway between adjacent grid candidates,
    # so no certificate has a boundary nearby; this seed gives a clean 8/8
    # (unanimity at K=20 is itself a small-probability event per certificate)
    truth = (8.5 * 0.4 / 9, 12.5 * 0.4 / 9)
    cfg = ExperimentConfig(algorithm="coins", mode="cert", dim=2, eps=0.2,
                           delta=0.25, truth=truth, seed=2, runs_per_cert=20)
    rep = run_cert_experiment(cfg)
    assert rep.predicted_bad == []
    assert rep.replicating_count == 8


def test_cert_experiment_k1_flagged():
    cfg = ExperimentConfig(algorithm="coins", mode="cert", dim=2, eps=0.2,
                           delta=0.25, truth=(0.4, 0.6), seed=0, runs_per_cert=1)
    rep = run_cert_experiment(cfg)
    assert rep.replicating_count == 8  # trivially unanimous
    assert rep.non_evidentiary


def test_cert_experiment_threads_deterministic():
    cfg = ExperimentConfig(algorithm="coins", mode="cert", dim=1, eps=0.2,
                           delta=0.5, truth=(0.45,), seed=4, runs_per_cert=10)
    assert run_cert_experiment(cfg, threads=1).to_json() == \
        run_cert_experiment(cfg, threads=3).to_json()


def test_threshold_cert_experiment():
    cfg = ExperimentConfig(algorithm="threshold", mode="cert", dim=1, eps=0.4,
                           delta=0.5, truth=(0.8,), nu=0.05, seed=3, cert_r=2,
                           runs_per_cert=20)
    rep = run_cert_experiment(cfg)
    assert rep.predicted_bad == [1]
    assert rep.replicating_count == 1
    assert rep.cert_rows[0]["unanimous"]


def test_threshold_adaptive_cert_experiment():
    cfg = ExperimentConfig(algorithm="threshold", mode="adaptive-cert", dim=1,
                           eps=0.4, delta=0.5, truth=(0.8,), nu=0.05, seed=3,
                           cert_r=2, runs_per_cert=8)
    rep = run_cert_experiment(cfg)
    assert rep.replicating_count == 1


def test_certs_to_test_selection():
    base = dict(algorithm="coins", mode="cert", dim=2, eps=0.2, delta=0.25,
                truth=(0.4, 0.6))
    assert certs_to_test(ExperimentConfig(**base, cert_r=5), 3) == [5]
    assert certs_to_test(ExperimentConfig(**base), 3) == list(range(1, 9))
    with pytest.raises(ValueError):
        certs_to_test(ExperimentConfig(**base), 20)
    picked = certs_to_test(ExperimentConfig(**base, sample_certs=6, seed=9), 20)
    assert len(picked) == 6
    assert picked == sorted(picked)
    assert all(1 <= r <= 2**20 for r in picked)
    # seeded: same config picks the same subset
    assert picked == certs_to_test(ExperimentConfig(**base, sample_certs=6, seed=9), 20)


def test_run_experiment_dispatch():
    assert run_experiment(COIN_LIST_CFG).kind == "list"
    cert_cfg = ExperimentConfig(algorithm="coins", mode="cert", dim=1, eps=0.2,
                                delta=0.5, truth=(0.45,), seed=0, runs_per_cert=5)
    assert run_experiment(cert_cfg).kind == "cert"
    with pytest.raises(ValueError):
        run_cert_experiment(COIN_LIST_CFG)
    with pytest.raises(ValueError):
        run_list_experiment(cert_cfg)


def test_report_save_and_csv(tmp_path):
    rep = run_list_experiment(COIN_LIST_CFG)
    out = tmp_path / "rep.json"
    rep.save(out)
    text = out.read_text()
    assert text.endswith("\n")
    assert json.loads(text)["schema"] == "replikit/replication-report/v1"
    csv = rep.to_csv()
    lines = csv.strip().splitlines()
    assert lines[0] == "id,count,frequency,error,value"
    assert len(lines) == 1 + rep.list_size

    cert_cfg = ExperimentConfig(algorithm="coins", mode="cert", dim=1, eps=0.2,
                                delta=0.5, truth=(0.45,), seed=0, runs_per_cert=5)
    cert_rep = run_cert_experiment(cert_cfg)
    cert_lines = cert_rep.to_csv().strip().splitlines()
    assert cert_lines[0].startswith("r,")
    assert len(cert_lines) == 1 + len(cert_rep.cert_rows)
    cert_rep.save_csv(tmp_path / "rows.csv")
    assert (tmp_path / "rows.csv").read_text() == cert_rep.to_csv()


def test_partition_spec_reference(tmp_path):
    # a config may pin the partition by file; dimension mismatch is an error
    path = tmp_path / "grid1.json"
    save_spec(unit_grid_spec(1), path,
              profile=SecludedProfile(k=2, rho=0.5, probes=100, witness=(0.0,)))
    cfg = ExperimentConfig(algorithm="coins", mode="list", dim=1, eps=0.1,
                           delta=0.1, truth=(0.42,), runs=10, seed=0,
                           partition_spec=str(path))
    assert run_list_experiment(cfg).list_size <= 2
    bad = ExperimentConfig(algorithm="coins", mode="list", dim=2, eps=0.1,
                           delta=0.1, truth=(0.4, 0.4), runs=5, seed=0,
                           partition_spec=str(path))
    with pytest.raises(ValueError):
        run_list_experiment(bad)
