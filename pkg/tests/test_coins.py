import numpy as np
import pytest

from replikit import (
    TRIVIAL_ID,
    CertCoinEstimator,
    ListCoinEstimator,
    default_partition,
    hoeffding_n,
    reconstruct_cert_value,
    reconstruct_list_value,
    sample_coins,
    tv_upper_bound,
)


def test_hoeffding_n_frozen_values():
    assert hoeffding_n(0.025, 0.025) == 3506
    assert hoeffding_n(0.0125, 0.025) == 14023
    assert hoeffding_n(0.5, 0.999) >= 1


def test_hoeffding_n_scaling():
    n1 = hoeffding_n(0.01, 0.05)
    n2 = hoeffding_n(0.02, 0.05)
    # doubling eps0 quarters n (up to the ceiling)
    assert abs(n1 - 4 * n2) <= 4
    assert hoeffding_n(0.01, 0.025) > n1


def test_sample_coins_deterministic():
    s1 = sample_coins([0.3, 0.7], 500, seed=42)
    s2 = sample_coins([0.3, 0.7], 500, seed=42)
    assert np.array_equal(s1.tosses, s2.tosses)
    assert not np.array_equal(s1.tosses, sample_coins([0.3, 0.7], 500, seed=43).tosses)
    assert np.array_equal(s1.heads, s1.tosses.sum(axis=0))
    assert np.allclose(s1.empirical, s1.heads / 500)


def test_sample_coins_degenerate_biases():
    s = sample_coins([0.0, 1.0], 200, seed=0)
    assert s.heads[0] == 0
    assert s.heads[1] == 200


def test_sample_coins_mean_concentrates():
    s = sample_coins([0.25], 40_000, seed=7)
    sigma = np.sqrt(0.25 * 0.75 / 40_000)
    assert abs(s.empirical[0] - 0.25) < 3 * sigma


def test_list_estimator_exact_center():
    # (0.3, 0.55) is a center of the 0.1-scaled brick partition, so the
    # estimate equals the truth exactly whenever the empirical lands in
    # the same cube
    est = ListCoinEstimator(eps=0.1, delta=0.05)
    n = est.required_samples(2)
    assert n == 3506
    X = sample_coins([0.3, 0.55], n, seed=1).tosses
    est.fit(X)
    assert np.allclose(est.bias_, [0.3, 0.55], atol=1e-12)
    assert est.outcome_.kind == "list"
    assert est.outcome_.canonical_id == est.canonical_id_


def test_list_estimator_trivial_path():
    est = ListCoinEstimator(eps=0.5, delta=0.05)
    assert est.required_samples(3) == 1
    est.fit(np.zeros((1, 3), dtype=int))
    assert est.canonical_id_ == TRIVIAL_ID
    assert np.allclose(est.bias_, 0.5)


def test_list_estimator_accuracy_across_runs():
    est = ListCoinEstimator(eps=0.1, delta=0.05)
    truth = np.array([0.42, 0.66])
    n = est.required_samples(2)
    ids = set()
    for seed in range(30):
        X = sample_coins(truth, n, seed=seed).tosses
        est.fit(X)
        assert np.max(np.abs(est.bias_ - truth)) <= 0.1
        ids.add(est.canonical_id_)
    assert len(ids) <= 3


def test_list_estimator_warns_when_undersampled():
    est = ListCoinEstimator(eps=0.1, delta=0.05)
    X = sample_coins([0.5, 0.5], 50, seed=0).tosses
    with pytest.warns(RuntimeWarning):
        est.fit(X)


def test_list_value_reconstructable():
    est = ListCoinEstimator(eps=0.1, delta=0.05)
    X = sample_coins([0.42, 0.66], est.required_samples(2), seed=5).tosses
    est.fit(X)
    rebuilt = reconstruct_list_value(est.canonical_id_, 0.1, est.partition_, 2)
    assert np.allclose(rebuilt, est.bias_, atol=1e-15)
    assert np.allclose(reconstruct_list_value(TRIVIAL_ID, 0.5, est.partition_, 2), 0.5)


def test_cert_estimator_fixed_good_certificate():
    # truth (0.3111..., 0.5333...) sits exactly on the full candidate grid;
    # r=5 has no decision boundary within eps0 of either coordinate
    est = CertCoinEstimator(eps=0.2, delta=0.25, r=5)
    assert est.certificate(2).ell == 3
    n = est.required_samples(2)
    truth = [14 * 0.2 / 9, 24 * 0.2 / 9]
    ids = set()
    for seed in range(20):
        est.fit(sample_coins(truth, n, seed=seed).tosses)
        assert np.max(np.abs(est.bias_ - truth)) <= 0.2
        ids.add(est.canonical_id_)
    assert len(ids) == 1


def test_cert_estimator_value_reconstructable():
    est = CertCoinEstimator(eps=0.2, delta=0.25, r=5)
    est.fit(sample_coins([0.31, 0.53], est.required_samples(2), seed=3).tosses)
    rebuilt = reconstruct_cert_value(est.canonical_id_, est.eps0_)
    assert np.allclose(rebuilt, est.bias_, atol=1e-15)


def test_cert_estimator_ell_mismatch():
    est = CertCoinEstimator(eps=0.2, delta=0.25, r=1, ell=2)
    with pytest.raises(ValueError):
        est.fit(np.zeros((10, 2), dtype=int))
    # matching override is accepted
    ok = CertCoinEstimator(eps=0.2, delta=0.25, r=1, ell=3)
    ok.fit(np.zeros((ok.required_samples(2), 2), dtype=int))


def test_toss_matrix_validation():
    est = ListCoinEstimator(eps=0.1, delta=0.05)
    with pytest.raises(ValueError):
        est.fit(np.array([[0, 2]]))
    with pytest.raises(ValueError):
        est.fit(np.zeros(5))


def test_tv_upper_bound_examples():
    assert tv_upper_bound([0.5, 0.5, 0.5], [0.51, 0.5, 0.5], 10) == pytest.approx(0.3)
    assert tv_upper_bound([0.2, 0.9], [0.2, 0.9], 1000) == 0.0
    assert tv_upper_bound([0.1], [0.9], 10**9) == 1.0


def test_tv_upper_bound_random_instances():
    rng = np.random.default_rng(21)
    for _ in range(100):
        d = int(rng.integers(1, 5))
        a = rng.uniform(0, 1, size=d)
        b = rng.uniform(0, 1, size=d)
        n = int(rng.integers(0, 10**6))
        expect = min(1.0, n * d * float(np.max(np.abs(b - a))))
        assert tv_upper_bound(a, b, n) == expect


def test_hoeffding_oracle_simulation():
    # at n = hoeffding_n(eps0, delta0) the empirical mean misses by more
    # than eps0 with frequency well below delta0
    eps0, delta0 = 0.05, 0.1
    n = hoeffding_n(eps0, delta0)
    misses = 0
    trials = 300
    for seed in range(trials):
        s = sample_coins([0.37], n, seed=seed)
        if abs(s.empirical[0] - 0.37) > eps0:
            misses += 1
    assert misses / trials < delta0


def test_partition_dim_mismatch():
    est = ListCoinEstimator(eps=0.1, delta=0.05, partition=default_partition(1))
    with pytest.raises(ValueError):
        est.fit(np.zeros((5, 2), dtype=int))
