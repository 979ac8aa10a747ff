"""Monte Carlo replication harness.

Runs an estimator many times over fresh samples (one derived seed per run),
groups the canonical outputs, and reports empirical list sizes, error rates,
and per-certificate agreement. Reports are plain data: a verification or
replication failure is recorded, not raised; only broken invariants (an
output list larger than the verified bound) count as hard violations.

Reports serialize to canonical JSON (sorted keys, two-space indent, trailing
newline) so repeated invocations with one config are byte-identical. Wall
clock is kept on the report object but stays out of the JSON unless asked
for, and aggregation is a deterministic fold in run-index order, so thread
counts cannot change the bytes either.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from ._validation import check_point, check_prob
from .coins import ListCoinEstimator, CertCoinEstimator, sample_coins
from .partitions import Partition, build_partition, default_partition, load_spec
from .rng import STREAM_CERT, STREAM_RUN, derive_seed, generator
from .rounding import CertString, cert_bad_set, clamp_unit, required_ell
from .sq import ThresholdLearner, err_unif, threshold_answers, threshold_sampler

REPORT_SCHEMA = "replikit/replication-report/v1"

ALGORITHMS = ("coins", "threshold")
LIST_MODES = ("list", "adaptive-list")
CERT_MODES = ("cert", "adaptive-cert")
MAX_SWEEP_ELL = 16


@dataclass
class ExperimentConfig:
    """Everything a replication experiment needs, JSON round-trippable.

    truth is the coin bias vector or the threshold box. partition_spec is
    an optional path to a saved partition spec (list modes only); the
    shipped default for the dimension is used otherwise. cert_r restricts
    a certificate experiment to one r instead of the exhaustive sweep,
    and sample_certs caps the sweep for ell > 16.
    """

    algorithm: str
    mode: str
    dim: int
    eps: float
    delta: float
    truth: tuple[float, ...]
    runs: int = 100
    seed: int = 0
    nu: float | None = None
    promise_c: float = 0.5
    unrestricted: bool = False
    partition_spec: str | None = None
    cert_r: int | None = None
    runs_per_cert: int = 20
    sample_certs: int | None = None

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.mode not in LIST_MODES + CERT_MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.algorithm == "coins" and self.mode not in ("list", "cert"):
            raise ValueError("coins support modes 'list' and 'cert'")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.runs < 1 or self.runs_per_cert < 1:
            raise ValueError("runs and runs_per_cert must be >= 1")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        check_prob(self.eps, "eps", open_zero=True)
        check_prob(self.delta, "delta", open_zero=True, open_one=True)
        truth = check_point(np.asarray(self.truth, dtype=float), self.dim, "truth")
        if np.any((truth < 0) | (truth > 1)):
            raise ValueError("truth must lie in [0,1]^dim")
        self.truth = tuple(float(v) for v in truth)

    def to_json_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_json_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in cls.__dataclass_fields__.values()}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        d = dict(d)
        if "truth" in d:
            d["truth"] = tuple(d["truth"])
        return cls(**d)


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return ExperimentConfig.from_json_dict(json.load(fh))


@dataclass
class ReplicationReport:
    """Aggregated outcome of one replication experiment.

    kind "list": outputs holds one row per distinct canonical id with its
    reconstructed value and frequency; list_size is the row count.
    kind "cert": cert_rows holds one row per tested certificate with its
    id histogram and the unanimity/accuracy verdict.
    elapsed_s is informational only and excluded from default JSON.
    """

    kind: str
    config: dict
    runs: int
    error_metric: str
    eps: float
    elapsed_s: float = 0.0
    n_samples_per_run: int | None = None
    outputs: list | None = None
    list_size: int | None = None
    list_bound: int | None = None
    max_error: float | None = None
    success_fraction: float | None = None
    slack: dict | None = None
    hard_violations: list = field(default_factory=list)
    ell: int | None = None
    runs_per_cert: int | None = None
    cert_rows: list | None = None
    replicating_count: int | None = None
    replicating_fraction: float | None = None
    predicted_bad: list | None = None
    non_evidentiary: bool | None = None

    def to_json_dict(self, include_timing: bool = False) -> dict:
        out = {"schema": REPORT_SCHEMA}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "elapsed_s" and not include_timing:
                continue
            if v is None:
                continue
            out[f.name] = v
        return out

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_json_dict(include_timing), sort_keys=True, indent=2) + "\n"

    def save(self, path, include_timing: bool = False):
        Path(path).write_text(self.to_json(include_timing), encoding="utf-8")

    def to_csv(self) -> str:
        """Frequency table (list kind) or agreement table (cert kind)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.kind == "list":
            w.writerow(["id", "count", "frequency", "error", "value"])
            for row in self.outputs:
                w.writerow([row["id"], row["count"], row["frequency"], row["error"],
                            " ".join(repr(v) for v in row["value"])])
        else:
            w.writerow(["r", "unanimous", "replicating", "predicted_bad",
                        "distinct_ids", "max_error"])
            bad = set(self.predicted_bad or [])
            for row in self.cert_rows:
                w.writerow([row["r"], row["unanimous"], row["replicating"],
                            row["r"] in bad, len(row["counts"]), row["max_error"]])
        return buf.getvalue()

    def save_csv(self, path):
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def _id_str(canonical_id) -> str:
    if isinstance(canonical_id, str):
        return canonical_id
    return ",".join(str(int(z)) for z in canonical_id)


def _resolve_partition(cfg: ExperimentConfig, dim: int) -> Partition:
    if cfg.partition_spec is None:
        return default_partition(dim)
    part = build_partition(*load_spec(cfg.partition_spec))
    if part.dim != dim:
        raise ValueError(
            f"partition spec {cfg.partition_spec!r} has dim {part.dim}, need {dim}"
        )
    return part


def _map_runs(fn, indices, threads: int):
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, indices))
    return [fn(i) for i in indices]


def _error_fn(cfg: ExperimentConfig):
    truth = np.asarray(cfg.truth)
    if cfg.algorithm == "coins":
        return "linf", lambda value: float(np.max(np.abs(value - truth)))
    return "err_unif", lambda value: err_unif(value, truth)


def _threshold_learner(cfg: ExperimentConfig, partition, cert) -> ThresholdLearner:
    return ThresholdLearner(
        eps=cfg.eps, delta=cfg.delta, mode=cfg.mode, promise_c=cfg.promise_c,
        cert=cert, partition=partition, nu=cfg.nu, unrestricted=cfg.unrestricted,
    )


def _list_run_fn(cfg: ExperimentConfig, partition):
    truth = np.asarray(cfg.truth)
    if cfg.algorithm == "coins":
        est = ListCoinEstimator(eps=cfg.eps, delta=cfg.delta, partition=partition)
        n = est.required_samples(cfg.dim)

        def run(i: int):
            seed_i = derive_seed(cfg.seed, i, STREAM_RUN)
            sample = sample_coins(truth, n, seed_i)
            fitted = ListCoinEstimator(
                eps=cfg.eps, delta=cfg.delta, partition=partition
            ).fit(sample.tosses)
            return fitted.canonical_id_, np.asarray(fitted.bias_)

        return run, n

    source = threshold_sampler(truth, cfg.seed)
    n = _threshold_learner(cfg, partition, None).required_samples(cfg.dim)

    def run(i: int):
        seed_i = derive_seed(cfg.seed, i, STREAM_RUN)
        fitted = _threshold_learner(cfg, partition, None).fit_source(
            source, cfg.dim, seed=seed_i
        )
        return fitted.canonical_id_, np.asarray(fitted.threshold_)

    return run, n


def _list_bound(cfg: ExperimentConfig, partition) -> int | None:
    q = cfg.dim + (1 if cfg.algorithm == "threshold" and cfg.unrestricted else 0)
    if cfg.mode == "adaptive-list":
        return 1 << q
    if cfg.algorithm == "coins" and cfg.eps >= 0.5:
        return 1
    if partition is not None and partition.profile is not None:
        return partition.profile.k
    return None


def run_list_experiment(cfg: ExperimentConfig, threads: int = 1) -> ReplicationReport:
    """R fresh-sample runs of a list-mode estimator, grouped by canonical id."""
    if cfg.mode not in LIST_MODES:
        raise ValueError(f"run_list_experiment needs a list mode, got {cfg.mode!r}")
    q = cfg.dim + (1 if cfg.algorithm == "threshold" and cfg.unrestricted else 0)
    partition = None
    if cfg.mode == "list" and not (cfg.algorithm == "coins" and cfg.eps >= 0.5):
        partition = _resolve_partition(cfg, q)
    metric_name, metric = _error_fn(cfg)
    run, n_samples = _list_run_fn(cfg, partition)

    t0 = time.monotonic()
    results = _map_runs(run, range(cfg.runs), threads)
    elapsed = time.monotonic() - t0

    groups: dict[str, dict] = {}
    max_error = 0.0
    successes = 0
    for canonical_id, value in results:
        err = metric(value)
        max_error = max(max_error, err)
        if err <= cfg.eps:
            successes += 1
        key = _id_str(canonical_id)
        row = groups.get(key)
        if row is None:
            groups[key] = {"id": key, "count": 1,
                           "value": [float(v) for v in value], "error": err}
        else:
            row["count"] += 1
            if row["value"] != [float(v) for v in value]:
                raise AssertionError(f"canonical id {key} maps to two values")
    outputs = sorted(groups.values(), key=lambda r: (-r["count"], r["id"]))
    for row in outputs:
        row["frequency"] = row["count"] / cfg.runs

    bound = _list_bound(cfg, partition)
    hard = []
    if bound is not None and len(outputs) > bound:
        hard.append(
            f"observed {len(outputs)} distinct outputs, bound is {bound}"
        )
    sigma = math.sqrt(cfg.runs * cfg.delta * (1.0 - cfg.delta))
    slack = {
        "coverage_target": (1.0 - cfg.delta) * cfg.runs,
        "sigma": sigma,
        "coverage_floor": (1.0 - cfg.delta) * cfg.runs - 3.0 * sigma,
        "formula": "(1-delta)*R - 3*sqrt(R*delta*(1-delta))",
    }
    return ReplicationReport(
        kind="list",
        config=cfg.to_json_dict(),
        runs=cfg.runs,
        error_metric=metric_name,
        eps=cfg.eps,
        elapsed_s=elapsed,
        n_samples_per_run=n_samples,
        outputs=outputs,
        list_size=len(outputs),
        list_bound=bound,
        max_error=max_error,
        success_fraction=successes / cfg.runs,
        slack=slack,
        hard_violations=hard,
    )


def _cert_run_fn(cfg: ExperimentConfig, ell: int):
    truth = np.asarray(cfg.truth)
    if cfg.algorithm == "coins":
        n = CertCoinEstimator(
            eps=cfg.eps, delta=cfg.delta, r=1, ell=ell
        ).required_samples(cfg.dim)

        def run(r: int, seed_i: int):
            sample = sample_coins(truth, n, seed_i)
            fitted = CertCoinEstimator(
                eps=cfg.eps, delta=cfg.delta, r=r, ell=ell
            ).fit(sample.tosses)
            return fitted.canonical_id_, np.asarray(fitted.bias_)

        return run, n

    source = threshold_sampler(truth, cfg.seed)
    n = _threshold_learner(cfg, None, 1).required_samples(cfg.dim)

    def run(r: int, seed_i: int):
        fitted = _threshold_learner(cfg, None, r).fit_source(source, cfg.dim, seed=seed_i)
        return fitted.canonical_id_, np.asarray(fitted.threshold_)

    return run, n


def _predicted_bad_certs(cfg: ExperimentConfig, ell: int) -> list[int]:
    if cfg.algorithm == "coins":
        center = np.asarray(cfg.truth)
        eps0 = cfg.eps / ((1 << ell) + 1)
    else:
        center = threshold_answers(np.asarray(cfg.truth))
        learner = _threshold_learner(cfg, None, 1)
        eps0 = learner.resolve_nu(cfg.dim) / ((1 << ell) + 1)
        if cfg.unrestricted:
            vol = float(np.prod(cfg.truth))
            center = np.concatenate([[vol], center])
    return sorted(cert_bad_set(center, eps0, ell))


def certs_to_test(cfg: ExperimentConfig, ell: int) -> list[int]:
    if cfg.cert_r is not None:
        CertString(ell=ell, r=cfg.cert_r)  # validates the range
        return [cfg.cert_r]
    if ell <= MAX_SWEEP_ELL:
        return list(range(1, (1 << ell) + 1))
    if cfg.sample_certs is None:
        raise ValueError(
            f"ell={ell} is too large for an exhaustive sweep; set sample_certs "
            "or cert_r"
        )
    rng = generator(derive_seed(cfg.seed, 0, STREAM_CERT))
    count = min(cfg.sample_certs, 1 << ell)
    rs = rng.choice(1 << ell, size=count, replace=False) + 1
    return sorted(int(r) for r in rs)


def run_cert_experiment(cfg: ExperimentConfig, threads: int = 1) -> ReplicationReport:
    """K fresh-sample runs per certificate; a certificate replicates when
    all K runs agree on one canonical id whose value is within eps."""
    if cfg.mode not in CERT_MODES:
        raise ValueError(f"run_cert_experiment needs a cert mode, got {cfg.mode!r}")
    q = cfg.dim + (1 if cfg.algorithm == "threshold" and cfg.unrestricted else 0)
    ell = required_ell(q, cfg.delta)
    rs = certs_to_test(cfg, ell)
    metric_name, metric = _error_fn(cfg)
    run, n_samples = _cert_run_fn(cfg, ell)
    K = cfg.runs_per_cert

    def one(task):
        j, i = task
        seed_i = derive_seed(cfg.seed, j * K + i, STREAM_RUN)
        return run(rs[j], seed_i)

    t0 = time.monotonic()
    results = _map_runs(one, list(itertools.product(range(len(rs)), range(K))), threads)
    elapsed = time.monotonic() - t0

    rows = []
    replicating = 0
    for j, r in enumerate(rs):
        counts: dict[str, int] = {}
        max_error = 0.0
        value_ok = True
        for i in range(K):
            canonical_id, value = results[j * K + i]
            key = _id_str(canonical_id)
            counts[key] = counts.get(key, 0) + 1
            err = metric(value)
            max_error = max(max_error, err)
            if err > cfg.eps:
                value_ok = False
        unanimous = len(counts) == 1
        ok = unanimous and value_ok
        replicating += ok
        rows.append({
            "r": r,
            "counts": dict(sorted(counts.items())),
            "unanimous": unanimous,
            "max_error": max_error,
            "replicating": ok,
        })

    n_certs = len(rs)
    sigma = math.sqrt(n_certs * cfg.delta * (1.0 - cfg.delta))
    slack = {
        "expected_replicating": (1.0 - cfg.delta) * n_certs,
        "sigma": sigma,
        "floor": (1.0 - cfg.delta) * n_certs - 3.0 * sigma,
        "formula": "(1-delta)*n_certs - 3*sqrt(n_certs*delta*(1-delta))",
    }
    return ReplicationReport(
        kind="cert",
        config=cfg.to_json_dict(),
        runs=n_certs * K,
        error_metric=metric_name,
        eps=cfg.eps,
        elapsed_s=elapsed,
        n_samples_per_run=n_samples,
        slack=slack,
        ell=ell,
        runs_per_cert=K,
        cert_rows=rows,
        replicating_count=replicating,
        replicating_fraction=replicating / n_certs,
        predicted_bad=_predicted_bad_certs(cfg, ell),
        non_evidentiary=K < 5,
    )


def run_experiment(cfg: ExperimentConfig, threads: int = 1) -> ReplicationReport:
    if cfg.mode in LIST_MODES:
        return run_list_experiment(cfg, threads)
    return run_cert_experiment(cfg, threads)


def _normalize_junction(partition: Partition, point: np.ndarray) -> np.ndarray:
    """Translate a point by the anchor lattice so every coordinate lands in
    (0, 1]; lattice translations preserve the local member structure, and
    the positive window keeps eps-scaled biases strictly above 0 so
    empirical noise can reach every adjacent member."""
    B = partition.spec.shift_matrix()
    d = partition.dim
    z = np.zeros(d)
    q = np.array(point, dtype=float)
    for i in range(d - 1, -1, -1):
        shifted = point[i] - float(B[i, i + 1:] @ z[i + 1:])
        z[i] = math.ceil(shifted) - 1
        q[i] = shifted - z[i]
    return q


def adversarial_biases(dim: int, partition: Partition | None = None,
                       eps: float = 0.1) -> list[np.ndarray]:
    """Bias vectors placed at high-multiplicity points of the eps-scaled
    partition (cube-corner junctions and the verified witness), to stress
    the list-size bound. Requires a verified partition."""
    check_prob(eps, "eps", open_zero=True)
    part = partition or default_partition(dim)
    if part.dim != dim:
        raise ValueError(f"partition dim {part.dim} != {dim}")
    if part.profile is None:
        raise ValueError("adversarial_biases needs a verified partition")
    points = [np.asarray(part.profile.witness, dtype=float)]
    for c in itertools.product((0.0, 1.0), repeat=dim):
        points.append(np.array(c))
    out = []
    seen = set()
    for p in points:
        b = clamp_unit(eps * _normalize_junction(part, p))
        key = tuple(round(float(v), 12) for v in b)
        if key not in seen:
            seen.add(key)
            out.append(b)
    return out
