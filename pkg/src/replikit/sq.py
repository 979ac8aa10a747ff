"""Replicable statistical-query learning, with a threshold-box instantiation.

An SQ program asks for expectations of bounded example statistics and turns
the answers into a hypothesis. Replicability comes entirely from
canonicalizing the empirical answer vector before postprocessing:

* nonadaptive programs round the whole answer vector at once, either in a
  scaled secluded partition (list of at most q+1 hypotheses for q queries)
  or on a certificate grid (one shared hypothesis per good certificate);
* adaptive programs round each answer as it arrives, paying one fresh
  certificate block (or a factor-2 list blowup) per round.

The flagship program estimates an axis-aligned threshold box over uniform
examples on [0,1]^d from the moment queries E[y * x_i] = (t_i / 2) * prod(t).
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_point, check_points, check_prob, check_positive
from .coins import hoeffding_n
from .partitions import Partition, default_partition
from .rng import STREAM_EXAMPLES, derive_seed, generator
from .rounding import (
    CertString,
    clamp_unit,
    grid_cert_indices,
    required_ell,
    scaled_list_round,
    scaled_member,
)

# A query maps an example batch (X, y) to one bounded statistic per example.
QueryFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ExampleSource(Protocol):
    """Anything that can produce labeled example batches deterministically."""

    def sample(self, n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
        ...


@dataclass(frozen=True, eq=False)
class SQProgram:
    """Statistical-query program: queries plus a postprocessing map.

    Nonadaptive programs fix all queries up front; adaptive programs
    produce query j from the rounded answers to queries 0..j-1.
    postprocess maps the full rounded answer vector to the hypothesis
    payload and must be deterministic and total.
    """

    n_queries: int
    postprocess: Callable[[np.ndarray], np.ndarray]
    queries: tuple[QueryFn, ...] | None = None
    query_factory: Callable[[int, np.ndarray], QueryFn] | None = None

    def __post_init__(self):
        if self.n_queries < 1:
            raise ValueError("n_queries must be >= 1")
        if (self.queries is None) == (self.query_factory is None):
            raise ValueError("provide exactly one of queries / query_factory")
        if self.queries is not None and len(self.queries) != self.n_queries:
            raise ValueError("len(queries) != n_queries")

    @property
    def adaptive(self) -> bool:
        return self.query_factory is not None

    def query(self, j: int, rounded_so_far: np.ndarray) -> QueryFn:
        """Query for round j; nonadaptive programs ignore earlier answers."""
        if not 0 <= j < self.n_queries:
            raise IndexError(f"round {j} out of range for {self.n_queries} queries")
        if self.queries is not None:
            return self.queries[j]
        return self.query_factory(j, rounded_so_far)

    @staticmethod
    def nonadaptive(queries, postprocess) -> "SQProgram":
        qs = tuple(queries)
        return SQProgram(n_queries=len(qs), postprocess=postprocess, queries=qs)

    @staticmethod
    def make_adaptive(n_queries, query_factory, postprocess) -> "SQProgram":
        return SQProgram(
            n_queries=n_queries, postprocess=postprocess, query_factory=query_factory
        )


def evaluate_query(q: QueryFn, X: np.ndarray, y: np.ndarray) -> float:
    """Empirical mean of one query over a batch, with range validation."""
    vals = np.asarray(q(X, y), dtype=float)
    if vals.shape != (X.shape[0],):
        raise ValueError("query must return one value per example")
    lo, hi = float(vals.min()), float(vals.max())
    if lo < -1e-12 or hi > 1 + 1e-12:
        raise ValueError(f"query values outside [0,1]: range [{lo}, {hi}]")
    return float(vals.mean())


def batch_sq_answers(queries, X, y) -> np.ndarray:
    """Answer vector for nonadaptive queries on an already-drawn batch."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    queries = tuple(queries)
    if not queries:
        raise ValueError("need at least one query")
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, d) with matching label vector y")
    if X.shape[0] < 1:
        raise ValueError("need at least one example")
    return np.array([evaluate_query(q, X, y) for q in queries])


def empirical_sq_answers(queries, n: int, source: ExampleSource, seed: int = 0) -> np.ndarray:
    """Empirical answers over one shared batch of n examples from source."""
    if n < 1:
        raise ValueError("n must be >= 1")
    X, y = source.sample(int(n), seed)
    return batch_sq_answers(queries, X, y)


@dataclass(frozen=True, eq=False)
class Hypothesis:
    """Canonical learning outcome. Equal canonical ids imply identical
    rounded answers and hence identical payloads."""

    payload: np.ndarray
    canonical_id: tuple
    kind: str  # list | cert | adaptive-cert | adaptive-list
    rounded_answers: np.ndarray
    nu: float


# -- sample-size formulas ----------------------------------------------------


def sq_list_samples(q: int, nu: float, delta: float, rho: float) -> int:
    """Shared-batch size for nonadaptive list rounding at answer scale nu."""
    return hoeffding_n(rho * nu, delta / q)


def sq_cert_samples(q: int, nu: float, delta: float) -> int:
    """Shared-batch size for nonadaptive certificate rounding."""
    ell = required_ell(q, delta)
    return hoeffding_n(nu / ((1 << ell) + 1), delta / q)


def sq_adaptive_cert_samples(q: int, nu: float, delta: float) -> int:
    """Per-round batch size; an adaptive run consumes q of these blocks."""
    return sq_cert_samples(q, nu, delta)


def sq_adaptive_list_samples(q: int, nu: float, delta: float) -> int:
    """Per-round batch size; an adaptive run consumes q of these blocks."""
    return hoeffding_n(nu / 2.0, delta / q)


# -- learners ----------------------------------------------------------------

_GRID1 = default_partition(1)


def _check_nu_delta(nu: float, delta: float):
    check_positive(nu, "nu")
    check_prob(delta, "delta", open_zero=True, open_one=True)


def _require_nonadaptive(program: SQProgram, op: str):
    if program.adaptive:
        raise ValueError(f"{op} requires a nonadaptive program")


def _list_rho(partition: Partition, q: int) -> float:
    if partition.profile is None:
        warnings.warn(
            "partition has no verified seclusion profile; assuming rho = 1/(2q) "
            "and no list-size guarantee",
            RuntimeWarning,
            stacklevel=3,
        )
        return 1.0 / (2 * q)
    return partition.profile.rho


def _list_core(program: SQProgram, nu: float, answers: np.ndarray,
               partition: Partition) -> Hypothesis:
    rounded = scaled_list_round(answers, nu, partition)
    member = scaled_member(answers, nu, partition)
    return Hypothesis(
        payload=program.postprocess(rounded),
        canonical_id=member,
        kind="list",
        rounded_answers=rounded,
        nu=nu,
    )


def _cert_core(program: SQProgram, nu: float, delta: float, cert: CertString,
               answers: np.ndarray) -> Hypothesis:
    need = required_ell(program.n_queries, delta)
    if cert.ell != need:
        raise ValueError(
            f"cert.ell={cert.ell} but q={program.n_queries}, delta={delta} need {need}"
        )
    eps0 = nu / ((1 << need) + 1)
    ks = grid_cert_indices(answers, eps0, cert)
    rounded = ks.astype(float) * (2.0 * eps0)
    return Hypothesis(
        payload=program.postprocess(rounded),
        canonical_id=tuple(int(k) for k in ks),
        kind="cert",
        rounded_answers=rounded,
        nu=nu,
    )


def _adaptive_answer(program: SQProgram, j: int, rounded: np.ndarray,
                     block: tuple[np.ndarray, np.ndarray]) -> float:
    qfn = program.query(j, rounded[:j].copy())
    return evaluate_query(qfn, *block)


def _adaptive_cert_core(program: SQProgram, nu: float, delta: float, certs,
                        blocks) -> Hypothesis:
    q = program.n_queries
    certs = list(certs)
    if len(certs) != q:
        raise ValueError(f"need {q} certificate blocks, got {len(certs)}")
    need = required_ell(q, delta)
    for c in certs:
        if c.ell != need:
            raise ValueError(f"every certificate block needs ell={need}, got {c.ell}")
    eps0 = nu / ((1 << need) + 1)
    rounded = np.zeros(q)
    ks_all = []
    for j in range(q):
        a = _adaptive_answer(program, j, rounded, blocks[j])
        k = int(grid_cert_indices(np.array([a]), eps0, certs[j])[0])
        ks_all.append(k)
        rounded[j] = k * (2.0 * eps0)
    return Hypothesis(
        payload=program.postprocess(rounded),
        canonical_id=tuple(ks_all),
        kind="adaptive-cert",
        rounded_answers=rounded,
        nu=nu,
    )


def _adaptive_list_core(program: SQProgram, nu: float, blocks) -> Hypothesis:
    q = program.n_queries
    rounded = np.zeros(q)
    ids = []
    for j in range(q):
        a = _adaptive_answer(program, j, rounded, blocks[j])
        rounded[j] = float(scaled_list_round(np.array([a]), nu, _GRID1)[0])
        ids.append(scaled_member(np.array([a]), nu, _GRID1)[0])
    return Hypothesis(
        payload=program.postprocess(rounded),
        canonical_id=tuple(ids),
        kind="adaptive-list",
        rounded_answers=rounded,
        nu=nu,
    )


def split_blocks(X, y, rounds: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Cut one batch into equal per-round blocks (fresh samples per round)."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if rounds < 1 or X.shape[0] % rounds != 0:
        raise ValueError(f"{X.shape[0]} examples do not split into {rounds} equal blocks")
    per = X.shape[0] // rounds
    return [(X[j * per:(j + 1) * per], y[j * per:(j + 1) * per]) for j in range(rounds)]


def _draw_blocks(source: ExampleSource, per_round: int, rounds: int, seed: int):
    X, y = source.sample(per_round * rounds, seed)
    return split_blocks(X, y, rounds)


def list_sq_learn(program: SQProgram, nu: float, delta: float,
                  source: ExampleSource, partition: Partition | None = None,
                  seed: int = 0) -> Hypothesis:
    """Nonadaptive SQ learning with list rounding: at most q+1 distinct
    hypotheses across fresh-sample runs (q = number of queries)."""
    _check_nu_delta(nu, delta)
    _require_nonadaptive(program, "list_sq_learn")
    q = program.n_queries
    part = partition or default_partition(q)
    if part.dim != q:
        raise ValueError(f"partition dim {part.dim} != n_queries {q}")
    n = sq_list_samples(q, nu, delta, _list_rho(part, q))
    answers = empirical_sq_answers(program.queries, n, source, seed)
    return _list_core(program, nu, answers, part)


def cert_sq_learn(program: SQProgram, nu: float, delta: float, cert: CertString,
                  source: ExampleSource, seed: int = 0) -> Hypothesis:
    """Nonadaptive SQ learning with certificate rounding: runs sharing a
    good certificate return identical hypotheses."""
    _check_nu_delta(nu, delta)
    _require_nonadaptive(program, "cert_sq_learn")
    n = sq_cert_samples(program.n_queries, nu, delta)
    answers = empirical_sq_answers(program.queries, n, source, seed)
    return _cert_core(program, nu, delta, cert, answers)


def adaptive_cert_sq_learn(program: SQProgram, nu: float, delta: float, certs,
                           source: ExampleSource, seed: int = 0) -> Hypothesis:
    """Adaptive SQ learning: one fresh certificate block and one fresh
    sample block per round, q * ell certificate bits in total."""
    _check_nu_delta(nu, delta)
    q = program.n_queries
    per = sq_adaptive_cert_samples(q, nu, delta)
    blocks = _draw_blocks(source, per, q, seed)
    return _adaptive_cert_core(program, nu, delta, certs, blocks)


def adaptive_list_sq_learn(program: SQProgram, nu: float, delta: float,
                           source: ExampleSource, seed: int = 0) -> Hypothesis:
    """Adaptive SQ learning by per-round 1-d rounding at scale nu: each
    round contributes at most 2 candidate values, so fresh-sample runs see
    at most 2^q distinct hypotheses."""
    _check_nu_delta(nu, delta)
    q = program.n_queries
    per = sq_adaptive_list_samples(q, nu, delta)
    blocks = _draw_blocks(source, per, q, seed)
    return _adaptive_list_core(program, nu, blocks)


# -- threshold boxes over the uniform distribution ---------------------------


def err_unif(s, t) -> float:
    """Disagreement mass of two threshold boxes under uniform examples:
    vol(s) + vol(t) - 2 vol(min(s, t))."""
    sv = check_point(s, name="s")
    tv = check_point(t, sv.shape[0], name="t")
    if np.any((sv < 0) | (sv > 1)) or np.any((tv < 0) | (tv > 1)):
        raise ValueError("thresholds must lie in [0,1]^d")
    return float(np.prod(sv) + np.prod(tv) - 2.0 * np.prod(np.minimum(sv, tv)))


def recommended_nu(d: int, eps: float, promise_c: float) -> float:
    """Answer-rounding scale that keeps the threshold inversion within eps
    on the promise class t in [c, 1]^d (validated by the calibration suite).
    """
    check_prob(promise_c, "promise_c", open_zero=True, open_one=False)
    check_prob(eps, "eps", open_zero=True)
    return eps * promise_c**d / (8.0 * d)


def unrestricted_nu(d: int, eps: float) -> float:
    """Rounding scale for the promise-free variant (one extra query)."""
    check_prob(eps, "eps", open_zero=True)
    return eps * eps / (16.0 * (d + 1))


def threshold_sq_program(d: int, c: float = 0.5) -> SQProgram:
    """Moment queries phi_i(x, y) = y * x_i; under uniform examples the
    answer vector is (t_i / 2) * prod(t), which t_i = 2 v_i / V with
    V = (prod_j 2 v_j)^(1/(d+1)) inverts exactly on the promise class
    t in [c, 1]^d."""
    if d < 1:
        raise ValueError("d must be >= 1")
    check_prob(c, "c", open_zero=True, open_one=True)

    def make_query(i: int) -> QueryFn:
        return lambda X, y: y * X[:, i]

    def invert(v: np.ndarray) -> np.ndarray:
        doubled = np.maximum(2.0 * v, 0.0)
        prod = float(np.prod(doubled))
        if prod <= 0.0:
            return np.zeros(d)
        vol = prod ** (1.0 / (d + 1))
        return clamp_unit(doubled / vol)

    return SQProgram.nonadaptive([make_query(i) for i in range(d)], invert)


def unrestricted_threshold_sq_program(d: int, eps: float) -> SQProgram:
    """Promise-free variant paying one extra query phi_0 = y (so a
    (d+2)-size list): the box volume is estimated directly and boxes with
    rounded volume below eps/2 fall back to the empty hypothesis."""
    if d < 1:
        raise ValueError("d must be >= 1")
    check_prob(eps, "eps", open_zero=True)

    def make_query(i: int) -> QueryFn:
        return lambda X, y: y * X[:, i]

    def invert(v: np.ndarray) -> np.ndarray:
        vol = float(v[0])
        if vol < eps / 2.0:
            return np.zeros(d)
        return clamp_unit(2.0 * v[1:] / vol)

    queries: list[QueryFn] = [lambda X, y: np.asarray(y, dtype=float)]
    queries += [make_query(i) for i in range(d)]
    return SQProgram.nonadaptive(queries, invert)


def threshold_answers(t) -> np.ndarray:
    """Exact moment-query answers for a known threshold box."""
    tv = check_point(t, name="t")
    return 0.5 * tv * np.prod(tv)


class ThresholdSampler:
    """Uniform examples on [0,1]^d labeled by a threshold box.

    Batches are pure functions of (t, base seed, draw seed), so distinct
    draw seeds give independent fresh batches and repeated calls replay.
    """

    def __init__(self, t, seed: int = 0):
        self.t = check_point(t, name="t")
        if np.any((self.t < 0) | (self.t > 1)):
            raise ValueError("threshold must lie in [0,1]^d")
        self.seed = int(seed)
        self.dim = self.t.shape[0]

    def sample(self, n: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
        if n < 1:
            raise ValueError("n must be >= 1")
        rng = generator(derive_seed(self.seed, seed, STREAM_EXAMPLES))
        X = rng.random((n, self.dim))
        y = (X <= self.t).all(axis=1).astype(np.uint8)
        return X, y


def threshold_sampler(t, seed: int = 0) -> ThresholdSampler:
    return ThresholdSampler(t, seed)


THRESHOLD_MODES = ("list", "cert", "adaptive-cert", "adaptive-list")


class ThresholdLearner(BaseEstimator):
    """Replicable PAC learner for axis-aligned threshold boxes.

    fit consumes an explicit labeled batch (warning if it is smaller than
    required_samples); fit_source draws the required batch itself.

    Parameters
    ----------
    eps, delta : target uniform-distribution error and failure budget.
    mode : one of "list", "cert", "adaptive-cert", "adaptive-list".
    promise_c : truth promised in [promise_c, 1]^d; sets the rounding
        scale nu. Ignored when unrestricted=True.
    cert : int r, CertString, or a sequence of those (adaptive-cert takes
        one per query; a single value is reused). Certificate modes only.
    partition : list-mode partition, defaults to the shipped one sized to
        the query count.
    nu : explicit override for the answer-rounding scale.
    unrestricted : drop the promise in exchange for one extra query and a
        (d+2)-size hypothesis list.
    """

    def __init__(self, eps: float = 0.1, delta: float = 0.05, mode: str = "list",
                 promise_c: float = 0.5, cert=None, partition: Partition | None = None,
                 nu: float | None = None, unrestricted: bool = False):
        self.eps = eps
        self.delta = delta
        self.mode = mode
        self.promise_c = promise_c
        self.cert = cert
        self.partition = partition
        self.nu = nu
        self.unrestricted = unrestricted

    # -- parameter resolution ---------------------------------------------

    def _n_queries(self, d: int) -> int:
        return d + 1 if self.unrestricted else d

    def resolve_nu(self, d: int) -> float:
        if self.nu is not None:
            return check_positive(self.nu, "nu")
        if self.unrestricted:
            return unrestricted_nu(d, self.eps)
        return recommended_nu(d, self.eps, self.promise_c)

    def _program(self, d: int) -> SQProgram:
        if self.unrestricted:
            return unrestricted_threshold_sq_program(d, self.eps)
        return threshold_sq_program(d, self.promise_c)

    def _partition(self, q: int) -> Partition:
        return self.partition or default_partition(q)

    def _certs(self, q: int) -> list[CertString]:
        need = required_ell(q, self.delta)
        raw = self.cert
        if raw is None:
            raise ValueError(f"mode {self.mode!r} needs cert (r value(s) for ell={need})")
        if isinstance(raw, (int, np.integer, CertString)):
            raw = [raw]
        certs = [c if isinstance(c, CertString) else CertString(ell=need, r=int(c))
                 for c in raw]
        if self.mode == "adaptive-cert" and len(certs) == 1:
            certs = [CertString(ell=need, r=certs[0].r) for _ in range(q)]
        return certs

    def _check_params(self):
        check_prob(self.eps, "eps", open_zero=True)
        check_prob(self.delta, "delta", open_zero=True, open_one=True)
        if self.mode not in THRESHOLD_MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    def required_samples(self, d: int) -> int:
        """Total example count behind the stated replicability guarantee."""
        self._check_params()
        q = self._n_queries(d)
        nu = self.resolve_nu(d)
        if self.mode == "list":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                rho = _list_rho(self._partition(q), q)
            return sq_list_samples(q, nu, self.delta, rho)
        if self.mode == "cert":
            return sq_cert_samples(q, nu, self.delta)
        if self.mode == "adaptive-cert":
            return q * sq_adaptive_cert_samples(q, nu, self.delta)
        return q * sq_adaptive_list_samples(q, nu, self.delta)

    # -- estimator API ------------------------------------------------------

    def _finish(self, d: int, nu: float, hyp: Hypothesis) -> "ThresholdLearner":
        self.n_features_in_ = d
        self.nu_ = nu
        self.hypothesis_ = hyp
        self.threshold_ = hyp.payload
        self.canonical_id_ = hyp.canonical_id
        return self

    def fit(self, X, y):
        X = check_points(X, name="X")
        y = np.asarray(y)
        if y.shape != (X.shape[0],):
            raise ValueError("y must be a label vector matching X")
        self._check_params()
        d = X.shape[1]
        q = self._n_queries(d)
        program = self._program(d)
        nu = self.resolve_nu(d)
        need = self.required_samples(d)
        if X.shape[0] < need:
            warnings.warn(
                f"batch of {X.shape[0]} examples is below the required {need}; "
                "the replicability guarantee does not apply",
                RuntimeWarning,
                stacklevel=2,
            )
        if self.mode == "list":
            answers = batch_sq_answers(program.queries, X, y)
            hyp = _list_core(program, nu, answers, self._partition(q))
        elif self.mode == "cert":
            (cert,) = self._certs(q)
            answers = batch_sq_answers(program.queries, X, y)
            hyp = _cert_core(program, nu, self.delta, cert, answers)
        elif self.mode == "adaptive-cert":
            blocks = split_blocks(X, y, q)
            hyp = _adaptive_cert_core(program, nu, self.delta, self._certs(q), blocks)
        else:
            blocks = split_blocks(X, y, q)
            hyp = _adaptive_list_core(program, nu, blocks)
        return self._finish(d, nu, hyp)

    def fit_source(self, source: ExampleSource, d: int, seed: int = 0):
        """Draw the required batch from source and fit on it."""
        self._check_params()
        program = self._program(d)
        nu = self.resolve_nu(d)
        q = self._n_queries(d)
        if self.mode == "list":
            hyp = list_sq_learn(program, nu, self.delta, source,
                                self._partition(q), seed)
        elif self.mode == "cert":
            (cert,) = self._certs(q)
            hyp = cert_sq_learn(program, nu, self.delta, cert, source, seed)
        elif self.mode == "adaptive-cert":
            hyp = adaptive_cert_sq_learn(program, nu, self.delta, self._certs(q),
                                         source, seed)
        else:
            hyp = adaptive_list_sq_learn(program, nu, self.delta, source, seed)
        return self._finish(d, nu, hyp)

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "threshold_"):
            raise NotFittedError("ThresholdLearner is not fitted yet")
        X = check_points(X, self.n_features_in_, name="X")
        return (X <= self.threshold_).all(axis=1).astype(np.int64)
