"""Replicable estimation of d coin biases from independent tosses.

Both estimators compute the empirical bias vector from a toss matrix and
then canonicalize it with a rounding map, so that independent runs on fresh
samples agree on one of a small set of outputs:

* list flavor: round in an eps-scaled secluded partition. Across runs the
  output lands in a fixed list of at most d+1 values with probability
  1 - delta each run.
* certificate flavor: round each coordinate on a coarse grid addressed by a
  shared random certificate of ceil(log2(d/delta)) bits. With probability
  1 - delta over the certificate draw, every fresh-sample run produces the
  identical output.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from ._validation import check_point, check_prob
from .partitions import MemberId, Partition, default_partition
from .rng import STREAM_TOSS, derive_seed, generator
from .rounding import (
    CertString,
    clamp_unit,
    grid_cert_indices,
    required_ell,
    scaled_list_round,
    scaled_member,
)

TRIVIAL_ID = "trivial"


def hoeffding_n(eps0: float, delta0: float) -> int:
    """Samples per coin so the empirical mean is within eps0 with
    probability at least 1 - delta0 (two-sided Hoeffding)."""
    if not (eps0 > 0):
        raise ValueError("eps0 must be positive")
    check_prob(delta0, "delta0", open_zero=True, open_one=True)
    return math.ceil(math.log(2.0 / delta0) / (2.0 * eps0 * eps0))


def tv_upper_bound(a, b, n: int) -> float:
    """Upper bound on the total-variation distance between the joint laws
    of n tosses of d coins with bias vectors a and b: min(1, n*d*||b-a||_inf).
    """
    av = check_point(a)
    bv = check_point(b, av.shape[0])
    if n < 0:
        raise ValueError("n must be nonnegative")
    if np.any((av < 0) | (av > 1)) or np.any((bv < 0) | (bv > 1)):
        raise ValueError("bias vectors must lie in [0,1]^d")
    return float(min(1.0, n * av.shape[0] * np.max(np.abs(bv - av))))


@dataclass
class CoinSample:
    """Toss matrix for d coins with its seed lineage."""

    n: int
    tosses: np.ndarray  # (n, d) uint8
    seed: int
    heads: np.ndarray = field(init=False)  # (d,) int64

    def __post_init__(self):
        self.heads = self.tosses.sum(axis=0, dtype=np.int64)

    @property
    def empirical(self) -> np.ndarray:
        return self.heads / float(self.n)


def sample_coins(bias, n: int, seed: int) -> CoinSample:
    """Draw n independent tosses of each coin.

    Coin i consumes its own Philox stream keyed by derive_seed(seed, i,
    STREAM_TOSS), so the draw is reproducible coin-by-coin and independent
    of d ordering changes elsewhere.
    """
    b = check_point(bias)
    if np.any((b < 0) | (b > 1)):
        raise ValueError("bias must lie in [0,1]^d")
    if n < 1:
        raise ValueError("n must be >= 1")
    tosses = np.empty((n, b.shape[0]), dtype=np.uint8)
    for i, bi in enumerate(b):
        rng = generator(derive_seed(seed, i, STREAM_TOSS))
        tosses[:, i] = rng.random(n) < bi
    return CoinSample(n=n, tosses=tosses, seed=seed)


@dataclass(frozen=True)
class EstimateOutcome:
    """Canonical estimate: the value is exactly recomputable from the
    canonical id and the rounding parameters."""

    value: tuple[float, ...]
    canonical_id: MemberId | str
    kind: str  # "list" or "cert"


def reconstruct_list_value(canonical_id, eps: float, partition: Partition, dim: int) -> np.ndarray:
    if canonical_id == TRIVIAL_ID:
        return np.full(dim, 0.5)
    return clamp_unit(float(eps) * partition.center(np.asarray(canonical_id)))


def reconstruct_cert_value(canonical_id, eps0: float) -> np.ndarray:
    return clamp_unit(np.asarray(canonical_id, dtype=float) * (2.0 * eps0))


def _validate_tosses(X) -> np.ndarray:
    arr = np.asarray(X)
    if arr.ndim != 2:
        raise ValueError(f"toss matrix must be 2-d, got shape {arr.shape}")
    vals = np.unique(arr)
    if not np.isin(vals, (0, 1)).all():
        raise ValueError("toss matrix entries must be 0/1")
    return arr.astype(np.float64, copy=False)


class _BaseCoinEstimator(BaseEstimator):
    def _start_fit(self, X) -> np.ndarray:
        X = _validate_tosses(X)
        check_prob(self.eps, "eps", open_zero=True)
        check_prob(self.delta, "delta", open_zero=True, open_one=True)
        self.n_features_in_ = X.shape[1]
        self.n_samples_ = X.shape[0]
        self.empirical_ = X.mean(axis=0)
        return X

    def _warn_if_short(self):
        if self.n_samples_ < self.n_required_:
            warnings.warn(
                f"got {self.n_samples_} tosses per coin but the accuracy "
                f"guarantee needs {self.n_required_}",
                RuntimeWarning,
                stacklevel=3,
            )

    def _check_fitted(self):
        if not hasattr(self, "bias_"):
            raise NotFittedError(f"{type(self).__name__} is not fitted yet")

    @property
    def outcome_(self) -> EstimateOutcome:
        self._check_fitted()
        return EstimateOutcome(
            value=tuple(float(v) for v in self.bias_),
            canonical_id=self.canonical_id_,
            kind=self._kind,
        )


class ListCoinEstimator(_BaseCoinEstimator):
    """(d+1)-list replicable bias estimator.

    fit consumes an (n, d) 0/1 toss matrix; the result lands within eps of
    the truth (L-infinity, probability 1 - delta) and, across fresh-sample
    runs, takes at most d+1 distinct values determined by the partition.

    For eps >= 1/2 the all-halves vector is already eps-accurate for any
    bias, so the estimator returns it without looking at the tosses.
    """

    _kind = "list"

    def __init__(self, eps: float = 0.1, delta: float = 0.05, partition: Partition | None = None):
        self.eps = eps
        self.delta = delta
        self.partition = partition

    def resolve_partition(self, d: int) -> Partition:
        part = self.partition or default_partition(d)
        if part.dim != d:
            raise ValueError(f"partition dim {part.dim} != data dim {d}")
        return part

    def rounding_radius(self, d: int) -> float:
        """rho*eps: the empirical accuracy the rounding step absorbs."""
        part = self.resolve_partition(d)
        if part.profile is None:
            warnings.warn(
                "partition lacks a verified profile; assuming rho = 1/(2d)",
                RuntimeWarning,
                stacklevel=2,
            )
            return self.eps / (2.0 * d)
        return part.profile.rho * self.eps

    def required_samples(self, d: int) -> int:
        if self.eps >= 0.5:
            return 1
        return hoeffding_n(self.rounding_radius(d), self.delta / d)

    def fit(self, X, y=None):
        X = self._start_fit(X)
        d = self.n_features_in_
        self.partition_ = self.resolve_partition(d)
        self.n_required_ = self.required_samples(d)
        if self.eps >= 0.5:
            self.bias_ = np.full(d, 0.5)
            self.canonical_id_ = TRIVIAL_ID
            return self
        self._warn_if_short()
        rounded = scaled_list_round(self.empirical_, self.eps, self.partition_)
        self.bias_ = clamp_unit(rounded)
        self.canonical_id_ = scaled_member(self.empirical_, self.eps, self.partition_)
        return self


class CertCoinEstimator(_BaseCoinEstimator):
    """Certificate-replicable bias estimator.

    The certificate (ell bits, ell = ceil(log2(d/delta))) addresses one of
    2^ell interleaved rounding grids of pitch 2^ell * 2*eps0 per coordinate,
    eps0 = eps/(2^ell + 1). All runs sharing a good certificate return the
    identical clamped grid point.
    """

    _kind = "cert"

    def __init__(self, eps: float = 0.2, delta: float = 0.25, r: int = 1, ell: int | None = None):
        self.eps = eps
        self.delta = delta
        self.r = r
        self.ell = ell

    def certificate(self, d: int) -> CertString:
        need = required_ell(d, self.delta)
        if self.ell is not None and self.ell != need:
            raise ValueError(
                f"ell={self.ell} inconsistent with d={d}, delta={self.delta} (need {need})"
            )
        return CertString(ell=need, r=self.r)

    def grid_eps0(self, d: int) -> float:
        need = required_ell(d, self.delta)
        return self.eps / ((1 << need) + 1)

    def required_samples(self, d: int) -> int:
        return hoeffding_n(self.grid_eps0(d), self.delta / d)

    def fit(self, X, y=None):
        X = self._start_fit(X)
        d = self.n_features_in_
        self.cert_ = self.certificate(d)
        self.eps0_ = self.grid_eps0(d)
        self.n_required_ = self.required_samples(d)
        self._warn_if_short()
        ks = grid_cert_indices(self.empirical_, self.eps0_, self.cert_)
        self.bias_ = clamp_unit(ks.astype(float) * (2.0 * self.eps0_))
        self.canonical_id_ = tuple(int(k) for k in ks)
        return self
