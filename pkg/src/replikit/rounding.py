"""Canonical rounding maps used by the replicable estimators.

Two flavors.

List rounding snaps a point to the center of the partition member
containing it, after rescaling the partition by eps. A point known only up
to rho*eps lands in one of at most k members of the scaled partition
(k and rho from the partition's verified profile), and every candidate
center is within eps of the true point.

Certificate rounding snaps each coordinate to the nearest point of a coarse
grid selected by a shared random index r: candidates are k*(2*eps0) with
k congruent to r mod 2^ell. For any fixed x, at most one r per coordinate
places a decision boundary within eps0 of x, so a uniformly drawn r makes
the rounded value insensitive to eps0-perturbations with probability at
least 1 - d/2^ell.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError

from ._validation import check_point, check_points, check_positive
from .partitions import MemberId, Partition, default_partition
from .rng import generator


def clamp_unit(y) -> np.ndarray:
    """Coordinatewise clamp onto [0, 1]; never worsens the distance to any
    target inside the unit cube."""
    return np.clip(np.asarray(y, dtype=float), 0.0, 1.0)


# -- list rounding -----------------------------------------------------------


def _check_verified(partition: Partition) -> None:
    if partition.profile is None:
        warnings.warn(
            "partition has no recorded seclusion profile; rounding is still "
            "deterministic but the list-size bound is unverified",
            RuntimeWarning,
            stacklevel=3,
        )


def scaled_list_round(xhat, eps: float, partition: Partition) -> np.ndarray:
    """Round xhat to the center of its member in the eps-scaled partition.

    Output moves xhat by at most eps/2 per coordinate, so any x with
    ||xhat - x||_inf <= eps/2 satisfies ||round(xhat) - x||_inf <= eps; with
    a (k, rho)-verified partition, inputs ranging over a closed rho*eps ball
    produce at most k distinct outputs.
    """
    check_positive(eps, "eps")
    _check_verified(partition)
    v = check_point(xhat, partition.dim)
    return float(eps) * partition.round_point(v / float(eps))


def scaled_member(xhat, eps: float, partition: Partition) -> MemberId:
    """Canonical integer identity of scaled_list_round's output."""
    check_positive(eps, "eps")
    v = check_point(xhat, partition.dim)
    return partition.locate(v / float(eps))


# -- certificate rounding ----------------------------------------------------


@dataclass(frozen=True)
class CertString:
    """Shared-randomness certificate: ell bits encoding r in [1, 2^ell]."""

    ell: int
    r: int

    def __post_init__(self):
        if not (0 <= self.ell <= 62):
            raise ValueError("ell must be in [0, 62]")
        if not (1 <= self.r <= (1 << self.ell)):
            raise ValueError(f"r={self.r} outside [1, {1 << self.ell}] for ell={self.ell}")

    @staticmethod
    def draw(ell: int, seed: int) -> "CertString":
        rng = generator(seed)
        return CertString(ell=ell, r=int(rng.integers(1, (1 << ell) + 1)))


def enumerate_certs(ell: int):
    """All 2^ell certificates, in increasing r order."""
    return (CertString(ell=ell, r=r) for r in range(1, (1 << ell) + 1))


def required_ell(d: int, delta: float) -> int:
    """Smallest ell with 2^ell >= d/delta (certificate length)."""
    if d < 1:
        raise ValueError("d must be >= 1")
    if not (0 < delta < 1):
        raise ValueError("delta must be in (0, 1)")
    ell = max(0, int(np.ceil(np.log2(d / delta))))
    while ell > 0 and (1 << (ell - 1)) >= d / delta:
        ell -= 1
    while (1 << ell) < d / delta:
        ell += 1
    return ell


def grid_cert_indices(xhat, eps0: float, cert: CertString) -> np.ndarray:
    """Integer grid indices k (k = r mod 2^ell) of the nearest candidate
    k*(2*eps0) per coordinate; ties round toward the larger candidate."""
    check_positive(eps0, "eps0")
    v = np.asarray(xhat, dtype=float)
    step = float(1 << cert.ell)
    j = np.floor((v / (2.0 * eps0) - cert.r) / step + 0.5)
    return (cert.r + (1 << cert.ell) * j.astype(np.int64)).astype(np.int64)


def grid_cert_round(xhat, eps0: float, cert: CertString) -> np.ndarray:
    """Snap each coordinate of xhat to the certificate grid
    {k*(2*eps0) : k = r mod 2^ell}."""
    ks = grid_cert_indices(xhat, eps0, cert)
    return ks.astype(float) * (2.0 * eps0)


def cert_bad_set(x, eps0: float, ell: int) -> set[int]:
    """Certificates r whose rounding grid has a decision boundary strictly
    within eps0 of some coordinate of x.

    Decision boundaries are midpoints between consecutive candidates; over
    all certificates they form a lattice of spacing 2*eps0, and each
    boundary belongs to exactly one certificate. Hence at most one bad r
    per coordinate and |bad set| <= dim(x).
    """
    check_positive(eps0, "eps0")
    if not (0 <= ell <= 62):
        raise ValueError("ell must be in [0, 62]")
    v = check_point(x)
    bad: set[int] = set()
    half = (1 << ell) >> 1  # 2^(ell-1) for ell >= 1
    for coord in v:
        u = coord / (2.0 * eps0)
        if ell == 0:
            # single certificate; boundaries sit at half-integers of u
            if u != np.floor(u):
                bad.add(1)
            continue
        U = np.floor(u + 0.5)
        if abs(u - U) < 0.5:
            bad.add(int((int(U) - half - 1) % (1 << ell)) + 1)
    return bad


# -- sklearn-style transformers ---------------------------------------------


class CubeRounder(TransformerMixin, BaseEstimator):
    """Transformer applying scaled list rounding to each row.

    Parameters
    ----------
    eps : scale of the rounding; outputs move each row by at most eps/2
        per coordinate.
    partition : Partition or None; defaults to the shipped partition for
        the row dimension seen in fit.
    """

    def __init__(self, eps: float = 1.0, partition: Partition | None = None):
        self.eps = eps
        self.partition = partition

    def fit(self, X, y=None):
        X = check_points(X)
        check_positive(self.eps, "eps")
        self.n_features_in_ = X.shape[1]
        self.partition_ = self.partition or default_partition(X.shape[1])
        if self.partition_.dim != X.shape[1]:
            raise ValueError(
                f"partition dim {self.partition_.dim} != data dim {X.shape[1]}"
            )
        _check_verified(self.partition_)
        return self

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_points(X, self.n_features_in_)
        return float(self.eps) * self.partition_.round_batch(X / float(self.eps))

    def member_ids(self, X) -> np.ndarray:
        """Canonical integer ids of each row's rounded value."""
        self._check_fitted()
        X = check_points(X, self.n_features_in_)
        return self.partition_.locate_batch(X / float(self.eps))

    def _check_fitted(self):
        if not hasattr(self, "partition_"):
            raise NotFittedError("CubeRounder is not fitted yet")


class GridRounder(TransformerMixin, BaseEstimator):
    """Transformer applying certificate grid rounding to each row."""

    def __init__(self, eps0: float = 0.05, ell: int = 0, r: int = 1):
        self.eps0 = eps0
        self.ell = ell
        self.r = r

    def fit(self, X, y=None):
        X = check_points(X)
        check_positive(self.eps0, "eps0")
        self.cert_ = CertString(ell=self.ell, r=self.r)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_points(X, self.n_features_in_)
        return grid_cert_round(X, self.eps0, self.cert_)

    def grid_indices(self, X) -> np.ndarray:
        self._check_fitted()
        X = check_points(X, self.n_features_in_)
        return grid_cert_indices(X, self.eps0, self.cert_)

    def _check_fitted(self):
        if not hasattr(self, "cert_"):
            raise NotFittedError("GridRounder is not fitted yet")
