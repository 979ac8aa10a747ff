"""Axis-aligned unit-cube partitions of R^d with exact rational row shifts.

A partition is described by an upper unitriangular shift matrix B (unit
diagonal, exact rational entries above it). Member z of the partition is the
half-open cube B z + [0, 1)^d, so translating by any lattice vector B z maps
the partition onto itself and every point lies in exactly one member.

The interesting partitions are "secluded": every closed L-infinity ball of
radius rho meets at most k members. Seclusion is certified empirically by a
probe sweep (random points in a fundamental domain plus cube-corner classes
perturbed by +/- rho along axis subsets) and recorded as a profile.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from ._validation import check_point, check_points, check_positive
from .rng import STREAM_PROBE, STREAM_SEARCH, derive_seed, generator

MemberId = tuple[int, ...]

MAX_SHIFT_DENOMINATOR = 1 << 16


@dataclass(frozen=True)
class PartitionSpec:
    """Exact description of a shifted-cube partition.

    shifts holds (row, col, value) triples with 1-based indices, row < col,
    giving the strictly-upper entries of the shift matrix. Rows/cols absent
    from the list are zero. scale stretches the whole partition uniformly;
    the unit partition has scale 1.
    """

    dim: int
    shifts: tuple[tuple[int, int, Fraction], ...] = ()
    scale: float = 1.0

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        check_positive(self.scale, "scale")
        seen = set()
        for i, j, v in self.shifts:
            if not (1 <= i < j <= self.dim):
                raise ValueError(f"shift index ({i},{j}) outside strict upper triangle")
            if (i, j) in seen:
                raise ValueError(f"duplicate shift entry ({i},{j})")
            seen.add((i, j))
            if not isinstance(v, Fraction):
                raise ValueError("shift values must be Fractions")
            if v.denominator > MAX_SHIFT_DENOMINATOR:
                raise ValueError(f"shift denominator {v.denominator} exceeds {MAX_SHIFT_DENOMINATOR}")

    def shift_matrix(self) -> np.ndarray:
        """Dense float shift matrix (unit diagonal, determinant 1)."""
        B = np.eye(self.dim)
        for i, j, v in self.shifts:
            B[i - 1, j - 1] = float(v)
        return B

    def to_json_dict(self, profile: "SecludedProfile | None" = None) -> dict:
        d: dict = {
            "dim": self.dim,
            "shifts": [[i, j, f"{v.numerator}/{v.denominator}"] for i, j, v in sorted(self.shifts)],
        }
        if self.scale != 1.0:
            d["scale"] = self.scale
        if profile is not None:
            d["profile"] = profile.to_json_dict()
        return d


@dataclass(frozen=True)
class SecludedProfile:
    """Recorded outcome of a seclusion verification: at most k members met
    every closed rho-ball over the stated probe sweep."""

    k: int
    rho: float
    probes: int
    witness: tuple[float, ...] | None = None
    max_members: int | None = None

    def to_json_dict(self) -> dict:
        d: dict = {"k": self.k, "rho": repr(float(self.rho)), "probes": self.probes}
        if self.witness is not None:
            d["witness"] = list(self.witness)
        if self.max_members is not None:
            d["max_members"] = self.max_members
        return d

    @staticmethod
    def from_json_dict(d: dict) -> "SecludedProfile":
        wit = d.get("witness")
        return SecludedProfile(
            k=int(d["k"]),
            rho=float(d["rho"]),
            probes=int(d["probes"]),
            witness=None if wit is None else tuple(float(w) for w in wit),
            max_members=d.get("max_members"),
        )


def save_spec(spec: PartitionSpec, path: str | Path, profile: SecludedProfile | None = None) -> None:
    Path(path).write_text(json.dumps(spec.to_json_dict(profile), indent=2, sort_keys=True) + "\n")


def load_spec(path: str | Path) -> tuple[PartitionSpec, SecludedProfile | None]:
    d = json.loads(Path(path).read_text())
    shifts = tuple(
        (int(i), int(j), Fraction(str(v))) for i, j, v in d.get("shifts", [])
    )
    spec = PartitionSpec(dim=int(d["dim"]), shifts=shifts, scale=float(d.get("scale", 1.0)))
    prof = d.get("profile")
    return spec, (SecludedProfile.from_json_dict(prof) if prof else None)


class Partition:
    """Runtime form of a PartitionSpec with point location and rounding."""

    def __init__(self, spec: PartitionSpec, profile: SecludedProfile | None = None):
        self.spec = spec
        self.dim = spec.dim
        self.scale = float(spec.scale)
        self.B = spec.shift_matrix()
        self.profile = profile

    def __repr__(self):
        return f"Partition(dim={self.dim}, shifts={len(self.spec.shifts)}, profile={self.profile})"

    # -- location ---------------------------------------------------------

    def locate(self, x) -> MemberId:
        """Member containing x. Cubes are half-open, so boundary points
        belong to the cube on their upper-left: z_i = floor of the residual
        coordinate, resolved from the last coordinate down."""
        y = check_point(x, self.dim) / self.scale
        z = np.zeros(self.dim)
        for i in range(self.dim - 1, -1, -1):
            z[i] = math.floor(y[i] - float(np.dot(self.B[i, i + 1:], z[i + 1:])))
        return tuple(int(v) for v in z)

    def locate_batch(self, X) -> np.ndarray:
        Y = check_points(X, self.dim) / self.scale
        Z = np.zeros_like(Y)
        for i in range(self.dim - 1, -1, -1):
            Z[:, i] = np.floor(Y[:, i] - Z[:, i + 1:] @ self.B[i, i + 1:])
        return Z.astype(np.int64)

    def anchor(self, z) -> np.ndarray:
        zv = np.asarray(z, dtype=float)
        return self.scale * (self.B @ zv)

    def center(self, z) -> np.ndarray:
        return self.anchor(z) + 0.5 * self.scale

    def round_point(self, x) -> np.ndarray:
        """Center of the member containing x; moves x by at most scale/2
        in each coordinate."""
        return self.center(self.locate(x))

    def round_batch(self, X) -> np.ndarray:
        Z = self.locate_batch(X).astype(float)
        return self.scale * (Z @ self.B.T) + 0.5 * self.scale

    # -- neighborhood enumeration -----------------------------------------

    def members_near(self, x, eps: float) -> list[MemberId]:
        """All members whose cube meets the closed L-infinity ball of radius
        eps around x, in lexicographic order.

        A product of half-open cubes meets a product of closed intervals iff
        they meet in every coordinate, so candidates are enumerated by
        back-substitution: given z_{i+1..d}, coordinate i requires the
        anchor offset to lie in the half-open window
        (x_i - eps - 1, x_i + eps].
        """
        y = check_point(x, self.dim) / self.scale
        epsp = float(eps) / self.scale
        if epsp < 0:
            raise ValueError("eps must be nonnegative")
        out: list[MemberId] = []
        z = np.zeros(self.dim)

        def descend(i: int):
            if i < 0:
                out.append(tuple(int(v) for v in z))
                return
            shift = float(np.dot(self.B[i, i + 1:], z[i + 1:]))
            lo_excl = (y[i] - epsp) - shift - 1.0
            hi_incl = (y[i] + epsp) - shift
            n = math.floor(lo_excl) + 1
            while n <= hi_incl:
                z[i] = n
                descend(i - 1)
                n += 1

        descend(self.dim - 1)
        return sorted(out)

    def count_members_near(self, X, eps: float) -> np.ndarray:
        """Vectorized |members_near| for many probe points at once.

        Enumerates candidate offsets s in {0..S}^d above the least admissible
        integer per coordinate; distinct offset patterns always yield
        distinct members, so summing validity over patterns counts exactly.
        """
        Y = check_points(X, self.dim) / self.scale
        epsp = float(eps) / self.scale
        m, d = Y.shape
        S = max(0, math.ceil(2.0 * epsp))
        counts = np.zeros(m, dtype=np.int64)
        Z = np.zeros((m, d))
        for pattern in itertools.product(range(S + 1), repeat=d):
            valid = np.ones(m, dtype=bool)
            for i in range(d - 1, -1, -1):
                shift = Z[:, i + 1:] @ self.B[i, i + 1:]
                lo_excl = (Y[:, i] - epsp) - shift - 1.0
                hi_incl = (Y[:, i] + epsp) - shift
                z = np.floor(lo_excl) + 1.0 + pattern[i]
                valid &= z <= hi_incl
                Z[:, i] = z
            counts += valid
        return counts


def build_partition(spec: PartitionSpec, profile: SecludedProfile | None = None) -> Partition:
    return Partition(spec, profile)


# -- probe plans and verification ------------------------------------------


@dataclass(frozen=True)
class ProbePlan:
    """Probe families for seclusion checks: corner classes of the cubes
    perturbed by {-eps, 0, +eps} per coordinate, then uniform points in the
    fundamental domain [0, scale)^d. Corners come first so deterministic
    witnesses are preferred over random ones."""

    n_random: int = 100_000
    seed: int = 0
    include_corners: bool = True
    corner_cap: int = 4096

    def generate(self, partition: Partition, eps: float) -> np.ndarray:
        d = partition.dim
        blocks = []
        if self.include_corners:
            corners = np.array(list(itertools.product((0.0, 1.0), repeat=d))) * partition.scale
            deltas = np.array(list(itertools.product((-float(eps), 0.0, float(eps)), repeat=d)))
            grid = (corners[:, None, :] + deltas[None, :, :]).reshape(-1, d)
            if len(grid) > self.corner_cap:
                rng = generator(derive_seed(self.seed, 1, STREAM_PROBE))
                grid = grid[rng.choice(len(grid), size=self.corner_cap, replace=False)]
            blocks.append(grid)
        if self.n_random > 0:
            rng = generator(derive_seed(self.seed, 0, STREAM_PROBE))
            blocks.append(rng.random((self.n_random, d)) * partition.scale)
        if not blocks:
            raise ValueError("probe plan generates no probes")
        return np.vstack(blocks)


@dataclass(frozen=True)
class Violation:
    probe: tuple[float, ...]
    count: int
    members: tuple[MemberId, ...]


@dataclass
class VerificationReport:
    passed: bool
    profile: SecludedProfile
    violations: list[Violation] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "passed": self.passed,
            "profile": self.profile.to_json_dict(),
            "violations": [
                {"probe": list(v.probe), "count": v.count, "members": [list(m) for m in v.members]}
                for v in self.violations
            ],
        }


def verify_secludedness(
    partition: Partition,
    eps: float,
    k: int,
    plan: ProbePlan | None = None,
    max_violations: int = 10,
) -> VerificationReport:
    """Probe sweep: does every sampled closed eps-ball meet at most k members?

    Failures are data, not exceptions: the report carries the worst probe as
    witness and up to max_violations offending probes with their member lists.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    check_positive(eps, "eps")
    plan = plan or ProbePlan()
    probes = plan.generate(partition, eps)
    counts = partition.count_members_near(probes, eps)
    worst = int(np.argmax(counts))
    max_members = int(counts[worst])
    witness = tuple(float(v) for v in probes[worst])
    violations = []
    if max_members > k:
        bad = np.flatnonzero(counts > k)[:max_violations]
        violations = [
            Violation(
                probe=tuple(float(v) for v in probes[b]),
                count=int(counts[b]),
                members=tuple(partition.members_near(probes[b], eps)),
            )
            for b in bad
        ]
    profile = SecludedProfile(
        k=k, rho=float(eps), probes=len(probes), witness=witness, max_members=max_members
    )
    return VerificationReport(passed=max_members <= k, profile=profile, violations=violations)


def max_secluded_radius(
    partition: Partition,
    k: int,
    tol: float = 1 / 256,
    plan: ProbePlan | None = None,
    hi: float = 1.0,
) -> float:
    """Largest radius (up to tol) passing verification, by bisection.

    Uses one fixed probe seed throughout so the random probe set is shared
    across evaluations; ball membership counts are then monotone in the
    radius at every fixed probe, which keeps the bracket consistent.
    """
    plan = plan or ProbePlan(n_random=20_000)
    if verify_secludedness(partition, hi, k, plan).passed:
        return hi
    lo = 0.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if verify_secludedness(partition, mid, k, plan).passed:
            lo = mid
        else:
            hi = mid
    return lo


# -- built-in partitions ----------------------------------------------------


def unit_grid_spec(dim: int = 1) -> PartitionSpec:
    """Unshifted integer grid. For dim 1 this is the best possible: every
    closed ball of radius 1/2 meets at most 2 intervals."""
    return PartitionSpec(dim=dim)


def brick_spec(shift: Fraction = Fraction(1, 2)) -> PartitionSpec:
    """Plane brick wall: rows of unit squares, row j offset by j*shift."""
    return PartitionSpec(dim=2, shifts=((1, 2, shift),))


def staircase_spec(dim: int) -> PartitionSpec:
    """Staircase shifts: entry (i, j) is (j-i)/dim. Reproduces the brick
    wall at dim 2 and verifies at radius 1/(2*dim) for dim 3; it does not
    stay that good in higher dimensions (the verifier rejects dim >= 4)."""
    shifts = tuple(
        (i, j, Fraction(j - i, dim))
        for i in range(1, dim + 1)
        for j in range(i + 1, dim + 1)
    )
    return PartitionSpec(dim=dim, shifts=shifts)


def halving_cascade_spec(dim: int) -> PartitionSpec:
    """Halving cascade: entry (i, j) is 2^-(j-i). Verifies at radius 1/8
    in dim 3 (weaker than the staircase); kept as a search seed."""
    shifts = tuple(
        (i, j, Fraction(1, 2 ** (j - i)))
        for i in range(1, dim + 1)
        for j in range(i + 1, dim + 1)
    )
    return PartitionSpec(dim=dim, shifts=shifts)


def parity_brick_spec() -> PartitionSpec:
    """Cascaded half shifts in dim 3; looks plausible but fails the
    (4, 1/6) seclusion check. Kept as a verifier regression case."""
    return PartitionSpec(dim=3, shifts=((1, 2, Fraction(1, 2)), (2, 3, Fraction(1, 2))))


# Shipped profiles are frozen results of million-probe verification sweeps
# (uniform fundamental-domain probes plus full corner families); the test
# suite re-verifies each claim.
_BUILTIN_PROFILES = {
    1: SecludedProfile(k=2, rho=0.5, probes=1_000_006, witness=(-0.5,), max_members=2),
    2: SecludedProfile(k=3, rho=0.25, probes=1_000_036, witness=(-0.25, -0.25), max_members=3),
    3: SecludedProfile(
        k=4, rho=1 / 6, probes=1_000_216, witness=(-1 / 6, -1 / 6, -1 / 6), max_members=4
    ),
}


def default_partition(dim: int) -> Partition:
    """Shipped partition for small dimensions, with its verified profile:
    every closed ball of radius 1/(2*dim) meets at most dim+1 members."""
    if dim == 1:
        spec = unit_grid_spec(1)
    elif dim in (2, 3):
        spec = staircase_spec(dim)
    else:
        raise ValueError(
            f"no built-in partition for dim {dim}; run search_shifts or supply a spec file"
        )
    return Partition(spec, _BUILTIN_PROFILES[dim])


# -- randomized shift search ------------------------------------------------


@dataclass(frozen=True)
class SearchBudget:
    candidates: int = 48
    probes: int = 2000
    final_probes: int = 50_000
    tol: float = 1 / 128


@dataclass
class SearchResult:
    spec: PartitionSpec
    report: VerificationReport
    rho: float
    scored: int

    def to_json_dict(self) -> dict:
        return {
            "spec": self.spec.to_json_dict(self.report.profile),
            "rho": self.rho,
            "scored": self.scored,
            "passed": self.report.passed,
        }


def _structured_candidates(dim: int) -> list[PartitionSpec]:
    cands = [staircase_spec(dim), halving_cascade_spec(dim)]
    for c in (Fraction(1, 2), Fraction(1, 3), Fraction(2, 3), Fraction(1, 4)):
        cands.append(
            PartitionSpec(dim=dim, shifts=tuple((i, i + 1, c) for i in range(1, dim)))
        )
    # column shear: last coordinate advances all earlier ones
    cands.append(
        PartitionSpec(
            dim=dim,
            shifts=tuple((i, dim, Fraction(i, dim + 1)) for i in range(1, dim)),
        )
    )
    return cands


def search_shifts(
    dim: int,
    k: int | None = None,
    budget: SearchBudget | None = None,
    seed: int = 0,
) -> SearchResult:
    """Randomized search for a shift matrix maximizing the verified radius.

    Structured families are scored first, then random rational matrices with
    small denominators. Never raises on a fruitless budget: the best-effort
    spec is returned with its (possibly zero-radius) profile.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    k = (dim + 1) if k is None else k
    budget = budget or SearchBudget()
    rng = generator(derive_seed(seed, 0, STREAM_SEARCH))
    light = ProbePlan(n_random=budget.probes, seed=seed)

    candidates = _structured_candidates(dim) if dim > 1 else [unit_grid_spec(1)]
    denominators = (2, 3, 4, 5, 6, 8, 12, 16)
    while len(candidates) < budget.candidates:
        shifts = []
        for i in range(1, dim + 1):
            for j in range(i + 1, dim + 1):
                q = int(rng.choice(denominators))
                p = int(rng.integers(0, q))
                if p:
                    shifts.append((i, j, Fraction(p, q)))
        try:
            candidates.append(PartitionSpec(dim=dim, shifts=tuple(shifts)))
        except ValueError:
            continue

    best_spec, best_rho = candidates[0], -1.0
    for spec in candidates[: budget.candidates]:
        rho = max_secluded_radius(Partition(spec), k, tol=budget.tol, plan=light)
        if rho > best_rho:
            best_spec, best_rho = spec, rho

    final_plan = ProbePlan(n_random=budget.final_probes, seed=seed)
    part = Partition(best_spec)
    rho = max_secluded_radius(part, k, tol=budget.tol, plan=final_plan)
    report = verify_secludedness(part, rho, k, final_plan) if rho > 0 else VerificationReport(
        passed=False,
        profile=SecludedProfile(k=k, rho=0.0, probes=0, witness=None, max_members=None),
    )
    return SearchResult(spec=best_spec, report=report, rho=rho, scored=len(candidates[: budget.candidates]))
