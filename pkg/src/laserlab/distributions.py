"""Probability distributions on a block support and their derived quantities.

Everything downstream of the laser bound works with a distribution alpha on
the support triples of a partitioned tensor.  Three scalar functionals of
alpha drive the value bound: alpha_B (a function of the marginals only),
alpha_N (the perplexity of alpha), and alpha_V (a value-weighted geometric
mean).  All three are kept in natural-log domain; at large powers the raw
products overflow doubles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .tensor_core import Triple

SUM_TOLERANCE = 1e-12
RENORM_TOLERANCE = 1e-9


def _xlogx(p: float) -> float:
    """p * ln(p) with the 0^0 := 1 convention, i.e. 0 at p = 0."""
    if p <= 0.0:
        return 0.0
    return p * math.log(p)


def entropy(weights: Iterable[float]) -> float:
    """Shannon entropy in nats."""
    return -sum(_xlogx(p) for p in weights)


@dataclass(frozen=True)
class SupportDistribution:
    """A probability distribution on a set of support triples.

    The constructor renormalizes inputs whose total is within 1e-9 of 1 and
    rejects anything worse; after construction the weights sum to 1 within
    1e-12.  Triples with weight exactly 0 may be kept or dropped by the
    caller; both are valid.
    """

    weights: Mapping[Triple, float]

    def __post_init__(self) -> None:
        total = math.fsum(self.weights.values())
        if not math.isfinite(total) or abs(total - 1.0) > RENORM_TOLERANCE:
            raise ValueError(f"weights sum to {total!r}, not 1 within {RENORM_TOLERANCE}")
        for trip, p in self.weights.items():
            if p < -SUM_TOLERANCE:
                raise ValueError(f"negative weight {p!r} at {trip}")
        if abs(total - 1.0) > SUM_TOLERANCE:
            scaled = {t: max(0.0, p) / total for t, p in self.weights.items()}
            object.__setattr__(self, "weights", scaled)
        else:
            object.__setattr__(
                self, "weights", {t: max(0.0, p) for t, p in self.weights.items()}
            )

    @property
    def support(self) -> frozenset[Triple]:
        return frozenset(self.weights)

    def __getitem__(self, triple: Triple) -> float:
        return self.weights.get(triple, 0.0)

    def restrict_to(self, support: Iterable[Triple]) -> "SupportDistribution":
        """Check every keyed triple lies in the given support and return self."""
        allowed = set(support)
        bad = [t for t in self.weights if t not in allowed]
        if bad:
            raise ValueError(f"triples outside support: {sorted(bad)[:5]}")
        return self

    @staticmethod
    def point_mass(triple: Triple) -> "SupportDistribution":
        return SupportDistribution({triple: 1.0})

    @staticmethod
    def uniform(support: Iterable[Triple]) -> "SupportDistribution":
        trips = list(support)
        if not trips:
            raise ValueError("empty support")
        p = 1.0 / len(trips)
        return SupportDistribution({t: p for t in trips})


@dataclass(frozen=True)
class Marginals:
    """Per-block marginal probabilities on the three sides."""

    x_marg: Mapping[int, float]
    y_marg: Mapping[int, float]
    z_marg: Mapping[int, float]

    def __post_init__(self) -> None:
        for name, side in (("x", self.x_marg), ("y", self.y_marg), ("z", self.z_marg)):
            total = math.fsum(side.values())
            if abs(total - 1.0) > RENORM_TOLERANCE:
                raise ValueError(f"{name} marginal sums to {total!r}")

    def as_tuple(self) -> tuple[Mapping[int, float], Mapping[int, float], Mapping[int, float]]:
        return (self.x_marg, self.y_marg, self.z_marg)


@dataclass(frozen=True)
class DerivedQuantities:
    """log alpha_B, log alpha_N, log alpha_V for a distribution."""

    log_alpha_B: float
    log_alpha_N: float
    log_alpha_V: float

    def __post_init__(self) -> None:
        if self.log_alpha_N < -1e-9 or self.log_alpha_B < -1e-9:
            raise ValueError("negative entropy term")


def marginals(alpha: SupportDistribution) -> Marginals:
    """Exact per-block marginal sums on each of the three sides."""
    x: dict[int, float] = {}
    y: dict[int, float] = {}
    z: dict[int, float] = {}
    for (i, j, k), p in alpha.weights.items():
        x[i] = x.get(i, 0.0) + p
        y[j] = y.get(j, 0.0) + p
        z[k] = z.get(k, 0.0) + p
    return Marginals(x, y, z)


def derived(
    alpha: SupportDistribution,
    subtensor_log_values: Mapping[Triple, float],
    tau: float,
) -> DerivedQuantities:
    """Compute the three log-domain products for a distribution.

    ``subtensor_log_values`` maps each support triple to ln of its (positive)
    value at the given tau; tau itself only enters through those values but
    is range-checked here as a guard against unit mistakes upstream.
    """
    if not (2.0 / 3.0 - 1e-12 <= tau <= 1.0 + 1e-12):
        raise ValueError(f"tau {tau} outside [2/3, 1]")
    marg = marginals(alpha)
    log_b = (
        entropy(marg.x_marg.values())
        + entropy(marg.y_marg.values())
        + entropy(marg.z_marg.values())
    ) / 3.0
    log_n = entropy(alpha.weights.values())
    log_v = 0.0
    for trip, p in alpha.weights.items():
        if p == 0.0:
            continue
        lv = subtensor_log_values[trip]
        if not math.isfinite(lv):
            raise ValueError(f"nonpositive value for triple {trip}")
        log_v += p * lv
    return DerivedQuantities(log_alpha_B=log_b, log_alpha_N=log_n, log_alpha_V=log_v)


def round_to_grid(alpha: SupportDistribution, n: int) -> SupportDistribution:
    """Round every weight to the 1/n grid, keeping the total exactly 1.

    Floors each weight to a multiple of 1/n, then hands the K leftover
    increments to the triples with the largest remainders.  Ties break on
    the sorted triple key so the output is deterministic.  Each output
    weight lies within 1/n of its input.
    """
    if n < len(alpha.weights):
        raise ValueError(f"n = {n} below support size {len(alpha.weights)}")
    floors: dict[Triple, int] = {}
    remainders: list[tuple[float, Triple]] = []
    for trip, p in alpha.weights.items():
        scaled = p * n
        f = int(math.floor(scaled + 1e-12))
        f = min(f, n)
        floors[trip] = f
        remainders.append((scaled - f, trip))
    short = n - sum(floors.values())
    remainders.sort(key=lambda item: (-item[0], item[1]))
    for _, trip in remainders[:short]:
        floors[trip] += 1
    return SupportDistribution({t: f / n for t, f in floors.items()})


@dataclass(frozen=True)
class DriftReport:
    """Log-domain drifts between a distribution and its grid rounding."""

    n: int
    drift_alpha_N: float
    drift_alpha_B: float
    drift_alpha_V: float
    threshold: float
    within_threshold: bool


DRIFT_CONSTANT = 4.0


def ratio_drift_check(
    alpha: SupportDistribution,
    alpha_rounded: SupportDistribution,
    subtensor_log_values: Mapping[Triple, float],
    tau: float,
    n: int,
) -> DriftReport:
    """Compare derived quantities before and after grid rounding.

    The threshold C * |S| * (1 + |ln(1/n)|) / n with C = 4 is a concrete
    surrogate for the O(1/n) per-term drift estimates behind the rounding
    lemma; it is checked, not assumed.
    """
    d0 = derived(alpha, subtensor_log_values, tau)
    d1 = derived(alpha_rounded, subtensor_log_values, tau)
    size = max(len(alpha.weights), 1)
    threshold = DRIFT_CONSTANT * size * (1.0 + abs(math.log(1.0 / n))) / n
    dn = abs(d0.log_alpha_N - d1.log_alpha_N)
    db = abs(d0.log_alpha_B - d1.log_alpha_B)
    dv = abs(d0.log_alpha_V - d1.log_alpha_V)
    return DriftReport(
        n=n,
        drift_alpha_N=dn,
        drift_alpha_B=db,
        drift_alpha_V=dv,
        threshold=threshold,
        within_threshold=max(dn, db, dv) <= threshold,
    )


CYCLIC_GROUP: tuple[tuple[int, int, int], ...] = ((0, 1, 2), (1, 2, 0), (2, 0, 1))
FULL_S3: tuple[tuple[int, int, int], ...] = (
    (0, 1, 2),
    (0, 2, 1),
    (1, 0, 2),
    (1, 2, 0),
    (2, 0, 1),
    (2, 1, 0),
)


def _permute(triple: Triple, perm: tuple[int, int, int]) -> Triple:
    return (triple[perm[0]], triple[perm[1]], triple[perm[2]])


def symmetrize(
    alpha: SupportDistribution,
    group: Sequence[tuple[int, int, int]] = CYCLIC_GROUP,
    support: Iterable[Triple] | None = None,
) -> SupportDistribution:
    """Average a distribution over a group of role permutations.

    ``support`` is the ambient support S the group must stabilize; it
    defaults to the keyed triples of alpha.  Raises if any orbit leaves S.
    The caller asserts that per-triple values are invariant under the group;
    under that assumption symmetrizing never decreases the concave
    objectives built from alpha.
    """
    ambient = frozenset(support) if support is not None else alpha.support
    for perm in group:
        for trip in ambient:
            if _permute(trip, perm) not in ambient:
                raise ValueError(
                    f"group does not stabilize support: {trip} -> {_permute(trip, perm)}"
                )
    out: dict[Triple, float] = {}
    scale = 1.0 / len(group)
    for perm in group:
        for trip, p in alpha.weights.items():
            out[_permute(trip, perm)] = out.get(_permute(trip, perm), 0.0) + p * scale
    return SupportDistribution(out)
