from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, List, Optional, Tuple

import numpy as np

from numpy.typing import ArrayLike
from scipy.spatial.distance import cdist
from scipy.stats import mannwhitneyu

from . import ContractViolation
from .core import FloatArray, Population

HV_REFERENCE = (1.0, 1.0)


class Verdict(Enum):
    """Outcome of a rank-sum comparison of sample a against sample b."""

    BETTER = "+"
    WORSE = "-"
    APPROX = "≈"


@dataclass(frozen=True)
class TrajectoryPoint:
    fe: int
    igd: float
    hv: float
    mean_sparsity: float
    rate: float = 0.0


@dataclass
class IndicatorTrajectory:
    """Indicator values recorded at strictly increasing evaluation counts."""

    points: List[TrajectoryPoint] = field(default_factory=list)

    def append(self, point: TrajectoryPoint) -> None:
        if self.points and point.fe <= self.points[-1].fe:
            raise ContractViolation(
                f"Trajectory FE must increase ({self.points[-1].fe} -> {point.fe})"
            )
        self.points.append(point)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self) -> Iterator[TrajectoryPoint]:
        return iter(self.points)

    @property
    def final(self) -> TrajectoryPoint:
        return self.points[-1]


def _matrix(points: ArrayLike) -> FloatArray:
    return np.atleast_2d(np.asarray(points, dtype=np.float64))


def igd(front_sample: ArrayLike, approx: ArrayLike) -> float:
    """Get the mean distance from each reference point to its nearest approximation."""
    ref = _matrix(front_sample)
    app = np.asarray(approx, dtype=np.float64)
    if app.size == 0:
        raise ContractViolation("IGD needs a non-empty approximation set")
    app = _matrix(app)
    if ref.size == 0 or ref.shape[1] != app.shape[1]:
        raise ContractViolation("IGD sets must be non-empty and of equal dimension")
    return float(cdist(ref, app).min(axis=1).mean())


def hv2d(approx: ArrayLike, ref: ArrayLike = HV_REFERENCE) -> float:
    """Get the area dominated by approx and bounded by ref, by a sort-and-sweep."""
    r = np.asarray(ref, dtype=np.float64)
    pts = np.asarray(approx, dtype=np.float64)
    if pts.size == 0:
        return 0.0
    pts = _matrix(pts)
    if pts.shape[1] != 2 or r.shape != (2,):
        raise ContractViolation("hv2d needs two objectives")
    pts = pts[(pts[:, 0] < r[0]) & (pts[:, 1] < r[1])]
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    area = 0.0
    ceiling = r[1]
    for f1, f2 in pts:
        if f2 < ceiling:
            area += (r[0] - f1) * (ceiling - f2)
            ceiling = f2
    return float(area)


@dataclass(frozen=True)
class HypervolumeEstimate:
    value: float
    exact: bool
    standard_error: float = 0.0


def hv_monte_carlo(
    approx: ArrayLike,
    ref: ArrayLike,
    samples: int,
    rng: np.random.Generator,
    chunk: int = 1_000_000,
) -> HypervolumeEstimate:
    """Estimate the hypervolume of approx by uniform sampling of its bounding box."""
    r = np.asarray(ref, dtype=np.float64)
    pts = np.asarray(approx, dtype=np.float64).reshape(-1, len(r))
    pts = pts[np.all(pts < r, axis=1)]
    if len(pts) == 0:
        return HypervolumeEstimate(0.0, exact=False)
    low = pts.min(axis=0)
    box = float(np.prod(r - low))
    hits = 0
    left = samples
    while left > 0:
        n = min(chunk, left)
        z = low + rng.random((n, len(r))) * (r - low)
        covered = np.zeros(n, dtype=np.bool_)
        for p in pts:
            covered |= np.all(z >= p, axis=1)
        hits += int(covered.sum())
        left -= n
    frac = hits / samples
    se = box * np.sqrt(frac * (1.0 - frac) / samples)
    return HypervolumeEstimate(box * frac, exact=False, standard_error=float(se))


def hypervolume(
    approx: ArrayLike,
    ref: ArrayLike = HV_REFERENCE,
    rng: Optional[np.random.Generator] = None,
    samples: int = 1_000_000,
) -> HypervolumeEstimate:
    """Get the exact 2-D hypervolume, or a Monte Carlo estimate for three objectives."""
    r = np.asarray(ref, dtype=np.float64)
    if len(r) == 2:
        return HypervolumeEstimate(hv2d(approx, r), exact=True)
    if len(r) == 3:
        return hv_monte_carlo(approx, r, samples, rng or np.random.default_rng(0))
    raise ContractViolation(f"Hypervolume is not supported for {len(r)} objectives")


def mean_sparsity(pop: Population) -> float:
    """Get the mean fraction of active bits per member."""
    if len(pop) == 0:
        raise ContractViolation("Sparsity of an empty population is undefined")
    return float(pop.masks.mean())


def rank_sum_test(
    a: ArrayLike, b: ArrayLike, alpha: float = 0.05, lower_is_better: bool = True
) -> Verdict:
    """Compare two samples with a two-sided Mann-Whitney U test.

    The normal approximation with tie correction and no continuity correction
    is used. A significant result is
    oriented by the medians, falling back to the mean ranks when they are equal.
    """
    xa = np.asarray(a, dtype=np.float64)
    xb = np.asarray(b, dtype=np.float64)
    if len(xa) < 5 or len(xb) < 5:
        raise ContractViolation("Rank-sum test needs at least five values per sample")
    pooled = np.concatenate([xa, xb])
    if np.all(pooled == pooled[0]):
        return Verdict.APPROX
    res = mannwhitneyu(
        xa, xb, alternative="two-sided", method="asymptotic", use_continuity=False
    )
    if not res.pvalue < alpha:
        return Verdict.APPROX
    diff = float(np.median(xa) - np.median(xb))
    if diff == 0:
        # U of a above its mean means a tends to hold the larger values.
        diff = float(res.statistic) - len(xa) * len(xb) / 2
    a_smaller = diff < 0
    return Verdict.BETTER if a_smaller == lower_is_better else Verdict.WORSE


def front_indicators(pop: Population, front: ArrayLike) -> Tuple[float, float]:
    """Get IGD and HV of the non-dominated members of pop."""
    objs = pop.nondominated().objectives
    return igd(front, objs), hv2d(objs)
