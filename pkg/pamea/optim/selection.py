import numpy as np

from numpy.typing import ArrayLike, NDArray

from . import ContractViolation
from .core import FloatArray, Population, dominance_matrix

FrontAssignment = NDArray[np.int64]


def _objectives(objs: ArrayLike) -> FloatArray:
    f = np.asarray(objs, dtype=np.float64)
    if f.ndim != 2 or len(f) == 0:
        raise ContractViolation(f"Expected a non-empty (n, m) matrix, got {f.shape}")
    if np.isnan(f).any():
        raise ContractViolation("Objectives contain unevaluated members")
    return f


def nondominated_sort(objs: ArrayLike) -> FrontAssignment:
    """Get the 1-based front number of every row by repeated peeling."""
    dom = dominance_matrix(_objectives(objs))
    fronts = np.zeros(len(dom), dtype=np.int64)
    # Number of not-yet-assigned members dominating each member.
    counts = dom.sum(axis=0)
    front = 1
    current = np.flatnonzero(counts == 0)
    while len(current):
        fronts[current] = front
        counts = counts - dom[current].sum(axis=0)
        counts[fronts > 0] = -1
        current = np.flatnonzero(counts == 0)
        front += 1
    return fronts


def _distances(f: FloatArray) -> FloatArray:
    diff = f[:, None, :] - f[None, :, :]
    return np.sqrt((diff**2).sum(axis=2))


def spea2_fitness(objs: ArrayLike) -> FloatArray:
    """Get raw fitness plus density for each row, lower being better."""
    f = _objectives(objs)
    n = len(f)
    dom = dominance_matrix(f)
    strength = dom.sum(axis=1)
    raw = strength @ dom
    if n == 1:
        return raw.astype(np.float64)
    dist = _distances(f)
    np.fill_diagonal(dist, np.inf)
    k = min(max(int(np.floor(np.sqrt(n))), 1), n - 1)
    kth = np.sort(dist, axis=1)[:, k - 1]
    return raw + 1.0 / (kth + 2.0)


def _truncate(f: FloatArray, remove: int) -> NDArray[np.bool_]:
    """Get a mask of the rows to delete, most crowded first."""
    dist = _distances(f)
    np.fill_diagonal(dist, np.inf)
    deleted = np.zeros(len(f), dtype=np.bool_)
    for _ in range(remove):
        remain = np.flatnonzero(~deleted)
        profiles = np.sort(dist[np.ix_(remain, remain)], axis=1)
        # lexsort treats its last key as primary; identical profiles drop the
        # larger index first.
        keys = [-remain] + [profiles[:, c] for c in reversed(range(len(remain)))]
        deleted[remain[np.lexsort(keys)[0]]] = True
    return deleted


def spea2_environmental_selection(pop: Population, n: int) -> Population:
    """Select n survivors from pop, preserving its order."""
    if n < 1 or len(pop) < n:
        raise ContractViolation(f"Cannot select {n} survivors from {len(pop)} members")
    fitness = spea2_fitness(pop.objectives)
    keep = fitness < 1
    if keep.sum() < n:
        keep[:] = False
        keep[np.argsort(fitness, kind="stable")[:n]] = True
    elif keep.sum() > n:
        front = np.flatnonzero(keep)
        keep[front[_truncate(pop.objectives[front], len(front) - n)]] = False
    return pop.take(np.flatnonzero(keep))
