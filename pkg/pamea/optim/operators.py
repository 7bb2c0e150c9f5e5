"""Variation and selection primitives shared by both offspring strategies.

- Latin hypercube sampling for the single-variable probes.
- Simulated binary crossover and polynomial mutation for the real vectors.
- Binary tournament selection on a lower-is-better score.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from numpy.typing import ArrayLike, NDArray
from scipy.stats import qmc

from . import ConfigError, ContractViolation
from .core import FloatArray, Population

Bounds = Tuple[ArrayLike, ArrayLike]


@dataclass(frozen=True)
class OperatorParams:
    """Parameters of SBX and polynomial mutation.

    A mutation probability of None means 1/D for a D-variable vector.
    """

    crossover_probability: float = 1.0
    mutation_probability: Optional[float] = None
    distribution_index: float = 20.0

    def __post_init__(self) -> None:
        if not 0.0 <= self.crossover_probability <= 1.0:
            raise ConfigError("crossover_probability must lie in [0, 1]")
        pm = self.mutation_probability
        if pm is not None and not 0.0 <= pm <= 1.0:
            raise ConfigError("mutation_probability must lie in [0, 1]")
        if not self.distribution_index >= 0:
            raise ConfigError("distribution_index must be nonnegative")

    def mutation_rate(self, n_var: int) -> float:
        if self.mutation_probability is None:
            return 1.0 / n_var
        return self.mutation_probability


def _bounds(bounds: Bounds, n_var: int) -> Tuple[FloatArray, FloatArray]:
    lower = np.broadcast_to(np.asarray(bounds[0], dtype=np.float64), (n_var,))
    upper = np.broadcast_to(np.asarray(bounds[1], dtype=np.float64), (n_var,))
    return lower, upper


def latin_hypercube(
    samples: int, n_var: int, bounds: Bounds, rng: np.random.Generator
) -> FloatArray:
    """Draw a (samples, n_var) design with one point per stratum in every column."""
    if samples < 1 or n_var < 1:
        raise ContractViolation("Latin hypercube needs samples and variables")
    lower, upper = _bounds(bounds, n_var)
    if not (np.isfinite(lower).all() and np.isfinite(upper).all()):
        raise ConfigError("Latin hypercube sampling needs finite bounds")
    unit = qmc.LatinHypercube(d=n_var, seed=rng).random(samples)
    return np.asarray(lower + unit * (upper - lower), dtype=np.float64)


def sbx(
    p: ArrayLike,
    q: ArrayLike,
    params: OperatorParams,
    bounds: Bounds,
    rng: np.random.Generator,
) -> FloatArray:
    """Get the first child of a simulated binary crossover of p and q.

    Rows of p and q are crossed pairwise when both are (k, D) matrices. The
    child stays on p's side of the midpoint, so it keeps nearer p than q.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ContractViolation(f"Parents differ in shape ({p.shape} vs {q.shape})")
    lower, upper = _bounds(bounds, p.shape[-1])
    eta = params.distribution_index
    u = rng.random(p.shape)
    beta = np.where(
        u <= 0.5,
        (2.0 * u) ** (1.0 / (eta + 1.0)),
        (2.0 * (1.0 - u)) ** (-1.0 / (eta + 1.0)),
    )
    beta[rng.random(p.shape) >= params.crossover_probability] = 1.0
    child = 0.5 * ((1.0 + beta) * p + (1.0 - beta) * q)
    return np.clip(child, lower, upper)


def polynomial_mutation(
    r: ArrayLike, params: OperatorParams, bounds: Bounds, rng: np.random.Generator
) -> FloatArray:
    """Perturb each component with the configured probability.

    Accepts a single vector or a (k, D) matrix of them.
    """
    x = np.array(r, dtype=np.float64)
    n = x.shape[-1]
    lower, upper = _bounds(bounds, n)
    eta = params.distribution_index
    span = np.broadcast_to(upper - lower, x.shape)
    site = (rng.random(x.shape) < params.mutation_rate(n)) & (span > 0)
    u = rng.random(x.shape)
    if not site.any():
        return np.clip(x, lower, upper)
    lo = np.broadcast_to(lower, x.shape)[site]
    xs, sp, us = x[site], span[site], u[site]
    delta_l = (xs - lo) / sp
    delta_r = (lo + sp - xs) / sp
    down = us < 0.5
    delta_q = np.empty(len(xs))
    val = 2.0 * us + (1.0 - 2.0 * us) * (1.0 - delta_l) ** (eta + 1.0)
    delta_q[down] = val[down] ** (1.0 / (eta + 1.0)) - 1.0
    val = 2.0 * (1.0 - us) + 2.0 * (us - 0.5) * (1.0 - delta_r) ** (eta + 1.0)
    delta_q[~down] = 1.0 - val[~down] ** (1.0 / (eta + 1.0))
    x[site] = xs + delta_q * sp
    return np.clip(x, lower, upper)


def tournament_indices(
    fitness: ArrayLike, count: int, rng: np.random.Generator
) -> NDArray[np.intp]:
    """Run count binary tournaments over indices, lower fitness winning."""
    f = np.asarray(fitness, dtype=np.float64)
    if len(f) == 0:
        raise ContractViolation("Tournament selection needs a non-empty population")
    if count < 0:
        raise ContractViolation("Tournament count must be nonnegative")
    a, b = rng.integers(0, len(f), size=(2, count))
    coin = rng.random(count) < 0.5
    pick_a = (f[a] < f[b]) | ((f[a] == f[b]) & coin)
    return np.where(pick_a, a, b).astype(np.intp)


def binary_tournament(
    pop: Population, fitness: ArrayLike, count: int, rng: np.random.Generator
) -> Population:
    """Select count members of pop by binary tournament."""
    if len(pop) == 0:
        raise ContractViolation("Tournament selection needs a non-empty population")
    if len(np.asarray(fitness)) != len(pop):
        raise ContractViolation("Fitness and population differ in length")
    return pop.take(tournament_indices(fitness, count, rng))
