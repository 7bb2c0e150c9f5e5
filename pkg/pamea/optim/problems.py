import math
import re

from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional

import numpy as np

from numpy.typing import ArrayLike, NDArray

from . import ConfigError, ContractViolation
from .core import FloatArray, Population

FAMILY = "desk-smop"
DEFAULT_TARGET = 0.6
MULTIMODAL_AMPLITUDE = 0.1


class Landscape(Enum):
    SEPARABLE = "separable"
    MULTIMODAL = "multimodal"
    DECEPTIVE = "deceptive"

    @classmethod
    def parse(cls, name: str) -> "Landscape":
        name = name.casefold()
        if name == "easy":
            return cls.SEPARABLE
        try:
            return cls(name)
        except ValueError:
            raise ConfigError(f"Unknown landscape '{name}'")


def default_sparsity(n_var: int, n_obj: int = 2) -> int:
    """Number of nonzero variables in a Pareto-optimal solution."""
    return math.ceil(0.1 * (n_var - n_obj + 1))


@dataclass(frozen=True, eq=False)
class SparseProblem:
    """A bi-objective problem whose Pareto set is known and sparse.

    Variable 0 is the position variable. The remaining support variables must
    hit their targets, and every other variable must be zero.
    """

    n_var: int
    landscape: Landscape
    support: NDArray[np.intp]
    targets: FloatArray
    seed: Optional[int] = None
    n_obj: int = 2

    @classmethod
    def create(
        cls,
        n_var: int,
        landscape: Landscape = Landscape.SEPARABLE,
        theta: Optional[int] = None,
        seed: Optional[int] = None,
    ) -> "SparseProblem":
        if n_var < 2:
            raise ConfigError("A sparse problem needs at least two variables")
        theta = default_sparsity(n_var) if theta is None else theta
        if not 1 <= theta <= n_var:
            raise ConfigError(f"Sparsity {theta} is outside [1, {n_var}]")
        if seed is not None and seed < 0:
            raise ConfigError(f"Problem seed {seed} is negative")
        if seed is None:
            support = np.arange(theta)
            targets = np.full(theta, DEFAULT_TARGET)
        else:
            rng = np.random.default_rng(seed)
            rest = rng.choice(np.arange(1, n_var), size=theta - 1, replace=False)
            support = np.concatenate([[0], np.sort(rest)])
            targets = rng.uniform(0.3, 0.8, size=theta)
        targets[0] = 0.5
        return cls(n_var, landscape, support.astype(np.intp), targets, seed)

    @property
    def lower(self) -> FloatArray:
        return np.zeros(self.n_var)

    @property
    def upper(self) -> FloatArray:
        return np.ones(self.n_var)

    @property
    def theta(self) -> int:
        return len(self.support)

    @property
    def id(self) -> str:
        parts = [FAMILY, self.landscape.value, f"D={self.n_var}"]
        if self.theta != default_sparsity(self.n_var):
            parts.append(f"theta={self.theta}")
        if self.seed is not None:
            parts.append(f"seed={self.seed}")
        return ":".join(parts)

    def _off_support(self) -> NDArray[np.bool_]:
        off = np.ones(self.n_var, dtype=np.bool_)
        off[self.support] = False
        return off

    def distance(self, x: FloatArray) -> FloatArray:
        """Get g, the distance of each row from the Pareto set configuration."""
        t = x[:, self.support[1:]] - self.targets[1:]
        h = t**2
        if self.landscape is Landscape.MULTIMODAL:
            h = h + MULTIMODAL_AMPLITUDE * (1.0 - np.cos(2.0 * np.pi * t))
        z = x[:, self._off_support()]
        if self.landscape is Landscape.DECEPTIVE:
            d = np.where(z > 0, 0.1 + 0.1 * (1.0 - z) ** 2, 0.0)
        else:
            d = np.abs(z)
        return np.asarray(h.sum(axis=1) + d.sum(axis=1), dtype=np.float64)

    def evaluate(self, x: ArrayLike) -> FloatArray:
        """Get the objectives of one decision vector or of every row of a matrix."""
        arr = np.asarray(x, dtype=np.float64)
        rows = np.atleast_2d(arr)
        if rows.ndim != 2 or rows.shape[1] != self.n_var:
            raise ContractViolation(
                f"Expected vectors of length {self.n_var}, got shape {arr.shape}"
            )
        if (rows < self.lower).any() or (rows > self.upper).any():
            raise ContractViolation("Decision vector lies outside [0, 1]")
        g = self.distance(rows)
        pos = rows[:, 0]
        f = np.column_stack([pos * (1.0 + g), (1.0 - pos) * (1.0 + g)])
        return f[0] if arr.ndim == 1 else f

    def sample_front(self, n: int) -> FloatArray:
        """Get n evenly spaced points of the front f1 + f2 = 1."""
        if n < 2:
            raise ContractViolation("Sampling a front needs at least two points")
        t = np.linspace(0.0, 1.0, n)
        return np.column_stack([t, 1.0 - t])

    def pareto_set_sample(self, x1: float) -> FloatArray:
        """Get the Pareto-optimal decision vector at position x1."""
        x = np.zeros(self.n_var)
        x[self.support] = self.targets
        x[0] = x1
        return x

    def support_recovered(self, pop: Population, spurious: int = 2) -> bool:
        """Check whether some member activates the whole support plus few extras."""
        if len(pop) == 0:
            return False
        covers = pop.masks[:, self.support].all(axis=1)
        extras = pop.masks[:, self._off_support()].sum(axis=1)
        return bool((covers & (extras <= spurious)).any())


def _parse_int(key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"Problem parameter {key} must be an integer, not '{value}'")


def parse_problem_id(problem_id: str) -> SparseProblem:
    """Build a problem from an id such as desk-smop:easy:D=500:seed=7."""
    parts = problem_id.strip().split(":")
    if len(parts) < 2 or parts[0].casefold() != FAMILY:
        raise ConfigError(f"Unknown problem id '{problem_id}'")
    landscape = Landscape.parse(parts[1])
    params: Dict[str, int] = {}
    for part in parts[2:]:
        m = re.fullmatch(r"(D|theta|seed)=(.+)", part)
        if not m:
            raise ConfigError(f"Unknown problem parameter '{part}' in '{problem_id}'")
        params[m[1]] = _parse_int(m[1], m[2])
    return SparseProblem.create(
        params.get("D", 100),
        landscape,
        theta=params.get("theta"),
        seed=params.get("seed"),
    )
