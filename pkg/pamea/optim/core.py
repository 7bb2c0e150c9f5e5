import hashlib

from dataclasses import dataclass, field
from typing import Dict, Iterator, Optional, Protocol, Sequence

import numpy as np

from numpy.typing import ArrayLike, NDArray

from . import ContractViolation

FloatArray = NDArray[np.float64]
BoolArray = NDArray[np.bool_]
ProbabilityVector = FloatArray

STREAM_LABELS = ("init", "cpv", "subpop1", "subpop2", "selection")


class Problem(Protocol):
    """Anything the engine can optimise: box bounds and batch evaluation."""

    @property
    def n_var(self) -> int: ...

    @property
    def n_obj(self) -> int: ...

    @property
    def lower(self) -> FloatArray: ...

    @property
    def upper(self) -> FloatArray: ...

    @property
    def id(self) -> str: ...

    def evaluate(self, x: ArrayLike) -> FloatArray: ...

    def sample_front(self, n: int) -> FloatArray: ...


def dominates(a: ArrayLike, b: ArrayLike) -> bool:
    """Check whether objective vector a Pareto-dominates b (minimisation)."""
    fa = np.asarray(a, dtype=np.float64)
    fb = np.asarray(b, dtype=np.float64)
    if fa.shape != fb.shape or fa.ndim != 1:
        raise ContractViolation(f"Cannot compare objectives {fa.shape} and {fb.shape}")
    return bool(np.all(fa <= fb) and np.any(fa < fb))


def dominance_matrix(objs: ArrayLike) -> BoolArray:
    """Entry (i, j) is true when row i dominates row j."""
    f = np.asarray(objs, dtype=np.float64)
    if f.ndim != 2:
        raise ContractViolation(f"Expected an (n, m) objective matrix, got {f.shape}")
    le = np.all(f[:, None, :] <= f[None, :, :], axis=2)
    lt = np.any(f[:, None, :] < f[None, :, :], axis=2)
    return le & lt


@dataclass
class Solution:
    """A binary activation mask and a real vector, combined by Hadamard product."""

    mask: BoolArray
    reals: FloatArray
    objectives: Optional[FloatArray] = None

    def __post_init__(self) -> None:
        self.mask = np.asarray(self.mask, dtype=np.bool_)
        self.reals = np.asarray(self.reals, dtype=np.float64)
        if self.mask.shape != self.reals.shape or self.mask.ndim != 1:
            raise ContractViolation(
                f"Mask {self.mask.shape} and reals {self.reals.shape} differ in length"
            )

    @property
    def support(self) -> NDArray[np.intp]:
        return np.flatnonzero(self.mask)

    @property
    def evaluated(self) -> bool:
        return self.objectives is not None


def decode(s: Solution) -> FloatArray:
    """Get the decision vector of a solution."""
    if s.mask.shape != s.reals.shape:
        raise ContractViolation("Mask and reals differ in length")
    return np.where(s.mask, s.reals, 0.0)


class Population:
    """An ordered multiset of solutions stored as stacked arrays.

    Objectives are a cache: rows whose objectives are NaN have not been evaluated.
    """

    def __init__(
        self,
        masks: ArrayLike,
        reals: ArrayLike,
        objectives: Optional[ArrayLike] = None,
        n_obj: int = 2,
    ) -> None:
        self.masks = np.atleast_2d(np.asarray(masks, dtype=np.bool_))
        self.reals = np.atleast_2d(np.asarray(reals, dtype=np.float64))
        if self.masks.shape != self.reals.shape:
            raise ContractViolation(
                f"Masks {self.masks.shape} and reals {self.reals.shape} differ in shape"
            )
        if objectives is None:
            self.objectives = np.full((len(self.masks), n_obj), np.nan)
        else:
            objs = np.asarray(objectives, dtype=np.float64)
            width = n_obj if objs.size == 0 else -1
            self.objectives = objs.reshape(len(self.masks), width)

    @classmethod
    def empty(cls, n_var: int, n_obj: int = 2) -> "Population":
        return cls(np.zeros((0, n_var)), np.zeros((0, n_var)), n_obj=n_obj)

    @classmethod
    def from_solutions(
        cls, solutions: Sequence[Solution], n_obj: int = 2
    ) -> "Population":
        if not solutions:
            raise ContractViolation("Cannot build a population from no solutions")
        objs = [
            s.objectives if s.objectives is not None else np.full(n_obj, np.nan)
            for s in solutions
        ]
        return cls([s.mask for s in solutions], [s.reals for s in solutions], objs)

    @classmethod
    def concat(cls, *pops: "Population") -> "Population":
        return cls(
            np.concatenate([p.masks for p in pops]),
            np.concatenate([p.reals for p in pops]),
            np.concatenate([p.objectives for p in pops]),
        )

    def __len__(self) -> int:
        return len(self.masks)

    def __getitem__(self, i: int) -> Solution:
        objs = self.objectives[i]
        return Solution(
            self.masks[i].copy(),
            self.reals[i].copy(),
            None if np.isnan(objs).any() else objs.copy(),
        )

    def __iter__(self) -> Iterator[Solution]:
        for i in range(len(self)):
            yield self[i]

    @property
    def n_var(self) -> int:
        return int(self.masks.shape[1])

    @property
    def n_obj(self) -> int:
        return int(self.objectives.shape[1])

    @property
    def pending(self) -> NDArray[np.intp]:
        """Indices of members whose objectives have not been computed."""
        return np.flatnonzero(np.isnan(self.objectives).any(axis=1))

    @property
    def decoded(self) -> FloatArray:
        return np.where(self.masks, self.reals, 0.0)

    def take(self, indices: ArrayLike) -> "Population":
        idx = np.asarray(indices, dtype=np.intp)
        return Population(self.masks[idx], self.reals[idx], self.objectives[idx])

    def nondominated(self) -> "Population":
        """Get the members no other member dominates."""
        if len(self) == 0:
            return self
        dominated = dominance_matrix(self.objectives).any(axis=0)
        return self.take(np.flatnonzero(~dominated))


@dataclass
class RngStream:
    """A named, reproducible random stream derived from a master seed."""

    seed: int
    label: str
    _generator: Optional[np.random.Generator] = field(default=None, repr=False)

    def _spawn_key(self) -> int:
        digest = hashlib.sha256(self.label.encode()).digest()
        return int.from_bytes(digest[:8], "little")

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            seq = np.random.SeedSequence(
                entropy=self.seed, spawn_key=(self._spawn_key(),)
            )
            self._generator = np.random.Generator(np.random.PCG64(seq))
        return self._generator

    def spawn(self, label: str) -> "RngStream":
        return RngStream(self.seed, f"{self.label}/{label}")


def streams(
    seed: int, labels: Sequence[str] = STREAM_LABELS
) -> Dict[str, np.random.Generator]:
    """Get one generator per concern, all derived from a master seed."""
    return {label: RngStream(seed, label).generator for label in labels}


class Evaluator:
    """Fills cached objectives in batches and counts evaluations."""

    def __init__(self, problem: Problem) -> None:
        self.problem = problem
        self.evaluations = 0

    def evaluate(self, pop: Population) -> Population:
        """Evaluate the members of pop that have no objectives yet, in place."""
        pending = pop.pending
        if len(pending):
            pop.objectives[pending] = self.problem.evaluate(pop.take(pending).decoded)
            self.evaluations += len(pending)
        return pop

    def remaining(self, budget: int) -> int:
        return max(budget - self.evaluations, 0)
