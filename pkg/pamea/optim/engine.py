import math
import time

from dataclasses import asdict, dataclass, field
from enum import Enum
from logging import LoggerAdapter
from typing import Dict, List, Optional, Tuple

import numpy as np

from numpy.typing import NDArray

from .. import logger
from . import ConfigError, ContractViolation
from .core import (
    BoolArray,
    Evaluator,
    FloatArray,
    Population,
    Problem,
    ProbabilityVector,
    streams,
)
from .metrics import (
    IndicatorTrajectory,
    TrajectoryPoint,
    front_indicators,
    mean_sparsity,
)
from .operators import (
    Bounds,
    OperatorParams,
    binary_tournament,
    latin_hypercube,
    polynomial_mutation,
    sbx,
)
from .selection import nondominated_sort, spea2_environmental_selection, spea2_fitness

IndexArray = NDArray[np.intp]


class AblationVariant(Enum):
    FULL = "full"
    EXPLOITATION_ONLY = "exploitation_only"
    ANNEALING_ONLY = "annealing_only"
    NO_ANNEALING = "no_annealing"

    @classmethod
    def parse(cls, name: str) -> "AblationVariant":
        try:
            return cls(name.strip().lower().replace("-", "_"))
        except ValueError:
            choices = ", ".join(v.value for v in cls)
            raise ConfigError(f"Unknown variant '{name}' (expected one of {choices})")


@dataclass(frozen=True)
class PameaConfig:
    """Settings of one run. A budget of None means 100 evaluations per variable."""

    population_size: int = 100
    max_evaluations: Optional[int] = None
    sampling_cycles: int = 1
    operators: OperatorParams = field(default_factory=OperatorParams)
    seed: int = 0
    variant: AblationVariant = AblationVariant.FULL
    reference_points: int = 10_000

    def budget(self, n_var: int) -> int:
        if self.max_evaluations is None:
            return 100 * n_var
        return self.max_evaluations

    def setup_cost(self, n_var: int) -> int:
        return self.sampling_cycles * n_var + self.population_size

    def validate(self, n_var: int) -> None:
        """Check the settings against a problem of n_var variables."""
        n = self.population_size
        if n < 4 or n % 2:
            raise ConfigError(f"Population size must be even and at least 4, not {n}")
        if self.sampling_cycles < 1:
            raise ConfigError("The number of sampling cycles must be at least 1")
        if self.reference_points < 2:
            raise ConfigError("At least two reference points are needed for IGD")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("The seed must be a 64-bit unsigned integer")
        budget = self.budget(n_var)
        if budget < self.setup_cost(n_var):
            raise ConfigError(
                f"A budget of {budget} evaluations does not cover the setup cost "
                f"of {self.setup_cost(n_var)}"
            )

    def snapshot(self) -> Dict[str, object]:
        data = asdict(self)
        data["variant"] = self.variant.value
        return data

    @classmethod
    def from_snapshot(cls, data: Dict[str, object]) -> "PameaConfig":
        values = dict(data)
        ops = values.pop("operators", {})
        if not isinstance(ops, dict):
            raise ConfigError("Operator settings must be a table")
        values["variant"] = AblationVariant.parse(str(values.get("variant", "full")))
        try:
            return cls(operators=OperatorParams(**ops), **values)  # type: ignore
        except TypeError as e:
            raise ConfigError(f"Invalid configuration: {e}")


@dataclass(frozen=True)
class VariableGrouping:
    groups: List[IndexArray]
    probs: FloatArray
    group_size: int

    def __len__(self) -> int:
        return len(self.groups)


@dataclass
class RunRecord:
    """Everything a run produced, plus what is needed to reproduce it."""

    problem_id: str
    config: PameaConfig
    trajectory: IndicatorTrajectory
    population: Population
    evaluations: int
    generations: int
    seconds: float = 0.0

    @property
    def seed(self) -> int:
        return self.config.seed


def _duel(
    cpv: ProbabilityVector,
    m: IndexArray,
    n: IndexArray,
    rng: np.random.Generator,
    larger: bool,
) -> IndexArray:
    """Pick the larger (or smaller) cpv of each pair, ties going to a coin flip."""
    cm, cn = cpv[m], cpv[n]
    coin = rng.random(len(m)) < 0.5
    first = (cm > cn) if larger else (cm < cn)
    return np.where(first | ((cm == cn) & coin), m, n)


def _draw_two(
    pool: IndexArray, cpv: ProbabilityVector, rng: np.random.Generator, larger: bool
) -> Optional[int]:
    if len(pool) == 0:
        return None
    if len(pool) == 1:
        return int(pool[0])
    m, n = rng.choice(pool, size=2, replace=False)
    return int(_duel(cpv, np.array([m]), np.array([n]), rng, larger)[0])


def cpv_calculate(
    evaluator: Evaluator, samples: int, rng: np.random.Generator
) -> ProbabilityVector:
    """Score each variable by the fronts its single-variable probes land on.

    Every cycle evaluates D probes, so the cost is samples * D evaluations.
    """
    problem = evaluator.problem
    d = problem.n_var
    if samples < 1:
        raise ContractViolation("CPV construction needs at least one sampling cycle")
    values = latin_hypercube(samples, d, (problem.lower, problem.upper), rng)
    total = np.zeros(d)
    for s in range(samples):
        probes = Population(np.eye(d, dtype=np.bool_), np.tile(values[s], (d, 1)))
        evaluator.evaluate(probes)
        total += nondominated_sort(probes.objectives)
    lo, hi = total.min(), total.max()
    if hi == lo:
        return np.full(d, 0.5)
    return np.asarray(1.0 - (total - lo) / (hi - lo), dtype=np.float64)


def initialize(
    evaluator: Evaluator, n: int, cpv: ProbabilityVector, rng: np.random.Generator
) -> Population:
    """Create n evaluated members whose masks favour variables with a high cpv."""
    problem = evaluator.problem
    d = problem.n_var
    if len(cpv) != d:
        raise ContractViolation(f"cpv has length {len(cpv)}, expected {d}")
    lower, upper = problem.lower, problem.upper
    reals = lower + rng.random((n, d)) * (upper - lower)
    masks = np.zeros((n, d), dtype=np.bool_)
    for i in range(n):
        draws = math.ceil(rng.random() * d)
        m, k = rng.integers(0, d, size=(2, draws))
        masks[i, _duel(cpv, m, k, rng, larger=True)] = True
    return evaluator.evaluate(Population(masks, reals))


def _pairs(size: int, rng: np.random.Generator) -> NDArray[np.intp]:
    if size % 2:
        raise ContractViolation(f"Parents must come in pairs, got {size}")
    return rng.permutation(size).reshape(-1, 2)


def _exploit_mask(
    p: BoolArray, q: BoolArray, cpv: ProbabilityVector, rng: np.random.Generator
) -> BoolArray:
    """Flip at most one differing bit and one further bit of p, guided by cpv."""
    child = p.copy()
    index = np.flatnonzero(p ^ q)
    activate = rng.random() < 0.5
    k = _draw_two(index, cpv, rng, larger=activate)
    if k is not None:
        child[k] = activate
    activate = rng.random() < 0.5
    pool = np.flatnonzero(~child if activate else child)
    k = _draw_two(pool, cpv, rng, larger=activate)
    if k is not None:
        child[k] = activate
    return child


def _child_reals(
    parents: Population,
    pairs: IndexArray,
    params: OperatorParams,
    bounds: Bounds,
    rng: np.random.Generator,
) -> FloatArray:
    """Cross and mutate the reals of every pair at once, one child per pair."""
    p, q = parents.reals[pairs[:, 0]], parents.reals[pairs[:, 1]]
    return polynomial_mutation(sbx(p, q, params, bounds, rng), params, bounds, rng)


def exploitation_search(
    parents: Population,
    cpv: ProbabilityVector,
    params: OperatorParams,
    bounds: Bounds,
    rng: np.random.Generator,
) -> Population:
    """Create one unevaluated child per random parent pair, guided by cpv."""
    pairs = _pairs(len(parents), rng)
    masks = np.empty((len(pairs), parents.n_var), dtype=np.bool_)
    for i, (p, q) in enumerate(pairs):
        masks[i] = _exploit_mask(parents.masks[p], parents.masks[q], cpv, rng)
    reals = _child_reals(parents, pairs, params, bounds, rng)
    return Population(masks, reals, n_obj=parents.n_obj)


def apv_compute(pop: Population, rate: float) -> ProbabilityVector:
    """Map each bit's active fraction into [(1 - rate) / 2, (1 + rate) / 2]."""
    if len(pop) == 0:
        raise ContractViolation("apv needs a non-empty population")
    if not 0.0 <= rate <= 1.0:
        raise ContractViolation(f"Annealing rate {rate} is outside [0, 1]")
    return np.asarray(0.5 * (1.0 - rate) + rate * pop.masks.mean(axis=0))


def variable_clustering(pop: Population, apv: ProbabilityVector) -> VariableGrouping:
    """Cut the apv ranking into groups as large as the mean number of active bits."""
    d = pop.n_var
    if len(apv) != d:
        raise ContractViolation(f"apv has length {len(apv)}, expected {d}")
    active = pop.masks.sum(axis=1).mean() / d
    # Halves round away from zero.
    size = min(max(int(math.floor(active * d + 0.5)), 1), d)
    order = np.argsort(-apv, kind="stable")
    groups = [order[s : s + size] for s in range(0, d, size)]
    probs = np.array([apv[g].mean() for g in groups])
    return VariableGrouping(groups, probs, size)


def _anneal_mask(
    p: BoolArray, q: BoolArray, grouping: VariableGrouping, rng: np.random.Generator
) -> Tuple[BoolArray, IndexArray]:
    """Rewrite the differing bits of one group and half of another.

    Returns the child and the indices that were written.
    """
    child = p.copy()
    g = int(rng.integers(len(grouping)))
    group = grouping.groups[g]
    crossed = group[(p ^ q)[group]]
    child[crossed] = rng.random() < grouping.probs[g]
    h = int(rng.integers(len(grouping)))
    others = grouping.groups[h]
    picked = rng.choice(others, size=len(others) // 2, replace=False)
    child[picked] = rng.random() < grouping.probs[h]
    return child, np.union1d(crossed, picked)


def annealing_search(
    parents: Population,
    grouping: VariableGrouping,
    params: OperatorParams,
    bounds: Bounds,
    rng: np.random.Generator,
) -> Population:
    """Create one unevaluated child per random parent pair, guided by group odds."""
    pairs = _pairs(len(parents), rng)
    masks = np.empty((len(pairs), parents.n_var), dtype=np.bool_)
    for i, (p, q) in enumerate(pairs):
        masks[i], _ = _anneal_mask(parents.masks[p], parents.masks[q], grouping, rng)
    reals = _child_reals(parents, pairs, params, bounds, rng)
    return Population(masks, reals, n_obj=parents.n_obj)


def run(problem: Problem, config: PameaConfig) -> RunRecord:
    """Optimise problem until the evaluation budget is spent."""
    started = time.perf_counter()
    d = problem.n_var
    config.validate(d)
    log = LoggerAdapter(logger, {"run": f"{problem.id} seed={config.seed}"})
    n = config.population_size
    budget = config.budget(d)
    variant = config.variant
    bounds = (problem.lower, problem.upper)
    params = config.operators
    rngs = streams(config.seed)
    evaluator = Evaluator(problem)
    front = problem.sample_front(config.reference_points)

    log.info(f"Starting {variant.value} run with N={n}, D={d}, budget={budget}")
    cpv = cpv_calculate(evaluator, config.sampling_cycles, rngs["cpv"])
    pop = initialize(evaluator, n, cpv, rngs["init"])
    log.debug(f"Setup consumed {evaluator.evaluations} evaluations")

    def rate() -> float:
        if variant is AblationVariant.NO_ANNEALING:
            return 1.0
        return min(evaluator.evaluations / budget, 1.0)

    def record(r: float) -> None:
        igd, hv = front_indicators(pop, front)
        point = TrajectoryPoint(evaluator.evaluations, igd, hv, mean_sparsity(pop), r)
        trajectory.append(point)

    trajectory = IndicatorTrajectory()
    record(rate())
    generations = 0
    while evaluator.remaining(budget) > 0:
        r = rate()
        apv = apv_compute(pop, r)
        fraction = pop.masks.mean(axis=0)
        log.debug(
            f"Generation {generations + 1}: rate={r:.4f} "
            f"apv=[{apv.min():.4f}, {apv.max():.4f}] spread={np.ptp(apv):.4f} "
            f"bit-fraction spread={np.ptp(fraction):.4f}"
        )
        fitness = spea2_fitness(pop.objectives)
        grouping = variable_clustering(pop, apv)
        offspring = []
        for label, strategy in zip(("subpop1", "subpop2"), _strategies(variant)):
            parents = binary_tournament(pop, fitness, n, rngs["selection"])
            if strategy == "exploit":
                child = exploitation_search(parents, cpv, params, bounds, rngs[label])
            else:
                child = annealing_search(parents, grouping, params, bounds, rngs[label])
            offspring.append(child)
        children = evaluator.evaluate(Population.concat(*offspring))
        pop = spea2_environmental_selection(Population.concat(pop, children), n)
        generations += 1
        record(r)

    seconds = time.perf_counter() - started
    log.info(
        f"Finished after {generations} generations and {evaluator.evaluations} "
        f"evaluations ({seconds:.1f}s), final IGD {trajectory.final.igd:.4g}"
    )
    return RunRecord(
        problem_id=problem.id,
        config=config,
        trajectory=trajectory,
        population=pop,
        evaluations=evaluator.evaluations,
        generations=generations,
        seconds=seconds,
    )


def _strategies(variant: AblationVariant) -> Tuple[str, str]:
    """Get the offspring strategies of the two subpopulations."""
    if variant is AblationVariant.EXPLOITATION_ONLY:
        return ("exploit", "exploit")
    if variant is AblationVariant.ANNEALING_ONLY:
        return ("anneal", "anneal")
    return ("exploit", "anneal")
