import os
import re

from logging import DEBUG
from unittest.mock import Mock, patch

import numpy as np
import pytest

from pamea.optim import ConfigError, ContractViolation
from pamea.optim.core import Evaluator, Population
from pamea.optim.engine import (
    AblationVariant,
    PameaConfig,
    _anneal_mask,
    _exploit_mask,
    annealing_search,
    apv_compute,
    cpv_calculate,
    exploitation_search,
    initialize,
    run,
    variable_clustering,
)
from pamea.optim.operators import OperatorParams
from pamea.optim.problems import SparseProblem, parse_problem_id

slow = pytest.mark.skipif(not os.getenv("PAMEA_SLOW"), reason="set PAMEA_SLOW=1")


def _random_pop(rng, n, d):
    density = rng.random()
    masks = rng.random((n, d)) < density
    return Population(masks, rng.random((n, d)))


def _small_config(**kwargs):
    settings = dict(population_size=8, max_evaluations=100, reference_points=200)
    settings.update(kwargs)
    return PameaConfig(**settings)


def test_variant_parse():
    assert AblationVariant.parse("no-annealing") is AblationVariant.NO_ANNEALING
    assert AblationVariant.parse(" FULL ") is AblationVariant.FULL
    with pytest.raises(ConfigError):
        AblationVariant.parse("greedy")


def test_config_budget_and_validation():
    c = PameaConfig()
    assert c.budget(300) == 30_000
    assert c.setup_cost(300) == 400
    c.validate(300)
    for bad in (
        PameaConfig(population_size=7),
        PameaConfig(population_size=2),
        PameaConfig(sampling_cycles=0),
        PameaConfig(reference_points=1),
        PameaConfig(seed=-1),
        PameaConfig(max_evaluations=0),
        PameaConfig(max_evaluations=399),
    ):
        with pytest.raises(ConfigError):
            bad.validate(300)
    PameaConfig(max_evaluations=400).validate(300)


def test_config_snapshot():
    c = PameaConfig(
        population_size=20,
        max_evaluations=5000,
        operators=OperatorParams(mutation_probability=0.05),
        seed=12,
        variant=AblationVariant.ANNEALING_ONLY,
    )
    data = c.snapshot()
    assert data["variant"] == "annealing_only"
    assert data["operators"]["mutation_probability"] == 0.05
    assert PameaConfig.from_snapshot(data) == c
    with pytest.raises(ConfigError):
        PameaConfig.from_snapshot({"population": 3})
    with pytest.raises(ConfigError):
        PameaConfig.from_snapshot({"operators": 3})


def test_apv_bounds():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        pop = _random_pop(rng, int(rng.integers(1, 20)), int(rng.integers(1, 30)))
        rate = rng.random()
        apv = apv_compute(pop, rate)
        assert (apv >= (1 - rate) / 2 - 1e-12).all()
        assert (apv <= (1 + rate) / 2 + 1e-12).all()
        assert np.ptp(apv) <= rate + 1e-12
    pop = _random_pop(rng, 10, 30)
    assert (apv_compute(pop, 0.0) == 0.5).all()
    assert apv_compute(pop, 1.0).tolist() == pop.masks.mean(axis=0).tolist()
    with pytest.raises(ContractViolation):
        apv_compute(pop, 1.5)
    with pytest.raises(ContractViolation):
        apv_compute(Population.empty(3), 0.5)


@pytest.mark.parametrize("d", [10, 100, 1000])
def test_variable_clustering_partitions(d):
    rng = np.random.default_rng(d)
    for _ in range(20):
        pop = _random_pop(rng, 10, d)
        apv = apv_compute(pop, rng.random())
        grouping = variable_clustering(pop, apv)
        flat = np.sort(np.concatenate(grouping.groups))
        assert flat.tolist() == list(range(d))
        rho = pop.masks.sum(axis=1).mean() / d
        assert grouping.group_size == min(max(int(np.floor(rho * d + 0.5)), 1), d)
        for g, p in zip(grouping.groups, grouping.probs):
            assert abs(apv[g].mean() - p) <= 1e-12
        assert len(grouping.groups[0]) == grouping.group_size
        # Groups are cut from the ranking, so earlier groups never hold lower apv.
        for g, h in zip(grouping.groups, grouping.groups[1:]):
            assert apv[g].min() >= apv[h].max()


def test_variable_clustering_rounds_halves_up():
    masks = np.zeros((2, 4), dtype=bool)
    masks[0, :2] = True
    masks[1, :1] = True
    pop = Population(masks, np.zeros((2, 4)))
    assert variable_clustering(pop, apv_compute(pop, 1.0)).group_size == 2
    empty = Population(np.zeros((2, 4), dtype=bool), np.zeros((2, 4)))
    assert variable_clustering(empty, apv_compute(empty, 1.0)).group_size == 1
    with pytest.raises(ContractViolation):
        variable_clustering(pop, np.zeros(3))


def test_exploitation_stays_near_the_template():
    rng = np.random.default_rng(1)
    d = 100
    for _ in range(10_000):
        p = rng.random(d) < rng.random()
        q = rng.random(d) < rng.random()
        child = _exploit_mask(p, q, rng.random(d), rng)
        assert (child != p).sum() <= 2


def test_exploitation_prefers_high_cpv():
    rng = np.random.default_rng(2)
    p = np.zeros(4, dtype=bool)
    q = np.array([True, True, False, False])
    cpv = np.array([1.0, 0.0, 0.5, 0.5])
    gained = np.zeros(4)
    for _ in range(2000):
        gained += _exploit_mask(p, q, cpv, rng) & ~p
    assert gained[0] > gained[1]


def test_annealing_is_local():
    rng = np.random.default_rng(3)
    d = 100
    for _ in range(100):
        pop = _random_pop(rng, 4, d)
        grouping = variable_clustering(pop, apv_compute(pop, rng.random()))
        group_of = np.empty(d, dtype=int)
        for i, g in enumerate(grouping.groups):
            group_of[g] = i
        p, q = pop.masks[0], pop.masks[1]
        differ = p ^ q
        for _ in range(100):
            child, written = _anneal_mask(p, q, grouping, rng)
            changed = np.flatnonzero(child != p)
            assert set(changed.tolist()) <= set(written.tolist())
            touched = set(group_of[written].tolist())
            assert len(touched) <= 2
            if len(touched) == 2:
                # One of the groups is only written where the parents differ.
                assert any(
                    differ[written[group_of[written] == g]].all() for g in touched
                )


def test_cpv_all_equal():
    problem = Mock(
        n_var=5,
        lower=np.zeros(5),
        upper=np.ones(5),
        evaluate=Mock(side_effect=lambda x: np.zeros((len(x), 2))),
    )
    e = Evaluator(problem)
    cpv = cpv_calculate(e, 3, np.random.default_rng(0))
    assert cpv.tolist() == [0.5] * 5
    assert e.evaluations == 15
    with pytest.raises(ContractViolation):
        cpv_calculate(e, 0, np.random.default_rng(0))


def test_cpv_ranks_the_support_first():
    problem = SparseProblem.create(20)
    e = Evaluator(problem)
    cpv = cpv_calculate(e, 1, np.random.default_rng(4))
    assert e.evaluations == 20
    assert ((cpv >= 0) & (cpv <= 1)).all()
    assert cpv[1] == 1.0
    assert cpv[2:].max() < 1.0


def test_initialize():
    problem = SparseProblem.create(30)
    e = Evaluator(problem)
    cpv = np.zeros(30)
    cpv[:3] = 1.0
    pop = initialize(e, 40, cpv, np.random.default_rng(5))
    assert len(pop) == 40
    assert e.evaluations == 40
    assert len(pop.pending) == 0
    counts = pop.masks.sum(axis=0)
    assert counts[:3].mean() > counts[3:].mean()
    with pytest.raises(ContractViolation):
        initialize(e, 4, np.zeros(29), np.random.default_rng(5))


def test_searches_make_one_child_per_pair():
    rng = np.random.default_rng(6)
    pop = _random_pop(rng, 8, 12)
    bounds = (np.zeros(12), np.ones(12))
    ops = OperatorParams()
    kids = exploitation_search(pop, rng.random(12), ops, bounds, rng)
    assert len(kids) == 4
    assert len(kids.pending) == 4
    grouping = variable_clustering(pop, apv_compute(pop, 0.5))
    kids = annealing_search(pop, grouping, ops, bounds, rng)
    assert len(kids) == 4
    assert ((kids.reals >= 0) & (kids.reals <= 1)).all()
    with pytest.raises(ContractViolation):
        exploitation_search(pop.take(range(7)), rng.random(12), ops, bounds, rng)


def test_run_accounts_for_every_evaluation():
    problem = parse_problem_id("desk-smop:easy:D=20")
    record = run(problem, _small_config(seed=1))
    assert record.evaluations == 100
    assert record.generations == 9
    assert record.evaluations == 1 * 20 + 8 + record.generations * 8
    assert len(record.trajectory) == record.generations + 1
    assert [p.fe for p in record.trajectory][:2] == [28, 36]
    assert len(record.population) == 8
    assert len(record.population.pending) == 0
    assert record.problem_id == "desk-smop:separable:D=20"
    assert record.seed == 1


def test_run_budget_equal_to_setup():
    problem = parse_problem_id("desk-smop:easy:D=20")
    record = run(problem, _small_config(max_evaluations=28))
    assert record.generations == 0
    assert len(record.trajectory) == 1
    with pytest.raises(ConfigError):
        run(problem, _small_config(max_evaluations=27))


def test_run_is_deterministic():
    problem = parse_problem_id("desk-smop:multimodal:D=30:seed=2")
    a = run(problem, _small_config(seed=5, max_evaluations=200))
    b = run(problem, _small_config(seed=5, max_evaluations=200))
    c = run(problem, _small_config(seed=6, max_evaluations=200))
    assert a.population.masks.tolist() == b.population.masks.tolist()
    assert a.population.reals.tolist() == b.population.reals.tolist()
    assert [p.igd for p in a.trajectory] == [p.igd for p in b.trajectory]
    assert a.population.reals.tolist() != c.population.reals.tolist()


@pytest.mark.parametrize("variant", list(AblationVariant))
def test_run_variants(variant):
    problem = parse_problem_id("desk-smop:deceptive:D=20")
    record = run(problem, _small_config(variant=variant))
    rates = [p.rate for p in record.trajectory]
    if variant is AblationVariant.NO_ANNEALING:
        assert rates == [1.0] * len(rates)
    else:
        assert rates == sorted(rates)
        assert rates[0] == 28 / 100


@patch("pamea.optim.engine.logger")
def test_run_logs_the_apv_summary(logger):
    problem = parse_problem_id("desk-smop:easy:D=20")
    run(problem, _small_config(variant=AblationVariant.NO_ANNEALING))
    lines = [c.args[1] for c in logger.log.call_args_list if c.args[0] == DEBUG]
    summaries = [s for s in lines if s.startswith("Generation")]
    assert len(summaries) == 9
    for s in summaries:
        m = re.search(r"rate=(\S+) .* spread=(\S+) bit-fraction spread=(\S+)", s)
        assert m and m[1] == "1.0000" and m[2] == m[3]


@slow
def test_cpv_separates_the_support():
    problem = parse_problem_id("desk-smop:easy:D=100:theta=10")
    support = problem.support
    off = np.setdiff1d(np.arange(100), support)
    hits = 0
    for seed in range(30):
        cpv = cpv_calculate(Evaluator(problem), 1, np.random.default_rng(seed))
        hits += cpv[support].min() > cpv[off].max()
    assert hits >= 28


@slow
def test_run_recovers_the_support():
    problem = parse_problem_id("desk-smop:easy:D=500:theta=25")
    ratios, recovered = [], 0
    for seed in range(10):
        record = run(problem, PameaConfig(seed=seed))
        points = list(record.trajectory)
        ratios.append(points[-1].igd / points[0].igd)
        recovered += problem.support_recovered(record.population)
        assert record.evaluations == 500 + 100 + record.generations * 100
    assert np.median(ratios) <= 0.2
    assert recovered >= 8

