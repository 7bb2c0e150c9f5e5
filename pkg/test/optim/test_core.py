from unittest.mock import Mock

import numpy as np
import pytest

from pamea.optim import ContractViolation
from pamea.optim.core import (
    STREAM_LABELS,
    Evaluator,
    Population,
    RngStream,
    Solution,
    decode,
    dominance_matrix,
    dominates,
    streams,
)


def _sum_problem():
    """A fake problem whose objectives are the sum and the negated sum."""
    return Mock(
        n_var=3,
        evaluate=Mock(side_effect=lambda x: np.column_stack([x.sum(1), -x.sum(1)])),
    )


def test_dominates():
    assert dominates([1, 2], [2, 2])
    assert dominates([1, 1], [2, 2])
    assert not dominates([2, 2], [2, 2])
    assert not dominates([1, 3], [2, 2])
    assert not dominates([2, 2], [1, 2])
    with pytest.raises(ContractViolation):
        dominates([1, 2], [1, 2, 3])


def test_dominance_matrix():
    objs = np.random.default_rng(1).random((30, 2))
    dom = dominance_matrix(objs)
    assert not dom.diagonal().any()
    assert not (dom & dom.T).any()
    for i in range(30):
        for j in range(30):
            assert dom[i, j] == dominates(objs[i], objs[j])
    with pytest.raises(ContractViolation):
        dominance_matrix([1.0, 2.0])


def test_decode():
    s = Solution(np.array([True, False, True]), np.array([0.2, 0.7, 0.0]))
    assert decode(s).tolist() == [0.2, 0.0, 0.0]
    assert s.support.tolist() == [0, 2]
    assert not s.evaluated
    with pytest.raises(ContractViolation):
        Solution(np.array([True]), np.array([0.1, 0.2]))


def test_population_pending_and_take():
    pop = Population(np.eye(3, dtype=bool), np.full((3, 3), 0.5))
    assert len(pop) == 3
    assert pop.n_var == 3
    assert pop.n_obj == 2
    assert pop.pending.tolist() == [0, 1, 2]
    assert pop[0].objectives is None
    assert pop.decoded.tolist() == (np.eye(3) * 0.5).tolist()
    sub = pop.take([2, 0])
    assert sub.masks.tolist() == [[False, False, True], [True, False, False]]
    with pytest.raises(ContractViolation):
        Population(np.ones((2, 3)), np.ones((2, 4)))


def test_population_empty_and_concat():
    empty = Population.empty(4)
    assert len(empty) == 0
    assert empty.objectives.shape == (0, 2)
    a = Population(np.ones((2, 4)), np.zeros((2, 4)), [[1, 2], [3, 4]])
    both = Population.concat(a, empty, a)
    assert len(both) == 4
    assert both.objectives[:, 0].tolist() == [1, 3, 1, 3]
    assert [s.objectives.tolist() for s in a] == [[1, 2], [3, 4]]


def test_population_from_solutions():
    s = Solution(np.array([True, False]), np.array([0.1, 0.2]))
    t = Solution(np.array([False, True]), np.array([0.3, 0.4]), np.array([1.0, 0.0]))
    pop = Population.from_solutions([s, t])
    assert pop.pending.tolist() == [0]
    assert pop.objectives[1].tolist() == [1.0, 0.0]
    with pytest.raises(ContractViolation):
        Population.from_solutions([])


def test_population_nondominated():
    objs = [[1, 1], [2, 2], [0, 3], [1, 1]]
    pop = Population(np.ones((4, 2)), np.zeros((4, 2)), objs)
    assert pop.nondominated().objectives.tolist() == [[1, 1], [0, 3], [1, 1]]
    assert len(Population.empty(2).nondominated()) == 0


def test_rng_stream():
    a = RngStream(7, "init").generator.random(5)
    b = RngStream(7, "init").generator.random(5)
    c = RngStream(7, "cpv").generator.random(5)
    d = RngStream(8, "init").generator.random(5)
    assert a.tolist() == b.tolist()
    assert a.tolist() != c.tolist()
    assert a.tolist() != d.tolist()
    child = RngStream(7, "init").spawn("extra")
    assert child.label == "init/extra"
    assert child.generator.random(5).tolist() != a.tolist()


def test_streams():
    rngs = streams(3)
    assert sorted(rngs) == sorted(STREAM_LABELS)
    first = [rngs[k].random() for k in STREAM_LABELS]
    again = streams(3)
    assert first == [again[k].random() for k in STREAM_LABELS]
    assert len(set(first)) == len(first)


def test_evaluator():
    problem = _sum_problem()
    e = Evaluator(problem)
    pop = Population(
        np.array([[True, True, False], [False, False, False]]),
        np.full((2, 3), 0.25),
    )
    assert e.evaluate(pop) is pop
    assert e.evaluations == 2
    assert pop.objectives.tolist() == [[0.5, -0.5], [0.0, -0.0]]
    e.evaluate(pop)
    assert e.evaluations == 2
    problem.evaluate.assert_called_once()
    assert e.remaining(10) == 8
    assert e.remaining(1) == 0


def test_evaluator_sends_only_decoded_pending_rows():
    problem = _sum_problem()
    pop = Population(
        np.array([[True, False, True], [False, True, True]]),
        np.array([[0.1, 0.2, 0.3], [0.4, 0.5, 0.6]]),
        np.array([[1.0, 2.0], [np.nan, np.nan]]),
    )
    Evaluator(problem).evaluate(pop)
    [sent] = problem.evaluate.call_args.args
    assert sent.tolist() == [[0.0, 0.5, 0.6]]
    assert pop.objectives[0].tolist() == [1.0, 2.0]


def test_dominance_is_transitive():
    rng = np.random.default_rng(2)
    # Integer objectives make chains of dominance common.
    for _ in range(20_000):
        a, b, c = rng.integers(0, 3, size=(3, 2))
        if dominates(a, b) and dominates(b, c):
            assert dominates(a, c)
