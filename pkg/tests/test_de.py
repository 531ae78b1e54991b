import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from dcop_lab.de import (
    DEConfig,
    Individual,
    RunContext,
    clip_bounds,
    crossover_bin,
    detect_change,
    feasibility_better,
    initialize_population,
    mutate_rand1,
    reevaluate_population,
    repair_bounds,
    run_de,
    step_generation,
    strictly_better,
)
from dcop_lab.mechanisms import MECHANISM_NAMES, make_mechanism
from dcop_lab.problems import (
    BudgetExhausted,
    ConfigurationError,
    DynamicParams,
    Evaluation,
    make_problem,
)


class ScriptedRng:
    """Stands in for a Generator where a test needs fixed index draws."""

    def __init__(self, picks):
        self.picks = np.asarray(picks)

    def choice(self, n, size, replace):
        return self.picks.copy()


def feas(f):
    return Evaluation(f, (), 0.0)


def infeas(v):
    return Evaluation(0.0, (v,), v)


def small_problem(name="G24_1", fc=100, periods=3):
    return make_problem(name, DynamicParams(change_frequency_fc=fc, num_periods=periods))


def test_config_validation():
    with pytest.raises(ConfigurationError):
        DEConfig(population_size=3)
    with pytest.raises(ConfigurationError):
        DEConfig(scale_factor_range=(0.0, 0.5))
    with pytest.raises(ConfigurationError):
        DEConfig(scale_factor_range=(0.5, 2.5))
    with pytest.raises(ConfigurationError):
        DEConfig(bound_handling="wrap")
    with pytest.raises(ConfigurationError):
        RunContext(small_problem(fc=10), DEConfig(), np.random.default_rng(0))


def test_mutation_arithmetic():
    pos = np.array([[1.0, 1.0], [2.0, 2.0], [0.0, 0.0], [9.0, 9.0]])
    v = mutate_rand1(pos, 3, 0.5, ScriptedRng([0, 1, 2]))
    assert np.array_equal(v, [2.0, 2.0])


def test_mutation_zero_difference():
    pos = np.array([[1.0, 2.0], [5.0, 5.0], [5.0, 5.0], [0.0, 0.0]])
    v = mutate_rand1(pos, 3, 0.7, ScriptedRng([0, 1, 2]))
    assert np.array_equal(v, pos[0])


def test_mutation_indices_skip_target():
    pos = np.eye(5)
    rng = np.random.default_rng(0)
    for target in range(5):
        for _ in range(200):
            v = mutate_rand1(pos, target, 0.5, rng)
            assert v[target] == 0.0


def test_mutation_triples_uniform():
    # one-hot rows let the triple be read back from the mutant
    pos = np.eye(5)
    rng = np.random.default_rng(11)
    counts = {}
    for _ in range(10_000):
        v = mutate_rand1(pos, 0, 0.5, rng)
        triple = (int(np.argmax(v == 1.0)), int(np.argmax(v == 0.5)), int(np.argmax(v == -0.5)))
        counts[triple] = counts.get(triple, 0) + 1
    expected = list(itertools.permutations(range(1, 5), 3))
    assert sorted(counts) == sorted(expected)
    assert chisquare([counts[t] for t in expected]).pvalue > 1e-3


def test_crossover_extremes():
    rng = np.random.default_rng(1)
    target, mutant = np.array([0.0, 0.0, 0.0]), np.array([1.0, 2.0, 3.0])
    for _ in range(50):
        assert np.array_equal(crossover_bin(target, mutant, 1.0, rng), mutant)
        assert np.count_nonzero(crossover_bin(target, mutant, 0.0, rng) != target) == 1


def _enumerated_both_from_mutant(cr, d=2):
    # exact: forced index uniform, each other component independently with prob cr
    total = 0.0
    for jrand in range(d):
        p = 1.0
        for j in range(d):
            if j != jrand:
                p *= cr
        total += p / d
    return total


def test_crossover_distribution_matches_enumeration():
    rng = np.random.default_rng(2)
    target, mutant = np.zeros(2), np.ones(2)
    n = 10_000
    hits = sum(np.all(crossover_bin(target, mutant, 0.2, rng) == 1.0) for _ in range(n))
    p = _enumerated_both_from_mutant(0.2)
    assert p == pytest.approx(0.2)
    assert abs(hits / n - p) < 3 * np.sqrt(p * (1 - p) / n)


def test_repair_bounds():
    space = make_problem("G24_1").space
    rng = np.random.default_rng(5)
    x = np.array([1.0, 2.0])
    assert np.array_equal(repair_bounds(x, space, rng), x)
    out = np.array([repair_bounds(np.array([3.5, 2.0]), space, rng) for _ in range(10_000)])
    assert np.all(out[:, 1] == 2.0)
    assert np.all((out[:, 0] >= 0) & (out[:, 0] <= 3))
    sigma = 3 / np.sqrt(12) / np.sqrt(len(out))
    assert abs(out[:, 0].mean() - 1.5) < 3 * sigma


def test_clip_bounds():
    space = make_problem("G24_1").space
    assert np.array_equal(clip_bounds(np.array([3.5, -1.0]), space), [3.0, 0.0])
    assert np.array_equal(clip_bounds(np.array([1.0, 2.0]), space), [1.0, 2.0])


def test_feasibility_rules():
    assert feasibility_better(feas(-3), feas(-2))
    assert not feasibility_better(infeas(0.1), feas(100))
    assert feasibility_better(infeas(0.1), infeas(0.2))
    assert feasibility_better(feas(1), feas(1))
    assert not strictly_better(feas(1), feas(1))
    assert strictly_better(feas(0.5), feas(1))


evals = st.one_of(
    st.builds(feas, st.floats(-10, 10)),
    st.builds(infeas, st.floats(1e-6, 10)),
)


@given(evals, evals)
def test_feasibility_order_is_total(a, b):
    assert feasibility_better(a, b) or feasibility_better(b, a)
    assert not (strictly_better(a, b) and strictly_better(b, a))


def _ctx(problem, seed=0):
    ctx = RunContext(problem, DEConfig(), np.random.default_rng(seed))
    ctx.population = initialize_population(ctx)
    return ctx


def test_no_change_on_static_problem():
    ctx = _ctx(make_problem("G24_uf"))
    for _ in range(5):
        assert not detect_change(ctx.population, ctx)


def test_change_detected_across_period_boundary():
    p = make_problem("G24_1")
    ctx = _ctx(p)
    ctx.env.eval_count = p.dynamics.change_frequency_fc
    assert detect_change(ctx.population, ctx)


def test_constraint_only_change_detected():
    p = make_problem("G24_3")
    g1, g2 = np.meshgrid(np.linspace(0, 3, 61), np.linspace(0, 4, 81))
    pts = np.column_stack([g1.ravel(), g2.ravel()])
    flip = next(
        x for x in pts
        if p.evaluate_at(x, 0).violations != p.evaluate_at(x, 1).violations
    )
    assert p.evaluate_at(flip, 0).objective == p.evaluate_at(flip, 1).objective
    ctx = _ctx(p)
    pop = ctx.population
    pop.members[0] = Individual(flip, p.evaluate_at(flip, 0), 0)
    ctx.env.eval_count = p.dynamics.change_frequency_fc
    assert detect_change(pop, ctx)


def test_reevaluation_refreshes_every_member():
    p = make_problem("G24_1")
    ctx = _ctx(p)
    ctx.env.eval_count = 2 * p.dynamics.change_frequency_fc
    reevaluate_population(ctx.population, ctx)
    assert {m.evaluated_at for m in ctx.population.members} == {2}


def test_reevaluation_on_fixed_problem_keeps_values():
    ctx = _ctx(make_problem("G24_uf"))
    before = [m.evaluation for m in ctx.population.members]
    reevaluate_population(ctx.population, ctx)
    assert [m.evaluation for m in ctx.population.members] == before


def test_reevaluation_truncates_when_budget_short():
    p = make_problem("G24_1")
    ctx = _ctx(p)
    ctx.env.eval_count = ctx.env.budget - (len(ctx.population) - 1)
    with pytest.raises(BudgetExhausted):
        reevaluate_population(ctx.population, ctx)
    assert ctx.truncated


def test_nodiv_best_monotone_on_fixed_problem():
    trace = run_de(make_problem("G24_f"), make_mechanism("nodiv"), seed=3)
    for a, b in zip(trace.records, trace.records[1:]):
        if a.period == b.period and a.best_feasible and b.best_feasible:
            assert b.best_objective <= a.best_objective


def test_run_is_reproducible():
    a = run_de(make_problem("G24_uf"), make_mechanism("nodiv"), seed=42)
    b = run_de(make_problem("G24_uf"), make_mechanism("nodiv"), seed=42)
    assert a.to_csv() == b.to_csv()


@pytest.mark.parametrize("mechanism", MECHANISM_NAMES)
def test_budget_exactness(mechanism):
    p = make_problem("G24_1")
    trace = run_de(p, make_mechanism(mechanism), seed=1)
    assert trace.records[-1].eval_count == p.dynamics.budget
    assert all(r.eval_count <= p.dynamics.budget for r in trace.records)
    assert trace.periods_covered() == list(range(11))


@settings(max_examples=25, deadline=None)
@given(
    st.sampled_from(MECHANISM_NAMES),
    st.sampled_from(["G24_1", "G24_3", "G24_6c", "G24_8a", "G24w_3"]),
    st.integers(0, 2**32 - 1),
)
def test_generation_invariants(mechanism, name, seed):
    p = small_problem(name)
    mech = make_mechanism(mechanism)
    ctx = RunContext(p, DEConfig(), np.random.default_rng(seed))
    pop = initialize_population(ctx)
    ctx.population = pop
    elitist = mechanism in ("nodiv", "crowding", "fitnessdiv")

    def feasible_best(pop):
        f = [m.evaluation.objective for m in pop.members if m.evaluation.feasible]
        return min(f) if f else None

    try:
        while ctx.env.remaining > 0:
            prev_best = feasible_best(pop)
            start_t = ctx.env.eval_count // 100
            current = {m.evaluated_at for m in pop.members} == {start_t}
            step_generation(pop, mech, ctx)
            assert len(pop) == 20
            assert np.all(pop.positions() >= 0) and np.all(pop.positions() <= [3, 4])
            one_period = current and (ctx.env.eval_count - 1) // 100 == start_t
            if elitist and one_period and prev_best is not None:
                assert feasible_best(pop) <= prev_best
    except BudgetExhausted:
        pass
    assert ctx.env.eval_count <= p.dynamics.budget


def test_best_tracker_counts_surviving_members():
    # on a fixed problem the carried-over best is still the best after a period flip
    trace = run_de(make_problem("G24_uf"), make_mechanism("nodiv"), seed=7)
    last = {}
    for r in trace.records:
        if r.period in last or r.period == 0:
            last[r.period] = r.best_objective
            continue
        assert r.best_objective <= last[r.period - 1]
        last[r.period] = r.best_objective
