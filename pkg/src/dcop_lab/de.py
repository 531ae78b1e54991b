"""Differential evolution (rand/1/bin) for dynamic constrained problems.

Selection uses the feasibility rules, changes are detected by re-evaluating
two sentinel members at the top of every generation, and all diversity
behaviour is delegated to a mechanism object (see ``mechanisms``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

from .metrics import population_cv
from .problems import (
    BudgetExhausted,
    ConfigurationError,
    EnvironmentState,
    Evaluation,
    ProblemInstance,
    SearchSpace,
    evaluate,
)
from .trace import GenerationRecord, RunTrace

if TYPE_CHECKING:
    from .mechanisms import DiversityMechanism

CHANGE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class DEConfig:
    population_size: int = 20
    crossover_rate: float = 0.2
    scale_factor_range: tuple[float, float] = (0.2, 0.8)
    variant: str = "rand/1/bin"
    bound_handling: str = "clip"

    def __post_init__(self):
        if self.population_size < 4:
            raise ConfigurationError("rand/1 mutation needs a population of at least 4")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ConfigurationError("crossover rate must lie in [0, 1]")
        lo, hi = self.scale_factor_range
        if not 0.0 < lo <= hi <= 2.0:
            raise ConfigurationError("scale factor range must lie within (0, 2]")
        if self.variant != "rand/1/bin":
            raise ConfigurationError(f"unsupported DE variant {self.variant!r}")
        if self.bound_handling not in BOUND_HANDLERS:
            raise ConfigurationError(
                f"bound handling must be one of {', '.join(BOUND_HANDLERS)}, got {self.bound_handling!r}"
            )


@dataclass(slots=True)
class Individual:
    position: np.ndarray
    evaluation: Evaluation
    evaluated_at: int


@dataclass
class Population:
    members: list[Individual]
    generation: int = 0

    def __len__(self) -> int:
        return len(self.members)

    def __getitem__(self, i: int) -> Individual:
        return self.members[i]

    def positions(self) -> np.ndarray:
        return np.array([m.position for m in self.members])

    def best_index(self) -> int:
        best = 0
        for i in range(1, len(self.members)):
            if strictly_better(self.members[i].evaluation, self.members[best].evaluation):
                best = i
        return best


def feasibility_better(a: Evaluation, b: Evaluation) -> bool:
    """True if ``a`` is at least as good as ``b`` under the feasibility rules.

    Feasible beats infeasible, feasible pairs compare objectives and infeasible
    pairs compare total violation. Exact ties return True.
    """
    if a.feasible != b.feasible:
        return a.feasible
    if a.feasible:
        return a.objective <= b.objective
    return a.total_violation <= b.total_violation


def strictly_better(challenger: Evaluation, incumbent: Evaluation) -> bool:
    # ties keep the incumbent
    return not feasibility_better(incumbent, challenger)


def mutate_rand1(
    pop: Population | np.ndarray, target_index: int, F: float, rng: np.random.Generator
) -> np.ndarray:
    """``x_r0 + F (x_r1 - x_r2)`` with r0, r1, r2 and the target all distinct."""
    positions = pop.positions() if isinstance(pop, Population) else np.asarray(pop)
    n = len(positions)
    if n < 4:
        raise ConfigurationError("rand/1 mutation needs a population of at least 4")
    r = rng.choice(n - 1, size=3, replace=False)
    r = r + (r >= target_index)
    return positions[r[0]] + F * (positions[r[1]] - positions[r[2]])


def crossover_bin(
    target: np.ndarray, mutant: np.ndarray, CR: float, rng: np.random.Generator
) -> np.ndarray:
    target = np.asarray(target, dtype=float)
    mutant = np.asarray(mutant, dtype=float)
    D = len(target)
    take = rng.random(D) < CR
    take[rng.integers(D)] = True
    return np.where(take, mutant, target)


def repair_bounds(x: np.ndarray, space: SearchSpace, rng: np.random.Generator) -> np.ndarray:
    """Resample every out-of-bounds component uniformly inside its interval."""
    out = np.array(x, dtype=float)
    for i, (lo, hi) in enumerate(zip(space.lower, space.upper)):
        if not lo <= out[i] <= hi:
            out[i] = rng.uniform(lo, hi)
    return out


def clip_bounds(x: np.ndarray, space: SearchSpace, rng: np.random.Generator | None = None) -> np.ndarray:
    """Project every out-of-bounds component onto the nearest bound."""
    return np.clip(np.asarray(x, dtype=float), space.lower, space.upper)


BOUND_HANDLERS = {"clip": clip_bounds, "resample": repair_bounds}


def fix_bounds(x: np.ndarray, space: SearchSpace, rng: np.random.Generator, mode: str = "clip") -> np.ndarray:
    return BOUND_HANDLERS[mode](x, space, rng)


class RunContext:
    """Mutable per-run state: budget, RNG and the best-so-far of each period."""

    def __init__(
        self,
        problem: ProblemInstance,
        config: DEConfig,
        rng: np.random.Generator,
        env: EnvironmentState | None = None,
    ):
        self.problem = problem
        self.config = config
        self.rng = rng
        self.env = env or EnvironmentState.for_dynamics(problem.dynamics)
        if self.env.change_frequency_fc < config.population_size:
            raise ConfigurationError("change frequency must be at least the population size")
        self.truncated = False
        self.population: Population | None = None
        self.best_period = -1
        self.best: Evaluation | None = None

    def _seed_period_best(self, t: int) -> Evaluation | None:
        # Measurement only (not charged): members carried over from the previous
        # period are solutions already found, so they count towards the new best.
        best = None
        if self.population is not None:
            for m in self.population.members:
                ev = self.problem.evaluate_at(m.position, t)
                if best is None or strictly_better(ev, best):
                    best = ev
        return best

    def evaluate(self, position: Sequence[float]) -> Individual:
        position = np.asarray(position, dtype=float)
        ev = evaluate(self.problem, position, self.env)
        t = (self.env.eval_count - 1) // self.env.change_frequency_fc
        if t != self.best_period:
            self.best_period, self.best = t, self._seed_period_best(t) or ev
        if strictly_better(ev, self.best):
            self.best = ev
        return Individual(position, ev, t)

    def random_position(self) -> np.ndarray:
        space = self.problem.space
        return self.rng.uniform(space.lower, space.upper)

    def record(self, pop: Population) -> GenerationRecord:
        best = self.best
        return GenerationRecord(
            generation=pop.generation,
            best_objective=best.objective,
            best_feasible=best.feasible,
            best_violation=best.total_violation,
            eval_count=self.env.eval_count,
            period=self.best_period,
            cv=population_cv(pop.positions()),
        )


def initialize_population(ctx: RunContext) -> Population:
    n = ctx.config.population_size
    return Population([ctx.evaluate(ctx.random_position()) for _ in range(n)])


def _differs(a: Evaluation, b: Evaluation) -> bool:
    if abs(a.objective - b.objective) > CHANGE_TOLERANCE:
        return True
    return any(abs(u - v) > CHANGE_TOLERANCE for u, v in zip(a.violations, b.violations))


def detect_change(pop: Population, ctx: RunContext) -> bool:
    """Re-evaluate the first and the middle member; report any difference."""
    changed = False
    for idx in sorted({0, len(pop) // 2}):
        old = pop.members[idx]
        fresh = ctx.evaluate(old.position)
        changed = changed or _differs(fresh.evaluation, old.evaluation)
        pop.members[idx] = fresh
    return changed


def reevaluate_population(pop: Population, ctx: RunContext) -> None:
    try:
        for i, m in enumerate(pop.members):
            pop.members[i] = ctx.evaluate(m.position)
    except BudgetExhausted:
        ctx.truncated = True
        raise


def step_generation(
    pop: Population, mechanism: "DiversityMechanism", ctx: RunContext
) -> GenerationRecord:
    pop.generation += 1
    if detect_change(pop, ctx):
        mechanism.on_change(pop, ctx)
        reevaluate_population(pop, ctx)
    cfg, rng, space = ctx.config, ctx.rng, ctx.problem.space
    f_lo, f_hi = cfg.scale_factor_range
    for i in range(len(pop)):
        F = rng.uniform(f_lo, f_hi)
        mutant = mutate_rand1(pop, i, F, rng)
        trial_pos = crossover_bin(pop.members[i].position, mutant, cfg.crossover_rate, rng)
        trial_pos = fix_bounds(trial_pos, space, rng, cfg.bound_handling)
        trial = ctx.evaluate(trial_pos)
        j = mechanism.replacement_target(i, trial, pop)
        if strictly_better(trial.evaluation, pop.members[j].evaluation):
            pop.members[j] = trial
    mechanism.post_generation(pop, ctx)
    return ctx.record(pop)


def run_de(
    problem: ProblemInstance,
    mechanism: "DiversityMechanism",
    config: DEConfig | None = None,
    seed: int = 0,
    run: int = 0,
) -> RunTrace:
    """One full run over every change period of ``problem``."""
    config = config or DEConfig()
    ctx = RunContext(problem, config, np.random.default_rng(seed))
    trace = RunTrace(
        instance=problem.id,
        mechanism=mechanism.name,
        run=run,
        seed=seed,
        change_frequency=ctx.env.change_frequency_fc,
        num_periods=ctx.env.num_periods,
    )
    pop = initialize_population(ctx)
    ctx.population = pop
    trace.records.append(ctx.record(pop))
    while ctx.env.remaining > 0:
        try:
            trace.records.append(step_generation(pop, mechanism, ctx))
        except BudgetExhausted:
            trace.records.append(ctx.record(pop))
            break
    trace.truncated = ctx.truncated
    return trace
