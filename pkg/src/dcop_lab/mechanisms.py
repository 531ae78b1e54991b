"""Diversity mechanisms plugged into the DE loop.

Each mechanism answers three questions: which member a trial competes with,
what to do when a change is detected, and what to do after a generation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .de import Individual, Population, RunContext, fix_bounds, strictly_better
from .problems import ConfigurationError, DomainError, SearchSpace

MECHANISM_NAMES = ("cls", "crowding", "fitnessdiv", "nodiv", "opp", "ri")
# numbering used in the comparison tables
MECHANISM_NUMBERS = {"cls": 1, "crowding": 2, "fitnessdiv": 3, "nodiv": 4, "opp": 5, "ri": 6}
DISPLAY_NAMES = {
    "cls": "CLS", "crowding": "Crowding", "fitnessdiv": "Fitnessdiv",
    "nodiv": "No-div", "opp": "Opp", "ri": "RI",
}

_DEGENERATE_CHAOS_SEEDS = (0.25, 0.5, 0.75)


@dataclass(frozen=True)
class MechanismConfig:
    ri_replacement_rate: float = 0.10
    cls_chaos_seed: float = 0.37
    cls_initial_radius_fraction: float = 0.2
    cls_steps_per_generation: int = 5
    cls_decay: float = 0.9
    opposition_mode: str = "per-generation-full"

    def __post_init__(self):
        if not 0.0 < self.ri_replacement_rate < 1.0:
            raise ConfigurationError("ri.rate must lie in (0, 1)")
        z = self.cls_chaos_seed
        if not 0.0 < z < 1.0 or z in _DEGENERATE_CHAOS_SEEDS:
            raise ConfigurationError("cls.z0 must lie in (0, 1) and avoid 0.25, 0.5, 0.75")
        if self.cls_initial_radius_fraction <= 0:
            raise ConfigurationError("cls.radius must be positive")
        if self.cls_steps_per_generation < 1:
            raise ConfigurationError("cls.steps must be at least 1")
        if not 0.0 < self.cls_decay < 1.0:
            raise ConfigurationError("cls.decay must lie in (0, 1)")
        if self.opposition_mode != "per-generation-full":
            raise ConfigurationError(f"unsupported opposition mode {self.opposition_mode!r}")


# ---------------------------------------------------------------------------
# replacement rules
# ---------------------------------------------------------------------------

def nodiv_replacement(target_index: int, trial: Individual, pop: Population) -> int:
    return target_index


def crowding_replacement(trial: Individual, pop: Population) -> int:
    """Index of the member closest to the trial (Euclidean); lowest index on ties."""
    d = np.linalg.norm(pop.positions() - trial.position, axis=1)
    return int(np.argmin(d))


def fitnessdiv_replacement(trial: Individual, pop: Population) -> int:
    """Index of the member with the closest raw objective value; lowest index on ties."""
    f = np.array([m.evaluation.objective for m in pop.members])
    return int(np.argmin(np.abs(f - trial.evaluation.objective)))


def opposite_point(x, space: SearchSpace) -> np.ndarray:
    return np.asarray(space.lower) + np.asarray(space.upper) - np.asarray(x, dtype=float)


def chaos_step(z: float) -> float:
    """One iterate of the logistic map at r = 4."""
    if not 0.0 < z < 1.0:
        raise DomainError(f"chaos variable must lie in (0, 1), got {z}")
    return 4.0 * z * (1.0 - z)


def immigrant_count(rate: float, population_size: int) -> int:
    # round half up; Python's round() would send 0.5 to 0
    return int(math.floor(rate * population_size + 0.5))


def cls_radius(initial_fraction: float, decay: float, generations_since_change: int) -> float:
    return initial_fraction * decay**generations_since_change


# ---------------------------------------------------------------------------
# mechanism objects
# ---------------------------------------------------------------------------

class DiversityMechanism:
    name = "nodiv"

    def __init__(self, config: MechanismConfig | None = None):
        self.config = config or MechanismConfig()

    def replacement_target(self, target_index: int, trial: Individual, pop: Population) -> int:
        return nodiv_replacement(target_index, trial, pop)

    def on_change(self, pop: Population, ctx: RunContext) -> None:
        pass

    def post_generation(self, pop: Population, ctx: RunContext) -> None:
        pass


class NoDiv(DiversityMechanism):
    name = "nodiv"


class Crowding(DiversityMechanism):
    name = "crowding"

    def replacement_target(self, target_index, trial, pop):
        return crowding_replacement(trial, pop)


class FitnessDiv(DiversityMechanism):
    name = "fitnessdiv"

    def replacement_target(self, target_index, trial, pop):
        return fitnessdiv_replacement(trial, pop)


class Opposition(DiversityMechanism):
    name = "opp"

    def post_generation(self, pop, ctx):
        opposition_post_generation(pop, ctx)


class RandomImmigrants(DiversityMechanism):
    name = "ri"

    def post_generation(self, pop, ctx):
        random_immigrants_post_generation(pop, ctx, self.config.ri_replacement_rate)


class ChaosLocalSearch(DiversityMechanism):
    name = "cls"

    def __init__(self, config: MechanismConfig | None = None):
        super().__init__(config)
        self.z: np.ndarray | None = None
        self.generations_since_change = 0

    def on_change(self, pop, ctx):
        self.generations_since_change = 0

    def radius(self) -> float:
        c = self.config
        return cls_radius(c.cls_initial_radius_fraction, c.cls_decay, self.generations_since_change)

    def advance_chaos(self, dim: int) -> np.ndarray:
        if self.z is None:
            # distinct start per component, still derived from the configured seed
            z = [self.config.cls_chaos_seed]
            for _ in range(dim - 1):
                z.append(chaos_step(z[-1]))
            self.z = np.array(z)
        nxt = []
        for zi in self.z:
            zi = chaos_step(zi)
            if zi <= 0.0 or zi >= 1.0 or zi in _DEGENERATE_CHAOS_SEEDS:
                zi = self.config.cls_chaos_seed
            nxt.append(zi)
        self.z = np.array(nxt)
        return self.z

    def post_generation(self, pop, ctx):
        cls_post_generation(pop, ctx, self)


def opposition_post_generation(pop: Population, ctx: RunContext) -> None:
    """Evaluate the opposite of every member; keep it where it is strictly better."""
    space = ctx.problem.space
    for i in range(len(pop)):
        member = pop.members[i]
        opp = ctx.evaluate(opposite_point(member.position, space))
        if strictly_better(opp.evaluation, member.evaluation):
            pop.members[i] = opp


def random_immigrants_post_generation(pop: Population, ctx: RunContext, rate: float) -> list[int]:
    """Replace ``round(rate * np)`` random non-best members with random points."""
    count = immigrant_count(rate, len(pop))
    best = pop.best_index()
    candidates = np.array([i for i in range(len(pop)) if i != best])
    chosen = ctx.rng.choice(candidates, size=count, replace=False)
    for i in chosen:
        pop.members[int(i)] = ctx.evaluate(ctx.random_position())
    return [int(i) for i in chosen]


def cls_post_generation(pop: Population, ctx: RunContext, state: ChaosLocalSearch) -> None:
    """Chaotic local search around the best member with a decaying radius."""
    space = ctx.problem.space
    span = np.asarray(space.upper) - np.asarray(space.lower)
    radius = state.radius()
    b = pop.best_index()
    for _ in range(state.config.cls_steps_per_generation):
        z = state.advance_chaos(space.dimension)
        proposal = pop.members[b].position + radius * (2.0 * z - 1.0) * span
        cand = ctx.evaluate(fix_bounds(proposal, space, ctx.rng, ctx.config.bound_handling))
        if strictly_better(cand.evaluation, pop.members[b].evaluation):
            pop.members[b] = cand
    state.generations_since_change += 1


_REGISTRY = {
    "nodiv": NoDiv,
    "cls": ChaosLocalSearch,
    "crowding": Crowding,
    "fitnessdiv": FitnessDiv,
    "opp": Opposition,
    "ri": RandomImmigrants,
}


def make_mechanism(
    name: str, config: MechanismConfig | None = None, population_size: int = 20
) -> DiversityMechanism:
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown mechanism {name!r}; expected one of {', '.join(MECHANISM_NAMES)}"
        ) from None
    config = config or MechanismConfig()
    if name == "ri" and immigrant_count(config.ri_replacement_rate, population_size) < 1:
        raise ConfigurationError("ri.rate * population size must round to at least 1")
    return cls(config)
