"""Problem instances, budgeted evaluation and the reference-optimum oracle."""
from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import g24

EQUALITY_TOLERANCE = 1e-4


class DomainError(ValueError):
    """A point outside the search box was submitted for evaluation."""


class BudgetExhausted(RuntimeError):
    """The evaluation budget (all change periods) has been used up."""


class InfeasiblePeriodError(RuntimeError):
    pass


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class SearchSpace:
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        if len(self.lower) != len(self.upper):
            raise ConfigurationError("lower and upper bounds differ in length")
        if any(lo >= hi for lo, hi in zip(self.lower, self.upper)):
            raise ConfigurationError("every lower bound must be below its upper bound")

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lower) + np.asarray(self.upper)) / 2

    def contains(self, x) -> bool:
        return all(lo <= xi <= hi for xi, lo, hi in zip(x, self.lower, self.upper))


@dataclass(frozen=True)
class DynamicParams:
    """Severity and change schedule.

    ``num_periods`` counts environments including the initial one, so the
    default of ``5/k`` changes gives 11 periods (t = 0..10).
    """

    objective_severity_k: float = 0.5
    constraint_severity_S: float = 20.0
    change_frequency_fc: int = 1000
    num_periods: int | None = None

    def __post_init__(self):
        if self.num_periods is None:
            object.__setattr__(
                self, "num_periods", int(math.ceil(5 / self.objective_severity_k)) + 1
            )
        if self.change_frequency_fc < 1 or self.num_periods < 1:
            raise ConfigurationError("change frequency and period count must be positive")

    @property
    def budget(self) -> int:
        return self.change_frequency_fc * self.num_periods


@dataclass(frozen=True, slots=True)
class Evaluation:
    objective: float
    violations: tuple[float, ...]
    total_violation: float

    @property
    def feasible(self) -> bool:
        return self.total_violation == 0.0


@dataclass
class EnvironmentState:
    """Per-run evaluation counter; the period is derived from it."""

    change_frequency_fc: int
    num_periods: int
    eval_count: int = 0

    @classmethod
    def for_dynamics(cls, dynamics: DynamicParams) -> "EnvironmentState":
        return cls(dynamics.change_frequency_fc, dynamics.num_periods)

    @property
    def time_index(self) -> int:
        return self.eval_count // self.change_frequency_fc

    @property
    def budget(self) -> int:
        return self.change_frequency_fc * self.num_periods

    @property
    def remaining(self) -> int:
        return self.budget - self.eval_count

    def charge(self) -> int:
        """Consume one evaluation and return the period it is charged to."""
        t = self.time_index
        if t >= self.num_periods:
            raise BudgetExhausted(f"budget of {self.budget} evaluations exhausted")
        self.eval_count += 1
        return t


@dataclass(frozen=True)
class ProblemInstance:
    id: str
    space: SearchSpace
    dynamics: DynamicParams
    equality_constraints: tuple[Callable, ...] = field(default=())

    @property
    def definition(self) -> g24.G24Definition:
        return g24.DEFINITIONS[self.id]

    @property
    def num_constraints(self) -> int:
        return len(self.definition.constraints) + len(self.equality_constraints)

    @property
    def constrained(self) -> bool:
        return self.num_constraints > 0

    def objective(self, x1, x2, t: int):
        return g24.objective(self.id, x1, x2, t, self.dynamics.objective_severity_k)

    def constraint_values(self, x1, x2, t: int) -> list:
        """Raw ``g_i`` values plus equality terms converted to ``|h| - tol``."""
        values = g24.constraint_values(
            self.id, x1, x2, t, self.dynamics.constraint_severity_S
        )
        for h in self.equality_constraints:
            values.append(abs(h(x1, x2, t)) - EQUALITY_TOLERANCE)
        return values

    def evaluate_at(self, x: Sequence[float], t: int) -> Evaluation:
        """Evaluate without charging any budget."""
        if not self.space.contains(x):
            raise DomainError(f"{list(x)} lies outside {self.space.lower}..{self.space.upper}")
        x1, x2 = float(x[0]), float(x[1])
        f = float(self.objective(x1, x2, t))
        viol = tuple(max(0.0, float(g)) for g in self.constraint_values(x1, x2, t))
        return Evaluation(f, viol, sum(viol))

    def evaluate_grid(self, x1: np.ndarray, x2: np.ndarray, t: int):
        """Vectorised objective and total violation for arrays of points."""
        f = self.objective(x1, x2, t)
        f = np.broadcast_to(np.asarray(f, dtype=float), np.shape(x1))
        total = np.zeros(np.shape(x1))
        for g in self.constraint_values(x1, x2, t):
            total = total + np.maximum(0.0, g)
        return f, total


def make_problem(instance_id: str, dynamics: DynamicParams | None = None) -> ProblemInstance:
    if instance_id not in g24.DEFINITIONS:
        raise ConfigurationError(
            f"unknown instance {instance_id!r}; expected one of {', '.join(g24.INSTANCE_IDS)}"
        )
    return ProblemInstance(
        id=instance_id,
        space=SearchSpace(g24.LOWER, g24.UPPER),
        dynamics=dynamics or DynamicParams(),
    )


def evaluate(problem: ProblemInstance, x: Sequence[float], env: EnvironmentState) -> Evaluation:
    """Evaluate ``x`` at the current period and charge one budget unit."""
    if not problem.space.contains(x):
        raise DomainError(f"{list(x)} lies outside the search space")
    t = env.charge()
    return problem.evaluate_at(x, t)


def feasible_region_fraction(
    problem: ProblemInstance, t: int, samples: int = 10**6, seed: int = 0
) -> float:
    """Monte-Carlo estimate of the feasible share of the search box at period ``t``."""
    if samples < 10**4:
        raise ConfigurationError("at least 10^4 samples are required")
    if not problem.constrained:
        return 1.0
    rng = np.random.default_rng(seed)
    lo, hi = np.asarray(problem.space.lower), np.asarray(problem.space.upper)
    feasible = 0
    chunk = 250_000
    for start in range(0, samples, chunk):
        n = min(chunk, samples - start)
        pts = rng.uniform(lo, hi, size=(n, 2))
        _, total = problem.evaluate_grid(pts[:, 0], pts[:, 1], t)
        feasible += int(np.count_nonzero(total == 0.0))
    return feasible / samples


# ---------------------------------------------------------------------------
# reference optima
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PeriodOptimum:
    x: tuple[float, float]
    f: float


@dataclass(frozen=True)
class ReferenceOptima:
    instance: str
    per_period: tuple[PeriodOptimum, ...]
    grid_resolution: int

    def f_star(self, t: int) -> float:
        return self.per_period[t].f

    def __len__(self):
        return len(self.per_period)


def _candidate_cells(f: np.ndarray, feasible: np.ndarray, max_candidates: int, radius: int):
    """Best feasible cells, at least ``radius`` cells apart."""
    masked = np.where(feasible, f, np.inf)
    order = np.argsort(masked, axis=None, kind="stable")
    picked: list[tuple[int, int]] = []
    for flat in order[: max(2000, max_candidates)]:
        if not np.isfinite(masked.flat[flat]):
            break
        ij = np.unravel_index(flat, f.shape)
        if all(max(abs(ij[0] - a), abs(ij[1] - b)) > radius for a, b in picked):
            picked.append((int(ij[0]), int(ij[1])))
            if len(picked) == max_candidates:
                break
    return picked


def _zoom(problem, t, center, half, lower, upper, points=41, shrink=0.2, tol=1e-11):
    """Repeated local grids around the incumbent, keeping only feasible points."""
    best_x = np.array(center, dtype=float)
    f0, v0 = problem.evaluate_grid(best_x[:1], best_x[1:], t)
    best_f = float(f0[0])
    half = np.array(half, dtype=float)
    while half.max() > tol:
        a = np.linspace(max(lower[0], best_x[0] - half[0]), min(upper[0], best_x[0] + half[0]), points)
        b = np.linspace(max(lower[1], best_x[1] - half[1]), min(upper[1], best_x[1] + half[1]), points)
        X1, X2 = np.meshgrid(a, b, indexing="ij")
        f, total = problem.evaluate_grid(X1, X2, t)
        f = np.where(total == 0.0, f, np.inf)
        idx = np.unravel_index(np.argmin(f), f.shape)
        if f[idx] < best_f:
            best_f = float(f[idx])
            best_x = np.array([X1[idx], X2[idx]])
        half = half * shrink
    return best_x, best_f


def compute_reference_optima(
    problem: ProblemInstance, grid_resolution: int = 2001, candidates: int = 6
) -> ReferenceOptima:
    """Exhaustive grid search per period followed by local zoom refinement."""
    if grid_resolution < 501:
        raise ConfigurationError("grid_resolution must be at least 501")
    lower, upper = problem.space.lower, problem.space.upper
    a = np.linspace(lower[0], upper[0], grid_resolution)
    b = np.linspace(lower[1], upper[1], grid_resolution)
    X1, X2 = np.meshgrid(a, b, indexing="ij")
    step = ((upper[0] - lower[0]) / (grid_resolution - 1), (upper[1] - lower[1]) / (grid_resolution - 1))
    out = []
    for t in range(problem.dynamics.num_periods):
        f, total = problem.evaluate_grid(X1, X2, t)
        feasible = total == 0.0
        if not feasible.any():
            raise InfeasiblePeriodError(f"{problem.id}: no feasible grid point at period {t}")
        best = None
        for i, j in _candidate_cells(f, feasible, candidates, radius=max(3, grid_resolution // 50)):
            x, fx = _zoom(problem, t, (a[i], b[j]), (4 * step[0], 4 * step[1]), lower, upper)
            if best is None or fx < best[1]:
                best = (x, fx)
        x, fx = best
        out.append(PeriodOptimum((float(x[0]), float(x[1])), float(fx)))
    return ReferenceOptima(problem.id, tuple(out), grid_resolution)


OPTIMA_HEADER = ("instance", "period", "x1", "x2", "f_star")


def optima_to_csv(optima: Iterable[ReferenceOptima]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(OPTIMA_HEADER)
    for ref in optima:
        for t, opt in enumerate(ref.per_period):
            w.writerow([ref.instance, t, repr(opt.x[0]), repr(opt.x[1]), repr(opt.f)])
    return buf.getvalue()


def write_optima_table(path: str | Path, optima: Iterable[ReferenceOptima]) -> str:
    """Write the table atomically and return its sha256 checksum."""
    text = optima_to_csv(optima)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    tmp.replace(path)
    return hashlib.sha256(text.encode()).hexdigest()


def file_checksum(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_optima_table(path: str | Path, grid_resolution: int = 0) -> dict[str, ReferenceOptima]:
    rows: dict[str, dict[int, PeriodOptimum]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != OPTIMA_HEADER:
            raise ConfigurationError(f"{path}: unexpected header {reader.fieldnames}")
        for row in reader:
            rows.setdefault(row["instance"], {})[int(row["period"])] = PeriodOptimum(
                (float(row["x1"]), float(row["x2"])), float(row["f_star"])
            )
    out = {}
    for name, periods in rows.items():
        if sorted(periods) != list(range(len(periods))):
            raise ConfigurationError(f"{path}: periods of {name} are not contiguous")
        out[name] = ReferenceOptima(
            name, tuple(periods[t] for t in range(len(periods))), grid_resolution
        )
    return out
