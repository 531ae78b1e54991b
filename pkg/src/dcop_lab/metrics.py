"""Performance measures computed from run traces and reference optima."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .problems import ConfigurationError

CV_MEAN_FLOOR = 1e-12
CV_CAP = 10.0
# Below this |f*| the relative value-to-reach is undefined; absolute error is used.
ZERO_OPTIMUM = 1e-12


def population_cv(positions) -> float:
    """Mean over dimensions of sigma_i / |mu_i| (population standard deviation)."""
    X = np.asarray(positions, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if len(X) == 0:
        raise ValueError("population is empty")
    mu = X.mean(axis=0)
    sigma = X.std(axis=0)
    cvs = []
    for m, s in zip(np.abs(mu), sigma):
        if m < CV_MEAN_FLOOR:
            cvs.append(0.0 if s == 0 else min(s / CV_MEAN_FLOOR, CV_CAP))
        else:
            cvs.append(s / m)
    return float(np.mean(cvs))


@dataclass(frozen=True)
class MetricConfig:
    epsilon_fraction: float = 0.10

    def __post_init__(self):
        if not 0.0 < self.epsilon_fraction < 1.0:
            raise ConfigurationError("epsilon must lie in (0, 1)")


@dataclass
class MetricsReport:
    mof: float
    te: float
    nfe_mean: float
    sr: float
    cv_trajectory: list[float] = field(default_factory=list)
    te_complete: bool = True


def _f_star(optima, t: int) -> float:
    try:
        if hasattr(optima, "f_star"):
            return optima.f_star(t)
        return float(optima[t])
    except IndexError:
        raise ConfigurationError(f"no reference optimum for period {t}") from None


def _better(f, feas, viol, bf, bfeas, bviol) -> bool:
    if feas != bfeas:
        return feas
    if feas:
        return f < bf
    return viol < bviol


def running_best(trace) -> list[tuple[int, int, float, bool]]:
    """(generation, period, best_f, best_feasible) with the best reset at period changes."""
    out = []
    period = None
    best = None
    for r in trace.records:
        cur = (r.best_objective, r.best_feasible, r.best_violation)
        if r.period != period or _better(*cur, *best):
            best = cur
        period = r.period
        out.append((r.generation, r.period, best[0], best[1]))
    return out


def mof(trace, optima) -> float:
    """Mean over generations (initial population excluded) of |f*_t - best so far|."""
    errors = [
        abs(_f_star(optima, t) - f)
        for g, t, f, _ in running_best(trace)
        if g > 0
    ]
    if not errors:
        raise ConfigurationError("trace contains no generations")
    return float(np.mean(errors))


def end_of_period_best(trace) -> dict[int, tuple[float, bool]]:
    out = {}
    for _, t, f, feas in running_best(trace):
        out[t] = (f, feas)
    return out


def tracking_error_details(trace, optima) -> tuple[float, bool]:
    ends = end_of_period_best(trace)
    errors = [abs(_f_star(optima, t) - f) for t, (f, _) in sorted(ends.items())]
    complete = len(ends) == trace.num_periods and not trace.truncated
    return float(np.mean(errors)), complete


def tracking_error(trace, optima) -> float:
    return tracking_error_details(trace, optima)[0]


def reached_vtr(f_star: float, f_best: float, feasible: bool, epsilon: float) -> bool:
    if not feasible:
        return False
    err = abs(f_star - f_best)
    if abs(f_star) < ZERO_OPTIMUM:
        return err <= epsilon
    return err / abs(f_star) <= epsilon


def nfe_per_period(trace, optima, epsilon: float = 0.10) -> dict[int, int | None]:
    """Evaluations from the start of each period until the value to reach holds."""
    fc = trace.change_frequency
    out: dict[int, int | None] = {t: None for t in range(trace.num_periods)}
    for r, (_, t, f, feas) in zip(trace.records, running_best(trace)):
        if out.get(t) is None and reached_vtr(_f_star(optima, t), f, feas, epsilon):
            out[t] = r.eval_count - t * fc
    return out


def nfe_and_success(trace, optima, epsilon: float = 0.10) -> tuple[float, float]:
    per = nfe_per_period(trace, optima, epsilon)
    reached = [n for n in per.values() if n is not None]
    sr = len(reached) / trace.num_periods
    nfe_mean = float(np.mean(reached)) if reached else math.nan
    return nfe_mean, sr


def compute_metrics(trace, optima, config: MetricConfig | None = None) -> MetricsReport:
    config = config or MetricConfig()
    te, complete = tracking_error_details(trace, optima)
    nfe_mean, sr = nfe_and_success(trace, optima, config.epsilon_fraction)
    return MetricsReport(
        mof=mof(trace, optima),
        te=te,
        nfe_mean=nfe_mean,
        sr=sr,
        cv_trajectory=trace.cv_trajectory(),
        te_complete=complete,
    )


def sr_band(sr: float) -> str:
    """Colour band used for success-rate coding of NFE boxplots."""
    if sr < 0.20:
        return "dark-red"
    if sr < 0.50:
        return "purple"
    if sr <= 0.80:
        return "blue"
    return "dark-green"

