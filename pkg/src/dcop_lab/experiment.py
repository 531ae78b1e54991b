"""Batch driver: problems x mechanisms x runs, persistence and report rendering."""
from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__
from .de import DEConfig, run_de
from .g24 import INSTANCE_IDS
from .mechanisms import (
    DISPLAY_NAMES,
    MECHANISM_NAMES,
    MECHANISM_NUMBERS,
    MechanismConfig,
    make_mechanism,
)
from .metrics import MetricConfig, compute_metrics, nfe_per_period, sr_band
from .problems import (
    ConfigurationError,
    DynamicParams,
    compute_reference_optima,
    file_checksum,
    make_problem,
    read_optima_table,
    write_optima_table,
)
from .stats import bonferroni_posthoc, table2_relations

METRICS_HEADER = ("instance", "mechanism", "run", "mof", "te", "nfe_mean", "sr")
CV_HEADER = ("instance", "mechanism", "run", "generation", "cv")
NFE_HEADER = ("instance", "mechanism", "run", "period", "nfe")
STATS_HEADER = ("instance", "pair", "direction", "z", "p_corrected", "significant")
DEFAULT_BASE_SEED = 20190401
DEFAULT_OPTIMA_RESOLUTION = 501


@dataclass
class ExperimentConfig:
    problems: list[str] = field(default_factory=lambda: list(INSTANCE_IDS))
    mechanisms: list[str] = field(default_factory=lambda: list(MECHANISM_NAMES))
    runs: int = 30
    base_seed: int = DEFAULT_BASE_SEED
    dynamics: DynamicParams = field(default_factory=DynamicParams)
    de: DEConfig = field(default_factory=DEConfig)
    mechanism: MechanismConfig = field(default_factory=MechanismConfig)
    metric: MetricConfig = field(default_factory=MetricConfig)
    out_dir: Path = Path("results")
    optima_file: Path | None = None
    optima_resolution: int = DEFAULT_OPTIMA_RESOLUTION

    def __post_init__(self):
        if self.runs < 1:
            raise ConfigurationError("experiment.runs must be at least 1")
        unknown = [p for p in self.problems if p not in INSTANCE_IDS]
        if unknown:
            raise ConfigurationError(f"unknown problem(s): {', '.join(unknown)}")
        unknown = [m for m in self.mechanisms if m not in MECHANISM_NAMES]
        if unknown:
            raise ConfigurationError(f"unknown mechanism(s): {', '.join(unknown)}")
        if not self.problems or not self.mechanisms:
            raise ConfigurationError("need at least one problem and one mechanism")
        self.out_dir = Path(self.out_dir)
        if self.optima_file is not None:
            self.optima_file = Path(self.optima_file)
        for m in self.mechanisms:
            make_mechanism(m, self.mechanism, self.de.population_size)

    def seed(self, run_index: int) -> int:
        return self.base_seed + run_index

    def snapshot(self) -> dict:
        return {
            "problems": list(self.problems),
            "mechanisms": list(self.mechanisms),
            "runs": self.runs,
            "base_seed": self.base_seed,
            "seed_rule": "base_seed + run_index",
            "dynamics": {**asdict(self.dynamics), "budget": self.dynamics.budget},
            "de": asdict(self.de),
            "mechanism": asdict(self.mechanism),
            "metric": asdict(self.metric),
            "out_dir": str(self.out_dir),
            "optima_file": None if self.optima_file is None else str(self.optima_file),
            "optima_resolution": self.optima_resolution,
        }


# ---------------------------------------------------------------------------
# config file
# ---------------------------------------------------------------------------

def _list(value: str) -> list[str]:
    items = [v.strip() for v in value.replace(",", " ").split()]
    return [v for v in items if v]


def _pair(value: str) -> tuple[float, float]:
    lo, hi = (float(v) for v in _list(value))
    return lo, hi


# key -> (target, field, parser)
_KEYS = {
    "experiment.problems": ("top", "problems", _list),
    "experiment.mechanisms": ("top", "mechanisms", _list),
    "experiment.runs": ("top", "runs", int),
    "experiment.base_seed": ("top", "base_seed", int),
    "experiment.out_dir": ("top", "out_dir", Path),
    "optima.file": ("top", "optima_file", Path),
    "optima.resolution": ("top", "optima_resolution", int),
    "dynamics.k": ("dynamics", "objective_severity_k", float),
    "dynamics.S": ("dynamics", "constraint_severity_S", float),
    "dynamics.fc": ("dynamics", "change_frequency_fc", int),
    "dynamics.periods": ("dynamics", "num_periods", int),
    "de.np": ("de", "population_size", int),
    "de.cr": ("de", "crossover_rate", float),
    "de.f_range": ("de", "scale_factor_range", _pair),
    "de.variant": ("de", "variant", str),
    "de.bounds": ("de", "bound_handling", str),
    "ri.rate": ("mechanism", "ri_replacement_rate", float),
    "cls.z0": ("mechanism", "cls_chaos_seed", float),
    "cls.radius": ("mechanism", "cls_initial_radius_fraction", float),
    "cls.steps": ("mechanism", "cls_steps_per_generation", int),
    "cls.decay": ("mechanism", "cls_decay", float),
    "opp.mode": ("mechanism", "opposition_mode", str),
    "metric.epsilon": ("metric", "epsilon_fraction", float),
}
CONFIG_KEYS = tuple(_KEYS)


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    """Flat ``section.key = value`` lines; ``#`` starts a comment."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"{source}:{lineno}: expected 'section.key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigurationError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def build_config(values: dict[str, str]) -> ExperimentConfig:
    groups: dict[str, dict] = {"top": {}, "dynamics": {}, "de": {}, "mechanism": {}, "metric": {}}
    for key, value in values.items():
        target, name, parse = _KEYS[key]
        if target == "top" and name == "problems" and value.strip().lower() == "all":
            groups["top"][name] = list(INSTANCE_IDS)
            continue
        if target == "top" and name == "mechanisms" and value.strip().lower() == "all":
            groups["top"][name] = list(MECHANISM_NAMES)
            continue
        try:
            groups[target][name] = parse(value)
        except ValueError as exc:
            raise ConfigurationError(f"{key}: cannot parse {value!r} ({exc})") from None
    try:
        return ExperimentConfig(
            dynamics=DynamicParams(**groups["dynamics"]),
            de=DEConfig(**groups["de"]),
            mechanism=MechanismConfig(**groups["mechanism"]),
            metric=MetricConfig(**groups["metric"]),
            **groups["top"],
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(str(exc)) from None


def load_config(path: str | Path, overrides: dict[str, str] | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    values = parse_config_text(path.read_text(), str(path))
    for key, value in (overrides or {}).items():
        if key not in _KEYS:
            raise ConfigurationError(f"unknown key {key!r}")
        values[key] = value
    return build_config(values)


# ---------------------------------------------------------------------------
# file helpers
# ---------------------------------------------------------------------------

def atomic_write(path: str | Path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    tmp.write_text(text)
    tmp.replace(path)


def _csv_text(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return "nan" if isinstance(x, float) and math.isnan(x) else repr(float(x))


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def worker_count(cells: int) -> int:
    env = os.environ.get("DCOP_LAB_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigurationError(f"DCOP_LAB_WORKERS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigurationError("DCOP_LAB_WORKERS must be at least 1")
    else:
        n = os.cpu_count() or 1
    return max(1, min(n, cells))


# ---------------------------------------------------------------------------
# optima
# ---------------------------------------------------------------------------

def compute_optima_command(
    instances: Iterable[str],
    grid_resolution: int,
    out: str | Path,
    dynamics: DynamicParams | None = None,
) -> str:
    """Compute and persist reference optima; returns the table checksum."""
    instances = list(instances)
    unknown = [i for i in instances if i not in INSTANCE_IDS]
    if unknown:
        raise ConfigurationError(f"unknown instance(s): {', '.join(unknown)}")
    optima = [
        compute_reference_optima(make_problem(i, dynamics), grid_resolution) for i in instances
    ]
    return write_optima_table(out, optima)


def _resolve_optima(config: ExperimentConfig):
    if config.optima_file is not None:
        if not config.optima_file.is_file():
            raise ConfigurationError(
                f"optima table {config.optima_file} not found; create it with "
                f"'dcop-lab optima --instances {' '.join(config.problems)} "
                f"--resolution {config.optima_resolution} --out {config.optima_file}'"
            )
        path = config.optima_file
    else:
        path = config.out_dir / "optima.csv"
        compute_optima_command(config.problems, config.optima_resolution, path, config.dynamics)
    table = read_optima_table(path)
    periods = config.dynamics.num_periods
    for p in config.problems:
        if p not in table:
            raise ConfigurationError(f"optima table {path} has no rows for {p}")
        if len(table[p]) < periods:
            raise ConfigurationError(
                f"optima table {path} covers {len(table[p])} periods of {p}, need {periods}"
            )
    return path, table


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Cell:
    instance: str
    mechanism: str
    run: int
    seed: int


@dataclass
class CellResult:
    cell: Cell
    trace_csv: str
    metrics: tuple
    cv: list[float]
    nfe: dict[int, int | None]


def _execute_cell(cell: Cell, config: ExperimentConfig, f_star: list[float]) -> CellResult:
    problem = make_problem(cell.instance, config.dynamics)
    mech = make_mechanism(cell.mechanism, config.mechanism, config.de.population_size)
    trace = run_de(problem, mech, config.de, seed=cell.seed, run=cell.run)
    report = compute_metrics(trace, f_star, config.metric)
    nfe = nfe_per_period(trace, f_star, config.metric.epsilon_fraction)
    return CellResult(
        cell, trace.to_csv(), (report.mof, report.te, report.nfe_mean, report.sr),
        report.cv_trajectory, nfe,
    )


def _run_cell_safely(cell: Cell, config: ExperimentConfig, f_star: list[float]):
    try:
        return _execute_cell(cell, config, f_star)
    except Exception as exc:  # one bad cell must not stop the batch
        return f"{type(exc).__name__}: {exc}"


def trace_path(out_dir: Path, cell: Cell) -> Path:
    return out_dir / "traces" / cell.instance / cell.mechanism / f"run_{cell.run:03d}.csv"


@dataclass
class ExperimentOutcome:
    out_dir: Path
    completed: int
    failures: list[dict]

    @property
    def partial(self) -> bool:
        return bool(self.failures)


def run_experiment(config: ExperimentConfig) -> ExperimentOutcome:
    out = config.out_dir
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "tool": "dcop-lab",
        "version": __version__,
        "config": config.snapshot(),
        "started": _now(),
        "finished": None,
        "status": "running",
        "optima_file": None,
        "optima_checksum": None,
        "cells_total": len(config.problems) * len(config.mechanisms) * config.runs,
        "cells_completed": 0,
        "failures": [],
    }
    manifest_path = out / "manifest.json"
    atomic_write(manifest_path, json.dumps(manifest, indent=2) + "\n")

    optima_path, table = _resolve_optima(config)
    manifest["optima_file"] = str(optima_path)
    manifest["optima_checksum"] = file_checksum(optima_path)
    atomic_write(manifest_path, json.dumps(manifest, indent=2) + "\n")

    cells = [
        Cell(p, m, r, config.seed(r))
        for p in config.problems
        for m in config.mechanisms
        for r in range(config.runs)
    ]
    f_stars = {p: [table[p].f_star(t) for t in range(config.dynamics.num_periods)] for p in config.problems}

    results: dict[Cell, CellResult] = {}
    failures: list[dict] = []

    def collect(cell: Cell, res) -> None:
        if isinstance(res, CellResult):
            atomic_write(trace_path(out, cell), res.trace_csv)
            results[cell] = res
        else:
            failures.append({**asdict(cell), "error": res})

    workers = worker_count(len(cells))
    if workers == 1:
        for cell in cells:
            collect(cell, _run_cell_safely(cell, config, f_stars[cell.instance]))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [
                (cell, pool.submit(_run_cell_safely, cell, config, f_stars[cell.instance]))
                for cell in cells
            ]
            for cell, fut in futures:
                try:
                    collect(cell, fut.result())
                except Exception as exc:
                    collect(cell, f"{type(exc).__name__}: {exc}")

    done = [c for c in cells if c in results]
    atomic_write(out / "metrics.csv", _csv_text(METRICS_HEADER, (
        [c.instance, c.mechanism, c.run, *(_fmt(v) for v in results[c].metrics)] for c in done
    )))
    atomic_write(out / "cv.csv", _csv_text(CV_HEADER, (
        [c.instance, c.mechanism, c.run, g, _fmt(v)]
        for c in done
        for g, v in enumerate(results[c].cv)
    )))
    atomic_write(out / "nfe.csv", _csv_text(NFE_HEADER, (
        [c.instance, c.mechanism, c.run, t, "" if n is None else n]
        for c in done
        for t, n in sorted(results[c].nfe.items())
    )))

    manifest["cells_completed"] = len(done)
    manifest["failures"] = failures
    manifest["status"] = "partial" if failures else "complete"
    manifest["finished"] = _now()
    atomic_write(manifest_path, json.dumps(manifest, indent=2) + "\n")

    if done:
        render_reports(out)
    return ExperimentOutcome(out, len(done), failures)


def rerun_cell(manifest_path: str | Path, instance: str, mechanism: str, run: int):
    """Reproduce a single run in isolation from a manifest."""
    manifest = json.loads(Path(manifest_path).read_text())
    snap = manifest["config"]
    dyn = snap["dynamics"]
    dynamics = DynamicParams(
        dyn["objective_severity_k"], dyn["constraint_severity_S"],
        dyn["change_frequency_fc"], dyn["num_periods"],
    )
    de = DEConfig(**{**snap["de"], "scale_factor_range": tuple(snap["de"]["scale_factor_range"])})
    mech = make_mechanism(mechanism, MechanismConfig(**snap["mechanism"]), de.population_size)
    return run_de(make_problem(instance, dynamics), mech, de, seed=snap["base_seed"] + run, run=run)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def _read_rows(path: Path, header: tuple[str, ...]) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != header:
            raise ConfigurationError(f"{path}: expected header {','.join(header)}")
        return list(reader)


def _ordered(values: Iterable[str], reference: Iterable[str]) -> list[str]:
    ref = list(reference)
    seen = list(dict.fromkeys(values))
    return sorted(seen, key=lambda v: (ref.index(v) if v in ref else len(ref), v))


def _mean_std(x: list[float]) -> tuple[float, float]:
    a = np.asarray(x, dtype=float)
    return float(a.mean()), float(a.std(ddof=1)) if len(a) > 1 else 0.0


def render_table1(mof: dict[str, dict[str, list[float]]], instances: list[str], mechanisms: list[str]) -> str:
    """Mean(+-std) MOF per mechanism and problem; best mean per problem in asterisks."""
    cells: dict[tuple[str, str], str] = {}
    for inst in instances:
        stats = {m: _mean_std(mof[inst][m]) for m in mechanisms if mof[inst].get(m)}
        if not stats:
            continue
        best = min(round(s[0], 4) for s in stats.values())
        for m, (mean, std) in stats.items():
            text = f"{mean:.4f}(±{std:.4f})"
            cells[(inst, m)] = f"*{text}*" if round(mean, 4) == best else text
    labels = [DISPLAY_NAMES.get(m, m) for m in mechanisms]
    name_w = max(len("Algorithm"), *(len(l) for l in labels))
    col_w = max([len(i) for i in instances] + [len(v) for v in cells.values()] + [1])
    lines = ["Algorithm".ljust(name_w) + "  " + "  ".join(i.ljust(col_w) for i in instances)]
    for m, label in zip(mechanisms, labels):
        row = [cells.get((i, m), "-").ljust(col_w) for i in instances]
        lines.append(label.ljust(name_w) + "  " + "  ".join(row))
    return "\n".join(line.rstrip() for line in lines) + "\n"


def render_reports(out_dir: str | Path) -> list[Path]:
    """Regenerate every report file from metrics.csv, cv.csv and nfe.csv."""
    out = Path(out_dir)
    needed = {"metrics.csv": METRICS_HEADER, "cv.csv": CV_HEADER, "nfe.csv": NFE_HEADER}
    missing = [name for name in needed if not (out / name).is_file()]
    if missing:
        raise ConfigurationError(
            "missing report inputs: " + ", ".join(str(out / n) for n in missing)
        )
    metrics = _read_rows(out / "metrics.csv", METRICS_HEADER)
    cv_rows = _read_rows(out / "cv.csv", CV_HEADER)
    nfe_rows = _read_rows(out / "nfe.csv", NFE_HEADER)
    if not metrics:
        raise ConfigurationError(f"{out / 'metrics.csv'} has no rows")

    instances = _ordered((r["instance"] for r in metrics), INSTANCE_IDS)
    mechanisms = _ordered((r["mechanism"] for r in metrics), MECHANISM_NAMES)
    mof: dict[str, dict[str, list[float]]] = {i: {} for i in instances}
    for r in metrics:
        mof[r["instance"]].setdefault(r["mechanism"], []).append(float(r["mof"]))

    written = []

    def emit(name: str, text: str) -> None:
        atomic_write(out / name, text)
        written.append(out / name)

    emit("table1.txt", render_table1(mof, instances, mechanisms))

    if len(mechanisms) >= 2:
        stat_rows, t2_lines = [], []
        for inst in instances:
            groups = {m: mof[inst][m] for m in mechanisms if len(mof[inst].get(m, [])) >= 2}
            if len(groups) < 2:
                continue
            report = bonferroni_posthoc(groups)
            for pr in report.pairs:
                direction = f"{MECHANISM_NUMBERS.get(pr.worse, pr.worse)}>{MECHANISM_NUMBERS.get(pr.better, pr.better)}"
                stat_rows.append([
                    inst, f"{pr.first}-{pr.second}", direction,
                    f"{pr.z:.6f}", f"{pr.p_corrected:.6g}", int(pr.significant),
                ])
            t2_lines.append(f"{inst}: " + ", ".join(table2_relations(report, MECHANISM_NUMBERS)))
        legend = ", ".join(f"{MECHANISM_NUMBERS[m]}={DISPLAY_NAMES[m]}" for m in MECHANISM_NAMES)
        emit("stats.csv", _csv_text(STATS_HEADER, stat_rows))
        emit("table2.txt", f"# {legend}\n" + "\n".join(line.rstrip() for line in t2_lines) + "\n")

    # diversity curves: mean CV per generation across runs
    cv_acc: dict[tuple[str, str, int], list[float]] = {}
    for r in cv_rows:
        cv_acc.setdefault((r["instance"], r["mechanism"], int(r["generation"])), []).append(float(r["cv"]))
    fig1 = [
        [i, m, g, _fmt(float(np.mean(v))), _fmt(float(np.median(v))), len(v)]
        for (i, m, g), v in sorted(
            cv_acc.items(), key=lambda kv: (instances.index(kv[0][0]), mechanisms.index(kv[0][1]), kv[0][2])
        )
        if i in instances and m in mechanisms
    ]
    emit("fig1_cv.csv", _csv_text(("instance", "mechanism", "generation", "cv_mean", "cv_median", "runs"), fig1))

    # NFE boxplot data: reached periods only, labelled with the success-rate band
    reached: dict[tuple[str, str], int] = {}
    total: dict[tuple[str, str], int] = {}
    for r in nfe_rows:
        key = (r["instance"], r["mechanism"])
        total[key] = total.get(key, 0) + 1
        reached[key] = reached.get(key, 0) + (r["nfe"] != "")
    fig2 = []
    for r in nfe_rows:
        if r["nfe"] == "":
            continue
        key = (r["instance"], r["mechanism"])
        sr = reached[key] / total[key]
        fig2.append([r["instance"], r["mechanism"], r["run"], r["period"], r["nfe"], f"{sr:.4f}", sr_band(sr)])
    emit("fig2_nfe.csv", _csv_text(
        ("instance", "mechanism", "run", "period", "nfe", "sr", "sr_band"), fig2
    ))
    return written
