"""Per-generation run records and their CSV form."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

TRACE_HEADER = (
    "run", "generation", "eval_count", "period",
    "best_f", "best_feasible", "total_violation_best", "cv",
)


@dataclass(frozen=True, slots=True)
class GenerationRecord:
    """State after one generation.

    ``best_*`` describe the best solution found so far in ``period`` under the
    feasibility rules; ``period`` is the period of the last charged evaluation.
    """

    generation: int
    best_objective: float
    best_feasible: bool
    best_violation: float
    eval_count: int
    period: int
    cv: float


@dataclass
class RunTrace:
    instance: str
    mechanism: str
    run: int
    seed: int
    change_frequency: int
    num_periods: int
    records: list[GenerationRecord] = field(default_factory=list)
    truncated: bool = False

    def periods_covered(self) -> list[int]:
        return sorted({r.period for r in self.records})

    def generations_per_period(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for r in self.records:
            if r.generation > 0:
                out[r.period] = out.get(r.period, 0) + 1
        return out

    def cv_trajectory(self) -> list[float]:
        return [r.cv for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(
            f"# instance={self.instance} mechanism={self.mechanism} run={self.run} "
            f"seed={self.seed} fc={self.change_frequency} periods={self.num_periods} "
            f"truncated={int(self.truncated)}\n"
        )
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for r in self.records:
            w.writerow([
                self.run, r.generation, r.eval_count, r.period, repr(r.best_objective),
                int(r.best_feasible), repr(r.best_violation), repr(r.cv),
            ])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path: str | Path) -> "RunTrace":
        with open(path, newline="") as fh:
            meta_line = fh.readline()
            if not meta_line.startswith("#"):
                raise ValueError(f"{path}: missing trace metadata line")
            meta = dict(item.split("=", 1) for item in meta_line[1:].split())
            reader = csv.DictReader(fh)
            records = [
                GenerationRecord(
                    generation=int(row["generation"]),
                    best_objective=float(row["best_f"]),
                    best_feasible=row["best_feasible"] == "1",
                    best_violation=float(row["total_violation_best"]),
                    eval_count=int(row["eval_count"]),
                    period=int(row["period"]),
                    cv=float(row["cv"]),
                )
                for row in reader
            ]
        return cls(
            instance=meta["instance"], mechanism=meta["mechanism"], run=int(meta["run"]),
            seed=int(meta["seed"]), change_frequency=int(meta["fc"]),
            num_periods=int(meta["periods"]), records=records,
            truncated=meta.get("truncated", "0") == "1",
        )
