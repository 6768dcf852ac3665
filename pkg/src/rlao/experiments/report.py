"""Suite results and their CSV form."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path


def binomial_se(p_hat: float, n: int) -> float:
    return math.sqrt(p_hat * (1.0 - p_hat) / n) if n > 0 else float("nan")


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class SuiteReport:
    """Per-case rows plus an aggregate verdict.

    ``rows`` are lists aligned with ``columns``; the last column is always
    ``pass``. ``criterion`` states the pass rule in words and is written into
    the summary file.
    """

    name: str
    kind: str
    columns: list
    criterion: str
    rows: list = field(default_factory=list)
    runtime: float = 0.0
    notes: list = field(default_factory=list)
    passed_override: bool | None = None

    def add(self, *values, passed: bool) -> None:
        self.rows.append([*values, bool(passed)])

    @property
    def n_cases(self) -> int:
        return len(self.rows)

    @property
    def failures(self) -> int:
        return sum(1 for r in self.rows if not r[-1])

    @property
    def failure_fraction(self) -> float:
        return self.failures / self.n_cases if self.rows else 0.0

    @property
    def passed(self) -> bool:
        if self.passed_override is not None:
            return self.passed_override
        return self.failures == 0

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(v) for v in r])
        return buf.getvalue()

    def summary_fields(self) -> dict:
        n = self.n_cases
        return {
            "name": self.name,
            "kind": self.kind,
            "cases": n,
            "failures": self.failures,
            "failure_fraction": self.failure_fraction,
            "failure_fraction_se": binomial_se(self.failure_fraction, n) if n else 0.0,
            "passed": self.passed,
            "criterion": self.criterion,
            "notes": "; ".join(self.notes),
            "runtime_s": self.runtime,
        }

    def summary_csv(self, with_timing: bool = True) -> str:
        fields = self.summary_fields()
        if not with_timing:
            fields.pop("runtime_s")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(fields.keys())
        w.writerow([_fmt(v) for v in fields.values()])
        return buf.getvalue()

    def write(self, directory: str | Path) -> tuple[Path, Path]:
        """Write ``<name>.csv`` (cases) and ``<name>_summary.csv`` (aggregate, with timing)."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        cases = directory / f"{self.name}.csv"
        summary = directory / f"{self.name}_summary.csv"
        cases.write_text(self.rows_csv())
        summary.write_text(self.summary_csv())
        return cases, summary
