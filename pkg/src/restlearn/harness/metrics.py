"""Experiment metrics: row records, CSV emission, summary tables."""

from __future__ import annotations

import csv
from dataclasses import dataclass, fields
from typing import Optional, Sequence

COLUMNS = (
    "experiment",
    "family",
    "method",
    "accuracy",
    "mean_length",
    "train_seconds",
    "test_seconds",
    "seed",
)

METHODS = ("BB", "REST+BB")


@dataclass(frozen=True)
class MetricsRow:
    """One (experiment, family, method, seed) measurement.

    accuracy is in percentage points. mean_length is the average episode
    length in steps and is None for the bare-classifier arm, which runs no
    episodes.
    """

    experiment: str
    family: str
    method: str
    accuracy: float
    mean_length: Optional[float]
    train_seconds: float
    test_seconds: float
    seed: int

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 <= self.accuracy <= 100.0:
            raise ValueError(f"accuracy must be in [0, 100], got {self.accuracy}")
        if self.mean_length is not None and not 1.0 <= self.mean_length <= 10.0:
            raise ValueError(f"mean_length must be in [1, 10], got {self.mean_length}")
        if self.train_seconds < 0.0 or self.test_seconds < 0.0:
            raise ValueError("wall times must be non-negative")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def emit_csv(rows: Sequence[MetricsRow], path) -> None:
    """Write rows to a UTF-8 CSV with a fixed column order and header."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(COLUMNS)
        for row in rows:
            writer.writerow([_cell(getattr(row, col)) for col in COLUMNS])


def read_csv(path) -> list[MetricsRow]:
    """Load rows previously written by emit_csv."""
    out = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != list(COLUMNS):
            raise ValueError(f"unexpected CSV header in {path}")
        for rec in reader:
            out.append(
                MetricsRow(
                    experiment=rec["experiment"],
                    family=rec["family"],
                    method=rec["method"],
                    accuracy=float(rec["accuracy"]),
                    mean_length=float(rec["mean_length"]) if rec["mean_length"] else None,
                    train_seconds=float(rec["train_seconds"]),
                    test_seconds=float(rec["test_seconds"]),
                    seed=int(rec["seed"]),
                )
            )
    return out


def _mean(vals):
    vals = [v for v in vals if v is not None]
    return sum(vals) / len(vals) if vals else None


def summarize(rows: Sequence[MetricsRow]) -> list[dict]:
    """Collapse rows to per-(experiment, family, method) means across seeds.

    Preserves first-appearance order of groups; adds the seed count.
    """
    groups: dict[tuple, list[MetricsRow]] = {}
    for row in rows:
        groups.setdefault((row.experiment, row.family, row.method), []).append(row)
    out = []
    for (exp, fam, method), members in groups.items():
        out.append(
            {
                "experiment": exp,
                "family": fam,
                "method": method,
                "accuracy": _mean([m.accuracy for m in members]),
                "mean_length": _mean([m.mean_length for m in members]),
                "train_seconds": _mean([m.train_seconds for m in members]),
                "test_seconds": _mean([m.test_seconds for m in members]),
                "seeds": len(members),
            }
        )
    return out


def emit_summary(rows: Sequence[MetricsRow]) -> str:
    """Fixed-width text table of seed-averaged results, one block per experiment."""
    summary = summarize(rows)
    headers = ("family", "method", "accuracy", "length", "train_s", "test_s", "seeds")
    lines = []
    current = None
    for rec in summary:
        if rec["experiment"] != current:
            current = rec["experiment"]
            lines.append(f"== {current} ==")
            lines.append(
                f"{headers[0]:<10} {headers[1]:<8} {headers[2]:>9} "
                f"{headers[3]:>7} {headers[4]:>9} {headers[5]:>8} {headers[6]:>5}"
            )
        length = f"{rec['mean_length']:.2f}" if rec["mean_length"] is not None else "-"
        lines.append(
            f"{rec['family']:<10} {rec['method']:<8} {rec['accuracy']:>9.2f} "
            f"{length:>7} {rec['train_seconds']:>9.1f} {rec['test_seconds']:>8.1f} "
            f"{rec['seeds']:>5d}"
        )
    return "\n".join(lines) + ("\n" if lines else "")
