import csv
import glob
import json

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from jinja2 import Template

from .. import logger
from ..optim import SampleError, StorageError
from ..optim.core import FloatArray
from ..optim.engine import RunRecord
from ..optim.metrics import Verdict, rank_sum_test
from .records import SCHEMA_VERSION, code_version, is_record, load_records

MIN_RECORDS = 5
# Indicator name and whether lower values are better.
INDICATORS: Tuple[Tuple[str, bool], ...] = (("igd", True), ("hv", False))
CSV_HEADER = (
    "problem_id",
    "indicator",
    "median_a",
    "iqr_a",
    "median_b",
    "iqr_b",
    "label_a",
    "label_b",
    "verdict",
)


@dataclass(frozen=True)
class IndicatorSummary:
    name: str
    median_a: float
    iqr_a: float
    median_b: float
    iqr_b: float
    verdict: Verdict


@dataclass
class Comparison:
    """Final indicator values of two groups of runs on one problem."""

    problem_id: str
    label_a: str
    label_b: str
    n_a: int
    n_b: int
    alpha: float = 0.05
    rows: List[IndicatorSummary] = field(default_factory=list)
    configs_a: List[Dict[str, Any]] = field(default_factory=list)
    configs_b: List[Dict[str, Any]] = field(default_factory=list)


def expand(pattern: str) -> List[Path]:
    """Get the record files matching a glob pattern, sorted by name."""
    paths = [Path(p) for p in sorted(glob.glob(pattern)) if is_record(Path(p))]
    logger.debug(f"Pattern {pattern} matched {len(paths)} records")
    return paths


def _finals(records: Sequence[RunRecord], name: str) -> FloatArray:
    return np.array([getattr(r.trajectory.final, name) for r in records])


def _iqr(values: FloatArray) -> float:
    q1, q3 = np.percentile(values, [25, 75])
    return float(q3 - q1)


def compare(
    a: Sequence[RunRecord],
    b: Sequence[RunRecord],
    label_a: str = "A",
    label_b: str = "B",
    alpha: float = 0.05,
) -> Comparison:
    """Summarise both groups and test each indicator with the rank-sum test."""
    for label, group in ((label_a, a), (label_b, b)):
        if len(group) < MIN_RECORDS:
            raise SampleError(
                f"{label} has {len(group)} records, at least {MIN_RECORDS} are needed"
            )
    ids = sorted({r.problem_id for r in a} | {r.problem_id for r in b})
    if len(ids) != 1:
        raise SampleError(f"Records span several problems: {', '.join(ids)}")
    c = Comparison(ids[0], label_a, label_b, len(a), len(b), alpha)
    c.configs_a = [r.config.snapshot() for r in a]
    c.configs_b = [r.config.snapshot() for r in b]
    for name, lower_is_better in INDICATORS:
        va, vb = _finals(a, name), _finals(b, name)
        verdict = rank_sum_test(va, vb, alpha, lower_is_better)
        c.rows.append(
            IndicatorSummary(
                name,
                float(np.median(va)),
                _iqr(va),
                float(np.median(vb)),
                _iqr(vb),
                verdict,
            )
        )
    return c


def compare_globs(pattern_a: str, pattern_b: str, alpha: float = 0.05) -> Comparison:
    """Compare the records matched by two glob patterns."""
    return compare(
        load_records(expand(pattern_a)),
        load_records(expand(pattern_b)),
        label_a=pattern_a,
        label_b=pattern_b,
        alpha=alpha,
    )


def render(comparison: Comparison, template: str) -> str:
    return Template(template, trim_blocks=True).render(c=comparison)


def csv_header(comparisons: Sequence[Comparison]) -> Dict[str, Any]:
    """Describe what produced a comparison file, down to every run's settings."""
    return {
        "schema_version": SCHEMA_VERSION,
        "code_version": code_version(),
        "comparisons": [
            {
                "problem_id": c.problem_id,
                "label_a": c.label_a,
                "label_b": c.label_b,
                "alpha": c.alpha,
                "configs_a": c.configs_a,
                "configs_b": c.configs_b,
            }
            for c in comparisons
        ],
    }


def write_csv(comparisons: Sequence[Comparison], path: Path) -> None:
    """Write one row per indicator of each comparison, after a `# {json}` line."""
    meta = json.dumps(csv_header(comparisons), sort_keys=True)
    try:
        with Path(path).open("w", newline="", encoding="utf-8") as f:
            f.write(f"# {meta}\n")
            w = csv.writer(f, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for c in comparisons:
                for r in c.rows:
                    w.writerow(
                        [
                            c.problem_id,
                            r.name,
                            repr(r.median_a),
                            repr(r.iqr_a),
                            repr(r.median_b),
                            repr(r.iqr_b),
                            c.label_a,
                            c.label_b,
                            r.verdict.value,
                        ]
                    )
    except OSError as e:
        raise StorageError(f"Could not write comparison to {path}: {e}")
