"""Persistence of run records.

Each run writes three files next to each other:

- `<stem>.json`, the full record (including wall-clock time),
- `<stem>.trajectory.csv`, one `fe,igd,hv,mean_sparsity` row per generation,
- `<stem>.population.json`, the final population.

The last two contain nothing that depends on timing, so repeating a run with the
same settings reproduces them byte for byte. All three embed the settings and the
code version that produced them.
"""

import hashlib
import json
import re

from dataclasses import asdict
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List

import numpy as np

from .. import __version__
from ..optim import ConfigError, StorageError
from ..optim.core import Population
from ..optim.engine import PameaConfig, RunRecord
from ..optim.metrics import IndicatorTrajectory, TrajectoryPoint

SCHEMA_VERSION = 1
CSV_COLUMNS = ("fe", "igd", "hv", "mean_sparsity")
TRAJECTORY_SUFFIX = ".trajectory.csv"
POPULATION_SUFFIX = ".population.json"
PACKAGE_ROOT = Path(__file__).parent.parent


@lru_cache(maxsize=None)
def code_version() -> str:
    """Hash the package sources together with the package version."""
    h = hashlib.sha256(__version__.encode())
    for path in sorted(PACKAGE_ROOT.rglob("*")):
        if path.suffix in (".py", ".yml") and path.is_file():
            h.update(path.relative_to(PACKAGE_ROOT).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()


def fmt(value: float) -> str:
    """Shortest decimal text that reads back as the same float."""
    return np.format_float_positional(value, trim="-")


def record_stem(record: RunRecord) -> str:
    slug = re.sub(r"[^A-Za-z0-9]+", "-", record.problem_id).strip("-")
    return f"{slug}_{record.config.variant.value}_seed{record.seed}"


def header(record: RunRecord) -> Dict[str, Any]:
    return {
        "schema_version": SCHEMA_VERSION,
        "code_version": code_version(),
        "problem_id": record.problem_id,
        "config": record.config.snapshot(),
    }


def trajectory_csv(record: RunRecord) -> str:
    lines = [f"# {json.dumps(header(record), sort_keys=True)}", ",".join(CSV_COLUMNS)]
    for p in record.trajectory:
        lines.append(f"{p.fe},{fmt(p.igd)},{fmt(p.hv)},{fmt(p.mean_sparsity)}")
    return "\n".join(lines) + "\n"


def population_data(pop: Population) -> Dict[str, Any]:
    return {
        "masks": ["".join("1" if b else "0" for b in row) for row in pop.masks],
        "reals": pop.reals.tolist(),
        "objectives": pop.objectives.tolist(),
    }


def _population(data: Dict[str, Any]) -> Population:
    masks = [[c == "1" for c in row] for row in data["masks"]]
    n_var = len(masks[0]) if masks else 0
    reals = np.asarray(data["reals"], dtype=np.float64).reshape(len(masks), n_var)
    objs = np.asarray(data["objectives"], dtype=np.float64)
    return Population(
        np.asarray(masks, dtype=np.bool_).reshape(len(masks), n_var), reals, objs
    )


def record_data(record: RunRecord) -> Dict[str, Any]:
    data = header(record)
    data.update(
        {
            "seed": record.seed,
            "evaluations": record.evaluations,
            "generations": record.generations,
            "seconds": record.seconds,
            "trajectory": [asdict(p) for p in record.trajectory],
            "population": population_data(record.population),
        }
    )
    return data


def save_record(record: RunRecord, directory: Path) -> Path:
    """Write the record files of a run, returning the path of the full record."""
    base = Path(directory) / record_stem(record)
    pop = header(record)
    pop["population"] = population_data(record.population)
    try:
        base.parent.mkdir(parents=True, exist_ok=True)
        path = base.with_name(base.name + ".json")
        path.write_text(json.dumps(record_data(record), sort_keys=True, indent=1))
        base.with_name(base.name + TRAJECTORY_SUFFIX).write_text(
            trajectory_csv(record)
        )
        base.with_name(base.name + POPULATION_SUFFIX).write_text(
            json.dumps(pop, sort_keys=True, indent=1)
        )
    except OSError as e:
        raise StorageError(f"Could not write records to {directory}: {e}")
    return path


def load_record(path: Path) -> RunRecord:
    """Read a record written by save_record."""
    try:
        data = json.loads(Path(path).read_text())
    except OSError as e:
        raise StorageError(f"Could not read record {path}: {e}")
    except json.JSONDecodeError as e:
        raise StorageError(f"Record {path} is not valid JSON: {e}")
    version = data.get("schema_version") if isinstance(data, dict) else None
    if version != SCHEMA_VERSION:
        raise StorageError(
            f"Record {path} has schema version {version}, expected {SCHEMA_VERSION}"
        )
    try:
        trajectory = IndicatorTrajectory()
        for point in data["trajectory"]:
            trajectory.append(TrajectoryPoint(**point))
        return RunRecord(
            problem_id=data["problem_id"],
            config=PameaConfig.from_snapshot(data["config"]),
            trajectory=trajectory,
            population=_population(data["population"]),
            evaluations=int(data["evaluations"]),
            generations=int(data["generations"]),
            seconds=float(data["seconds"]),
        )
    except (ConfigError, KeyError, TypeError, ValueError) as e:
        raise StorageError(f"Record {path} is corrupt: {e}")


def is_record(path: Path) -> bool:
    name = Path(path).name
    return name.endswith(".json") and not name.endswith(POPULATION_SUFFIX)


def load_records(paths: List[Path]) -> List[RunRecord]:
    return [load_record(p) for p in paths if is_record(p)]
