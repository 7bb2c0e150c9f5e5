import json
import re
import sys

from concurrent.futures import ProcessPoolExecutor
from functools import wraps
from logging import DEBUG
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple

import click

from .. import __version__, logger
from ..optim import Abort, ConfigError, StorageError
from ..optim.engine import AblationVariant, PameaConfig, RunRecord
from ..optim.engine import run as run_engine
from ..optim.problems import parse_problem_id
from .compare import MIN_RECORDS, Comparison, compare, compare_globs, render, write_csv
from .config import DEFAULTS, build_config, describe, resolve
from .records import code_version, fmt, save_record


def parse_seeds(seed: Optional[int], seeds: Optional[str]) -> List[int]:
    """Get the seeds of a sweep from either --seed or an inclusive --seeds a..b."""
    if seeds is None:
        return [0 if seed is None else seed]
    if seed is not None:
        raise ConfigError("Use either --seed or --seeds, not both")
    m = re.fullmatch(r"\s*(\d+)\s*\.\.\s*(\d+)\s*", seeds)
    if not m:
        raise ConfigError(f"Seed range '{seeds}' is not of the form a..b")
    lo, hi = int(m[1]), int(m[2])
    if hi < lo:
        raise ConfigError(f"Seed range '{seeds}' is empty")
    return list(range(lo, hi + 1))


def execute(problem_id: str, config: PameaConfig, output: str) -> RunRecord:
    """Run one configuration and save its record files."""
    record = run_engine(parse_problem_id(problem_id), config)
    path = save_record(record, Path(output))
    logger.info(f"Wrote {path}")
    return record


def execute_all(
    problem_id: str, configs: List[PameaConfig], output: str, workers: int
) -> List[RunRecord]:
    """Validate every configuration, then run them with up to workers processes."""
    problem = parse_problem_id(problem_id)
    for config in configs:
        config.validate(problem.n_var)
    if workers < 1:
        raise ConfigError("At least one worker is needed")
    if workers == 1 or len(configs) == 1:
        return [execute(problem_id, c, output) for c in configs]
    with ProcessPoolExecutor(max_workers=min(workers, len(configs))) as pool:
        futures = [pool.submit(execute, problem_id, c, output) for c in configs]
        return [f.result() for f in futures]


def aborts(f: Callable[..., None]) -> Callable[..., None]:
    """Turn failures into a logged diagnostic and a distinct exit code."""

    @wraps(f)
    def wrapper(*args: Any, **kwargs: Any) -> None:
        try:
            f(*args, **kwargs)
        except Abort as e:
            logger.error(e.message)
            sys.exit(e.exit_code)
        except Exception:
            logger.exception("An unexpected error occurred")
            sys.exit(1)

    return wrapper


def settings_options(f: Callable[..., None]) -> Callable[..., None]:
    options = [
        click.option(
            "--config",
            "config_path",
            type=click.Path(dir_okay=False),
            help="TOML file of settings",
        ),
        click.option("--seed", type=int, help="Master seed of a single run"),
        click.option("--seeds", help="Inclusive seed range a..b"),
        click.option("--budget", type=int, help=describe("budget")),
        click.option("--population-size", type=int, help=describe("population_size")),
        click.option("--sampling-cycles", type=int, help=describe("sampling_cycles")),
        click.option(
            "--crossover-probability",
            type=float,
            help=describe("crossover_probability"),
        ),
        click.option(
            "--mutation-probability",
            type=float,
            help=describe("mutation_probability"),
        ),
        click.option(
            "--distribution-index", type=float, help=describe("distribution_index")
        ),
        click.option("--reference-points", type=int, help=describe("reference_points")),
        click.option("--workers", type=int, help=describe("workers")),
        click.option(
            "--output",
            default=DEFAULTS["output"],
            show_default=True,
            help=describe("output"),
        ),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def _configs(
    flags: Dict[str, Any], config_path: Optional[str], seeds: List[int]
) -> Tuple[Dict[str, Any], List[PameaConfig]]:
    settings = resolve(flags, config_path)
    return settings, [build_config(settings, s) for s in seeds]


@click.group()
@click.version_option(__version__)
@click.option("--verbose", is_flag=True, help="Log every generation")
def cli(verbose: bool) -> None:
    if verbose:
        logger.setLevel(DEBUG)


@cli.command("run")
@click.argument("problem_id")
@click.option("--variant", help=describe("variant"))
@settings_options
@aborts
def run_command(
    problem_id: str,
    config_path: Optional[str],
    seed: Optional[int],
    seeds: Optional[str],
    output: str,
    **flags: Any,
) -> None:
    """Run PAMEA on PROBLEM_ID, once per seed."""
    settings, configs = _configs(flags, config_path, parse_seeds(seed, seeds))
    execute_all(problem_id, configs, output, int(settings["workers"]))


@cli.command("ablate")
@click.argument("problem_id")
@click.option("--csv", "csv_path", default=DEFAULTS["csv"], help=describe("csv"))
@click.option("--alpha", type=float, default=DEFAULTS["alpha"], help=describe("alpha"))
@settings_options
@aborts
def ablate_command(
    problem_id: str,
    csv_path: str,
    alpha: float,
    config_path: Optional[str],
    seed: Optional[int],
    seeds: Optional[str],
    output: str,
    **flags: Any,
) -> None:
    """Run every variant on PROBLEM_ID and compare full PAMEA against the others."""
    settings, _ = _configs(flags, config_path, [])
    runs: Dict[AblationVariant, List[PameaConfig]] = {}
    for variant in AblationVariant:
        settings["variant"] = variant.value
        runs[variant] = [build_config(settings, s) for s in parse_seeds(seed, seeds)]
    configs = [c for group in runs.values() for c in group]
    records = execute_all(problem_id, configs, output, int(settings["workers"]))
    by_variant: Dict[AblationVariant, List[RunRecord]] = {v: [] for v in runs}
    for record in records:
        by_variant[record.config.variant].append(record)
    full = by_variant.pop(AblationVariant.FULL)
    if len(full) < MIN_RECORDS:
        logger.warning(
            f"Skipping the comparison, it needs at least {MIN_RECORDS} seeds"
        )
        return
    comparisons: List[Comparison] = []
    for variant, group in by_variant.items():
        c = compare(full, group, AblationVariant.FULL.value, variant.value, alpha)
        click.echo(render(c, DEFAULTS["table"]))
        comparisons.append(c)
    write_csv(comparisons, Path(csv_path))


@cli.command("compare")
@click.argument("pattern_a")
@click.argument("pattern_b")
@click.option("--csv", "csv_path", default=DEFAULTS["csv"], help=describe("csv"))
@click.option("--alpha", type=float, default=DEFAULTS["alpha"], help=describe("alpha"))
@aborts
def compare_command(
    pattern_a: str, pattern_b: str, csv_path: str, alpha: float
) -> None:
    """Compare the final indicators of two groups of run records."""
    c = compare_globs(pattern_a, pattern_b, alpha)
    click.echo(render(c, DEFAULTS["table"]))
    write_csv([c], Path(csv_path))


@cli.command("front")
@click.argument("problem_id")
@click.option("-n", "--points", default=10_000, show_default=True, type=int)
@click.option("--output", default=None, help="File to write instead of stdout")
@aborts
def front_command(problem_id: str, points: int, output: Optional[str]) -> None:
    """Print evenly spaced samples of the true front of PROBLEM_ID."""
    problem = parse_problem_id(problem_id)
    if points < 2:
        raise ConfigError("At least two front points are needed")
    rows = ["f1,f2"]
    rows.extend(f"{fmt(f1)},{fmt(f2)}" for f1, f2 in problem.sample_front(points))
    if output is None:
        click.echo("\n".join(rows))
        return
    meta = {"code_version": code_version(), "problem_id": problem.id}
    text = f"# {json.dumps(meta, sort_keys=True)}\n" + "\n".join(rows) + "\n"
    try:
        Path(output).write_text(text)
    except OSError as e:
        raise StorageError(f"Could not write front to {output}: {e}")


def main() -> None:
    cli(prog_name="pamea")


if __name__ == "__main__":
    main()
