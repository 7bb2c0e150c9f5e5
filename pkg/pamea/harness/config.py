from pathlib import Path
from typing import Any, Dict, Mapping, Optional

import toml
import yaml

from ..optim import ConfigError, StorageError
from ..optim.engine import AblationVariant, PameaConfig
from ..optim.operators import OperatorParams

DEFAULTS_PATH = Path(__file__).parent / "defaults.yml"
CONFIG_KEYS = (
    "population_size",
    "budget",
    "sampling_cycles",
    "crossover_probability",
    "mutation_probability",
    "distribution_index",
    "variant",
    "reference_points",
    "workers",
)


def load_manifest(path: Path = DEFAULTS_PATH) -> Dict[str, Dict[str, Any]]:
    with path.open() as f:
        manifest = yaml.safe_load(f)
    inputs: Dict[str, Dict[str, Any]] = manifest["inputs"]
    return inputs


INPUTS = load_manifest()
DEFAULTS: Dict[str, Any] = {k: v.get("default") for k, v in INPUTS.items()}


def describe(key: str) -> str:
    return str(INPUTS[key]["description"])


def read_config_file(path: Optional[str]) -> Dict[str, Any]:
    """Read a flat TOML table of settings, rejecting keys we don't know."""
    if path is None:
        return {}
    try:
        data = toml.load(path)
    except OSError as e:
        raise StorageError(f"Could not read config file {path}: {e}")
    except toml.TomlDecodeError as e:
        raise ConfigError(f"Malformed config file {path}: {e}")
    unknown = sorted(set(data) - set(CONFIG_KEYS))
    if unknown:
        raise ConfigError(f"Unknown config keys in {path}: {', '.join(unknown)}")
    nested = [k for k, v in data.items() if isinstance(v, dict)]
    if nested:
        raise ConfigError(f"Config file {path} must be flat, found tables: {nested}")
    return data


def resolve(flags: Mapping[str, Any], path: Optional[str] = None) -> Dict[str, Any]:
    """Merge settings; flags win over the config file, which wins over defaults."""
    settings = {k: DEFAULTS[k] for k in CONFIG_KEYS}
    settings.update(read_config_file(path))
    settings.update({k: v for k, v in flags.items() if k in settings and v is not None})
    return settings


def _optional(value: Any, kind: type) -> Any:
    return None if value is None else kind(value)


def build_config(settings: Mapping[str, Any], seed: int) -> PameaConfig:
    """Turn resolved settings into an engine configuration for one seed."""
    try:
        operators = OperatorParams(
            crossover_probability=float(settings["crossover_probability"]),
            mutation_probability=_optional(settings["mutation_probability"], float),
            distribution_index=float(settings["distribution_index"]),
        )
        return PameaConfig(
            population_size=int(settings["population_size"]),
            max_evaluations=_optional(settings["budget"], int),
            sampling_cycles=int(settings["sampling_cycles"]),
            operators=operators,
            seed=int(seed),
            variant=AblationVariant.parse(str(settings["variant"])),
            reference_points=int(settings["reference_points"]),
        )
    except (TypeError, ValueError) as e:
        raise ConfigError(f"Invalid setting: {e}")
