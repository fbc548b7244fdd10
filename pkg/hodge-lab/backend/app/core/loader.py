"""
Run configuration loader.

Loads a JSON config, merges it over backend/data/defaults.json and returns
a validated RunConfig together with the mesh it describes.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict

from pydantic import ValidationError

from ..models import MeshSpec, RunConfig
from .mesh import SimplicialManifold, generate_mesh, load_off

logger = logging.getLogger(__name__)

DEFAULTS_PATH = Path(__file__).resolve().parents[2] / "data" / "defaults.json"


class ConfigError(ValueError):
    """A config file that cannot be read or does not validate."""


def _read_json(path: Path) -> Dict[str, Any]:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Nested dicts merge key by key; everything else in override wins."""
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(path: str, defaults_path: Path = DEFAULTS_PATH) -> RunConfig:
    """
    Load and validate a run configuration.

    Args:
        path: Path to the JSON config.
        defaults_path: Defaults the config is merged over.

    Returns:
        The validated RunConfig; a relative off_path is resolved against the
        config file's directory.

    Raises:
        ConfigError: If a file is unreadable or validation fails.
    """
    config_path = Path(path)
    raw = deep_merge(_read_json(defaults_path), _read_json(config_path))
    if "mesh" in raw and raw["mesh"].get("off_path"):
        off_path = Path(raw["mesh"]["off_path"])
        if not off_path.is_absolute():
            raw["mesh"]["off_path"] = str(config_path.parent / off_path)
    try:
        config = RunConfig(**raw)
    except ValidationError as exc:
        raise ConfigError(f"invalid config {config_path}: {exc}") from exc
    logger.info("Loaded config %s (experiment=%s)", config_path, config.experiment)
    return config


def _generator_params(params: Dict[str, float]) -> Dict[str, Any]:
    # JSON numbers arrive as floats; counts must be ints
    return {
        key: int(value) if float(value).is_integer() and key in _COUNT_KEYS else value
        for key, value in params.items()
    }


_COUNT_KEYS = {"rings", "sectors", "nx", "ny", "subdiv"}


def build_mesh(spec: MeshSpec) -> SimplicialManifold:
    """
    Realize a MeshSpec.

    Raises:
        ConfigError: If the OFF file cannot be read.
        ValueError: On degenerate parameters or malformed meshes.
    """
    if spec.kind is not None:
        return generate_mesh(spec.kind, **_generator_params(spec.params))
    try:
        text = Path(spec.off_path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read mesh {spec.off_path}: {exc}") from exc
    period = tuple(spec.period) if spec.period is not None else None
    return load_off(text, period=period)


def config_hash(config: RunConfig) -> str:
    """First 16 hex digits of the SHA-256 of the canonical config JSON."""
    canonical = json.dumps(config.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]
