import os
import logging
import datetime
from typing import Any, Dict, Optional, Tuple

import yaml

from ..common.errors import ConfigError

logger = logging.getLogger(__name__)

FIXTURES_PATH = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures.yaml")

def load_fixtures(path: Optional[str] = None) -> Dict[str, Any]:
    """Load the regression fixtures, by default the packaged file"""
    path = path or FIXTURES_PATH
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
    except OSError as e:
        raise ConfigError(f"Cannot read fixtures {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"Malformed fixtures {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Fixtures {path} must hold a mapping")
    return data

def estimate_constant(id: str, fixtures: Optional[Dict[str, Any]] = None) -> float:
    """Calibrated ratio bound for an estimate id"""
    fixtures = fixtures if fixtures is not None else load_fixtures()
    try:
        return float(fixtures["estimates"]["C_emp"][id])
    except KeyError as e:
        raise ConfigError(f"No calibrated constant for {id}", key=f"estimates.C_emp.{id}") from e

def pin_fixture(path: str, key: str, value: Any, note: str = "") -> Dict[str, Any]:
    """
    Record a regression value under a dotted key, with a provenance note.

    The band of an entry, when present, must contain the value.

    Returns:
        The updated fixtures mapping
    """
    data = load_fixtures(path) if os.path.exists(path) else {}
    parts = key.split(".")
    node = data
    for part in parts:
        node = node.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"Fixture key {key} crosses a non-mapping entry", key=key)
    band = node.get("band")
    if band is not None and not (band[0] <= value <= band[1]):
        raise ConfigError(f"Value {value} for {key} is outside its sanity band {band}", key=key)
    node["value"] = value
    stamp = datetime.date.today().isoformat()
    node["note"] = f"{note} ({stamp})" if note else f"pinned {stamp}"
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(data, f, sort_keys=False, default_flow_style=None)
    logger.info(f"Pinned {key} = {value} in {path}")
    return data

def pinned_value(key: str, fixtures: Optional[Dict[str, Any]] = None) -> Tuple[float, float]:
    """
    Pinned regression value and its tolerance under a dotted key.

    Raises:
        ConfigError: When the entry is missing or not pinned yet
    """
    fixtures = fixtures if fixtures is not None else load_fixtures()
    node: Any = fixtures
    for part in key.split("."):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"No fixture entry {key}", key=key)
        node = node[part]
    if not isinstance(node, dict) or node.get("value") is None:
        raise ConfigError(f"Fixture {key} has no pinned value", key=key)
    return float(node["value"]), float(node.get("tol", 0.0))
