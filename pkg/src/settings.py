"""
Configuration handling.

The YAML file under config/ is merged over built-in defaults; the merged
dictionary is the active configuration read by every module through
``setting(section, key)``.
"""

import copy
import logging
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterator, Optional

import yaml

from .errors import InputError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_PATH = Path(__file__).resolve().parent.parent / "config" / "config.yaml"

DEFAULT_CONFIG: Dict[str, Dict[str, Any]] = {
    'run': {
        'seed': 20240601,
        'workers': 1,
        'format': 'json',
        'precision': 9,
    },
    'tolerances': {
        'hermitian': 1e-12,
        'positivity': 1e-10,
        'positive_map': 1e-8,
        'projection': 1e-10,
        'state_trace': 1e-10,
        'quotient': 1e-6,
        'quasi_leibniz': 1e-7,
    },
    'lp': {
        'method': 'highs',
        'feasibility': 1e-8,
        'bland_tolerance': 1e-9,
        'max_pivots': 50000,
        'box_radius': 1000.0,
    },
    'cutting_plane': {
        'gap': 1e-7,
        'max_rounds': 200,
    },
    'dc': {
        'gap': 1e-4,
        'max_iterations': 200,
        'random_starts': 32,
        'vertex_starts': 64,
        'dca_iterations': 50,
        'max_lifted_dim': 9,
    },
    'hausdorff': {
        'gap': 1e-7,
        'max_rounds': 500,
    },
    'lipnorm': {
        'vertex_enum_max_dim': 6,
        'quasi_leibniz_probes': 64,
        'extreme_directions': 64,
        'permissible_samples': 2000,
    },
    'tunnel': {
        'composition_eps_factor': 1e-3,
        'correspondence_floor': 1e-7,
        'relative_position_restarts': 0,
    },
    'propinquity': {
        'standard_eps_factors': [0.001, 0.1],
        'identity_floor': 1e-3,
        'covering_budget': 16,
        'compactness_window': 4,
        'extrapolation_points': 5,
        'gh_max_pairs': 36,
        'gh_restarts': 64,
        'exact_cover_max': 12,
    },
    'approx': {
        'norm_ball_directions': 24,
        'dense_probe_count': 1000,
        'max_dense_points': 20000,
    },
    'outputs': {
        'reports_dir': 'outputs/reports',
        'logs_dir': 'outputs/logs',
        'save_reports': False,
    },
}

_active: Dict[str, Dict[str, Any]] = copy.deepcopy(DEFAULT_CONFIG)


def _merge(base: Dict, extra: Dict) -> Dict:
    merged = copy.deepcopy(base)
    for key, value in (extra or {}).items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(config_path: Optional[str] = None) -> Dict:
    """
    Load configuration from a YAML file merged over the defaults

    Args:
        config_path: Path to the YAML file (defaults to config/config.yaml)

    Returns:
        dict: The merged configuration (also made active)
    """
    path = Path(config_path) if config_path else DEFAULT_CONFIG_PATH
    if not path.exists():
        if config_path:
            raise InputError(f"Config file not found: {path}")
        logger.debug(f"No config file at {path}, using defaults")
        return set_config(DEFAULT_CONFIG)

    try:
        with open(path, 'r') as f:
            loaded = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        logger.error(f"Error loading config: {e}")
        raise InputError(f"Invalid YAML in {path}: {e}") from e

    if not isinstance(loaded, dict):
        raise InputError(f"Config root must be a mapping: {path}")

    logger.info(f"Loaded configuration from {path}")
    return set_config(_merge(DEFAULT_CONFIG, loaded))


def set_config(config: Dict) -> Dict:
    """Replace the active configuration"""
    global _active
    _active = _merge(DEFAULT_CONFIG, config)
    return _active


def get_config() -> Dict:
    return _active


def setting(section: str, key: str) -> Any:
    try:
        return _active[section][key]
    except KeyError:
        return DEFAULT_CONFIG[section][key]


@contextmanager
def config_override(overrides: Dict) -> Iterator[Dict]:
    """Temporarily merge ``overrides`` into the active configuration"""
    global _active
    saved = _active
    _active = _merge(saved, overrides)
    try:
        yield _active
    finally:
        _active = saved
