"""Configuration file and environment resolution.

Resolution order everywhere: command-line flag > environment variable >
config file > built-in default. The config file is JSON; environment
overrides use the AEROCOACH_ prefix with section and key upper-cased and
joined by underscores (e.g. AEROCOACH_GATEWAY_PORT=9000).
"""

from __future__ import annotations

import copy
import json
import os
from pathlib import Path

ENV_PREFIX = "AEROCOACH_"

DEFAULTS: dict = {
    "backend": {
        "endpoint": "",
        "model": "gpt-4o-2024-08-06",
        "api_key_env": "AEROCOACH_API_KEY",
        "timeout_s": 10.0,
    },
    "device": {"address": "sim"},
    "gateway": {"host": "127.0.0.1", "port": 8000},
    "ems": {
        "correction_duration_ms": 400,
        "prestart_duration_ms": 800,
        "sample_rate_hz": 100,
    },
    "kb": {
        "dimension": 256,
        "max_chunk_chars": 600,
        "retrieval_k": 3,
        "context_budget": 1200,
    },
    "session": {"deadline_ms": 800.0, "history_window": 5},
}


def _deep_merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: str | Path | None = None) -> dict:
    """Defaults merged with the config file, if one is found.

    The file is taken from the explicit path, else $AEROCOACH_CONFIG,
    else ./aerocoach.json when present.
    """
    candidate = path or os.environ.get(ENV_PREFIX + "CONFIG")
    if candidate is None and Path("aerocoach.json").is_file():
        candidate = "aerocoach.json"
    if candidate is None:
        return copy.deepcopy(DEFAULTS)
    text = Path(candidate).read_text(encoding="utf-8")
    return _deep_merge(DEFAULTS, json.loads(text))


def resolve(config: dict, section: str, key: str, flag_value=None, cast=None):
    """One setting under the flag > env > file > default order."""
    if flag_value is not None:
        return flag_value
    env_name = f"{ENV_PREFIX}{section.upper()}_{key.upper()}"
    if env_name in os.environ:
        raw = os.environ[env_name]
        return cast(raw) if cast else raw
    return config.get(section, {}).get(key, DEFAULTS.get(section, {}).get(key))
