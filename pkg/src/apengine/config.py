"""Engine configuration.

Sources, in precedence order: explicit overrides (CLI flags) > environment
variables prefixed ``AP_`` > an INI-style config file with ``[section]``
``key = value`` pairs > built-in defaults.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Optional


@dataclass
class Config:
    store_path: str = "./ap-store"
    index_dimension: int = 256
    providers_mode: str = "mock"  # mock | remote
    providers_base_url: str = ""
    providers_api_key: str = ""
    providers_model: str = "default"
    tau_refuse: float = 0.25
    gamma: float = 0.55
    cache_ttl_s: int = 300
    chunk_max_words: int = 200
    duplicate_threshold: float = 0.95
    auth_enabled: bool = False
    auth_keys_file: str = ""
    auth_query_open: bool = True
    rate_limit_rps: float = 10.0

    def api_keys(self) -> dict[str, str]:
        """key -> role mapping from the keys file (JSON object)."""
        import json

        if not self.auth_keys_file:
            return {}
        data = json.loads(Path(self.auth_keys_file).read_text(encoding="utf-8"))
        return {str(k): str(v) for k, v in data.items()}


# (section, key) in the config file -> Config attribute
_FILE_KEYS = {
    ("store", "path"): "store_path",
    ("index", "dimension"): "index_dimension",
    ("providers", "mode"): "providers_mode",
    ("providers", "base_url"): "providers_base_url",
    ("providers", "api_key"): "providers_api_key",
    ("providers", "model"): "providers_model",
    ("query", "tau_refuse"): "tau_refuse",
    ("verify", "gamma"): "gamma",
    ("cache", "ttl_s"): "cache_ttl_s",
    ("ingest", "chunk_max_words"): "chunk_max_words",
    ("ingest", "duplicate_threshold"): "duplicate_threshold",
    ("auth", "enabled"): "auth_enabled",
    ("auth", "keys_file"): "auth_keys_file",
    ("auth", "query_open"): "auth_query_open",
    ("api", "rate_limit_rps"): "rate_limit_rps",
}

_ENV_PREFIX = "AP_"


def _coerce(attr: str, raw: str) -> Any:
    kind = {f.name: f.type for f in fields(Config)}[attr]
    if kind in ("int", int):
        return int(raw)
    if kind in ("float", float):
        return float(raw)
    if kind in ("bool", bool):
        return raw.strip().lower() in ("1", "true", "yes", "on")
    return raw


def load_config(path: Optional[str] = None, overrides: Optional[dict[str, Any]] = None) -> Config:
    config = Config()
    if path:
        parser = configparser.ConfigParser()
        parser.read(path, encoding="utf-8")
        for (section, key), attr in _FILE_KEYS.items():
            if parser.has_option(section, key):
                setattr(config, attr, _coerce(attr, parser.get(section, key)))
    for f in fields(Config):
        env_name = _ENV_PREFIX + f.name.upper()
        if env_name in os.environ:
            setattr(config, f.name, _coerce(f.name, os.environ[env_name]))
    for key, value in (overrides or {}).items():
        if value is not None:
            setattr(config, key, value)
    return config
