"""Pipeline configuration: INI file, environment overrides, config hash.

Backend sections are `[backend.<role>]` with endpoint/model/token_env keys.
Secrets never enter the config: only the *name* of the environment variable
holding a token is recorded, and MEDEVAL_<ROLE>_ENDPOINT /
MEDEVAL_<ROLE>_TOKEN environment variables override per role at load time
(the token override changes which variable is read, never stores a value).
"""

from __future__ import annotations

import configparser
import hashlib
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .chain import QueryMarkerMode
from .classifier import DEFAULT_C_GRID
from .gateway import BackendConfig, Gateway, HttpBackend, Role
from .introspection import CorrectnessMode
from .knowledge import DEFAULT_OVERLAP, DEFAULT_WINDOW
from .model import MedevalError, dumps_canonical


class ConfigError(MedevalError):
    pass


_KNOWN_KEYS: dict[str, set[str]] = {
    "pipeline": {"seed"},
    "chain": {"max_rounds", "top_k", "marker"},
    "knowledge": {"window", "overlap", "dim"},
    "classifier": {"c_grid", "seed"},
    "curriculum": {"n1", "n3"},
    "introspection": {"mode", "top_k"},
    "metrics": {"tie_mode"},
}

_BACKEND_KEYS = {"endpoint", "model", "token_env", "timeout_s", "max_retries"}


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    backends: dict[Role, BackendConfig] = field(default_factory=dict)
    chain_max_rounds: int = 5
    chain_top_k: int = 3
    chain_marker: QueryMarkerMode = QueryMarkerMode.STRICT_BRACKET
    window: int = DEFAULT_WINDOW
    overlap: int = DEFAULT_OVERLAP
    embed_dim: int = 256
    c_grid: tuple[float, ...] = DEFAULT_C_GRID
    classifier_seed: int = 0
    n1: int = 0
    n3: int = 0
    introspection_mode: CorrectnessMode = CorrectnessMode.RANK_MISMATCH
    introspection_top_k: int = 3
    tie_mode: str = "include"

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "backends": {
                role.value: cfg.to_dict() for role, cfg in sorted(self.backends.items(), key=lambda kv: kv[0].value)
            },
            "chain": {
                "max_rounds": self.chain_max_rounds,
                "top_k": self.chain_top_k,
                "marker": self.chain_marker.value,
            },
            "knowledge": {"window": self.window, "overlap": self.overlap, "dim": self.embed_dim},
            "classifier": {"c_grid": list(self.c_grid), "seed": self.classifier_seed},
            "curriculum": {"n1": self.n1, "n3": self.n3},
            "introspection": {
                "mode": self.introspection_mode.value,
                "top_k": self.introspection_top_k,
            },
            "metrics": {"tie_mode": self.tie_mode},
        }

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(dumps_canonical(self.to_dict()).encode("utf-8")).hexdigest()[:16]


def _parse_int(section: str, key: str, value: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be an integer, got {value!r}")


def _parse_float(section: str, key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"[{section}] {key} must be a number, got {value!r}")


def _env_override(role_name: str, suffix: str) -> str | None:
    return os.environ.get(f"MEDEVAL_{role_name.upper()}_{suffix}")


def _backend_from_section(
    role: Role, items: dict[str, str], section: str
) -> BackendConfig:
    unknown = set(items) - _BACKEND_KEYS
    if unknown:
        raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in [{section}]")
    endpoint = _env_override(role.value, "ENDPOINT") or items.get("endpoint", "")
    if not endpoint:
        raise ConfigError(f"[{section}] needs an endpoint")
    token_env = items.get("token_env") or f"MEDEVAL_{role.value.upper()}_TOKEN"
    return BackendConfig(
        endpoint=endpoint,
        model=items.get("model", "default"),
        token_env=token_env,
        timeout_s=_parse_float(section, "timeout_s", items.get("timeout_s", "60")),
        max_retries=_parse_int(section, "max_retries", items.get("max_retries", "3")),
    )


def load_config(path: str | Path | None) -> PipelineConfig:
    """Read an INI config; missing file path means all defaults. Unknown
    sections or keys are rejected by name."""
    values: dict[str, dict[str, str]] = {}
    if path is not None:
        file = Path(path)
        if not file.exists():
            raise ConfigError(f"config file not found: {file}")
        parser = configparser.ConfigParser()
        parser.read(file, encoding="utf-8")
        for section in parser.sections():
            values[section] = dict(parser.items(section))

    backends: dict[Role, BackendConfig] = {}
    kwargs: dict[str, Any] = {}
    for section, items in values.items():
        if section.startswith("backend."):
            role_name = section.split(".", 1)[1]
            try:
                role = Role(role_name)
            except ValueError:
                raise ConfigError(f"unknown backend role {role_name!r} in [{section}]")
            backends[role] = _backend_from_section(role, items, section)
            continue
        if section not in _KNOWN_KEYS:
            raise ConfigError(f"unknown config section [{section}]")
        unknown = set(items) - _KNOWN_KEYS[section]
        if unknown:
            raise ConfigError(f"unknown key {sorted(unknown)[0]!r} in [{section}]")

    # roles configured purely through the environment
    for role in Role:
        if role not in backends and _env_override(role.value, "ENDPOINT"):
            backends[role] = _backend_from_section(role, {}, f"backend.{role.value}")

    def get(section: str, key: str, default: str) -> str:
        return values.get(section, {}).get(key, default)

    kwargs["seed"] = _parse_int("pipeline", "seed", get("pipeline", "seed", "0"))
    kwargs["chain_max_rounds"] = _parse_int("chain", "max_rounds", get("chain", "max_rounds", "5"))
    kwargs["chain_top_k"] = _parse_int("chain", "top_k", get("chain", "top_k", "3"))
    marker = get("chain", "marker", "strict")
    try:
        kwargs["chain_marker"] = QueryMarkerMode(marker)
    except ValueError:
        raise ConfigError(f"[chain] marker must be strict or loose, got {marker!r}")
    kwargs["window"] = _parse_int("knowledge", "window", get("knowledge", "window", str(DEFAULT_WINDOW)))
    kwargs["overlap"] = _parse_int("knowledge", "overlap", get("knowledge", "overlap", str(DEFAULT_OVERLAP)))
    kwargs["embed_dim"] = _parse_int("knowledge", "dim", get("knowledge", "dim", "256"))
    grid_raw = get("classifier", "c_grid", ",".join(str(c) for c in DEFAULT_C_GRID))
    kwargs["c_grid"] = tuple(
        _parse_float("classifier", "c_grid", part.strip()) for part in grid_raw.split(",") if part.strip()
    )
    kwargs["classifier_seed"] = _parse_int("classifier", "seed", get("classifier", "seed", "0"))
    kwargs["n1"] = _parse_int("curriculum", "n1", get("curriculum", "n1", "0"))
    kwargs["n3"] = _parse_int("curriculum", "n3", get("curriculum", "n3", "0"))
    mode = get("introspection", "mode", "rank")
    try:
        kwargs["introspection_mode"] = CorrectnessMode(mode)
    except ValueError:
        raise ConfigError(f"[introspection] mode must be rank or exact, got {mode!r}")
    kwargs["introspection_top_k"] = _parse_int(
        "introspection", "top_k", get("introspection", "top_k", "3")
    )
    tie_mode = get("metrics", "tie_mode", "include")
    if tie_mode not in ("include", "strict"):
        raise ConfigError(f"[metrics] tie_mode must be include or strict, got {tie_mode!r}")
    kwargs["tie_mode"] = tie_mode

    return PipelineConfig(backends=backends, **kwargs)


def gateway_from_config(config: PipelineConfig, required: tuple[Role, ...]) -> Gateway:
    """HTTP gateway over the configured backends; missing roles are named."""
    missing = [role.value for role in required if role not in config.backends]
    if missing:
        raise ConfigError(
            f"no backend configured for role(s): {', '.join(missing)} "
            f"(add [backend.<role>] sections or MEDEVAL_<ROLE>_ENDPOINT)"
        )
    return Gateway({role: HttpBackend(cfg) for role, cfg in config.backends.items()})
