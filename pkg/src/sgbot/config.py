"""Global configuration: TOML/JSON file with SGBOT_* env overrides."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .errors import ParseError, SchemaError
from .graphbuild import GroundingParams
from .planner import PlannerConfig
from .registration import IcpConfig

ENV_PREFIX = "SGBOT_"
DEFAULT_ADDR = "127.0.0.1:8420"


@dataclass(frozen=True)
class AppConfig:
    grounding: GroundingParams = field(default_factory=GroundingParams)
    icp: IcpConfig = field(default_factory=IcpConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    server_addr: str = DEFAULT_ADDR
    snapshot_dir: str | None = None  # dump session snapshots here on shutdown


_SECTIONS = {
    "grounding": GroundingParams,
    "icp": IcpConfig,
    "planner": PlannerConfig,
    "server": None,
}


def _parse_document(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".toml":
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as e:
            raise ParseError(f"config: {e}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"config: line {e.lineno} column {e.colno}: {e.msg}") from e


def _coerce(value: str, target_type):
    if target_type is bool:
        lowered = value.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {value!r}")
    return target_type(value)


def _env_overrides(environ) -> dict:
    overrides: dict[str, dict] = {}
    for key, value in environ.items():
        if not key.startswith(ENV_PREFIX):
            continue
        rest = key[len(ENV_PREFIX):].lower()
        section, _, field_name = rest.partition("_")
        if section not in _SECTIONS or not field_name:
            raise SchemaError(f"unrecognized environment override {key}")
        overrides.setdefault(section, {})[field_name] = value
    return overrides


def _build_section(cls, doc: dict, raw_env: dict, section: str):
    known = {f.name: f.type for f in fields(cls)}
    values = {}
    for key, value in doc.items():
        if key not in known:
            raise SchemaError(f"config section {section!r}: unknown key {key!r}")
        values[key] = value
    for key, raw in raw_env.items():
        if key not in known:
            raise SchemaError(f"env override {section}.{key}: unknown key")
        target = type(getattr(cls(), key)) if getattr(cls(), key) is not None else float
        try:
            values[key] = _coerce(raw, target)
        except ValueError as e:
            raise SchemaError(f"env override {section}.{key}: {e}") from e
    try:
        return cls(**values)
    except (TypeError, ValueError) as e:
        raise SchemaError(f"config section {section!r}: {e}") from e


def load_config(path: str | Path | None = None, environ=None) -> AppConfig:
    """Load configuration, never requiring a file to exist.

    Precedence: dataclass defaults < config file < SGBOT_* environment
    variables (e.g. SGBOT_ICP_N=7, SGBOT_PLANNER_SIGMA=0.02,
    SGBOT_SERVER_ADDR=0.0.0.0:9000).
    """
    environ = os.environ if environ is None else environ
    doc = _parse_document(Path(path)) if path is not None else {}
    for section in doc:
        if section not in _SECTIONS:
            raise SchemaError(f"config: unknown section {section!r}")
    env = _env_overrides(environ)

    grounding = _build_section(GroundingParams, doc.get("grounding", {}), env.get("grounding", {}), "grounding")
    icp = _build_section(IcpConfig, doc.get("icp", {}), env.get("icp", {}), "icp")

    planner_doc = dict(doc.get("planner", {}))
    planner_env = dict(env.get("planner", {}))
    known_planner = {f.name for f in fields(PlannerConfig)} - {"icp"}
    for key in list(planner_doc):
        if key not in known_planner:
            raise SchemaError(f"config section 'planner': unknown key {key!r}")
    values = dict(planner_doc)
    for key, raw in planner_env.items():
        if key not in known_planner:
            raise SchemaError(f"env override planner.{key}: unknown key")
        target = type(getattr(PlannerConfig(), key))
        values[key] = _coerce(raw, target)
    try:
        planner = PlannerConfig(icp=icp, **values)
    except (TypeError, ValueError) as e:
        raise SchemaError(f"config section 'planner': {e}") from e

    server_doc = doc.get("server", {})
    unknown_server = set(server_doc) - {"addr", "snapshot_dir"}
    if unknown_server:
        raise SchemaError(f"config section 'server': unknown keys {sorted(unknown_server)}")
    server_env = env.get("server", {})
    addr = server_env.get("addr", server_doc.get("addr", DEFAULT_ADDR))
    snapshot_dir = server_env.get("snapshot_dir", server_doc.get("snapshot_dir"))
    return AppConfig(
        grounding=grounding,
        icp=icp,
        planner=planner,
        server_addr=str(addr),
        snapshot_dir=str(snapshot_dir) if snapshot_dir is not None else None,
    )
