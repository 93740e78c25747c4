"""Schema files on disk.

Layout::

    <schema_dir>/<dataset>/<metric>/peer.yaml
    <schema_dir>/<dataset>/<metric>/area_chair.yaml

Each file is one YAML mapping whose keys mirror :class:`PromptSchema` fields
plus ``version: 1``. If ``area_chair.yaml`` is absent the peer schema is used
for both roles.
"""

from __future__ import annotations

from collections.abc import Iterable
from importlib import resources
from pathlib import Path

import yaml

from ..errors import InvalidConfig, InvalidSchema
from .schema import PromptSchema, Role, RoleSchemas, validate_schema

SCHEMA_FORMAT_VERSION = 1


class _Dumper(yaml.SafeDumper):
    pass


def _str_block(dumper: yaml.SafeDumper, value: str):
    # multi-line text reads better as a literal block
    style = "|" if "\n" in value else None
    return dumper.represent_scalar("tag:yaml.org,2002:str", value, style=style)


_Dumper.add_representer(str, _str_block)


def bundled_schema_dir() -> Path:
    return Path(str(resources.files("peerchair") / "schemas"))


def load_schema(path: str | Path) -> PromptSchema:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise InvalidConfig(f"{path}: schema file must be a mapping")
    version = data.get("version", SCHEMA_FORMAT_VERSION)
    if version != SCHEMA_FORMAT_VERSION:
        raise InvalidConfig(f"{path}: unsupported schema version {version!r}")
    try:
        schema = PromptSchema.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc
    issues = validate_schema(schema)
    if issues:
        raise InvalidSchema([f"{path.name}: {i}" for i in issues])
    return schema


def dump_schema(schema: PromptSchema, path: str | Path, role: Role | str | None = None) -> None:
    data = {"version": SCHEMA_FORMAT_VERSION}
    if role is not None:
        data["role"] = Role(role).value
    data.update(schema.to_dict())
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with Path(path).open("w", encoding="utf-8") as fh:
        yaml.dump(data, fh, Dumper=_Dumper, sort_keys=False, allow_unicode=True, width=100)


def load_metric_schemas(schema_dir: str | Path, dataset: str, metric: str) -> RoleSchemas:
    base = Path(schema_dir) / dataset / metric
    peer_path = base / "peer.yaml"
    if not peer_path.is_file():
        raise InvalidConfig(f"no peer schema for metric {metric!r} (looked in {peer_path})")
    peer = load_schema(peer_path)
    ac_path = base / "area_chair.yaml"
    area_chair = load_schema(ac_path) if ac_path.is_file() else peer
    return RoleSchemas(peer=peer, area_chair=area_chair)


def load_schema_set(
    schema_dir: str | Path, dataset: str, metrics: Iterable[str]
) -> dict[str, RoleSchemas]:
    return {m: load_metric_schemas(schema_dir, dataset, m) for m in metrics}
