"""Table manifest: schema, partition census, and instantiated families."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .model import Schema
from .planner.canonical import CanonicalFamily

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


class ManifestError(Exception):
    pass


@dataclass
class FamilyRecord:
    family_id: str
    family: CanonicalFamily
    tag_length: int
    branching_bits: int

    def to_json(self) -> dict:
        return {
            "family_id": self.family_id,
            "canonical": self.family.serialize().hex(),
            "tag_length_bytes": self.tag_length,
            "branching_factor_bits": self.branching_bits,
        }

    @classmethod
    def from_json(cls, data: dict) -> "FamilyRecord":
        family = CanonicalFamily.deserialize(bytes.fromhex(data["canonical"]))
        return cls(
            family_id=data["family_id"],
            family=family,
            tag_length=int(data["tag_length_bytes"]),
            branching_bits=int(data["branching_factor_bits"]),
        )


@dataclass
class TableManifest:
    name: str
    schema: Schema
    partitions: list[tuple[int, int]]  # (partition_id, row_count)
    families: list[FamilyRecord] = field(default_factory=list)
    version: int = MANIFEST_VERSION

    def __post_init__(self):
        ids = [pid for pid, _ in self.partitions]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate partition ids")
        if any(pid < 1 for pid in ids):
            raise ManifestError("partition ids start at 1")
        seen = set()
        for rec in self.families:
            if rec.family_id in seen:
                raise ManifestError(f"duplicate family id {rec.family_id}")
            seen.add(rec.family_id)
            n_cols = len(self.schema)
            used = rec.family.where_columns() | set(rec.family.projected)
            if any(c >= n_cols for c in used):
                raise ManifestError("family references a column outside the schema")

    def family(self, family_id: str) -> FamilyRecord:
        for rec in self.families:
            if rec.family_id == family_id:
                return rec
        raise ManifestError(f"unknown family id {family_id}")

    def to_json(self) -> str:
        doc = {
            "format_version": self.version,
            "table": self.name,
            "schema": self.schema.to_json(),
            "partitions": [{"id": pid, "rows": rows} for pid, rows in self.partitions],
            "families": [rec.to_json() for rec in self.families],
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TableManifest":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"manifest is not valid JSON: {exc}") from exc
        if doc.get("format_version") != MANIFEST_VERSION:
            raise ManifestError(f"unsupported manifest version {doc.get('format_version')}")
        return cls(
            name=doc["table"],
            schema=Schema.from_json(doc["schema"]),
            partitions=[(int(p["id"]), int(p["rows"])) for p in doc["partitions"]],
            families=[FamilyRecord.from_json(f) for f in doc.get("families", [])],
            version=MANIFEST_VERSION,
        )
