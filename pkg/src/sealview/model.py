"""Table schema and in-memory partition representations."""

from __future__ import annotations

from dataclasses import dataclass, field

from .encoding import TYPE_INT64, TYPE_UTF8, encode_cell


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class Column:
    name: str
    type: str
    nullable: bool = False

    def __post_init__(self):
        if not self.name:
            raise SchemaError("column name must be non-empty")
        if self.type not in (TYPE_INT64, TYPE_UTF8):
            raise SchemaError(f"unknown column type {self.type!r}")


@dataclass(frozen=True)
class Schema:
    columns: tuple[Column, ...]

    def __post_init__(self):
        if not self.columns:
            raise SchemaError("schema needs at least one column")
        names = [c.name for c in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names")

    def index_of(self, name: str) -> int:
        for i, col in enumerate(self.columns):
            if col.name == name:
                return i
        raise SchemaError(f"no column named {name!r}")

    def __len__(self) -> int:
        return len(self.columns)

    def to_json(self) -> list[dict]:
        return [
            {"name": c.name, "type": c.type, "nullable": c.nullable} for c in self.columns
        ]

    @classmethod
    def from_json(cls, data: list[dict]) -> "Schema":
        return cls(
            tuple(
                Column(d["name"], d["type"], bool(d.get("nullable", False))) for d in data
            )
        )


@dataclass
class PlainPartition:
    """Rows of decoded cell values (int, str, or None per column)."""

    partition_id: int
    rows: list[list]

    def __post_init__(self):
        if self.partition_id < 1:
            raise SchemaError("partition ids start at 1")

    def validate(self, schema: Schema) -> None:
        for r, row in enumerate(self.rows):
            if len(row) != len(schema):
                raise SchemaError(f"row {r} has {len(row)} cells, schema has {len(schema)}")
            for value, col in zip(row, schema.columns):
                if value is None and not col.nullable:
                    raise SchemaError(f"null in non-nullable column {col.name!r}")
                encode_cell(value, col.type)

    def encoded_size(self, schema: Schema) -> int:
        return sum(
            len(encode_cell(v, c.type))
            for row in self.rows
            for v, c in zip(row, schema.columns)
        )


@dataclass
class FamilyColumns:
    """Per-row projection / selection / tagging entries for one family."""

    projection: list[bytes]
    selection: list[bytes]
    tagging: list[bytes]

    def row_count(self) -> int:
        return len(self.projection)


@dataclass
class EncryptedPartition:
    """Per-cell ciphertexts plus the columns of each instantiated family."""

    partition_id: int
    rows: list[list[bytes]]
    families: dict[str, FamilyColumns] = field(default_factory=dict)

    def __post_init__(self):
        if self.partition_id < 1:
            raise SchemaError("partition ids start at 1")
