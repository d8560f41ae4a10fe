"""Partition file format and CSV ingestion/egress.

One file per partition. Layout (all integers big-endian):

    magic "MEP1" | version u16 | flags u8 (0 plain, 1 encrypted)
    partition_id u32 | row_count u32 | column_count u16
    per column: name (u16 length + utf-8) | type u8 | nullable u8
    row-major cells, each u32 length + bytes
    family_count u16, then per family (sorted by id):
        family_id (8 raw bytes) | projection/selection/tagging entry
        widths u32 x3 | row-major (projection, selection, tagging) bytes

Plain partitions store the canonical cell encodings; encrypted ones
store ciphertexts (same lengths). Encrypted payloads do not benefit from
compression, so none is applied. CSV (RFC 4180) is supported for
plaintext ingestion and view egress only; the unquoted token NULL means
a null cell, which makes the literal string "NULL" unrepresentable in
CSV at this layer.
"""

from __future__ import annotations

import csv
import io
import struct

from .encoding import TYPE_INT64, TYPE_UTF8, decode_cell, encode_cell
from .model import (
    Column,
    EncryptedPartition,
    FamilyColumns,
    PlainPartition,
    Schema,
)

MAGIC = b"MEP1"
VERSION = 1
FLAG_PLAIN = 0
FLAG_ENCRYPTED = 1

_TYPE_CODES = {TYPE_INT64: 0, TYPE_UTF8: 1}
_TYPE_NAMES = {v: k for k, v in _TYPE_CODES.items()}

NULL_TOKEN = "NULL"


class PartitionFormatError(Exception):
    pass


def _write_header(out: list, flags: int, partition_id: int, n_rows: int, schema: Schema):
    out.append(MAGIC)
    out.append(struct.pack(">HBIIH", VERSION, flags, partition_id, n_rows, len(schema)))
    for col in schema.columns:
        name = col.name.encode("utf-8")
        out.append(struct.pack(">H", len(name)) + name)
        out.append(struct.pack(">BB", _TYPE_CODES[col.type], int(col.nullable)))


def serialize_plain(partition: PlainPartition, schema: Schema) -> bytes:
    out: list[bytes] = []
    _write_header(out, FLAG_PLAIN, partition.partition_id, len(partition.rows), schema)
    types = [c.type for c in schema.columns]
    for row in partition.rows:
        for value, ctype in zip(row, types):
            cell = encode_cell(value, ctype)
            out.append(struct.pack(">I", len(cell)))
            out.append(cell)
    out.append(struct.pack(">H", 0))
    return b"".join(out)


def serialize_encrypted(partition: EncryptedPartition, schema: Schema) -> bytes:
    out: list[bytes] = []
    _write_header(out, FLAG_ENCRYPTED, partition.partition_id, len(partition.rows), schema)
    for row in partition.rows:
        for cell in row:
            out.append(struct.pack(">I", len(cell)))
            out.append(cell)
    family_ids = sorted(partition.families)
    out.append(struct.pack(">H", len(family_ids)))
    for family_id in family_ids:
        cols = partition.families[family_id]
        widths = _family_widths(cols, len(partition.rows))
        out.append(bytes.fromhex(family_id))
        out.append(struct.pack(">III", *widths))
        for r0 in range(len(partition.rows)):
            out.append(cols.projection[r0])
            out.append(cols.selection[r0])
            out.append(cols.tagging[r0])
    return b"".join(out)


def _family_widths(cols: FamilyColumns, n_rows: int) -> tuple[int, int, int]:
    if n_rows == 0:
        return (0, 0, 0)
    widths = (len(cols.projection[0]), len(cols.selection[0]), len(cols.tagging[0]))
    for r0 in range(n_rows):
        if (
            len(cols.projection[r0]),
            len(cols.selection[r0]),
            len(cols.tagging[r0]),
        ) != widths:
            raise PartitionFormatError("family column entries must be fixed-width")
    return widths


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.off = 0

    def take(self, n: int) -> bytes:
        if self.off + n > len(self.data):
            raise PartitionFormatError("truncated partition file")
        chunk = self.data[self.off : self.off + n]
        self.off += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def parse_partition(data: bytes) -> tuple[Schema, PlainPartition | EncryptedPartition]:
    rd = _Reader(data)
    if rd.take(4) != MAGIC:
        raise PartitionFormatError("bad partition magic")
    version, flags, partition_id, n_rows, n_cols = rd.unpack(">HBIIH")
    if version != VERSION:
        raise PartitionFormatError(f"unsupported partition version {version}")
    cols = []
    for _ in range(n_cols):
        (name_len,) = rd.unpack(">H")
        name = rd.take(name_len).decode("utf-8")
        type_code, nullable = rd.unpack(">BB")
        if type_code not in _TYPE_NAMES:
            raise PartitionFormatError(f"unknown column type code {type_code}")
        cols.append(Column(name, _TYPE_NAMES[type_code], bool(nullable)))
    schema = Schema(tuple(cols))

    cells: list[list[bytes]] = []
    for _ in range(n_rows):
        row = []
        for _ in range(n_cols):
            (cell_len,) = rd.unpack(">I")
            row.append(rd.take(cell_len))
        cells.append(row)

    (n_families,) = rd.unpack(">H")
    if flags == FLAG_PLAIN:
        if n_families:
            raise PartitionFormatError("plain partitions carry no family columns")
        if rd.off != len(data):
            raise PartitionFormatError("trailing bytes in partition file")
        rows = [
            [decode_cell(cell, col.type) for cell, col in zip(row, schema.columns)]
            for row in cells
        ]
        return schema, PlainPartition(partition_id, rows)

    families: dict[str, FamilyColumns] = {}
    for _ in range(n_families):
        family_id = rd.take(8).hex()
        proj_w, sel_w, tag_w = rd.unpack(">III")
        fam = FamilyColumns([], [], [])
        for _ in range(n_rows):
            fam.projection.append(rd.take(proj_w))
            fam.selection.append(rd.take(sel_w))
            fam.tagging.append(rd.take(tag_w))
        families[family_id] = fam
    if rd.off != len(data):
        raise PartitionFormatError("trailing bytes in partition file")
    part = EncryptedPartition(partition_id, cells, families)
    return schema, part


def parse_encrypted(data: bytes, schema: Schema) -> EncryptedPartition:
    file_schema, part = parse_partition(data)
    if not isinstance(part, EncryptedPartition):
        raise PartitionFormatError("expected an encrypted partition")
    if file_schema != schema:
        raise PartitionFormatError("partition schema does not match the manifest")
    return part


def parse_plain(data: bytes, schema: Schema | None = None) -> tuple[Schema, PlainPartition]:
    file_schema, part = parse_partition(data)
    if not isinstance(part, PlainPartition):
        raise PartitionFormatError("expected a plain partition")
    if schema is not None and file_schema != schema:
        raise PartitionFormatError("partition schema does not match the manifest")
    return file_schema, part


# ---------------------------------------------------------------------- CSV


def csv_to_partition(text: str, schema: Schema, partition_id: int) -> PlainPartition:
    rows = []
    for line_no, record in enumerate(csv.reader(io.StringIO(text)), start=1):
        if not record:
            continue
        if len(record) != len(schema):
            raise PartitionFormatError(
                f"line {line_no}: {len(record)} fields, schema has {len(schema)}"
            )
        row = []
        for raw, col in zip(record, schema.columns):
            if raw == NULL_TOKEN:
                row.append(None)
            elif col.type == TYPE_INT64:
                try:
                    row.append(int(raw))
                except ValueError as exc:
                    raise PartitionFormatError(f"line {line_no}: bad integer {raw!r}") from exc
            else:
                row.append(raw)
        rows.append(row)
    return PlainPartition(partition_id, rows)


def partition_to_csv(rows: list[tuple], out) -> None:
    writer = csv.writer(out, lineterminator="\n")
    for row in rows:
        writer.writerow([NULL_TOKEN if v is None else v for v in row])
