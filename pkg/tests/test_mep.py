"""Partition file format and CSV round trips."""

import pytest

from sealview.backend import FamilyParams, add_family, encrypt_partition, random_key
from sealview.encoding import TYPE_INT64, TYPE_UTF8
from sealview.manifest import FamilyRecord, ManifestError, TableManifest
from sealview.mep import (
    PartitionFormatError,
    csv_to_partition,
    parse_encrypted,
    parse_partition,
    parse_plain,
    partition_to_csv,
    serialize_encrypted,
    serialize_plain,
)
from sealview.model import Column, PlainPartition, Schema
from sealview.planner import plan_family

import io


def test_plain_round_trip(boats_schema, boats_partition):
    blob = serialize_plain(boats_partition, boats_schema)
    schema, part = parse_plain(blob, boats_schema)
    assert schema == boats_schema
    assert part.partition_id == 1
    assert part.rows == boats_partition.rows


def test_empty_partition_round_trip(boats_schema):
    blob = serialize_plain(PlainPartition(5, []), boats_schema)
    _, part = parse_plain(blob)
    assert part.partition_id == 5
    assert part.rows == []


def test_encrypted_round_trip(boats_schema, boats_partition):
    family = plan_family("SELECT * FROM t WHERE color = ?x", boats_schema)
    table_key = random_key()
    enc_part = encrypt_partition(boats_partition, boats_schema, table_key)
    add_family(enc_part, boats_schema, table_key, family, random_key(), FamilyParams())
    blob = serialize_encrypted(enc_part, boats_schema)
    back = parse_encrypted(blob, boats_schema)
    assert back.partition_id == enc_part.partition_id
    assert back.rows == enc_part.rows
    fid = family.family_id
    assert back.families[fid].projection == enc_part.families[fid].projection
    assert back.families[fid].selection == enc_part.families[fid].selection
    assert back.families[fid].tagging == enc_part.families[fid].tagging


def test_magic_version_and_truncation_errors(boats_schema, boats_partition):
    blob = serialize_plain(boats_partition, boats_schema)
    with pytest.raises(PartitionFormatError, match="magic"):
        parse_partition(b"XXXX" + blob[4:])
    with pytest.raises(PartitionFormatError, match="version"):
        parse_partition(blob[:4] + b"\x00\x09" + blob[6:])
    with pytest.raises(PartitionFormatError, match="truncated"):
        parse_partition(blob[:-3])
    with pytest.raises(PartitionFormatError, match="trailing"):
        parse_partition(blob + b"\x00")


def test_schema_mismatch_detected(boats_schema, boats_partition):
    blob = serialize_plain(boats_partition, boats_schema)
    other = Schema((Column("a", TYPE_INT64),))
    with pytest.raises(PartitionFormatError, match="schema"):
        parse_plain(blob, other)


def test_csv_parses_running_example_row(boats_schema):
    part = csv_to_partition("101,Interlake,blue\n", boats_schema, 1)
    assert part.rows == [[101, "Interlake", "blue"]]


def test_csv_null_token_and_quoting():
    schema = Schema(
        (Column("n", TYPE_INT64, nullable=True), Column("s", TYPE_UTF8, nullable=True))
    )
    part = csv_to_partition('7,"a,b"\nNULL,NULL\n-3,"say ""hi"""\n', schema, 1)
    assert part.rows == [[7, "a,b"], [None, None], [-3, 'say "hi"']]
    out = io.StringIO()
    partition_to_csv([tuple(r) for r in part.rows], out)
    back = csv_to_partition(out.getvalue(), schema, 1)
    assert back.rows == part.rows


def test_csv_rejects_bad_shapes(boats_schema):
    with pytest.raises(PartitionFormatError, match="fields"):
        csv_to_partition("1,2\n", boats_schema, 1)
    with pytest.raises(PartitionFormatError, match="integer"):
        csv_to_partition("x,Interlake,blue\n", boats_schema, 1)


def test_manifest_round_trip(boats_schema):
    family = plan_family("SELECT * FROM t WHERE color = ?x", boats_schema)
    manifest = TableManifest(
        name="boats",
        schema=boats_schema,
        partitions=[(1, 4), (2, 0)],
        families=[FamilyRecord(family.family_id, family, 4, 8)],
    )
    text = manifest.to_json()
    back = TableManifest.from_json(text)
    assert back.name == "boats"
    assert back.schema == boats_schema
    assert back.partitions == [(1, 4), (2, 0)]
    assert back.families[0].family == family
    assert back.to_json() == text


def test_manifest_rejects_duplicates(boats_schema):
    with pytest.raises(ManifestError, match="duplicate partition"):
        TableManifest("t", boats_schema, [(1, 4), (1, 2)])
    family = plan_family("SELECT * FROM t WHERE color = ?x", boats_schema)
    rec = FamilyRecord(family.family_id, family, 4, 8)
    with pytest.raises(ManifestError, match="duplicate family"):
        TableManifest("t", boats_schema, [(1, 4)], [rec, rec])


def test_manifest_rejects_out_of_schema_family(boats_schema):
    family = plan_family("SELECT * FROM t WHERE color = ?x", boats_schema)
    small = Schema((Column("only", TYPE_INT64),))
    with pytest.raises(ManifestError, match="outside the schema"):
        TableManifest("t", small, [(1, 4)], [FamilyRecord(family.family_id, family, 4, 8)])
