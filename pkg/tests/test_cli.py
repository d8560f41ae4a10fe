"""Command-line surface: workflows, exit codes, and golden plan output."""

import json

import pytest

from sealview.cli import build_parser, main

SCHEMA_DOC = {
    "table": "boats",
    "columns": [
        {"name": "bid", "type": "int64"},
        {"name": "bname", "type": "utf8"},
        {"name": "color", "type": "utf8"},
    ],
}

FAMILY_SQL = "SELECT bname, color FROM boats WHERE bname IN ?x1 OR color IN ?x2"
VIEW_SQL = "SELECT bname, color FROM boats WHERE bname = 'Interlake' OR color = 'red'"

GOLDEN_PLAN = {
    "branching_bits": 8,
    "family_id": "5e4d5c9b3d63553e",
    "predicate_count": 2,
    "predicates": [
        {"atoms": ["bname"], "index": 1, "wildcards": ["x1"]},
        {"atoms": ["color"], "index": 2, "wildcards": ["x2"]},
    ],
    "projected": ["bname", "color"],
}


@pytest.fixture
def src_dir(tmp_path):
    src = tmp_path / "src"
    src.mkdir()
    (src / "schema.json").write_text(json.dumps(SCHEMA_DOC))
    (src / "part-00001.csv").write_text("101,Interlake,blue\n102,Interlake,red\n")
    (src / "part-00002.csv").write_text("103,Clipper,green\n104,Marine,red\n")
    return src


def run_cli(capsys, *argv):
    rc = main(list(argv))
    captured = capsys.readouterr()
    return rc, captured.out, captured.err


def test_full_workflow(tmp_path, capsys, src_dir):
    table = tmp_path / "table"
    keys = tmp_path / "keys"
    rc, out, _ = run_cli(
        capsys, "encrypt-table", "--src", str(src_dir), "--dst", str(table), "--keys-dir", str(keys)
    )
    assert rc == 0
    assert "encrypted 2 partitions" in out
    table_key_path = keys / "boats.tablekey"
    assert table_key_path.exists()

    rc, out, _ = run_cli(
        capsys,
        "add-family",
        "--table", str(table),
        "--table-key", str(table_key_path),
        "--family", FAMILY_SQL,
        "--keys-dir", str(keys),
    )
    assert rc == 0
    family_id = out.split()[1]
    family_key_path = keys / f"fam-{family_id}.familykey"
    assert family_key_path.exists()

    vk_path = keys / "analyst.viewkeys"
    rc, out, _ = run_cli(
        capsys,
        "view-gen",
        "--table", str(table),
        "--family-id", family_id,
        "--family-key", str(family_key_path),
        "--view", VIEW_SQL,
        "--out", str(vk_path),
    )
    assert rc == 0
    assert "2 keys" in out

    out_dir = tmp_path / "revealed"
    rc, out, _ = run_cli(
        capsys,
        "reveal-view",
        "--table", str(table),
        "--view-keys", str(vk_path),
        "--out", str(out_dir),
    )
    assert rc == 0
    assert "revealed 3 rows" in out
    text = (out_dir / "view-part-00001.csv").read_text()
    assert text == "Interlake,blue\nInterlake,red\n"
    assert (out_dir / "view-part-00002.csv").read_text() == "Marine,red\n"


def test_reveal_respects_fil(tmp_path, capsys, src_dir):
    table, keys = tmp_path / "table", tmp_path / "keys"
    run_cli(capsys, "encrypt-table", "--src", str(src_dir), "--dst", str(table), "--keys-dir", str(keys))
    rc, out, _ = run_cli(
        capsys, "add-family", "--table", str(table),
        "--table-key", str(keys / "boats.tablekey"), "--family", FAMILY_SQL, "--keys-dir", str(keys),
    )
    family_id = out.split()[1]
    vk = keys / "a.viewkeys"
    run_cli(
        capsys, "view-gen", "--table", str(table), "--family-id", family_id,
        "--family-key", str(keys / f"fam-{family_id}.familykey"), "--view", VIEW_SQL, "--out", str(vk),
    )
    out_dir = tmp_path / "filtered"
    rc, _, _ = run_cli(
        capsys, "reveal-view", "--table", str(table), "--view-keys", str(vk),
        "--out", str(out_dir), "--fil", "2:2",
    )
    assert rc == 0
    assert [p.name for p in sorted(out_dir.iterdir())] == ["view-part-00002.csv"]


def test_plan_json_golden(tmp_path, capsys):
    schema_path = tmp_path / "schema.json"
    schema_path.write_text(json.dumps(SCHEMA_DOC))
    rc, out, _ = run_cli(
        capsys, "plan", "--schema", str(schema_path), "--family", FAMILY_SQL, "--json"
    )
    assert rc == 0
    assert json.loads(out) == GOLDEN_PLAN


def test_plan_reports_range_cover_counts(tmp_path, capsys):
    schema_path = tmp_path / "schema.json"
    schema_path.write_text(json.dumps(SCHEMA_DOC))
    rc, out, _ = run_cli(
        capsys,
        "plan",
        "--schema", str(schema_path),
        "--family", "SELECT * FROM boats WHERE bid >= ?lo AND bid <= ?hi",
        "--view", "SELECT * FROM boats WHERE bid >= 0 AND bid <= 255",
        "--json",
    )
    assert rc == 0
    doc = json.loads(out)
    assert doc["predicate_count"] == 9
    assert doc["total_values"] == 1
    counts = {p["atoms"][0]: p["value_count"] for p in doc["predicates"]}
    assert counts["bid[bits:56/64]"] == 1


def test_check_evaluates_oracle(capsys, src_dir):
    rc, out, _ = run_cli(capsys, "check", "--src", str(src_dir), "--view", VIEW_SQL)
    assert rc == 0
    assert out == "Interlake,blue\nInterlake,red\nMarine,red\n"


def test_usage_errors_exit_one(capsys):
    assert main(["no-such-command"]) == 1
    assert main(["encrypt-table"]) == 1  # missing required flags
    assert main([]) == 1
    capsys.readouterr()


def test_data_errors_exit_two(tmp_path, capsys, src_dir):
    rc, _, err = run_cli(
        capsys, "reveal-view", "--table", str(tmp_path / "nowhere"),
        "--view-keys", str(tmp_path / "nope"), "--out", str(tmp_path / "o"),
    )
    assert rc == 2
    assert "error:" in err
    bad_schema = tmp_path / "bad.json"
    bad_schema.write_text(json.dumps(SCHEMA_DOC))
    rc, _, err = run_cli(
        capsys, "plan", "--schema", str(bad_schema), "--family", "SELECT * FROM t WHERE a LIKE ?x"
    )
    assert rc == 2


def test_keys_not_echoed_without_flag(tmp_path, capsys, src_dir):
    table, keys = tmp_path / "table", tmp_path / "keys"
    rc, out, _ = run_cli(
        capsys, "encrypt-table", "--src", str(src_dir), "--dst", str(table), "--keys-dir", str(keys)
    )
    key_hex = (keys / "boats.tablekey.hex").read_text().strip()
    assert key_hex not in out
    table2 = tmp_path / "table2"
    rc, out, _ = run_cli(
        capsys, "encrypt-table", "--src", str(src_dir), "--dst", str(table2),
        "--keys-dir", str(keys / "k2"), "--insecure-print-keys",
    )
    key_hex2 = (keys / "k2" / "boats.tablekey.hex").read_text().strip()
    assert key_hex2 in out


def test_every_documented_flag_in_help(capsys):
    parser = build_parser()
    sub_actions = [a for a in parser._actions if hasattr(a, "choices") and a.choices]
    commands = sub_actions[0].choices
    expected = {
        "encrypt-table": ["--src", "--dst", "--keys-dir", "--workers", "--batch-size", "--no-pipeline", "--insecure-print-keys"],
        "add-family": ["--table", "--table-key", "--family", "--keys-dir", "--tag-length", "--branching-bits", "--cache-capacity", "--rng-seed"],
        "view-gen": ["--table", "--family-id", "--family-key", "--view", "--out"],
        "reveal-view": ["--table", "--view-keys", "--out", "--fil", "--no-tags"],
        "plan": ["--family", "--view", "--schema", "--table", "--branching-bits", "--json"],
        "check": ["--src", "--view"],
        "bench": ["--rows", "--partitions", "--tag-length", "--selectivity", "--json"],
    }
    for command, flags in expected.items():
        help_text = commands[command].format_help()
        for flag in flags:
            assert flag in help_text, f"{command} help lacks {flag}"


def test_bench_smoke_json(capsys):
    rc, out, _ = run_cli(
        capsys, "bench", "reveal-view", "--rows", "400", "--partitions", "2", "--json",
        "--workers", "1",
    )
    assert rc == 0
    doc = json.loads(out)
    assert doc["rows"] == 400
    for phase in ("encrypt-table", "add-family", "reveal-view"):
        assert "mb_per_second_plaintext" in doc[phase]
        assert doc[phase]["compute_seconds"] >= 0
