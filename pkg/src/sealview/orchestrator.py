"""Table-level driver: storage, batching, pipelining, and the four
table operations.

Partitions move between a storage root and worker memory in batches;
fetch, compute, and store stages overlap through bounded queues, and the
compute stage fans partitions out across worker processes. A table's
directory holds `manifest.json` plus one `part-%05d.mep` file per
partition; in-flight outputs use a `.tmp` suffix until every partition
has been processed, and the manifest is rewritten last, so a crash
leaves the previous table version intact.
"""

from __future__ import annotations

import os
import queue
import secrets
import threading
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .backend import (
    AddFamilyStats,
    FamilyParams,
    RevealStats,
    ViewKeySet,
    add_family,
    encrypt_partition,
    generate_view_keys,
    reveal_partition,
)
from .manifest import MANIFEST_NAME, FamilyRecord, ManifestError, TableManifest
from .mep import (
    csv_to_partition,
    parse_encrypted,
    parse_plain,
    partition_to_csv,
    serialize_encrypted,
)
from .model import Schema
from .planner import CanonicalFamily, plan_family, plan_view

PARTITION_NAME = "part-%05d.mep"
VIEW_PARTITION_NAME = "view-part-%05d.csv"
HTTP_TOKEN_ENV = "SEALVIEW_STORAGE_TOKEN"


class StorageError(Exception):
    pass


class OrchestratorError(Exception):
    pass


class Storage:
    """Whole-file get/put plus listing; puts are atomic per file."""

    def list_files(self) -> list[str]:
        raise NotImplementedError

    def get(self, name: str) -> bytes:
        raise NotImplementedError

    def put(self, name: str, data: bytes) -> None:
        raise NotImplementedError

    def exists(self, name: str) -> bool:
        return name in self.list_files()

    def rename(self, src: str, dst: str) -> None:
        self.put(dst, self.get(src))
        self.delete(src)

    def delete(self, name: str) -> None:  # best-effort cleanup
        pass


class LocalDirStorage(Storage):
    def __init__(self, root: str | Path):
        self.root = Path(root)

    def list_files(self) -> list[str]:
        if not self.root.is_dir():
            return []
        return sorted(p.name for p in self.root.iterdir() if p.is_file())

    def get(self, name: str) -> bytes:
        try:
            return (self.root / name).read_bytes()
        except FileNotFoundError as exc:
            raise StorageError(f"missing file {name!r} in {self.root}") from exc

    def put(self, name: str, data: bytes) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self.root / (name + ".inflight")
        tmp.write_bytes(data)
        os.replace(tmp, self.root / name)

    def exists(self, name: str) -> bool:
        return (self.root / name).is_file()

    def rename(self, src: str, dst: str) -> None:
        try:
            os.replace(self.root / src, self.root / dst)
        except FileNotFoundError as exc:
            raise StorageError(f"missing file {src!r} in {self.root}") from exc

    def delete(self, name: str) -> None:
        try:
            (self.root / name).unlink()
        except FileNotFoundError:
            pass


class MemoryStorage(Storage):
    """Dict-backed storage for tests and in-memory benchmark tables."""

    def __init__(self):
        self.files: dict[str, bytes] = {}

    def list_files(self) -> list[str]:
        return sorted(self.files)

    def get(self, name: str) -> bytes:
        try:
            return self.files[name]
        except KeyError as exc:
            raise StorageError(f"missing file {name!r}") from exc

    def put(self, name: str, data: bytes) -> None:
        self.files[name] = data

    def exists(self, name: str) -> bool:
        return name in self.files

    def rename(self, src: str, dst: str) -> None:
        self.files[dst] = self.files.pop(src)

    def delete(self, name: str) -> None:
        self.files.pop(name, None)


class HttpStorage(Storage):
    """Object-store endpoint speaking plain GET/PUT per file.

    Listing is a GET of the base URL returning a JSON array of names.
    A bearer token is read from the environment, never from arguments.
    """

    def __init__(self, base_url: str):
        import requests

        self._requests = requests
        self.base_url = base_url.rstrip("/")
        self._headers = {}
        token = os.environ.get(HTTP_TOKEN_ENV)
        if token:
            self._headers["Authorization"] = f"Bearer {token}"

    def list_files(self) -> list[str]:
        resp = self._requests.get(self.base_url + "/", headers=self._headers, timeout=60)
        if resp.status_code != 200:
            raise StorageError(f"list failed with status {resp.status_code}")
        return sorted(resp.json())

    def get(self, name: str) -> bytes:
        resp = self._requests.get(f"{self.base_url}/{name}", headers=self._headers, timeout=300)
        if resp.status_code != 200:
            raise StorageError(f"get {name!r} failed with status {resp.status_code}")
        return resp.content

    def put(self, name: str, data: bytes) -> None:
        resp = self._requests.put(
            f"{self.base_url}/{name}", data=data, headers=self._headers, timeout=300
        )
        if resp.status_code not in (200, 201, 204):
            raise StorageError(f"put {name!r} failed with status {resp.status_code}")

    def delete(self, name: str) -> None:
        self._requests.delete(f"{self.base_url}/{name}", headers=self._headers, timeout=60)


def open_storage(locator: str | Path) -> Storage:
    text = str(locator)
    if text.startswith(("http://", "https://")):
        return HttpStorage(text)
    return LocalDirStorage(text)


@dataclass
class OrchestratorConfig:
    workers: int = 0  # 0 means one per CPU
    batch_size: int = 0  # 0 means one batch per worker set
    pipelined: bool = True
    queue_depth: int = 2

    def __post_init__(self):
        if self.workers == 0:
            self.workers = os.cpu_count() or 1
        if self.batch_size == 0:
            self.batch_size = self.workers
        if self.workers < 1 or self.batch_size < 1 or self.queue_depth < 1:
            raise OrchestratorError("workers, batch size, and queue depth must be >= 1")


@dataclass
class RunReport:
    partitions: int = 0
    input_bytes: int = 0
    output_bytes: int = 0
    fetch_seconds: float = 0.0
    compute_seconds: float = 0.0
    store_seconds: float = 0.0
    wall_seconds: float = 0.0
    stats: list = field(default_factory=list)


_SENTINEL = object()


def _run_batches(items, fetch, compute_batch, store, config: OrchestratorConfig, report: RunReport):
    """fetch -> compute -> store over batches, optionally overlapped.

    The pipelined path runs fetch and store on their own threads with
    bounded hand-off queues; batch contents and outputs are identical to
    the sequential path.
    """
    batches = [
        items[i : i + config.batch_size] for i in range(0, len(items), config.batch_size)
    ]
    started = time.perf_counter()
    if not config.pipelined:
        for batch in batches:
            t0 = time.perf_counter()
            payloads = [fetch(item) for item in batch]
            t1 = time.perf_counter()
            results = compute_batch(list(zip(batch, payloads)))
            t2 = time.perf_counter()
            for result in results:
                store(result)
            t3 = time.perf_counter()
            report.fetch_seconds += t1 - t0
            report.compute_seconds += t2 - t1
            report.store_seconds += t3 - t2
        report.wall_seconds += time.perf_counter() - started
        return

    fetched: queue.Queue = queue.Queue(maxsize=config.queue_depth)
    computed: queue.Queue = queue.Queue(maxsize=config.queue_depth)
    failures: list[BaseException] = []

    def fetch_stage():
        try:
            for batch in batches:
                t0 = time.perf_counter()
                payloads = [fetch(item) for item in batch]
                report.fetch_seconds += time.perf_counter() - t0
                fetched.put(list(zip(batch, payloads)))
        except BaseException as exc:  # propagate to the driver
            failures.append(exc)
        finally:
            fetched.put(_SENTINEL)

    def store_stage():
        try:
            while True:
                results = computed.get()
                if results is _SENTINEL:
                    return
                t0 = time.perf_counter()
                for result in results:
                    store(result)
                report.store_seconds += time.perf_counter() - t0
        except BaseException as exc:
            failures.append(exc)
            while computed.get() is not _SENTINEL:
                pass

    fetcher = threading.Thread(target=fetch_stage, name="sealview-fetch")
    storer = threading.Thread(target=store_stage, name="sealview-store")
    fetcher.start()
    storer.start()
    fetch_done = False
    try:
        while True:
            batch = fetched.get()
            if batch is _SENTINEL:
                fetch_done = True
                break
            if failures:
                break
            t0 = time.perf_counter()
            results = compute_batch(batch)
            report.compute_seconds += time.perf_counter() - t0
            computed.put(results)
    finally:
        computed.put(_SENTINEL)
        if not fetch_done:  # unblock a fetcher waiting on a full queue
            while fetched.get() is not _SENTINEL:
                pass
        fetcher.join()
        storer.join()
    report.wall_seconds += time.perf_counter() - started
    if failures:
        raise failures[0]


class _ComputePool:
    """Inline execution for one worker, a process pool otherwise."""

    def __init__(self, workers: int):
        self.workers = workers
        self._pool = ProcessPoolExecutor(max_workers=workers) if workers > 1 else None

    def map(self, fn, args_list):
        if self._pool is None:
            return [fn(args) for args in args_list]
        return list(self._pool.map(fn, args_list))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()


def partition_name(pid: int) -> str:
    return PARTITION_NAME % pid


def _load_manifest(storage: Storage) -> TableManifest:
    if not storage.exists(MANIFEST_NAME):
        raise OrchestratorError("no manifest.json at the storage root")
    return TableManifest.from_json(storage.get(MANIFEST_NAME).decode("utf-8"))


def _apply_filter(manifest: TableManifest, fil: tuple[int, int] | None) -> list[int]:
    ids = [pid for pid, _ in manifest.partitions]
    if fil is None:
        return ids
    lo, hi = fil
    chosen = [pid for pid in ids if lo <= pid <= hi]
    if not chosen:
        raise OrchestratorError(f"partition filter {lo}:{hi} matches nothing")
    return chosen


# ------------------------------------------------------------ worker bodies


def _encrypt_worker(args) -> tuple[int, bytes, int, int]:
    pid, kind, payload, schema_json, table_key = args
    schema = Schema.from_json(schema_json)
    if kind == "csv":
        plain = csv_to_partition(payload.decode("utf-8"), schema, pid)
    else:
        _, plain = parse_plain(payload, schema)
        if plain.partition_id != pid:
            raise OrchestratorError(f"partition file {pid} carries id {plain.partition_id}")
    plain_bytes = plain.encoded_size(schema)
    enc_part = encrypt_partition(plain, schema, table_key)
    return pid, serialize_encrypted(enc_part, schema), len(plain.rows), plain_bytes


def _add_family_worker(args) -> tuple[int, bytes, tuple]:
    pid, payload, schema_json, table_key, family_blob, family_key, params_tuple = args
    schema = Schema.from_json(schema_json)
    family = CanonicalFamily.deserialize(family_blob)
    tag_length, cache_capacity, rng_seed = params_tuple
    enc_part = parse_encrypted(payload, schema)
    if enc_part.partition_id != pid:
        raise OrchestratorError(f"partition file {pid} carries id {enc_part.partition_id}")
    stats = AddFamilyStats()
    add_family(
        enc_part,
        schema,
        table_key,
        family,
        family_key,
        FamilyParams(tag_length=tag_length, cache_capacity=cache_capacity, rng_seed=rng_seed),
        stats=stats,
    )
    summary = (stats.rows, stats.cache_hits, stats.cache_misses, stats.crypto_seconds)
    return pid, serialize_encrypted(enc_part, schema), summary


def _reveal_worker(args) -> tuple[int, str, tuple]:
    pid, payload, schema_json, family_blob, view_blob, use_tags = args
    import io

    schema = Schema.from_json(schema_json)
    family = CanonicalFamily.deserialize(family_blob)
    view_keys = ViewKeySet.deserialize(view_blob)
    enc_part = parse_encrypted(payload, schema)
    stats = RevealStats()
    rows = reveal_partition(enc_part, schema, family, view_keys, use_tags=use_tags, stats=stats)
    out = io.StringIO()
    partition_to_csv(rows, out)
    summary = (stats.rows_scanned, stats.rows_emitted, stats.decrypt_attempts, stats.crypto_seconds)
    return pid, out.getvalue(), summary


# -------------------------------------------------------- table operations


def discover_plain_partitions(src: Path) -> list[tuple[int, str, Path]]:
    """Find part-*.csv / part-*.mep files; the number in the name is the id."""
    found = {}
    for path in sorted(Path(src).iterdir()):
        stem, suffix = path.stem, path.suffix.lower()
        if not stem.startswith("part-") or suffix not in (".csv", ".mep"):
            continue
        try:
            pid = int(stem.split("-", 1)[1])
        except ValueError:
            continue
        if pid in found:
            raise OrchestratorError(f"duplicate partition id {pid} in {src}")
        found[pid] = (pid, suffix[1:], path)
    if not found:
        raise OrchestratorError(f"no part-*.csv or part-*.mep files in {src}")
    return [found[pid] for pid in sorted(found)]


def load_schema_descriptor(src: Path) -> tuple[str, Schema]:
    import json

    desc_path = Path(src) / "schema.json"
    if not desc_path.is_file():
        raise OrchestratorError(f"missing schema.json in {src}")
    doc = json.loads(desc_path.read_text())
    return doc.get("table", Path(src).name), Schema.from_json(doc["columns"])


def run_encrypt_table(
    src: str | Path,
    dst: Storage,
    table_key: bytes | None = None,
    config: OrchestratorConfig | None = None,
    report: RunReport | None = None,
) -> tuple[TableManifest, bytes]:
    """Encrypt every partition under one fresh table key; write a manifest."""
    config = config or OrchestratorConfig()
    report = report if report is not None else RunReport()
    if dst.exists(MANIFEST_NAME):
        raise OrchestratorError("destination already holds a table; refusing to overwrite")
    table_name, schema = load_schema_descriptor(Path(src))
    sources = discover_plain_partitions(Path(src))
    if table_key is None:
        table_key = secrets.token_bytes(16)
    schema_json = schema.to_json()

    census: dict[int, int] = {}
    pool = _ComputePool(config.workers)
    try:

        def fetch(item):
            pid, kind, path = item
            data = path.read_bytes()
            report.input_bytes += len(data)
            return data

        def compute_batch(batch):
            args = [
                (item[0], item[1], payload, schema_json, table_key)
                for item, payload in batch
            ]
            return pool.map(_encrypt_worker, args)

        def store(result):
            pid, blob, n_rows, plain_bytes = result
            census[pid] = n_rows
            report.stats.append((pid, plain_bytes))
            report.output_bytes += len(blob)
            dst.put(partition_name(pid), blob)

        _run_batches(sources, fetch, compute_batch, store, config, report)
    finally:
        pool.close()
    report.partitions = len(sources)

    manifest = TableManifest(
        name=table_name,
        schema=schema,
        partitions=[(pid, census[pid]) for pid, _, _ in sources],
    )
    dst.put(MANIFEST_NAME, manifest.to_json().encode("utf-8"))
    return manifest, table_key


def run_add_family(
    storage: Storage,
    table_key: bytes,
    family_sql: str,
    family_key: bytes | None = None,
    tag_length: int = 4,
    branching_bits: int = 8,
    cache_capacity: int = 512,
    rng_seed: int | None = None,
    config: OrchestratorConfig | None = None,
    report: RunReport | None = None,
) -> tuple[str, bytes]:
    """Instantiate a family on every partition; commit, then register it.

    Outputs are staged under a .tmp suffix and renamed only after every
    partition processed; the manifest is rewritten last, so a failure at
    any point leaves the prior table version fully intact.
    """
    config = config or OrchestratorConfig()
    report = report if report is not None else RunReport()
    manifest = _load_manifest(storage)
    family = plan_family(family_sql, manifest.schema, branching_bits=branching_bits)
    family_id = family.family_id
    if any(rec.family_id == family_id for rec in manifest.families):
        raise OrchestratorError(f"family {family_id} is already instantiated")
    if family_key is None:
        family_key = secrets.token_bytes(16)
    schema_json = manifest.schema.to_json()
    family_blob = family.serialize()
    params_tuple = (tag_length, cache_capacity, rng_seed)
    ids = [pid for pid, _ in manifest.partitions]

    staged: list[int] = []
    pool = _ComputePool(config.workers)
    try:

        def fetch(pid):
            data = storage.get(partition_name(pid))
            report.input_bytes += len(data)
            return data

        def compute_batch(batch):
            args = [
                (pid, payload, schema_json, table_key, family_blob, family_key, params_tuple)
                for pid, payload in batch
            ]
            return pool.map(_add_family_worker, args)

        def store(result):
            pid, blob, summary = result
            report.output_bytes += len(blob)
            report.stats.append((pid,) + summary)
            storage.put(partition_name(pid) + ".tmp", blob)
            staged.append(pid)

        _run_batches(ids, fetch, compute_batch, store, config, report)
    finally:
        pool.close()
    report.partitions = len(ids)

    for pid in staged:
        storage.rename(partition_name(pid) + ".tmp", partition_name(pid))
    manifest.families.append(FamilyRecord(family_id, family, tag_length, branching_bits))
    storage.put(MANIFEST_NAME, manifest.to_json().encode("utf-8"))
    return family_id, family_key


def run_view_gen(
    storage: Storage, family_id: str, family_key: bytes, view_sql: str
) -> ViewKeySet:
    """Mint view keys for a view belonging to a stored family."""
    manifest = _load_manifest(storage)
    record = manifest.family(family_id)
    view = plan_view(view_sql, record.family, manifest.schema)
    return generate_view_keys(view, family_key, tag_length=record.tag_length)


def run_reveal_view(
    storage: Storage,
    view_keys: ViewKeySet,
    out_dir: str | Path,
    fil: tuple[int, int] | None = None,
    use_tags: bool = True,
    config: OrchestratorConfig | None = None,
    report: RunReport | None = None,
) -> list[Path]:
    """Decrypt the view into local CSV partitions (never uploaded)."""
    config = config or OrchestratorConfig()
    report = report if report is not None else RunReport()
    manifest = _load_manifest(storage)
    try:
        record = manifest.family(view_keys.family_id)
    except ManifestError as exc:
        raise OrchestratorError(str(exc)) from exc
    if record.tag_length != view_keys.tag_length:
        raise OrchestratorError(
            f"view keys were minted for {view_keys.tag_length}-byte tags; "
            f"the family uses {record.tag_length}-byte tags"
        )
    ids = _apply_filter(manifest, fil)
    schema_json = manifest.schema.to_json()
    family_blob = record.family.serialize()
    view_blob = view_keys.serialize()
    out_root = Path(out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    pool = _ComputePool(config.workers)
    try:

        def fetch(pid):
            data = storage.get(partition_name(pid))
            report.input_bytes += len(data)
            return data

        def compute_batch(batch):
            args = [
                (pid, payload, schema_json, family_blob, view_blob, use_tags)
                for pid, payload in batch
            ]
            return pool.map(_reveal_worker, args)

        def store(result):
            pid, text, summary = result
            report.stats.append((pid,) + summary)
            path = out_root / (VIEW_PARTITION_NAME % pid)
            path.write_text(text)
            report.output_bytes += len(text)
            written.append(path)

        _run_batches(ids, fetch, compute_batch, store, config, report)
    finally:
        pool.close()
    report.partitions = len(ids)
    return sorted(written)
