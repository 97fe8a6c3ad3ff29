"""Benchmark harness: namespace population, the single-file and concurrent
workloads, and machine-readable reports.

Content is generated from the seed (xorshift-filled blocks), so read
verification needs no stored corpus: any worker can recompute the exact
bytes a file must contain.
"""

import hashlib
import json
import math
import threading
from dataclasses import dataclass, field, asdict

from .baseline import BaselineClient, BaselineMode
from .client import BuffetClient
from .errors import BuffetError, ErrorCode
from .server import BServer, LogicalClock
from .transport import LatencyModel, SimNetwork
from .types import AccessKind, ClusterConfig, Credentials, OpenFlags

BENCH_UID = 500
BENCH_GID = 500
_M64 = (1 << 64) - 1


class VerificationError(Exception):
    """A read returned bytes that do not match the generator."""


@dataclass
class BenchConfig:
    scenario: str = "single_file"  # single_file | concurrent
    client_kind: str = "buffetfs"  # buffetfs | baseline-normal | baseline-dom
    file_count: int = 10000
    file_size_bytes: int = 4096
    files_per_worker: int = 100
    workers: int = 8
    dir_fanout: int = 100
    rtt_us: float = 200.0
    per_byte_us: float = 0.01
    service_us: float = 50.0
    seed: int = 1
    transport: str = "sim"  # sim | socket
    dom_threshold: int = 64 * 1024
    agent_per_worker: bool = True
    server_address: str = ""  # socket transport only

    def __post_init__(self):
        if self.files_per_worker > self.file_count:
            raise ValueError("files_per_worker must not exceed file_count")

    @classmethod
    def from_file(cls, path: str) -> "BenchConfig":
        values = {}
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, _, raw = line.partition("=")
                values[key.strip()] = raw.strip()
        kwargs = {}
        for f in cls.__dataclass_fields__.values():
            if f.name not in values:
                continue
            raw = values[f.name]
            if f.type in (bool, "bool"):
                kwargs[f.name] = raw.lower() in ("1", "true", "yes")
            elif f.type in (int, "int"):
                kwargs[f.name] = int(raw)
            elif f.type in (float, "float"):
                kwargs[f.name] = float(raw)
            else:
                kwargs[f.name] = raw
        return cls(**kwargs)


def file_content(seed: int, index: int, size: int) -> bytes:
    """Deterministic pseudo-random bytes for file number `index`."""
    x = (seed * 0x9E3779B97F4A7C15 + (index + 1) * 0xBF58476D1CE4E5B9) & _M64
    x |= 1
    out = bytearray()
    while len(out) < size:
        x ^= (x << 13) & _M64
        x ^= x >> 7
        x ^= (x << 17) & _M64
        out += x.to_bytes(8, "little")
    return bytes(out[:size])


def layout(config: BenchConfig):
    """(dir paths, file paths) for the configured namespace."""
    n_dirs = max(1, math.ceil(config.file_count / config.dir_fanout))
    dirs = [f"/d{di:04d}" for di in range(n_dirs)]
    files = [
        f"{dirs[i // config.dir_fanout]}/f{i:06d}" for i in range(config.file_count)
    ]
    return dirs, files


class SimWorld:
    """A server plus network, in one process."""

    def __init__(self, config: BenchConfig):
        self.config = config
        self.net = SimNetwork(
            latency=LatencyModel(
                rtt_us=config.rtt_us,
                per_byte_us=config.per_byte_us,
                service_us=config.service_us,
            )
        )
        self.server = BServer(host_id=1, version=1, clock_ns=LogicalClock())
        self.address = "sim://bench"
        self.net.add_server(self.address, self.server)
        self.cluster = ClusterConfig()
        self.cluster.add(1, 1, self.address)
        self._next_client_id = 1

    def new_client_id(self) -> int:
        cid = self._next_client_id
        self._next_client_id += 1
        return cid

    def make_client(self, kind: str, flow=None):
        cid = self.new_client_id()
        if kind == "buffetfs":
            return BuffetClient(
                client_id=cid, cluster=self.cluster, home=(1, 1), transport=self.net, flow=flow
            )
        mode = BaselineMode.DOM if kind == "baseline-dom" else BaselineMode.NORMAL
        return BaselineClient(
            client_id=cid,
            cluster=self.cluster,
            home=(1, 1),
            transport=self.net,
            mode=mode,
            dom_threshold=self.config.dom_threshold,
            flow=flow,
        )


def populate(world, config: BenchConfig):
    """Create the namespace through the wire protocol; returns file paths."""
    if world.server is not None and world.server.next_file_id != 1:
        raise BuffetError(ErrorCode.EXISTS, "server namespace is not empty")
    dirs, files = layout(config)
    cred = Credentials(uid=BENCH_UID, gid=BENCH_GID)
    client = world.make_client("buffetfs")
    for d in dirs:
        client.mkdir(d, 0o755, cred)
    wflags = OpenFlags(access=AccessKind.WRONLY, create=True)
    for i, path in enumerate(files):
        fd = client.open(path, wflags, cred)
        client.write(fd, file_content(config.seed, i, config.file_size_bytes))
        client.close(fd)
    world.net.drain()
    world.net.reset_counters()
    return files


@dataclass
class BenchReport:
    scenario: str
    client_kind: str
    seed: int
    workers: int = 1
    files_accessed: int = 0
    bytes_read: int = 0
    sync_rpcs: int = 0
    async_msgs: int = 0
    elapsed_us: float = 0.0  # max over worker flows (concurrent wall analog)
    aggregate_elapsed_us: float = 0.0  # sum over all calls
    per_type: dict = field(default_factory=dict)
    per_op_us: dict = field(default_factory=dict)  # single-file: open/read/close
    content_hash: str = ""
    notes: str = "file choice is uniform with repetition"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2) + "\n"

    def to_text(self) -> str:
        lines = [
            f"scenario:          {self.scenario}",
            f"client_kind:       {self.client_kind}",
            f"seed:              {self.seed}",
            f"workers:           {self.workers}",
            f"files_accessed:    {self.files_accessed}",
            f"bytes_read:        {self.bytes_read}",
            f"sync_rpcs:         {self.sync_rpcs}",
            f"async_msgs:        {self.async_msgs}",
            f"elapsed_us:        {self.elapsed_us:.2f}",
            f"aggregate_elapsed_us: {self.aggregate_elapsed_us:.2f}",
        ]
        for name, count in sorted(self.per_type.items()):
            lines.append(f"  rpc[{name}]: {count}")
        for name, us in sorted(self.per_op_us.items()):
            lines.append(f"  lat[{name}]: {us:.2f}us")
        if self.content_hash:
            lines.append(f"content_hash:      {self.content_hash}")
        lines.append(f"notes:             {self.notes}")
        return "\n".join(lines) + "\n"

    CSV_COLUMNS = [
        "scenario",
        "client_kind",
        "seed",
        "workers",
        "files_accessed",
        "bytes_read",
        "sync_rpcs",
        "async_msgs",
        "elapsed_us",
        "aggregate_elapsed_us",
        "per_type",
        "per_op_us",
        "content_hash",
        "notes",
    ]

    def to_csv(self) -> str:
        import csv
        import io

        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=self.CSV_COLUMNS)
        writer.writeheader()
        row = asdict(self)
        row["per_type"] = json.dumps(row["per_type"], sort_keys=True)
        row["per_op_us"] = json.dumps(row["per_op_us"], sort_keys=True)
        writer.writerow(row)
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "BenchReport":
        import csv
        import io

        row = next(csv.DictReader(io.StringIO(text)))
        return cls(
            scenario=row["scenario"],
            client_kind=row["client_kind"],
            seed=int(row["seed"]),
            workers=int(row["workers"]),
            files_accessed=int(row["files_accessed"]),
            bytes_read=int(row["bytes_read"]),
            sync_rpcs=int(row["sync_rpcs"]),
            async_msgs=int(row["async_msgs"]),
            elapsed_us=float(row["elapsed_us"]),
            aggregate_elapsed_us=float(row["aggregate_elapsed_us"]),
            per_type=json.loads(row["per_type"]),
            per_op_us=json.loads(row["per_op_us"]),
            content_hash=row["content_hash"],
            notes=row["notes"],
        )

    @classmethod
    def from_json(cls, text: str) -> "BenchReport":
        return cls(**json.loads(text))


def render_report(report: BenchReport, fmt: str) -> str:
    if fmt == "json":
        return report.to_json()
    if fmt == "csv":
        return report.to_csv()
    if fmt == "text":
        return report.to_text()
    raise ValueError(f"unknown report format {fmt!r}")


def _warm_buffetfs(client, dirs, cred) -> None:
    for d in dirs:
        client.readdir(d, cred)


def run_single_file(config: BenchConfig, world=None, paths=None) -> BenchReport:
    world = world or SimWorld(config)
    if paths is None:
        paths = populate(world, config)
    cred = Credentials(uid=BENCH_UID, gid=BENCH_GID)
    path = paths[0]
    dirs, _ = layout(config)
    flow = world.net.flow()
    client = world.make_client(config.client_kind, flow=flow)
    per_op = {}

    def timed(label, fn):
        before = flow.elapsed_us
        result = fn()
        per_op[label] = flow.elapsed_us - before
        return result

    flags = OpenFlags(access=AccessKind.RDONLY)
    # cold pass: nothing cached yet
    fd = timed("cold_open", lambda: client.open(path, flags, cred))
    data = timed("cold_read", lambda: client.read(fd, config.file_size_bytes))
    timed("cold_close", lambda: client.close(fd))
    if data != file_content(config.seed, 0, config.file_size_bytes):
        raise VerificationError(path)
    world.net.drain()
    world.net.reset_counters()
    warm_start = flow.elapsed_us
    fd = timed("open", lambda: client.open(path, flags, cred))
    data = timed("read", lambda: client.read(fd, config.file_size_bytes))
    timed("close", lambda: client.close(fd))
    if data != file_content(config.seed, 0, config.file_size_bytes):
        raise VerificationError(path)
    world.net.drain()
    counters = world.net.snapshot_counters()
    digest = hashlib.sha256(path.encode() + data).hexdigest()
    return BenchReport(
        scenario="single_file",
        client_kind=config.client_kind,
        seed=config.seed,
        workers=1,
        files_accessed=1,
        bytes_read=len(data),
        sync_rpcs=counters.sync_rpcs,
        async_msgs=counters.async_msgs,
        elapsed_us=flow.elapsed_us - warm_start,
        aggregate_elapsed_us=counters.simulated_elapsed_us,
        per_type=dict(counters.per_type),
        per_op_us=per_op,
        content_hash=digest,
    )


def run_concurrent(config: BenchConfig, world=None, paths=None) -> BenchReport:
    world = world or SimWorld(config)
    if paths is None:
        paths = populate(world, config)
    cred = Credentials(uid=BENCH_UID, gid=BENCH_GID)
    dirs, _ = layout(config)
    flows = [world.net.flow() for _ in range(config.workers)]
    if config.agent_per_worker:
        clients = [world.make_client(config.client_kind, flow=flows[w]) for w in range(config.workers)]
    else:
        shared = world.make_client(config.client_kind, flow=flows[0])
        flows = [flows[0]] * config.workers
        clients = [shared] * config.workers
    # warm the directory caches outside the measurement window
    if config.client_kind == "buffetfs":
        warmed = set()
        for client in clients:
            if id(client) not in warmed:
                _warm_buffetfs(client, dirs, cred)
                warmed.add(id(client))
    world.net.drain()
    world.net.reset_counters()
    for flow in flows:
        flow.elapsed_us = 0.0

    flags = OpenFlags(access=AccessKind.RDONLY)
    digests = [None] * config.workers
    bytes_read = [0] * config.workers
    errors = []

    def worker(w: int) -> None:
        import random as _random

        rng = _random.Random(config.seed * 7919 + w)
        client = clients[w]
        sha = hashlib.sha256()
        try:
            for _ in range(config.files_per_worker):
                idx = rng.randrange(config.file_count)
                path = paths[idx]
                fd = client.open(path, flags, cred)
                data = client.read(fd, config.file_size_bytes)
                client.close(fd)
                if data != file_content(config.seed, idx, config.file_size_bytes):
                    raise VerificationError(path)
                sha.update(path.encode())
                sha.update(data)
                bytes_read[w] += len(data)
            digests[w] = sha.hexdigest()
        except Exception as exc:  # surfaced after join
            errors.append((w, exc))

    threads = [threading.Thread(target=worker, args=(w,)) for w in range(config.workers)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    if errors:
        raise errors[0][1]
    world.net.drain()
    counters = world.net.snapshot_counters()
    combined = hashlib.sha256("".join(digests).encode()).hexdigest()
    return BenchReport(
        scenario="concurrent",
        client_kind=config.client_kind,
        seed=config.seed,
        workers=config.workers,
        files_accessed=config.workers * config.files_per_worker,
        bytes_read=sum(bytes_read),
        sync_rpcs=counters.sync_rpcs,
        async_msgs=counters.async_msgs,
        elapsed_us=max(f.elapsed_us for f in set(flows)),
        aggregate_elapsed_us=counters.simulated_elapsed_us,
        per_type=dict(counters.per_type),
        content_hash=combined,
    )


def run(config: BenchConfig) -> BenchReport:
    if config.scenario == "single_file":
        return run_single_file(config)
    if config.scenario == "concurrent":
        return run_concurrent(config)
    raise ValueError(f"unknown scenario {config.scenario!r}")
