"""Command-line bench harness.

    buffetfs-bench populate --config bench.cfg [--manifest files.txt]
    buffetfs-bench run --config bench.cfg [--out report.json] [--format text]
    buffetfs-bench compare --a report1.json --b report2.json
    buffetfs-bench serve --config bench.cfg

Config files are flat `key = value` text; keys mirror BenchConfig fields
(scenario, client_kind, file_count, file_size_bytes, files_per_worker,
workers, dir_fanout, rtt_us, per_byte_us, service_us, seed, transport,
dom_threshold, agent_per_worker, server_address).

CSV reports use the columns listed in BenchReport.CSV_COLUMNS, in order.
Exit status: 0 on success, 2 on read-verification failure.
"""

import argparse
import sys

from .baseline import BaselineClient, BaselineMode
from .bench import (
    BenchConfig,
    BenchReport,
    SimWorld,
    VerificationError,
    populate,
    render_report,
    run,
    run_concurrent,
    run_single_file,
)
from .client import BuffetClient
from .server import BServer
from .socket_transport import SocketServerHost, SocketTransport
from .types import ClusterConfig


class SocketWorld:
    """Remote-server counterpart of SimWorld."""

    def __init__(self, config: BenchConfig):
        if not config.server_address:
            raise SystemExit("socket transport requires server_address in the config")
        self.config = config
        self.net = SocketTransport()
        self.server = None
        self.address = config.server_address
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


def _world(config: BenchConfig):
    if config.transport == "socket":
        return SocketWorld(config)
    return SimWorld(config)


def cmd_populate(args) -> int:
    config = BenchConfig.from_file(args.config)
    world = _world(config)
    paths = populate(world, config)
    if args.manifest:
        with open(args.manifest, "w") as fh:
            fh.write("\n".join(paths) + "\n")
    print(f"populated {len(paths)} files of {config.file_size_bytes} bytes (seed {config.seed})")
    return 0


def cmd_run(args) -> int:
    config = BenchConfig.from_file(args.config)
    try:
        if config.transport == "socket":
            world = SocketWorld(config)
            paths = populate(world, config)
            if config.scenario == "single_file":
                report = run_single_file(config, world=world, paths=paths)
            else:
                report = run_concurrent(config, world=world, paths=paths)
        else:
            report = run(config)
    except VerificationError as exc:
        print(f"verification failure: {exc}", file=sys.stderr)
        return 2
    rendered = render_report(report, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report.to_json())
        print(f"wrote {args.out}")
    print(rendered, end="")
    return 0


def cmd_compare(args) -> int:
    with open(args.a) as fh:
        a = BenchReport.from_json(fh.read())
    with open(args.b) as fh:
        b = BenchReport.from_json(fh.read())
    rows = [
        ("client_kind", a.client_kind, b.client_kind, ""),
        ("sync_rpcs", a.sync_rpcs, b.sync_rpcs, _ratio(a.sync_rpcs, b.sync_rpcs)),
        ("async_msgs", a.async_msgs, b.async_msgs, _ratio(a.async_msgs, b.async_msgs)),
        ("elapsed_us", f"{a.elapsed_us:.2f}", f"{b.elapsed_us:.2f}", _ratio(a.elapsed_us, b.elapsed_us)),
        ("bytes_read", a.bytes_read, b.bytes_read, _ratio(a.bytes_read, b.bytes_read)),
        ("content_hash", a.content_hash[:16], b.content_hash[:16],
         "match" if a.content_hash == b.content_hash else "DIFFER"),
    ]
    width = max(len(r[0]) for r in rows)
    for name, va, vb, extra in rows:
        print(f"{name:<{width}}  a={va}  b={vb}  {extra}")
    return 0


def _ratio(a, b) -> str:
    if not b:
        return ""
    return f"a/b={a / b:.3f}"


def cmd_serve(args) -> int:
    config = BenchConfig.from_file(args.config)
    host, _, port = config.server_address.partition(":")
    server = BServer(host_id=1, version=1)
    listener = SocketServerHost(server, host=host or "127.0.0.1", port=int(port or 0))
    print(f"serving on {listener.address}; Ctrl-C to stop")
    try:
        import time

        while True:
            time.sleep(1)
    except KeyboardInterrupt:
        listener.close()
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="buffetfs-bench", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("populate", help="create the benchmark namespace")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", help="write the file-path manifest here")
    p.set_defaults(fn=cmd_populate)

    p = sub.add_parser("run", help="run the configured scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--format", choices=["text", "csv", "json"], default="text")
    p.set_defaults(fn=cmd_run)

    p = sub.add_parser("compare", help="compare two JSON reports")
    p.add_argument("--a", required=True)
    p.add_argument("--b", required=True)
    p.set_defaults(fn=cmd_compare)

    p = sub.add_parser("serve", help="run a storage server for socket-transport runs")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=cmd_serve)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
