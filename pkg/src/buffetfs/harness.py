"""Scripted-interleaving driver for the invalidation protocol.

Runs clients against a simulated network with automatic delivery turned
off, so a script controls exactly when invalidations, acks, and async
closes land.  Operations that can block behind an invalidation round
(open, chmod) run on worker threads; the driver steps forward once the
operation has either finished or parked inside the transport.

The consistency claim is checked as linearizability of open-admission
decisions against permission-change completion: there must exist a total
order of {chmod, open} consistent with real time in which every admission
decision matches the permission state at that point.
"""

import random
import threading
from dataclasses import dataclass, field
from typing import Optional

from .client import BuffetClient
from .errors import BuffetError, ErrorCode
from .server import BServer, LogicalClock
from .transport import LatencyModel, SimNetwork
from .types import (
    AccessKind,
    ClusterConfig,
    Credentials,
    OpenFlags,
    PermissionRecord,
    S_IFREG,
    access_mask_for,
    check_permission,
)


@dataclass
class Step:
    actor: str  # "c<N>" or "net"
    action: str
    args: tuple = ()


@dataclass
class OpRecord:
    op_id: int
    kind: str  # "open" | "chmod"
    client: int
    path: str
    cred: Credentials
    want: object = None  # Access mask for opens
    new_mode: int = 0  # for chmods
    start: int = 0
    end: int = 0
    outcome: str = ""  # "admit" | "deny" | "error:<code>" | "pending"


@dataclass
class Trace:
    ops: list = field(default_factory=list)
    results: list = field(default_factory=list)  # (step index, repr of result)


@dataclass
class Verdict:
    ok: bool
    witness: Optional[list] = None
    reason: str = ""


def load_script(text: str):
    """One step per line: `<actor> <action> [args...]`; '#' starts a comment."""
    steps = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        actor, action, *args = line.split()
        steps.append(Step(actor=actor, action=action, args=tuple(args)))
    return steps


_ACCESS_BY_NAME = {"r": AccessKind.RDONLY, "w": AccessKind.WRONLY, "rw": AccessKind.RDWR}


class ConsistencyHarness:
    """A tiny world: one server, a few clients, a flat /d directory."""

    def __init__(self, n_clients: int = 2, n_files: int = 3, dir_mode_bits: int = 0o777):
        self.net = SimNetwork(latency=LatencyModel(rtt_us=100.0), auto_deliver=False)
        self.server = BServer(host_id=1, version=1, clock_ns=LogicalClock())
        self.net.add_server("sim://s1", self.server)
        cluster = ClusterConfig()
        cluster.add(1, 1, "sim://s1")
        self.server.seed_entry("/d", dir_mode_bits, is_dir=True, uid=0, gid=0)
        self.files = {}
        self.owners = {}
        for i in range(n_files):
            path = f"/d/f{i}"
            uid = 100 + (i % 2)
            self.server.seed_entry(path, 0o644, data=b"x" * 64, uid=uid, gid=10)
            self.files[path] = 0o644
            self.owners[path] = (uid, 10)
        self.clients = {}
        self.creds = {}
        for c in range(n_clients):
            cred = Credentials(uid=100 + (c % 2), gid=10)
            self.clients[c] = BuffetClient(
                client_id=c + 1, cluster=cluster, home=(1, 1), transport=self.net
            )
            self.creds[c] = cred
        self._tick_lock = threading.Lock()
        self._ticks = 0
        self._op_ids = 0
        self._threads = []
        self._open_fds = {c: [] for c in self.clients}
        self.trace = Trace()

    def _tick(self) -> int:
        with self._tick_lock:
            self._ticks += 1
            return self._ticks

    def _new_op(self, **kw) -> OpRecord:
        with self._tick_lock:
            self._op_ids += 1
            op_id = self._op_ids
        rec = OpRecord(op_id=op_id, **kw)
        self.trace.ops.append(rec)
        return rec

    # -- op runners ----------------------------------------------------------

    def _spawn(self, fn) -> threading.Thread:
        def runner():
            fn()
            with self.net.cond:
                self.net.cond.notify_all()

        t = threading.Thread(target=runner, daemon=True)
        t.start()
        self._threads.append(t)
        self._wait_settled(t)
        return t

    def _wait_settled(self, thread: threading.Thread, timeout: float = 10.0) -> None:
        """Block until the op thread finished or parked inside the transport.

        A thread only counts as parked while the reply it waits for has not
        been produced; once the reply fires, the thread is about to resume
        and may issue further RPCs, so we keep waiting.
        """
        import time

        def parked() -> bool:
            pending = self.net.blocked.get(thread.ident)
            return pending is not None and not pending.done

        deadline = time.monotonic() + timeout
        with self.net.cond:
            while thread.is_alive() and not parked():
                if time.monotonic() > deadline:
                    raise RuntimeError("op thread neither finished nor blocked")
                self.net.cond.wait(0.05)

    def _settle_all(self) -> None:
        for t in list(self._threads):
            if t.is_alive():
                self._wait_settled(t)

    def _do_open(self, client: int, path: str, access: AccessKind) -> None:
        cred = self.creds[client]
        flags = OpenFlags(access=access)
        rec = self._new_op(
            kind="open", client=client, path=path, cred=cred, want=access_mask_for(flags)
        )

        def run():
            rec.start = self._tick()
            try:
                fd = self.clients[client].open(path, flags, cred)
                self._open_fds[client].append(fd)
                rec.outcome = "admit"
            except BuffetError as exc:
                rec.outcome = "deny" if exc.code == ErrorCode.ACCESS_DENIED else f"error:{exc.code.name}"
            rec.end = self._tick()

        self._spawn(run)

    def _do_chmod(self, client: int, path: str, mode_bits: int) -> None:
        cred = self.creds[client]
        rec = self._new_op(kind="chmod", client=client, path=path, cred=cred, new_mode=mode_bits)

        def run():
            rec.start = self._tick()
            try:
                self.clients[client].chmod(path, mode_bits, cred)
                rec.outcome = "admit"
            except BuffetError as exc:
                rec.outcome = f"error:{exc.code.name}"
            rec.end = self._tick()

        self._spawn(run)

    # -- step execution ------------------------------------------------------

    def run_step(self, index: int, step: Step) -> None:
        if step.actor == "net":
            if step.action == "deliver_push" and self.net.pending_pushes:
                self.net.deliver_push(int(step.args[0]) if step.args else 0)
            elif step.action == "deliver_ack" and self.net.pending_acks:
                self.net.deliver_ack(int(step.args[0]) if step.args else 0)
            elif step.action == "deliver_notify" and self.net.pending_notifies:
                self.net.deliver_notify(int(step.args[0]) if step.args else 0)
            elif step.action == "drain":
                self.net.drain()
            self._settle_all()
            return
        client = int(step.actor[1:])
        if step.action == "open":
            path, access = step.args[0], _ACCESS_BY_NAME[step.args[1]]
            self._do_open(client, path, access)
        elif step.action == "chmod":
            self._do_chmod(client, step.args[0], int(step.args[1], 8))
        elif step.action == "read":
            fds = self._open_fds[client]
            if fds:
                try:
                    data = self.clients[client].read(fds[-1], int(step.args[0]) if step.args else 16)
                    self.trace.results.append((index, f"read:{len(data)}"))
                except BuffetError as exc:
                    self.trace.results.append((index, f"read-error:{exc.code.name}"))
        elif step.action == "close":
            fds = self._open_fds[client]
            if fds:
                fd = fds.pop()
                try:
                    self.clients[client].close(fd)
                    self.trace.results.append((index, "closed"))
                except BuffetError as exc:
                    self.trace.results.append((index, f"close-error:{exc.code.name}"))
        else:
            raise ValueError(f"unknown script action {step.action!r}")

    def execute(self, steps) -> Trace:
        for i, step in enumerate(steps):
            self.run_step(i, step)
        return self.trace

    def finish(self, max_rounds: int = 10000) -> Trace:
        """Deliver everything still queued and join all op threads."""
        for _ in range(max_rounds):
            self._settle_all()
            if self.net.pending_pushes:
                self.net.deliver_push()
            elif self.net.pending_acks:
                self.net.deliver_ack()
            elif self.net.pending_notifies:
                self.net.deliver_notify()
            elif any(t.is_alive() for t in self._threads):
                # every live thread is parked yet nothing is deliverable:
                # the protocol lost an ack, which would be a server bug
                raise RuntimeError("op thread stuck after full delivery")
            else:
                return self.trace
        raise RuntimeError("delivery did not quiesce")


def check_linearizable(trace: Trace, initial_modes: dict, owners: dict) -> Verdict:
    """Search for a real-time-consistent sequential order explaining every
    open-admission decision; returns a witness order or a counterexample."""
    ops = [
        op
        for op in trace.ops
        if op.kind == "chmod" and op.outcome == "admit"
        or op.kind == "open" and op.outcome in ("admit", "deny")
    ]

    def decides(op: OpRecord, modes) -> bool:
        uid, gid = owners[op.path]
        perm = PermissionRecord(uid=uid, gid=gid, mode=S_IFREG | modes[op.path])
        granted = check_permission(perm, op.cred, op.want)
        return granted == (op.outcome == "admit")

    n = len(ops)
    seen_failures = set()

    def search(remaining, modes, order):
        if not remaining:
            return order
        state_key = (remaining, tuple(sorted(modes.items())))
        if state_key in seen_failures:
            return None
        rem_ops = [ops[i] for i in remaining]
        min_end = min(op.end for op in rem_ops)
        for i in remaining:
            op = ops[i]
            if op.start > min_end:
                continue  # some other remaining op strictly precedes this one
            if op.kind == "open" and not decides(op, modes):
                continue
            new_modes = modes
            if op.kind == "chmod":
                new_modes = dict(modes)
                new_modes[op.path] = op.new_mode
            result = search(remaining - {i}, new_modes, order + [op.op_id])
            if result is not None:
                return result
        seen_failures.add(state_key)
        return None

    witness = search(frozenset(range(n)), dict(initial_modes), [])
    if witness is not None:
        return Verdict(ok=True, witness=witness)
    return Verdict(
        ok=False,
        reason="no sequential order consistent with real time explains the admissions",
    )


def random_script(seed: int, n_steps: int = 20, n_clients: int = 2, files=None):
    """Seeded adversarial script over opens, chmods, and delivery points."""
    rng = random.Random(seed)
    files = list(files or ["/d/f0", "/d/f1", "/d/f2"])
    steps = []
    mode_choices = [0o600, 0o640, 0o644, 0o000, 0o444, 0o666]
    for _ in range(n_steps):
        roll = rng.random()
        client = rng.randrange(n_clients)
        if roll < 0.35:
            steps.append(Step(f"c{client}", "open", (rng.choice(files), rng.choice(["r", "r", "rw"]))))
        elif roll < 0.45:
            steps.append(Step(f"c{client}", "read", ()))
        elif roll < 0.55:
            steps.append(Step(f"c{client}", "close", ()))
        elif roll < 0.75:
            path = rng.choice(files)
            steps.append(Step(f"c{client}", "chmod", (path, oct(rng.choice(mode_choices))[2:])))
        elif roll < 0.85:
            steps.append(Step("net", "deliver_push", ()))
        elif roll < 0.95:
            steps.append(Step("net", "deliver_ack", ()))
        else:
            steps.append(Step("net", "deliver_notify", ()))
    return steps


def run_random_check(seed: int, n_steps: int = 20, n_clients: int = 2) -> Verdict:
    harness = ConsistencyHarness(n_clients=n_clients)
    # chmods must come from the owner or they are flat denials; keep both kinds
    steps = random_script(seed, n_steps=n_steps, n_clients=n_clients, files=list(harness.files))
    harness.execute(steps)
    harness.finish()
    return check_linearizable(harness.trace, harness.files, harness.owners)
