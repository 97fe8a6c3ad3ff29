"""In-process simulated network with RPC accounting and a latency model.

Every exchange round-trips through the wire codec so byte counts are the
real encoded sizes.  Synchronous calls advance the calling flow's simulated
clock; one-way notifications and server pushes are counted but cost the
caller nothing (they are off the latency critical path).

With auto_deliver=True (the default) server->client pushes and their acks
are delivered inline, so calls always complete synchronously.  The
consistency harness sets auto_deliver=False and drives push/ack/notify
delivery step by step; a call whose reply depends on a withheld ack then
blocks its thread until the harness releases it.
"""

import logging
import threading
from collections import deque
from dataclasses import dataclass, field

from .errors import TransportError
from .wire import REPLY_TYPE, TAG_OF, decode_message, encode_message

log = logging.getLogger(__name__)


@dataclass
class LatencyModel:
    rtt_us: float = 200.0
    per_byte_us: float = 0.0
    service_us: float = 0.0

    def cost(self, request_bytes: int, reply_bytes: int) -> float:
        return self.rtt_us + self.per_byte_us * (request_bytes + reply_bytes) + self.service_us


@dataclass
class RpcCounters:
    sync_rpcs: int = 0
    async_msgs: int = 0
    bytes_sent: int = 0
    bytes_received: int = 0
    simulated_elapsed_us: float = 0.0
    per_type: dict = field(default_factory=dict)

    def copy(self) -> "RpcCounters":
        return RpcCounters(
            sync_rpcs=self.sync_rpcs,
            async_msgs=self.async_msgs,
            bytes_sent=self.bytes_sent,
            bytes_received=self.bytes_received,
            simulated_elapsed_us=self.simulated_elapsed_us,
            per_type=dict(self.per_type),
        )


class Flow:
    """One logical client flow; accumulates its own simulated latency."""

    def __init__(self):
        self.elapsed_us = 0.0


class _Pending:
    """Reply slot a server handler fills, possibly after the dispatch returns."""

    def __init__(self):
        self.event = threading.Event()
        self.msg = None

    @property
    def done(self):
        return self.event.is_set()

    def set(self, msg):
        self.msg = msg
        self.event.set()


class ServerCtx:
    """Handler-side view of the transport: reply once, push to clients."""

    def __init__(self, net, pending):
        self._net = net
        self._pending = pending

    def reply(self, msg) -> None:
        if self._pending is not None:
            self._pending.set(msg)

    def push(self, server, client_id, msg) -> None:
        self._net.push(server, client_id, msg)


@dataclass
class _PushRecord:
    server: object
    client_id: int
    msg: object


class SimNetwork:
    def __init__(self, latency: LatencyModel = None, auto_deliver: bool = True):
        self.latency = latency or LatencyModel()
        self.auto_deliver = auto_deliver
        self.servers = {}
        self.client_handlers = {}
        self.counters = RpcCounters()
        self.default_flow = Flow()
        self.pending_notifies = deque()  # (addr, msg)
        self.pending_pushes = deque()  # _PushRecord
        self.pending_acks = deque()  # (server, ack)
        self._lock = threading.RLock()
        self.cond = threading.Condition()
        self.blocked = {}  # thread ident -> _Pending it is parked on

    def add_server(self, addr: str, server) -> None:
        self.servers[addr] = server

    def register_client(self, client_id: int, handler) -> None:
        """handler(InvalidateRequest) -> InvalidateAck"""
        self.client_handlers[client_id] = handler

    def flow(self) -> Flow:
        return Flow()

    def _count_sent(self, msg, frame, sync: bool):
        with self._lock:
            self.counters.bytes_sent += len(frame)
            if sync:
                self.counters.sync_rpcs += 1
                name = type(msg).__name__
                self.counters.per_type[name] = self.counters.per_type.get(name, 0) + 1
            else:
                self.counters.async_msgs += 1

    def call(self, addr: str, msg, flow: Flow = None):
        if type(msg) not in REPLY_TYPE:
            raise TransportError(f"{type(msg).__name__} is not a request with a reply")
        flow = flow or self.default_flow
        self._flush_notifies_for(addr)
        server = self.servers.get(addr)
        if server is None:
            raise TransportError(f"no server at {addr}")
        frame = encode_message(msg)
        self._count_sent(msg, frame, sync=True)
        pending = _Pending()
        server.dispatch(decode_message(frame), ServerCtx(self, pending))
        if not pending.done:
            if self.auto_deliver:
                raise TransportError("server deferred a reply with auto delivery on")
            ident = threading.get_ident()
            with self.cond:
                self.blocked[ident] = pending
                self.cond.notify_all()
            pending.event.wait()
            with self.cond:
                self.blocked.pop(ident, None)
                self.cond.notify_all()
        reply_frame = encode_message(pending.msg)
        with self._lock:
            self.counters.bytes_received += len(reply_frame)
            cost = self.latency.cost(len(frame), len(reply_frame))
            self.counters.simulated_elapsed_us += cost
        flow.elapsed_us += cost
        return decode_message(reply_frame)

    def notify(self, addr: str, msg, flow: Flow = None) -> None:
        frame = encode_message(msg)
        self._count_sent(msg, frame, sync=False)
        self.pending_notifies.append((addr, frame))
        if self.auto_deliver:
            self._flush_notifies_for(addr)

    def push(self, server, client_id: int, msg) -> None:
        frame = encode_message(msg)
        with self._lock:
            self.counters.async_msgs += 1
            self.counters.bytes_received += len(frame)
        self.pending_pushes.append(_PushRecord(server, client_id, msg))
        if self.auto_deliver:
            self.deliver_push()
            self.deliver_ack()

    def deliver_push(self, index: int = 0) -> None:
        """Deliver one queued server->client push; queues the client's ack."""
        rec = self.pending_pushes[index]
        del self.pending_pushes[index]
        handler = self.client_handlers.get(rec.client_id)
        if handler is None:
            log.warning("push to unknown client %d dropped", rec.client_id)
            return
        ack = handler(rec.msg)
        if ack is not None:
            frame = encode_message(ack)
            with self._lock:
                self.counters.async_msgs += 1
                self.counters.bytes_sent += len(frame)
            self.pending_acks.append((rec.server, ack))

    def deliver_ack(self, index: int = 0) -> None:
        server, ack = self.pending_acks[index]
        del self.pending_acks[index]
        server.dispatch(ack, ServerCtx(self, None))

    def deliver_notify(self, index: int = 0) -> None:
        addr, frame = self.pending_notifies[index]
        del self.pending_notifies[index]
        server = self.servers.get(addr)
        if server is None:
            log.warning("async message to unreachable %s dropped", addr)
            return
        server.dispatch(decode_message(frame), ServerCtx(self, None))

    def _flush_notifies_for(self, addr: str) -> None:
        # keep per-pair FIFO: anything queued for this server goes first
        i = 0
        while i < len(self.pending_notifies):
            if self.pending_notifies[i][0] == addr:
                self.deliver_notify(i)
            else:
                i += 1

    def drain(self) -> None:
        """Deliver every queued async message until the network is quiescent."""
        while self.pending_notifies or self.pending_pushes or self.pending_acks:
            if self.pending_notifies:
                self.deliver_notify()
            elif self.pending_pushes:
                self.deliver_push()
            else:
                self.deliver_ack()

    def snapshot_counters(self) -> RpcCounters:
        with self._lock:
            return self.counters.copy()

    def reset_counters(self) -> None:
        with self._lock:
            self.counters = RpcCounters()
        self.default_flow.elapsed_us = 0.0
