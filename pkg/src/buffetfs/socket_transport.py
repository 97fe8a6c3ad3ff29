"""TCP transport speaking the same frames as the simulated network.

One connection per server carries request/reply traffic; a second,
persistent connection per (client, server) is attached with
AttachPushChannel and carries server->client invalidations and their acks.
Timing is wall-clock; message counting is identical to the simulator.
"""

import logging
import socket
import struct
import threading
import time

from .errors import TransportError
from .transport import Flow, RpcCounters
from .wire import (
    AdminDumpRequest,
    AttachPushChannel,
    CloseNotify,
    HEADER_LEN,
    InvalidateAck,
    REPLY_TYPE,
    decode_message,
    encode_message,
)

log = logging.getLogger(__name__)


def _recv_frame(sock):
    header = b""
    while len(header) < HEADER_LEN:
        chunk = sock.recv(HEADER_LEN - len(header))
        if not chunk:
            return None
        header += chunk
    (body_len,) = struct.unpack("<I", header[5:9])
    body = b""
    while len(body) < body_len:
        chunk = sock.recv(body_len - len(body))
        if not chunk:
            return None
        body += chunk
    return header + body


class _HostCtx:
    def __init__(self, host, conn, wlock):
        self.host = host
        self.conn = conn
        self.wlock = wlock

    def reply(self, msg) -> None:
        frame = encode_message(msg)
        with self.wlock:
            self.conn.sendall(frame)

    def push(self, server, client_id, msg) -> None:
        self.host.push(client_id, msg)


class SocketServerHost:
    """Runs a BServer behind a listening TCP socket."""

    def __init__(self, server, host: str = "127.0.0.1", port: int = 0, expire_interval: float = 0.5):
        self.server = server
        self._listener = socket.create_server((host, port))
        self.address = "%s:%d" % self._listener.getsockname()[:2]
        self._push_conns = {}  # client_id -> (conn, wlock)
        self._running = True
        self._threads = []
        t = threading.Thread(target=self._accept_loop, daemon=True)
        t.start()
        self._threads.append(t)
        t = threading.Thread(target=self._expire_loop, args=(expire_interval,), daemon=True)
        t.start()
        self._threads.append(t)

    def _expire_loop(self, interval: float) -> None:
        while self._running:
            time.sleep(interval)
            with self.server.lock:
                self.server.expire_rounds()

    def _accept_loop(self) -> None:
        while self._running:
            try:
                conn, _ = self._listener.accept()
            except OSError:
                return
            t = threading.Thread(target=self._serve_conn, args=(conn,), daemon=True)
            t.start()
            self._threads.append(t)

    def _serve_conn(self, conn) -> None:
        wlock = threading.Lock()
        try:
            frame = _recv_frame(conn)
            if frame is None:
                return
            first = decode_message(frame)
            if isinstance(first, AttachPushChannel):
                self._push_conns[first.client_id] = (conn, wlock)
                self._ack_loop(conn)
                return
            ctx = _HostCtx(self, conn, wlock)
            self.server.dispatch(first, ctx)
            while self._running:
                frame = _recv_frame(conn)
                if frame is None:
                    return
                self.server.dispatch(decode_message(frame), _HostCtx(self, conn, wlock))
        except OSError:
            pass
        finally:
            try:
                conn.close()
            except OSError:
                pass

    def _ack_loop(self, conn) -> None:
        while self._running:
            frame = _recv_frame(conn)
            if frame is None:
                return
            msg = decode_message(frame)
            if isinstance(msg, InvalidateAck):
                self.server.dispatch(msg, None)

    def push(self, client_id: int, msg) -> None:
        entry = self._push_conns.get(client_id)
        if entry is None:
            log.warning("no push channel for client %d; invalidation dropped", client_id)
            # treat as an immediately-missed ack so the round can expire
            return
        conn, wlock = entry
        frame = encode_message(msg)
        with wlock:
            conn.sendall(frame)

    def close(self) -> None:
        self._running = False
        try:
            self._listener.close()
        except OSError:
            pass
        for conn, _ in list(self._push_conns.values()):
            try:
                conn.close()
            except OSError:
                pass


class SocketTransport:
    """Client-side transport over TCP with the SimNetwork interface."""

    def __init__(self):
        self.counters = RpcCounters()
        self._lock = threading.RLock()
        self._conns = {}  # addr -> (socket, lock)
        self._handlers = {}  # client_id -> handler
        self._push_threads = []
        self.default_flow = Flow()

    def flow(self) -> Flow:
        return Flow()

    def register_client(self, client_id: int, handler) -> None:
        with self._lock:
            self._handlers[client_id] = handler
            for addr in list(self._conns):
                self._attach_push(addr, client_id)

    def _parse(self, addr: str):
        host, port = addr.rsplit(":", 1)
        return host, int(port)

    def _conn(self, addr: str):
        with self._lock:
            entry = self._conns.get(addr)
            if entry is None:
                try:
                    sock = socket.create_connection(self._parse(addr), timeout=10)
                except OSError as exc:
                    raise TransportError(f"cannot reach {addr}: {exc}") from exc
                sock.settimeout(30)
                entry = (sock, threading.Lock())
                self._conns[addr] = entry
                for client_id in self._handlers:
                    self._attach_push(addr, client_id)
            return entry

    def _attach_push(self, addr: str, client_id: int) -> None:
        try:
            sock = socket.create_connection(self._parse(addr), timeout=10)
        except OSError as exc:
            raise TransportError(f"cannot reach {addr}: {exc}") from exc
        sock.sendall(encode_message(AttachPushChannel(client_id=client_id)))
        t = threading.Thread(
            target=self._push_loop, args=(sock, self._handlers[client_id]), daemon=True
        )
        t.start()
        self._push_threads.append(t)

    def _push_loop(self, sock, handler) -> None:
        while True:
            try:
                frame = _recv_frame(sock)
            except OSError:
                return
            if frame is None:
                return
            msg = decode_message(frame)
            with self._lock:
                self.counters.async_msgs += 1
                self.counters.bytes_received += len(frame)
            ack = handler(msg)
            if ack is not None:
                ack_frame = encode_message(ack)
                with self._lock:
                    self.counters.async_msgs += 1
                    self.counters.bytes_sent += len(ack_frame)
                try:
                    sock.sendall(ack_frame)
                except OSError:
                    return

    def call(self, addr: str, msg, flow: Flow = None):
        if type(msg) not in REPLY_TYPE:
            raise TransportError(f"{type(msg).__name__} is not a request with a reply")
        flow = flow or self.default_flow
        sock, slock = self._conn(addr)
        frame = encode_message(msg)
        started = time.monotonic()
        with slock:
            sock.sendall(frame)
            reply_frame = _recv_frame(sock)
        if reply_frame is None:
            raise TransportError(f"connection to {addr} closed mid-call")
        elapsed_us = (time.monotonic() - started) * 1e6
        with self._lock:
            self.counters.sync_rpcs += 1
            name = type(msg).__name__
            self.counters.per_type[name] = self.counters.per_type.get(name, 0) + 1
            self.counters.bytes_sent += len(frame)
            self.counters.bytes_received += len(reply_frame)
            self.counters.simulated_elapsed_us += elapsed_us
        flow.elapsed_us += elapsed_us
        return decode_message(reply_frame)

    def notify(self, addr: str, msg, flow: Flow = None) -> None:
        sock, slock = self._conn(addr)
        frame = encode_message(msg)
        with self._lock:
            self.counters.async_msgs += 1
            self.counters.bytes_sent += len(frame)
        try:
            with slock:
                sock.sendall(frame)
        except OSError as exc:
            log.warning("async message to %s dropped: %s", addr, exc)

    def drain(self) -> None:
        """Flush request-path queues: a ping on each connection proves every
        earlier frame on it was processed.  Uncounted."""
        ping = encode_message(AdminDumpRequest())
        for addr, (sock, slock) in list(self._conns.items()):
            with slock:
                sock.sendall(ping)
                if _recv_frame(sock) is None:
                    raise TransportError(f"connection to {addr} closed during drain")

    def snapshot_counters(self) -> RpcCounters:
        with self._lock:
            return self.counters.copy()

    def reset_counters(self) -> None:
        with self._lock:
            self.counters = RpcCounters()
        self.default_flow.elapsed_us = 0.0

    def close(self) -> None:
        with self._lock:
            for sock, _ in self._conns.values():
                try:
                    sock.close()
                except OSError:
                    pass
            self._conns.clear()
