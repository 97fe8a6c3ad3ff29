"""Classic-DFS client model for apples-to-apples comparison.

Every open() is one synchronous RPC that resolves the path and registers
the open server-side, exactly as a conventional metadata server would.
In DOM mode small-file content rides back inlined on the open reply, so
reads are free; writes always pay an RPC.
"""

import enum
import threading
from dataclasses import dataclass, field
from typing import Optional

from .errors import BuffetError, ErrorCode
from .types import AccessKind, BuffetInode, Credentials, OpenFlags
from .wire import (
    BaselineOpenRequest,
    CloseNotify,
    ErrorReply,
    ReadRequest,
    WriteRequest,
)


class BaselineMode(enum.Enum):
    NORMAL = "normal"
    DOM = "dom"


DEFAULT_DOM_THRESHOLD = 64 * 1024


@dataclass
class _BaselineHandle:
    inode: BuffetInode
    flags: OpenFlags
    cred: Credentials
    open_token: int
    offset: int = 0
    inline: Optional[bytes] = None
    closed: bool = False


class BaselineClient:
    def __init__(
        self,
        client_id: int,
        cluster,
        home: tuple,
        transport,
        mode: BaselineMode = BaselineMode.NORMAL,
        dom_threshold: int = DEFAULT_DOM_THRESHOLD,
        flow=None,
    ):
        self.client_id = client_id
        self.cluster = cluster
        self.home_host_id, self.home_version = home
        self.transport = transport
        self.mode = mode
        self.dom_threshold = dom_threshold
        self.flow = flow
        self._lock = threading.Lock()
        self._fds = {}
        self._next_fd = 3

    def _home_address(self) -> str:
        addr = self.cluster.servers.get((self.home_host_id, self.home_version))
        if addr is None:
            raise BuffetError(ErrorCode.STALE_INODE, "home server unknown")
        return addr

    def _call(self, addr: str, msg):
        reply = self.transport.call(addr, msg, flow=self.flow)
        if isinstance(reply, ErrorReply):
            raise BuffetError(reply.code, reply.detail)
        return reply

    def open(self, path: str, flags: OpenFlags, cred: Credentials) -> int:
        dom_limit = self.dom_threshold if self.mode == BaselineMode.DOM else 0
        reply = self._call(
            self._home_address(),
            BaselineOpenRequest(
                path=path, flags=flags, cred=cred, client_id=self.client_id, dom_limit=dom_limit
            ),
        )
        with self._lock:
            fd = self._next_fd
            self._next_fd += 1
            self._fds[fd] = _BaselineHandle(
                inode=reply.entry.inode,
                flags=flags,
                cred=cred,
                open_token=reply.open_token,
                inline=reply.inline_data,
            )
        return fd

    def _handle(self, fd: int) -> _BaselineHandle:
        handle = self._fds.get(fd)
        if handle is None or handle.closed:
            raise BuffetError(ErrorCode.BAD_HANDLE, f"fd {fd}")
        return handle

    def _address(self, inode: BuffetInode) -> str:
        addr = self.cluster.resolve(inode)
        if addr is None:
            raise BuffetError(ErrorCode.STALE_INODE, f"no server for {inode}")
        return addr

    def read(self, fd: int, length: int) -> bytes:
        with self._lock:
            handle = self._handle(fd)
        if handle.flags.access not in (AccessKind.RDONLY, AccessKind.RDWR):
            raise BuffetError(ErrorCode.ACCESS_DENIED, "fd not open for reading")
        if handle.inline is not None:
            data = handle.inline[handle.offset : handle.offset + length]
            handle.offset += len(data)
            return data
        reply = self._call(
            self._address(handle.inode),
            ReadRequest(
                inode=handle.inode,
                client_id=self.client_id,
                open_token=handle.open_token,
                offset=handle.offset,
                length=length,
            ),
        )
        handle.offset += len(reply.data)
        return reply.data

    def write(self, fd: int, data: bytes) -> int:
        with self._lock:
            handle = self._handle(fd)
        if handle.flags.access not in (AccessKind.WRONLY, AccessKind.RDWR):
            raise BuffetError(ErrorCode.ACCESS_DENIED, "fd not open for writing")
        reply = self._call(
            self._address(handle.inode),
            WriteRequest(
                inode=handle.inode,
                client_id=self.client_id,
                open_token=handle.open_token,
                offset=handle.offset,
                data=data,
            ),
        )
        handle.inline = None  # inlined copy is stale after a write
        handle.offset += reply.bytes_written
        return reply.bytes_written

    def seek(self, fd: int, offset: int) -> None:
        with self._lock:
            self._handle(fd).offset = offset

    def close(self, fd: int) -> None:
        with self._lock:
            handle = self._handle(fd)
            handle.closed = True
        self.transport.notify(
            self._address(handle.inode),
            CloseNotify(inode=handle.inode, open_token=handle.open_token, client_id=self.client_id),
            flow=self.flow,
        )

    def counters(self):
        return self.transport.snapshot_counters()
