"""The client agent and its POSIX-style facade.

Holds a cached partial directory tree whose nodes carry permission
records, so open() is admitted or denied entirely locally whenever the
path's directory listings are cached.  Server-side open bookkeeping rides
on the first read/write RPC; close() returns immediately and notifies the
server asynchronously.
"""

import enum
import threading
from dataclasses import dataclass, field
from typing import Optional

from .errors import BuffetError, ErrorCode
from .types import (
    Access,
    AccessKind,
    BuffetInode,
    ClusterConfig,
    Credentials,
    DirEntryRecord,
    OpenFlags,
    PermissionRecord,
    S_IFDIR,
    S_IFREG,
    access_mask_for,
    check_permission,
    dir_mode,
)
from .wire import (
    CloseNotify,
    CreateRequest,
    DeferredOpen,
    ErrorReply,
    GetDirRequest,
    InvalidateAck,
    InvalidateRequest,
    ReadRequest,
    SetPermissionRequest,
    WriteRequest,
)


class HandleState(enum.Enum):
    INCOMPLETE = "incomplete"
    SERVER_OPENED = "server_opened"
    CLOSED = "closed"


@dataclass
class OpenHandle:
    inode: BuffetInode
    flags: OpenFlags
    cred: Credentials
    open_token: int
    offset: int = 0
    state: HandleState = HandleState.INCOMPLETE


class CacheNode:
    """One node of the cached partial directory tree."""

    __slots__ = ("entry", "valid", "children", "parent")

    def __init__(self, entry: DirEntryRecord, parent=None):
        self.entry = entry
        self.valid = True
        self.children = None  # name -> CacheNode once the listing is fetched
        self.parent = parent

    @property
    def is_dir(self) -> bool:
        return self.entry.perm.is_dir()


def _split_path(path: str):
    if not path.startswith("/"):
        raise BuffetError(ErrorCode.NOT_FOUND, f"path must be absolute: {path!r}")
    parts = [p for p in path.split("/") if p]
    for p in parts:
        if p in (".", ".."):
            raise BuffetError(ErrorCode.NOT_FOUND, f"path must be normalized: {path!r}")
    return parts


class BuffetClient:
    """One agent per client process; the facade may be shared by tasks."""

    def __init__(
        self,
        client_id: int,
        cluster: ClusterConfig,
        home: tuple,
        transport,
        flow=None,
        config_reloader=None,
    ):
        self.client_id = client_id
        self.cluster = cluster
        self.home_host_id, self.home_version = home
        self.transport = transport
        self.flow = flow
        self.config_reloader = config_reloader
        self._lock = threading.RLock()
        root_inode = BuffetInode(
            host_id=self.home_host_id, file_id=0, version=self.home_version
        )
        # root's real perm arrives with the first GetDir (dir_meta)
        root_perm = PermissionRecord(uid=0, gid=0, mode=dir_mode(0o777))
        self.root = CacheNode(DirEntryRecord(name="\x00root", inode=root_inode, perm=root_perm))
        self._index = {self._key(root_inode): self.root}
        self._fds = {}
        self._next_fd = 3
        self._next_token = 1
        transport.register_client(client_id, self.handle_invalidate)

    # -- plumbing -----------------------------------------------------------

    @staticmethod
    def _key(inode: BuffetInode):
        return (inode.host_id, inode.version, inode.file_id)

    def _address(self, inode: BuffetInode) -> str:
        addr = self.cluster.resolve(inode)
        if addr is None:
            raise BuffetError(ErrorCode.STALE_INODE, f"no server for {inode}")
        return addr

    def _call(self, inode: BuffetInode, msg):
        reply = self.transport.call(self._address(inode), msg, flow=self.flow)
        if isinstance(reply, ErrorReply):
            raise BuffetError(reply.code, reply.detail)
        return reply

    def _call_retry_stale(self, inode: BuffetInode, msg):
        """One config reload + retry on a stale inode, then propagate."""
        try:
            return self._call(inode, msg)
        except BuffetError as exc:
            if exc.code != ErrorCode.STALE_INODE or self.config_reloader is None:
                raise
            self.cluster = self.config_reloader()
            return self._call(inode, msg)

    # -- cache tree ---------------------------------------------------------

    def _fetch_listing(self, node: CacheNode) -> None:
        """One GetDir RPC: (re)build node.children and refresh its own perm."""
        reply = self._call_retry_stale(
            node.entry.inode, GetDirRequest(dir_inode=node.entry.inode, client_id=self.client_id)
        )
        with self._lock:
            if node.children:
                for child in node.children.values():
                    self._drop_subtree(child)
            node.entry = DirEntryRecord(
                name=node.entry.name, inode=node.entry.inode, perm=reply.dir_meta.perm
            )
            node.children = {}
            for entry in reply.entries:
                child = CacheNode(entry, parent=node)
                node.children[entry.name] = child
                self._index[self._key(entry.inode)] = child
            node.valid = True

    def _drop_subtree(self, node: CacheNode) -> None:
        self._index.pop(self._key(node.entry.inode), None)
        if node.children:
            for child in node.children.values():
                self._drop_subtree(child)
        node.children = None

    def _ensure_listing(self, node: CacheNode, cred: Credentials) -> None:
        """Make node's listing usable, then check EXEC for traversal."""
        if not node.is_dir and node is not self.root:
            raise BuffetError(ErrorCode.NOT_A_DIRECTORY, node.entry.name)
        with self._lock:
            fresh = node.valid and node.children is not None
        if not fresh:
            self._fetch_listing(node)
        with self._lock:
            if not check_permission(node.entry.perm, cred, Access.EXEC):
                raise BuffetError(ErrorCode.ACCESS_DENIED, f"no search permission on {node.entry.name!r}")

    def resolve(self, path: str, cred: Credentials) -> CacheNode:
        """Walk the cached tree, fetching missing listings; no target check."""
        parts = _split_path(path)
        node = self.root
        for name in parts:
            self._ensure_listing(node, cred)
            with self._lock:
                child = node.children.get(name)
            if child is None:
                raise BuffetError(ErrorCode.NOT_FOUND, f"{name!r} in {path!r}")
            if not child.valid:
                # entry was invalidated; refresh from the parent listing
                self._fetch_listing(node)
                with self._lock:
                    child = node.children.get(name)
                if child is None:
                    raise BuffetError(ErrorCode.NOT_FOUND, f"{name!r} in {path!r}")
            node = child
        return node

    # -- POSIX-style facade -------------------------------------------------

    def open(self, path: str, flags: OpenFlags, cred: Credentials, create_mode: int = 0o644) -> int:
        parts = _split_path(path)
        if not parts:
            raise BuffetError(ErrorCode.IO, "cannot open the root directory")
        parent = self.resolve("/" + "/".join(parts[:-1]), cred) if len(parts) > 1 else self.root
        name = parts[-1]
        self._ensure_listing(parent, cred)
        with self._lock:
            target = parent.children.get(name)
        if target is not None and not target.valid:
            self._fetch_listing(parent)
            with self._lock:
                target = parent.children.get(name)
        if target is None:
            if not flags.create:
                raise BuffetError(ErrorCode.NOT_FOUND, path)
            entry = self._create(parent, name, create_mode, cred, is_dir=False)
        else:
            if target.is_dir:
                raise BuffetError(ErrorCode.IO, f"{path!r} is a directory")
            entry = target.entry
        if not check_permission(entry.perm, cred, access_mask_for(flags)):
            raise BuffetError(ErrorCode.ACCESS_DENIED, path)
        with self._lock:
            fd = self._next_fd
            self._next_fd += 1
            token = self._next_token
            self._next_token += 1
            self._fds[fd] = OpenHandle(
                inode=entry.inode, flags=flags, cred=cred, open_token=token
            )
        return fd

    def _create(self, parent: CacheNode, name: str, mode: int, cred: Credentials, is_dir: bool):
        perm = PermissionRecord(
            uid=cred.uid, gid=cred.gid, mode=(S_IFDIR if is_dir else S_IFREG) | (mode & 0o777)
        )
        reply = self._call_retry_stale(
            parent.entry.inode,
            CreateRequest(
                parent=parent.entry.inode,
                name=name,
                perm=perm,
                is_dir=is_dir,
                client_id=self.client_id,
            ),
        )
        # our own cached listing of parent was invalidated by the create's
        # round; cache the fresh entry only if the listing survived
        with self._lock:
            if parent.valid and parent.children is not None:
                child = CacheNode(reply.entry, parent=parent)
                parent.children[reply.entry.name] = child
                self._index[self._key(reply.entry.inode)] = child
        return reply.entry

    def _handle(self, fd: int) -> OpenHandle:
        handle = self._fds.get(fd)
        if handle is None or handle.state == HandleState.CLOSED:
            raise BuffetError(ErrorCode.BAD_HANDLE, f"fd {fd}")
        return handle

    def _deferred_for(self, handle: OpenHandle) -> Optional[DeferredOpen]:
        if handle.state == HandleState.INCOMPLETE:
            return DeferredOpen(open_token=handle.open_token, flags=handle.flags, cred=handle.cred)
        return None

    def read(self, fd: int, length: int) -> bytes:
        with self._lock:
            handle = self._handle(fd)
            if handle.flags.access not in (AccessKind.RDONLY, AccessKind.RDWR):
                raise BuffetError(ErrorCode.ACCESS_DENIED, "fd not open for reading")
            msg = ReadRequest(
                inode=handle.inode,
                client_id=self.client_id,
                open_token=handle.open_token,
                offset=handle.offset,
                length=length,
                deferred_open=self._deferred_for(handle),
            )
        reply = self._call_retry_stale(handle.inode, msg)
        with self._lock:
            handle.state = HandleState.SERVER_OPENED
            handle.offset += len(reply.data)
        return reply.data

    def write(self, fd: int, data: bytes) -> int:
        with self._lock:
            handle = self._handle(fd)
            if handle.flags.access not in (AccessKind.WRONLY, AccessKind.RDWR):
                raise BuffetError(ErrorCode.ACCESS_DENIED, "fd not open for writing")
            msg = WriteRequest(
                inode=handle.inode,
                client_id=self.client_id,
                open_token=handle.open_token,
                offset=handle.offset,
                data=data,
                deferred_open=self._deferred_for(handle),
            )
        reply = self._call_retry_stale(handle.inode, msg)
        with self._lock:
            handle.state = HandleState.SERVER_OPENED
            handle.offset += reply.bytes_written
        return reply.bytes_written

    def seek(self, fd: int, offset: int) -> None:
        with self._lock:
            self._handle(fd).offset = offset

    def close(self, fd: int) -> None:
        with self._lock:
            handle = self._handle(fd)
            notify_server = handle.state == HandleState.SERVER_OPENED
            handle.state = HandleState.CLOSED
        if notify_server:
            # the server only learned of this open if a data RPC happened
            self.transport.notify(
                self._address(handle.inode),
                CloseNotify(
                    inode=handle.inode, open_token=handle.open_token, client_id=self.client_id
                ),
                flow=self.flow,
            )

    def chmod(self, path: str, new_mode: int, cred: Credentials) -> None:
        node = self.resolve(path, cred)
        old = node.entry.perm
        new_perm = PermissionRecord(
            uid=old.uid, gid=old.gid, mode=(old.mode & ~0o777) | (new_mode & 0o777)
        )
        self._call_retry_stale(
            node.entry.inode,
            SetPermissionRequest(inode=node.entry.inode, new_perm=new_perm, cred=cred),
        )

    def mkdir(self, path: str, mode: int, cred: Credentials) -> None:
        parts = _split_path(path)
        parent = self.resolve("/" + "/".join(parts[:-1]), cred) if len(parts) > 1 else self.root
        self._ensure_listing(parent, cred)
        with self._lock:
            exists = parent.children.get(parts[-1])
        if exists is not None:
            raise BuffetError(ErrorCode.EXISTS, path)
        self._create(parent, parts[-1], mode, cred, is_dir=True)

    def readdir(self, path: str, cred: Credentials):
        node = self.resolve(path, cred) if path != "/" else self.root
        self._ensure_listing(node, cred)
        with self._lock:
            if not check_permission(node.entry.perm, cred, Access.READ):
                raise BuffetError(ErrorCode.ACCESS_DENIED, f"cannot list {path!r}")
            return sorted(node.children)

    # -- invalidation push handler ------------------------------------------

    def handle_invalidate(self, req: InvalidateRequest) -> InvalidateAck:
        with self._lock:
            for inode in req.targets:
                node = self._index.get(self._key(inode))
                if node is None:
                    continue  # evicted or never cached; ack silently
                node.valid = False
                if node.children is not None:
                    for child in node.children.values():
                        self._drop_subtree(child)
                    node.children = None
        return InvalidateAck(epoch=req.epoch, client_id=self.client_id)

    def counters(self):
        return self.transport.snapshot_counters()
