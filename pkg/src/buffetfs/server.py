"""The storage server: file data, directory entries, the opened-file list,
per-directory client registries, and ack-gated permission changes.

All state-changing metadata operations that clients may have cached go
through an invalidation round: push invalidations to every registered
client, wait for all acks, only then apply the change and release any
directory reads that were queued behind it.
"""

import json
import threading
import time
from dataclasses import dataclass, field

from .errors import ErrorCode
from .types import (
    BuffetInode,
    Credentials,
    DirEntryRecord,
    FileMetadata,
    OpenFlags,
    PermissionRecord,
    S_IFDIR,
    S_IFREG,
    TYPE_MASK,
    access_mask_for,
    check_permission,
    dir_mode,
    Access,
    AccessKind,
)
from .wire import (
    AdminDumpReply,
    AdminDumpRequest,
    BaselineOpenReply,
    BaselineOpenRequest,
    CloseNotify,
    CreateReply,
    CreateRequest,
    ErrorReply,
    GetDirReply,
    GetDirRequest,
    InvalidateAck,
    InvalidateRequest,
    ReadReply,
    ReadRequest,
    SetPermissionReply,
    SetPermissionRequest,
    WriteReply,
    WriteRequest,
)

ROOT_FILE_ID = 0


class RWLock:
    """Shared readers / exclusive writer lock for per-file content access."""

    def __init__(self):
        self._cond = threading.Condition()
        self._readers = 0
        self._writer = False

    def acquire_read(self):
        with self._cond:
            while self._writer:
                self._cond.wait()
            self._readers += 1

    def release_read(self):
        with self._cond:
            self._readers -= 1
            if self._readers == 0:
                self._cond.notify_all()

    def acquire_write(self):
        with self._cond:
            while self._writer or self._readers:
                self._cond.wait()
            self._writer = True

    def release_write(self):
        with self._cond:
            self._writer = False
            self._cond.notify_all()


class LogicalClock:
    """Deterministic nanosecond clock for simulated runs."""

    def __init__(self, start_ns: int = 1_600_000_000_000_000_000, step_ns: int = 1000):
        self._now = start_ns
        self._step = step_ns
        self._lock = threading.Lock()

    def __call__(self) -> int:
        with self._lock:
            self._now += self._step
            return self._now


class MemoryContent:
    """Default content backend: per-file bytearrays."""

    def __init__(self):
        self.files = {}

    def create(self, file_id: int) -> None:
        self.files[file_id] = bytearray()

    def read(self, file_id: int, offset: int, length: int) -> bytes:
        buf = self.files[file_id]
        return bytes(buf[offset : offset + length])

    def write(self, file_id: int, offset: int, data: bytes) -> int:
        buf = self.files[file_id]
        if offset > len(buf):
            buf.extend(b"\0" * (offset - len(buf)))
        buf[offset : offset + len(data)] = data
        return len(buf)

    def truncate(self, file_id: int) -> None:
        del self.files[file_id][:]

    def set_attrs(self, file_id: int, inode_blob: bytes, perm_blob: bytes) -> None:
        pass


class DiskContent:
    """Directory-backed content store.

    Each file_id is materialized as a host file; the inode and permission
    record are mirrored into the extended attributes
    user.buffetfs.inode / user.buffetfs.perm.
    """

    XATTR_INODE = "user.buffetfs.inode"
    XATTR_PERM = "user.buffetfs.perm"

    def __init__(self, root: str):
        import os

        self.root = root
        os.makedirs(root, exist_ok=True)

    def _path(self, file_id: int) -> str:
        import os

        return os.path.join(self.root, f"{file_id:016x}")

    def create(self, file_id: int) -> None:
        with open(self._path(file_id), "wb"):
            pass

    def read(self, file_id: int, offset: int, length: int) -> bytes:
        with open(self._path(file_id), "rb") as fh:
            fh.seek(offset)
            return fh.read(length)

    def write(self, file_id: int, offset: int, data: bytes) -> int:
        import os

        path = self._path(file_id)
        size = os.path.getsize(path)
        with open(path, "r+b") as fh:
            if offset > size:
                fh.seek(size)
                fh.write(b"\0" * (offset - size))
            fh.seek(offset)
            fh.write(data)
            fh.seek(0, 2)
            return fh.tell()

    def truncate(self, file_id: int) -> None:
        with open(self._path(file_id), "r+b") as fh:
            fh.truncate(0)

    def set_attrs(self, file_id: int, inode_blob: bytes, perm_blob: bytes) -> None:
        import os

        path = self._path(file_id)
        os.setxattr(path, self.XATTR_INODE, inode_blob)
        os.setxattr(path, self.XATTR_PERM, perm_blob)

    @staticmethod
    def supported(probe_dir: str) -> bool:
        import os
        import tempfile

        try:
            with tempfile.NamedTemporaryFile(dir=probe_dir) as fh:
                os.setxattr(fh.name, "user.buffetfs.probe", b"1")
            return True
        except OSError:
            return False


@dataclass
class OpenRecord:
    open_token: int
    client_id: int
    file_id: int
    flags: OpenFlags
    cred: Credentials


@dataclass
class _Round:
    epoch: int
    waiting: set
    pushed: set
    held_dirs: set
    apply_fn: object
    reply_fn: object
    queued: list = field(default_factory=list)
    started: float = 0.0


class BServer:
    def __init__(
        self,
        host_id: int,
        version: int = 1,
        content=None,
        clock_ns=None,
        root_perm: PermissionRecord = None,
        ack_deadline_s: float = 5.0,
    ):
        self.host_id = host_id
        self.version = version
        self.content = content or MemoryContent()
        self.clock_ns = clock_ns or time.time_ns
        self.ack_deadline_s = ack_deadline_s
        self.lock = threading.RLock()
        root_perm = root_perm or PermissionRecord(uid=0, gid=0, mode=dir_mode(0o777))
        now = self.clock_ns()
        self.metas = {
            ROOT_FILE_ID: FileMetadata(
                inode=self.inode_for(ROOT_FILE_ID),
                perm=root_perm,
                atime_ns=now,
                mtime_ns=now,
                ctime_ns=now,
            )
        }
        self.dirs = {ROOT_FILE_ID: {}}
        self.parent = {ROOT_FILE_ID: ROOT_FILE_ID}
        self.opened = {}
        self.registry = {}
        self.rounds = {}
        self.invalidation_epoch = 0
        self.next_file_id = 1
        self.next_open_token = 1
        self._file_locks = {}

    # -- identity helpers ---------------------------------------------------

    def inode_for(self, file_id: int) -> BuffetInode:
        return BuffetInode(host_id=self.host_id, file_id=file_id, version=self.version)

    def root_inode(self) -> BuffetInode:
        return self.inode_for(ROOT_FILE_ID)

    def _file_lock(self, file_id: int) -> RWLock:
        lock = self._file_locks.get(file_id)
        if lock is None:
            lock = self._file_locks.setdefault(file_id, RWLock())
        return lock

    def _resolve(self, inode: BuffetInode):
        """file_id for the inode, or an ErrorReply."""
        if inode.host_id != self.host_id or inode.version != self.version:
            return None, ErrorReply(ErrorCode.STALE_INODE, "server incarnation mismatch")
        if inode.file_id not in self.metas:
            return None, ErrorReply(ErrorCode.NOT_FOUND, f"no file_id {inode.file_id}")
        return inode.file_id, None

    def _held_round(self, dir_fid: int):
        for rnd in self.rounds.values():
            if dir_fid in rnd.held_dirs:
                return rnd
        return None

    # -- dispatch -----------------------------------------------------------

    def dispatch(self, msg, ctx) -> None:
        with self.lock:
            if isinstance(msg, GetDirRequest):
                self._on_get_dir(msg, ctx)
            elif isinstance(msg, ReadRequest):
                ctx.reply(self._on_read(msg))
            elif isinstance(msg, WriteRequest):
                ctx.reply(self._on_write(msg))
            elif isinstance(msg, CloseNotify):
                self.opened.pop((msg.client_id, msg.open_token), None)
            elif isinstance(msg, SetPermissionRequest):
                self._on_set_permission(msg, ctx)
            elif isinstance(msg, CreateRequest):
                self._on_create(msg, ctx)
            elif isinstance(msg, InvalidateAck):
                self._on_ack(msg)
            elif isinstance(msg, AdminDumpRequest):
                ctx.reply(AdminDumpReply(payload=self.dump_json()))
            elif isinstance(msg, BaselineOpenRequest):
                self._on_baseline_open(msg, ctx)
            else:
                ctx.reply(ErrorReply(ErrorCode.IO, f"unhandled message {type(msg).__name__}"))

    # -- directory reads ----------------------------------------------------

    def _on_get_dir(self, msg: GetDirRequest, ctx) -> None:
        fid, err = self._resolve(msg.dir_inode)
        if err:
            ctx.reply(err)
            return
        if fid not in self.dirs:
            ctx.reply(ErrorReply(ErrorCode.NOT_A_DIRECTORY, "not a directory"))
            return
        rnd = self._held_round(fid)
        if rnd is not None:
            rnd.queued.append((msg, ctx))
            return
        meta = self.metas[fid]
        meta.atime_ns = self.clock_ns()
        self.registry.setdefault(fid, set()).add(msg.client_id)
        ctx.reply(GetDirReply(entries=tuple(self.dirs[fid].values()), dir_meta=meta))

    # -- data path ----------------------------------------------------------

    def _admit(self, msg):
        """Common read/write admission: resolve, deferred open, handle check.

        Returns (file_id, OpenRecord, None) or (None, None, ErrorReply).
        """
        fid, err = self._resolve(msg.inode)
        if err:
            return None, None, err
        if fid in self.dirs:
            return None, None, ErrorReply(ErrorCode.IO, "is a directory")
        key = (msg.client_id, msg.open_token)
        deferred = msg.deferred_open
        if deferred is not None:
            if key in self.opened:
                return None, None, ErrorReply(ErrorCode.BAD_HANDLE, "open token reused")
            perm = self.metas[fid].perm
            if not check_permission(perm, deferred.cred, access_mask_for(deferred.flags)):
                return None, None, ErrorReply(
                    ErrorCode.ACCESS_DENIED, "permission revoked before deferred open"
                )
            rec = OpenRecord(
                open_token=msg.open_token,
                client_id=msg.client_id,
                file_id=fid,
                flags=deferred.flags,
                cred=deferred.cred,
            )
            self.opened[key] = rec
            if deferred.flags.truncate:
                lock = self._file_lock(fid)
                lock.acquire_write()
                try:
                    self.content.truncate(fid)
                finally:
                    lock.release_write()
                meta = self.metas[fid]
                meta.size = 0
                meta.mtime_ns = self.clock_ns()
        else:
            rec = self.opened.get(key)
            if rec is None:
                return None, None, ErrorReply(ErrorCode.BAD_HANDLE, "unknown open token")
        return fid, rec, None

    def _on_read(self, msg: ReadRequest):
        fid, rec, err = self._admit(msg)
        if err:
            return err
        if rec.flags.access not in (AccessKind.RDONLY, AccessKind.RDWR):
            return ErrorReply(ErrorCode.ACCESS_DENIED, "handle not open for reading")
        lock = self._file_lock(fid)
        lock.acquire_read()
        try:
            data = self.content.read(fid, msg.offset, msg.length)
        finally:
            lock.release_read()
        meta = self.metas[fid]
        meta.atime_ns = self.clock_ns()
        return ReadReply(data=data, file_meta=meta)

    def _on_write(self, msg: WriteRequest):
        fid, rec, err = self._admit(msg)
        if err:
            return err
        if rec.flags.access not in (AccessKind.WRONLY, AccessKind.RDWR):
            return ErrorReply(ErrorCode.ACCESS_DENIED, "handle not open for writing")
        lock = self._file_lock(fid)
        lock.acquire_write()
        try:
            new_size = self.content.write(fid, msg.offset, msg.data)
        finally:
            lock.release_write()
        meta = self.metas[fid]
        meta.size = new_size
        meta.mtime_ns = self.clock_ns()
        return WriteReply(bytes_written=len(msg.data), file_meta=meta)

    # -- metadata changes (ack-gated) ---------------------------------------

    def _start_round(self, targets, held_dirs, registry_dir, apply_fn, reply_fn, ctx):
        clients = set(self.registry.get(registry_dir, set()))
        if not clients:
            apply_fn()
            reply_fn()
            return
        self.invalidation_epoch += 1
        epoch = self.invalidation_epoch
        rnd = _Round(
            epoch=epoch,
            waiting=set(clients),
            pushed=set(clients),
            held_dirs=set(held_dirs),
            apply_fn=apply_fn,
            reply_fn=reply_fn,
            started=time.monotonic(),
        )
        self.rounds[epoch] = rnd
        inval = InvalidateRequest(targets=tuple(targets), epoch=epoch)
        for client_id in sorted(clients):
            ctx.push(self, client_id, inval)

    def _complete_round(self, rnd: _Round, registry_dirs=None) -> None:
        rnd.apply_fn()
        # pushed clients lost their cached copy; they must re-fetch to re-register
        for d in rnd.held_dirs:
            if d in self.registry:
                self.registry[d] -= rnd.pushed
        del self.rounds[rnd.epoch]
        rnd.reply_fn()
        for msg, qctx in rnd.queued:
            self.dispatch(msg, qctx)

    def _on_ack(self, msg: InvalidateAck) -> None:
        rnd = self.rounds.get(msg.epoch)
        if rnd is None:
            return
        rnd.waiting.discard(msg.client_id)
        if not rnd.waiting:
            self._complete_round(rnd)

    def expire_rounds(self) -> None:
        """Drop clients that missed the ack deadline and complete their rounds."""
        now = time.monotonic()
        for rnd in list(self.rounds.values()):
            if rnd.epoch in self.rounds and now - rnd.started >= self.ack_deadline_s:
                rnd.waiting.clear()
                self._complete_round(rnd)

    def _on_set_permission(self, msg: SetPermissionRequest, ctx) -> None:
        fid, err = self._resolve(msg.inode)
        if err:
            ctx.reply(err)
            return
        meta = self.metas[fid]
        if msg.cred.uid != meta.perm.uid:
            ctx.reply(ErrorReply(ErrorCode.ACCESS_DENIED, "only the owner may change permissions"))
            return
        if (msg.new_perm.mode & TYPE_MASK) != (meta.perm.mode & TYPE_MASK):
            ctx.reply(ErrorReply(ErrorCode.IO, "file-type bits may not change"))
            return
        parent_fid = self.parent[fid]
        rnd = self._held_round(parent_fid)
        if rnd is not None:
            rnd.queued.append((msg, ctx))
            return
        held = {parent_fid}
        if fid in self.dirs:
            held.add(fid)

        def apply():
            meta.perm = msg.new_perm
            meta.ctime_ns = self.clock_ns()
            old = self.dirs[parent_fid].get(self._name_of(parent_fid, fid))
            if old is not None:
                self.dirs[parent_fid][old.name] = DirEntryRecord(
                    name=old.name, inode=old.inode, perm=msg.new_perm
                )
            if fid not in self.dirs:
                self.content.set_attrs(fid, meta.inode.pack(), msg.new_perm.pack())

        targets = (self.inode_for(fid), self.inode_for(parent_fid))
        self._start_round(
            targets, held, parent_fid, apply, lambda: ctx.reply(SetPermissionReply(ok=True)), ctx
        )

    def _name_of(self, parent_fid: int, fid: int):
        for name, entry in self.dirs[parent_fid].items():
            if entry.inode.file_id == fid:
                return name
        return None

    def _on_create(self, msg: CreateRequest, ctx) -> None:
        fid, err = self._resolve(msg.parent)
        if err:
            ctx.reply(err)
            return
        if fid not in self.dirs:
            ctx.reply(ErrorReply(ErrorCode.NOT_A_DIRECTORY, "parent is not a directory"))
            return
        rnd = self._held_round(fid)
        if rnd is not None:
            rnd.queued.append((msg, ctx))
            return
        if msg.name in self.dirs[fid]:
            ctx.reply(ErrorReply(ErrorCode.EXISTS, f"{msg.name!r} already exists"))
            return
        want_type = S_IFDIR if msg.is_dir else S_IFREG
        if (msg.perm.mode & TYPE_MASK) != want_type:
            ctx.reply(ErrorReply(ErrorCode.IO, "perm file-type flag mismatch"))
            return
        entry = self._alloc_entry(fid, msg.name, msg.perm, msg.is_dir)

        def apply():
            self.dirs[fid][msg.name] = entry
            self.metas[fid].mtime_ns = self.clock_ns()

        self._start_round(
            (self.inode_for(fid),), {fid}, fid, apply, lambda: ctx.reply(CreateReply(entry=entry)), ctx
        )

    def _alloc_entry(self, parent_fid: int, name: str, perm: PermissionRecord, is_dir: bool):
        new_fid = self.next_file_id
        self.next_file_id += 1
        now = self.clock_ns()
        inode = self.inode_for(new_fid)
        self.metas[new_fid] = FileMetadata(
            inode=inode, perm=perm, atime_ns=now, mtime_ns=now, ctime_ns=now
        )
        self.parent[new_fid] = parent_fid
        if is_dir:
            self.dirs[new_fid] = {}
        else:
            self.content.create(new_fid)
            self.content.set_attrs(new_fid, inode.pack(), perm.pack())
        return DirEntryRecord(name=name, inode=inode, perm=perm)

    # -- baseline (classic DFS) open ---------------------------------------

    def _on_baseline_open(self, msg: BaselineOpenRequest, ctx) -> None:
        parts = [p for p in msg.path.split("/") if p]
        if msg.path == "" or not msg.path.startswith("/") or not parts:
            ctx.reply(ErrorReply(ErrorCode.NOT_FOUND, f"bad path {msg.path!r}"))
            return
        cur = ROOT_FILE_ID
        for name in parts[:-1]:
            if cur not in self.dirs:
                ctx.reply(ErrorReply(ErrorCode.NOT_A_DIRECTORY, name))
                return
            if not check_permission(self.metas[cur].perm, msg.cred, Access.EXEC):
                ctx.reply(ErrorReply(ErrorCode.ACCESS_DENIED, "traversal denied"))
                return
            entry = self.dirs[cur].get(name)
            if entry is None:
                ctx.reply(ErrorReply(ErrorCode.NOT_FOUND, name))
                return
            cur = entry.inode.file_id
        if cur not in self.dirs:
            ctx.reply(ErrorReply(ErrorCode.NOT_A_DIRECTORY, "parent is not a directory"))
            return
        rnd = self._held_round(cur)
        if rnd is not None:
            rnd.queued.append((msg, ctx))
            return
        if not check_permission(self.metas[cur].perm, msg.cred, Access.EXEC):
            ctx.reply(ErrorReply(ErrorCode.ACCESS_DENIED, "traversal denied"))
            return
        entry = self.dirs[cur].get(parts[-1])
        if entry is None:
            ctx.reply(ErrorReply(ErrorCode.NOT_FOUND, parts[-1]))
            return
        fid = entry.inode.file_id
        if fid in self.dirs:
            ctx.reply(ErrorReply(ErrorCode.IO, "is a directory"))
            return
        if not check_permission(entry.perm, msg.cred, access_mask_for(msg.flags)):
            ctx.reply(ErrorReply(ErrorCode.ACCESS_DENIED, "open denied"))
            return
        token = self.next_open_token
        self.next_open_token += 1
        self.opened[(msg.client_id, token)] = OpenRecord(
            open_token=token,
            client_id=msg.client_id,
            file_id=fid,
            flags=msg.flags,
            cred=msg.cred,
        )
        meta = self.metas[fid]
        if msg.flags.truncate:
            self.content.truncate(fid)
            meta.size = 0
            meta.mtime_ns = self.clock_ns()
        inline = None
        if msg.dom_limit and meta.size <= msg.dom_limit:
            inline = self.content.read(fid, 0, meta.size)
        meta.atime_ns = self.clock_ns()
        ctx.reply(
            BaselineOpenReply(entry=entry, file_meta=meta, open_token=token, inline_data=inline)
        )

    # -- direct helpers for tests and population ----------------------------

    def seed_entry(self, path: str, perm_bits: int, data: bytes = None, is_dir: bool = False,
                   uid: int = 0, gid: int = 0) -> BuffetInode:
        """Create a file or directory directly, bypassing the wire protocol.

        Intermediate directories must already exist.
        """
        parts = [p for p in path.split("/") if p]
        cur = ROOT_FILE_ID
        for name in parts[:-1]:
            cur = self.dirs[cur][name].inode.file_id
        mode = dir_mode(perm_bits) if is_dir else (S_IFREG | (perm_bits & 0o777))
        perm = PermissionRecord(uid=uid, gid=gid, mode=mode)
        entry = self._alloc_entry(cur, parts[-1], perm, is_dir)
        self.dirs[cur][parts[-1]] = entry
        fid = entry.inode.file_id
        if data:
            self.metas[fid].size = self.content.write(fid, 0, data)
        return entry.inode

    def dump_json(self) -> str:
        snap = {
            "host_id": self.host_id,
            "version": self.version,
            "epoch": self.invalidation_epoch,
            "opened": sorted(
                [c, t, rec.file_id] for (c, t), rec in self.opened.items()
            ),
            "registry": {
                str(fid): sorted(clients)
                for fid, clients in sorted(self.registry.items())
                if clients
            },
            "files": {
                str(fid): {
                    "size": m.size,
                    "uid": m.perm.uid,
                    "gid": m.perm.gid,
                    "mode": m.perm.mode,
                    "is_dir": fid in self.dirs,
                }
                for fid, m in sorted(self.metas.items())
            },
            "pending_rounds": [
                {
                    "epoch": rnd.epoch,
                    "waiting": sorted(rnd.waiting),
                    "held_dirs": sorted(rnd.held_dirs),
                    "queued": len(rnd.queued),
                }
                for rnd in sorted(self.rounds.values(), key=lambda r: r.epoch)
            ],
        }
        return json.dumps(snap, sort_keys=True)
