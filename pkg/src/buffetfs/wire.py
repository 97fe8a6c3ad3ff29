"""Wire messages and their deterministic binary codec.

Frame layout: magic "BFS1" (4) || tag (1) || body_len (4, LE) || body.
Strings are u16 length + UTF-8 bytes; lists are u32 count + elements;
optional fields are a presence byte followed by the value.
"""

import struct
from dataclasses import dataclass
from typing import Optional

from .errors import ErrorCode, WireError
from .types import (
    AccessKind,
    BuffetInode,
    Credentials,
    DirEntryRecord,
    FileMetadata,
    OpenFlags,
    PermissionRecord,
)

MAGIC = b"BFS1"
HEADER_LEN = 9


@dataclass(frozen=True)
class DeferredOpen:
    """Piggybacked server-side open bookkeeping on the first data RPC."""

    open_token: int
    flags: OpenFlags
    cred: Credentials


@dataclass(frozen=True)
class GetDirRequest:
    dir_inode: BuffetInode
    client_id: int


@dataclass(frozen=True)
class GetDirReply:
    entries: tuple
    dir_meta: FileMetadata


@dataclass(frozen=True)
class ReadRequest:
    inode: BuffetInode
    client_id: int
    open_token: int
    offset: int
    length: int
    deferred_open: Optional[DeferredOpen] = None


@dataclass(frozen=True)
class ReadReply:
    data: bytes
    file_meta: FileMetadata


@dataclass(frozen=True)
class WriteRequest:
    inode: BuffetInode
    client_id: int
    open_token: int
    offset: int
    data: bytes
    deferred_open: Optional[DeferredOpen] = None


@dataclass(frozen=True)
class WriteReply:
    bytes_written: int
    file_meta: FileMetadata


@dataclass(frozen=True)
class CloseNotify:
    inode: BuffetInode
    open_token: int
    client_id: int


@dataclass(frozen=True)
class InvalidateRequest:
    targets: tuple
    epoch: int


@dataclass(frozen=True)
class InvalidateAck:
    epoch: int
    client_id: int


@dataclass(frozen=True)
class SetPermissionRequest:
    inode: BuffetInode
    new_perm: PermissionRecord
    cred: Credentials


@dataclass(frozen=True)
class SetPermissionReply:
    ok: bool


@dataclass(frozen=True)
class CreateRequest:
    parent: BuffetInode
    name: str
    perm: PermissionRecord
    is_dir: bool
    client_id: int


@dataclass(frozen=True)
class CreateReply:
    entry: DirEntryRecord


@dataclass(frozen=True)
class ErrorReply:
    code: ErrorCode
    detail: str


@dataclass(frozen=True)
class AdminDumpRequest:
    pass


@dataclass(frozen=True)
class AdminDumpReply:
    payload: str  # JSON snapshot


@dataclass(frozen=True)
class BaselineOpenRequest:
    """Classic-DFS open: one RPC that resolves the whole path server-side.

    dom_limit > 0 asks the server to inline file content up to that size
    into the reply (the DoM read optimization); 0 disables inlining.
    """

    path: str
    flags: OpenFlags
    cred: Credentials
    client_id: int
    dom_limit: int


@dataclass(frozen=True)
class BaselineOpenReply:
    entry: DirEntryRecord
    file_meta: FileMetadata
    open_token: int
    inline_data: Optional[bytes]


@dataclass(frozen=True)
class AttachPushChannel:
    """Socket-transport handshake marking a connection as server->client."""

    client_id: int


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise WireError("truncated body")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def u64(self) -> int:
        return struct.unpack("<Q", self.take(8))[0]

    def string(self) -> str:
        return self.take(self.u16()).decode("utf-8")

    def blob32(self) -> bytes:
        return self.take(self.u32())

    def done(self) -> None:
        if self.pos != len(self.buf):
            raise WireError("trailing bytes in body")


def _u8(v: int) -> bytes:
    return struct.pack("<B", v)


def _u16(v: int) -> bytes:
    return struct.pack("<H", v)


def _u32(v: int) -> bytes:
    return struct.pack("<I", v)


def _u64(v: int) -> bytes:
    return struct.pack("<Q", v)


def _string(s: str) -> bytes:
    raw = s.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise WireError("string too long")
    return _u16(len(raw)) + raw


def _blob32(b: bytes) -> bytes:
    return _u32(len(b)) + bytes(b)


def _flags(f: OpenFlags) -> bytes:
    return _u8(int(f.access) | (4 if f.create else 0) | (8 if f.truncate else 0))


def _read_flags(r: _Reader) -> OpenFlags:
    b = r.u8()
    return OpenFlags(access=AccessKind(b & 3), create=bool(b & 4), truncate=bool(b & 8))


def _cred(c: Credentials) -> bytes:
    return _u32(c.uid) + _u32(c.gid)


def _read_cred(r: _Reader) -> Credentials:
    return Credentials(uid=r.u32(), gid=r.u32())


def _meta(m: FileMetadata) -> bytes:
    return (
        m.inode.pack()
        + m.perm.pack()
        + _u64(m.size)
        + _u64(m.atime_ns)
        + _u64(m.mtime_ns)
        + _u64(m.ctime_ns)
    )


def _read_meta(r: _Reader) -> FileMetadata:
    inode = BuffetInode.unpack(r.take(16))
    perm = PermissionRecord.unpack(r.take(10))
    return FileMetadata(
        inode=inode,
        perm=perm,
        size=r.u64(),
        atime_ns=r.u64(),
        mtime_ns=r.u64(),
        ctime_ns=r.u64(),
    )


def _entry(e: DirEntryRecord) -> bytes:
    return _string(e.name) + e.inode.pack() + e.perm.pack()


def _read_entry(r: _Reader) -> DirEntryRecord:
    name = r.string()
    inode = BuffetInode.unpack(r.take(16))
    perm = PermissionRecord.unpack(r.take(10))
    return DirEntryRecord(name=name, inode=inode, perm=perm)


def _deferred(d: Optional[DeferredOpen]) -> bytes:
    if d is None:
        return _u8(0)
    return _u8(1) + _u64(d.open_token) + _flags(d.flags) + _cred(d.cred)


def _read_deferred(r: _Reader) -> Optional[DeferredOpen]:
    if r.u8() == 0:
        return None
    return DeferredOpen(open_token=r.u64(), flags=_read_flags(r), cred=_read_cred(r))


def _enc_get_dir_req(m: GetDirRequest) -> bytes:
    return m.dir_inode.pack() + _u32(m.client_id)


def _dec_get_dir_req(r: _Reader) -> GetDirRequest:
    return GetDirRequest(dir_inode=BuffetInode.unpack(r.take(16)), client_id=r.u32())


def _enc_get_dir_rep(m: GetDirReply) -> bytes:
    out = _u32(len(m.entries))
    for e in m.entries:
        out += _entry(e)
    return out + _meta(m.dir_meta)


def _dec_get_dir_rep(r: _Reader) -> GetDirReply:
    entries = tuple(_read_entry(r) for _ in range(r.u32()))
    return GetDirReply(entries=entries, dir_meta=_read_meta(r))


def _enc_read_req(m: ReadRequest) -> bytes:
    return (
        m.inode.pack()
        + _u32(m.client_id)
        + _u64(m.open_token)
        + _u64(m.offset)
        + _u32(m.length)
        + _deferred(m.deferred_open)
    )


def _dec_read_req(r: _Reader) -> ReadRequest:
    return ReadRequest(
        inode=BuffetInode.unpack(r.take(16)),
        client_id=r.u32(),
        open_token=r.u64(),
        offset=r.u64(),
        length=r.u32(),
        deferred_open=_read_deferred(r),
    )


def _enc_read_rep(m: ReadReply) -> bytes:
    return _blob32(m.data) + _meta(m.file_meta)


def _dec_read_rep(r: _Reader) -> ReadReply:
    return ReadReply(data=r.blob32(), file_meta=_read_meta(r))


def _enc_write_req(m: WriteRequest) -> bytes:
    return (
        m.inode.pack()
        + _u32(m.client_id)
        + _u64(m.open_token)
        + _u64(m.offset)
        + _blob32(m.data)
        + _deferred(m.deferred_open)
    )


def _dec_write_req(r: _Reader) -> WriteRequest:
    return WriteRequest(
        inode=BuffetInode.unpack(r.take(16)),
        client_id=r.u32(),
        open_token=r.u64(),
        offset=r.u64(),
        data=r.blob32(),
        deferred_open=_read_deferred(r),
    )


def _enc_write_rep(m: WriteReply) -> bytes:
    return _u32(m.bytes_written) + _meta(m.file_meta)


def _dec_write_rep(r: _Reader) -> WriteReply:
    return WriteReply(bytes_written=r.u32(), file_meta=_read_meta(r))


def _enc_close(m: CloseNotify) -> bytes:
    return m.inode.pack() + _u64(m.open_token) + _u32(m.client_id)


def _dec_close(r: _Reader) -> CloseNotify:
    return CloseNotify(inode=BuffetInode.unpack(r.take(16)), open_token=r.u64(), client_id=r.u32())


def _enc_inval_req(m: InvalidateRequest) -> bytes:
    out = _u32(len(m.targets))
    for t in m.targets:
        out += t.pack()
    return out + _u64(m.epoch)


def _dec_inval_req(r: _Reader) -> InvalidateRequest:
    targets = tuple(BuffetInode.unpack(r.take(16)) for _ in range(r.u32()))
    return InvalidateRequest(targets=targets, epoch=r.u64())


def _enc_inval_ack(m: InvalidateAck) -> bytes:
    return _u64(m.epoch) + _u32(m.client_id)


def _dec_inval_ack(r: _Reader) -> InvalidateAck:
    return InvalidateAck(epoch=r.u64(), client_id=r.u32())


def _enc_setperm_req(m: SetPermissionRequest) -> bytes:
    return m.inode.pack() + m.new_perm.pack() + _cred(m.cred)


def _dec_setperm_req(r: _Reader) -> SetPermissionRequest:
    return SetPermissionRequest(
        inode=BuffetInode.unpack(r.take(16)),
        new_perm=PermissionRecord.unpack(r.take(10)),
        cred=_read_cred(r),
    )


def _enc_setperm_rep(m: SetPermissionReply) -> bytes:
    return _u8(1 if m.ok else 0)


def _dec_setperm_rep(r: _Reader) -> SetPermissionReply:
    return SetPermissionReply(ok=bool(r.u8()))


def _enc_create_req(m: CreateRequest) -> bytes:
    return m.parent.pack() + _string(m.name) + m.perm.pack() + _u8(1 if m.is_dir else 0) + _u32(m.client_id)


def _dec_create_req(r: _Reader) -> CreateRequest:
    return CreateRequest(
        parent=BuffetInode.unpack(r.take(16)),
        name=r.string(),
        perm=PermissionRecord.unpack(r.take(10)),
        is_dir=bool(r.u8()),
        client_id=r.u32(),
    )


def _enc_create_rep(m: CreateReply) -> bytes:
    return _entry(m.entry)


def _dec_create_rep(r: _Reader) -> CreateReply:
    return CreateReply(entry=_read_entry(r))


def _enc_error(m: ErrorReply) -> bytes:
    return _u8(int(m.code)) + _string(m.detail)


def _dec_error(r: _Reader) -> ErrorReply:
    return ErrorReply(code=ErrorCode(r.u8()), detail=r.string())


def _enc_admin_req(m: AdminDumpRequest) -> bytes:
    return b""


def _dec_admin_req(r: _Reader) -> AdminDumpRequest:
    return AdminDumpRequest()


def _enc_admin_rep(m: AdminDumpReply) -> bytes:
    raw = m.payload.encode("utf-8")
    return _blob32(raw)


def _dec_admin_rep(r: _Reader) -> AdminDumpReply:
    return AdminDumpReply(payload=r.blob32().decode("utf-8"))


def _enc_bopen_req(m: BaselineOpenRequest) -> bytes:
    return _string(m.path) + _flags(m.flags) + _cred(m.cred) + _u32(m.client_id) + _u32(m.dom_limit)


def _dec_bopen_req(r: _Reader) -> BaselineOpenRequest:
    return BaselineOpenRequest(
        path=r.string(),
        flags=_read_flags(r),
        cred=_read_cred(r),
        client_id=r.u32(),
        dom_limit=r.u32(),
    )


def _enc_bopen_rep(m: BaselineOpenReply) -> bytes:
    out = _entry(m.entry) + _meta(m.file_meta) + _u64(m.open_token)
    if m.inline_data is None:
        out += _u8(0)
    else:
        out += _u8(1) + _blob32(m.inline_data)
    return out


def _dec_bopen_rep(r: _Reader) -> BaselineOpenReply:
    entry = _read_entry(r)
    meta = _read_meta(r)
    token = r.u64()
    inline = r.blob32() if r.u8() else None
    return BaselineOpenReply(entry=entry, file_meta=meta, open_token=token, inline_data=inline)


def _enc_attach(m: AttachPushChannel) -> bytes:
    return _u32(m.client_id)


def _dec_attach(r: _Reader) -> AttachPushChannel:
    return AttachPushChannel(client_id=r.u32())


_CODECS = {
    1: (GetDirRequest, _enc_get_dir_req, _dec_get_dir_req),
    2: (GetDirReply, _enc_get_dir_rep, _dec_get_dir_rep),
    3: (ReadRequest, _enc_read_req, _dec_read_req),
    4: (ReadReply, _enc_read_rep, _dec_read_rep),
    5: (WriteRequest, _enc_write_req, _dec_write_req),
    6: (WriteReply, _enc_write_rep, _dec_write_rep),
    7: (CloseNotify, _enc_close, _dec_close),
    8: (InvalidateRequest, _enc_inval_req, _dec_inval_req),
    9: (InvalidateAck, _enc_inval_ack, _dec_inval_ack),
    10: (SetPermissionRequest, _enc_setperm_req, _dec_setperm_req),
    11: (SetPermissionReply, _enc_setperm_rep, _dec_setperm_rep),
    12: (CreateRequest, _enc_create_req, _dec_create_req),
    13: (CreateReply, _enc_create_rep, _dec_create_rep),
    14: (ErrorReply, _enc_error, _dec_error),
    15: (AdminDumpRequest, _enc_admin_req, _dec_admin_req),
    16: (AdminDumpReply, _enc_admin_rep, _dec_admin_rep),
    17: (BaselineOpenRequest, _enc_bopen_req, _dec_bopen_req),
    18: (BaselineOpenReply, _enc_bopen_rep, _dec_bopen_rep),
    19: (AttachPushChannel, _enc_attach, _dec_attach),
}

TAG_OF = {cls: tag for tag, (cls, _e, _d) in _CODECS.items()}

# request tag -> reply type; one-way and push messages are absent
REPLY_TYPE = {
    GetDirRequest: GetDirReply,
    ReadRequest: ReadReply,
    WriteRequest: WriteReply,
    SetPermissionRequest: SetPermissionReply,
    CreateRequest: CreateReply,
    AdminDumpRequest: AdminDumpReply,
    BaselineOpenRequest: BaselineOpenReply,
}

ONE_WAY = (CloseNotify, InvalidateRequest, InvalidateAck)


def encode_message(msg) -> bytes:
    tag = TAG_OF.get(type(msg))
    if tag is None:
        raise WireError(f"unknown message type {type(msg).__name__}")
    body = _CODECS[tag][1](msg)
    return MAGIC + _u8(tag) + _u32(len(body)) + body


def decode_message(frame: bytes):
    if len(frame) < HEADER_LEN:
        raise WireError("truncated frame header")
    if frame[:4] != MAGIC:
        raise WireError("bad magic")
    tag = frame[4]
    (body_len,) = struct.unpack("<I", frame[5:9])
    body = frame[9:]
    if len(body) != body_len:
        raise WireError(f"body length mismatch: header says {body_len}, have {len(body)}")
    codec = _CODECS.get(tag)
    if codec is None:
        raise WireError(f"unknown tag {tag}")
    reader = _Reader(body)
    msg = codec[2](reader)
    reader.done()
    return msg
