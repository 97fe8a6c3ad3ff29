"""Random wire-message generators for roundtrip property tests."""

import string

from buffetfs.errors import ErrorCode
from buffetfs.types import (
    AccessKind,
    BuffetInode,
    Credentials,
    DirEntryRecord,
    FileMetadata,
    OpenFlags,
    PermissionRecord,
)
from buffetfs.wire import (
    AdminDumpReply,
    AdminDumpRequest,
    AttachPushChannel,
    BaselineOpenReply,
    BaselineOpenRequest,
    CloseNotify,
    CreateReply,
    CreateRequest,
    DeferredOpen,
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

_NAME_ALPHABET = string.ascii_lowercase + string.digits + "_-"


def rand_name(rng):
    return "".join(rng.choice(_NAME_ALPHABET) for _ in range(rng.randint(1, 12)))


def rand_path(rng):
    return "/" + "/".join(rand_name(rng) for _ in range(rng.randint(1, 4)))


def rand_inode(rng):
    return BuffetInode(
        host_id=rng.randrange(2**32),
        file_id=rng.randrange(2**64),
        version=rng.randrange(2**32),
    )


def rand_perm(rng):
    return PermissionRecord(
        uid=rng.randrange(2**32), gid=rng.randrange(2**32), mode=rng.randrange(2**16)
    )


def rand_cred(rng):
    return Credentials(uid=rng.randrange(2**32), gid=rng.randrange(2**32))


def rand_flags(rng):
    access = rng.choice(list(AccessKind))
    truncate = access != AccessKind.RDONLY and rng.random() < 0.3
    return OpenFlags(access=access, create=rng.random() < 0.3, truncate=truncate)


def rand_meta(rng):
    return FileMetadata(
        inode=rand_inode(rng),
        perm=rand_perm(rng),
        size=rng.randrange(2**48),
        atime_ns=rng.randrange(2**62),
        mtime_ns=rng.randrange(2**62),
        ctime_ns=rng.randrange(2**62),
    )


def rand_entry(rng):
    return DirEntryRecord(name=rand_name(rng), inode=rand_inode(rng), perm=rand_perm(rng))


def rand_bytes(rng, max_len=200):
    return rng.randbytes(rng.randint(0, max_len))


def rand_deferred(rng):
    if rng.random() < 0.5:
        return None
    return DeferredOpen(open_token=rng.randrange(2**64), flags=rand_flags(rng), cred=rand_cred(rng))


_BUILDERS = [
    lambda rng: GetDirRequest(dir_inode=rand_inode(rng), client_id=rng.randrange(2**32)),
    lambda rng: GetDirReply(
        entries=tuple(rand_entry(rng) for _ in range(rng.randint(0, 5))), dir_meta=rand_meta(rng)
    ),
    lambda rng: ReadRequest(
        inode=rand_inode(rng),
        client_id=rng.randrange(2**32),
        open_token=rng.randrange(2**64),
        offset=rng.randrange(2**62),
        length=rng.randrange(2**32),
        deferred_open=rand_deferred(rng),
    ),
    lambda rng: ReadReply(data=rand_bytes(rng), file_meta=rand_meta(rng)),
    lambda rng: WriteRequest(
        inode=rand_inode(rng),
        client_id=rng.randrange(2**32),
        open_token=rng.randrange(2**64),
        offset=rng.randrange(2**62),
        data=rand_bytes(rng),
        deferred_open=rand_deferred(rng),
    ),
    lambda rng: WriteReply(bytes_written=rng.randrange(2**32), file_meta=rand_meta(rng)),
    lambda rng: CloseNotify(
        inode=rand_inode(rng), open_token=rng.randrange(2**64), client_id=rng.randrange(2**32)
    ),
    lambda rng: InvalidateRequest(
        targets=tuple(rand_inode(rng) for _ in range(rng.randint(0, 5))),
        epoch=rng.randrange(2**64),
    ),
    lambda rng: InvalidateAck(epoch=rng.randrange(2**64), client_id=rng.randrange(2**32)),
    lambda rng: SetPermissionRequest(
        inode=rand_inode(rng), new_perm=rand_perm(rng), cred=rand_cred(rng)
    ),
    lambda rng: SetPermissionReply(ok=rng.random() < 0.5),
    lambda rng: CreateRequest(
        parent=rand_inode(rng),
        name=rand_name(rng),
        perm=rand_perm(rng),
        is_dir=rng.random() < 0.5,
        client_id=rng.randrange(2**32),
    ),
    lambda rng: CreateReply(entry=rand_entry(rng)),
    lambda rng: ErrorReply(code=rng.choice(list(ErrorCode)), detail=rand_name(rng)),
    lambda rng: AdminDumpRequest(),
    lambda rng: AdminDumpReply(payload=rand_name(rng)),
    lambda rng: BaselineOpenRequest(
        path=rand_path(rng),
        flags=rand_flags(rng),
        cred=rand_cred(rng),
        client_id=rng.randrange(2**32),
        dom_limit=rng.randrange(2**32),
    ),
    lambda rng: BaselineOpenReply(
        entry=rand_entry(rng),
        file_meta=rand_meta(rng),
        open_token=rng.randrange(2**64),
        inline_data=rand_bytes(rng) if rng.random() < 0.5 else None,
    ),
    lambda rng: AttachPushChannel(client_id=rng.randrange(2**32)),
]


def random_message(rng):
    return rng.choice(_BUILDERS)(rng)
