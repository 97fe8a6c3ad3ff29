"""Core domain types: inodes, permission records, directory entries.

Also the pure permission-check predicate and the fixed binary layouts used
both on the wire and in persisted extended attributes:

  inode blob (16 bytes):  host_id(4) || version(4) || file_id(8), little-endian
  perm blob  (10 bytes):  uid(4) || gid(4) || mode(2), little-endian
"""

import enum
import struct
from dataclasses import dataclass, field

from .errors import WireError

# mode file-type flags (fit in the low 16 bits of a POSIX st_mode)
S_IFREG = 0o100000
S_IFDIR = 0o040000
TYPE_MASK = S_IFREG | S_IFDIR
PERM_MASK = 0o777

INODE_BLOB_LEN = 16
PERM_BLOB_LEN = 10

_INODE_STRUCT = struct.Struct("<IIQ")
_PERM_STRUCT = struct.Struct("<IIH")


class Access(enum.IntFlag):
    """rwx bits, numerically aligned with one mode class."""

    EXEC = 1
    WRITE = 2
    READ = 4


class AccessKind(enum.IntEnum):
    RDONLY = 0
    WRONLY = 1
    RDWR = 2


@dataclass(frozen=True)
class OpenFlags:
    access: AccessKind
    create: bool = False
    truncate: bool = False

    def __post_init__(self):
        if self.truncate and self.access == AccessKind.RDONLY:
            raise ValueError("truncate requires write access")


@dataclass(frozen=True)
class Credentials:
    uid: int
    gid: int


@dataclass(frozen=True)
class BuffetInode:
    """Global file identity: which server, which file, which incarnation."""

    host_id: int
    file_id: int
    version: int

    def pack(self) -> bytes:
        return _INODE_STRUCT.pack(self.host_id, self.version, self.file_id)

    @classmethod
    def unpack(cls, blob: bytes) -> "BuffetInode":
        if len(blob) != INODE_BLOB_LEN:
            raise WireError(f"inode blob must be {INODE_BLOB_LEN} bytes, got {len(blob)}")
        host_id, version, file_id = _INODE_STRUCT.unpack(blob)
        return cls(host_id=host_id, file_id=file_id, version=version)


@dataclass(frozen=True)
class PermissionRecord:
    """uid/gid/mode triple, the unit of client-side permission checking."""

    uid: int
    gid: int
    mode: int

    def is_dir(self) -> bool:
        return bool(self.mode & S_IFDIR)

    def pack(self) -> bytes:
        return _PERM_STRUCT.pack(self.uid, self.gid, self.mode)

    @classmethod
    def unpack(cls, blob: bytes) -> "PermissionRecord":
        if len(blob) != PERM_BLOB_LEN:
            raise WireError(f"perm blob must be {PERM_BLOB_LEN} bytes, got {len(blob)}")
        uid, gid, mode = _PERM_STRUCT.unpack(blob)
        return cls(uid=uid, gid=gid, mode=mode)


@dataclass(frozen=True)
class DirEntryRecord:
    """One directory entry as replicated to clients: name + inode + perm."""

    name: str
    inode: BuffetInode
    perm: PermissionRecord

    def __post_init__(self):
        if not self.name or "/" in self.name or self.name in (".", ".."):
            raise ValueError(f"bad entry name: {self.name!r}")


@dataclass
class FileMetadata:
    inode: BuffetInode
    perm: PermissionRecord
    size: int = 0
    atime_ns: int = 0
    mtime_ns: int = 0
    ctime_ns: int = 0


@dataclass
class ClusterConfig:
    """Maps (host_id, version) to a server address string.

    A failed lookup means the inode is stale (server incarnation changed),
    which is a protocol condition rather than a programming error.
    """

    servers: dict = field(default_factory=dict)

    def add(self, host_id: int, version: int, address: str) -> None:
        self.servers[(host_id, version)] = address

    def resolve(self, inode: BuffetInode):
        """Address for the inode's server, or None if the inode is stale."""
        return self.servers.get((inode.host_id, inode.version))


def access_mask_for(flags: OpenFlags) -> Access:
    """The rwx bits an open() with these flags must be granted."""
    if flags.access == AccessKind.RDONLY:
        mask = Access.READ
    elif flags.access == AccessKind.WRONLY:
        mask = Access.WRITE
    else:
        mask = Access.READ | Access.WRITE
    if flags.truncate:
        mask |= Access.WRITE
    return mask


def check_permission(perm: PermissionRecord, cred: Credentials, want: Access) -> bool:
    """True iff every bit in `want` is granted by the applicable mode class.

    Class selection is exclusive and ordered: owner match shadows group
    match shadows other. No superuser bypass.
    """
    if not want:
        raise ValueError("want must be non-empty")
    if cred.uid == perm.uid:
        granted = (perm.mode >> 6) & 7
    elif cred.gid == perm.gid:
        granted = (perm.mode >> 3) & 7
    else:
        granted = perm.mode & 7
    return (int(want) & granted) == int(want)


def encode_perm(perm: PermissionRecord) -> bytes:
    return perm.pack()


def decode_perm(blob: bytes) -> PermissionRecord:
    return PermissionRecord.unpack(blob)


def encode_inode(inode: BuffetInode) -> bytes:
    return inode.pack()


def decode_inode(blob: bytes) -> BuffetInode:
    return BuffetInode.unpack(blob)


def file_mode(perm_bits: int) -> int:
    """Mode word for a regular file with the given rwx bits."""
    return S_IFREG | (perm_bits & PERM_MASK)


def dir_mode(perm_bits: int) -> int:
    """Mode word for a directory with the given rwx bits."""
    return S_IFDIR | (perm_bits & PERM_MASK)
