"""BuffetFS: a distributed file system prototype that admits open() locally
from cached permission-bearing directory entries, defers server-side open
bookkeeping onto the first data RPC, and closes asynchronously."""

from .baseline import BaselineClient, BaselineMode
from .client import BuffetClient, CacheNode, HandleState, OpenHandle
from .errors import BuffetError, ErrorCode, TransportError, WireError
from .server import BServer, DiskContent, LogicalClock, MemoryContent
from .transport import Flow, LatencyModel, RpcCounters, SimNetwork
from .types import (
    Access,
    AccessKind,
    BuffetInode,
    ClusterConfig,
    Credentials,
    DirEntryRecord,
    FileMetadata,
    OpenFlags,
    PermissionRecord,
    access_mask_for,
    check_permission,
    decode_inode,
    decode_perm,
    encode_inode,
    encode_perm,
)
from .wire import decode_message, encode_message

__all__ = [
    "Access",
    "AccessKind",
    "BServer",
    "BaselineClient",
    "BaselineMode",
    "BuffetClient",
    "BuffetError",
    "BuffetInode",
    "CacheNode",
    "ClusterConfig",
    "Credentials",
    "DirEntryRecord",
    "DiskContent",
    "ErrorCode",
    "FileMetadata",
    "Flow",
    "HandleState",
    "LatencyModel",
    "LogicalClock",
    "MemoryContent",
    "OpenFlags",
    "OpenHandle",
    "PermissionRecord",
    "RpcCounters",
    "SimNetwork",
    "TransportError",
    "WireError",
    "access_mask_for",
    "check_permission",
    "decode_inode",
    "decode_message",
    "decode_perm",
    "encode_inode",
    "encode_message",
    "encode_perm",
]
