"""Error codes shared between client and server, plus the exception type."""

import enum


class ErrorCode(enum.IntEnum):
    NOT_FOUND = 1
    ACCESS_DENIED = 2
    STALE_INODE = 3
    BAD_HANDLE = 4
    NOT_A_DIRECTORY = 5
    EXISTS = 6
    IO = 7


class BuffetError(Exception):
    """Raised on the client side when an operation fails.

    Server handlers never raise this across the wire; they return an
    ErrorReply message carrying the same code.
    """

    def __init__(self, code: ErrorCode, detail: str = ""):
        super().__init__(f"{code.name}: {detail}" if detail else code.name)
        self.code = code
        self.detail = detail


class TransportError(Exception):
    """Endpoint unreachable or the connection failed mid-exchange."""


class WireError(ValueError):
    """Malformed frame: bad magic, unknown tag, truncation, length lie."""
