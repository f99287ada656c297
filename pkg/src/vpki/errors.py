"""Error codes shared by all services and the wire protocol.

Every server-side failure is reported to the peer as an ERR envelope whose
body carries one of these codes; clients re-raise them as ProtocolError.
"""

from __future__ import annotations

from enum import IntEnum


class ErrorCode(IntEnum):
    # wire / envelope level
    DECODE = 0x0001
    FRAME = 0x0002
    STALE_TIMESTAMP = 0x0010
    REPLAYED_NONCE = 0x0011
    BAD_SIGNATURE = 0x0012
    UNAUTHORIZED = 0x0013
    RESPONSE_INVALID = 0x0014
    BAD_REQUEST = 0x0015

    # registration / LTC handling
    DUPLICATE_SUBJECT = 0x0020
    BAD_PROOF_OF_POSSESSION = 0x0021
    UNKNOWN_SUBJECT = 0x0022
    REVOKED_CREDENTIAL = 0x0023
    OVERLAPPING_TICKET = 0x0024

    # ticket / pseudonym issuance
    TICKET_BINDING_MISMATCH = 0x0030
    TICKET_REUSED = 0x0031
    INTERVAL_VIOLATION = 0x0032
    TICKET_INVALID = 0x0033
    MALICIOUS_REQUESTER = 0x0034
    NO_SLOT = 0x0035
    EMPTY_REQUEST = 0x0036

    # resolution / revocation / directory
    UNKNOWN_TICKET = 0x0040
    UNKNOWN_PSEUDONYM = 0x0041
    UNKNOWN_ISSUER = 0x0042
    NOT_FOUND = 0x0043
    FOREIGN_UNREACHABLE = 0x0044
    UNKNOWN_SEQUENCE = 0x0045

    # client-side detections
    MISMATCHED_RESPONSE = 0x0050

    SERVICE_UNAVAILABLE = 0x0060
    INTERNAL = 0x00FE


class ProtocolError(Exception):
    """A protocol-level failure carrying a wire error code."""

    def __init__(self, code: ErrorCode, message: str = ""):
        super().__init__(f"{code.name}: {message}" if message else code.name)
        self.code = ErrorCode(code)
        self.message = message


class DecodeError(ValueError):
    """Malformed canonical encoding."""


class FrameError(ValueError):
    """Malformed wire frame."""
