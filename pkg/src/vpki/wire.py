"""Wire envelopes: framing, freshness (nonce + timestamp) and response pairing.

Frame layout (bit-exact):

    magic "VPKI" (4) | version 0x01 (1) | msg_type (2 BE) | nonce (8 BE) |
    timestamp (8 BE) | payload_len (4 BE) | payload

A response reuses the request's nonce plus one (mod 2**64) and the next
message-type code; vehicles and servers are only loosely synchronized, so
freshness tolerates a configurable clock skew.
"""

from __future__ import annotations

import os
import struct
import threading
from dataclasses import dataclass
from enum import IntEnum

from .errors import ErrorCode, FrameError

MAGIC = b"VPKI"
VERSION = 1
HEADER_LEN = 27  # 4 + 1 + 2 + 8 + 8 + 4
MAX_PAYLOAD = 16 * 1024 * 1024
_NONCE_MOD = 1 << 64

DEFAULT_SKEW = 300
DEFAULT_RETENTION = 600

_HEADER = struct.Struct(">4sBHQQI")


class MsgType(IntEnum):
    TICKET_REQ = 0x0001
    TICKET_RES = 0x0002
    PSNYM_REQ = 0x0003
    PSNYM_RES = 0x0004
    FTKT_REQ = 0x0005  # foreign-ticket exchange at a foreign-domain LTCA
    FTKT_RES = 0x0006
    NTKT_REQ = 0x0007  # reserved (see msg-type table in README)
    NTKT_RES = 0x0008
    CRL_REQ = 0x0010
    CRL_RES = 0x0011
    OCSP_REQ = 0x0012
    OCSP_RES = 0x0013
    RESOLVE_REQ = 0x0020
    RESOLVE_RES = 0x0021
    MAP_PSNYM_REQ = 0x0022
    MAP_PSNYM_RES = 0x0023
    RESOLVE_TKT_REQ = 0x0024
    RESOLVE_TKT_RES = 0x0025
    DIR_REQ = 0x0030
    DIR_RES = 0x0031
    REG_REQ = 0x0040
    REG_RES = 0x0041
    UPD_REQ = 0x0042
    UPD_RES = 0x0043
    ERR = 0x00FF


@dataclass(frozen=True)
class Envelope:
    msg_type: int
    nonce: int
    timestamp: int
    payload: bytes


def frame(env: Envelope) -> bytes:
    if len(env.payload) > MAX_PAYLOAD:
        raise FrameError(f"payload too large: {len(env.payload)}")
    header = _HEADER.pack(
        MAGIC, VERSION, env.msg_type, env.nonce, env.timestamp, len(env.payload)
    )
    return header + env.payload


def deframe(data: bytes) -> Envelope:
    if len(data) < HEADER_LEN:
        raise FrameError(f"short frame: {len(data)} bytes")
    magic, version, msg_type, nonce, timestamp, payload_len = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FrameError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FrameError(f"unsupported version {version}")
    if payload_len > MAX_PAYLOAD:
        raise FrameError(f"declared payload {payload_len} exceeds cap")
    if len(data) != HEADER_LEN + payload_len:
        raise FrameError(f"length mismatch: declared {payload_len}, got {len(data) - HEADER_LEN}")
    return Envelope(msg_type, nonce, timestamp, bytes(data[HEADER_LEN:]))


class Freshness(IntEnum):
    ACCEPT = 0
    STALE_TIMESTAMP = 1
    REPLAYED_NONCE = 2

    def error_code(self) -> ErrorCode:
        return (
            ErrorCode.STALE_TIMESTAMP
            if self is Freshness.STALE_TIMESTAMP
            else ErrorCode.REPLAYED_NONCE
        )


class NonceCache:
    """Replay window with atomic check-and-insert; entries expire after the
    retention period."""

    def __init__(self, retention: int = DEFAULT_RETENTION):
        self.retention = retention
        self._seen: dict[int, int] = {}
        self._lock = threading.Lock()

    def check_and_insert(self, nonce: int, now: int) -> bool:
        with self._lock:
            expiry = self._seen.get(nonce)
            if expiry is not None and expiry > now:
                return False
            if len(self._seen) > 65536:
                self._seen = {n: e for n, e in self._seen.items() if e > now}
            self._seen[nonce] = now + self.retention
            return True


def check_freshness(
    env: Envelope,
    now: int,
    seen_nonces: NonceCache,
    skew: int = DEFAULT_SKEW,
) -> Freshness:
    if abs(env.timestamp - now) > skew:
        return Freshness.STALE_TIMESTAMP
    if not seen_nonces.check_and_insert(env.nonce, now):
        return Freshness.REPLAYED_NONCE
    return Freshness.ACCEPT


def new_request(msg_type: int, body: bytes, now: int) -> Envelope:
    nonce = int.from_bytes(os.urandom(8), "big")
    return Envelope(msg_type=msg_type, nonce=nonce, timestamp=now, payload=body)


def respond(request_env: Envelope, body: bytes, now: int) -> Envelope:
    """Pair a response to a request: next msg-type code, nonce + 1 (mod 2**64)."""
    return Envelope(
        msg_type=request_env.msg_type + 1,
        nonce=(request_env.nonce + 1) % _NONCE_MOD,
        timestamp=now,
        payload=body,
    )


def error_response(request_env: Envelope, body: bytes, now: int) -> Envelope:
    return Envelope(
        msg_type=MsgType.ERR,
        nonce=(request_env.nonce + 1) % _NONCE_MOD,
        timestamp=now,
        payload=body,
    )


def is_response_nonce(request_nonce: int, response_nonce: int) -> bool:
    return response_nonce == (request_nonce + 1) % _NONCE_MOD
