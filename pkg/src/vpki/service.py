"""Common server machinery: freshness gate, dispatch, error mapping, timing."""

from __future__ import annotations

import logging
import threading
import time
from typing import Callable

from . import wire
from .channel import Peer, PeerKind, build_server_proof, verify_client_hello
from .credentials import Role, TrustStore
from .crypto import KeyPair, Signer
from .errors import DecodeError, ErrorCode, FrameError, ProtocolError
from .messages import ErrorBody, decode_body
from .policy import DomainPolicy

log = logging.getLogger(__name__)

MetricsHook = Callable[[str, int, int, str], None]


def _now_us() -> int:
    return time.monotonic_ns() // 1000


class BaseService:
    """Request pipeline shared by every authority.

    Subclasses register handlers as {msg_type: bound method}; a handler takes
    (body, peer, env) and returns a response body, raising ProtocolError for
    any refusal. Handlers run concurrently; state mutations take self._lock.
    """

    def __init__(
        self,
        server_id: str,
        keypair: KeyPair,
        trust: TrustStore,
        policy: DomainPolicy | None = None,
        clock: Callable[[], int] | None = None,
    ):
        self.server_id = server_id
        self.signer = Signer(keypair)
        self.trust = trust
        self.policy = policy or DomainPolicy()
        self.clock = clock or (lambda: int(time.time()))
        self.metrics_hook: MetricsHook | None = None
        self._nonces = wire.NonceCache(retention=2 * self.policy.clock_skew_seconds)
        self._lock = threading.RLock()
        self._handlers: dict[int, Callable] = {}

    # -- transport glue ----------------------------------------------------

    def serve_raw(self, hello: bytes, frame_bytes: bytes) -> tuple[bytes, bytes]:
        """Process one raw exchange; always returns a provable response."""
        now = self.clock()
        try:
            env = wire.deframe(frame_bytes)
        except FrameError as e:
            resp = wire.Envelope(wire.MsgType.ERR, 0, now, ErrorBody(ErrorCode.FRAME, str(e)).encode())
            return self._proved(frame_bytes, resp)
        try:
            peer = verify_client_hello(hello, frame_bytes, self.trust)
        except ProtocolError as e:
            resp = wire.error_response(env, ErrorBody(e.code, e.message).encode(), now)
            return self._proved(frame_bytes, resp)
        except DecodeError as e:
            resp = wire.error_response(env, ErrorBody(ErrorCode.DECODE, str(e)).encode(), now)
            return self._proved(frame_bytes, resp)
        return self._proved(frame_bytes, self.handle_request(env, peer))

    def _proved(self, frame_bytes: bytes, resp: wire.Envelope) -> tuple[bytes, bytes]:
        resp_frame = wire.frame(resp)
        proof = build_server_proof(self.server_id, self.signer, frame_bytes, resp_frame)
        return proof, resp_frame

    # -- request pipeline ---------------------------------------------------

    def handle_request(self, env: wire.Envelope, peer: Peer) -> wire.Envelope:
        now = self.clock()
        start = _now_us()
        op = wire.MsgType(env.msg_type).name if env.msg_type in set(wire.MsgType) else hex(env.msg_type)
        fresh = wire.check_freshness(env, now, self._nonces, self.policy.clock_skew_seconds)
        if fresh is not wire.Freshness.ACCEPT:
            body = ErrorBody(fresh.error_code(), fresh.name)
            self._record(op, start, str(fresh.error_code().name))
            return wire.error_response(env, body.encode(), now)
        try:
            handler = self._handlers.get(env.msg_type)
            if handler is None:
                raise ProtocolError(ErrorCode.BAD_REQUEST, f"unsupported message {op}")
            body = decode_body(env.msg_type, env.payload)
            res = handler(body, peer, env)
            self._record(op, start, "ok")
            return wire.respond(env, res.encode(), self.clock())
        except ProtocolError as e:
            self._record(op, start, e.code.name)
            return wire.error_response(env, ErrorBody(e.code, e.message).encode(), self.clock())
        except DecodeError as e:
            self._record(op, start, "DECODE")
            return wire.error_response(env, ErrorBody(ErrorCode.DECODE, str(e)).encode(), self.clock())
        except Exception as e:  # never leak a crash to the wire
            log.exception("internal error handling %s", op)
            self._record(op, start, "INTERNAL")
            return wire.error_response(env, ErrorBody(ErrorCode.INTERNAL, str(e)).encode(), self.clock())

    def _record(self, op: str, start_us: int, outcome: str) -> None:
        if self.metrics_hook is not None:
            self.metrics_hook(op, start_us, _now_us(), outcome)

    # -- shared authorization helpers ----------------------------------------

    def _require_ra(self, peer: Peer) -> str:
        if peer.kind is not PeerKind.AUTHORITY or peer.authority_id is None:
            raise ProtocolError(ErrorCode.UNAUTHORIZED, "resolution requires an RA credential")
        entry = self.trust.get(peer.authority_id)
        if entry is None or entry.role is not Role.RA:
            raise ProtocolError(ErrorCode.UNAUTHORIZED, f"{peer.authority_id} is not an RA")
        return peer.authority_id
