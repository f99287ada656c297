"""Authenticated channels between clients and services.

Deployments would run the protocol over TLS (server-authenticated, or mutual
for ticket issuance). Here the same contract is realized by a lightweight
signed exchange usable both in-process and over TCP, one request/response per
connection:

    client -> server:  hello || request frame
    server -> client:  proof || response frame

The hello carries the channel mode and, for mutual channels, the client's
credential plus a signature binding the credential to this exact request
frame. The server proof signs (request frame, response frame), so a client
accepts a response only from the authenticated server and only for its own
fresh request. Replay suppression is the envelope's nonce/timestamp check.

The protocol logic is agnostic to which transport binding is active.
"""

from __future__ import annotations

import hashlib
import threading
from dataclasses import dataclass
from enum import IntEnum

from . import crypto
from .codec import Reader, Writer, expect_tag
from .credentials import LongTermCertificate, TrustStore
from .errors import DecodeError, ErrorCode, ProtocolError

TAG_HELLO = b"VHLO"
TAG_PROOF = b"VPRF"
_BIND = b"VPKI-channel-bind-v1"


class ChannelAuthMode(IntEnum):
    SERVER_ONLY = 0
    MUTUAL = 1


class PeerKind(IntEnum):
    ANONYMOUS = 0
    VEHICLE = 1
    AUTHORITY = 2


@dataclass(frozen=True)
class Peer:
    """The authenticated far end of a channel, as seen by a server."""

    kind: PeerKind
    ltc: LongTermCertificate | None = None
    authority_id: str | None = None

    @staticmethod
    def anonymous() -> "Peer":
        return Peer(PeerKind.ANONYMOUS)


@dataclass(frozen=True)
class VehicleCredential:
    ltc: LongTermCertificate
    keypair: crypto.KeyPair


@dataclass(frozen=True)
class AuthorityCredential:
    ca_id: str
    keypair: crypto.KeyPair


ClientCredential = VehicleCredential | AuthorityCredential


def _bind_digest(hello_core: bytes, frame_bytes: bytes) -> bytes:
    return hashlib.sha256(_BIND + hello_core + frame_bytes).digest()


def build_client_hello(
    mode: ChannelAuthMode,
    cred: ClientCredential | None,
    frame_bytes: bytes,
) -> bytes:
    w = Writer().raw(TAG_HELLO).u8(int(mode))
    if cred is None:
        w.u8(int(PeerKind.ANONYMOUS)).bytes_(b"")
        core = w.take()
        return Writer().raw(core).bytes_(b"").take()
    if isinstance(cred, VehicleCredential):
        w.u8(int(PeerKind.VEHICLE)).bytes_(cred.ltc.to_bytes())
    else:
        w.u8(int(PeerKind.AUTHORITY)).bytes_(cred.ca_id.encode("utf-8"))
    core = w.take()
    sig = crypto.sign(cred.keypair.private, _bind_digest(core, frame_bytes))
    return Writer().raw(core).bytes_(sig).take()


def verify_client_hello(hello: bytes, frame_bytes: bytes, trust: TrustStore) -> Peer:
    """Authenticate the client side of a connection.

    Proves possession of the credential's key and its binding to this exact
    request frame; credential *validity* (registration, revocation, expiry)
    is the receiving service's decision.
    """
    r = Reader(hello)
    expect_tag(r, TAG_HELLO)
    mode = ChannelAuthMode(r.u8())
    kind = PeerKind(r.u8())
    cred_bytes = r.bytes_()
    sig = r.bytes_()
    r.expect_eof()
    core = hello[: len(hello) - 4 - len(sig)]

    if kind is PeerKind.ANONYMOUS:
        if mode is ChannelAuthMode.MUTUAL:
            raise ProtocolError(ErrorCode.UNAUTHORIZED, "mutual mode without credential")
        return Peer.anonymous()

    digest = _bind_digest(core, frame_bytes)
    if kind is PeerKind.VEHICLE:
        ltc = LongTermCertificate.from_bytes(cred_bytes)
        if not crypto.verify(ltc.public_key, digest, sig):
            raise ProtocolError(ErrorCode.BAD_SIGNATURE, "client hello signature")
        return Peer(PeerKind.VEHICLE, ltc=ltc)

    ca_id = cred_bytes.decode("utf-8")
    entry = trust.get(ca_id)
    if entry is None:
        raise ProtocolError(ErrorCode.UNAUTHORIZED, f"unknown authority {ca_id}")
    if not crypto.verify(entry.public_key, digest, sig):
        raise ProtocolError(ErrorCode.BAD_SIGNATURE, "client hello signature")
    return Peer(PeerKind.AUTHORITY, authority_id=ca_id)


def build_server_proof(server_id: str, signer: crypto.Signer, request_frame: bytes, response_frame: bytes) -> bytes:
    digest = hashlib.sha256(_BIND + request_frame + response_frame).digest()
    return Writer().raw(TAG_PROOF).str_(server_id).bytes_(signer.sign(digest)).take()


def verify_server_proof(
    proof: bytes,
    expected_server_id: str,
    expected_public_key: bytes,
    request_frame: bytes,
    response_frame: bytes,
) -> bool:
    try:
        r = Reader(proof)
        expect_tag(r, TAG_PROOF)
        server_id = r.str_()
        sig = r.bytes_()
        r.expect_eof()
    except DecodeError:
        return False
    if server_id != expected_server_id:
        return False
    digest = hashlib.sha256(_BIND + request_frame + response_frame).digest()
    return crypto.verify(expected_public_key, digest, sig)


class ClientChannel:
    """One authenticated request/response exchange per call."""

    server_id: str
    mode: ChannelAuthMode

    def request(self, env):  # pragma: no cover - interface
        raise NotImplementedError


class ServiceHost:
    """In-process transport binding: a registry of service endpoints.

    Presents the same channel contract as the TCP binding; optional taps
    observe every byte a client sends (used by the eavesdropper analysis),
    and an optional per-service worker bound models server capacity.
    """

    def __init__(self, trust: TrustStore):
        self.trust = trust
        self._services: dict[str, object] = {}
        self._pinned: dict[str, bytes] = {}
        self._down: set[str] = set()
        self._capacity: dict[str, threading.BoundedSemaphore] = {}
        self.taps: list = []

    def register(self, service, pinned_public: bytes | None = None) -> None:
        self._services[service.server_id] = service
        if pinned_public is not None:
            self._pinned[service.server_id] = pinned_public

    def server_public(self, server_id: str) -> bytes:
        entry = self.trust.get(server_id)
        if entry is not None:
            return entry.public_key
        if server_id in self._pinned:
            return self._pinned[server_id]
        raise KeyError(f"no public key known for {server_id}")

    def set_down(self, server_id: str, down: bool = True) -> None:
        if down:
            self._down.add(server_id)
        else:
            self._down.discard(server_id)

    def set_capacity(self, server_id: str, workers: int | None) -> None:
        if workers is None:
            self._capacity.pop(server_id, None)
        else:
            self._capacity[server_id] = threading.BoundedSemaphore(workers)

    def exchange(self, server_id: str, hello: bytes, frame_bytes: bytes) -> tuple[bytes, bytes]:
        if server_id in self._down:
            raise ConnectionError(f"{server_id} is down")
        service = self._services.get(server_id)
        if service is None:
            raise ConnectionError(f"no such service {server_id}")
        sem = self._capacity.get(server_id)
        if sem is None:
            return service.serve_raw(hello, frame_bytes)
        with sem:
            return service.serve_raw(hello, frame_bytes)

    def connect(
        self,
        server_id: str,
        mode: ChannelAuthMode,
        cred: ClientCredential | None = None,
        client_label: str = "",
    ) -> "InProcChannel":
        return InProcChannel(self, server_id, mode, cred, client_label)


class InProcChannel(ClientChannel):
    def __init__(self, host: ServiceHost, server_id: str, mode: ChannelAuthMode,
                 cred: ClientCredential | None, client_label: str):
        self.host = host
        self.server_id = server_id
        self.mode = mode
        self.cred = cred
        self.client_label = client_label
        self._server_pub = host.server_public(server_id)

    def request(self, env):
        from .wire import deframe, frame, is_response_nonce

        frame_bytes = frame(env)
        hello = build_client_hello(self.mode, self.cred if self.mode is ChannelAuthMode.MUTUAL else None, frame_bytes)
        for tap in self.host.taps:
            tap(self.client_label, self.server_id, hello + frame_bytes)
        proof, resp_frame = self.host.exchange(self.server_id, hello, frame_bytes)
        if not verify_server_proof(proof, self.server_id, self._server_pub, frame_bytes, resp_frame):
            raise ProtocolError(ErrorCode.RESPONSE_INVALID, "server proof")
        resp = deframe(resp_frame)
        if not is_response_nonce(env.nonce, resp.nonce):
            raise ProtocolError(ErrorCode.RESPONSE_INVALID, "nonce pairing")
        return resp
