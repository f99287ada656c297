"""TCP binding of the authenticated-channel contract, plus the replica balancer.

One request/response per connection:

    client -> server: [u32 hello_len][hello][frame]
    server -> client: [u32 proof_len][proof][frame]

The balancer is connection-level: it buffers the client's bytes, peeks at the
request to pin pseudonym requests to a replica by ticket serial (preserving
ticket single-use without shared replica state), and splices the exchange
through. Backends are health-checked with a 1 s probe and marked dead on the
first failed forward.
"""

from __future__ import annotations

import logging
import socket
import socketserver
import struct
import threading
import time

from . import wire
from .channel import ChannelAuthMode, ClientChannel, ClientCredential, build_client_hello, verify_server_proof
from .errors import ErrorCode, ProtocolError
from .messages import PseudonymRequest
from .codec import Reader

log = logging.getLogger(__name__)

_LEN = struct.Struct(">I")
MAX_HELLO = 1 * 1024 * 1024


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    buf = bytearray()
    while len(buf) < n:
        chunk = sock.recv(n - len(buf))
        if not chunk:
            raise ConnectionError("peer closed mid-message")
        buf += chunk
    return bytes(buf)


def _recv_len_prefixed(sock: socket.socket, cap: int) -> bytes:
    (n,) = _LEN.unpack(_recv_exact(sock, 4))
    if n > cap:
        raise ConnectionError(f"length {n} exceeds cap {cap}")
    return _recv_exact(sock, n)


def _recv_frame(sock: socket.socket) -> bytes:
    header = _recv_exact(sock, wire.HEADER_LEN)
    payload_len = struct.unpack(">I", header[wire.HEADER_LEN - 4 :])[0]
    if payload_len > wire.MAX_PAYLOAD:
        raise ConnectionError(f"payload {payload_len} exceeds cap")
    return header + (_recv_exact(sock, payload_len) if payload_len else b"")


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        sock: socket.socket = self.request
        sock.settimeout(30)
        try:
            hello = _recv_len_prefixed(sock, MAX_HELLO)
            frame_bytes = _recv_frame(sock)
        except (ConnectionError, socket.timeout, OSError):
            return  # health probes connect and leave; tolerate silently
        proof, resp_frame = self.server.service.serve_raw(hello, frame_bytes)
        try:
            sock.sendall(_LEN.pack(len(proof)) + proof + resp_frame)
        except OSError:
            pass


class TcpServiceServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, service, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _Handler)
        self.service = service

    @property
    def address(self) -> str:
        h, p = self.server_address
        return f"{h}:{p}"

    def serve_in_thread(self) -> threading.Thread:
        t = threading.Thread(target=self.serve_forever, name=f"srv-{self.service.server_id}", daemon=True)
        t.start()
        return t


class TcpChannel(ClientChannel):
    """One-shot TCP exchange with server-proof and nonce-pairing checks."""

    def __init__(
        self,
        address: str,
        server_id: str,
        server_public: bytes,
        mode: ChannelAuthMode,
        cred: ClientCredential | None = None,
        timeout: float = 10.0,
    ):
        self.address = address
        self.server_id = server_id
        self.server_public = server_public
        self.mode = mode
        self.cred = cred
        self.timeout = timeout

    def request(self, env: wire.Envelope) -> wire.Envelope:
        frame_bytes = wire.frame(env)
        hello = build_client_hello(
            self.mode, self.cred if self.mode is ChannelAuthMode.MUTUAL else None, frame_bytes
        )
        host, port = self.address.rsplit(":", 1)
        with socket.create_connection((host, int(port)), timeout=self.timeout) as sock:
            sock.sendall(_LEN.pack(len(hello)) + hello + frame_bytes)
            proof = _recv_len_prefixed(sock, MAX_HELLO)
            resp_frame = _recv_frame(sock)
        if not verify_server_proof(proof, self.server_id, self.server_public, frame_bytes, resp_frame):
            raise ProtocolError(ErrorCode.RESPONSE_INVALID, "server proof")
        resp = wire.deframe(resp_frame)
        if not wire.is_response_nonce(env.nonce, resp.nonce):
            raise ProtocolError(ErrorCode.RESPONSE_INVALID, "nonce pairing")
        return resp


def _ticket_serial_of(frame_bytes: bytes) -> int | None:
    try:
        env = wire.deframe(frame_bytes)
        if env.msg_type != wire.MsgType.PSNYM_REQ:
            return None
        body = PseudonymRequest.decode(Reader(env.payload))
        return body.ticket.serial
    except Exception:
        return None


class Balancer:
    """Connection-level balancer over PCA replicas.

    Pseudonym requests are pinned to a replica by ticket serial so a ticket
    can only ever be spent at one live replica; everything else goes
    round-robin over healthy backends.
    """

    def __init__(self, backends: list[str], host: str = "127.0.0.1", port: int = 0,
                 probe_interval: float = 1.0):
        self.backends = list(backends)
        self._healthy: set[str] = set(backends)
        self._rr = 0
        self._lock = threading.Lock()
        self.probe_interval = probe_interval
        self._stop = threading.Event()
        outer = self

        class _Proxy(socketserver.BaseRequestHandler):
            def handle(self):
                outer._proxy(self.request)

        self._server = socketserver.ThreadingTCPServer((host, port), _Proxy)
        self._server.allow_reuse_address = True
        self._server.daemon_threads = True

    @property
    def address(self) -> str:
        h, p = self._server.server_address
        return f"{h}:{p}"

    def start(self) -> None:
        threading.Thread(target=self._server.serve_forever, name="balancer", daemon=True).start()
        threading.Thread(target=self._probe_loop, name="balancer-probe", daemon=True).start()

    def stop(self) -> None:
        self._stop.set()
        self._server.shutdown()
        self._server.server_close()

    def healthy_backends(self) -> list[str]:
        with self._lock:
            return [b for b in self.backends if b in self._healthy]

    def _probe_loop(self) -> None:
        while not self._stop.wait(self.probe_interval):
            for backend in self.backends:
                host, port = backend.rsplit(":", 1)
                try:
                    with socket.create_connection((host, int(port)), timeout=0.5):
                        pass
                    ok = True
                except OSError:
                    ok = False
                with self._lock:
                    if ok:
                        self._healthy.add(backend)
                    else:
                        self._healthy.discard(backend)

    def _pick(self, frame_bytes: bytes) -> str | None:
        healthy = self.healthy_backends()
        if not healthy:
            return None
        serial = _ticket_serial_of(frame_bytes)
        if serial is not None:
            return healthy[serial % len(healthy)]
        with self._lock:
            self._rr += 1
            return healthy[self._rr % len(healthy)]

    def _proxy(self, client: socket.socket) -> None:
        client.settimeout(30)
        try:
            hello = _recv_len_prefixed(client, MAX_HELLO)
            frame_bytes = _recv_frame(client)
        except (ConnectionError, socket.timeout, OSError):
            return
        buffered = _LEN.pack(len(hello)) + hello + frame_bytes
        backend = self._pick(frame_bytes)
        if backend is None:
            client.close()
            return
        host, port = backend.rsplit(":", 1)
        try:
            with socket.create_connection((host, int(port)), timeout=5) as upstream:
                upstream.settimeout(30)
                upstream.sendall(buffered)
                proof = _recv_len_prefixed(upstream, MAX_HELLO)
                resp_frame = _recv_frame(upstream)
        except OSError:
            with self._lock:
                self._healthy.discard(backend)
            client.close()
            return
        try:
            client.sendall(_LEN.pack(len(proof)) + proof + resp_frame)
        except OSError:
            pass


def wait_for_port(address: str, timeout: float = 10.0) -> bool:
    host, port = address.rsplit(":", 1)
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        try:
            with socket.create_connection((host, int(port)), timeout=0.5):
                return True
        except OSError:
            time.sleep(0.05)
    return False


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]
