"""On-board client: key management, ticket/pseudonym acquisition (native and
roaming), pseudonym scheduling, CRL/OCSP consumption.

The client never reveals its target authority or its actual pseudonym
sub-interval to the LTCA (only a hash commitment and the full ticket window),
and never presents its LTC to a PCA. All pseudonym keypairs are generated
locally before any network exchange; private keys never leave the vehicle.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

from . import crypto, wire
from .channel import ChannelAuthMode, ClientChannel, VehicleCredential
from .credentials import Interval, LongTermCertificate, Pseudonym, Ticket, make_csr
from .errors import ErrorCode, ProtocolError
from .messages import (
    CrlRequest,
    CrlResponse,
    ErrorBody,
    ExchangeRequest,
    ExchangeResponse,
    OcspRequest,
    OcspResponse,
    OcspStatus,
    PseudonymRequest,
    PseudonymResponse,
    RegisterRequest,
    RegisterResponse,
    TicketRequest,
    TicketResponse,
    UpdateRequest,
    UpdateResponse,
    decode_body,
)

# connector(server_id, mode, credential_or_None) -> ClientChannel
Connector = Callable[[str, ChannelAuthMode, object], ClientChannel]


@dataclass(frozen=True)
class PoolEntry:
    keypair: crypto.KeyPair
    pseudonym: Pseudonym


class Vehicle:
    def __init__(
        self,
        subject_id: str,
        home_ltca: str,
        connector: Connector,
        trust,
        pseudonym_lifetime: int = 300,
        grid_epoch: int = 0,
        clock: Callable[[], int] | None = None,
    ):
        self.subject_id = subject_id
        self.home_ltca = home_ltca
        self.connector = connector
        self.trust = trust
        self.tau = pseudonym_lifetime
        self.grid_epoch = grid_epoch
        self.clock = clock or (lambda: int(time.time()))

        self.keypair: crypto.KeyPair | None = None
        self.ltc: LongTermCertificate | None = None
        self.current_ticket: tuple[Ticket, bytes] | None = None
        self.pool: list[PoolEntry] = []
        self.crl_cache: dict[str, tuple[int, set[int]]] = {}
        self.consumed_tickets: set[tuple[str, int]] = set()
        self._staged_foreign: dict[str, tuple[Ticket, bytes]] = {}

    # -- plumbing ---------------------------------------------------------

    def _credential(self) -> VehicleCredential:
        if self.ltc is None or self.keypair is None:
            raise ProtocolError(ErrorCode.UNAUTHORIZED, "vehicle not registered")
        return VehicleCredential(self.ltc, self.keypair)

    def _exchange(self, server_id: str, mode: ChannelAuthMode, env: wire.Envelope, cred=None):
        channel = self.connector(server_id, mode, cred)
        resp = channel.request(env)
        body = decode_body(resp.msg_type, resp.payload)
        if isinstance(body, ErrorBody):
            raise ProtocolError(body.error_code(), body.message)
        if resp.msg_type != env.msg_type + 1:
            raise ProtocolError(ErrorCode.RESPONSE_INVALID, f"unexpected type 0x{resp.msg_type:04x}")
        return body

    def _request(self, server_id: str, mode: ChannelAuthMode, msg_type: int, body, cred=None):
        env = wire.new_request(msg_type, body.encode(), self.clock())
        return self._exchange(server_id, mode, env, cred)

    def _server_public(self, server_id: str) -> bytes:
        entry = self.trust.get(server_id)
        if entry is None:
            raise ProtocolError(ErrorCode.UNKNOWN_ISSUER, server_id)
        return entry.public_key

    # -- registration -------------------------------------------------------

    def register(self, validity: Interval) -> LongTermCertificate:
        self.keypair = crypto.generate_keypair()
        body = RegisterRequest(make_csr(self.keypair), self.subject_id, validity.start, validity.end)
        res: RegisterResponse = self._request(
            self.home_ltca, ChannelAuthMode.SERVER_ONLY, wire.MsgType.REG_REQ, body
        )
        self._check_ltc(res.ltc)
        self.ltc = res.ltc
        return res.ltc

    def update_ltc(self) -> LongTermCertificate:
        if self.ltc is None:
            raise ProtocolError(ErrorCode.UNAUTHORIZED, "vehicle not registered")
        new_kp = crypto.generate_keypair()
        body = UpdateRequest(self.ltc, make_csr(new_kp))
        res: UpdateResponse = self._request(
            self.home_ltca, ChannelAuthMode.SERVER_ONLY, wire.MsgType.UPD_REQ, body
        )
        self._check_ltc(res.ltc)
        self.keypair = new_kp
        self.ltc = res.ltc
        return res.ltc

    def _check_ltc(self, ltc: LongTermCertificate) -> None:
        if ltc.subject_id != self.subject_id or ltc.issuer != self.home_ltca:
            raise ProtocolError(ErrorCode.MISMATCHED_RESPONSE, "LTC fields")
        if not crypto.verify(self._server_public(self.home_ltca), ltc.signing_bytes(), ltc.signature):
            raise ProtocolError(ErrorCode.RESPONSE_INVALID, "LTC signature")

    # -- ticket acquisition ----------------------------------------------------

    def acquire_ticket(self, target: str, interval: Interval, ltca: str | None = None) -> tuple[Ticket, bytes]:
        """Obtain a ticket whose digest hides `target` (a PCA, or a foreign
        LTCA when roaming). Only the commitment and the full window are sent."""
        ltca = ltca or self.home_ltca
        rnd = crypto.fresh_rnd()
        digest = crypto.hash_bind(target, rnd)
        body = TicketRequest(digest, interval.start, interval.end, self.ltc)
        res: TicketResponse = self._request(
            ltca, ChannelAuthMode.MUTUAL, wire.MsgType.TICKET_REQ, body, cred=self._credential()
        )
        ticket = res.ticket
        self._check_ticket(ticket, ltca, digest, interval)
        return ticket, rnd

    def _check_ticket(self, ticket: Ticket, issuer: str, digest: bytes, requested: Interval) -> None:
        if ticket.issuer != issuer or ticket.target_digest != digest:
            raise ProtocolError(ErrorCode.MISMATCHED_RESPONSE, "ticket fields")
        if not crypto.verify(self._server_public(issuer), ticket.signing_bytes(), ticket.signature):
            raise ProtocolError(ErrorCode.RESPONSE_INVALID, "ticket signature")
        if not ticket.interval.contains_interval(requested):
            raise ProtocolError(ErrorCode.MISMATCHED_RESPONSE, "ticket does not cover request")

    def acquire_native_ticket(self, target_pca: str, interval: Interval) -> tuple[Ticket, bytes]:
        ticket, rnd = self.acquire_ticket(target_pca, interval)
        self.current_ticket = (ticket, rnd)
        return ticket, rnd

    # -- pseudonym acquisition ----------------------------------------------------

    def acquire_pseudonyms(self, pca: str, sub_interval: Interval, n: int) -> int:
        """Redeem the stored ticket at `pca` for n pseudonyms over the given
        sub-interval. Keypairs are pre-generated off-line before the exchange."""
        if self.current_ticket is None:
            raise ProtocolError(ErrorCode.TICKET_INVALID, "no stored ticket")
        ticket, rnd = self.current_ticket
        if crypto.hash_bind(pca, rnd) != ticket.target_digest:
            raise ProtocolError(ErrorCode.TICKET_BINDING_MISMATCH, "stored ticket targets a different authority")
        if not ticket.interval.contains_interval(sub_interval):
            raise ProtocolError(ErrorCode.INTERVAL_VIOLATION, "sub-interval outside ticket window")

        keypairs = [crypto.generate_keypair() for _ in range(n)]
        csrs = tuple(make_csr(kp) for kp in keypairs)
        body = PseudonymRequest(rnd, sub_interval.start, sub_interval.end, ticket, csrs)
        res: PseudonymResponse = self._request(pca, ChannelAuthMode.SERVER_ONLY, wire.MsgType.PSNYM_REQ, body)

        self.current_ticket = None
        self.consumed_tickets.add((ticket.issuer, ticket.serial))
        return self._pool_response(pca, sub_interval, keypairs, res)

    def _pool_response(self, pca: str, sub_interval: Interval, keypairs, res: PseudonymResponse) -> int:
        if len(res.items) != len(keypairs):
            raise ProtocolError(ErrorCode.MISMATCHED_RESPONSE, "item count")
        closure = Interval(
            self.grid_epoch + ((sub_interval.start - self.grid_epoch) // self.tau) * self.tau,
            self.grid_epoch + -((-(sub_interval.end - self.grid_epoch)) // self.tau) * self.tau,
        )
        pca_public = self._server_public(pca)
        issued = 0
        for kp, item in zip(keypairs, res.items):
            if item.pseudonym is None:
                continue
            p = item.pseudonym
            if p.public_key != kp.public:
                raise ProtocolError(ErrorCode.MISMATCHED_RESPONSE, "pseudonym key out of order")
            if p.issuer != pca or not crypto.verify(pca_public, p.signing_bytes(), p.signature):
                raise ProtocolError(ErrorCode.RESPONSE_INVALID, "pseudonym signature")
            if not closure.contains_interval(p.interval):
                raise ProtocolError(ErrorCode.MISMATCHED_RESPONSE, "pseudonym outside requested closure")
            for existing in self.pool:
                if existing.pseudonym.interval.overlaps(p.interval):
                    raise ProtocolError(ErrorCode.MISMATCHED_RESPONSE, "pool overlap")
            self.pool.append(PoolEntry(kp, p))
            issued += 1
        return issued

    # -- roaming ---------------------------------------------------------------

    def roam(
        self,
        foreign_ltca: str,
        foreign_pca: str,
        interval: Interval,
        n: int,
        sub_interval: Interval | None = None,
    ) -> int:
        """Three-stage foreign-domain acquisition: f-tkt from home (hiding the
        foreign LTCA), exchange at the foreign LTCA (hiding the foreign PCA),
        pseudonyms from the foreign PCA. Completed stages are kept on failure
        so a retry resumes where it stopped."""
        if foreign_ltca not in self._staged_foreign:
            f_tkt, rnd1 = self.acquire_ticket(foreign_ltca, interval)
            self._staged_foreign[foreign_ltca] = (f_tkt, rnd1)

        if self.current_ticket is None or crypto.hash_bind(
            foreign_pca, self.current_ticket[1]
        ) != self.current_ticket[0].target_digest:
            f_tkt, rnd1 = self._staged_foreign[foreign_ltca]
            rnd2 = crypto.fresh_rnd()
            digest_pca = crypto.hash_bind(foreign_pca, rnd2)
            body = ExchangeRequest(f_tkt, rnd1, digest_pca, interval.start, interval.end)
            res: ExchangeResponse = self._request(
                foreign_ltca, ChannelAuthMode.SERVER_ONLY, wire.MsgType.FTKT_REQ, body
            )
            self._check_ticket(res.ticket, foreign_ltca, digest_pca, interval)
            del self._staged_foreign[foreign_ltca]
            self.consumed_tickets.add((f_tkt.issuer, f_tkt.serial))
            self.current_ticket = (res.ticket, rnd2)

        sub = sub_interval or interval
        return self.acquire_pseudonyms(foreign_pca, sub, n)

    # -- pseudonym use ------------------------------------------------------------

    def current_pseudonym(self, now: int | None = None) -> PoolEntry | None:
        now = self.clock() if now is None else now
        for entry in self.pool:
            if entry.pseudonym.interval.contains(now):
                return entry
        return None

    # -- revocation state -----------------------------------------------------------

    def refresh_crl(self, pca: str) -> int:
        cached_seq, cached = self.crl_cache.get(pca, (None, set()))
        body = CrlRequest(since_sequence=cached_seq)
        res: CrlResponse = self._request(pca, ChannelAuthMode.SERVER_ONLY, wire.MsgType.CRL_REQ, body)
        crl = res.crl
        if crl.issuer != pca or not crypto.verify(
            self._server_public(pca), crl.signing_bytes(), crl.signature
        ):
            raise ProtocolError(ErrorCode.RESPONSE_INVALID, "CRL signature")
        new = set(crl.entries) - cached
        merged = (cached | set(crl.entries)) if res.is_delta else set(crl.entries)
        self.crl_cache[pca] = (crl.sequence, merged)
        return len(new)

    def check_status(self, pca: str, serial: int, now: int | None = None) -> OcspStatus:
        now = self.clock() if now is None else now
        entry = self.current_pseudonym(now)
        if entry is None:
            raise ProtocolError(ErrorCode.UNAUTHORIZED, "no current pseudonym to authenticate with")
        nonce_env = wire.new_request(wire.MsgType.OCSP_REQ, b"", now)
        proof = crypto.sign(
            entry.keypair.private,
            OcspRequest.proof_bytes(serial, nonce_env.nonce, nonce_env.timestamp),
        )
        body = OcspRequest(serial, entry.pseudonym, proof)
        env = wire.Envelope(wire.MsgType.OCSP_REQ, nonce_env.nonce, nonce_env.timestamp, body.encode())
        res: OcspResponse = self._exchange(pca, ChannelAuthMode.SERVER_ONLY, env)
        return res.status
