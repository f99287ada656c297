"""Home-domain identity provider.

Registers vehicles, issues/updates long-term certificates, and issues
anonymized tickets under the Sybil-prevention overlap ledger: for any
subject, at most one non-expired ticket may cover any instant. Foreign
tickets are requested through the identical code path (the request hides
whether the digest commits to a PCA or to a foreign LTCA), and foreign
tickets issued elsewhere can be exchanged here for native ones.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from . import crypto, wire
from .channel import Peer, PeerKind
from .codec import Reader, Writer
from .credentials import (
    Csr,
    Interval,
    LongTermCertificate,
    Role,
    Ticket,
    ValidationResult,
    validate_chain,
    verify_pop,
)
from .errors import ErrorCode, ProtocolError
from .messages import (
    ExchangeRequest,
    ExchangeResponse,
    RegisterRequest,
    RegisterResponse,
    ResolveTicketRequest,
    ResolveTicketResponse,
    TicketOrigin,
    TicketRequest,
    TicketResponse,
    UpdateRequest,
    UpdateResponse,
)
from .policy import snap_ticket_interval
from .service import BaseService
from .snapshots import LtcaExchangeRow, LtcaSnapshot, LtcaSubjectRow, LtcaTicketRow
from .store import KvStore

# The ticket ledger row is exactly what the honest-but-curious snapshot
# exports: subject, interval, opaque digest — never a target authority.
TicketLedgerEntry = LtcaTicketRow


@dataclass
class VehicleRecord:
    subject_id: str
    current_ltc: LongTermCertificate
    revoked: bool = False
    ltc_history: list[LongTermCertificate] = field(default_factory=list)

    def to_bytes(self) -> bytes:
        w = Writer().str_(self.subject_id).bool_(self.revoked)
        w.raw(self.current_ltc.to_bytes())
        w.u32(len(self.ltc_history))
        for ltc in self.ltc_history:
            w.raw(ltc.to_bytes())
        return w.take()

    @staticmethod
    def from_bytes(data: bytes) -> "VehicleRecord":
        r = Reader(data)
        subject_id = r.str_()
        revoked = r.bool_()
        current = LongTermCertificate.decode(r)
        history = [LongTermCertificate.decode(r) for _ in range(r.count())]
        r.expect_eof()
        return VehicleRecord(subject_id, current, revoked, history)


def _encode_ledger_entry(e: TicketLedgerEntry) -> bytes:
    w = Writer().u64(e.ticket_serial).str_(e.subject_id)
    e.interval.encode(w)
    w.bytes_(e.target_digest).u64(e.issued_at)
    return w.take()


def _decode_ledger_entry(data: bytes) -> TicketLedgerEntry:
    r = Reader(data)
    out = TicketLedgerEntry(r.u64(), r.str_(), Interval.decode(r), r.bytes_(), r.u64())
    r.expect_eof()
    return out


def _encode_exchange(e: LtcaExchangeRow) -> bytes:
    w = Writer().u64(e.native_serial).str_(e.foreign_issuer).u64(e.foreign_serial)
    e.interval.encode(w)
    return w.take()


def _decode_exchange(data: bytes) -> LtcaExchangeRow:
    r = Reader(data)
    out = LtcaExchangeRow(r.u64(), r.str_(), r.u64(), Interval.decode(r))
    r.expect_eof()
    return out


class LtcaService(BaseService):
    def __init__(self, server_id, keypair, trust, policy=None, clock=None, store=None):
        super().__init__(server_id, keypair, trust, policy, clock)
        self.store = store or KvStore()
        self._registry: dict[str, VehicleRecord] = {}
        self._ledger_by_subject: dict[str, list[TicketLedgerEntry]] = {}
        self._ledger_by_serial: dict[int, TicketLedgerEntry] = {}
        self._exchanges: dict[int, LtcaExchangeRow] = {}
        self._used_foreign: set[tuple[str, int]] = set()
        self._next_serial = 1
        self._load()
        self._handlers = {
            wire.MsgType.TICKET_REQ: self._on_ticket_req,
            wire.MsgType.FTKT_REQ: self._on_exchange_req,
            wire.MsgType.REG_REQ: self._on_register_req,
            wire.MsgType.UPD_REQ: self._on_update_req,
            wire.MsgType.RESOLVE_TKT_REQ: self._on_resolve_ticket_req,
        }

    def _load(self) -> None:
        for _, raw in self.store.scan("subj:"):
            rec = VehicleRecord.from_bytes(raw)
            self._registry[rec.subject_id] = rec
        for _, raw in self.store.scan("tkt:"):
            e = _decode_ledger_entry(raw)
            self._ledger_by_serial[e.ticket_serial] = e
            self._ledger_by_subject.setdefault(e.subject_id, []).append(e)
        for _, raw in self.store.scan("xch:"):
            e = _decode_exchange(raw)
            self._exchanges[e.native_serial] = e
        for key, _ in self.store.scan("usedf:"):
            issuer, serial = key[len("usedf:"):].rsplit(":", 1)
            self._used_foreign.add((issuer, int(serial)))
        raw = self.store.get("meta:next_serial")
        if raw is not None:
            self._next_serial = int.from_bytes(raw, "big")

    def _allocate_serial(self) -> int:
        serial = self._next_serial
        self._next_serial += 1
        self.store.put("meta:next_serial", self._next_serial.to_bytes(8, "big"))
        return serial

    # -- registration ---------------------------------------------------------

    def register_vehicle(self, csr: Csr, subject_id: str, validity: Interval) -> LongTermCertificate:
        if not subject_id:
            raise ProtocolError(ErrorCode.BAD_REQUEST, "empty subject id")
        if not verify_pop(csr):
            raise ProtocolError(ErrorCode.BAD_PROOF_OF_POSSESSION, "CSR self-signature")
        with self._lock:
            if subject_id in self._registry:
                raise ProtocolError(ErrorCode.DUPLICATE_SUBJECT, subject_id)
            ltc = self._sign_ltc(self._allocate_serial(), subject_id, csr.public_key, validity)
            rec = VehicleRecord(subject_id, ltc)
            self._registry[subject_id] = rec
            self.store.put(f"subj:{subject_id}", rec.to_bytes())
            return ltc

    def update_ltc(self, old_ltc: LongTermCertificate, csr: Csr) -> LongTermCertificate:
        with self._lock:
            rec = self._registry.get(old_ltc.subject_id)
            if rec is None:
                raise ProtocolError(ErrorCode.UNKNOWN_SUBJECT, old_ltc.subject_id)
            if rec.revoked:
                raise ProtocolError(ErrorCode.REVOKED_CREDENTIAL, "subject revoked")
            if rec.current_ltc != old_ltc:
                raise ProtocolError(ErrorCode.REVOKED_CREDENTIAL, "superseded certificate")
            if not verify_pop(csr):
                raise ProtocolError(ErrorCode.BAD_PROOF_OF_POSSESSION, "CSR self-signature")
            ltc = self._sign_ltc(
                self._allocate_serial(), rec.subject_id, csr.public_key, old_ltc.validity
            )
            rec.ltc_history.append(rec.current_ltc)
            rec.current_ltc = ltc
            self.store.put(f"subj:{rec.subject_id}", rec.to_bytes())
            return ltc

    def _sign_ltc(self, serial, subject_id, public_key, validity) -> LongTermCertificate:
        unsigned = LongTermCertificate(serial, subject_id, public_key, validity, self.server_id, b"")
        return LongTermCertificate(
            serial, subject_id, public_key, validity, self.server_id,
            self.signer.sign(unsigned.signing_bytes()),
        )

    # -- ticket issuance ------------------------------------------------------

    def issue_ticket(
        self, digest: bytes, requested: Interval, ltc: LongTermCertificate, now: int
    ) -> Ticket:
        """Issue a grid-snapped ticket bound to an opaque target digest.

        The overlap check and ledger insert are one atomic step: a second
        request for any instant already covered by a non-expired entry of the
        same subject is refused. The ledger records only (subject, interval,
        digest) — the target authority and requested sub-interval never reach
        this server.
        """
        with self._lock:
            rec = self._registry.get(ltc.subject_id)
            if rec is None:
                raise ProtocolError(ErrorCode.UNKNOWN_SUBJECT, ltc.subject_id)
            if rec.revoked:
                raise ProtocolError(ErrorCode.REVOKED_CREDENTIAL, "subject revoked")
            if rec.current_ltc != ltc:
                raise ProtocolError(ErrorCode.REVOKED_CREDENTIAL, "superseded certificate")
            result = validate_chain(ltc, self.trust, now)
            if result in (ValidationResult.BAD_SIGNATURE, ValidationResult.UNKNOWN_ISSUER):
                raise ProtocolError(ErrorCode.BAD_SIGNATURE, result.name)
            if result is not ValidationResult.VALID:
                raise ProtocolError(ErrorCode.REVOKED_CREDENTIAL, result.name)

            snapped = snap_ticket_interval(
                requested, self.policy.ticket_interval_seconds, self.policy.grid_epoch
            )
            for entry in self._ledger_by_subject.get(ltc.subject_id, ()):
                if entry.interval.end > now and entry.interval.overlaps(snapped):
                    raise ProtocolError(
                        ErrorCode.OVERLAPPING_TICKET,
                        f"entry {entry.ticket_serial} covers [{entry.interval.start},{entry.interval.end})",
                    )
            ticket = self._sign_ticket(self._allocate_serial(), digest, snapped)
            entry = TicketLedgerEntry(ticket.serial, ltc.subject_id, snapped, digest, now)
            self._ledger_by_serial[ticket.serial] = entry
            self._ledger_by_subject.setdefault(ltc.subject_id, []).append(entry)
            self.store.put(f"tkt:{ticket.serial:016x}", _encode_ledger_entry(entry))
            return ticket

    def _sign_ticket(self, serial: int, digest: bytes, interval: Interval) -> Ticket:
        unsigned = Ticket(serial, digest, interval, interval.end, self.server_id, b"")
        return Ticket(
            serial, digest, interval, interval.end, self.server_id,
            self.signer.sign(unsigned.signing_bytes()),
        )

    # -- foreign-ticket exchange -----------------------------------------------

    def exchange_foreign_ticket(
        self,
        f_tkt: Ticket,
        rnd: bytes,
        digest_pca: bytes,
        requested: Interval,
        now: int,
    ) -> Ticket:
        """Exchange a foreign ticket for a native one bound to a new hidden
        target. Single use per foreign serial; the native→foreign mapping is
        kept for cross-domain resolution."""
        if crypto.hash_bind(self.server_id, rnd) != f_tkt.target_digest:
            raise ProtocolError(ErrorCode.TICKET_BINDING_MISMATCH, "digest does not open for this LTCA")
        issuer_entry = self.trust.get(f_tkt.issuer)
        if issuer_entry is None:
            raise ProtocolError(ErrorCode.UNKNOWN_ISSUER, f_tkt.issuer)
        if issuer_entry.role is not Role.LTCA or f_tkt.issuer == self.server_id:
            raise ProtocolError(ErrorCode.TICKET_INVALID, "not a foreign LTCA ticket")
        result = validate_chain(f_tkt, self.trust, now)
        if result is not ValidationResult.VALID:
            raise ProtocolError(ErrorCode.TICKET_INVALID, result.name)
        with self._lock:
            key = (f_tkt.issuer, f_tkt.serial)
            if key in self._used_foreign:
                raise ProtocolError(ErrorCode.TICKET_REUSED, "foreign ticket already exchanged")
            if not f_tkt.interval.contains_interval(requested):
                raise ProtocolError(ErrorCode.INTERVAL_VIOLATION, "request exceeds foreign ticket")
            snapped = snap_ticket_interval(
                requested, self.policy.ticket_interval_seconds, self.policy.grid_epoch
            )
            if not f_tkt.interval.contains_interval(snapped):
                raise ProtocolError(ErrorCode.INTERVAL_VIOLATION, "grid closure exceeds foreign ticket")
            ticket = self._sign_ticket(self._allocate_serial(), digest_pca, snapped)
            row = LtcaExchangeRow(ticket.serial, f_tkt.issuer, f_tkt.serial, snapped)
            self._used_foreign.add(key)
            self._exchanges[ticket.serial] = row
            self.store.put(f"usedf:{f_tkt.issuer}:{f_tkt.serial}", b"1")
            self.store.put(f"xch:{ticket.serial:016x}", _encode_exchange(row))
            return ticket

    # -- resolution & revocation -----------------------------------------------

    def resolve_ticket(self, ticket_serial: int) -> ResolveTicketResponse:
        with self._lock:
            entry = self._ledger_by_serial.get(ticket_serial)
            if entry is not None:
                return ResolveTicketResponse(TicketOrigin.SUBJECT, subject_id=entry.subject_id)
            row = self._exchanges.get(ticket_serial)
            if row is not None:
                return ResolveTicketResponse(
                    TicketOrigin.FOREIGN, home_ca=row.foreign_issuer, foreign_serial=row.foreign_serial
                )
            raise ProtocolError(ErrorCode.UNKNOWN_TICKET, str(ticket_serial))

    def revoke_ltc(self, subject_id: str) -> None:
        with self._lock:
            rec = self._registry.get(subject_id)
            if rec is None:
                raise ProtocolError(ErrorCode.UNKNOWN_SUBJECT, subject_id)
            if not rec.revoked:
                rec.revoked = True
                self.store.put(f"subj:{subject_id}", rec.to_bytes())

    # -- wire handlers -----------------------------------------------------------

    def _on_ticket_req(self, body: TicketRequest, peer: Peer, env) -> TicketResponse:
        if peer.kind is not PeerKind.VEHICLE or peer.ltc is None:
            raise ProtocolError(ErrorCode.UNAUTHORIZED, "ticket issuance requires a mutual channel")
        if peer.ltc != body.ltc:
            raise ProtocolError(ErrorCode.UNAUTHORIZED, "channel credential mismatch")
        ticket = self.issue_ticket(
            body.target_digest, Interval(body.t_start, body.t_end), body.ltc, self.clock()
        )
        return TicketResponse(ticket)

    def _on_exchange_req(self, body: ExchangeRequest, peer: Peer, env) -> ExchangeResponse:
        ticket = self.exchange_foreign_ticket(
            body.foreign_ticket,
            body.rnd,
            body.target_digest,
            Interval(body.t_start, body.t_end),
            self.clock(),
        )
        return ExchangeResponse(ticket)

    def _on_register_req(self, body: RegisterRequest, peer: Peer, env) -> RegisterResponse:
        ltc = self.register_vehicle(
            body.csr, body.subject_id, Interval(body.valid_from, body.valid_to)
        )
        return RegisterResponse(ltc)

    def _on_update_req(self, body: UpdateRequest, peer: Peer, env) -> UpdateResponse:
        return UpdateResponse(self.update_ltc(body.old_ltc, body.csr))

    def _on_resolve_ticket_req(self, body: ResolveTicketRequest, peer: Peer, env) -> ResolveTicketResponse:
        self._require_ra(peer)
        res = self.resolve_ticket(body.ticket_serial)
        if body.revoke_ltc and res.kind is TicketOrigin.SUBJECT:
            self.revoke_ltc(res.subject_id)
        return res

    # -- honest-but-curious view ---------------------------------------------------

    def export_snapshot(self) -> bytes:
        with self._lock:
            subjects = tuple(
                LtcaSubjectRow(r.subject_id, r.current_ltc.serial, r.revoked)
                for r in sorted(self._registry.values(), key=lambda r: r.subject_id)
            )
            tickets = tuple(
                self._ledger_by_serial[s] for s in sorted(self._ledger_by_serial)
            )
            exchanges = tuple(self._exchanges[s] for s in sorted(self._exchanges))
        return LtcaSnapshot(self.server_id, subjects, tickets, exchanges).to_bytes()

    def ledger_entries(self) -> list[TicketLedgerEntry]:
        with self._lock:
            return list(self._ledger_by_serial.values())
