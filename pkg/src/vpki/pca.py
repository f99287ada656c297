"""Pseudonym provider.

Validates tickets (chain, hidden-target binding, interval containment),
enforces single use atomically, checks per-CSR proof of possession with a
malice threshold, issues pseudonyms on the domain's fixed lifetime grid, and
publishes revocation state (CRL + OCSP). Holds tickets, intervals and
pseudonyms — never a vehicle identity.
"""

from __future__ import annotations

from . import crypto, wire
from .channel import Peer
from .codec import Reader, Writer
from .credentials import (
    Interval,
    Pseudonym,
    RevocationList,
    Role,
    Ticket,
    ValidationResult,
    validate_chain,
    verify_pop,
)
from .errors import ErrorCode, ProtocolError
from .messages import (
    CrlRequest,
    CrlResponse,
    MapPseudonymRequest,
    MapPseudonymResponse,
    OcspRequest,
    OcspResponse,
    OcspStatus,
    PseudonymItem,
    PseudonymRequest,
    PseudonymResponse,
)
from .policy import lifetime_slots as align_lifetimes
from .service import BaseService
from .snapshots import PcaPseudonymRow, PcaSnapshot, PcaUsageRow
from .store import KvStore

__all__ = ["PcaService", "align_lifetimes"]


class PcaService(BaseService):
    def __init__(self, server_id, keypair, trust, policy=None, clock=None, store=None):
        super().__init__(server_id, keypair, trust, policy, clock)
        self.store = store or KvStore()
        self._usage: dict[tuple[str, int], PcaUsageRow] = {}
        self._index: dict[int, PcaPseudonymRow] = {}
        self._revoked_seq: dict[int, int] = {}  # serial -> CRL sequence that added it
        self._crl: RevocationList | None = None
        self.crl_history: list[RevocationList] = []
        self._next_serial = 1
        self._load()
        if self._crl is None:
            self._publish_crl(self.clock(), initial=True)
        self._handlers = {
            wire.MsgType.PSNYM_REQ: self._on_psnym_req,
            wire.MsgType.CRL_REQ: self._on_crl_req,
            wire.MsgType.OCSP_REQ: self._on_ocsp_req,
            wire.MsgType.MAP_PSNYM_REQ: self._on_map_req,
        }

    def _load(self) -> None:
        for key, raw in self.store.scan("use:"):
            row = _decode_usage(raw)
            self._usage[(row.ticket_issuer, row.ticket_serial)] = row
        for _, raw in self.store.scan("psn:"):
            row = _decode_index(raw)
            self._index[row.serial] = row
        for key, raw in self.store.scan("rev:"):
            self._revoked_seq[int(key.split(":", 1)[1], 16)] = int.from_bytes(raw, "big")
        raw = self.store.get("crl:current")
        if raw is not None:
            self._crl = RevocationList.from_bytes(raw)
            self.crl_history.append(self._crl)
        raw = self.store.get("meta:next_serial")
        if raw is not None:
            self._next_serial = int.from_bytes(raw, "big")

    # -- issuance ------------------------------------------------------------

    def issue_pseudonyms(
        self,
        rnd: bytes,
        requested: Interval,
        tkt: Ticket,
        csrs: tuple,
        now: int,
    ) -> list[PseudonymItem]:
        """One pseudonym per valid CSR, on consecutive lifetime-grid slots.

        The ticket is marked used before proof-of-possession checking, so an
        aborted malicious request still burns it. Invalid CSRs get per-item
        errors; at or above the domain threshold the whole request aborts.
        Valid CSRs beyond the available grid slots get NoSlot items.
        """
        if not csrs or len(csrs) > self.policy.max_batch:
            raise ProtocolError(ErrorCode.BAD_REQUEST, f"batch must be 1..{self.policy.max_batch}")
        result = validate_chain(tkt, self.trust, now)
        if result is not ValidationResult.VALID:
            raise ProtocolError(ErrorCode.TICKET_INVALID, result.name)
        issuer_entry = self.trust.get(tkt.issuer)
        if issuer_entry is None or issuer_entry.role is not Role.LTCA:
            raise ProtocolError(ErrorCode.TICKET_INVALID, "issuer is not an LTCA")
        if crypto.hash_bind(self.server_id, rnd) != tkt.target_digest:
            raise ProtocolError(ErrorCode.TICKET_BINDING_MISMATCH, "digest does not open for this PCA")
        if not tkt.interval.contains_interval(requested):
            raise ProtocolError(ErrorCode.INTERVAL_VIOLATION, "request outside ticket interval")

        key = (tkt.issuer, tkt.serial)
        with self._lock:
            if key in self._usage:
                raise ProtocolError(ErrorCode.TICKET_REUSED, f"ticket {tkt.serial} already used")
            row = PcaUsageRow(tkt.issuer, tkt.serial, tkt.interval, now, ())
            self._usage[key] = row
            self.store.put(_usage_key(key), _encode_usage(row))

        pop_ok = [verify_pop(c) for c in csrs]
        invalid = sum(1 for ok in pop_ok if not ok)
        if invalid >= self.policy.pop_failure_threshold:
            raise ProtocolError(
                ErrorCode.MALICIOUS_REQUESTER,
                f"{invalid} invalid proofs of possession (threshold {self.policy.pop_failure_threshold})",
            )

        slots = align_lifetimes(requested, self.policy.pseudonym_lifetime_seconds, self.policy.grid_epoch)
        items: list[PseudonymItem] = []
        issued: list[PcaPseudonymRow] = []
        slot_i = 0
        with self._lock:
            for csr, ok in zip(csrs, pop_ok):
                if not ok:
                    items.append(PseudonymItem(error=ErrorCode.BAD_PROOF_OF_POSSESSION))
                    continue
                if slot_i >= len(slots):
                    items.append(PseudonymItem(error=ErrorCode.NO_SLOT))
                    continue
                psnym = self._sign_pseudonym(self._allocate_serial(), csr.public_key, slots[slot_i])
                slot_i += 1
                items.append(PseudonymItem(pseudonym=psnym))
                issued.append(PcaPseudonymRow(psnym.serial, tkt.issuer, tkt.serial, psnym.interval, psnym.public_key))
            row = PcaUsageRow(tkt.issuer, tkt.serial, tkt.interval, now, tuple(p.serial for p in issued))
            self._usage[key] = row
            writes = [(_usage_key(key), _encode_usage(row))]
            for p in issued:
                self._index[p.serial] = p
                writes.append((f"psn:{p.serial:016x}", _encode_index(p)))
            self.store.put_many(writes)
        return items

    def align_lifetimes(self, requested: Interval) -> list[Interval]:
        return align_lifetimes(requested, self.policy.pseudonym_lifetime_seconds, self.policy.grid_epoch)

    def _allocate_serial(self) -> int:
        serial = self._next_serial
        self._next_serial += 1
        self.store.put("meta:next_serial", self._next_serial.to_bytes(8, "big"))
        return serial

    def _sign_pseudonym(self, serial: int, public_key: bytes, interval: Interval) -> Pseudonym:
        unsigned = Pseudonym(serial, public_key, interval, self.server_id, b"")
        return Pseudonym(
            serial, public_key, interval, self.server_id,
            self.signer.sign(unsigned.signing_bytes()),
        )

    # -- revocation ---------------------------------------------------------

    def revoke_for_ticket(self, ticket_issuer: str, ticket_serial: int, now: int) -> int:
        """Put every still-valid pseudonym of a ticket on the next CRL."""
        with self._lock:
            row = self._usage.get((ticket_issuer, ticket_serial))
            if row is None:
                raise ProtocolError(ErrorCode.UNKNOWN_TICKET, str(ticket_serial))
            added = 0
            next_seq = (self._crl.sequence if self._crl else 0) + 1
            for serial in row.pseudonym_serials:
                entry = self._index[serial]
                if entry.interval.end > now and serial not in self._revoked_seq:
                    self._revoked_seq[serial] = next_seq
                    self.store.put(f"rev:{serial:016x}", next_seq.to_bytes(8, "big"))
                    added += 1
            if added:
                self._publish_crl(now)
            return added

    def _publish_crl(self, now: int, initial: bool = False) -> None:
        sequence = 0 if initial else self._crl.sequence + 1
        entries = tuple(sorted(self._revoked_seq))
        unsigned = RevocationList(self.server_id, sequence, now, entries, b"")
        crl = RevocationList(
            self.server_id, sequence, now, entries, self.signer.sign(unsigned.signing_bytes())
        )
        self._crl = crl
        self.crl_history.append(crl)
        self.store.put("crl:current", crl.to_bytes())

    def get_crl(self, since_sequence: int | None = None) -> tuple[bool, RevocationList]:
        """Current CRL, or a signed delta with only the entries added after
        the given sequence. An unknown (future) sequence yields the full CRL."""
        with self._lock:
            current = self._crl
            if since_sequence is None or since_sequence > current.sequence:
                return False, current
            new_entries = tuple(
                sorted(s for s, seq in self._revoked_seq.items() if seq > since_sequence)
            )
            unsigned = RevocationList(self.server_id, current.sequence, current.issued_at, new_entries, b"")
            delta = RevocationList(
                self.server_id, current.sequence, current.issued_at, new_entries,
                self.signer.sign(unsigned.signing_bytes()),
            )
            return True, delta

    def ocsp_status(self, serial: int) -> OcspStatus:
        with self._lock:
            if serial in self._revoked_seq:
                return OcspStatus.REVOKED
            if serial in self._index:
                return OcspStatus.GOOD
            return OcspStatus.UNKNOWN

    def map_pseudonym(self, serial: int) -> tuple[str, int]:
        with self._lock:
            entry = self._index.get(serial)
            if entry is None:
                raise ProtocolError(ErrorCode.UNKNOWN_PSEUDONYM, str(serial))
            return entry.ticket_issuer, entry.ticket_serial

    # -- wire handlers --------------------------------------------------------

    def _on_psnym_req(self, body: PseudonymRequest, peer: Peer, env) -> PseudonymResponse:
        items = self.issue_pseudonyms(
            body.rnd, Interval(body.t_start, body.t_end), body.ticket, body.csrs, self.clock()
        )
        return PseudonymResponse(tuple(items))

    def _on_crl_req(self, body: CrlRequest, peer: Peer, env) -> CrlResponse:
        is_delta, crl = self.get_crl(body.since_sequence)
        return CrlResponse(is_delta, crl)

    def _on_ocsp_req(self, body: OcspRequest, peer: Peer, env) -> OcspResponse:
        self._authorize_ocsp(body, env)
        return OcspResponse(self.ocsp_status(body.serial))

    def _authorize_ocsp(self, body: OcspRequest, env) -> None:
        now = self.clock()
        requester = body.requester
        issuer_entry = self.trust.get(requester.issuer)
        if issuer_entry is None or issuer_entry.role is not Role.PCA:
            raise ProtocolError(ErrorCode.UNAUTHORIZED, "requester pseudonym issuer unknown")
        if validate_chain(requester, self.trust, now) is not ValidationResult.VALID:
            raise ProtocolError(ErrorCode.UNAUTHORIZED, "requester pseudonym not currently valid")
        if requester.issuer == self.server_id and requester.serial in self._revoked_seq:
            raise ProtocolError(ErrorCode.UNAUTHORIZED, "requester pseudonym revoked")
        proof_msg = OcspRequest.proof_bytes(body.serial, env.nonce, env.timestamp)
        if not crypto.verify(requester.public_key, proof_msg, body.proof):
            raise ProtocolError(ErrorCode.UNAUTHORIZED, "bad possession proof")

    def _on_map_req(self, body: MapPseudonymRequest, peer: Peer, env) -> MapPseudonymResponse:
        self._require_ra(peer)
        issuer, serial = self.map_pseudonym(body.serial)
        revoked = 0
        if body.revoke:
            revoked = self.revoke_for_ticket(issuer, serial, body.now or self.clock())
        return MapPseudonymResponse(issuer, serial, revoked)

    # -- honest-but-curious view ------------------------------------------------

    def export_snapshot(self) -> bytes:
        with self._lock:
            usage = tuple(self._usage[k] for k in sorted(self._usage))
            pseudonyms = tuple(self._index[s] for s in sorted(self._index))
            revoked = tuple(sorted(self._revoked_seq))
            seq = self._crl.sequence if self._crl else 0
        return PcaSnapshot(self.server_id, usage, pseudonyms, revoked, seq).to_bytes()

    def issued_rows(self) -> list[PcaPseudonymRow]:
        with self._lock:
            return list(self._index.values())


def _usage_key(key: tuple[str, int]) -> str:
    return f"use:{key[0]}:{key[1]:016x}"


def _encode_usage(row: PcaUsageRow) -> bytes:
    w = Writer().str_(row.ticket_issuer).u64(row.ticket_serial)
    row.ticket_interval.encode(w)
    w.u64(row.used_at)
    w.u32(len(row.pseudonym_serials))
    for s in row.pseudonym_serials:
        w.u64(s)
    return w.take()


def _decode_usage(data: bytes) -> PcaUsageRow:
    r = Reader(data)
    out = PcaUsageRow(
        r.str_(), r.u64(), Interval.decode(r), r.u64(),
        tuple(r.u64() for _ in range(r.count())),
    )
    r.expect_eof()
    return out


def _encode_index(row: PcaPseudonymRow) -> bytes:
    w = Writer().u64(row.serial).str_(row.ticket_issuer).u64(row.ticket_serial)
    row.interval.encode(w)
    w.bytes_(row.public_key)
    return w.take()


def _decode_index(data: bytes) -> PcaPseudonymRow:
    r = Reader(data)
    out = PcaPseudonymRow(r.u64(), r.str_(), r.u64(), Interval.decode(r), r.bytes_())
    r.expect_eof()
    return out
