"""Canonical dumps of exactly the persistent tables each authority keeps.

These are what an honest-but-curious operator could read off its own server,
and the only thing the collusion analyzer is allowed to see. The LTCA
snapshot deliberately has no field that could hold a pseudonym or a target
authority identity; the PCA snapshot has no field for a vehicle identity.
"""

from __future__ import annotations

from dataclasses import dataclass

from .codec import Reader, Writer, expect_tag
from .credentials import Interval

TAG_LTCA_SNAPSHOT = b"SLTA"
TAG_PCA_SNAPSHOT = b"SPCA"


@dataclass(frozen=True)
class LtcaSubjectRow:
    subject_id: str
    ltc_serial: int
    revoked: bool


@dataclass(frozen=True)
class LtcaTicketRow:
    ticket_serial: int
    subject_id: str
    interval: Interval
    target_digest: bytes
    issued_at: int


@dataclass(frozen=True)
class LtcaExchangeRow:
    native_serial: int
    foreign_issuer: str
    foreign_serial: int
    interval: Interval


@dataclass(frozen=True)
class LtcaSnapshot:
    ca_id: str
    subjects: tuple[LtcaSubjectRow, ...]
    tickets: tuple[LtcaTicketRow, ...]
    exchanges: tuple[LtcaExchangeRow, ...]

    def to_bytes(self) -> bytes:
        w = Writer().raw(TAG_LTCA_SNAPSHOT).str_(self.ca_id)
        w.u32(len(self.subjects))
        for s in self.subjects:
            w.str_(s.subject_id).u64(s.ltc_serial).bool_(s.revoked)
        w.u32(len(self.tickets))
        for t in self.tickets:
            w.u64(t.ticket_serial).str_(t.subject_id)
            t.interval.encode(w)
            w.bytes_(t.target_digest).u64(t.issued_at)
        w.u32(len(self.exchanges))
        for e in self.exchanges:
            w.u64(e.native_serial).str_(e.foreign_issuer).u64(e.foreign_serial)
            e.interval.encode(w)
        return w.take()

    @staticmethod
    def from_bytes(data: bytes) -> "LtcaSnapshot":
        r = Reader(data)
        expect_tag(r, TAG_LTCA_SNAPSHOT)
        ca_id = r.str_()
        subjects = tuple(
            LtcaSubjectRow(r.str_(), r.u64(), r.bool_()) for _ in range(r.count())
        )
        tickets = tuple(
            LtcaTicketRow(r.u64(), r.str_(), Interval.decode(r), r.bytes_(), r.u64())
            for _ in range(r.count())
        )
        exchanges = tuple(
            LtcaExchangeRow(r.u64(), r.str_(), r.u64(), Interval.decode(r))
            for _ in range(r.count())
        )
        r.expect_eof()
        return LtcaSnapshot(ca_id, subjects, tickets, exchanges)


@dataclass(frozen=True)
class PcaUsageRow:
    ticket_issuer: str
    ticket_serial: int
    ticket_interval: Interval
    used_at: int
    pseudonym_serials: tuple[int, ...]


@dataclass(frozen=True)
class PcaPseudonymRow:
    serial: int
    ticket_issuer: str
    ticket_serial: int
    interval: Interval
    public_key: bytes


@dataclass(frozen=True)
class PcaSnapshot:
    ca_id: str
    usage: tuple[PcaUsageRow, ...]
    pseudonyms: tuple[PcaPseudonymRow, ...]
    revoked: tuple[int, ...]
    crl_sequence: int

    def to_bytes(self) -> bytes:
        w = Writer().raw(TAG_PCA_SNAPSHOT).str_(self.ca_id)
        w.u32(len(self.usage))
        for u in self.usage:
            w.str_(u.ticket_issuer).u64(u.ticket_serial)
            u.ticket_interval.encode(w)
            w.u64(u.used_at)
            w.u32(len(u.pseudonym_serials))
            for s in u.pseudonym_serials:
                w.u64(s)
        w.u32(len(self.pseudonyms))
        for p in self.pseudonyms:
            w.u64(p.serial).str_(p.ticket_issuer).u64(p.ticket_serial)
            p.interval.encode(w)
            w.bytes_(p.public_key)
        w.u32(len(self.revoked))
        for s in self.revoked:
            w.u64(s)
        w.u64(self.crl_sequence)
        return w.take()

    @staticmethod
    def from_bytes(data: bytes) -> "PcaSnapshot":
        r = Reader(data)
        expect_tag(r, TAG_PCA_SNAPSHOT)
        ca_id = r.str_()
        usage = tuple(
            PcaUsageRow(
                r.str_(),
                r.u64(),
                Interval.decode(r),
                r.u64(),
                tuple(r.u64() for _ in range(r.count())),
            )
            for _ in range(r.count())
        )
        pseudonyms = tuple(
            PcaPseudonymRow(r.u64(), r.str_(), r.u64(), Interval.decode(r), r.bytes_())
            for _ in range(r.count())
        )
        revoked = tuple(r.u64() for _ in range(r.count()))
        crl_sequence = r.u64()
        r.expect_eof()
        return PcaSnapshot(ca_id, usage, pseudonyms, revoked, crl_sequence)
