"""Request/response bodies carried in envelope payloads (canonical-encoded)."""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

from .codec import Reader, Writer
from .credentials import Csr, LongTermCertificate, Pseudonym, RevocationList, Ticket
from .errors import DecodeError, ErrorCode
from .wire import MsgType


@dataclass(frozen=True)
class TicketRequest:
    """Ticket acquisition at the home LTCA. The digest commits to the target
    (a PCA, or a foreign LTCA when roaming) without revealing it; the server
    cannot distinguish the two cases."""

    target_digest: bytes
    t_start: int
    t_end: int
    ltc: LongTermCertificate

    def encode(self) -> bytes:
        w = Writer().bytes_(self.target_digest).u64(self.t_start).u64(self.t_end)
        w.raw(self.ltc.to_bytes())
        return w.take()

    @staticmethod
    def decode(r: Reader) -> "TicketRequest":
        return TicketRequest(r.bytes_(), r.u64(), r.u64(), LongTermCertificate.decode(r))


@dataclass(frozen=True)
class TicketResponse:
    ticket: Ticket

    def encode(self) -> bytes:
        return self.ticket.to_bytes()

    @staticmethod
    def decode(r: Reader) -> "TicketResponse":
        return TicketResponse(Ticket.decode(r))


@dataclass(frozen=True)
class PseudonymRequest:
    rnd: bytes
    t_start: int
    t_end: int
    ticket: Ticket
    csrs: tuple[Csr, ...]

    def encode(self) -> bytes:
        w = Writer().bytes_(self.rnd).u64(self.t_start).u64(self.t_end)
        w.raw(self.ticket.to_bytes())
        w.u32(len(self.csrs))
        for csr in self.csrs:
            w.raw(csr.to_bytes())
        return w.take()

    @staticmethod
    def decode(r: Reader) -> "PseudonymRequest":
        rnd = r.bytes_()
        t_start, t_end = r.u64(), r.u64()
        ticket = Ticket.decode(r)
        csrs = tuple(Csr.decode(r) for _ in range(r.count()))
        return PseudonymRequest(rnd, t_start, t_end, ticket, csrs)


@dataclass(frozen=True)
class PseudonymItem:
    """Per-CSR result: either an issued pseudonym or an item-level error."""

    pseudonym: Pseudonym | None = None
    error: int = 0

    def encode(self, w: Writer) -> None:
        if self.pseudonym is not None:
            w.u8(0).raw(self.pseudonym.to_bytes())
        else:
            w.u8(1).u16(self.error)

    @staticmethod
    def decode(r: Reader) -> "PseudonymItem":
        tag = r.u8()
        if tag == 0:
            return PseudonymItem(pseudonym=Pseudonym.decode(r))
        if tag == 1:
            return PseudonymItem(error=r.u16())
        raise DecodeError(f"bad pseudonym item tag {tag}")


@dataclass(frozen=True)
class PseudonymResponse:
    items: tuple[PseudonymItem, ...]

    def encode(self) -> bytes:
        w = Writer().u32(len(self.items))
        for item in self.items:
            item.encode(w)
        return w.take()

    @staticmethod
    def decode(r: Reader) -> "PseudonymResponse":
        return PseudonymResponse(tuple(PseudonymItem.decode(r) for _ in range(r.count())))

    def pseudonyms(self) -> list[Pseudonym]:
        return [i.pseudonym for i in self.items if i.pseudonym is not None]


@dataclass(frozen=True)
class ExchangeRequest:
    """Foreign-ticket exchange at a foreign LTCA: present an f-tkt (instead of
    an LTC) plus the rnd that opens its digest; receive a native ticket bound
    to a new hidden target."""

    foreign_ticket: Ticket
    rnd: bytes
    target_digest: bytes
    t_start: int
    t_end: int

    def encode(self) -> bytes:
        w = Writer().raw(self.foreign_ticket.to_bytes())
        w.bytes_(self.rnd).bytes_(self.target_digest).u64(self.t_start).u64(self.t_end)
        return w.take()

    @staticmethod
    def decode(r: Reader) -> "ExchangeRequest":
        return ExchangeRequest(Ticket.decode(r), r.bytes_(), r.bytes_(), r.u64(), r.u64())


@dataclass(frozen=True)
class ExchangeResponse:
    ticket: Ticket

    def encode(self) -> bytes:
        return self.ticket.to_bytes()

    @staticmethod
    def decode(r: Reader) -> "ExchangeResponse":
        return ExchangeResponse(Ticket.decode(r))


@dataclass(frozen=True)
class CrlRequest:
    since_sequence: int | None = None

    def encode(self) -> bytes:
        w = Writer().bool_(self.since_sequence is not None)
        if self.since_sequence is not None:
            w.u64(self.since_sequence)
        return w.take()

    @staticmethod
    def decode(r: Reader) -> "CrlRequest":
        return CrlRequest(r.u64() if r.bool_() else None)


@dataclass(frozen=True)
class CrlResponse:
    is_delta: bool
    crl: RevocationList

    def encode(self) -> bytes:
        return Writer().bool_(self.is_delta).raw(self.crl.to_bytes()).take()

    @staticmethod
    def decode(r: Reader) -> "CrlResponse":
        return CrlResponse(r.bool_(), RevocationList.decode(r))


class OcspStatus(IntEnum):
    GOOD = 0
    REVOKED = 1
    UNKNOWN = 2


@dataclass(frozen=True)
class OcspRequest:
    """Status query authenticated with a current valid pseudonym; the proof
    signs the (serial, nonce, timestamp) tuple of this request."""

    serial: int
    requester: Pseudonym
    proof: bytes

    @staticmethod
    def proof_bytes(serial: int, nonce: int, timestamp: int) -> bytes:
        return Writer().raw(b"VOCS").u64(serial).u64(nonce).u64(timestamp).take()

    def encode(self) -> bytes:
        w = Writer().u64(self.serial).raw(self.requester.to_bytes()).bytes_(self.proof)
        return w.take()

    @staticmethod
    def decode(r: Reader) -> "OcspRequest":
        return OcspRequest(r.u64(), Pseudonym.decode(r), r.bytes_())


@dataclass(frozen=True)
class OcspResponse:
    status: OcspStatus

    def encode(self) -> bytes:
        return Writer().u8(int(self.status)).take()

    @staticmethod
    def decode(r: Reader) -> "OcspResponse":
        return OcspResponse(OcspStatus(r.u8()))


@dataclass(frozen=True)
class ResolveRequest:
    issuer: str
    serial: int
    justification: str
    revoke_pseudonyms: bool = False
    revoke_ltc: bool = False

    def encode(self) -> bytes:
        w = Writer().str_(self.issuer).u64(self.serial).str_(self.justification)
        w.bool_(self.revoke_pseudonyms).bool_(self.revoke_ltc)
        return w.take()

    @staticmethod
    def decode(r: Reader) -> "ResolveRequest":
        return ResolveRequest(r.str_(), r.u64(), r.str_(), r.bool_(), r.bool_())


class ResolveOutcome(IntEnum):
    RESOLVED = 0
    PARTIAL = 1  # foreign pointer returned, home LTCA unreachable


@dataclass(frozen=True)
class ResolveResponse:
    outcome: ResolveOutcome
    subject_id: str
    home_ca: str
    foreign_serial: int = 0

    def encode(self) -> bytes:
        w = Writer().u8(int(self.outcome)).str_(self.subject_id).str_(self.home_ca)
        w.u64(self.foreign_serial)
        return w.take()

    @staticmethod
    def decode(r: Reader) -> "ResolveResponse":
        return ResolveResponse(ResolveOutcome(r.u8()), r.str_(), r.str_(), r.u64())


@dataclass(frozen=True)
class MapPseudonymRequest:
    serial: int
    revoke: bool = False
    now: int = 0

    def encode(self) -> bytes:
        return Writer().u64(self.serial).bool_(self.revoke).u64(self.now).take()

    @staticmethod
    def decode(r: Reader) -> "MapPseudonymRequest":
        return MapPseudonymRequest(r.u64(), r.bool_(), r.u64())


@dataclass(frozen=True)
class MapPseudonymResponse:
    ticket_issuer: str
    ticket_serial: int
    revoked_count: int = 0

    def encode(self) -> bytes:
        return Writer().str_(self.ticket_issuer).u64(self.ticket_serial).u32(self.revoked_count).take()

    @staticmethod
    def decode(r: Reader) -> "MapPseudonymResponse":
        return MapPseudonymResponse(r.str_(), r.u64(), r.u32())


@dataclass(frozen=True)
class ResolveTicketRequest:
    ticket_serial: int
    revoke_ltc: bool = False

    def encode(self) -> bytes:
        return Writer().u64(self.ticket_serial).bool_(self.revoke_ltc).take()

    @staticmethod
    def decode(r: Reader) -> "ResolveTicketRequest":
        return ResolveTicketRequest(r.u64(), r.bool_())


class TicketOrigin(IntEnum):
    SUBJECT = 0  # natively issued: subject_id set
    FOREIGN = 1  # exchanged: pointer to the home LTCA


@dataclass(frozen=True)
class ResolveTicketResponse:
    kind: TicketOrigin
    subject_id: str = ""
    home_ca: str = ""
    foreign_serial: int = 0

    def encode(self) -> bytes:
        w = Writer().u8(int(self.kind)).str_(self.subject_id).str_(self.home_ca)
        w.u64(self.foreign_serial)
        return w.take()

    @staticmethod
    def decode(r: Reader) -> "ResolveTicketResponse":
        return ResolveTicketResponse(TicketOrigin(r.u8()), r.str_(), r.str_(), r.u64())


@dataclass(frozen=True)
class DirectoryEntry:
    ca_id: str
    role: int
    certificate: bytes
    domain: str
    associations: tuple[str, ...] = ()

    def encode(self, w: Writer) -> None:
        w.str_(self.ca_id).u8(self.role).bytes_(self.certificate).str_(self.domain)
        w.u32(len(self.associations))
        for a in self.associations:
            w.str_(a)

    @staticmethod
    def decode(r: Reader) -> "DirectoryEntry":
        return DirectoryEntry(
            ca_id=r.str_(),
            role=r.u8(),
            certificate=r.bytes_(),
            domain=r.str_(),
            associations=tuple(r.str_() for _ in range(r.count())),
        )


@dataclass(frozen=True)
class DirectoryRequest:
    """Lookup by id, or list by (domain, optional role)."""

    ca_id: str | None = None
    domain: str | None = None
    role: int | None = None

    def encode(self) -> bytes:
        w = Writer()
        if self.ca_id is not None:
            w.u8(0).str_(self.ca_id)
        else:
            w.u8(1).str_(self.domain or "")
            w.bool_(self.role is not None)
            if self.role is not None:
                w.u8(self.role)
        return w.take()

    @staticmethod
    def decode(r: Reader) -> "DirectoryRequest":
        kind = r.u8()
        if kind == 0:
            return DirectoryRequest(ca_id=r.str_())
        if kind == 1:
            domain = r.str_()
            role = r.u8() if r.bool_() else None
            return DirectoryRequest(domain=domain, role=role)
        raise DecodeError(f"bad directory query kind {kind}")


@dataclass(frozen=True)
class DirectoryResponse:
    """Entries plus the directory's signature over their encoding; clients
    reject unsigned or altered listings."""

    entries: tuple[DirectoryEntry, ...]
    signature: bytes = b""

    def entries_bytes(self) -> bytes:
        w = Writer().u32(len(self.entries))
        for e in self.entries:
            e.encode(w)
        return w.take()

    def encode(self) -> bytes:
        return Writer().raw(self.entries_bytes()).bytes_(self.signature).take()

    @staticmethod
    def decode(r: Reader) -> "DirectoryResponse":
        entries = tuple(DirectoryEntry.decode(r) for _ in range(r.count()))
        return DirectoryResponse(entries, r.bytes_())


@dataclass(frozen=True)
class RegisterRequest:
    csr: Csr
    subject_id: str
    valid_from: int
    valid_to: int

    def encode(self) -> bytes:
        w = Writer().raw(self.csr.to_bytes()).str_(self.subject_id)
        w.u64(self.valid_from).u64(self.valid_to)
        return w.take()

    @staticmethod
    def decode(r: Reader) -> "RegisterRequest":
        return RegisterRequest(Csr.decode(r), r.str_(), r.u64(), r.u64())


@dataclass(frozen=True)
class RegisterResponse:
    ltc: LongTermCertificate

    def encode(self) -> bytes:
        return self.ltc.to_bytes()

    @staticmethod
    def decode(r: Reader) -> "RegisterResponse":
        return RegisterResponse(LongTermCertificate.decode(r))


@dataclass(frozen=True)
class UpdateRequest:
    old_ltc: LongTermCertificate
    csr: Csr

    def encode(self) -> bytes:
        return Writer().raw(self.old_ltc.to_bytes()).raw(self.csr.to_bytes()).take()

    @staticmethod
    def decode(r: Reader) -> "UpdateRequest":
        return UpdateRequest(LongTermCertificate.decode(r), Csr.decode(r))


@dataclass(frozen=True)
class UpdateResponse:
    ltc: LongTermCertificate

    def encode(self) -> bytes:
        return self.ltc.to_bytes()

    @staticmethod
    def decode(r: Reader) -> "UpdateResponse":
        return UpdateResponse(LongTermCertificate.decode(r))


@dataclass(frozen=True)
class ErrorBody:
    code: int
    message: str = ""

    def encode(self) -> bytes:
        return Writer().u16(self.code).str_(self.message).take()

    @staticmethod
    def decode(r: Reader) -> "ErrorBody":
        return ErrorBody(r.u16(), r.str_())

    def error_code(self) -> ErrorCode:
        try:
            return ErrorCode(self.code)
        except ValueError:
            return ErrorCode.INTERNAL


_DECODERS = {
    MsgType.TICKET_REQ: TicketRequest.decode,
    MsgType.TICKET_RES: TicketResponse.decode,
    MsgType.PSNYM_REQ: PseudonymRequest.decode,
    MsgType.PSNYM_RES: PseudonymResponse.decode,
    MsgType.FTKT_REQ: ExchangeRequest.decode,
    MsgType.FTKT_RES: ExchangeResponse.decode,
    MsgType.CRL_REQ: CrlRequest.decode,
    MsgType.CRL_RES: CrlResponse.decode,
    MsgType.OCSP_REQ: OcspRequest.decode,
    MsgType.OCSP_RES: OcspResponse.decode,
    MsgType.RESOLVE_REQ: ResolveRequest.decode,
    MsgType.RESOLVE_RES: ResolveResponse.decode,
    MsgType.MAP_PSNYM_REQ: MapPseudonymRequest.decode,
    MsgType.MAP_PSNYM_RES: MapPseudonymResponse.decode,
    MsgType.RESOLVE_TKT_REQ: ResolveTicketRequest.decode,
    MsgType.RESOLVE_TKT_RES: ResolveTicketResponse.decode,
    MsgType.DIR_REQ: DirectoryRequest.decode,
    MsgType.DIR_RES: DirectoryResponse.decode,
    MsgType.REG_REQ: RegisterRequest.decode,
    MsgType.REG_RES: RegisterResponse.decode,
    MsgType.UPD_REQ: UpdateRequest.decode,
    MsgType.UPD_RES: UpdateResponse.decode,
    MsgType.ERR: ErrorBody.decode,
}


def decode_body(msg_type: int, payload: bytes):
    try:
        decoder = _DECODERS[MsgType(msg_type)]
    except (KeyError, ValueError):
        raise DecodeError(f"unknown message type 0x{msg_type:04x}")
    r = Reader(payload)
    body = decoder(r)
    r.expect_eof()
    return body
