"""Credential data types (LTC, ticket, pseudonym, CSR, CRL) and chain validation.

Every credential is immutable and carries its canonical encoding rules here:
`signing_bytes()` is the byte string covered by the issuer's signature (a
4-byte type tag plus all fields preceding the signature, in declaration
order), `to_bytes()`/`from_bytes()` include the signature so credentials can
be shipped on the wire or stored on disk.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

from . import crypto
from .codec import Reader, Writer, expect_tag
from .errors import DecodeError

TAG_LTC = b"VLTC"
TAG_TICKET = b"VTKT"
TAG_PSEUDONYM = b"VPSN"
TAG_CSR = b"VCSR"
TAG_CRL = b"VCRL"
TAG_TRUST = b"VTRS"


class Role(IntEnum):
    RCA = 0
    LTCA = 1
    PCA = 2
    RA = 3


class ValidationResult(IntEnum):
    VALID = 0
    EXPIRED = 1
    NOT_YET_VALID = 2
    UNKNOWN_ISSUER = 3
    BAD_SIGNATURE = 4


@dataclass(frozen=True, order=True)
class Interval:
    """Half-open time interval [start, end) in integer seconds."""

    start: int
    end: int

    def __post_init__(self):
        if self.start >= self.end:
            raise ValueError(f"empty interval [{self.start}, {self.end})")

    def contains(self, t: int) -> bool:
        return self.start <= t < self.end

    def overlaps(self, other: "Interval") -> bool:
        return max(self.start, other.start) < min(self.end, other.end)

    def contains_interval(self, other: "Interval") -> bool:
        return self.start <= other.start and other.end <= self.end

    def encode(self, w: Writer) -> None:
        w.u64(self.start).u64(self.end)

    @staticmethod
    def decode(r: Reader) -> "Interval":
        start, end = r.u64(), r.u64()
        if start >= end:
            raise DecodeError(f"empty interval [{start}, {end})")
        return Interval(start, end)


@dataclass(frozen=True)
class LongTermCertificate:
    serial: int
    subject_id: str
    public_key: bytes
    validity: Interval
    issuer: str
    signature: bytes

    def signing_bytes(self) -> bytes:
        w = Writer().raw(TAG_LTC)
        w.u64(self.serial).str_(self.subject_id).bytes_(self.public_key)
        self.validity.encode(w)
        w.str_(self.issuer)
        return w.take()

    def to_bytes(self) -> bytes:
        return Writer().raw(self.signing_bytes()).bytes_(self.signature).take()

    @staticmethod
    def decode(r: Reader) -> "LongTermCertificate":
        expect_tag(r, TAG_LTC)
        return LongTermCertificate(
            serial=r.u64(),
            subject_id=r.str_(),
            public_key=r.bytes_(),
            validity=Interval.decode(r),
            issuer=r.str_(),
            signature=r.bytes_(),
        )

    @staticmethod
    def from_bytes(data: bytes) -> "LongTermCertificate":
        r = Reader(data)
        out = LongTermCertificate.decode(r)
        r.expect_eof()
        return out


@dataclass(frozen=True)
class Ticket:
    """Anonymized, single-use authorization for one pseudonym acquisition.

    `target_digest` commits to the target authority without revealing it;
    `interval` is the grid-aligned coverage period; `tkt_expiry` is the
    latest time the ticket may be presented. Native and foreign tickets are
    structurally identical.
    """

    serial: int
    target_digest: bytes
    interval: Interval
    tkt_expiry: int
    issuer: str
    signature: bytes

    def signing_bytes(self) -> bytes:
        w = Writer().raw(TAG_TICKET)
        w.u64(self.serial).bytes_(self.target_digest)
        self.interval.encode(w)
        w.u64(self.tkt_expiry).str_(self.issuer)
        return w.take()

    def to_bytes(self) -> bytes:
        return Writer().raw(self.signing_bytes()).bytes_(self.signature).take()

    @staticmethod
    def decode(r: Reader) -> "Ticket":
        expect_tag(r, TAG_TICKET)
        return Ticket(
            serial=r.u64(),
            target_digest=r.bytes_(),
            interval=Interval.decode(r),
            tkt_expiry=r.u64(),
            issuer=r.str_(),
            signature=r.bytes_(),
        )

    @staticmethod
    def from_bytes(data: bytes) -> "Ticket":
        r = Reader(data)
        out = Ticket.decode(r)
        r.expect_eof()
        return out


@dataclass(frozen=True)
class Pseudonym:
    """Short-lived certificate over a vehicle-generated key; carries no
    vehicle-identifying field."""

    serial: int
    public_key: bytes
    interval: Interval
    issuer: str
    signature: bytes

    def signing_bytes(self) -> bytes:
        w = Writer().raw(TAG_PSEUDONYM)
        w.u64(self.serial).bytes_(self.public_key)
        self.interval.encode(w)
        w.str_(self.issuer)
        return w.take()

    def to_bytes(self) -> bytes:
        return Writer().raw(self.signing_bytes()).bytes_(self.signature).take()

    @staticmethod
    def decode(r: Reader) -> "Pseudonym":
        expect_tag(r, TAG_PSEUDONYM)
        return Pseudonym(
            serial=r.u64(),
            public_key=r.bytes_(),
            interval=Interval.decode(r),
            issuer=r.str_(),
            signature=r.bytes_(),
        )

    @staticmethod
    def from_bytes(data: bytes) -> "Pseudonym":
        r = Reader(data)
        out = Pseudonym.decode(r)
        r.expect_eof()
        return out


@dataclass(frozen=True)
class Csr:
    """Certificate signing request: a public key plus proof of possession
    (self-signature over the key's canonical encoding)."""

    public_key: bytes
    pop_signature: bytes

    def pop_bytes(self) -> bytes:
        return Writer().raw(TAG_CSR).bytes_(self.public_key).take()

    def to_bytes(self) -> bytes:
        return Writer().raw(self.pop_bytes()).bytes_(self.pop_signature).take()

    @staticmethod
    def decode(r: Reader) -> "Csr":
        expect_tag(r, TAG_CSR)
        return Csr(public_key=r.bytes_(), pop_signature=r.bytes_())

    @staticmethod
    def from_bytes(data: bytes) -> "Csr":
        r = Reader(data)
        out = Csr.decode(r)
        r.expect_eof()
        return out


def make_csr(kp: crypto.KeyPair) -> Csr:
    csr = Csr(public_key=kp.public, pop_signature=b"")
    return Csr(public_key=kp.public, pop_signature=crypto.sign(kp.private, csr.pop_bytes()))


def verify_pop(csr: Csr) -> bool:
    return crypto.verify(csr.public_key, csr.pop_bytes(), csr.pop_signature)


@dataclass(frozen=True)
class RevocationList:
    issuer: str
    sequence: int
    issued_at: int
    entries: tuple[int, ...]
    signature: bytes

    def signing_bytes(self) -> bytes:
        w = Writer().raw(TAG_CRL)
        w.str_(self.issuer).u64(self.sequence).u64(self.issued_at)
        w.u32(len(self.entries))
        for serial in self.entries:
            w.u64(serial)
        return w.take()

    def to_bytes(self) -> bytes:
        return Writer().raw(self.signing_bytes()).bytes_(self.signature).take()

    @staticmethod
    def decode(r: Reader) -> "RevocationList":
        expect_tag(r, TAG_CRL)
        issuer = r.str_()
        sequence = r.u64()
        issued_at = r.u64()
        entries = tuple(r.u64() for _ in range(r.count()))
        return RevocationList(issuer, sequence, issued_at, entries, r.bytes_())

    @staticmethod
    def from_bytes(data: bytes) -> "RevocationList":
        r = Reader(data)
        out = RevocationList.decode(r)
        r.expect_eof()
        return out


@dataclass(frozen=True)
class TrustEntry:
    ca_id: str
    public_key: bytes
    role: Role
    parent: str | None


class TrustStore:
    """Read-mostly map of authority id to (public key, role, parent).

    Every non-RCA entry must have a parent chain terminating at an RCA;
    `check()` enforces this. Updates copy-on-write via `with_entry`.
    """

    def __init__(self, entries: dict[str, TrustEntry] | None = None):
        self._entries: dict[str, TrustEntry] = dict(entries or {})

    def add(self, entry: TrustEntry) -> None:
        self._entries[entry.ca_id] = entry

    def with_entry(self, entry: TrustEntry) -> "TrustStore":
        out = TrustStore(self._entries)
        out.add(entry)
        return out

    def get(self, ca_id: str) -> TrustEntry | None:
        return self._entries.get(ca_id)

    def ids(self) -> list[str]:
        return sorted(self._entries)

    def check(self) -> None:
        for entry in self._entries.values():
            seen = set()
            cur = entry
            while cur.role is not Role.RCA:
                if cur.ca_id in seen:
                    raise ValueError(f"trust chain cycle at {cur.ca_id}")
                seen.add(cur.ca_id)
                if cur.parent is None or cur.parent not in self._entries:
                    raise ValueError(f"{entry.ca_id}: chain does not reach an RCA")
                cur = self._entries[cur.parent]

    def to_bytes(self) -> bytes:
        w = Writer().raw(TAG_TRUST)
        w.u32(len(self._entries))
        for ca_id in sorted(self._entries):
            e = self._entries[ca_id]
            w.str_(e.ca_id).bytes_(e.public_key).u8(int(e.role))
            w.bool_(e.parent is not None)
            if e.parent is not None:
                w.str_(e.parent)
        return w.take()

    @staticmethod
    def from_bytes(data: bytes) -> "TrustStore":
        r = Reader(data)
        expect_tag(r, TAG_TRUST)
        store = TrustStore()
        for _ in range(r.count()):
            ca_id = r.str_()
            public_key = r.bytes_()
            role = Role(r.u8())
            parent = r.str_() if r.bool_() else None
            store.add(TrustEntry(ca_id, public_key, role, parent))
        r.expect_eof()
        store.check()
        return store


def validate_chain(
    cert: LongTermCertificate | Ticket | Pseudonym,
    trust: TrustStore,
    now: int,
) -> ValidationResult:
    """Validate issuer resolution, signature, and temporal validity.

    For tickets the presentation deadline (`tkt_expiry`) is enforced on top
    of the coverage interval.
    """
    entry = trust.get(cert.issuer)
    if entry is None:
        return ValidationResult.UNKNOWN_ISSUER
    if not crypto.verify(entry.public_key, cert.signing_bytes(), cert.signature):
        return ValidationResult.BAD_SIGNATURE
    interval = cert.validity if isinstance(cert, LongTermCertificate) else cert.interval
    if now < interval.start:
        return ValidationResult.NOT_YET_VALID
    if now >= interval.end:
        return ValidationResult.EXPIRED
    if isinstance(cert, Ticket) and now > cert.tkt_expiry:
        return ValidationResult.EXPIRED
    return ValidationResult.VALID
