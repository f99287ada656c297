"""Multi-domain pseudonymous credential infrastructure for vehicular networks."""

from .credentials import (
    Csr,
    Interval,
    LongTermCertificate,
    Pseudonym,
    RevocationList,
    Role,
    Ticket,
    TrustEntry,
    TrustStore,
    ValidationResult,
    make_csr,
    validate_chain,
    verify_pop,
)
from .crypto import KeyPair, fresh_rnd, generate_keypair, hash_bind, sign, verify
from .errors import DecodeError, ErrorCode, FrameError, ProtocolError
from .policy import DomainPolicy, lifetime_slots, snap_ticket_interval

__all__ = [
    "Csr",
    "DecodeError",
    "DomainPolicy",
    "ErrorCode",
    "FrameError",
    "Interval",
    "KeyPair",
    "LongTermCertificate",
    "ProtocolError",
    "Pseudonym",
    "RevocationList",
    "Role",
    "Ticket",
    "TrustEntry",
    "TrustStore",
    "ValidationResult",
    "fresh_rnd",
    "generate_keypair",
    "hash_bind",
    "lifetime_slots",
    "make_csr",
    "sign",
    "snap_ticket_interval",
    "validate_chain",
    "verify",
    "verify_pop",
]
