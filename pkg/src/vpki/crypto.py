"""Deterministic cryptographic primitives: ECDSA P-256, SHA-256, randomness.

Keys are exchanged as raw encodings: public keys as 65-byte X9.62 uncompressed
points, private keys as 32-byte big-endian scalars. Signatures are fixed-width
64-byte r||s. Signing uses RFC 6979 deterministic nonces so identical inputs
always produce identical signatures.
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from functools import lru_cache

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.asymmetric import ec
from cryptography.hazmat.primitives.asymmetric.utils import (
    decode_dss_signature,
    encode_dss_signature,
)
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .codec import Writer

CURVE = ec.SECP256R1()
# order of the P-256 group
_ORDER = 0xFFFFFFFF00000000FFFFFFFFFFFFFFFFBCE6FAADA7179E84F3B9CAC2FC632551
_SIG_ALGO = ec.ECDSA(hashes.SHA256(), deterministic_signing=True)

PUBLIC_KEY_LEN = 65
SIGNATURE_LEN = 64
RND_LEN = 32


@dataclass(frozen=True)
class KeyPair:
    """P-256 keypair; the private scalar never appears in any encoded message."""

    public: bytes
    private: bytes


def _load_private(private: bytes) -> ec.EllipticCurvePrivateKey:
    return ec.derive_private_key(int.from_bytes(private, "big"), CURVE)


@lru_cache(maxsize=8192)
def _load_public(public: bytes) -> ec.EllipticCurvePublicKey:
    return ec.EllipticCurvePublicKey.from_encoded_point(CURVE, public)


def _export(key: ec.EllipticCurvePrivateKey) -> KeyPair:
    pub = key.public_key().public_bytes(Encoding.X962, PublicFormat.UncompressedPoint)
    priv = key.private_numbers().private_value.to_bytes(32, "big")
    return KeyPair(public=pub, private=priv)


def generate_keypair(rng_seed: bytes | None = None) -> KeyPair:
    """Generate a P-256 keypair.

    `rng_seed` (32 bytes) derives the key deterministically and exists for
    reproducible tests only — never use seeded generation in production.
    """
    if rng_seed is None:
        return _export(ec.generate_private_key(CURVE))
    if len(rng_seed) != 32:
        raise ValueError("rng_seed must be exactly 32 bytes")
    counter = 0
    while True:
        digest = hashlib.sha256(rng_seed + counter.to_bytes(4, "big")).digest()
        scalar = int.from_bytes(digest, "big")
        if 1 <= scalar < _ORDER:
            return _export(ec.derive_private_key(scalar, CURVE))
        counter += 1


def sign(private: bytes, msg: bytes) -> bytes:
    """Sign msg, returning the fixed-width 64-byte r||s signature."""
    der = _load_private(private).sign(msg, _SIG_ALGO)
    r, s = decode_dss_signature(der)
    return r.to_bytes(32, "big") + s.to_bytes(32, "big")


def verify(public: bytes, msg: bytes, sig: bytes) -> bool:
    """True iff sig was produced over msg by the matching private key.

    Malformed inputs yield False, never an exception.
    """
    if len(sig) != SIGNATURE_LEN or len(public) != PUBLIC_KEY_LEN:
        return False
    try:
        key = _load_public(public)
        r = int.from_bytes(sig[:32], "big")
        s = int.from_bytes(sig[32:], "big")
        key.verify(encode_dss_signature(r, s), msg, ec.ECDSA(hashes.SHA256()))
        return True
    except (InvalidSignature, ValueError):
        return False


class Signer:
    """Caches the loaded private key for services that sign on every request."""

    def __init__(self, keypair: KeyPair):
        self.keypair = keypair
        self._key = _load_private(keypair.private)

    @property
    def public(self) -> bytes:
        return self.keypair.public

    def sign(self, msg: bytes) -> bytes:
        der = self._key.sign(msg, _SIG_ALGO)
        r, s = decode_dss_signature(der)
        return r.to_bytes(32, "big") + s.to_bytes(32, "big")


def hash_bind(ca_id: str, rnd: bytes) -> bytes:
    """SHA-256 digest committing to a target authority without revealing it.

    Computed over canonical-encode(ca_id) || rnd, i.e. a 4-byte big-endian
    length prefix, the UTF-8 id bytes, then the 32 random bytes.
    """
    if not ca_id:
        raise ValueError("ca_id must be nonempty")
    if len(rnd) != RND_LEN:
        raise ValueError("rnd must be exactly 32 bytes")
    encoded = Writer().str_(ca_id).take()
    return hashlib.sha256(encoded + rnd).digest()


def fresh_rnd() -> bytes:
    """32 bytes of cryptographic randomness; drawn fresh per ticket request."""
    return os.urandom(RND_LEN)
