"""Minimal directory service (the deployment's LDAP stand-in).

Serves CA certificates and LTCA/PCA trust associations from a signed
manifest loaded at startup; read-only afterwards. Responses are signed by
the directory key so clients can reject altered listings.
"""

from __future__ import annotations

from . import wire
from .channel import Peer
from .codec import Reader, Writer, expect_tag
from .credentials import TrustStore
from .crypto import KeyPair, Signer, verify
from .errors import DecodeError, ErrorCode, ProtocolError
from .messages import DirectoryEntry, DirectoryRequest, DirectoryResponse
from .service import BaseService

TAG_MANIFEST = b"VDIR"


def build_manifest(entries: list[DirectoryEntry], signer: Signer) -> bytes:
    w = Writer().raw(TAG_MANIFEST)
    w.u32(len(entries))
    for e in entries:
        e.encode(w)
    core = w.take()
    return Writer().raw(core).bytes_(signer.sign(core)).take()


def load_manifest(data: bytes, directory_public: bytes) -> list[DirectoryEntry]:
    r = Reader(data)
    expect_tag(r, TAG_MANIFEST)
    entries = [DirectoryEntry.decode(r) for _ in range(r.count())]
    sig = r.bytes_()
    r.expect_eof()
    core = data[: len(data) - 4 - len(sig)]
    if not verify(directory_public, core, sig):
        raise DecodeError("manifest signature does not verify")
    known = {e.ca_id for e in entries}
    for e in entries:
        for a in e.associations:
            if a not in known:
                raise DecodeError(f"{e.ca_id} references unknown association {a}")
    return entries


class DirectoryService(BaseService):
    def __init__(self, server_id: str, keypair: KeyPair, trust: TrustStore,
                 manifest: bytes, policy=None, clock=None):
        super().__init__(server_id, keypair, trust, policy, clock)
        self._entries = {e.ca_id: e for e in load_manifest(manifest, keypair.public)}
        self._handlers = {wire.MsgType.DIR_REQ: self._on_dir_req}

    def lookup(self, ca_id: str) -> DirectoryEntry:
        entry = self._entries.get(ca_id)
        if entry is None:
            raise ProtocolError(ErrorCode.NOT_FOUND, ca_id)
        return entry

    def list_by_domain(self, domain: str, role: int | None = None) -> list[DirectoryEntry]:
        return [
            e for e in self._entries.values()
            if e.domain == domain and (role is None or e.role == role)
        ]

    def _on_dir_req(self, body: DirectoryRequest, peer: Peer, env) -> DirectoryResponse:
        if body.ca_id is not None:
            entries = (self.lookup(body.ca_id),)
        else:
            entries = tuple(self.list_by_domain(body.domain or "", body.role))
        unsigned = DirectoryResponse(entries)
        return DirectoryResponse(entries, self.signer.sign(unsigned.entries_bytes()))
