"""Resolution authority.

Orchestrates pseudonym-to-identity resolution (pseudonym -> ticket at the
issuing PCA, ticket -> subject at the issuing LTCA, plus one extra hop via
the home LTCA for exchanged tickets) and the associated revocations. Keeps
no standing pseudonym/identity table — only an append-only audit log of the
resolutions it actually performed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

from . import wire
from .channel import ChannelAuthMode, ClientChannel, Peer
from .errors import ErrorCode, ProtocolError
from .messages import (
    ErrorBody,
    MapPseudonymRequest,
    MapPseudonymResponse,
    ResolveRequest,
    ResolveResponse,
    ResolveOutcome,
    ResolveTicketRequest,
    ResolveTicketResponse,
    TicketOrigin,
    decode_body,
)
from .service import BaseService
from .store import KvStore

Connector = Callable[[str, ChannelAuthMode], ClientChannel]


@dataclass(frozen=True)
class ResolutionRequest:
    issuer: str
    serial: int
    justification: str
    revoke_pseudonyms: bool = False
    revoke_ltc: bool = False

    def __post_init__(self):
        if not self.justification:
            raise ValueError("resolution requires a nonempty justification")


@dataclass(frozen=True)
class AuditLogEntry:
    request: ResolutionRequest
    steps: tuple[str, ...]
    outcome: str
    timestamp: int


class RaService(BaseService):
    def __init__(self, server_id, keypair, trust, connector: Connector,
                 policy=None, clock=None, store=None):
        super().__init__(server_id, keypair, trust, policy, clock)
        self.connector = connector
        self.store = store or KvStore()
        self._audit: list[AuditLogEntry] = []
        self._handlers = {wire.MsgType.RESOLVE_REQ: self._on_resolve_req}

    def _call(self, server_id: str, msg_type: int, body) -> object:
        channel = self.connector(server_id, ChannelAuthMode.MUTUAL)
        env = wire.new_request(msg_type, body.encode(), self.clock())
        resp = channel.request(env)
        decoded = decode_body(resp.msg_type, resp.payload)
        if isinstance(decoded, ErrorBody):
            raise ProtocolError(decoded.error_code(), decoded.message)
        return decoded

    def resolve(self, req: ResolutionRequest) -> tuple[ResolveResponse, AuditLogEntry]:
        """Resolve a pseudonym to its owning subject and home authority.

        If the home LTCA of an exchanged ticket is unreachable, returns a
        PARTIAL outcome carrying the foreign pointer instead of failing
        opaquely. Every step taken is recorded in the audit log.
        """
        steps: list[str] = []
        try:
            response = self._resolve_steps(req, steps)
            self._log(req, steps, f"{response.outcome.name}:{response.subject_id}")
            return response, self._audit[-1]
        except ProtocolError as e:
            self._log(req, steps, f"error:{e.code.name}")
            raise

    def _resolve_steps(self, req: ResolutionRequest, steps: list[str]) -> ResolveResponse:
        mapped: MapPseudonymResponse = self._call(
            req.issuer,
            wire.MsgType.MAP_PSNYM_REQ,
            MapPseudonymRequest(req.serial, revoke=req.revoke_pseudonyms, now=self.clock()),
        )
        steps.append(f"map_pseudonym@{req.issuer}")
        if req.revoke_pseudonyms:
            steps.append(f"revoke_for_ticket@{req.issuer}:{mapped.revoked_count}")

        first: ResolveTicketResponse = self._call(
            mapped.ticket_issuer,
            wire.MsgType.RESOLVE_TKT_REQ,
            ResolveTicketRequest(mapped.ticket_serial, revoke_ltc=req.revoke_ltc),
        )
        steps.append(f"resolve_ticket@{mapped.ticket_issuer}")
        if first.kind is TicketOrigin.SUBJECT:
            return ResolveResponse(ResolveOutcome.RESOLVED, first.subject_id, mapped.ticket_issuer)

        # exchanged ticket: one additional step at the home LTCA
        try:
            second: ResolveTicketResponse = self._call(
                first.home_ca,
                wire.MsgType.RESOLVE_TKT_REQ,
                ResolveTicketRequest(first.foreign_serial, revoke_ltc=req.revoke_ltc),
            )
        except (ConnectionError, OSError):
            steps.append(f"unreachable@{first.home_ca}")
            return ResolveResponse(
                ResolveOutcome.PARTIAL, "", first.home_ca, foreign_serial=first.foreign_serial
            )
        steps.append(f"resolve_ticket@{first.home_ca}")
        if second.kind is not TicketOrigin.SUBJECT:
            raise ProtocolError(ErrorCode.UNKNOWN_TICKET, "home LTCA returned another pointer")
        return ResolveResponse(ResolveOutcome.RESOLVED, second.subject_id, first.home_ca)

    def _log(self, req: ResolutionRequest, steps: list[str], outcome: str) -> None:
        entry = AuditLogEntry(req, tuple(steps), outcome, self.clock())
        with self._lock:
            self._audit.append(entry)
            n = len(self._audit)
            self.store.put(
                f"audit:{n:012d}",
                json.dumps(
                    {
                        "issuer": req.issuer,
                        "serial": req.serial,
                        "justification": req.justification,
                        "steps": list(steps),
                        "outcome": outcome,
                        "timestamp": entry.timestamp,
                    }
                ).encode(),
            )

    def audit_log(self, since: int = 0) -> list[AuditLogEntry]:
        with self._lock:
            return [e for e in self._audit if e.timestamp >= since]

    def _on_resolve_req(self, body: ResolveRequest, peer: Peer, env) -> ResolveResponse:
        try:
            req = ResolutionRequest(
                body.issuer, body.serial, body.justification,
                body.revoke_pseudonyms, body.revoke_ltc,
            )
        except ValueError as e:
            raise ProtocolError(ErrorCode.BAD_REQUEST, str(e))
        response, _ = self.resolve(req)
        return response
