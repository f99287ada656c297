"""Domain policy: ticket-interval and pseudonym-lifetime grids.

A domain pins one ticket interval length (gamma) and one pseudonym lifetime
(tau, dividing gamma) for all participants. Aligning every issued credential
to these shared grids is what removes lifetime-based distinguishability
between vehicles.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .credentials import Interval
from .errors import ErrorCode, ProtocolError


@dataclass(frozen=True)
class DomainPolicy:
    ticket_interval_seconds: int = 3600
    pseudonym_lifetime_seconds: int = 300
    grid_epoch: int = 0
    pop_failure_threshold: int = 3
    clock_skew_seconds: int = 300
    max_batch: int = 1000

    def __post_init__(self):
        if self.ticket_interval_seconds <= 0 or self.pseudonym_lifetime_seconds <= 0:
            raise ValueError("grid periods must be positive")
        if self.ticket_interval_seconds % self.pseudonym_lifetime_seconds != 0:
            raise ValueError("ticket interval must be a multiple of the pseudonym lifetime")
        if self.pop_failure_threshold < 1:
            raise ValueError("pop_failure_threshold must be >= 1")

    @staticmethod
    def from_json(text: str) -> "DomainPolicy":
        raw = json.loads(text)
        fields = {
            k: int(raw[k])
            for k in (
                "ticket_interval_seconds",
                "pseudonym_lifetime_seconds",
                "grid_epoch",
                "pop_failure_threshold",
                "clock_skew_seconds",
                "max_batch",
            )
            if k in raw
        }
        return DomainPolicy(**fields)

    def to_json(self) -> str:
        return json.dumps(
            {
                "ticket_interval_seconds": self.ticket_interval_seconds,
                "pseudonym_lifetime_seconds": self.pseudonym_lifetime_seconds,
                "grid_epoch": self.grid_epoch,
                "pop_failure_threshold": self.pop_failure_threshold,
                "clock_skew_seconds": self.clock_skew_seconds,
                "max_batch": self.max_batch,
            },
            indent=2,
        )


def snap_ticket_interval(requested: Interval, gamma: int, epoch: int = 0) -> Interval:
    """Snap a requested interval outward to the ticket grid.

    Floor the start, ceil the end, so the issued ticket always covers the
    request and every ticket in the domain has identical shape.
    """
    start = ((requested.start - epoch) // gamma) * gamma + epoch
    end = -((-(requested.end - epoch)) // gamma) * gamma + epoch
    return Interval(start, end)


def lifetime_slots(requested: Interval, tau: int, epoch: int = 0) -> list[Interval]:
    """Enumerate the pseudonym-lifetime grid slots intersecting a request.

    Returns the consecutive slots [k*tau, (k+1)*tau) (relative to the grid
    epoch) within the tau-closure of the request that intersect it; a slot
    touched only partially is included whole. Identical for every vehicle at
    the same wall-clock time.
    """
    if requested.start < epoch:
        raise ProtocolError(ErrorCode.EMPTY_REQUEST, "request precedes grid epoch")
    first = (requested.start - epoch) // tau
    last = -((-(requested.end - epoch)) // tau)  # ceil division
    slots = [
        Interval(epoch + k * tau, epoch + (k + 1) * tau)
        for k in range(first, last)
        if epoch + k * tau < requested.end and epoch + (k + 1) * tau > requested.start
    ]
    if not slots:
        raise ProtocolError(ErrorCode.EMPTY_REQUEST, "no lifetime slot intersects the request")
    return slots
