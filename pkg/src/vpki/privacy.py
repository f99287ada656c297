"""Eavesdropper and collusion analysis.

An eavesdropper sees only pseudonym serials and lifetimes. With flexible
lifetimes, a pseudonym expiring at t followed by a unique pseudonym starting
at t links the two trivially; with domain-fixed lifetimes every vehicle
switches on the same grid instants and the candidate set at each switch is
the whole active fleet. `link_by_lifetime` mounts exactly that attack and
`score_linkage` measures it against held-out ground truth.

`collusion_closure` computes what sets of honest-but-curious authorities can
jointly derive from their own persistent tables (snapshots), by joining on
the keys they legitimately share (ticket serials).
"""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field

from .credentials import Interval
from .snapshots import (
    TAG_LTCA_SNAPSHOT,
    TAG_PCA_SNAPSHOT,
    LtcaSnapshot,
    PcaSnapshot,
)

ObsKey = tuple[str, int]  # (issuer, serial)


class MissingGroundTruth(ValueError):
    pass


class SnapshotMissing(ValueError):
    pass


@dataclass(frozen=True)
class Observation:
    issuer: str
    serial: int
    interval: Interval

    @property
    def key(self) -> ObsKey:
        return (self.issuer, self.serial)


@dataclass
class Transcript:
    """What the eavesdropper collected, plus held-out truth for scoring."""

    observations: list[Observation]
    ground_truth: dict[ObsKey, str] = field(default_factory=dict)

    def __post_init__(self):
        self.observations.sort(key=lambda o: (o.interval.start, o.issuer, o.serial))

    def to_json(self) -> str:
        return json.dumps(
            {
                "observations": [
                    {
                        "issuer": o.issuer,
                        "serial": o.serial,
                        "start": o.interval.start,
                        "end": o.interval.end,
                    }
                    for o in self.observations
                ],
                "ground_truth": {f"{k[0]}:{k[1]}": v for k, v in self.ground_truth.items()},
            }
        )

    @staticmethod
    def from_json(text: str) -> "Transcript":
        raw = json.loads(text)
        obs = [
            Observation(o["issuer"], int(o["serial"]), Interval(int(o["start"]), int(o["end"])))
            for o in raw.get("observations", [])
        ]
        gt = {}
        for key, subject in raw.get("ground_truth", {}).items():
            issuer, serial = key.rsplit(":", 1)
            gt[(issuer, int(serial))] = subject
        return Transcript(obs, gt)


def link_by_lifetime(transcript: Transcript) -> list[list[ObsKey]]:
    """Partition observations into chains by successive-lifetime linking.

    A pseudonym ending at t is linked to the pseudonym starting at t iff that
    successor is unique among all observations (and the ending pseudonym is
    itself the unique one expiring then — otherwise the hand-off is ambiguous
    and the chain terminates). Deterministic.
    """
    starts: dict[int, list[Observation]] = defaultdict(list)
    ends: dict[int, list[Observation]] = defaultdict(list)
    for o in transcript.observations:
        starts[o.interval.start].append(o)
        ends[o.interval.end].append(o)

    successor: dict[ObsKey, ObsKey] = {}
    has_pred: set[ObsKey] = set()
    for t, ending in ends.items():
        beginning = starts.get(t, [])
        if len(ending) == 1 and len(beginning) == 1:
            successor[ending[0].key] = beginning[0].key
            has_pred.add(beginning[0].key)

    chains: list[list[ObsKey]] = []
    for o in transcript.observations:
        if o.key in has_pred:
            continue
        chain = [o.key]
        while chain[-1] in successor:
            chain.append(successor[chain[-1]])
        chains.append(chain)
    return chains


@dataclass(frozen=True)
class LinkageScore:
    precision: float
    recall: float
    mean_anonymity_set: float
    proposed_links: int
    correct_links: int
    true_pairs: int


def score_linkage(chains: list[list[ObsKey]], transcript: Transcript) -> LinkageScore:
    """Precision/recall of proposed links against the vehicle's true timeline,
    plus the mean anonymity set over pseudonym-switch instants (number of
    pseudonyms starting at each instant where a switch happens)."""
    if not transcript.ground_truth:
        raise MissingGroundTruth("transcript carries no ground truth")

    proposed: set[tuple[ObsKey, ObsKey]] = set()
    for chain in chains:
        for a, b in zip(chain, chain[1:]):
            proposed.add((a, b))

    by_subject: dict[str, list[Observation]] = defaultdict(list)
    for o in transcript.observations:
        subject = transcript.ground_truth.get(o.key)
        if subject is None:
            raise MissingGroundTruth(f"no owner for {o.key}")
        by_subject[subject].append(o)
    true_pairs: set[tuple[ObsKey, ObsKey]] = set()
    for obs in by_subject.values():
        obs.sort(key=lambda o: o.interval.start)
        for a, b in zip(obs, obs[1:]):
            true_pairs.add((a.key, b.key))

    correct = proposed & true_pairs
    precision = len(correct) / len(proposed) if proposed else 1.0
    recall = len(correct) / len(true_pairs) if true_pairs else 1.0

    starts: dict[int, int] = defaultdict(int)
    ends: dict[int, int] = defaultdict(int)
    for o in transcript.observations:
        starts[o.interval.start] += 1
        ends[o.interval.end] += 1
    switch_sizes = [n for t, n in starts.items() if ends.get(t, 0) > 0]
    mean_anonymity = sum(switch_sizes) / len(switch_sizes) if switch_sizes else 0.0

    return LinkageScore(
        precision=precision,
        recall=recall,
        mean_anonymity_set=mean_anonymity,
        proposed_links=len(proposed),
        correct_links=len(correct),
        true_pairs=len(true_pairs),
    )


@dataclass
class KnowledgeSet:
    """Facts derivable from the union of the named entities' own tables."""

    entities: frozenset[str]
    vehicle_ids: frozenset[str]
    ticket_windows: frozenset[tuple[str, str, int, int]]  # (ltca, subject, start, end)
    request_groups: frozenset[frozenset[ObsKey]]
    id_pseudonym_links: frozenset[tuple[str, str, int]]  # (subject, pca, serial)

    @property
    def links_derivable(self) -> bool:
        return bool(self.id_pseudonym_links)

    def contains(self, other: "KnowledgeSet") -> bool:
        return (
            other.vehicle_ids <= self.vehicle_ids
            and other.ticket_windows <= self.ticket_windows
            and other.request_groups <= self.request_groups
            and other.id_pseudonym_links <= self.id_pseudonym_links
        )


def parse_snapshot(data: bytes):
    tag = bytes(data[:4])
    if tag == TAG_LTCA_SNAPSHOT:
        return LtcaSnapshot.from_bytes(data)
    if tag == TAG_PCA_SNAPSHOT:
        return PcaSnapshot.from_bytes(data)
    raise SnapshotMissing(f"unrecognized snapshot tag {tag!r}")


def collusion_closure(entities: set[str], snapshots: dict[str, bytes]) -> KnowledgeSet:
    """Join the colluding entities' tables on the keys they share.

    An LTCA contributes (subject, ticket window) rows and, for exchanged
    tickets, the native-to-foreign serial mapping; a PCA contributes ticket
    usage and the pseudonyms per ticket. A vehicle-id/pseudonym link is
    derivable iff the pseudonym's ticket chains back to a subject-bearing
    ledger row entirely inside the colluding set.
    """
    ltcas: list[LtcaSnapshot] = []
    pcas: list[PcaSnapshot] = []
    for name in sorted(entities):
        if name not in snapshots:
            raise SnapshotMissing(f"no snapshot for entity {name}")
        snap = parse_snapshot(snapshots[name])
        if isinstance(snap, LtcaSnapshot):
            ltcas.append(snap)
        else:
            pcas.append(snap)

    vehicle_ids: set[str] = set()
    ticket_windows: set[tuple[str, str, int, int]] = set()
    ticket_to_subject: dict[tuple[str, int], str] = {}
    exchange: dict[tuple[str, int], tuple[str, int]] = {}
    for snap in ltcas:
        for s in snap.subjects:
            vehicle_ids.add(s.subject_id)
        for t in snap.tickets:
            ticket_to_subject[(snap.ca_id, t.ticket_serial)] = t.subject_id
            ticket_windows.add((snap.ca_id, t.subject_id, t.interval.start, t.interval.end))
        for e in snap.exchanges:
            exchange[(snap.ca_id, e.native_serial)] = (e.foreign_issuer, e.foreign_serial)

    request_groups: set[frozenset[ObsKey]] = set()
    links: set[tuple[str, str, int]] = set()
    for snap in pcas:
        for row in snap.usage:
            if row.pseudonym_serials:
                request_groups.add(frozenset((snap.ca_id, s) for s in row.pseudonym_serials))
        for p in snap.pseudonyms:
            ticket = (p.ticket_issuer, p.ticket_serial)
            if ticket in exchange:
                ticket = exchange[ticket]
            subject = ticket_to_subject.get(ticket)
            if subject is not None:
                links.add((subject, snap.ca_id, p.serial))

    return KnowledgeSet(
        entities=frozenset(entities),
        vehicle_ids=frozenset(vehicle_ids),
        ticket_windows=frozenset(ticket_windows),
        request_groups=frozenset(request_groups),
        id_pseudonym_links=frozenset(links),
    )
