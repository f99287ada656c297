"""Scenario-driven fleet emulation: workloads, DDoS ramps, crash failover,
invariant monitors, and metrics export.

Desk-scale reproduction of the evaluation scenarios: an open-loop fleet
(Poisson arrivals per vehicle) acquires tickets and pseudonyms window by
window, optionally roaming into a second domain; attacker streams inject
well-framed requests with fake credentials; fault schedules hard-kill PCA
replica processes behind the balancer. After every run a set of global
monitors scans for Sybil overlaps, pool disjointness, resolution totality
and CRL monotonicity — any hit is a reported violation.
"""

from __future__ import annotations

import json
import logging
import os
import random
import signal
import subprocess
import sys
import tempfile
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import crypto, wire
from .channel import (
    AuthorityCredential,
    ChannelAuthMode,
    ServiceHost,
)
from .codec import Writer
from .credentials import Interval, Role, TrustEntry, TrustStore
from .directory import DirectoryService, build_manifest
from .errors import ProtocolError
from .ltca import LtcaService
from .messages import DirectoryEntry, PseudonymRequest, TicketRequest
from .netserver import Balancer, TcpChannel, TcpServiceServer, free_port, wait_for_port
from .pca import PcaService
from .policy import DomainPolicy
from .privacy import Observation, Transcript
from .ra import RaService, ResolutionRequest
from .store import KvStore
from .vehicle import Vehicle

log = logging.getLogger(__name__)


class ScenarioInvalid(ValueError):
    pass


class ServiceSpawnFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class PcaSpec:
    ca_id: str
    replicas: int = 1


@dataclass(frozen=True)
class DomainSpec:
    name: str
    ltca: str
    pcas: tuple[PcaSpec, ...]


@dataclass(frozen=True)
class AttackerSpec:
    count: int = 0
    requests_per_hour: float = 360.0
    kind: str = "fake_ltc"  # or "fake_ticket"
    ramp: tuple[int, ...] | None = None
    stage_seconds: float = 4.0


@dataclass(frozen=True)
class FaultSpec:
    server: str  # "<pca-id>#<replica>" or a plain server id
    at_seconds: float


@dataclass(frozen=True)
class Scenario:
    name: str = "scenario"
    seed: int = 0
    duration_seconds: float = 10.0
    vehicles: int = 10
    requests_per_hour: float = 360.0
    pseudonyms_per_request: int = 5
    roam_fraction: float = 0.0
    domains: tuple[DomainSpec, ...] = (
        DomainSpec("home", "ltca-home", (PcaSpec("pca-home-1"),)),
    )
    policy: DomainPolicy = field(default_factory=lambda: DomainPolicy(60, 10))
    attackers: AttackerSpec | None = None
    faults: tuple[FaultSpec, ...] = ()
    transport: str = "inproc"  # or "tcp"
    resolution_sample_fraction: float = 0.01

    def validate(self) -> None:
        if self.duration_seconds <= 0:
            raise ScenarioInvalid("duration must be positive")
        if self.vehicles < 0 or self.requests_per_hour < 0:
            raise ScenarioInvalid("counts and rates must be non-negative")
        if not self.domains:
            raise ScenarioInvalid("at least one domain required")
        if self.roam_fraction > 0 and len(self.domains) < 2:
            raise ScenarioInvalid("roaming requires a second domain")
        if not 0 <= self.roam_fraction <= 1:
            raise ScenarioInvalid("roam_fraction must be in [0,1]")
        slots = self.policy.ticket_interval_seconds // self.policy.pseudonym_lifetime_seconds
        if not 1 <= self.pseudonyms_per_request <= slots:
            raise ScenarioInvalid(
                f"pseudonyms_per_request must be 1..{slots} for this policy grid"
            )
        if self.transport not in ("inproc", "tcp"):
            raise ScenarioInvalid(f"unknown transport {self.transport}")
        ids = [d.ltca for d in self.domains] + [p.ca_id for d in self.domains for p in d.pcas]
        if len(set(ids)) != len(ids):
            raise ScenarioInvalid("duplicate authority ids in topology")

    @staticmethod
    def from_json(text: str) -> "Scenario":
        raw = json.loads(text)
        try:
            domains = tuple(
                DomainSpec(
                    d["name"],
                    d["ltca"],
                    tuple(PcaSpec(p["id"], int(p.get("replicas", 1))) for p in d["pcas"]),
                )
                for d in raw.get("domains", [])
            )
            attackers = None
            if raw.get("attackers"):
                a = raw["attackers"]
                attackers = AttackerSpec(
                    count=int(a.get("count", 0)),
                    requests_per_hour=float(a.get("requests_per_hour", 360.0)),
                    kind=a.get("kind", "fake_ltc"),
                    ramp=tuple(int(x) for x in a["ramp"]) if a.get("ramp") else None,
                    stage_seconds=float(a.get("stage_seconds", 4.0)),
                )
            scenario = Scenario(
                name=raw.get("name", "scenario"),
                seed=int(raw.get("seed", 0)),
                duration_seconds=float(raw.get("duration_seconds", 10.0)),
                vehicles=int(raw.get("vehicles", 10)),
                requests_per_hour=float(raw.get("requests_per_hour", 360.0)),
                pseudonyms_per_request=int(raw.get("pseudonyms_per_request", 5)),
                roam_fraction=float(raw.get("roam_fraction", 0.0)),
                domains=domains or Scenario().domains,
                policy=DomainPolicy.from_json(json.dumps(raw.get("policy", {}))),
                attackers=attackers,
                faults=tuple(
                    FaultSpec(f["server"], float(f["at_seconds"]))
                    for f in raw.get("faults", [])
                ),
                transport=raw.get("transport", "inproc"),
                resolution_sample_fraction=float(raw.get("resolution_sample_fraction", 0.01)),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ScenarioInvalid(f"malformed scenario: {e}") from e
        scenario.validate()
        return scenario


@dataclass(frozen=True)
class MetricRecord:
    op: str
    server: str
    start_us: int
    end_us: int
    outcome: str

    def duration_ms(self) -> float:
        return (self.end_us - self.start_us) / 1000.0


@dataclass(frozen=True)
class Summary:
    count: int
    mean_ms: float
    p50_ms: float
    p90_ms: float
    p99_ms: float
    cdf: tuple[tuple[float, float], ...]  # (probability, latency_ms) at 1% steps


def summarize(durations_ms: list[float]) -> Summary:
    if not durations_ms:
        return Summary(0, 0.0, 0.0, 0.0, 0.0, ())
    data = sorted(durations_ms)
    n = len(data)

    def q(p: float) -> float:
        return data[min(n - 1, int(p * n))]

    cdf = tuple((i / 100.0, q(i / 100.0) if i < 100 else data[-1]) for i in range(1, 101))
    return Summary(n, sum(data) / n, q(0.50), q(0.90), q(0.99), cdf)


@dataclass
class MetricsReport:
    scenario_name: str
    records: list[MetricRecord]
    violations: list[str]
    summaries: dict[str, Summary]
    request_log: list[tuple]
    extra: dict = field(default_factory=dict)

    def ok(self) -> bool:
        return not self.violations


# -- deployment ---------------------------------------------------------------


@dataclass
class SimVehicle:
    vehicle: Vehicle
    home_domain: DomainSpec
    lock: threading.Lock = field(default_factory=threading.Lock)


class Deployment:
    """A running topology: trust material, services, vehicles, transports."""

    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.scenario = scenario
        self.t0 = int(time.time())
        self.policy = DomainPolicy(
            ticket_interval_seconds=scenario.policy.ticket_interval_seconds,
            pseudonym_lifetime_seconds=scenario.policy.pseudonym_lifetime_seconds,
            grid_epoch=self.t0,
            pop_failure_threshold=scenario.policy.pop_failure_threshold,
            clock_skew_seconds=scenario.policy.clock_skew_seconds,
            max_batch=scenario.policy.max_batch,
        )
        self.keys: dict[str, crypto.KeyPair] = {}
        self.trust = TrustStore()
        self.host: ServiceHost | None = None
        self.ltcas: dict[str, LtcaService] = {}
        self.pcas: dict[str, PcaService] = {}  # inproc: one service per PCA id
        self.ra: RaService | None = None
        self.directory: DirectoryService | None = None
        self.vehicles: list[SimVehicle] = []
        self.ra_id = "ra-1"
        self.directory_id = "dir-1"
        # tcp mode
        self.workdir: str | None = None
        self.processes: dict[str, subprocess.Popen] = {}
        self.addresses: dict[str, str] = {}
        self.balancers: dict[str, Balancer] = {}
        self._servers: list[TcpServiceServer] = []

        self._build_trust()
        if scenario.transport == "inproc":
            self._build_inproc()
        else:
            self._build_tcp()
        self._register_vehicles()

    # trust material ------------------------------------------------------

    def _authority_ids(self) -> list[tuple[str, Role]]:
        ids: list[tuple[str, Role]] = []
        for d in self.scenario.domains:
            ids.append((d.ltca, Role.LTCA))
            for p in d.pcas:
                ids.append((p.ca_id, Role.PCA))
        ids.append((self.ra_id, Role.RA))
        return ids

    def _build_trust(self) -> None:
        self.keys["rca-1"] = crypto.generate_keypair()
        self.trust.add(TrustEntry("rca-1", self.keys["rca-1"].public, Role.RCA, None))
        for ca_id, role in self._authority_ids():
            self.keys[ca_id] = crypto.generate_keypair()
            self.trust.add(TrustEntry(ca_id, self.keys[ca_id].public, role, "rca-1"))
        self.keys[self.directory_id] = crypto.generate_keypair()
        self.trust.check()

    def _manifest(self) -> bytes:
        entries = []
        for d in self.scenario.domains:
            pca_ids = tuple(p.ca_id for p in d.pcas)
            entries.append(
                DirectoryEntry(d.ltca, int(Role.LTCA), self.keys[d.ltca].public, d.name, pca_ids)
            )
            for p in d.pcas:
                entries.append(
                    DirectoryEntry(p.ca_id, int(Role.PCA), self.keys[p.ca_id].public, d.name, (d.ltca,))
                )
        return build_manifest(entries, crypto.Signer(self.keys[self.directory_id]))

    # in-process topology ----------------------------------------------------

    def _build_inproc(self) -> None:
        self.host = ServiceHost(self.trust)
        for d in self.scenario.domains:
            svc = LtcaService(d.ltca, self.keys[d.ltca], self.trust, self.policy)
            self.ltcas[d.ltca] = svc
            self.host.register(svc)
            for p in d.pcas:
                pca = PcaService(p.ca_id, self.keys[p.ca_id], self.trust, self.policy)
                self.pcas[p.ca_id] = pca
                self.host.register(pca)
        self.directory = DirectoryService(
            self.directory_id, self.keys[self.directory_id], self.trust, self._manifest(),
            self.policy,
        )
        self.host.register(self.directory, pinned_public=self.keys[self.directory_id].public)
        ra_cred = AuthorityCredential(self.ra_id, self.keys[self.ra_id])
        self.ra = RaService(
            self.ra_id, self.keys[self.ra_id], self.trust,
            lambda sid, mode: self.host.connect(sid, mode, ra_cred, self.ra_id),
            self.policy,
        )
        self.host.register(self.ra)

    def connector_for(self, label: str):
        if self.scenario.transport == "inproc":
            return lambda sid, mode, cred=None: self.host.connect(sid, mode, cred, label)
        return lambda sid, mode, cred=None: TcpChannel(
            self.addresses[sid], sid, self.trust.get(sid).public_key, mode, cred
        )

    # tcp topology -------------------------------------------------------------

    def _write_key(self, ca_id: str) -> str:
        kp = self.keys[ca_id]
        path = os.path.join(self.workdir, f"{ca_id}.key")
        with open(path, "wb") as f:
            f.write(Writer().bytes_(kp.private).bytes_(kp.public).take())
        return path

    def _spawn(self, kind: str, ca_id: str, instance: str, state: bool = True) -> str:
        port = free_port()
        address = f"127.0.0.1:{port}"
        args = [
            sys.executable, "-m", "vpki.cli", kind,
            "--id", ca_id,
            "--listen", address,
            "--policy", os.path.join(self.workdir, "policy.json"),
            "--trust", os.path.join(self.workdir, "trust.bin"),
            "--key", self._write_key(ca_id),
        ]
        if state:
            args += ["--state", os.path.join(self.workdir, f"{instance}.db")]
        proc = subprocess.Popen(args, stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)
        self.processes[instance] = proc
        if not wait_for_port(address, timeout=10):
            raise ServiceSpawnFailure(f"{instance} did not come up on {address}")
        return address

    def _build_tcp(self) -> None:
        self.workdir = tempfile.mkdtemp(prefix="vpki-sim-")
        with open(os.path.join(self.workdir, "trust.bin"), "wb") as f:
            f.write(self.trust.to_bytes())
        with open(os.path.join(self.workdir, "policy.json"), "w") as f:
            f.write(self.policy.to_json())
        for d in self.scenario.domains:
            self.addresses[d.ltca] = self._spawn("ltca", d.ltca, d.ltca)
            for p in d.pcas:
                if p.replicas <= 1:
                    self.addresses[p.ca_id] = self._spawn("pca", p.ca_id, f"{p.ca_id}#0")
                else:
                    backends = [
                        # replicas share identity and key but keep independent
                        # volatile state; the balancer pins tickets by serial
                        self._spawn("pca", p.ca_id, f"{p.ca_id}#{i}", state=False)
                        for i in range(p.replicas)
                    ]
                    balancer = Balancer(backends)
                    balancer.start()
                    self.balancers[p.ca_id] = balancer
                    self.addresses[p.ca_id] = balancer.address
        # the RA runs in-harness, talking TCP to the spawned servers
        ra_cred = AuthorityCredential(self.ra_id, self.keys[self.ra_id])
        self.ra = RaService(
            self.ra_id, self.keys[self.ra_id], self.trust,
            lambda sid, mode: TcpChannel(
                self.addresses[sid], sid, self.trust.get(sid).public_key, mode, ra_cred
            ),
            self.policy,
        )

    def kill(self, instance: str) -> None:
        proc = self.processes.get(instance)
        if proc is None:
            if self.host is not None:
                self.host.set_down(instance)
            return
        proc.send_signal(signal.SIGKILL)
        proc.wait(timeout=5)
        log.info("killed %s", instance)

    def stop(self) -> None:
        for balancer in self.balancers.values():
            balancer.stop()
        for proc in self.processes.values():
            if proc.poll() is None:
                proc.terminate()
        for proc in self.processes.values():
            try:
                proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                proc.kill()

    # fleet ----------------------------------------------------------------------

    def _register_vehicles(self) -> None:
        validity = Interval(self.t0 - 3600, self.t0 + 10 * 365 * 24 * 3600)
        for i in range(self.scenario.vehicles):
            domain = self.scenario.domains[i % len(self.scenario.domains)]
            subject = f"veh-{i:05d}"
            v = Vehicle(
                subject, domain.ltca, self.connector_for(subject), self.trust,
                pseudonym_lifetime=self.policy.pseudonym_lifetime_seconds,
                grid_epoch=self.policy.grid_epoch,
            )
            v.register(validity)
            self.vehicles.append(SimVehicle(v, domain))

    # post-run views -----------------------------------------------------------------

    def ltca_services_for_scan(self) -> list[LtcaService]:
        if self.scenario.transport == "inproc":
            return list(self.ltcas.values())
        out = []
        for d in self.scenario.domains:
            path = os.path.join(self.workdir, f"{d.ltca}.db")
            if os.path.exists(path):
                out.append(
                    LtcaService(d.ltca, self.keys[d.ltca], self.trust, self.policy,
                                store=KvStore(path))
                )
        return out

    def pca_services_for_scan(self) -> list[PcaService]:
        if self.scenario.transport == "inproc":
            return list(self.pcas.values())
        out = []
        for d in self.scenario.domains:
            for p in d.pcas:
                path = os.path.join(self.workdir, f"{p.ca_id}#0.db")
                if os.path.exists(path):
                    out.append(
                        PcaService(p.ca_id, self.keys[p.ca_id], self.trust, self.policy,
                                   store=KvStore(path))
                    )
        return out

    def build_transcript(self) -> Transcript:
        observations = []
        ground_truth = {}
        for sv in self.vehicles:
            for entry in sv.vehicle.pool:
                p = entry.pseudonym
                observations.append(Observation(p.issuer, p.serial, p.interval))
                ground_truth[(p.issuer, p.serial)] = sv.vehicle.subject_id
        return Transcript(observations, ground_truth)

    def export_snapshots(self, out_dir: str) -> dict[str, bytes]:
        os.makedirs(out_dir, exist_ok=True)
        snaps: dict[str, bytes] = {}
        for svc in self.ltca_services_for_scan() + self.pca_services_for_scan():
            data = svc.export_snapshot()
            snaps[svc.server_id] = data
            with open(os.path.join(out_dir, f"{svc.server_id}.snap"), "wb") as f:
                f.write(data)
        return snaps


# -- attacker streams ---------------------------------------------------------------


def attacker_workload(
    kind: str,
    rate: float,
    ltca_id: str,
    policy: DomainPolicy,
    now: int,
    rng: random.Random,
):
    """Yield (hello, frame) byte pairs for well-framed requests with invalid
    credentials, at the given aggregate rate (requests/second, 0 = empty).

    fake_ltc: ticket requests carrying an LTC whose issuer signature is
    garbage. fake_ticket: pseudonym requests carrying a forged ticket. Every
    request costs the server a signature verification and must be rejected.
    """
    if rate <= 0:
        return
    from .channel import build_client_hello, VehicleCredential
    from .credentials import Csr, LongTermCertificate, Ticket

    kp = crypto.generate_keypair(rng.randbytes(32))
    gamma = policy.ticket_interval_seconds
    w0 = ((now - policy.grid_epoch) // gamma) * gamma + policy.grid_epoch
    if kind == "fake_ltc":
        # a well-formed LTC under the attacker's own key, with a forged
        # issuer signature: the channel proof verifies, the server pays a
        # verify, then rejects the unregistered subject
        fake_ltc = LongTermCertificate(
            rng.getrandbits(63), "bogus", kp.public, Interval(now - 1000, now + 10_000_000),
            ltca_id, rng.randbytes(64),
        )
        body = TicketRequest(rng.randbytes(32), w0, w0 + gamma, fake_ltc).encode()
        msg_type = wire.MsgType.TICKET_REQ
        cred = VehicleCredential(fake_ltc, kp)

        def make() -> tuple[bytes, bytes]:
            frame_bytes = wire.frame(wire.new_request(msg_type, body, int(time.time())))
            hello = build_client_hello(ChannelAuthMode.MUTUAL, cred, frame_bytes)
            return hello, frame_bytes

    elif kind == "fake_ticket":
        # forged ticket signature: rejected after one chain verification
        fake_tkt = Ticket(
            rng.getrandbits(63), rng.randbytes(32), Interval(w0, w0 + gamma), w0 + gamma,
            ltca_id, rng.randbytes(64),
        )
        csr = Csr(kp.public, rng.randbytes(64))
        body = PseudonymRequest(rng.randbytes(32), w0, w0 + gamma, fake_tkt, (csr,)).encode()
        anon_hello = build_client_hello(ChannelAuthMode.SERVER_ONLY, None, b"")

        def make() -> tuple[bytes, bytes]:
            frame_bytes = wire.frame(
                wire.new_request(wire.MsgType.PSNYM_REQ, body, int(time.time()))
            )
            return anon_hello, frame_bytes

    else:
        raise ScenarioInvalid(f"unknown attacker kind {kind}")

    while True:
        yield make()


# -- workload generation ---------------------------------------------------------------


@dataclass(frozen=True)
class _Event:
    at: float
    vehicle: int
    window: int
    kind: str  # "acquire" | "roam"
    ltca: str
    pca: str


def generate_events(scenario: Scenario) -> list[_Event]:
    """Deterministic per-seed request schedule: per-vehicle Poisson arrivals,
    at most one acquisition per ticket window (extra arrivals in an already
    covered window are dropped — a vehicle never races itself). Arrivals in
    the final moments of a window defer to the next window's start so an
    acquisition never straddles the expiry of its own ticket."""
    gamma = scenario.policy.ticket_interval_seconds
    margin = min(2.0, gamma * 0.2)
    events: list[_Event] = []
    for vi in range(scenario.vehicles):
        rng = random.Random(f"{scenario.seed}:veh:{vi}")
        rate = scenario.requests_per_hour / 3600.0
        if rate <= 0:
            continue
        home = scenario.domains[vi % len(scenario.domains)]
        foreign_choices = [d for d in scenario.domains if d.name != home.name]
        used: set[int] = set()
        t = rng.expovariate(rate)
        while t < scenario.duration_seconds:
            at, window = t, int(t // gamma)
            if at - window * gamma > gamma - margin:
                window += 1
                at = float(window * gamma)
            if window not in used and at < scenario.duration_seconds:
                used.add(window)
                roam = bool(foreign_choices) and rng.random() < scenario.roam_fraction
                if roam:
                    fd = foreign_choices[rng.randrange(len(foreign_choices))]
                    pca = fd.pcas[rng.randrange(len(fd.pcas))].ca_id
                    events.append(_Event(at, vi, window, "roam", fd.ltca, pca))
                else:
                    pca = home.pcas[rng.randrange(len(home.pcas))].ca_id
                    events.append(_Event(at, vi, window, "acquire", home.ltca, pca))
            t += rng.expovariate(rate)
    events.sort(key=lambda e: (e.at, e.vehicle))
    return events


class _Metrics:
    """Per-thread append, merged at the end of the run."""

    def __init__(self):
        self._local = threading.local()
        self._all: list[list[MetricRecord]] = []
        self._lock = threading.Lock()

    def add(self, op: str, server: str, start_us: int, end_us: int, outcome: str) -> None:
        bucket = getattr(self._local, "bucket", None)
        if bucket is None:
            bucket = []
            self._local.bucket = bucket
            with self._lock:
                self._all.append(bucket)
        bucket.append(MetricRecord(op, server, start_us, end_us, outcome))

    def merged(self) -> list[MetricRecord]:
        with self._lock:
            return sorted(
                (r for bucket in self._all for r in bucket), key=lambda r: r.start_us
            )


def _now_us() -> int:
    return time.monotonic_ns() // 1000


def _execute_event(
    deployment: Deployment,
    ev: _Event,
    metrics: _Metrics,
    request_log: list,
    log_lock: threading.Lock,
    window_base: int = 0,
) -> None:
    scenario = deployment.scenario
    policy = deployment.policy
    gamma = policy.ticket_interval_seconds
    tau = policy.pseudonym_lifetime_seconds
    sv = deployment.vehicles[ev.vehicle]
    epoch = policy.grid_epoch
    wstart = epoch + (window_base + ev.window) * gamma
    wend = wstart + gamma
    slot0 = wstart + (int(ev.at - ev.window * gamma) // tau) * tau
    n = min(scenario.pseudonyms_per_request, (wend - slot0) // tau)
    sub = Interval(slot0, slot0 + n * tau)
    window = Interval(wstart, wend)
    outcome = "ok"
    with sv.lock:
        try:
            if ev.kind == "roam":
                start = _now_us()
                sv.vehicle.roam(ev.ltca, ev.pca, window, n, sub)
                metrics.add("roam", ev.pca, start, _now_us(), "ok")
            else:
                start = _now_us()
                sv.vehicle.acquire_native_ticket(ev.pca, window, )
                metrics.add("ticket", ev.ltca, start, _now_us(), "ok")
                start = _now_us()
                try:
                    sv.vehicle.acquire_pseudonyms(ev.pca, sub, n)
                    metrics.add("psnym", ev.pca, start, _now_us(), "ok")
                except (ConnectionError, OSError):
                    # one retry after the balancer's health probe interval
                    time.sleep(1.2)
                    start = _now_us()
                    sv.vehicle.acquire_pseudonyms(ev.pca, sub, n)
                    metrics.add("psnym", ev.pca, start, _now_us(), "retried-ok")
        except ProtocolError as e:
            outcome = e.code.name
            metrics.add(ev.kind, ev.pca, _now_us(), _now_us(), outcome)
        except (ConnectionError, OSError) as e:
            outcome = f"transport:{type(e).__name__}"
            metrics.add(ev.kind, ev.pca, _now_us(), _now_us(), outcome)
    with log_lock:
        request_log.append((ev.vehicle, ev.window, ev.kind, ev.ltca, ev.pca, outcome))


# -- monitors -------------------------------------------------------------------------


def monitor_ticket_overlaps(ltcas: list[LtcaService]) -> list[str]:
    """Brute-force oracle: for every subject, no two ledger intervals overlap."""
    violations = []
    for svc in ltcas:
        by_subject: dict[str, list] = {}
        for entry in svc.ledger_entries():
            by_subject.setdefault(entry.subject_id, []).append(entry)
        for subject, entries in by_subject.items():
            for i in range(len(entries)):
                for j in range(i + 1, len(entries)):
                    if entries[i].interval.overlaps(entries[j].interval):
                        violations.append(
                            f"sybil-ticket: {svc.server_id} subject {subject} "
                            f"serials {entries[i].ticket_serial},{entries[j].ticket_serial}"
                        )
    return violations


def monitor_pool_disjointness(vehicles: list[SimVehicle]) -> list[str]:
    violations = []
    for sv in vehicles:
        pool = sv.vehicle.pool
        for i in range(len(pool)):
            for j in range(i + 1, len(pool)):
                a, b = pool[i].pseudonym, pool[j].pseudonym
                if a.interval.overlaps(b.interval):
                    violations.append(
                        f"pool-overlap: {sv.vehicle.subject_id} "
                        f"({a.issuer},{a.serial}) vs ({b.issuer},{b.serial})"
                    )
    return violations


def monitor_pseudonym_overlaps_server_side(
    ltcas: list[LtcaService], pcas: list[PcaService]
) -> list[str]:
    """Brute-force oracle over all server-recorded pseudonyms grouped by true
    owner (via ticket ledgers and exchange maps)."""
    ticket_to_subject = {}
    exchange = {}
    for svc in ltcas:
        for entry in svc.ledger_entries():
            ticket_to_subject[(svc.server_id, entry.ticket_serial)] = entry.subject_id
        for serial, row in svc._exchanges.items():
            exchange[(svc.server_id, serial)] = (row.foreign_issuer, row.foreign_serial)
    by_owner: dict[str, list] = {}
    unattributed = []
    for svc in pcas:
        for row in svc.issued_rows():
            ticket = (row.ticket_issuer, row.ticket_serial)
            if ticket in exchange:
                ticket = exchange[ticket]
            owner = ticket_to_subject.get(ticket)
            if owner is None:
                unattributed.append(f"unattributable pseudonym ({svc.server_id},{row.serial})")
                continue
            by_owner.setdefault(owner, []).append((svc.server_id, row))
    violations = list(unattributed)
    for owner, rows in by_owner.items():
        for i in range(len(rows)):
            for j in range(i + 1, len(rows)):
                if rows[i][1].interval.overlaps(rows[j][1].interval):
                    violations.append(
                        f"sybil-pseudonym: owner {owner} "
                        f"({rows[i][0]},{rows[i][1].serial}) vs ({rows[j][0]},{rows[j][1].serial})"
                    )
    return violations


def monitor_crl_monotonicity(pcas: list[PcaService]) -> list[str]:
    violations = []
    for svc in pcas:
        history = svc.crl_history
        for prev, cur in zip(history, history[1:]):
            if cur.sequence != prev.sequence + 1:
                violations.append(
                    f"crl-sequence: {svc.server_id} {prev.sequence} -> {cur.sequence}"
                )
            if not set(prev.entries) <= set(cur.entries):
                violations.append(f"crl-shrank: {svc.server_id} seq {cur.sequence}")
            if list(cur.entries) != sorted(set(cur.entries)):
                violations.append(f"crl-unsorted: {svc.server_id} seq {cur.sequence}")
    return violations


def monitor_resolution_sample(
    deployment: Deployment, fraction: float, rng: random.Random
) -> list[str]:
    if deployment.ra is None:
        return []
    issued = []
    for sv in deployment.vehicles:
        for entry in sv.vehicle.pool:
            issued.append((entry.pseudonym, sv.vehicle.subject_id))
    if not issued:
        return []
    k = max(1, int(len(issued) * fraction))
    violations = []
    for p, owner in rng.sample(issued, k):
        try:
            res, _ = deployment.ra.resolve(
                ResolutionRequest(p.issuer, p.serial, "post-run invariant sample")
            )
        except ProtocolError as e:
            violations.append(f"resolution-failed: ({p.issuer},{p.serial}) {e.code.name}")
            continue
        if res.subject_id != owner:
            violations.append(
                f"resolution-wrong: ({p.issuer},{p.serial}) got {res.subject_id} want {owner}"
            )
    return violations


def run_monitors(deployment: Deployment, rng: random.Random) -> list[str]:
    ltcas = deployment.ltca_services_for_scan()
    pcas = deployment.pca_services_for_scan()
    violations = []
    violations += monitor_ticket_overlaps(ltcas)
    violations += monitor_pool_disjointness(deployment.vehicles)
    if not deployment.scenario.faults:
        # with a crashed replica, undelivered issuance records died with it;
        # the obtained-credential scan above remains authoritative
        violations += monitor_pseudonym_overlaps_server_side(ltcas, pcas)
    violations += monitor_crl_monotonicity(pcas)
    violations += monitor_resolution_sample(
        deployment, deployment.scenario.resolution_sample_fraction, rng
    )
    return violations


# -- run ------------------------------------------------------------------------


def run(scenario: Scenario, out_dir: str | None = None, keep_deployment: bool = False):
    """Execute a scenario end to end and return its MetricsReport.

    The report lists every invariant violation (empty means a clean run);
    callers treat a non-empty list as a failed run.
    """
    scenario.validate()
    if scenario.attackers and scenario.attackers.ramp:
        return run_ddos(scenario, out_dir, keep_deployment)

    deployment = Deployment(scenario)
    metrics = _Metrics()
    request_log: list = []
    log_lock = threading.Lock()
    stop = threading.Event()
    attacker_stats = {"sent": 0, "rejected": 0, "accepted": 0}

    try:
        events = generate_events(scenario)
        fault_timers = []
        for fault in scenario.faults:
            timer = threading.Timer(fault.at_seconds, deployment.kill, args=(fault.server,))
            timer.daemon = True
            fault_timers.append(timer)

        attacker_threads = []
        if scenario.attackers and scenario.attackers.count > 0:
            attacker_threads = _steady_attackers(deployment, scenario, stop, attacker_stats)

        # align the run start to the next ticket-grid boundary so event
        # offsets and window indices agree regardless of how long the
        # deployment took to build
        gamma = deployment.policy.ticket_interval_seconds
        window_base = int(time.time() - deployment.t0) // gamma + 1
        pause = deployment.t0 + window_base * gamma - time.time()
        if pause > 0:
            time.sleep(pause)

        run_start = time.monotonic()
        run_start_us = _now_us()
        for timer in fault_timers:
            timer.start()
        for t in attacker_threads:
            t.start()

        with ThreadPoolExecutor(max_workers=min(32, max(4, scenario.vehicles))) as pool:
            for ev in events:
                delay = ev.at - (time.monotonic() - run_start)
                if delay > 0:
                    time.sleep(delay)
                pool.submit(
                    _execute_event, deployment, ev, metrics, request_log, log_lock, window_base
                )
        # let the tail of the schedule drain before stopping attackers
        remaining = scenario.duration_seconds - (time.monotonic() - run_start)
        if remaining > 0:
            time.sleep(remaining)
        stop.set()
        for t in attacker_threads:
            t.join(timeout=5)

        rng = random.Random(f"{scenario.seed}:monitors")
        violations = run_monitors(deployment, rng)
        if attacker_stats["accepted"]:
            violations.append(f"attacker-accepted: {attacker_stats['accepted']} bogus requests served")

        records = metrics.merged()
        summaries = {
            op: summarize([r.duration_ms() for r in records if r.op == op and "ok" in r.outcome])
            for op in sorted({r.op for r in records})
        }
        report = MetricsReport(
            scenario_name=scenario.name,
            records=records,
            violations=violations,
            summaries=summaries,
            request_log=sorted(request_log),
            extra={
                "attacker": dict(attacker_stats),
                "t0": deployment.t0,
                "run_start_us": run_start_us,
            },
        )
        if out_dir:
            export(report, out_dir)
            with open(os.path.join(out_dir, "transcript.json"), "w") as f:
                f.write(deployment.build_transcript().to_json())
            deployment.export_snapshots(os.path.join(out_dir, "snapshots"))
        if keep_deployment:
            report.extra["deployment"] = deployment
        return report
    finally:
        stop.set()
        if not keep_deployment:
            deployment.stop()


def _steady_attackers(deployment, scenario, stop, stats) -> list[threading.Thread]:
    spec = scenario.attackers
    total_rate = spec.count * spec.requests_per_hour / 3600.0
    n_threads = min(8, max(1, spec.count))
    target_ltca = scenario.domains[0].ltca
    target_pca = scenario.domains[0].pcas[0].ca_id
    target = target_ltca if spec.kind == "fake_ltc" else target_pca
    lock = threading.Lock()

    def worker(idx: int):
        rng = random.Random(f"{scenario.seed}:attacker:{idx}")
        stream = attacker_workload(
            spec.kind, total_rate / n_threads, target_ltca, deployment.policy,
            int(time.time()), rng,
        )
        interval = n_threads / total_rate if total_rate > 0 else 1.0
        nxt = time.monotonic()
        for hello, frame_bytes in stream:
            if stop.is_set():
                return
            nxt += interval
            pause = nxt - time.monotonic()
            if pause > 0:
                time.sleep(pause)
            accepted = _fire_attack(deployment, target, hello, frame_bytes)
            with lock:
                stats["sent"] += 1
                stats["accepted" if accepted else "rejected"] += 1

    return [
        threading.Thread(target=worker, args=(i,), name=f"attacker-{i}", daemon=True)
        for i in range(n_threads)
    ]


def _fire_attack(deployment: Deployment, target: str, hello: bytes, frame_bytes: bytes) -> bool:
    """Send a bogus exchange; True if the server (incorrectly) served it."""
    try:
        if deployment.host is not None:
            _, resp_frame = deployment.host.exchange(target, hello, frame_bytes)
        else:
            import socket as _socket
            from .netserver import _LEN, _recv_frame, _recv_len_prefixed

            host, port = deployment.addresses[target].rsplit(":", 1)
            with _socket.create_connection((host, int(port)), timeout=5) as sock:
                sock.sendall(_LEN.pack(len(hello)) + hello + frame_bytes)
                _recv_len_prefixed(sock, 1 << 20)
                resp_frame = _recv_frame(sock)
        resp = wire.deframe(resp_frame)
        return resp.msg_type != wire.MsgType.ERR
    except (ConnectionError, OSError):
        return False


# -- DDoS ramp ------------------------------------------------------------------


def run_ddos(scenario: Scenario, out_dir: str | None = None, keep_deployment: bool = False):
    """Staged attacker ramp: closed-loop legitimate clients share the target
    server with an open-loop bogus-request stream; reports legitimate served
    requests/second per stage."""
    spec = scenario.attackers
    if spec is None or not spec.ramp:
        raise ScenarioInvalid("run_ddos needs attackers.ramp")
    if scenario.vehicles < 1:
        raise ScenarioInvalid("run_ddos needs at least one legitimate vehicle")
    deployment = Deployment(scenario)
    target = scenario.domains[0].ltca
    # model the paper's fixed server resources: bounded request workers
    if deployment.host is not None:
        deployment.host.set_capacity(target, 2)

    stages = []
    attacker_stats_total = {"sent": 0, "rejected": 0, "accepted": 0}
    legit_n = min(8, scenario.vehicles)
    cursors = [10_000 + i * 1_000_000 for i in range(legit_n)]
    metrics = _Metrics()

    try:
        for stage_idx, count in enumerate(spec.ramp):
            stop = threading.Event()
            stats = {"sent": 0, "rejected": 0, "accepted": 0}
            served = [0] * legit_n

            def legit_worker(idx: int):
                sv = deployment.vehicles[idx]
                gamma = deployment.policy.ticket_interval_seconds
                epoch = deployment.policy.grid_epoch
                while not stop.is_set():
                    cursors[idx] += 1
                    w = Interval(
                        epoch + cursors[idx] * gamma, epoch + (cursors[idx] + 1) * gamma
                    )
                    start = _now_us()
                    try:
                        with sv.lock:
                            sv.vehicle.acquire_ticket("pca-probe", w)
                        metrics.add("ticket", target, start, _now_us(), "ok")
                        served[idx] += 1
                    except (ProtocolError, ConnectionError, OSError):
                        metrics.add("ticket", target, start, _now_us(), "error")

            attackers = []
            if count > 0:
                staged = Scenario(
                    **{**scenario.__dict__, "attackers": AttackerSpec(
                        count=count, requests_per_hour=spec.requests_per_hour, kind=spec.kind
                    )}
                )
                attackers = _steady_attackers(deployment, staged, stop, stats)
            legit_threads = [
                threading.Thread(target=legit_worker, args=(i,), daemon=True)
                for i in range(legit_n)
            ]
            for t in attackers + legit_threads:
                t.start()
            time.sleep(spec.stage_seconds)
            stop.set()
            for t in attackers + legit_threads:
                t.join(timeout=10)
            for k in attacker_stats_total:
                attacker_stats_total[k] += stats[k]
            stages.append(
                {
                    "attackers": count,
                    "legit_served_per_sec": sum(served) / spec.stage_seconds,
                    "attacker_sent": stats["sent"],
                    "attacker_rejected": stats["rejected"],
                    "attacker_accepted": stats["accepted"],
                }
            )
            log.info("ddos stage %d: %s", stage_idx, stages[-1])

        violations = []
        if attacker_stats_total["accepted"]:
            violations.append(
                f"attacker-accepted: {attacker_stats_total['accepted']} bogus requests served"
            )
        records = metrics.merged()
        report = MetricsReport(
            scenario_name=scenario.name,
            records=records,
            violations=violations,
            summaries={"ticket": summarize([r.duration_ms() for r in records if r.outcome == "ok"])},
            request_log=[],
            extra={"ddos_stages": stages, "attacker": attacker_stats_total},
        )
        if out_dir:
            export(report, out_dir)
        if keep_deployment:
            report.extra["deployment"] = deployment
        return report
    finally:
        if not keep_deployment:
            deployment.stop()


# -- export ----------------------------------------------------------------------


def export(report: MetricsReport, out_dir: str, formats: tuple[str, ...] = ("csv", "json")) -> list[str]:
    """Write latencies.csv, summary.json and gnuplot-ready CDF .dat files."""
    os.makedirs(out_dir, exist_ok=True)
    written = []
    if "csv" in formats:
        path = os.path.join(out_dir, "latencies.csv")
        with open(path, "w") as f:
            f.write("op,server,start_us,end_us,outcome\n")
            for r in report.records:
                f.write(f"{r.op},{r.server},{r.start_us},{r.end_us},{r.outcome}\n")
        written.append(path)
    if "json" in formats:
        path = os.path.join(out_dir, "summary.json")
        payload = {
            "scenario": report.scenario_name,
            "violations": report.violations,
            "ops": {
                op: {
                    "count": s.count,
                    "mean_ms": s.mean_ms,
                    "p50_ms": s.p50_ms,
                    "p90_ms": s.p90_ms,
                    "p99_ms": s.p99_ms,
                    "cdf": [[p, v] for p, v in s.cdf],
                }
                for op, s in report.summaries.items()
            },
            "extra": {k: v for k, v in report.extra.items() if k != "deployment"},
        }
        with open(path, "w") as f:
            json.dump(payload, f, indent=2)
        written.append(path)
    for op, s in report.summaries.items():
        if not s.cdf:
            continue
        path = os.path.join(out_dir, f"{op}_cdf.dat")
        with open(path, "w") as f:
            f.write("# latency_ms cumulative_probability\n")
            for p, v in s.cdf:
                f.write(f"{v:.3f} {p:.2f}\n")
        written.append(path)
    return written
