import pytest

from vpki import DomainPolicy, Interval, Role, TrustEntry, TrustStore, generate_keypair
from vpki.channel import AuthorityCredential, ServiceHost
from vpki.ltca import LtcaService
from vpki.pca import PcaService
from vpki.ra import RaService
from vpki.vehicle import Vehicle

NOW = 1_700_003_000
EPOCH = 0


class Stack:
    """Two-domain in-process deployment with a controllable clock."""

    def __init__(self, policy=None):
        self.now = NOW
        self.clock = lambda: self.now
        self.policy = policy or DomainPolicy(
            ticket_interval_seconds=3600, pseudonym_lifetime_seconds=300, grid_epoch=EPOCH
        )
        names = [
            ("rca-1", Role.RCA, None),
            ("ltca-se", Role.LTCA, "rca-1"),
            ("ltca-de", Role.LTCA, "rca-1"),
            ("pca-se-1", Role.PCA, "rca-1"),
            ("pca-se-2", Role.PCA, "rca-1"),
            ("pca-de-1", Role.PCA, "rca-1"),
            ("ra-1", Role.RA, "rca-1"),
        ]
        self.keys = {n: generate_keypair() for n, _, _ in names}
        self.trust = TrustStore()
        for n, role, parent in names:
            self.trust.add(TrustEntry(n, self.keys[n].public, role, parent))
        self.trust.check()

        self.host = ServiceHost(self.trust)
        self.ltcas = {}
        self.pcas = {}
        for n in ("ltca-se", "ltca-de"):
            svc = LtcaService(n, self.keys[n], self.trust, self.policy, self.clock)
            self.ltcas[n] = svc
            self.host.register(svc)
        for n in ("pca-se-1", "pca-se-2", "pca-de-1"):
            svc = PcaService(n, self.keys[n], self.trust, self.policy, self.clock)
            self.pcas[n] = svc
            self.host.register(svc)
        ra_cred = AuthorityCredential("ra-1", self.keys["ra-1"])
        self.ra = RaService(
            "ra-1", self.keys["ra-1"], self.trust,
            lambda sid, mode: self.host.connect(sid, mode, ra_cred, "ra-1"),
            self.policy, self.clock,
        )
        self.host.register(self.ra)

    def vehicle(self, subject: str, home: str = "ltca-se", register: bool = True) -> Vehicle:
        v = Vehicle(
            subject, home,
            lambda sid, mode, cred=None: self.host.connect(sid, mode, cred, subject),
            self.trust,
            pseudonym_lifetime=self.policy.pseudonym_lifetime_seconds,
            grid_epoch=self.policy.grid_epoch,
            clock=self.clock,
        )
        if register:
            v.register(Interval(self.now - 3600, self.now + 10**7))
        return v

    def window(self, k: int = 0) -> Interval:
        gamma = self.policy.ticket_interval_seconds
        start = (self.now // gamma) * gamma + k * gamma
        return Interval(start, start + gamma)


@pytest.fixture
def stack():
    return Stack()
