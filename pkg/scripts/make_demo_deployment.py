#!/usr/bin/env python3
"""Generate everything a hand-run deployment needs: keypairs, trust store,
directory manifest, policy, endpoint map, and a vehicle walkthrough script.

    python scripts/make_demo_deployment.py demo/

then start the servers with the commands it prints.
"""

import json
import os
import sys
import time

from vpki import Role, TrustEntry, TrustStore, generate_keypair
from vpki.cli import save_keypair
from vpki.crypto import Signer
from vpki.directory import build_manifest
from vpki.messages import DirectoryEntry
from vpki.policy import DomainPolicy

AUTHORITIES = [
    ("ltca-se", Role.LTCA, "se"),
    ("ltca-de", Role.LTCA, "de"),
    ("pca-se-1", Role.PCA, "se"),
    ("pca-de-1", Role.PCA, "de"),
    ("ra-1", Role.RA, ""),
]
PORTS = {
    "dir-1": 7001, "ltca-se": 7101, "ltca-de": 7102,
    "pca-se-1": 7201, "pca-de-1": 7202, "ra-1": 7301,
}


def main(out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    keys = {name: generate_keypair() for name, _, _ in AUTHORITIES}
    keys["rca-1"] = generate_keypair()
    keys["dir-1"] = generate_keypair()
    for name, kp in keys.items():
        save_keypair(os.path.join(out_dir, f"{name}.key"), kp)

    trust = TrustStore()
    trust.add(TrustEntry("rca-1", keys["rca-1"].public, Role.RCA, None))
    for name, role, _ in AUTHORITIES:
        trust.add(TrustEntry(name, keys[name].public, role, "rca-1"))
    trust.check()
    with open(os.path.join(out_dir, "trust.bin"), "wb") as f:
        f.write(trust.to_bytes())

    policy = DomainPolicy(ticket_interval_seconds=600, pseudonym_lifetime_seconds=60)
    with open(os.path.join(out_dir, "policy.json"), "w") as f:
        f.write(policy.to_json())

    assoc = {"ltca-se": ("pca-se-1",), "ltca-de": ("pca-de-1",),
             "pca-se-1": ("ltca-se",), "pca-de-1": ("ltca-de",)}
    entries = [
        DirectoryEntry(name, int(role), keys[name].public, domain, assoc.get(name, ()))
        for name, role, domain in AUTHORITIES
        if role in (Role.LTCA, Role.PCA)
    ]
    with open(os.path.join(out_dir, "manifest.bin"), "wb") as f:
        f.write(build_manifest(entries, Signer(keys["dir-1"])))

    endpoints = {name: f"127.0.0.1:{port}" for name, port in PORTS.items()}
    with open(os.path.join(out_dir, "endpoints.json"), "w") as f:
        json.dump(endpoints, f, indent=2)

    now = int(time.time())
    w0 = (now // 600) * 600
    steps = {
        "register": {"valid_from": now - 3600, "valid_to": now + 10**7},
        "steps": [
            {"op": "acquire_ticket", "target": "pca-se-1", "start": now, "end": w0 + 600},
            {"op": "acquire_pseudonyms", "pca": "pca-se-1",
             "start": w0 + 60, "end": w0 + 300, "count": 4},
            {"op": "refresh_crl", "pca": "pca-se-1"},
            {"op": "current"},
        ],
    }
    with open(os.path.join(out_dir, "vehicle_steps.json"), "w") as f:
        json.dump(steps, f, indent=2)

    print(f"deployment material written to {out_dir}/")
    print("start the servers:")
    for name, role, _ in AUTHORITIES:
        kind = {Role.LTCA: "ltca", Role.PCA: "pca", Role.RA: "ra"}[role]
        extra = f" --endpoints {out_dir}/endpoints.json" if kind == "ra" else ""
        print(
            f"  {kind} --id {name} --listen {endpoints[name]} --policy {out_dir}/policy.json"
            f" --state {out_dir}/{name}.db --trust {out_dir}/trust.bin"
            f" --key {out_dir}/{name}.key{extra}"
        )
    print(
        f"  directory --listen {endpoints['dir-1']} --manifest {out_dir}/manifest.bin"
        f" --trust {out_dir}/trust.bin --key {out_dir}/dir-1.key"
    )


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "demo")
