"""Command-line entry points for the servers, the demo vehicle client, the
simulation harness and the privacy analyzer."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import crypto, sim, wire
from .channel import AuthorityCredential, ChannelAuthMode
from .codec import Reader, Writer
from .credentials import Interval, TrustStore
from .directory import DirectoryService
from .errors import ProtocolError
from .ltca import LtcaService
from .messages import DirectoryRequest, DirectoryResponse, decode_body
from .netserver import TcpChannel, TcpServiceServer
from .pca import PcaService
from .policy import DomainPolicy
from .privacy import (
    Transcript,
    collusion_closure,
    link_by_lifetime,
    score_linkage,
)
from .ra import RaService, ResolutionRequest
from .store import KvStore
from .vehicle import Vehicle

log = logging.getLogger(__name__)


def save_keypair(path: str, kp: crypto.KeyPair) -> None:
    with open(path, "wb") as f:
        f.write(Writer().bytes_(kp.private).bytes_(kp.public).take())


def load_keypair(path: str) -> crypto.KeyPair:
    with open(path, "rb") as f:
        r = Reader(f.read())
    private, public = r.bytes_(), r.bytes_()
    r.expect_eof()
    return crypto.KeyPair(public=public, private=private)


def _load_trust(path: str) -> TrustStore:
    with open(path, "rb") as f:
        return TrustStore.from_bytes(f.read())


def _load_policy(path: str | None) -> DomainPolicy:
    if path is None:
        return DomainPolicy()
    with open(path) as f:
        return DomainPolicy.from_json(f.read())


def _load_endpoints(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    with open(path) as f:
        return dict(json.load(f))


def _server_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--id", required=True, help="authority identifier (CaId)")
    p.add_argument("--listen", required=True, help="addr:port to listen on")
    p.add_argument("--policy", help="domain policy config (JSON)")
    p.add_argument("--state", help="embedded key-value state file (omit for in-memory)")
    p.add_argument("--trust", required=True, help="trust store file")
    p.add_argument("--key", required=True, help="authority keypair file")


def _serve(service, listen: str) -> None:
    host, port = listen.rsplit(":", 1)
    server = TcpServiceServer(service, host, int(port))
    log.info("%s listening on %s", service.server_id, server.address)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass


def cmd_ltca(args) -> int:
    service = LtcaService(
        args.id, load_keypair(args.key), _load_trust(args.trust),
        _load_policy(args.policy), store=KvStore(args.state),
    )
    _serve(service, args.listen)
    return 0


def cmd_pca(args) -> int:
    service = PcaService(
        args.id, load_keypair(args.key), _load_trust(args.trust),
        _load_policy(args.policy), store=KvStore(args.state),
    )
    _serve(service, args.listen)
    return 0


def _ra_service(args) -> RaService:
    trust = _load_trust(args.trust)
    kp = load_keypair(args.key)
    endpoints = _load_endpoints(args.endpoints)
    cred = AuthorityCredential(args.id, kp)

    def connector(server_id: str, mode: ChannelAuthMode):
        return TcpChannel(endpoints[server_id], server_id, trust.get(server_id).public_key, mode, cred)

    return RaService(
        args.id, kp, trust, connector, _load_policy(args.policy),
        store=KvStore(args.state),
    )


def cmd_ra(args) -> int:
    service = _ra_service(args)
    if args.ra_command == "resolve":
        issuer, serial = args.pseudonym.rsplit(":", 1)
        try:
            res, entry = service.resolve(
                ResolutionRequest(
                    issuer, int(serial), args.justification,
                    revoke_pseudonyms=args.revoke, revoke_ltc=args.revoke_ltc,
                )
            )
        except ProtocolError as e:
            print(f"resolution failed: {e.code.name} {e.message}", file=sys.stderr)
            return 1
        print(json.dumps({
            "outcome": res.outcome.name,
            "subject_id": res.subject_id,
            "home_ca": res.home_ca,
            "steps": list(entry.steps),
        }, indent=2))
        return 0
    _serve(service, args.listen)
    return 0


def cmd_directory(args) -> int:
    with open(args.manifest, "rb") as f:
        manifest = f.read()
    service = DirectoryService(
        args.id, load_keypair(args.key), _load_trust(args.trust), manifest,
        _load_policy(args.policy),
    )
    _serve(service, args.listen)
    return 0


def cmd_vehicle(args) -> int:
    trust = _load_trust(args.trust)
    endpoints = _load_endpoints(args.endpoints)
    directory_pub = load_keypair(args.directory_key).public if args.directory_key else None

    def connector(server_id: str, mode: ChannelAuthMode, cred=None):
        return TcpChannel(endpoints[server_id], server_id, trust.get(server_id).public_key, mode, cred)

    with open(args.scenario) as f:
        script = json.load(f)
    policy = _load_policy(args.policy)
    v = Vehicle(
        args.subject, args.home, connector, trust,
        pseudonym_lifetime=policy.pseudonym_lifetime_seconds,
        grid_epoch=policy.grid_epoch,
    )

    if args.directory and directory_pub is not None:
        # walk the trust associations before running the script
        channel = TcpChannel(args.directory, "dir-1", directory_pub, ChannelAuthMode.SERVER_ONLY)
        env = wire.new_request(wire.MsgType.DIR_REQ, DirectoryRequest(ca_id=args.home).encode(), v.clock())
        body = decode_body(*_unpack(channel.request(env)))
        if isinstance(body, DirectoryResponse):
            for e in body.entries:
                print(f"directory: {e.ca_id} role={e.role} domain={e.domain} assoc={list(e.associations)}")

    reg = script.get("register")
    if reg:
        ltc = v.register(Interval(int(reg["valid_from"]), int(reg["valid_to"])))
        print(f"registered: serial={ltc.serial} issuer={ltc.issuer}")
    for step in script.get("steps", []):
        op = step["op"]
        try:
            if op == "acquire_ticket":
                tkt, _ = v.acquire_native_ticket(step["target"], Interval(step["start"], step["end"]))
                print(f"ticket: serial={tkt.serial} interval=[{tkt.interval.start},{tkt.interval.end})")
            elif op == "acquire_pseudonyms":
                n = v.acquire_pseudonyms(step["pca"], Interval(step["start"], step["end"]), step["count"])
                print(f"pseudonyms: {n} issued, pool={len(v.pool)}")
            elif op == "roam":
                n = v.roam(step["ltca"], step["pca"], Interval(step["start"], step["end"]), step["count"])
                print(f"roamed: {n} pseudonyms from {step['pca']}")
            elif op == "refresh_crl":
                n = v.refresh_crl(step["pca"])
                print(f"crl: {n} new revocations cached")
            elif op == "check_status":
                status = v.check_status(step["pca"], step["serial"])
                print(f"ocsp: serial={step['serial']} status={status.name}")
            elif op == "current":
                entry = v.current_pseudonym()
                print(f"current pseudonym: {entry.pseudonym.serial if entry else None}")
            else:
                print(f"unknown step op {op}", file=sys.stderr)
                return 2
        except ProtocolError as e:
            print(f"{op}: refused with {e.code.name} {e.message}")
    return 0


def _unpack(env: wire.Envelope):
    return env.msg_type, env.payload


def cmd_sim(args) -> int:
    if args.sim_command != "run":
        print("usage: sim run <scenario.json> --out <dir>", file=sys.stderr)
        return 2
    with open(args.scenario) as f:
        scenario = sim.Scenario.from_json(f.read())
    report = sim.run(scenario, out_dir=args.out)
    for op, s in sorted(report.summaries.items()):
        print(f"{op}: n={s.count} mean={s.mean_ms:.2f}ms p50={s.p50_ms:.2f}ms "
              f"p90={s.p90_ms:.2f}ms p99={s.p99_ms:.2f}ms")
    if "ddos_stages" in report.extra:
        for stage in report.extra["ddos_stages"]:
            print(f"attackers={stage['attackers']}: legit={stage['legit_served_per_sec']:.1f}/s "
                  f"rejected={stage['attacker_rejected']}/{stage['attacker_sent']}")
    if report.violations:
        print(f"{len(report.violations)} invariant violations:", file=sys.stderr)
        for v in report.violations:
            print(f"  {v}", file=sys.stderr)
        return 1
    print("invariants: clean")
    return 0


def cmd_privacy(args) -> int:
    if args.privacy_command != "analyze":
        print("usage: privacy analyze --transcript <file> ...", file=sys.stderr)
        return 2
    out: dict = {}
    if args.transcript:
        with open(args.transcript) as f:
            transcript = Transcript.from_json(f.read())
        chains = link_by_lifetime(transcript)
        out["linkage"] = {
            "observations": len(transcript.observations),
            "chains": len(chains),
            "longest_chain": max((len(c) for c in chains), default=0),
        }
        if transcript.ground_truth:
            score = score_linkage(chains, transcript)
            out["linkage"].update(
                precision=score.precision,
                recall=score.recall,
                mean_anonymity_set=score.mean_anonymity_set,
                proposed_links=score.proposed_links,
                correct_links=score.correct_links,
                true_pairs=score.true_pairs,
            )
    if args.collude:
        import os

        entities = set(args.collude.split(","))
        snapshots = {}
        for name in os.listdir(args.snapshots):
            if name.endswith(".snap"):
                with open(os.path.join(args.snapshots, name), "rb") as f:
                    snapshots[name[: -len(".snap")]] = f.read()
        ks = collusion_closure(entities, snapshots)
        out["collusion"] = {
            "entities": sorted(ks.entities),
            "vehicle_ids_known": len(ks.vehicle_ids),
            "request_groups": len(ks.request_groups),
            "id_pseudonym_links": len(ks.id_pseudonym_links),
            "links_derivable": ks.links_derivable,
        }
    text = json.dumps(out, indent=2)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text)
    print(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vpki")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ltca", help="run a long-term certificate authority")
    _server_args(p)
    p.set_defaults(fn=cmd_ltca)

    p = sub.add_parser("pca", help="run a pseudonym certification authority")
    _server_args(p)
    p.set_defaults(fn=cmd_pca)

    p = sub.add_parser("ra", help="run the resolution authority / resolve once")
    p.add_argument("--id", default="ra-1")
    p.add_argument("--listen", default="127.0.0.1:7300")
    p.add_argument("--policy")
    p.add_argument("--state")
    p.add_argument("--trust", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--endpoints", help="JSON map of authority id to addr:port")
    rsub = p.add_subparsers(dest="ra_command")
    rp = rsub.add_parser("resolve", help="resolve one pseudonym")
    rp.add_argument("--pseudonym", required=True, metavar="ISSUER:SERIAL")
    rp.add_argument("--revoke", action="store_true", help="revoke the ticket's pseudonyms")
    rp.add_argument("--revoke-ltc", action="store_true", help="also revoke the subject's LTC")
    rp.add_argument("--justification", default="operator request")
    p.set_defaults(fn=cmd_ra)

    p = sub.add_parser("directory", help="run the directory service")
    p.add_argument("--id", default="dir-1")
    p.add_argument("--listen", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--trust", required=True)
    p.add_argument("--key", required=True)
    p.add_argument("--policy")
    p.set_defaults(fn=cmd_directory)

    p = sub.add_parser("vehicle", help="demo client: walk protocol steps from a file")
    p.add_argument("--subject", default="veh-demo")
    p.add_argument("--home", required=True, help="home LTCA id")
    p.add_argument("--directory", help="directory service addr:port")
    p.add_argument("--directory-key", help="directory keypair file (public part is pinned)")
    p.add_argument("--trust", required=True)
    p.add_argument("--endpoints", required=True)
    p.add_argument("--policy")
    vsub = p.add_subparsers(dest="vehicle_command", required=True)
    vp = vsub.add_parser("run-scenario")
    vp.add_argument("scenario")
    p.set_defaults(fn=cmd_vehicle)

    p = sub.add_parser("sim", help="run an emulation scenario")
    ssub = p.add_subparsers(dest="sim_command", required=True)
    sp = ssub.add_parser("run")
    sp.add_argument("scenario")
    sp.add_argument("--out", help="output directory for latencies.csv / summary.json / CDF files")
    p.set_defaults(fn=cmd_sim)

    p = sub.add_parser("privacy", help="eavesdropper / collusion analysis")
    psub = p.add_subparsers(dest="privacy_command", required=True)
    pp = psub.add_parser("analyze")
    pp.add_argument("--transcript")
    pp.add_argument("--snapshots")
    pp.add_argument("--collude", help="comma-separated entity ids")
    pp.add_argument("--out")
    p.set_defaults(fn=cmd_privacy)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    args = build_parser().parse_args(argv)
    return args.fn(args)


def _sub_main(command: str):
    def runner() -> int:
        return main([command] + sys.argv[1:])

    return runner


main_ltca = _sub_main("ltca")
main_pca = _sub_main("pca")
main_ra = _sub_main("ra")
main_directory = _sub_main("directory")
main_vehicle = _sub_main("vehicle")
main_sim = _sub_main("sim")
main_privacy = _sub_main("privacy")


if __name__ == "__main__":
    sys.exit(main())
