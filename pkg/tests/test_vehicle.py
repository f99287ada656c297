import struct

import pytest

from vpki import Interval
from vpki.errors import ErrorCode, ProtocolError
from vpki.messages import OcspStatus

from conftest import Stack


@pytest.fixture
def stack():
    return Stack()


def test_acquire_ticket_snaps_and_stores(stack):
    v = stack.vehicle("veh-1")
    w = stack.window(0)
    tkt, rnd = v.acquire_native_ticket("pca-se-1", Interval(w.start + 100, w.end - 100))
    assert tkt.interval == w
    assert v.current_ticket == (tkt, rnd)


def test_second_overlapping_acquisition_surfaces_error(stack):
    v = stack.vehicle("veh-1")
    w = stack.window(0)
    v.acquire_native_ticket("pca-se-1", w)
    with pytest.raises(ProtocolError) as e:
        v.acquire_native_ticket("pca-se-2", Interval(w.start + 10, w.end))
    assert e.value.code is ErrorCode.OVERLAPPING_TICKET


def test_acquire_pseudonyms_pools_and_consumes(stack):
    v = stack.vehicle("veh-1")
    w = stack.window(0)
    tkt, rnd = v.acquire_native_ticket("pca-se-1", w)
    n = v.acquire_pseudonyms("pca-se-1", Interval(w.start + 600, w.start + 1500), 3)
    assert n == 3 and len(v.pool) == 3
    assert v.current_ticket is None
    assert (tkt.issuer, tkt.serial) in v.consumed_tickets
    # reuse of the consumed ticket is impossible client-side
    with pytest.raises(ProtocolError) as e:
        v.acquire_pseudonyms("pca-se-1", Interval(w.start, w.start + 300), 1)
    assert e.value.code is ErrorCode.TICKET_INVALID


def test_keypairs_match_pseudonyms_in_order(stack):
    v = stack.vehicle("veh-1")
    w = stack.window(0)
    v.acquire_native_ticket("pca-se-1", w)
    v.acquire_pseudonyms("pca-se-1", Interval(w.start, w.start + 900), 3)
    for entry in v.pool:
        assert entry.pseudonym.public_key == entry.keypair.public


def test_current_pseudonym_unique_or_none(stack):
    v = stack.vehicle("veh-1")
    w = stack.window(0)
    v.acquire_native_ticket("pca-se-1", w)
    v.acquire_pseudonyms("pca-se-1", Interval(w.start + 600, w.start + 1200), 2)
    inside = v.current_pseudonym(w.start + 700)
    assert inside is not None and inside.pseudonym.interval.contains(w.start + 700)
    assert v.current_pseudonym(w.start + 100) is None  # gap before first slot
    assert v.current_pseudonym(w.start + 1200) is None  # after last slot


def test_pool_disjoint_after_mixed_acquisitions(stack):
    v = stack.vehicle("veh-1")
    w0, w1 = stack.window(0), stack.window(1)
    v.acquire_native_ticket("pca-se-1", w0)
    v.acquire_pseudonyms("pca-se-1", Interval(w0.start, w0.start + 900), 3)
    stack.now = w1.start + 1  # move into the next window for the roam
    v.roam("ltca-de", "pca-de-1", w1, 3, Interval(w1.start, w1.start + 900))
    pool = v.pool
    assert len(pool) == 6
    for i in range(len(pool)):
        for j in range(i + 1, len(pool)):
            assert not pool[i].pseudonym.interval.overlaps(pool[j].pseudonym.interval)


def test_roam_full_three_stages(stack):
    v = stack.vehicle("veh-r")
    w = stack.window(0)
    n = v.roam("ltca-de", "pca-de-1", w, 4, Interval(w.start + 300, w.start + 1500))
    assert n == 4
    assert all(e.pseudonym.issuer == "pca-de-1" for e in v.pool)
    # exchange recorded at the foreign LTCA, resolvable to the home pointer
    de = stack.ltcas["ltca-de"]
    used = list(de._exchanges.values())
    assert len(used) == 1 and used[0].foreign_issuer == "ltca-se"


def test_roam_stage_rollback_keeps_foreign_ticket(stack):
    v = stack.vehicle("veh-r")
    w = stack.window(0)
    stack.host.set_down("ltca-de")
    with pytest.raises(ConnectionError):
        v.roam("ltca-de", "pca-de-1", w, 2)
    # stage 1 completed and is kept for the retry
    assert "ltca-de" in v._staged_foreign
    stack.host.set_down("ltca-de", down=False)
    assert v.roam("ltca-de", "pca-de-1", w, 2, Interval(w.start, w.start + 600)) == 2


def test_refresh_crl_and_check_status(stack):
    victim = stack.vehicle("veh-victim")
    observer = stack.vehicle("veh-observer")
    w = stack.window(0)
    victim.acquire_native_ticket("pca-se-1", w)
    victim.acquire_pseudonyms("pca-se-1", Interval(w.start, w.start + 1800), 6)
    observer.acquire_native_ticket("pca-se-1", w)
    observer.acquire_pseudonyms("pca-se-1", Interval(w.start, w.start + 1800), 6)
    assert observer.refresh_crl("pca-se-1") == 0

    # revoke the victim's set server-side; cache and OCSP must agree
    pca = stack.pcas["pca-se-1"]
    tkt_issuer, tkt_serial = pca.map_pseudonym(victim.pool[0].pseudonym.serial)
    revoked = pca.revoke_for_ticket(
        tkt_issuer, tkt_serial, victim.pool[0].pseudonym.interval.end
    )
    assert revoked == 5  # first slot already over by its own end time
    assert observer.refresh_crl("pca-se-1") == 5

    stack.now = victim.pool[1].pseudonym.interval.start + 1
    status = observer.check_status("pca-se-1", victim.pool[1].pseudonym.serial)
    assert status is OcspStatus.REVOKED
    assert observer.check_status("pca-se-1", observer.pool[1].pseudonym.serial) is OcspStatus.GOOD


def test_check_status_without_current_pseudonym(stack):
    v = stack.vehicle("veh-1")
    with pytest.raises(ProtocolError) as e:
        v.check_status("pca-se-1", 1)
    assert e.value.code is ErrorCode.UNAUTHORIZED


def test_ocsp_with_expired_pseudonym_unauthorized(stack):
    v = stack.vehicle("veh-1")
    w = stack.window(0)
    v.acquire_native_ticket("pca-se-1", w)
    v.acquire_pseudonyms("pca-se-1", Interval(w.start, w.start + 300), 1)
    serial = v.pool[0].pseudonym.serial
    # pretend the pseudonym is current client-side while the server clock moved on
    stack.now = v.pool[0].pseudonym.interval.end + 10
    entry = v.pool[0]
    from vpki import wire, crypto
    from vpki.messages import OcspRequest
    from vpki.channel import ChannelAuthMode

    env0 = wire.new_request(wire.MsgType.OCSP_REQ, b"", stack.now)
    proof = crypto.sign(entry.keypair.private, OcspRequest.proof_bytes(serial, env0.nonce, env0.timestamp))
    body = OcspRequest(serial, entry.pseudonym, proof)
    env = wire.Envelope(wire.MsgType.OCSP_REQ, env0.nonce, env0.timestamp, body.encode())
    with pytest.raises(ProtocolError) as e:
        v._exchange("pca-se-1", ChannelAuthMode.SERVER_ONLY, env)
    assert e.value.code is ErrorCode.UNAUTHORIZED


def test_concealment_byte_level(stack):
    """Nothing the vehicle sends to the LTCA names the target PCA or the
    pseudonym sub-interval; nothing sent to the PCA contains the LTC."""
    captured: list[tuple[str, str, bytes]] = []
    stack.host.taps.append(lambda src, dst, data: captured.append((src, dst, data)))

    v = stack.vehicle("veh-c")
    w = stack.window(0)
    sub = Interval(w.start + 600, w.start + 1500)  # strictly inside the window
    v.acquire_native_ticket("pca-se-1", w)
    v.acquire_pseudonyms("pca-se-1", sub, 3)

    to_ltca = b"".join(d for s, dst, d in captured if dst == "ltca-se" and s == "veh-c")
    to_pca = b"".join(d for s, dst, d in captured if dst == "pca-se-1" and s == "veh-c")
    assert to_ltca and to_pca

    # target PCA identity is hidden behind the digest
    assert b"pca-se-1" not in to_ltca
    # actual acquisition sub-interval never reaches the LTCA
    assert struct.pack(">Q", sub.start) not in to_ltca
    assert struct.pack(">Q", sub.end) not in to_ltca
    # the long-term identity never reaches the PCA
    assert v.ltc.subject_id.encode() not in to_pca
    assert v.ltc.public_key not in to_pca
    assert v.ltc.signature not in to_pca


def test_private_keys_never_serialized(stack):
    captured: list[bytes] = []
    stack.host.taps.append(lambda src, dst, data: captured.append(data))
    v = stack.vehicle("veh-k")
    w = stack.window(0)
    v.acquire_native_ticket("pca-se-1", w)
    v.acquire_pseudonyms("pca-se-1", Interval(w.start, w.start + 900), 3)
    wire_bytes = b"".join(captured)
    assert v.keypair.private not in wire_bytes
    for entry in v.pool:
        assert entry.keypair.private not in wire_bytes
