import pytest

from vpki import generate_keypair
from vpki.channel import (
    AuthorityCredential,
    ChannelAuthMode,
    PeerKind,
    VehicleCredential,
    build_client_hello,
    build_server_proof,
    verify_client_hello,
    verify_server_proof,
)
from vpki.crypto import Signer
from vpki.errors import ErrorCode, ProtocolError
from vpki.wire import Envelope, MsgType, frame

from conftest import NOW, Stack


@pytest.fixture
def stack():
    return Stack()


def _vehicle_cred(stack):
    v = stack.vehicle("veh-ch")
    return VehicleCredential(v.ltc, v.keypair)


def test_anonymous_hello(stack):
    f = frame(Envelope(MsgType.CRL_REQ, 1, NOW, b""))
    hello = build_client_hello(ChannelAuthMode.SERVER_ONLY, None, f)
    peer = verify_client_hello(hello, f, stack.trust)
    assert peer.kind is PeerKind.ANONYMOUS


def test_vehicle_hello_roundtrip(stack):
    cred = _vehicle_cred(stack)
    f = frame(Envelope(MsgType.TICKET_REQ, 1, NOW, b"body"))
    hello = build_client_hello(ChannelAuthMode.MUTUAL, cred, f)
    peer = verify_client_hello(hello, f, stack.trust)
    assert peer.kind is PeerKind.VEHICLE
    assert peer.ltc == cred.ltc


def test_hello_bound_to_frame(stack):
    cred = _vehicle_cred(stack)
    f1 = frame(Envelope(MsgType.TICKET_REQ, 1, NOW, b"one"))
    f2 = frame(Envelope(MsgType.TICKET_REQ, 2, NOW, b"two"))
    hello = build_client_hello(ChannelAuthMode.MUTUAL, cred, f1)
    with pytest.raises(ProtocolError) as e:
        verify_client_hello(hello, f2, stack.trust)
    assert e.value.code is ErrorCode.BAD_SIGNATURE


def test_authority_hello(stack):
    cred = AuthorityCredential("ra-1", stack.keys["ra-1"])
    f = frame(Envelope(MsgType.MAP_PSNYM_REQ, 1, NOW, b""))
    hello = build_client_hello(ChannelAuthMode.MUTUAL, cred, f)
    peer = verify_client_hello(hello, f, stack.trust)
    assert peer.kind is PeerKind.AUTHORITY and peer.authority_id == "ra-1"


def test_unknown_authority_rejected(stack):
    cred = AuthorityCredential("ra-fake", generate_keypair())
    f = frame(Envelope(MsgType.MAP_PSNYM_REQ, 1, NOW, b""))
    hello = build_client_hello(ChannelAuthMode.MUTUAL, cred, f)
    with pytest.raises(ProtocolError) as e:
        verify_client_hello(hello, f, stack.trust)
    assert e.value.code is ErrorCode.UNAUTHORIZED


def test_server_proof_roundtrip(stack):
    signer = Signer(stack.keys["pca-se-1"])
    req, res = b"request-frame", b"response-frame"
    proof = build_server_proof("pca-se-1", signer, req, res)
    assert verify_server_proof(proof, "pca-se-1", signer.public, req, res)
    # bound to both frames and the claimed identity
    assert not verify_server_proof(proof, "pca-se-1", signer.public, req, b"other")
    assert not verify_server_proof(proof, "pca-se-1", signer.public, b"other", res)
    assert not verify_server_proof(proof, "pca-se-2", signer.public, req, res)
    assert not verify_server_proof(b"garbage", "pca-se-1", signer.public, req, res)


def test_replayed_old_response_rejected_by_nonce(stack):
    """A replayed response (valid proof for an old exchange) fails pairing."""
    v = stack.vehicle("veh-replay")
    channel = stack.host.connect("pca-se-1", ChannelAuthMode.SERVER_ONLY)
    from vpki.messages import CrlRequest
    from vpki import wire

    env1 = wire.new_request(wire.MsgType.CRL_REQ, CrlRequest().encode(), NOW)
    resp1 = channel.request(env1)
    assert wire.is_response_nonce(env1.nonce, resp1.nonce)
    env2 = wire.new_request(wire.MsgType.CRL_REQ, CrlRequest().encode(), NOW)
    assert not wire.is_response_nonce(env2.nonce, resp1.nonce)


def test_capacity_bound_serializes(stack):
    stack.host.set_capacity("pca-se-1", 1)
    channel = stack.host.connect("pca-se-1", ChannelAuthMode.SERVER_ONLY)
    from vpki.messages import CrlRequest
    from vpki import wire

    for i in range(4):
        resp = channel.request(wire.new_request(wire.MsgType.CRL_REQ, CrlRequest().encode(), NOW))
        assert resp.msg_type == wire.MsgType.CRL_RES


def test_down_service_raises_connection_error(stack):
    stack.host.set_down("pca-se-1")
    channel = stack.host.connect("pca-se-1", ChannelAuthMode.SERVER_ONLY)
    from vpki.messages import CrlRequest
    from vpki import wire

    with pytest.raises(ConnectionError):
        channel.request(wire.new_request(wire.MsgType.CRL_REQ, CrlRequest().encode(), NOW))
    stack.host.set_down("pca-se-1", down=False)
    channel.request(wire.new_request(wire.MsgType.CRL_REQ, CrlRequest().encode(), NOW))
