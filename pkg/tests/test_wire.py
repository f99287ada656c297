import random

import pytest
from hypothesis import given, settings, strategies as st

from vpki import FrameError
from vpki.wire import (
    Envelope,
    Freshness,
    MsgType,
    NonceCache,
    check_freshness,
    deframe,
    error_response,
    frame,
    is_response_nonce,
    new_request,
    respond,
)


def test_empty_payload_frame_is_27_bytes():
    env = Envelope(MsgType.TICKET_REQ, 1, 2, b"")
    assert len(frame(env)) == 27


def test_frame_roundtrip():
    env = Envelope(0x0003, 0xDEADBEEF, 1_700_000_000, b"payload-bytes")
    assert deframe(frame(env)) == env


@given(
    st.integers(0, 0xFFFF),
    st.integers(0, 2**64 - 1),
    st.integers(0, 2**64 - 1),
    st.binary(max_size=512),
)
def test_frame_roundtrip_property(msg_type, nonce, ts, payload):
    env = Envelope(msg_type, nonce, ts, payload)
    assert deframe(frame(env)) == env


def test_truncated_frame_rejected():
    data = frame(Envelope(1, 2, 3, b"abcdef"))
    for cut in (0, 5, 26, len(data) - 1):
        with pytest.raises(FrameError):
            deframe(data[:cut])


def test_bad_magic_and_version_rejected():
    data = bytearray(frame(Envelope(1, 2, 3, b"")))
    bad_magic = b"XPKI" + bytes(data[4:])
    with pytest.raises(FrameError):
        deframe(bad_magic)
    data[4] = 9
    with pytest.raises(FrameError):
        deframe(bytes(data))


def test_trailing_garbage_rejected():
    with pytest.raises(FrameError):
        deframe(frame(Envelope(1, 2, 3, b"x")) + b"junk")


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=128))
def test_deframe_never_crashes_on_garbage(blob):
    try:
        deframe(blob)
    except FrameError:
        pass


def test_fuzz_100k_random_frames_no_crash():
    rng = random.Random(99)
    crashes = 0
    for _ in range(100_000):
        blob = rng.randbytes(rng.randrange(0, 64))
        try:
            deframe(blob)
        except FrameError:
            continue
        except Exception:
            crashes += 1
    assert crashes == 0


def test_freshness_accepts_current():
    cache = NonceCache()
    env = new_request(MsgType.TICKET_REQ, b"", now=1000)
    assert check_freshness(env, 1000, cache) is Freshness.ACCEPT


def test_freshness_boundary():
    cache = NonceCache()
    assert check_freshness(Envelope(1, 10, 1000 - 300, b""), 1000, cache) is Freshness.ACCEPT
    assert (
        check_freshness(Envelope(1, 11, 1000 - 301, b""), 1000, cache)
        is Freshness.STALE_TIMESTAMP
    )
    assert (
        check_freshness(Envelope(1, 12, 1000 + 301, b""), 1000, cache)
        is Freshness.STALE_TIMESTAMP
    )


def test_replayed_nonce_rejected():
    cache = NonceCache()
    env = Envelope(1, 777, 1000, b"")
    assert check_freshness(env, 1000, cache) is Freshness.ACCEPT
    assert check_freshness(env, 1001, cache) is Freshness.REPLAYED_NONCE


def test_nonce_expires_after_retention():
    cache = NonceCache(retention=600)
    env = Envelope(1, 777, 1000, b"")
    assert check_freshness(env, 1000, cache) is Freshness.ACCEPT
    later = Envelope(1, 777, 1601, b"")
    # timestamp now stale, but the cache itself has forgotten the nonce
    assert cache.check_and_insert(777, 1601)


def test_respond_pairs_nonce_and_type():
    req = Envelope(MsgType.TICKET_REQ, 7, 1000, b"q")
    res = respond(req, b"a", now=1001)
    assert res.nonce == 8
    assert res.msg_type == MsgType.TICKET_RES
    assert res.payload == b"a"
    assert res.timestamp == 1001


def test_nonce_wraparound():
    req = Envelope(MsgType.TICKET_REQ, 2**64 - 1, 1000, b"")
    assert respond(req, b"", 1000).nonce == 0
    assert is_response_nonce(2**64 - 1, 0)
    assert not is_response_nonce(5, 5)


def test_error_response_keeps_pairing():
    req = Envelope(MsgType.PSNYM_REQ, 41, 1000, b"")
    err = error_response(req, b"boom", 1000)
    assert err.msg_type == MsgType.ERR and err.nonce == 42
