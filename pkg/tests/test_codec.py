import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from plantbus.errors import (
    BadMagic,
    BadVersion,
    FrameError,
    NeedMoreBytes,
    PayloadTooLarge,
    UnknownKind,
)
from plantbus.session.codec import (
    HEADER_SIZE,
    MAX_PAYLOAD,
    Frame,
    FrameKind,
    FrameReader,
    decode_frame,
    encode_frame,
)

DECLARED = (BadMagic, BadVersion, UnknownKind, PayloadTooLarge, NeedMoreBytes)


def declared_length(raw: bytes) -> int:
    return int.from_bytes(raw[16:20], "big")


frames = st.builds(
    Frame,
    st.sampled_from(list(FrameKind)),
    st.integers(0, 2**32 - 1),
    st.integers(0, 2**64 - 1),
    st.binary(max_size=300),
)


def test_event_example_bytes():
    raw = encode_frame(Frame(FrameKind.EVENT, 1, 0, b""))
    assert raw.hex(" ") == "50 42 01 04 00 00 00 01 00 00 00 00 00 00 00 00 00 00 00 00"


def test_rpc_req_example_bytes():
    raw = encode_frame(Frame(FrameKind.RPC_REQ, 0, 7, b"ab"))
    assert len(raw) == 22
    assert raw[-2:] == b"\x61\x62"
    assert raw[16:20] == b"\x00\x00\x00\x02"
    assert raw[8:16] == (7).to_bytes(8, "big")


def test_kind_codes():
    assert [k.value for k in FrameKind] == list(range(0x01, 0x0C))


def test_payload_cap():
    big = Frame(FrameKind.EVENT, 1, 0, bytes(MAX_PAYLOAD + 1))
    with pytest.raises(PayloadTooLarge):
        encode_frame(big)
    at_cap = encode_frame(Frame(FrameKind.EVENT, 1, 0, bytes(MAX_PAYLOAD)))
    assert len(at_cap) == HEADER_SIZE + 16_777_216


def test_declared_length_over_cap_is_rejected():
    raw = bytearray(encode_frame(Frame(FrameKind.EVENT, 1)))
    raw[16:20] = (MAX_PAYLOAD + 1).to_bytes(4, "big")
    with pytest.raises(PayloadTooLarge):
        decode_frame(bytes(raw))


def test_field_ranges():
    with pytest.raises(ValueError):
        Frame(FrameKind.EVENT, 2**32)
    with pytest.raises(ValueError):
        Frame(FrameKind.EVENT, 0, 2**64)


@pytest.mark.parametrize("mutate,err", [
    (lambda b: b"\x00" + b[1:], BadMagic),
    (lambda b: b[:1] + b"\x00" + b[2:], BadMagic),
    (lambda b: b[:2] + b"\x02" + b[3:], BadVersion),
    (lambda b: b[:3] + b"\x00" + b[4:], UnknownKind),
    (lambda b: b[:3] + b"\x0c" + b[4:], UnknownKind),
])
def test_header_errors(mutate, err):
    raw = encode_frame(Frame(FrameKind.EVENT, 1, 0, b"xyz"))
    with pytest.raises(err):
        decode_frame(mutate(raw))


def test_need_more_bytes_on_every_strict_prefix():
    raw = encode_frame(Frame(FrameKind.STREAM_DATA, 9, 3, b"payload!"))
    for cut in range(len(raw)):
        with pytest.raises(NeedMoreBytes):
            decode_frame(raw[:cut])


@settings(max_examples=300, deadline=None)
@given(frames, st.binary(max_size=40))
def test_round_trip_consumes_exactly_one_frame(frame, trailing):
    raw = encode_frame(frame)
    assert len(raw) == HEADER_SIZE + len(frame.payload)
    got, rest = decode_frame(raw + trailing)
    assert got == frame and rest == trailing


def check_mutant(raw: bytes):
    """A mutated encoding decodes to a declared error or to exactly one frame."""
    try:
        frame, rest = decode_frame(raw)
    except DECLARED:
        return "error"
    n = HEADER_SIZE + declared_length(raw)
    assert len(raw) - len(rest) == n
    # the frame only depends on the bytes it claims
    assert decode_frame(raw[:n]) == (frame, b"")
    assert frame.payload == raw[HEADER_SIZE:n]
    return "frame"


def mutate(rnd: random.Random, raw: bytes) -> bytes:
    b = bytearray(raw)
    op = rnd.randrange(5)
    if op == 0:
        for _ in range(rnd.randint(1, 4)):
            b[rnd.randrange(len(b))] = rnd.randrange(256)
    elif op == 1:
        i = rnd.randrange(min(len(b), HEADER_SIZE))
        b[i] ^= 1 << rnd.randrange(8)
    elif op == 2:
        del b[rnd.randrange(len(b)):]
    elif op == 3:
        b += rnd.randbytes(rnd.randint(1, 30))
    else:
        b[16:20] = rnd.randrange(2**32).to_bytes(4, "big")
    return bytes(b)


def random_frame(rnd: random.Random) -> Frame:
    return Frame(rnd.choice(list(FrameKind)), rnd.randrange(2**32), rnd.randrange(2**64),
                 rnd.randbytes(rnd.randint(0, 64)))


def test_fuzz_mutated_headers():
    rnd = random.Random(2024)
    outcomes = set()
    for _ in range(3000):
        outcomes.add(check_mutant(mutate(rnd, encode_frame(random_frame(rnd)))))
    assert outcomes == {"error", "frame"}


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=64))
def test_arbitrary_bytes_never_crash(raw):
    try:
        check_mutant(raw)
    except FrameError as exc:  # pragma: no cover - would mean an undeclared error
        pytest.fail(f"undeclared frame error {type(exc).__name__}")


@settings(max_examples=100, deadline=None)
@given(st.lists(frames, max_size=12), st.lists(st.integers(1, 50), min_size=1, max_size=20))
def test_frame_reader_handles_any_chunking(fs, cuts):
    stream = b"".join(encode_frame(f) for f in fs)
    reader = FrameReader()
    out, i, c = [], 0, 0
    while i < len(stream):
        step = cuts[c % len(cuts)]
        out.extend(reader.feed(stream[i:i + step]))
        i += step
        c += 1
    assert out == fs and reader.pending == 0


def test_frame_reader_raises_on_bad_magic():
    reader = FrameReader()
    with pytest.raises(BadMagic):
        list(reader.feed(b"XX" + bytes(30)))


def test_frame_reader_compacts_large_streams():
    reader = FrameReader()
    f = Frame(FrameKind.STREAM_DATA, 1, 0, bytes(1000))
    raw = encode_frame(f) * 200
    assert len(list(reader.feed(raw))) == 200
    assert list(reader.feed(encode_frame(f)[:10])) == []
    assert reader.pending == 10
