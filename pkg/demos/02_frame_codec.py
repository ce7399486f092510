"""The wire format: 20-byte big-endian header followed by the payload.

Shows an encoded frame, incremental decoding from arbitrary chunks, and the
errors a damaged header produces.
"""

from plantbus.errors import FrameError
from plantbus.session import Frame, FrameKind, FrameReader, decode_frame, encode_frame

frame = Frame(FrameKind.RPC_REQ, channel_id=2, correlation_id=7, payload=b"ab")
raw = encode_frame(frame)
print("RPC_REQ on channel 2, correlation 7, payload 'ab':")
print("  " + raw.hex(" "))

decoded, rest = decode_frame(raw + b"next")
print(f"decoded {decoded.kind.name}, {len(rest)} trailing bytes left for the next frame")

# a reader reassembles frames from whatever chunks the transport delivers
reader = FrameReader()
stream = b"".join(encode_frame(Frame(FrameKind.EVENT, 1, i, b"x" * i)) for i in range(5))
got = []
for i in range(0, len(stream), 7):
    got.extend(reader.feed(stream[i:i + 7]))
print(f"reassembled {len(got)} frames from 7-byte chunks: {[len(f.payload) for f in got]}")

for label, damaged in [("bad magic", b"XX" + raw[2:]),
                       ("bad version", raw[:2] + b"\x09" + raw[3:]),
                       ("unknown kind", raw[:3] + b"\x7f" + raw[4:]),
                       ("truncated", raw[:10]),
                       ("oversized length", raw[:16] + b"\xff\xff\xff\xff")]:
    try:
        decode_frame(damaged)
    except FrameError as exc:
        print(f"{label:>16}: {type(exc).__name__}")
