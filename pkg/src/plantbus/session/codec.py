"""Bit-exact frame codec shared by every transport.

Header (20 bytes, big-endian)::

    0  magic           2  b"PB"
    2  version         1  0x01
    3  kind            1  FrameKind
    4  channel_id      4
    8  correlation_id  8
    16 payload_length  4

followed by ``payload_length`` payload bytes.
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass

from plantbus.errors import BadMagic, BadVersion, NeedMoreBytes, PayloadTooLarge, UnknownKind

MAGIC = b"PB"
VERSION = 0x01
HEADER = struct.Struct(">2sBBIQI")
HEADER_SIZE = HEADER.size
MAX_PAYLOAD = 16 * 1024 * 1024

assert HEADER_SIZE == 20


class FrameKind(enum.IntEnum):
    RPC_REQ = 0x01
    RPC_RESP = 0x02
    RPC_ERR = 0x03
    EVENT = 0x04
    STREAM_OPEN = 0x05
    STREAM_DATA = 0x06
    STREAM_CLOSE = 0x07
    FILE_META = 0x08
    FILE_CHUNK = 0x09
    FILE_DONE = 0x0A
    ACK = 0x0B


_KINDS = {k.value: k for k in FrameKind}


@dataclass(frozen=True)
class Frame:
    kind: FrameKind
    channel_id: int
    correlation_id: int = 0
    payload: bytes = b""

    def __post_init__(self):
        if not 0 <= self.channel_id < 1 << 32:
            raise ValueError(f"channel_id out of range: {self.channel_id}")
        if not 0 <= self.correlation_id < 1 << 64:
            raise ValueError(f"correlation_id out of range: {self.correlation_id}")


def encode_frame(frame: Frame) -> bytes:
    payload = frame.payload
    if len(payload) > MAX_PAYLOAD:
        raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
    kind = FrameKind(frame.kind)
    return HEADER.pack(MAGIC, VERSION, kind, frame.channel_id, frame.correlation_id,
                       len(payload)) + bytes(payload)


def decode_header(data) -> tuple[FrameKind, int, int, int]:
    """Validate a header prefix and return ``(kind, channel, correlation, length)``.

    Checks run in byte order, so a truncated buffer reports the first problem
    it can see before asking for more bytes.
    """
    n = len(data)
    if n >= 1 and data[0] != MAGIC[0] or n >= 2 and data[1] != MAGIC[1]:
        raise BadMagic(f"bad magic {bytes(data[:2]).hex()}")
    if n >= 3 and data[2] != VERSION:
        raise BadVersion(f"unsupported version {data[2]}")
    if n >= 4 and data[3] not in _KINDS:
        raise UnknownKind(f"unknown frame kind 0x{data[3]:02x}")
    if n < HEADER_SIZE:
        raise NeedMoreBytes(HEADER_SIZE)
    _, _, kind, channel_id, corr, length = HEADER.unpack_from(data)
    if length > MAX_PAYLOAD:
        raise PayloadTooLarge(f"declared payload of {length} bytes exceeds {MAX_PAYLOAD}")
    return _KINDS[kind], channel_id, corr, length


def decode_frame(data) -> tuple[Frame, bytes]:
    """Decode one frame from the front of ``data``; return it and the rest."""
    kind, channel_id, corr, length = decode_header(data)
    end = HEADER_SIZE + length
    if len(data) < end:
        raise NeedMoreBytes(end)
    payload = bytes(data[HEADER_SIZE:end])
    return Frame(kind, channel_id, corr, payload), bytes(data[end:])


class FrameReader:
    """Incremental decoder for a byte stream.

    >>> r = FrameReader()
    >>> list(r.feed(encode_frame(Frame(FrameKind.EVENT, 1, 0, b"x"))))
    [Frame(kind=<FrameKind.EVENT: 4>, channel_id=1, correlation_id=0, payload=b'x')]
    """

    def __init__(self):
        self._buf = bytearray()
        self._pos = 0

    @property
    def pending(self) -> int:
        return len(self._buf) - self._pos

    def feed(self, data: bytes):
        self._buf += data
        buf = self._buf
        while True:
            view = memoryview(buf)[self._pos:]
            try:
                kind, channel_id, corr, length = decode_header(view)
            except NeedMoreBytes:
                view.release()
                break
            end = HEADER_SIZE + length
            if len(view) < end:
                view.release()
                break
            payload = bytes(view[HEADER_SIZE:end])
            view.release()
            self._pos += end
            yield Frame(kind, channel_id, corr, payload)
        if self._pos > 65536 and self._pos * 2 > len(buf):
            del buf[:self._pos]
            self._pos = 0
