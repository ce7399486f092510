"""Dedicated session layer: framed RPC, events, streams and file transfer."""

from plantbus.session.channel import (
    ACK_EVERY,
    STREAM_WINDOW,
    Channel,
    Connection,
    FileReceipt,
    ReceivedFile,
    Registration,
    Session,
    StreamHandle,
    StreamMessage,
    crc32,
    open_channel,
    pack_method,
    unpack_method,
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
from plantbus.session.transport import (
    Binding,
    LocalHub,
    PipeTransport,
    TcpListener,
    TcpTransport,
    connect,
    default_hub,
    listen,
    parse_address,
)

__all__ = [
    "ACK_EVERY", "STREAM_WINDOW", "Channel", "Connection", "FileReceipt", "ReceivedFile",
    "Registration", "Session", "StreamHandle", "StreamMessage", "crc32", "open_channel",
    "pack_method", "unpack_method",
    "HEADER_SIZE", "MAX_PAYLOAD", "Frame", "FrameKind", "FrameReader", "decode_frame",
    "encode_frame",
    "Binding", "LocalHub", "PipeTransport", "TcpListener", "TcpTransport", "connect",
    "default_hub", "listen", "parse_address",
]
