"""Connections, channels and the four session patterns.

A :class:`Connection` owns one transport and decodes incoming bytes into
frames routed by channel id.  TCP bytes arrive on a reader thread; pipe
bytes are pushed on the sender's thread.  Replies (``RPC_RESP``,
``RPC_ERR``, ``ACK``) are resolved on that delivery path; everything else goes
to the channel's own dispatcher thread, which runs user handlers one at a
time in arrival order.  No lock is held while a user handler runs.
"""

from __future__ import annotations

import itertools
import logging
import queue
import struct
import threading
import time
import zlib
from concurrent.futures import Future
from concurrent.futures import TimeoutError as FutureTimeout
from dataclasses import dataclass

from plantbus.errors import (
    AlreadySubscribed,
    ChannelClosed,
    ChecksumMismatch,
    DuplicateChannelId,
    DuplicateMethod,
    FrameError,
    PayloadTooLarge,
    RemoteError,
    StreamClosed,
    Timeout,
)
from plantbus.session.codec import MAX_PAYLOAD, Frame, FrameKind, FrameReader, encode_frame
from plantbus.session.transport import Binding, LocalHub, connect

log = logging.getLogger(__name__)

STREAM_WINDOW = 1024
ACK_EVERY = 256
DEFAULT_CHUNK = 64 * 1024

_ACK_STREAM = 0x01
_ACK_FILE_OK = 0x02
_ACK_FILE_BAD = 0x03
_U16 = struct.Struct(">H")
_U64 = struct.Struct(">Q")
_RECEIPT = struct.Struct(">BIQ")


def crc32(data: bytes) -> int:
    """CRC-32 as in ISO 3309 (reflected 0x04C11DB7, init and final XOR 0xFFFFFFFF)."""
    return zlib.crc32(data) & 0xFFFFFFFF


def pack_method(method: str, args: bytes = b"") -> bytes:
    name = method.encode("utf-8")
    if len(name) > 0xFFFF:
        raise ValueError("method name too long")
    return _U16.pack(len(name)) + name + bytes(args)


def unpack_method(payload: bytes) -> tuple[str, bytes]:
    if len(payload) < 2:
        raise ValueError("RPC payload shorter than its method length prefix")
    (n,) = _U16.unpack_from(payload)
    if len(payload) < 2 + n:
        raise ValueError("RPC method name truncated")
    return payload[2:2 + n].decode("utf-8"), payload[2 + n:]


def _pack_error(exc: BaseException) -> bytes:
    return pack_method(type(exc).__name__, str(exc).encode("utf-8"))


@dataclass(frozen=True)
class FileReceipt:
    name: str
    size_bytes: int
    checksum: int


@dataclass(frozen=True)
class StreamMessage:
    """What a stream receiver sees: ``kind`` is ``open``, ``data`` or ``close``."""

    kind: str
    stream_id: int
    payload: bytes = b""


@dataclass(frozen=True)
class ReceivedFile:
    name: str
    content: bytes
    checksum: int


class Registration:
    def __init__(self, cancel):
        self._cancel = cancel

    def cancel(self):
        if self._cancel is not None:
            self._cancel()
            self._cancel = None


class _IncomingFile:
    __slots__ = ("name", "size", "parts")

    def __init__(self, name, size):
        self.name = name
        self.size = size
        self.parts = []


class StreamHandle:
    """Sending side of one data stream, with windowed flow control."""

    def __init__(self, channel: "Channel", stream_id: int, window: int = STREAM_WINDOW):
        self.channel = channel
        self.id = stream_id
        self.window = window
        self.sent = 0
        self.acked = 0
        self.max_in_flight = 0
        self.closed = False
        self._cond = threading.Condition()
        self._send_lock = threading.Lock()

    @property
    def in_flight(self) -> int:
        return self.sent - self.acked

    def _on_ack(self, consumed: int):
        with self._cond:
            if consumed > self.acked:
                self.acked = consumed
            self._cond.notify_all()

    def _wake(self):
        with self._cond:
            self._cond.notify_all()

    def send(self, payload: bytes):
        if len(payload) > MAX_PAYLOAD:
            raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
        with self._send_lock:
            with self._cond:
                while True:
                    if self.closed:
                        raise StreamClosed(f"stream {self.id} is closed")
                    if self.channel.closed:
                        raise ChannelClosed(f"channel {self.channel.id} is closed")
                    if self.sent - self.acked < self.window:
                        break
                    self._cond.wait(0.5)
                self.sent += 1
                if self.sent - self.acked > self.max_in_flight:
                    self.max_in_flight = self.sent - self.acked
            self.channel._send(FrameKind.STREAM_DATA, self.id, payload)

    def close(self):
        with self._send_lock:
            if self.closed:
                raise StreamClosed(f"stream {self.id} is already closed")
            self.closed = True
            self.channel._send(FrameKind.STREAM_CLOSE, self.id)
        self._wake()

    def wait_drained(self, timeout: float | None = None) -> bool:
        """Block until the receiver has acknowledged every frame sent so far."""
        with self._cond:
            return self._cond.wait_for(
                lambda: self.acked >= self.sent or self.channel.closed, timeout)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        if not self.closed and not self.channel.closed:
            self.close()


class Channel:
    """One logical, FIFO, bidirectional session channel on a connection."""

    def __init__(self, connection: "Connection", channel_id: int):
        self.connection = connection
        self.id = channel_id
        self.claimed = False
        self.closed = False
        # test hook: applied to every incoming FILE_CHUNK payload
        self.chunk_filter = None
        self.received_files: queue.SimpleQueue = queue.SimpleQueue()

        self._cond = threading.Condition()
        self._methods: dict = {}
        self._subscriber = None
        self._stream_handler = None
        self._file_handler = None
        self._pending: dict[int, Future] = {}
        self._files_out: dict[int, Future] = {}
        self._streams_out: dict[int, StreamHandle] = {}
        self._streams_in: dict[int, int] = {}
        self._files_in: dict[int, _IncomingFile] = {}

        self._inbox: queue.SimpleQueue = queue.SimpleQueue()
        self._dispatcher = threading.Thread(
            target=self._dispatch_loop, name=f"chan-{channel_id}", daemon=True)
        self._dispatcher.start()

    def __repr__(self):
        state = "closed" if self.closed else "open"
        return f"<Channel {self.id} {state} on {self.connection.name}>"

    @property
    def binding(self) -> Binding | None:
        return self.connection.binding

    @property
    def state(self) -> str:
        return "closed" if self.closed else "open"

    # -- sending ----------------------------------------------------------------

    def _check_open(self):
        if self.closed:
            raise ChannelClosed(f"channel {self.id} is closed")

    def _send(self, kind, corr=0, payload=b""):
        self._check_open()
        self.connection.send_frame(Frame(kind, self.id, corr, payload))

    # -- RPC ----------------------------------------------------------------------

    def call(self, method: str, payload: bytes = b"", timeout_ms: int = 5000) -> bytes:
        if timeout_ms <= 0:
            raise ValueError("timeout_ms must be positive")
        self._check_open()
        corr = self.connection.next_correlation_id()
        fut: Future = Future()
        self._pending[corr] = fut
        try:
            self._send(FrameKind.RPC_REQ, corr, pack_method(method, payload))
            try:
                return fut.result(timeout_ms / 1000.0)
            except FutureTimeout:
                raise Timeout(f"no reply to {method!r} within {timeout_ms} ms") from None
        finally:
            self._pending.pop(corr, None)

    def serve(self, method: str, handler) -> Registration:
        with self._cond:
            if method in self._methods:
                raise DuplicateMethod(f"method {method!r} already served on channel {self.id}")
            self._methods[method] = handler
        return Registration(lambda: self._methods.pop(method, None))

    # -- events -------------------------------------------------------------------

    def publish(self, payload: bytes):
        if len(payload) > MAX_PAYLOAD:
            raise PayloadTooLarge(f"payload of {len(payload)} bytes exceeds {MAX_PAYLOAD}")
        self._send(FrameKind.EVENT, 0, payload)

    def subscribe(self, handler) -> Registration:
        with self._cond:
            if self._subscriber is not None:
                raise AlreadySubscribed(f"channel {self.id} already has a subscriber")
            self._subscriber = handler
            self._cond.notify_all()
        return Registration(lambda: self._clear("_subscriber"))

    # -- streams -------------------------------------------------------------------

    def open_stream(self, meta: bytes = b"", window: int = STREAM_WINDOW) -> StreamHandle:
        self._check_open()
        sid = self.connection.next_correlation_id()
        handle = StreamHandle(self, sid, window)
        self._streams_out[sid] = handle
        self._send(FrameKind.STREAM_OPEN, sid, meta)
        return handle

    def on_stream(self, handler) -> Registration:
        """Receive :class:`StreamMessage` objects for every incoming stream."""
        with self._cond:
            if self._stream_handler is not None:
                raise AlreadySubscribed(f"channel {self.id} already has a stream receiver")
            self._stream_handler = handler
            self._cond.notify_all()
        return Registration(lambda: self._clear("_stream_handler"))

    # -- files ---------------------------------------------------------------------

    def send_file(self, name: str, content: bytes, chunk_size: int = DEFAULT_CHUNK) -> FileReceipt:
        if not 0 < chunk_size <= MAX_PAYLOAD:
            raise ValueError("chunk_size must be in 1..16 MiB")
        self._check_open()
        content = bytes(content)
        checksum = crc32(content)
        corr = self.connection.next_correlation_id()
        fut: Future = Future()
        self._files_out[corr] = fut
        try:
            self._send(FrameKind.FILE_META, corr, _U64.pack(len(content)) + name.encode("utf-8"))
            for off in range(0, len(content), chunk_size):
                self._send(FrameKind.FILE_CHUNK, corr, content[off:off + chunk_size])
            self._send(FrameKind.FILE_DONE, corr, struct.pack(">I", checksum))
            status, receipt = fut.result()
        finally:
            self._files_out.pop(corr, None)
        if status != _ACK_FILE_OK or receipt.checksum != checksum or receipt.size_bytes != len(content):
            raise ChecksumMismatch(
                f"{name}: sent crc {checksum:08x}, receiver computed {receipt.checksum:08x}")
        return receipt

    def on_file(self, handler) -> Registration:
        """Deliver verified files to ``handler(ReceivedFile)`` instead of ``received_files``."""
        with self._cond:
            if self._file_handler is not None:
                raise AlreadySubscribed(f"channel {self.id} already has a file receiver")
            self._file_handler = handler
        return Registration(lambda: self._clear("_file_handler"))

    # -- lifecycle -----------------------------------------------------------------

    def _clear(self, attr):
        with self._cond:
            setattr(self, attr, None)

    def close(self):
        self.connection._release(self)
        self._shutdown()

    def _shutdown(self):
        with self._cond:
            if self.closed:
                return
            self.closed = True
            self._cond.notify_all()
        for fut in list(self._pending.values()) + list(self._files_out.values()):
            if not fut.done():
                fut.set_exception(ChannelClosed(f"channel {self.id} closed"))
        for handle in list(self._streams_out.values()):
            handle._wake()
        self._inbox.put(None)

    # -- receiving (reader thread) -------------------------------------------------

    def _route(self, frame: Frame):
        kind = frame.kind
        if kind in (FrameKind.RPC_RESP, FrameKind.RPC_ERR):
            fut = self._pending.get(frame.correlation_id)
            if fut is None or fut.done():
                return
            if kind == FrameKind.RPC_RESP:
                fut.set_result(frame.payload)
            else:
                try:
                    etype, msg = unpack_method(frame.payload)
                    err = RemoteError(msg.decode("utf-8", "replace"))
                    err.remote_type = etype
                except ValueError:
                    err = RemoteError(frame.payload.decode("utf-8", "replace"))
                    err.remote_type = ""
                fut.set_exception(err)
        elif kind == FrameKind.ACK:
            self._on_ack(frame)
        else:
            self._inbox.put(frame)

    def _on_ack(self, frame: Frame):
        p = frame.payload
        if not p:
            return
        if p[0] == _ACK_STREAM and len(p) >= 9:
            handle = self._streams_out.get(frame.correlation_id)
            if handle is not None:
                handle._on_ack(_U64.unpack_from(p, 1)[0])
        elif p[0] in (_ACK_FILE_OK, _ACK_FILE_BAD) and len(p) >= _RECEIPT.size:
            fut = self._files_out.get(frame.correlation_id)
            if fut is not None and not fut.done():
                status, crc, size = _RECEIPT.unpack_from(p)
                name = p[_RECEIPT.size:].decode("utf-8", "replace")
                fut.set_result((status, FileReceipt(name, size, crc)))

    # -- dispatcher thread ---------------------------------------------------------

    def _wait_for(self, attr):
        with self._cond:
            while getattr(self, attr) is None and not self.closed:
                self._cond.wait()
            return getattr(self, attr)

    def _reply(self, kind, corr, payload):
        try:
            self._send(kind, corr, payload)
        except ChannelClosed:
            pass

    def _dispatch_loop(self):
        # frames for an id the local side has not opened wait until it does
        with self._cond:
            while not self.claimed and not self.closed:
                self._cond.wait()
        while True:
            frame = self._inbox.get()
            if frame is None:
                return
            try:
                self._dispatch(frame)
            except Exception:
                log.exception("channel %s: dispatch of %s failed", self.id, frame.kind.name)

    def _dispatch(self, frame: Frame):
        kind, corr = frame.kind, frame.correlation_id
        if kind == FrameKind.RPC_REQ:
            try:
                method, args = unpack_method(frame.payload)
            except ValueError as exc:
                self._reply(FrameKind.RPC_ERR, corr, _pack_error(exc))
                return
            handler = self._methods.get(method)
            if handler is None:
                self._reply(FrameKind.RPC_ERR, corr,
                            pack_method("UnknownMethod", f"no method {method!r}".encode()))
                return
            try:
                result = handler(args)
            except Exception as exc:
                self._reply(FrameKind.RPC_ERR, corr, _pack_error(exc))
                return
            self._reply(FrameKind.RPC_RESP, corr, b"" if result is None else bytes(result))
        elif kind == FrameKind.EVENT:
            handler = self._wait_for("_subscriber")
            if handler is not None:
                self._run_user(handler, frame.payload)
        elif kind in (FrameKind.STREAM_OPEN, FrameKind.STREAM_DATA, FrameKind.STREAM_CLOSE):
            self._dispatch_stream(frame)
        elif kind in (FrameKind.FILE_META, FrameKind.FILE_CHUNK, FrameKind.FILE_DONE):
            self._dispatch_file(frame)

    def _run_user(self, handler, arg):
        try:
            handler(arg)
        except Exception:
            log.exception("channel %s: handler failed", self.id)

    def _dispatch_stream(self, frame: Frame):
        handler = self._wait_for("_stream_handler")
        sid = frame.correlation_id
        if frame.kind == FrameKind.STREAM_OPEN:
            self._streams_in[sid] = 0
            if handler is not None:
                self._run_user(handler, StreamMessage("open", sid, frame.payload))
        elif frame.kind == FrameKind.STREAM_DATA:
            if handler is not None:
                self._run_user(handler, StreamMessage("data", sid, frame.payload))
            n = self._streams_in.get(sid, 0) + 1
            self._streams_in[sid] = n
            if n % ACK_EVERY == 0:
                self._reply(FrameKind.ACK, sid, bytes([_ACK_STREAM]) + _U64.pack(n))
        else:
            n = self._streams_in.pop(sid, 0)
            if handler is not None:
                self._run_user(handler, StreamMessage("close", sid, frame.payload))
            self._reply(FrameKind.ACK, sid, bytes([_ACK_STREAM]) + _U64.pack(n))

    def _dispatch_file(self, frame: Frame):
        corr = frame.correlation_id
        if frame.kind == FrameKind.FILE_META:
            (size,) = _U64.unpack_from(frame.payload)
            self._files_in[corr] = _IncomingFile(frame.payload[8:].decode("utf-8"), size)
            return
        incoming = self._files_in.get(corr)
        if incoming is None:
            log.warning("channel %s: file frame for unknown transfer %s", self.id, corr)
            return
        if frame.kind == FrameKind.FILE_CHUNK:
            chunk = frame.payload
            if self.chunk_filter is not None:
                chunk = self.chunk_filter(chunk)
            incoming.parts.append(chunk)
            return
        del self._files_in[corr]
        content = b"".join(incoming.parts)
        (sent_crc,) = struct.unpack_from(">I", frame.payload)
        got_crc = crc32(content)
        ok = got_crc == sent_crc and len(content) == incoming.size
        status = _ACK_FILE_OK if ok else _ACK_FILE_BAD
        self._reply(FrameKind.ACK, corr,
                    _RECEIPT.pack(status, got_crc, len(content)) + incoming.name.encode("utf-8"))
        if ok:
            received = ReceivedFile(incoming.name, content, got_crc)
            handler = self._file_handler
            if handler is not None:
                self._run_user(handler, received)
            else:
                self.received_files.put(received)


class Connection:
    """A framed, multiplexed byte connection carrying many channels."""

    def __init__(self, transport, name: str = "", binding: Binding | None = None):
        self.transport = transport
        self.name = name
        self.binding = binding
        self.closed = False
        self._channels: dict[int, Channel] = {}
        self._lock = threading.Lock()
        self._send_lock = threading.Lock()
        self._ids = itertools.count(1)
        self._id_lock = threading.Lock()
        self._close_callbacks = []
        self._frames = FrameReader()
        self._feed_lock = threading.RLock()
        self._push = getattr(self.transport, "push", False)

    def __repr__(self):
        return f"<Connection {self.name} channels={sorted(self._channels)}>"

    def start(self):
        if self._push:
            self.transport.attach(self._feed, self.close)
        else:
            threading.Thread(target=self._read_loop, name=f"reader-{self.name}",
                             daemon=True).start()
        return self

    def next_correlation_id(self) -> int:
        with self._id_lock:
            return next(self._ids)

    def open_channel(self, channel_id: int) -> Channel:
        """Claim ``channel_id`` on this connection.

        Frames that reached an unclaimed id are held and delivered once it is
        claimed; claiming the same id twice raises :class:`DuplicateChannelId`.
        """
        if not 0 <= channel_id < 1 << 32:
            raise ValueError(f"channel id out of range: {channel_id}")
        with self._lock:
            if self.closed:
                raise ChannelClosed(f"connection {self.name} is closed")
            ch = self._channels.get(channel_id)
            if ch is None:
                ch = self._channels[channel_id] = Channel(self, channel_id)
            elif ch.claimed:
                raise DuplicateChannelId(f"channel {channel_id} already open on {self.name}")
            with ch._cond:
                ch.claimed = True
                ch._cond.notify_all()
            return ch

    def channels(self) -> list[Channel]:
        with self._lock:
            return list(self._channels.values())

    def _release(self, ch: Channel):
        with self._lock:
            if self._channels.get(ch.id) is ch:
                del self._channels[ch.id]

    def send_frame(self, frame: Frame):
        data = encode_frame(frame)
        with self._send_lock:
            if self.closed:
                raise ChannelClosed(f"connection {self.name} is closed")
            self.transport.send(data)

    def on_close(self, callback):
        self._close_callbacks.append(callback)

    def _feed(self, data: bytes):
        with self._feed_lock:
            try:
                for frame in self._frames.feed(data):
                    with self._lock:
                        ch = self._channels.get(frame.channel_id)
                        if ch is None:
                            if self.closed:
                                return
                            ch = self._channels[frame.channel_id] = Channel(self, frame.channel_id)
                    ch._route(frame)
            except FrameError:
                log.exception("connection %s: protocol error, closing", self.name)
                self.close()
        if self._push:
            # let the woken dispatcher run before the sender queues more work,
            # as a socket write would
            time.sleep(0)

    def _read_loop(self):
        try:
            while not self.closed:
                data = self.transport.recv()
                if not data:
                    break
                self._feed(data)
        finally:
            self.close()

    def close(self):
        with self._lock:
            if self.closed:
                return
            self.closed = True
            channels = list(self._channels.values())
        self.transport.close()
        for ch in channels:
            ch._shutdown()
        for cb in self._close_callbacks:
            try:
                cb(self)
            except Exception:
                log.exception("close callback failed")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class Session:
    """Client-side connection pool: one connection per distinct binding."""

    def __init__(self, hub: LocalHub | None = None):
        self.hub = hub
        self._conns: dict[Binding, Connection] = {}
        self._lock = threading.Lock()

    def connection(self, binding: Binding) -> Connection:
        with self._lock:
            conn = self._conns.get(binding)
            if conn is None or conn.closed:
                conn = connect(binding, hub=self.hub)
                conn.binding = binding
                self._conns[binding] = conn
            return conn

    def open_channel(self, binding: Binding, channel_id: int) -> Channel:
        return self.connection(binding).open_channel(channel_id)

    def close(self):
        with self._lock:
            conns, self._conns = list(self._conns.values()), {}
        for c in conns:
            c.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


_default_session = Session()


def open_channel(binding: Binding, channel_id: int, session: Session | None = None) -> Channel:
    """Open ``channel_id`` toward ``binding`` on the (default) session's connection."""
    return (session or _default_session).open_channel(binding, channel_id)
