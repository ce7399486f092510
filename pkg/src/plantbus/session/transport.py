"""Byte transports beneath the session layer.

Two transports share one tiny interface (``send``, ``recv``, ``close``):
an in-memory pipe for components living in one process and a TCP socket
for everything else.  Frames are always encoded to bytes first, so both
paths run the same codec.
"""

from __future__ import annotations

import logging
import socket
import threading
from dataclasses import dataclass

from plantbus.errors import ChannelClosed, ConnectFailure

log = logging.getLogger(__name__)

RECV_SIZE = 1 << 16


@dataclass(frozen=True)
class Binding:
    """Where a channel's peer lives: in this process, or behind ``host:port``."""

    mode: str = "in_process"
    address: str = ""

    def __post_init__(self):
        if self.mode not in ("in_process", "network"):
            raise ValueError(f"unknown binding mode {self.mode!r}")
        if self.mode == "in_process":
            if self.address:
                raise ValueError("in_process bindings carry no address")
        else:
            parse_address(self.address)

    @classmethod
    def in_process(cls) -> "Binding":
        return cls("in_process", "")

    @classmethod
    def network(cls, address: str) -> "Binding":
        return cls("network", address)

    @property
    def host_port(self) -> tuple[str, int]:
        return parse_address(self.address)


def parse_address(address: str) -> tuple[str, int]:
    host, sep, port = str(address).rpartition(":")
    if not sep or not host or not port.isdigit():
        raise ValueError(f"address must look like host:port, got {address!r}")
    p = int(port)
    if not 1 <= p <= 65535:
        raise ValueError(f"port out of range in {address!r}")
    return host, p


class PipeTransport:
    """One end of an in-memory duplex byte pipe.

    Bytes sent on one end are handed to the peer's receive callback on the
    sending thread, so the in-process path skips the reader-thread hop while
    still running the full frame codec.
    """

    push = True

    def __init__(self):
        self.peer: PipeTransport | None = None
        self._on_data = None
        self._on_eof = None
        self._backlog: list[bytes] = []
        self._lock = threading.RLock()
        self._closed = False
        self._eof_seen = False

    @classmethod
    def pair(cls) -> tuple["PipeTransport", "PipeTransport"]:
        a, b = cls(), cls()
        a.peer, b.peer = b, a
        return a, b

    def attach(self, on_data, on_eof):
        with self._lock:
            self._on_data, self._on_eof = on_data, on_eof
            backlog, self._backlog = self._backlog, []
            for data in backlog:
                on_data(data)
            if self._eof_seen:
                on_eof()

    def _deliver(self, data: bytes):
        with self._lock:
            if self._eof_seen:
                raise ChannelClosed("peer closed")
            if self._on_data is None:
                self._backlog.append(data)
            else:
                self._on_data(data)

    def _eof(self):
        with self._lock:
            if self._eof_seen:
                return
            self._eof_seen = True
            cb = self._on_eof
        if cb is not None:
            cb()

    def send(self, data: bytes):
        if self._closed:
            raise ChannelClosed("transport closed")
        self.peer._deliver(bytes(data))

    def close(self):
        if self._closed:
            return
        self._closed = True
        self.peer._eof()
        self._eof()


class TcpTransport:
    def __init__(self, sock: socket.socket):
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        self.sock = sock
        self._closed = False

    @classmethod
    def connect(cls, host: str, port: int, timeout: float = 5.0) -> "TcpTransport":
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise ConnectFailure(f"cannot connect to {host}:{port}: {exc}") from exc
        sock.settimeout(None)
        return cls(sock)

    def send(self, data: bytes):
        try:
            self.sock.sendall(data)
        except OSError as exc:
            raise ChannelClosed(f"send failed: {exc}") from exc

    def recv(self) -> bytes:
        try:
            return self.sock.recv(RECV_SIZE)
        except OSError:
            return b""

    def close(self):
        if self._closed:
            return
        self._closed = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self.sock.close()


class LocalHub:
    """In-process rendezvous point, the analogue of a TCP listener.

    ``on_connection`` receives the server side of each new connection before
    its reader starts, so handlers registered there never miss a frame.
    """

    def __init__(self, on_connection=None, name: str = "local"):
        self.name = name
        self.on_connection = on_connection
        self.connections = []
        self._lock = threading.Lock()
        self._closed = False

    def connect(self):
        from plantbus.session.channel import Connection

        with self._lock:
            if self._closed or self.on_connection is None:
                raise ConnectFailure(f"no listener on local hub {self.name!r}")
            client_end, server_end = PipeTransport.pair()
            server = Connection(server_end, name=f"{self.name}/server")
            self.connections.append(server)
        self.on_connection(server)
        server.start()
        client = Connection(client_end, name=f"{self.name}/client")
        client.start()
        return client

    def close(self):
        with self._lock:
            self._closed = True
            conns, self.connections = self.connections, []
        for c in conns:
            c.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


class TcpListener:
    """Accepts TCP connections; channels are scoped per connection."""

    def __init__(self, host: str, port: int, on_connection, backlog: int = 64):
        self.on_connection = on_connection
        self.connections = []
        self._lock = threading.Lock()
        self._closed = False
        self._sock = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        self._sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        try:
            self._sock.bind((host, port))
        except OSError:
            self._sock.close()
            raise
        self._sock.listen(backlog)
        self.host, self.port = self._sock.getsockname()[:2]
        self._thread = threading.Thread(target=self._accept_loop,
                                        name=f"accept-{self.port}", daemon=True)
        self._thread.start()

    @property
    def address(self) -> str:
        return f"{self.host}:{self.port}"

    def _accept_loop(self):
        from plantbus.session.channel import Connection

        while True:
            try:
                sock, peer = self._sock.accept()
            except OSError:
                return
            conn = Connection(TcpTransport(sock), name=f"tcp:{self.port}<-{peer[1]}")
            with self._lock:
                if self._closed:
                    conn.close()
                    return
                self.connections.append(conn)
            try:
                self.on_connection(conn)
            except Exception:
                log.exception("on_connection callback failed; dropping connection")
                conn.close()
                continue
            conn.start()

    def close(self):
        with self._lock:
            self._closed = True
            conns, self.connections = self.connections, []
        try:
            # wakes a thread blocked in accept()
            self._sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        self._sock.close()
        for c in conns:
            c.close()
        self._thread.join(timeout=2)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


_default_hub = LocalHub(name="default")


def default_hub() -> LocalHub:
    return _default_hub


def listen(binding: Binding, on_connection, hub: LocalHub | None = None):
    """Start accepting connections for ``binding``; returns the listener."""
    if binding.mode == "in_process":
        hub = hub or _default_hub
        hub.on_connection = on_connection
        hub._closed = False
        return hub
    host, port = binding.host_port
    return TcpListener(host, port, on_connection)


def connect(binding: Binding, hub: LocalHub | None = None, timeout: float = 5.0):
    """Open a client :class:`~plantbus.session.channel.Connection` for ``binding``."""
    from plantbus.session.channel import Connection

    if binding.mode == "in_process":
        return (hub or _default_hub).connect()
    host, port = binding.host_port
    conn = Connection(TcpTransport.connect(host, port, timeout), name=f"tcp->{binding.address}")
    conn.start()
    return conn
