"""The four interaction patterns over both transports.

The same client code runs against an in-process hub and a TCP loopback
listener; only the binding differs.
"""

import os
import queue

from plantbus.session import Binding, LocalHub, Session, TcpListener

events = queue.Queue()
stream_log = queue.Queue()


def on_connection(conn):
    conn.open_channel(1).serve("echo", lambda payload: payload)
    conn.open_channel(2).subscribe(events.put)
    conn.open_channel(3).on_stream(stream_log.put)
    conn.open_channel(4)  # files land in received_files


def exercise(label, session, binding):
    rpc = session.open_channel(binding, 1)
    print(f"[{label}] rpc echo -> {rpc.call('echo', b'ping', timeout_ms=1000)!r}")

    ev = session.open_channel(binding, 2)
    for i in range(3):
        ev.publish(b"alarm %d" % i)
    print(f"[{label}] events -> {[events.get(timeout=5) for _ in range(3)]}")

    handle = session.open_channel(binding, 3).open_stream(b"meta")
    for i in range(1000):
        handle.send(i.to_bytes(4, "big"))
    handle.close()
    kinds = {}
    while True:
        msg = stream_log.get(timeout=5)
        kinds[msg.kind] = kinds.get(msg.kind, 0) + 1
        if msg.kind == "close":
            break
    print(f"[{label}] stream -> {kinds}, peak in flight {handle.max_in_flight}")

    content = os.urandom(300_000)
    receipt = session.open_channel(binding, 4).send_file("batch.csv", content, chunk_size=64 * 1024)
    print(f"[{label}] file -> {receipt.name} {receipt.size_bytes} bytes crc32={receipt.checksum:08x}")


with LocalHub(on_connection) as hub, Session(hub=hub) as s:
    exercise("in_process", s, Binding.in_process())

with TcpListener("127.0.0.1", 0, on_connection) as listener, Session() as s:
    exercise("network", s, Binding.network(listener.address))
