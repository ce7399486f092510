import json
import queue
import socket

import pytest

from plantbus.session import Binding, LocalHub, Session, TcpListener
from plantbus.topology import parse_plan


def free_port() -> int:
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def closed_port() -> int:
    # bound then released; nothing listens on it afterwards
    return free_port()


def example_plan_doc(split: bool, ports=None) -> dict:
    """Two raw signals plus one computed variable; optionally split over two nodes."""
    ports = ports or (free_port(), free_port())
    nodes = [{"name": "A", "address": f"127.0.0.1:{ports[0]}"},
             {"name": "B", "address": f"127.0.0.1:{ports[1]}"}]
    far = "B" if split else "A"
    return {
        "nodes": nodes,
        "components": [
            {"name": "gw", "level": "data_stream", "node": far},
            {"name": "db", "level": "data_organization", "node": "A"},
            {"name": "calc", "level": "application_processing", "node": far},
        ],
        "channels": [
            {"id": 1, "from": "gw", "to": "db", "pattern": "stream"},
            {"id": 2, "from": "calc", "to": "db", "pattern": "rpc"},
        ],
        "signals": [
            {"variable": "boiler.temp", "generator": "sine",
             "params": {"amplitude": 5.0, "period_s": 60, "offset": 80.0}},
            {"variable": "steam.flow", "generator": "random_walk",
             "params": {"start": 100.0, "step_sd": 0.5, "seed": 42}},
        ],
        "computed": [
            {"output": "boiler.duty", "inputs": ["boiler.temp", "steam.flow"],
             "expr": "boiler.temp * steam.flow / 1000"},
        ],
    }


def example_plan(split: bool):
    return parse_plan(json.dumps(example_plan_doc(split)))


@pytest.fixture
def trend_dir(tmp_path):
    d = tmp_path / "trends"
    d.mkdir()
    return d


class Link:
    """A client session and the server side of its connection, for one transport."""

    def __init__(self, mode):
        self.mode = mode
        self._accepted = queue.Queue()
        if mode == "in_process":
            self.listener = LocalHub(self._accepted.put, name="test")
            self.binding = Binding.in_process()
            self.session = Session(hub=self.listener)
        else:
            self.listener = TcpListener("127.0.0.1", 0, self._accepted.put)
            self.binding = Binding.network(self.listener.address)
            self.session = Session()
        self._server = None

    @property
    def server_conn(self):
        if self._server is None:
            self._server = self._accepted.get(timeout=5)
        return self._server

    def client(self, cid):
        return self.session.open_channel(self.binding, cid)

    def open(self, cid, setup=None):
        client = self.client(cid)
        server = self.server_conn.open_channel(cid)
        if setup is not None:
            setup(server)
        return client, server

    def close(self):
        self.session.close()
        self.listener.close()
