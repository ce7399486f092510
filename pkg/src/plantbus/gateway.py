"""Simulated DCS data sources feeding session streams.

Four generator families stand in for vendor fieldbus drivers: ``constant``,
``ramp`` (linear drift), ``sine`` and ``random_walk``.  Every generator is a
pure function of the SignalSpec and the timestamp.

Random walk PRNG
----------------
``random_walk`` is counter based, so the value at tick ``k`` depends only on
``seed`` and ``k``.  Draw number ``n`` (``n = 1, 2, ...``) is the SplitMix64
output for that position::

    x = (seed + n * 0x9E3779B97F4A7C15) mod 2**64
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    x = (x ^ (x >> 27)) * 0x94D049BB133111EB mod 2**64
    x =  x ^ (x >> 31)

Step ``i`` (``i >= 1``) uses draws ``2i-1`` and ``2i`` through Box-Muller::

    u1 = ((d1 >> 11) + 1) / 2**53        # in (0, 1]
    u2 =  (d2 >> 11)      / 2**53        # in [0, 1)
    z_i = sqrt(-2 ln u1) * cos(2 pi u2)

and ``value(k) = start + step_sd * (z_1 + ... + z_k)``, summed left to right.
The tick is ``t_ms // step_ms`` (``step_ms`` defaults to 1000).
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field

from plantbus.errors import ChannelClosed, InvalidSpec, StreamClosed
from plantbus.rtdb.store import Kind, Quality, Sample, VariableId, check_name, encode_sample

GENERATORS = {
    "constant": ("c",),
    "ramp": ("offset", "slope"),
    "sine": ("amplitude", "period_s", "phase_rad", "offset"),
    "random_walk": ("start", "step_sd", "seed"),
}
_OPTIONAL = {"sine": {"phase_rad": 0.0, "offset": 0.0}, "ramp": {"offset": 0.0},
             "random_walk": {"step_ms": 1000}}

_MASK = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_TWO_PI = 2.0 * math.pi


def splitmix64(seed: int, n: int) -> int:
    """The ``n``-th SplitMix64 output for ``seed``."""
    x = (seed + n * _GAMMA) & _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def normal_step(seed: int, i: int) -> float:
    """Standard normal draw for random-walk step ``i`` (1-based)."""
    d1 = splitmix64(seed, 2 * i - 1)
    d2 = splitmix64(seed, 2 * i)
    u1 = ((d1 >> 11) + 1) * 2.0 ** -53
    u2 = (d2 >> 11) * 2.0 ** -53
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(_TWO_PI * u2)


class _WalkCache:
    """Prefix sums of normal steps per seed.

    Purely a memo: entry ``k`` is always the same left-to-right sum, so
    cached and fresh evaluations agree bit for bit.
    """

    def __init__(self):
        self._sums: dict[int, list[float]] = {}
        self._lock = threading.Lock()

    def prefix(self, seed: int, k: int) -> float:
        with self._lock:
            sums = self._sums.setdefault(seed, [0.0])
            acc = sums[-1]
            for i in range(len(sums), k + 1):
                acc += normal_step(seed, i)
                sums.append(acc)
            return sums[k]


_walks = _WalkCache()


@dataclass(frozen=True)
class SignalSpec:
    variable: VariableId
    generator: str
    params: dict = field(default_factory=dict)
    # gateway component hosting the signal; None means "any"
    component: str | None = None
    # outgoing channel id carrying the signal; None means the first one
    channel: int | None = None

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise InvalidSpec(f"unknown generator {self.generator!r}")
        if self.channel is not None and (isinstance(self.channel, bool)
                                         or not isinstance(self.channel, int)
                                         or not 0 <= self.channel <= 0xFFFFFFFF):
            raise InvalidSpec(f"{self.variable.name}: channel must be a 32-bit unsigned id")
        params = dict(_OPTIONAL.get(self.generator, {}))
        params.update(self.params)
        unknown = sorted(set(params) - set(GENERATORS[self.generator])
                         - set(_OPTIONAL.get(self.generator, {})))
        if unknown:
            raise InvalidSpec(f"{self.variable.name}: unknown parameter {', '.join(unknown)}")
        missing = [k for k in GENERATORS[self.generator] if k not in params]
        if missing:
            raise InvalidSpec(f"{self.variable.name}: {self.generator} needs {', '.join(missing)}")
        for k, v in params.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise InvalidSpec(f"{self.variable.name}: parameter {k} must be a finite number")
        if self.generator == "sine" and params["period_s"] <= 0:
            raise InvalidSpec("sine period_s must be positive")
        if self.generator == "random_walk":
            if params["step_sd"] < 0:
                raise InvalidSpec("random_walk step_sd must be >= 0")
            seed = params["seed"]
            if not isinstance(seed, int) or not 0 <= seed <= _MASK:
                raise InvalidSpec("random_walk seed must be an unsigned 64-bit integer")
            if not isinstance(params["step_ms"], int) or params["step_ms"] <= 0:
                raise InvalidSpec("random_walk step_ms must be a positive integer")
        object.__setattr__(self, "params", params)

    @classmethod
    def from_dict(cls, obj: dict) -> "SignalSpec":
        obj = dict(obj)
        try:
            name = check_name(obj.pop("variable"))
            generator = obj.pop("generator")
        except KeyError as exc:
            raise InvalidSpec(f"signal spec missing {exc.args[0]!r}") from None
        component = obj.pop("component", None)
        channel = obj.pop("channel", None)
        params = dict(obj.pop("params", {}))
        params.update(obj)
        return cls(VariableId(name, Kind.RAW), generator, params, component, channel)

    def to_dict(self) -> dict:
        out = {"variable": self.variable.name, "generator": self.generator,
               "params": dict(self.params)}
        if self.component is not None:
            out["component"] = self.component
        if self.channel is not None:
            out["channel"] = self.channel
        return out


def sample_signal(spec: SignalSpec, t_ms: int) -> float:
    if t_ms < 0:
        raise InvalidSpec("t_ms must be >= 0")
    p = spec.params
    g = spec.generator
    if g == "constant":
        return float(p["c"])
    if g == "ramp":
        return p["offset"] + p["slope"] * (t_ms / 1000)
    if g == "sine":
        return p["offset"] + p["amplitude"] * math.sin(
            _TWO_PI * (t_ms / 1000) / p["period_s"] + p["phase_rad"])
    k = t_ms // p["step_ms"]
    return p["start"] + p["step_sd"] * _walks.prefix(p["seed"], k)


@dataclass(frozen=True)
class AcquisitionConfig:
    specs: tuple
    period_ms: int = 1000
    tick_count: int = 1

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        if self.period_ms <= 0:
            raise InvalidSpec("period_ms must be positive")
        if self.tick_count <= 0:
            raise InvalidSpec("tick_count must be positive")
        names = [s.variable.name for s in self.specs]
        if len(set(names)) != len(names):
            raise InvalidSpec("duplicate variable in acquisition config")


class Acquisition:
    """Tick-by-tick driver; :func:`run_acquisition` loops it.

    ``sinks`` maps variable name to anything with ``send(bytes)``, normally a
    :class:`~plantbus.session.StreamHandle`.  ``on_emit(sample)`` runs just
    before each send.  Signals are evaluated at ``timestamp - signal_origin_ms``;
    live nodes set the origin to their start time so that a random walk does
    not have to replay every step since the epoch.
    """

    def __init__(self, config: AcquisitionConfig, clock_start_ms: int, sinks, on_emit=None,
                 signal_origin_ms: int = 0):
        missing = [s.variable.name for s in config.specs if s.variable.name not in sinks]
        if missing:
            raise InvalidSpec(f"no stream for {', '.join(missing)}")
        self.config = config
        self.clock_start_ms = clock_start_ms
        self.sinks = sinks
        self.on_emit = on_emit
        self.signal_origin_ms = signal_origin_ms
        self.emitted = 0

    def time_of(self, k: int) -> int:
        return self.clock_start_ms + k * self.config.period_ms

    def tick(self, k: int) -> list[Sample]:
        t = self.time_of(k)
        out = []
        for spec in self.config.specs:
            value = sample_signal(spec, t - self.signal_origin_ms)
            sample = Sample(spec.variable, t, value, Quality.GOOD)
            if self.on_emit is not None:
                self.on_emit(sample)
            try:
                self.sinks[spec.variable.name].send(encode_sample(sample))
            except (StreamClosed, ChannelClosed) as exc:
                raise StreamClosed(f"{spec.variable.name}: {exc} after {self.emitted} samples",
                                   emitted=self.emitted) from exc
            self.emitted += 1
            out.append(sample)
        return out


def run_acquisition(config: AcquisitionConfig, clock_start_ms: int, sinks, clock=None,
                    on_emit=None) -> int:
    """Emit every tick of ``config``; returns ``len(specs) * tick_count``."""
    acq = Acquisition(config, clock_start_ms, sinks, on_emit)
    for k in range(config.tick_count):
        if clock is not None:
            clock.sleep_until(acq.time_of(k))
        acq.tick(k)
    return acq.emitted
