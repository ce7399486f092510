"""Simulated DCS gateway: deterministic signal generators and acquisition.

The random walk is counter-based, so its value at any time can be computed
directly without replaying earlier ticks in order.
"""

from plantbus.gateway import AcquisitionConfig, SignalSpec, run_acquisition, sample_signal
from plantbus.rtdb import VariableId, decode_sample

walk = SignalSpec(VariableId("steam.flow"), "random_walk",
                  {"start": 100.0, "step_sd": 0.5, "seed": 42})
sine = SignalSpec(VariableId("boiler.temp"), "sine",
                  {"amplitude": 5.0, "period_s": 60, "offset": 80.0})

print("random walk at t = 0, 1 s, 2 s, 1 h:",
      [round(sample_signal(walk, t), 4) for t in (0, 1000, 2000, 3_600_000)])
print("random walk within one step holds its value:",
      sample_signal(walk, 5000) == sample_signal(walk, 5999))
print("sine at a quarter period:", sample_signal(sine, 15_000))


class PrintSink:
    def send(self, payload):
        s = decode_sample(payload)
        print(f"  t={s.timestamp:>5} {s.variable.name:<12} {s.value:9.4f} {s.quality.value}")


sinks = {"steam.flow": PrintSink(), "boiler.temp": PrintSink()}
print("five acquisition ticks at 500 ms:")
n = run_acquisition(AcquisitionConfig([walk, sine], period_ms=500, tick_count=5), 0, sinks)
print(f"emitted {n} samples")
