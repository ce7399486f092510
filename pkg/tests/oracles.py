"""Independent reference implementations used as test oracles.

None of these import the package under test.
"""

import math
import re
from fractions import Fraction


def crc32_reference(data: bytes) -> int:
    """Bitwise CRC-32 (reflected 0x04C11DB7, init/final XOR 0xFFFFFFFF)."""
    crc = 0xFFFFFFFF
    for byte in data:
        crc ^= byte
        for _ in range(8):
            crc = (crc >> 1) ^ (0xEDB88320 if crc & 1 else 0)
    return crc ^ 0xFFFFFFFF


def rollup_oracle(samples, interval_len, t0, t1):
    """Partition (t, value) pairs by floor(t / L) over intervals overlapping [t0, t1).

    Returns a list of (start, min, max, mean, count); the mean is computed
    exactly with rationals and rounded once.
    """
    if t0 >= t1:
        return []
    first = (t0 // interval_len) * interval_len
    buckets = {}
    for t, v in samples:
        start = (t // interval_len) * interval_len
        if first <= start < t1:
            buckets.setdefault(start, []).append(v)
    out = []
    for start in sorted(buckets):
        vs = buckets[start]
        exact = sum((Fraction(v) for v in vs), Fraction(0)) / len(vs)
        out.append((start, min(vs), max(vs), float(exact), len(vs)))
    return out


def rel_close(a: float, b: float, rel: float) -> bool:
    if a == b:
        return True
    return abs(a - b) <= rel * max(abs(a), abs(b))


MASK = (1 << 64) - 1


def splitmix_draw(seed: int, n: int) -> int:
    x = (seed + n * 0x9E3779B97F4A7C15) & MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK
    return x ^ (x >> 31)


def random_walk_replay(start: float, step_sd: float, seed: int, k: int) -> float:
    """Replay the documented walk from step 1 to k, one step at a time."""
    total = 0.0
    for i in range(1, k + 1):
        d1, d2 = splitmix_draw(seed, 2 * i - 1), splitmix_draw(seed, 2 * i)
        u1 = ((d1 >> 11) + 1) / 2.0**53
        u2 = (d2 >> 11) / 2.0**53
        total += math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
    return start + step_sd * total


_TOKEN = re.compile(r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<ident>[A-Za-z_][A-Za-z0-9_.]*)")


def eval_expr_oracle(text: str, env: dict) -> float:
    """Evaluate an arithmetic expression with Python's own parser.

    Dotted identifiers are mapped to placeholder names first.
    """
    names = {}

    def sub(m):
        if m.group("num"):
            return m.group("num")
        return names.setdefault(m.group("ident"), f"_v{len(names)}")

    src = _TOKEN.sub(sub, text.replace("×", "*").replace("÷", "/"))
    scope = {alias: float(env[name]) for name, alias in names.items()}
    return float(eval(src, {"__builtins__": {}}, scope))
