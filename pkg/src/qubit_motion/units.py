"""Unit-suffixed quantities in config documents.

Times are normalised to microseconds, frequencies to MHz.  A bare number is
rejected: every quantity must name its unit.
"""

import re

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_PATTERN = re.compile(rf"^\s*({_NUMBER})\s*([A-Za-zµμ]+)\s*$")

_TIME = {"ns": 1e-3, "us": 1.0, "µs": 1.0, "μs": 1.0, "ms": 1e3, "s": 1e6}
_FREQ = {"hz": 1e-6, "khz": 1e-3, "mhz": 1.0, "ghz": 1e3}


class UnitError(ValueError):
    pass


def _split(value, kind):
    if isinstance(value, bool) or not isinstance(value, str):
        raise UnitError(f"{kind} {value!r} needs an explicit unit suffix")
    m = _PATTERN.match(value)
    if not m:
        raise UnitError(f"cannot parse {kind} {value!r}")
    return float(m.group(1)), m.group(2)


def parse_time(value) -> float:
    """``"12.9 us"`` -> 12.9, ``"754 ns"`` -> 0.754."""
    x, unit = _split(value, "time")
    if unit not in _TIME:
        raise UnitError(f"unknown time unit {unit!r} in {value!r} (use ns, us, ms, s)")
    return x * _TIME[unit]


def parse_frequency(value) -> float:
    """``"3.690 GHz"`` -> 3690.0 (MHz)."""
    x, unit = _split(value, "frequency")
    key = unit.lower()
    if key not in _FREQ:
        raise UnitError(f"unknown frequency unit {unit!r} in {value!r} (use Hz, kHz, MHz, GHz)")
    return x * _FREQ[key]


def format_time(us: float) -> str:
    return f"{us:.12g} us"
