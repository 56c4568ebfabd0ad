"""Parsing of times and frequencies with unit suffixes ("150ns", "10MHz")."""

from __future__ import annotations

import re
from fractions import Fraction

from homsim.errors import ConfigError

TIME_PS = {"ps": Fraction(1), "ns": Fraction(10**3), "us": Fraction(10**6), "ms": Fraction(10**9), "s": Fraction(10**12)}
FREQ_HZ = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}

_NUM = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([a-zA-Zµ]*)\s*$")


def _split(text: str):
    mt = _NUM.match(str(text))
    if not mt:
        raise ConfigError(f"cannot parse quantity {text!r}")
    return mt.group(1), mt.group(2).replace("µ", "u")


def parse_time_ps(text, default_unit: str = "ps") -> float:
    """Picoseconds from e.g. '150ns', '1.5us', '115' (taken as ``default_unit``)."""
    if isinstance(text, (int, float)):
        return float(text) * float(TIME_PS[default_unit])
    num, unit = _split(text)
    unit = unit.lower() or default_unit
    if unit not in TIME_PS:
        raise ConfigError(f"unknown time unit {unit!r} in {text!r}; use ps, ns, us, ms or s")
    return float(Fraction(num) * TIME_PS[unit])


def parse_time_ps_int(text, default_unit: str = "ps") -> int:
    """Like :func:`parse_time_ps` but the result must be a whole number of ps."""
    if isinstance(text, int):
        return text * int(TIME_PS[default_unit])
    if isinstance(text, float):
        value = Fraction(text) * TIME_PS[default_unit]
    else:
        num, unit = _split(text)
        unit = unit.lower() or default_unit
        if unit not in TIME_PS:
            raise ConfigError(f"unknown time unit {unit!r} in {text!r}; use ps, ns, us, ms or s")
        value = Fraction(num) * TIME_PS[unit]
    if value.denominator != 1:
        raise ConfigError(f"{text!r} is not a whole number of picoseconds")
    return int(value)


def parse_freq_hz(text) -> float:
    """Hertz from e.g. '10MHz', '0', '2.5 GHz' (bare numbers are Hz)."""
    if isinstance(text, (int, float)):
        return float(text)
    num, unit = _split(text)
    unit = unit.lower() or "hz"
    if unit not in FREQ_HZ:
        raise ConfigError(f"unknown frequency unit {unit!r} in {text!r}; use Hz, kHz, MHz or GHz")
    return float(num) * FREQ_HZ[unit]
