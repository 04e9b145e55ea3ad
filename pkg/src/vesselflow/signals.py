"""Boundary signal definitions and evaluation.

A signal supplies the prescribed pressure or flow value at an external
end of the network as a function of time. Three kinds are supported:
a constant, a table of (t, value) samples with linear interpolation and
constant extrapolation, and a sinusoid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError


@dataclass(frozen=True)
class ConstantSignal:
    value: float


@dataclass(frozen=True)
class TableSignal:
    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.times) < 2:
            raise ConfigError("table signal needs at least 2 points")
        if len(self.times) != len(self.values):
            raise ConfigError("table signal times/values length mismatch")
        t = np.asarray(self.times, dtype=float)
        if not np.all(np.diff(t) > 0):
            raise ConfigError("table signal times must be strictly increasing")


@dataclass(frozen=True)
class SineSignal:
    mean: float
    amplitude: float
    frequency: float  # Hz
    phase: float = 0.0  # rad


BoundarySignal = ConstantSignal | TableSignal | SineSignal


def eval_signal(sig: BoundarySignal, t: float) -> float:
    """Evaluate a boundary signal at time t.

    Constant and sine signals are exact; table signals interpolate
    linearly and hold the end values outside the tabulated range.
    """
    if isinstance(sig, ConstantSignal):
        return sig.value
    if isinstance(sig, SineSignal):
        return sig.mean + sig.amplitude * np.sin(
            2.0 * np.pi * sig.frequency * t + sig.phase
        )
    if isinstance(sig, TableSignal):
        return float(np.interp(t, sig.times, sig.values))
    raise TypeError(f"not a boundary signal: {sig!r}")
