"""Time-series ingestion, preprocessing and excitation-signal synthesis.

All functions are pure: they return new TimeSeries objects and never modify
their inputs.  Channel data is float64 throughout.

CSV format: first column ``time_s``, remaining columns are channel names,
``.`` decimal separator, lines starting with ``#`` are comments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sp_signal

from .errors import (
    ConstantChannel,
    CutoffAboveNyquist,
    DegeneratePeriod,
    EmptyFile,
    MalformedCsv,
    MissingBase,
    MissingChannel,
    NonPositiveBase,
    NonUniformSampling,
)

TIME_COLUMN = "time_s"


@dataclass
class TimeSeries:
    """Uniformly sampled multi-channel record.

    dt is a format guarantee: no per-sample timestamps are stored.  units
    maps channel name to one of {pu, MW, V, A, none}; base holds the
    per-unit base used by per_unitize / de_per_unitize.
    """

    dt: float
    channels: dict[str, np.ndarray]
    units: dict[str, str] = field(default_factory=dict)
    base: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        lengths = {len(v) for v in self.channels.values()}
        if len(lengths) > 1:
            raise ValueError(f"channels have unequal lengths: {sorted(lengths)}")
        if lengths and min(lengths) < 2:
            raise ValueError("channels must hold at least 2 samples")
        self.channels = {k: np.asarray(v, dtype=float) for k, v in self.channels.items()}
        for name in self.channels:
            self.units.setdefault(name, "none")

    @property
    def n_samples(self) -> int:
        return len(next(iter(self.channels.values())))

    @property
    def duration(self) -> float:
        return (self.n_samples - 1) * self.dt

    def time(self) -> np.ndarray:
        return np.arange(self.n_samples) * self.dt

    def channel(self, name: str) -> np.ndarray:
        if name not in self.channels:
            raise MissingChannel(name)
        return self.channels[name]

    def has_channel(self, name: str) -> bool:
        return name in self.channels

    def copy(self) -> "TimeSeries":
        return TimeSeries(
            dt=self.dt,
            channels={k: v.copy() for k, v in self.channels.items()},
            units=dict(self.units),
            base=dict(self.base),
        )

    def with_channels(self, extra: dict[str, np.ndarray], units=None) -> "TimeSeries":
        out = self.copy()
        for name, data in extra.items():
            data = np.asarray(data, dtype=float)
            if len(data) != self.n_samples:
                raise ValueError(f"channel '{name}' length {len(data)} != {self.n_samples}")
            out.channels[name] = data
            out.units[name] = (units or {}).get(name, "none")
        return out

    def window(self, start: int, stop: int) -> "TimeSeries":
        return TimeSeries(
            dt=self.dt,
            channels={k: v[start:stop].copy() for k, v in self.channels.items()},
            units=dict(self.units),
            base=dict(self.base),
        )

    def equals(self, other: "TimeSeries") -> bool:
        if not math.isclose(self.dt, other.dt, rel_tol=0, abs_tol=0):
            return False
        if set(self.channels) != set(other.channels):
            return False
        return all(np.array_equal(self.channels[k], other.channels[k]) for k in self.channels)


def load_csv(path) -> TimeSeries:
    """Parse a delimited file into a TimeSeries.

    dt is inferred from the first two time stamps; any later interval that
    deviates by more than 1e-9 * dt is rejected as non-uniform.
    """
    header = None
    times = []
    rows = []
    lineno = 0
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            lineno += 1
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if header is None:
                if parts[0] != TIME_COLUMN:
                    raise MalformedCsv(lineno, f"first column must be '{TIME_COLUMN}'")
                if len(parts) < 2:
                    raise MalformedCsv(lineno, "no data columns")
                header = parts[1:]
                continue
            if len(parts) != len(header) + 1:
                raise MalformedCsv(lineno, f"expected {len(header) + 1} fields, got {len(parts)}")
            try:
                values = [float(p) for p in parts]
            except ValueError as exc:
                raise MalformedCsv(lineno, str(exc)) from None
            times.append(values[0])
            rows.append(values[1:])
    if header is None or len(rows) == 0:
        raise EmptyFile(f"{path}: no data rows")
    if len(rows) < 2:
        raise EmptyFile(f"{path}: need at least 2 samples")

    t = np.asarray(times)
    dt = t[1] - t[0]
    if dt <= 0:
        raise NonUniformSampling(1)
    deltas = np.diff(t)
    bad = np.nonzero(np.abs(deltas - dt) > 1e-9 * dt)[0]
    if bad.size:
        raise NonUniformSampling(int(bad[0]) + 1)

    data = np.asarray(rows)
    channels = {name: data[:, j].copy() for j, name in enumerate(header)}
    return TimeSeries(dt=dt, channels=channels)


def write_csv(ts: TimeSeries, path) -> None:
    """Write a TimeSeries; floats use repr-exact formatting so a round trip
    through load_csv reproduces the values bit for bit."""
    names = list(ts.channels)
    cols = [ts.time()] + [ts.channels[n] for n in names]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join([TIME_COLUMN] + names) + "\n")
        for k in range(ts.n_samples):
            fh.write(",".join(format(c[k], ".17g") for c in cols) + "\n")


def butterworth_lowpass(ts: TimeSeries, cutoff_hz: float, order: int = 2) -> TimeSeries:
    """Zero-phase Butterworth low-pass over every channel.

    Forward-backward application (filtfilt) keeps the phase response flat so
    the filtering does not bias time-constant estimates; DC gain is exactly 1.
    """
    nyquist = 0.5 / ts.dt
    if cutoff_hz >= nyquist:
        raise CutoffAboveNyquist(f"cutoff {cutoff_hz} Hz >= Nyquist {nyquist} Hz")
    if order < 1:
        raise ValueError("order must be >= 1")
    b, a = sp_signal.butter(order, cutoff_hz / nyquist)
    out = ts.copy()
    for name, data in out.channels.items():
        out.channels[name] = sp_signal.filtfilt(b, a, data)
    return out


def per_unitize(ts: TimeSeries, bases: dict[str, float]) -> TimeSeries:
    """Divide every channel by its base and mark the unit as pu."""
    out = ts.copy()
    for name in out.channels:
        if name not in bases:
            raise MissingBase(name)
        base = bases[name]
        if base <= 0:
            raise NonPositiveBase(f"base for '{name}' is {base}")
        out.channels[name] = out.channels[name] / base
        out.units[name] = "pu"
        out.base[name] = base
    return out


def de_per_unitize(ts: TimeSeries) -> TimeSeries:
    """Inverse of per_unitize using the stored bases."""
    out = ts.copy()
    for name in out.channels:
        if name not in out.base:
            raise MissingBase(name)
        out.channels[name] = out.channels[name] * out.base[name]
        out.units[name] = "none"
    out.base = {}
    return out


def square_pulse(
    dt: float,
    duration: float,
    period: float,
    duty: float,
    low: float,
    high: float,
    channel: str = "u",
) -> TimeSeries:
    """Periodic rectangular wave starting at the low level.

    Each period holds ``n_low = period_samples - floor(duty * period_samples)``
    samples at ``low`` followed by ``floor(duty * period_samples)`` samples at
    ``high`` (floor convention).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if not 0 < duty < 1:
        raise ValueError("duty must be in (0, 1)")
    if period < 2 * dt:
        raise DegeneratePeriod(f"period {period} s < 2*dt = {2 * dt} s")
    n = int(round(duration / dt)) + 1
    if n < 2:
        raise ValueError("duration must cover at least 2 samples")
    period_samples = int(round(period / dt))
    n_high = int(math.floor(duty * period_samples))
    n_low = period_samples - n_high
    k = np.arange(n)
    phase = k % period_samples
    values = np.where(phase < n_low, low, high).astype(float)
    return TimeSeries(dt=dt, channels={channel: values}, units={channel: "pu"})


def constant(dt: float, duration: float, value: float, channel: str = "u") -> TimeSeries:
    n = int(round(duration / dt)) + 1
    return TimeSeries(dt=dt, channels={channel: np.full(n, float(value))}, units={channel: "pu"})


def add_noise(ts: TimeSeries, snr_db: float, seed: int, channels=None) -> TimeSeries:
    """Additive zero-mean Gaussian noise at the requested per-channel SNR.

    SNR is defined against the channel's AC power (variance about its mean).
    snr_db = inf is the no-op sentinel.  Reproducible from seed.
    """
    if math.isinf(snr_db):
        return ts.copy()
    rng = np.random.default_rng(seed)
    out = ts.copy()
    targets = list(ts.channels) if channels is None else list(channels)
    for name in targets:
        data = out.channel(name)
        ac_power = float(np.var(data))
        if ac_power == 0.0:
            raise ConstantChannel(f"channel '{name}' is constant; SNR undefined")
        noise_std = math.sqrt(ac_power) * 10.0 ** (-snr_db / 20.0)
        out.channels[name] = data + rng.normal(0.0, noise_std, size=len(data))
    return out
