"""Discrete-time control-block primitives.

Every dynamic block is discretized with the trapezoidal (bilinear) rule at a
fixed dt, which preserves DC gain exactly and keeps the step-by-step engine
consistent with the ARX difference equations used by the least-squares stage.
Pure delays are quantized to whole samples.

step_block mutates the BlockState in place and returns the output sample;
gates take a pair of inputs.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sp_signal

from .errors import (
    DelayShorterThanDt,
    DtMismatch,
    InvalidLimits,
    NonlinearBlock,
    NonPositiveDt,
)


class BlockKind(enum.Enum):
    GAIN = "gain"
    FIRST_ORDER_LAG = "first_order_lag"
    LEAD_LAG = "lead_lag"
    PID = "pid"
    LIMITED_INTEGRATOR = "limited_integrator"
    PURE_DELAY = "pure_delay"
    LOW_VALUE_GATE = "low_value_gate"
    HIGH_VALUE_GATE = "high_value_gate"
    SATURATION = "saturation"
    RATE_LIMITER = "rate_limiter"


LINEAR_KINDS = (BlockKind.GAIN, BlockKind.FIRST_ORDER_LAG, BlockKind.LEAD_LAG, BlockKind.PID)
GATE_KINDS = (BlockKind.LOW_VALUE_GATE, BlockKind.HIGH_VALUE_GATE)


@dataclass
class BlockSpec:
    """Kind plus named parameters; time constants in seconds, gains in pu."""

    kind: BlockKind
    parameters: dict[str, float] = field(default_factory=dict)
    limits: tuple[float, float] | None = None
    rate_limits: tuple[float, float] | None = None

    def p(self, name: str, default: float = 0.0) -> float:
        return float(self.parameters.get(name, default))

    def validate(self) -> None:
        for name, value in self.parameters.items():
            if name.startswith("t_") and value < 0:
                raise InvalidLimits(f"time constant {name} = {value} must be >= 0")
        if self.limits is not None:
            lo, hi = self.limits
            if lo >= hi:
                raise InvalidLimits(f"limits min {lo} >= max {hi}")
        if self.kind is BlockKind.FIRST_ORDER_LAG and self.p("t") <= 0:
            raise InvalidLimits("first-order lag needs t > 0")
        if self.kind is BlockKind.LEAD_LAG and self.p("t_lag") <= 0:
            raise InvalidLimits("lead-lag needs t_lag > 0")
        if self.kind is BlockKind.PID:
            kd, td = self.p("kd"), self.p("td")
            if kd != 0.0 and td <= 0.0:
                raise InvalidLimits("pure differentiator: kd > 0 requires td > 0")


# per-kind convenience constructors

def gain(k: float) -> BlockSpec:
    return BlockSpec(BlockKind.GAIN, {"k": k})


def first_order_lag(t: float, k: float = 1.0) -> BlockSpec:
    return BlockSpec(BlockKind.FIRST_ORDER_LAG, {"t": t, "k": k})


def lead_lag(t_lead: float, t_lag: float, k: float = 1.0) -> BlockSpec:
    return BlockSpec(BlockKind.LEAD_LAG, {"t_lead": t_lead, "t_lag": t_lag, "k": k})


def pid(kp: float, ki: float, kd: float = 0.0, td: float = 0.0) -> BlockSpec:
    return BlockSpec(BlockKind.PID, {"kp": kp, "ki": ki, "kd": kd, "td": td})


def limited_integrator(k: float, lo: float, hi: float) -> BlockSpec:
    return BlockSpec(BlockKind.LIMITED_INTEGRATOR, {"k": k}, limits=(lo, hi))


def pure_delay(t: float) -> BlockSpec:
    return BlockSpec(BlockKind.PURE_DELAY, {"t": t})


def low_value_gate() -> BlockSpec:
    return BlockSpec(BlockKind.LOW_VALUE_GATE)


def high_value_gate() -> BlockSpec:
    return BlockSpec(BlockKind.HIGH_VALUE_GATE)


def saturation(lo: float, hi: float) -> BlockSpec:
    return BlockSpec(BlockKind.SATURATION, limits=(lo, hi))


def rate_limiter(down: float, up: float) -> BlockSpec:
    return BlockSpec(BlockKind.RATE_LIMITER, rate_limits=(down, up))


@dataclass
class BlockState:
    """Mutable state of one block instance; stepped sequentially only."""

    spec: BlockSpec
    dt: float
    internal: dict[str, float] = field(default_factory=dict)
    buffer: np.ndarray | None = None   # pure-delay ring buffer
    buf_pos: int = 0
    last_output: float = 0.0


def make_block(spec: BlockSpec, dt: float, initial_output: float = 0.0) -> BlockState:
    """Build a block in steady-state equilibrium at initial_output.

    Stepping the returned state with the steady-state-matching input keeps
    producing initial_output indefinitely.
    """
    if dt <= 0:
        raise NonPositiveDt(f"dt = {dt}")
    spec.validate()
    state = BlockState(spec=spec, dt=dt, last_output=float(initial_output))
    kind = spec.kind
    y0 = float(initial_output)

    if kind is BlockKind.FIRST_ORDER_LAG:
        k = spec.p("k", 1.0)
        state.internal = {"y": y0, "u": y0 / k}
    elif kind is BlockKind.LEAD_LAG:
        k = spec.p("k", 1.0)
        state.internal = {"y": y0, "u": y0 / k}
    elif kind is BlockKind.PID:
        # equilibrium at zero error: integrator carries the whole output
        state.internal = {"i": y0, "e": 0.0, "d": 0.0}
    elif kind is BlockKind.LIMITED_INTEGRATOR:
        lo, hi = spec.limits if spec.limits else (-np.inf, np.inf)
        if not lo <= y0 <= hi:
            raise InvalidLimits(f"initial output {y0} outside limits [{lo}, {hi}]")
        state.internal = {"y": y0, "u": 0.0}
    elif kind is BlockKind.PURE_DELAY:
        t = spec.p("t")
        if t == 0.0:
            state.buffer = None
        else:
            if t < dt:
                raise DelayShorterThanDt(f"delay {t} s shorter than dt {dt} s")
            n = int(round(t / dt))
            state.buffer = np.full(n, y0)
            state.buf_pos = 0
    elif kind is BlockKind.RATE_LIMITER:
        state.internal = {"y": y0}
    # gain, gates, saturation: stateless
    return state


def step_block(state: BlockState, u, dt: float) -> float:
    """Advance one sample.  u is a scalar, or a pair for gates."""
    if dt != state.dt:
        raise DtMismatch(f"block built at dt={state.dt}, stepped with dt={dt}")
    spec = state.spec
    kind = spec.kind

    if kind is BlockKind.GAIN:
        y = spec.p("k", 1.0) * u

    elif kind is BlockKind.FIRST_ORDER_LAG:
        t, k = spec.p("t"), spec.p("k", 1.0)
        y_prev, u_prev = state.internal["y"], state.internal["u"]
        denom = 2.0 * t + dt
        y = ((2.0 * t - dt) * y_prev + k * dt * (u + u_prev)) / denom
        state.internal["y"], state.internal["u"] = y, u

    elif kind is BlockKind.LEAD_LAG:
        tc, tb, k = spec.p("t_lead"), spec.p("t_lag"), spec.p("k", 1.0)
        y_prev, u_prev = state.internal["y"], state.internal["u"]
        denom = 2.0 * tb + dt
        y = ((2.0 * tb - dt) * y_prev
             + k * ((2.0 * tc + dt) * u + (dt - 2.0 * tc) * u_prev)) / denom
        state.internal["y"], state.internal["u"] = y, u

    elif kind is BlockKind.PID:
        kp, ki, kd, td = spec.p("kp"), spec.p("ki"), spec.p("kd"), spec.p("td")
        e_prev = state.internal["e"]
        i = state.internal["i"] + ki * dt * 0.5 * (u + e_prev)
        if kd != 0.0:
            d_prev = state.internal["d"]
            d = ((2.0 * td - dt) * d_prev + 2.0 * kd * (u - e_prev)) / (2.0 * td + dt)
        else:
            d = 0.0
        state.internal.update(i=i, e=u, d=d)
        y = kp * u + i + d

    elif kind is BlockKind.LIMITED_INTEGRATOR:
        k = spec.p("k", 1.0)
        lo, hi = spec.limits if spec.limits else (-np.inf, np.inf)
        y_prev, u_prev = state.internal["y"], state.internal["u"]
        # anti-windup by clamping the integrator state itself
        y = min(max(y_prev + k * dt * 0.5 * (u + u_prev), lo), hi)
        state.internal["y"], state.internal["u"] = y, u

    elif kind is BlockKind.PURE_DELAY:
        if state.buffer is None:
            y = float(u)
        else:
            y = float(state.buffer[state.buf_pos])
            state.buffer[state.buf_pos] = u
            state.buf_pos = (state.buf_pos + 1) % len(state.buffer)

    elif kind is BlockKind.LOW_VALUE_GATE:
        a, b = u
        y = a if a <= b else b

    elif kind is BlockKind.HIGH_VALUE_GATE:
        a, b = u
        y = a if a >= b else b

    elif kind is BlockKind.SATURATION:
        lo, hi = spec.limits
        y = min(max(u, lo), hi)

    elif kind is BlockKind.RATE_LIMITER:
        down, up = spec.rate_limits
        y_prev = state.internal["y"]
        y = y_prev + min(max(u - y_prev, down * dt), up * dt)
        state.internal["y"] = y

    else:  # pragma: no cover
        raise NonlinearBlock(f"unknown kind {kind}")

    state.last_output = float(y)
    return state.last_output


def discretize_linear(spec: BlockSpec, dt: float):
    """Difference-equation coefficients (a, b) for a linear block.

    Returns feedback coefficients a = [a1, a2, ...] and feedforward
    b = [b0, b1, ...] such that

        y(k) = sum_i a_i * y(k-i) + sum_j b_j * u(k-j)

    computed via the bilinear transform of the continuous transfer function,
    i.e. the same rule step_block realizes incrementally.
    """
    if dt <= 0:
        raise NonPositiveDt(f"dt = {dt}")
    if spec.kind not in LINEAR_KINDS:
        raise NonlinearBlock(f"{spec.kind} has no linear difference equation")
    if spec.kind is BlockKind.PID and spec.limits is not None:
        raise NonlinearBlock("PID with output limits is not linear")
    spec.validate()
    num_s, den_s = transfer_function(spec)
    bz, az = sp_signal.bilinear(num_s, den_s, fs=1.0 / dt)
    # normalize to az[0] = 1 and flip feedback sign to the y(k-i) convention
    bz = np.atleast_1d(bz) / az[0]
    az = np.atleast_1d(az) / az[0]
    return -az[1:], bz


def transfer_function(spec: BlockSpec):
    """Continuous-time (num, den) polynomial coefficients, highest power first."""
    kind = spec.kind
    if kind is BlockKind.GAIN:
        return [spec.p("k", 1.0)], [1.0]
    if kind is BlockKind.FIRST_ORDER_LAG:
        return [spec.p("k", 1.0)], [spec.p("t"), 1.0]
    if kind is BlockKind.LEAD_LAG:
        k = spec.p("k", 1.0)
        return [k * spec.p("t_lead"), k], [spec.p("t_lag"), 1.0]
    if kind is BlockKind.PID:
        kp, ki, kd, td = spec.p("kp"), spec.p("ki"), spec.p("kd"), spec.p("td")
        # (kp + ki/s + kd s/(1 + td s)) over common denominator s (1 + td s);
        # with kd = 0 the derivative path is bypassed and td drops out
        if kd == 0.0:
            return [kp, ki], [1.0, 0.0]
        num = [kp * td + kd, kp + ki * td, ki]
        den = [td, 1.0, 0.0]
        return num, den
    raise NonlinearBlock(f"{kind} has no transfer function")


def simulate_difference_equation(a, b, u, y_init=None, u_init=None) -> np.ndarray:
    """Run y(k) = sum a_i y(k-i) + sum b_j u(k-j) over an input array.

    y_init / u_init supply the pre-data history (most recent first); they
    default to zeros.  Reference implementation used to cross-check
    step_block against discretize_linear.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    u = np.asarray(u, dtype=float)
    na, nb = len(a), len(b)
    y_hist = list(y_init or [0.0] * na)
    u_hist = list(u_init or [0.0] * max(nb - 1, 0))
    y = np.empty_like(u)
    for k in range(len(u)):
        acc = b[0] * u[k]
        for j in range(1, nb):
            acc += b[j] * (u[k - j] if k - j >= 0 else u_hist[j - k - 1])
        for i in range(1, na + 1):
            acc += a[i - 1] * (y[k - i] if k - i >= 0 else y_hist[i - k - 1])
        y[k] = acc
    return y
