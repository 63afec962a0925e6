"""GGOV1 turbine-governor and ST6B exciter models built from block primitives.

Two simulation routes are provided and cross-checked by the test suite:

* the block engine (``PlantModel.simulate``), stepping every block sample by
  sample with gates, limits and the acceleration/limiter branches present;
* fast per-subsystem simulators (``simulate_subsystem``) built from the same
  bilinear difference equations via scipy.signal.lfilter, used inside the
  identification objective where tens of thousands of evaluations matter.

Wiring conventions (documented because identification relies on them):

* grid-connected simplification: speed is an exogenous input channel and no
  swing equation is solved; electrical power equals mechanical power through
  a one-sample measurement delay that breaks the algebraic loop;
* the power reference channel is expressed in per-unit power; the governor
  summing junction is err = r * (p_ref - pe_filtered) - (speed - 1), so a
  reference step of D settles electrical power at +D with speed fixed;
* the acceleration branch FSRA is structurally present but clamped high
  (never selected); the supervisory power controller (k_imw) and speed
  sensitivity (d_m) are held at fixed defaults;
* the load limiter takes a measured exhaust-temperature proxy channel
  through the t_fload lag, compares it to l_dref and applies a PI;
* the exciter inner loop feeds field voltage back through the k_g/t_g lag
  with a one-sample measurement delay; the field-current limiter branch is
  disabled by default (AVR mode) and clamps high when disabled.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import signal as sp_signal

from . import blocks
from .blocks import BlockSpec, make_block, step_block
from .errors import (
    InvalidParams,
    MissingChannel,
    NoSteadyState,
    RateMismatch,
    WrongModelKind,
)
from .params import GGOV1, ST6B, ParamSet
from .signals import TimeSeries

# value used for gate inputs that must never win the low select
CLAMP_HIGH = 1.0e6


class SubsystemId(enum.IntEnum):
    VALVE = 1
    ELECTRICAL_POWER = 2
    SPEED_CONTROLLER = 3
    TEMPERATURE_CONTROLLER = 4
    EXCITER = 5


@dataclass(frozen=True)
class SubsystemView:
    """Input tap names, output tap name and the free parameters owned by
    one subsystem of the piecewise identification."""

    sub_id: SubsystemId
    inputs: tuple[str, ...]
    output: str
    free_params: tuple[str, ...]


_GGOV1_VIEWS = {
    SubsystemId.VALVE: SubsystemView(
        SubsystemId.VALVE,
        inputs=("fsr", "speed"),
        output="p_mech",
        free_params=("t_act", "k_turb", "t_b", "t_c", "t_eng", "w_fnl"),
    ),
    SubsystemId.ELECTRICAL_POWER: SubsystemView(
        SubsystemId.ELECTRICAL_POWER,
        inputs=("p_elec",),
        output="droop_fb",
        free_params=("t_pelec", "r"),
    ),
    SubsystemId.SPEED_CONTROLLER: SubsystemView(
        SubsystemId.SPEED_CONTROLLER,
        inputs=("gov_err",),
        output="fsrn",
        free_params=("k_pgov", "k_igov", "k_dgov", "t_dgov"),
    ),
    SubsystemId.TEMPERATURE_CONTROLLER: SubsystemView(
        SubsystemId.TEMPERATURE_CONTROLLER,
        inputs=("temp_proxy",),
        output="fsrt",
        free_params=("t_fload", "k_pload", "k_iload", "l_dref"),
    ),
}

# v_a is recorded alongside the exciter output: the forward-path gains share
# an overall scale that e_fd data alone cannot split, so the least-squares
# stage anchors it on the regulator-output measurement.
_ST6B_VIEW = SubsystemView(
    SubsystemId.EXCITER,
    inputs=("v_ref", "v_c", "v_a"),
    output="e_fd",
    free_params=("k_pa", "k_ia", "k_m", "k_ff"),
)


def subsystem_view(kind: str, sub_id) -> SubsystemView:
    sub_id = SubsystemId(sub_id)
    if kind == GGOV1:
        if sub_id not in _GGOV1_VIEWS:
            raise WrongModelKind(f"subsystem {sub_id} is not part of {kind}")
        return _GGOV1_VIEWS[sub_id]
    if kind == ST6B:
        if sub_id is not SubsystemId.EXCITER:
            raise WrongModelKind(f"subsystem {sub_id} is not part of {kind}")
        return _ST6B_VIEW
    raise WrongModelKind(f"unknown model kind '{kind}'")


def subsystem_ids(kind: str) -> tuple[SubsystemId, ...]:
    if kind == GGOV1:
        return tuple(_GGOV1_VIEWS)
    if kind == ST6B:
        return (SubsystemId.EXCITER,)
    raise WrongModelKind(f"unknown model kind '{kind}'")


# ---------------------------------------------------------------------------
# block-engine plant models
# ---------------------------------------------------------------------------

@dataclass
class PlantModel:
    """Assembled plant: parameters, rate and operating point.

    Block states are constructed afresh inside simulate(), so repeated calls
    are independent and bit-identical, and instances can be used from
    multiple threads as long as each call owns its own model or the calls do
    not overlap.
    """

    kind: str
    params: ParamSet
    dt: float
    operating_point: dict = field(default_factory=dict)
    limiter_enabled: bool = False

    def simulate(self, inputs: TimeSeries) -> TimeSeries:
        return simulate(self, inputs)


def build_model(
    kind: str,
    params: ParamSet,
    dt: float,
    p_e0: float = 0.75,
    e_fd0: float = 1.0,
    fsrt_margin: float = 0.2,
    limiter_enabled: bool = False,
) -> PlantModel:
    """Validate parameters, check the operating point and assemble a model.

    The model is initialized in steady state at electrical power p_e0,
    speed 1.0 pu and terminal voltage 1.0 pu.
    """
    if dt <= 0:
        raise InvalidParams(f"dt = {dt} must be positive")
    params = params.copy()
    if params.kind != kind:
        raise InvalidParams(f"parameter set is for {params.kind}, not {kind}")
    params.validate()
    op = {"p_e0": float(p_e0), "speed0": 1.0, "v_t0": 1.0,
          "e_fd0": float(e_fd0), "fsrt_margin": float(fsrt_margin)}

    if kind == GGOV1:
        v = params.value
        w_f0 = v("w_fnl") + p_e0 / v("k_turb")
        if w_f0 < v("w_fnl"):
            raise NoSteadyState(
                f"operating point p_e0 = {p_e0} needs fuel below no-load flow w_fnl")
        if 0 < v("t_eng") < dt:
            raise NoSteadyState(f"t_eng = {v('t_eng')} shorter than dt = {dt}")
        op["w_f0"] = w_f0
    elif kind == ST6B:
        v = params.value
        gate0 = e_fd0 / v("v_b")
        va0 = (gate0 + v("k_m") * v("k_g") * e_fd0) / (v("k_m") + v("k_ff"))
        if not v("v_a_min") <= va0 <= v("v_a_max"):
            raise NoSteadyState(f"equilibrium regulator output {va0:.4f} outside limits")
        if not v("v_r_min") <= gate0 <= v("v_r_max"):
            raise NoSteadyState(f"equilibrium field drive {gate0:.4f} outside limits")
        op["va0"] = va0
    else:
        raise InvalidParams(f"unknown model kind '{kind}'")

    return PlantModel(kind=kind, params=params, dt=dt, operating_point=op,
                      limiter_enabled=limiter_enabled)


GGOV1_REQUIRED = ("p_ref", "speed")
GGOV1_TAPS = ("p_ref", "speed", "temp_proxy", "p_elec", "pe_filt", "droop_fb",
              "gov_err", "fsrn", "fsrt", "fsra", "fsr", "v_stroke", "w_f",
              "w_f_delayed", "p_mech", "temp_filt", "temp_err")
ST6B_REQUIRED = ("v_ref", "v_c")
ST6B_TAPS = ("v_ref", "v_c", "i_fd", "v_err", "v_a", "v_g", "v_m", "v_r",
             "lim_ref", "e_fd")


def simulate(model: PlantModel, inputs: TimeSeries) -> TimeSeries:
    """Run the block engine over an input record; returns every tap."""
    if abs(inputs.dt - model.dt) > 1e-12 * model.dt:
        raise RateMismatch(f"inputs at dt={inputs.dt}, model at dt={model.dt}")
    if model.kind == GGOV1:
        return _simulate_ggov1(model, inputs)
    return _simulate_st6b(model, inputs)


def _simulate_ggov1(model: PlantModel, inputs: TimeSeries) -> TimeSeries:
    for name in GGOV1_REQUIRED:
        if not inputs.has_channel(name):
            raise MissingChannel(name)
    v = model.params.value
    dt = model.dt
    n = inputs.n_samples
    p_e0 = model.operating_point["p_e0"]
    w_f0 = model.operating_point["w_f0"]
    fsrt0 = w_f0 + model.operating_point["fsrt_margin"]

    p_ref = inputs.channel("p_ref")
    speed = inputs.channel("speed")
    if inputs.has_channel("temp_proxy"):
        temp_proxy = inputs.channel("temp_proxy")
    else:
        temp_proxy = np.full(n, v("l_dref"))

    lag_pelec = make_block(blocks.first_order_lag(v("t_pelec")), dt, p_e0)
    pid_gov = make_block(blocks.pid(v("k_pgov"), v("k_igov"), v("k_dgov"), v("t_dgov")),
                         dt, w_f0)
    trim_imw = make_block(blocks.limited_integrator(v("k_imw"), -0.1, 0.1), dt, 0.0)
    lag_fload = make_block(blocks.first_order_lag(v("t_fload")), dt, v("l_dref"))
    pi_load = make_block(blocks.pid(v("k_pload"), v("k_iload")), dt, fsrt0)
    gate_nt = make_block(blocks.low_value_gate(), dt)
    gate_a = make_block(blocks.low_value_gate(), dt)
    lag_act = make_block(blocks.first_order_lag(v("t_act")), dt, w_f0)
    delay_eng = make_block(blocks.pure_delay(v("t_eng")), dt, w_f0)
    leadlag_turb = make_block(blocks.lead_lag(v("t_c"), v("t_b")), dt, p_e0)

    taps = {name: np.empty(n) for name in GGOV1_TAPS}
    r, k_turb, w_fnl, d_m, l_dref, p_mwset = (
        v("r"), v("k_turb"), v("w_fnl"), v("d_m"), v("l_dref"), v("p_mwset"))
    p_mech_prev = p_e0

    for k in range(n):
        # droop path first, on the previous mechanical power sample
        pe_meas = p_mech_prev
        pe_f = step_block(lag_pelec, pe_meas, dt)
        droop_fb = r * pe_f
        trim = step_block(trim_imw, p_mwset - pe_f, dt)
        gov_err = r * p_ref[k] - droop_fb - (speed[k] - 1.0) + trim
        fsrn = step_block(pid_gov, gov_err, dt)

        temp_f = step_block(lag_fload, temp_proxy[k], dt)
        temp_err = l_dref - temp_f
        fsrt = step_block(pi_load, temp_err, dt)

        fsra = CLAMP_HIGH  # acceleration branch pinned inactive

        low_nt = step_block(gate_nt, (fsrn, fsrt), dt)
        fsr = step_block(gate_a, (low_nt, fsra), dt)

        v_stroke = step_block(lag_act, fsr, dt)
        w_f = v_stroke
        w_f_delayed = step_block(delay_eng, w_f, dt)
        p_mech = step_block(leadlag_turb, k_turb * (w_f_delayed - w_fnl), dt)
        p_mech -= d_m * (speed[k] - 1.0)
        p_mech_prev = p_mech

        taps["p_ref"][k] = p_ref[k]
        taps["speed"][k] = speed[k]
        taps["temp_proxy"][k] = temp_proxy[k]
        taps["p_elec"][k] = pe_meas
        taps["pe_filt"][k] = pe_f
        taps["droop_fb"][k] = droop_fb
        taps["gov_err"][k] = gov_err
        taps["fsrn"][k] = fsrn
        taps["fsrt"][k] = fsrt
        taps["fsra"][k] = fsra
        taps["fsr"][k] = fsr
        taps["v_stroke"][k] = v_stroke
        taps["w_f"][k] = w_f
        taps["w_f_delayed"][k] = w_f_delayed
        taps["p_mech"][k] = p_mech
        taps["temp_filt"][k] = temp_f
        taps["temp_err"][k] = temp_err

    units = {name: "pu" for name in GGOV1_TAPS}
    return TimeSeries(dt=dt, channels=taps, units=units)


def _simulate_st6b(model: PlantModel, inputs: TimeSeries) -> TimeSeries:
    for name in ST6B_REQUIRED:
        if not inputs.has_channel(name):
            raise MissingChannel(name)
    v = model.params.value
    dt = model.dt
    n = inputs.n_samples
    e_fd0 = model.operating_point["e_fd0"]
    va0 = model.operating_point["va0"]

    v_ref = inputs.channel("v_ref")
    v_c = inputs.channel("v_c")
    i_fd = inputs.channel("i_fd") if inputs.has_channel("i_fd") else np.zeros(n)

    pi_reg = make_block(blocks.pid(v("k_pa"), v("k_ia")), dt, va0)
    lag_fb = make_block(blocks.first_order_lag(v("t_g"), k=v("k_g")), dt,
                        v("k_g") * e_fd0)
    gate = make_block(blocks.low_value_gate(), dt)

    k_m, k_ff, v_b = v("k_m"), v("k_ff"), v("v_b")
    va_min, va_max = v("v_a_min"), v("v_a_max")
    vr_min, vr_max = v("v_r_min"), v("v_r_max")
    k_lr, k_ci, i_lr = v("k_lr"), v("k_ci"), v("i_lr")

    taps = {name: np.empty(n) for name in ST6B_TAPS}
    e_fd_prev = e_fd0

    for k in range(n):
        err = v_ref[k] - v_c[k]
        va = min(max(step_block(pi_reg, err, dt), va_min), va_max)
        vg = step_block(lag_fb, e_fd_prev, dt)
        vm = k_m * (va - vg)
        vr = min(max(vm + k_ff * va, vr_min), vr_max)
        if model.limiter_enabled:
            lim_ref = k_lr * (i_lr - k_ci * i_fd[k])
        else:
            lim_ref = CLAMP_HIGH
        gate_out = step_block(gate, (vr, lim_ref), dt)
        e_fd = v_b * gate_out
        e_fd_prev = e_fd

        taps["v_ref"][k] = v_ref[k]
        taps["v_c"][k] = v_c[k]
        taps["i_fd"][k] = i_fd[k]
        taps["v_err"][k] = err
        taps["v_a"][k] = va
        taps["v_g"][k] = vg
        taps["v_m"][k] = vm
        taps["v_r"][k] = vr
        taps["lim_ref"][k] = lim_ref
        taps["e_fd"][k] = e_fd

    units = {name: "pu" for name in ST6B_TAPS}
    return TimeSeries(dt=dt, channels=taps, units=units)


def low_select_branch(out: TimeSeries) -> np.ndarray:
    """Index of the winning low-select input (0=FSRN, 1=FSRT, 2=FSRA) at each
    sample; ties go to the lower index."""
    stacked = np.vstack([out.channel("fsrn"), out.channel("fsrt"), out.channel("fsra")])
    return np.argmin(stacked, axis=0)


# ---------------------------------------------------------------------------
# fast subsystem simulators (identification objective path)
# ---------------------------------------------------------------------------

def _filter_coeffs(spec: BlockSpec, dt: float):
    """Full-polynomial (b, a) for scipy.signal.lfilter from a block spec."""
    a_fb, b = blocks.discretize_linear(spec, dt)
    a = np.concatenate(([1.0], -np.asarray(a_fb)))
    return np.asarray(b), a


def initial_level(x, dt: float) -> float:
    """Steady level at the start of a record, averaged over the lead-in.

    Records handed to the identification start in steady state; averaging up
    to half a second of the lead-in estimates that level without inheriting
    the measurement noise of a single sample."""
    x = np.asarray(x, dtype=float)
    window = max(2, min(len(x) // 10, int(round(0.5 / dt))))
    return float(np.mean(x[:window]))


def lag_response(u, t, dt, k=1.0, y_eq=None, u_eq=None):
    """First-order lag started from pre-data equilibrium (u_eq, y_eq)."""
    if u_eq is None:
        u_eq = u[0]
    if y_eq is None:
        y_eq = k * u_eq
    if t == 0.0:
        return k * np.asarray(u, dtype=float)
    b, a = _filter_coeffs(blocks.first_order_lag(t, k), dt)
    zi = sp_signal.lfiltic(b, a, [y_eq], [u_eq])
    y, _ = sp_signal.lfilter(b, a, u, zi=zi)
    return y


def leadlag_response(u, t_lead, t_lag, dt, y_eq=None, u_eq=None):
    if u_eq is None:
        u_eq = u[0]
    if y_eq is None:
        y_eq = u_eq
    b, a = _filter_coeffs(blocks.lead_lag(t_lead, t_lag), dt)
    zi = sp_signal.lfiltic(b, a, [y_eq], [u_eq])
    y, _ = sp_signal.lfilter(b, a, u, zi=zi)
    return y


def pid_response(e, y0, kp, ki, kd, td, dt):
    """PID output with the pre-data state chosen so the first output sample
    equals y0 (integrator carries the equilibrium output)."""
    b, a = _filter_coeffs(blocks.pid(kp, ki, kd, td), dt)
    i0 = y0 - b[0] * e[0]
    zi = sp_signal.lfiltic(b, a, [i0] * (len(a) - 1), [0.0] * (len(b) - 1))
    y, _ = sp_signal.lfilter(b, a, e, zi=zi)
    return y


def delay_response(u, t, dt, fill):
    n = int(round(t / dt)) if t > 0 else 0
    if n == 0:
        return np.asarray(u, dtype=float)
    out = np.empty_like(u, dtype=float)
    out[:n] = fill
    out[n:] = u[:-n]
    return out


def simulate_subsystem(kind: str, sub_id, params: ParamSet, data: TimeSeries) -> np.ndarray:
    """Predicted output-tap trajectory of one subsystem given its recorded
    input taps.  The record is assumed to start in steady state; initial
    filter states are derived from the first samples, which reproduces the
    block engine exactly on data generated from equilibrium.
    """
    sub_id = SubsystemId(sub_id)
    view = subsystem_view(kind, sub_id)
    dt = data.dt
    v = params.value

    if sub_id is SubsystemId.VALVE:
        u = data.channel("fsr")
        u0 = initial_level(u, dt)
        stroke = lag_response(u, v("t_act"), dt, u_eq=u0)
        w_delayed = delay_response(stroke, v("t_eng"), dt, fill=u0)
        x = v("k_turb") * (w_delayed - v("w_fnl"))
        y = leadlag_response(x, v("t_c"), v("t_b"), dt,
                             u_eq=v("k_turb") * (u0 - v("w_fnl")))
        if data.has_channel("speed"):
            y = y - v("d_m") * (data.channel("speed") - 1.0)
        return y

    if sub_id is SubsystemId.ELECTRICAL_POWER:
        u = data.channel("p_elec")
        return lag_response(u, v("t_pelec"), dt, k=v("r"), u_eq=initial_level(u, dt))

    if sub_id is SubsystemId.SPEED_CONTROLLER:
        e = data.channel("gov_err")
        y0 = initial_level(data.channel(view.output), dt)
        return pid_response(e, y0, v("k_pgov"), v("k_igov"), v("k_dgov"), v("t_dgov"), dt)

    if sub_id is SubsystemId.TEMPERATURE_CONTROLLER:
        u = data.channel("temp_proxy")
        y0 = initial_level(data.channel(view.output), dt)
        filt = lag_response(u, v("t_fload"), dt, u_eq=initial_level(u, dt))
        e = v("l_dref") - filt
        return pid_response(e, y0, v("k_pload"), v("k_iload"), 0.0, 0.0, dt)

    # exciter: PI regulator then the inner feedback loop collapsed to one
    # second-order recursion (feedback measurement delayed one sample)
    e = data.channel("v_ref") - data.channel("v_c")
    e_fd0 = initial_level(data.channel(view.output), dt)
    k_m, k_ff, k_g, t_g, v_b = v("k_m"), v("k_ff"), v("k_g"), v("t_g"), v("v_b")
    va0 = (e_fd0 / v_b + k_m * k_g * e_fd0) / (k_m + k_ff)
    va = pid_response(e, va0, v("k_pa"), v("k_ia"), 0.0, 0.0, dt)

    a_g = (2.0 * t_g - dt) / (2.0 * t_g + dt)
    b_g = k_g * dt / (2.0 * t_g + dt)
    c = v_b * k_m
    d = v_b * (k_m + k_ff)
    b_loop = np.array([d, -a_g * d])
    a_loop = np.array([1.0, -(a_g - c * b_g), c * b_g])
    zi = sp_signal.lfiltic(b_loop, a_loop, [e_fd0, e_fd0], [va0])
    y, _ = sp_signal.lfilter(b_loop, a_loop, va, zi=zi)
    return y
