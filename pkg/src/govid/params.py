"""Named parameter sets for the two plant models.

Each parameter carries a value, box bounds and a free/fixed flag.  The free
set defaults match what the identification pipeline estimates: the droop,
transducer, governor PID, actuator/turbine and load-limiter parameters of the
turbine-governor model, and the four regulator gains of the exciter.  The
supervisory power controller, speed-sensitivity and acceleration-limiter
entries stay fixed, as does the exciter's field-current limiter branch, which
is inactive in normal (AVR mode) operation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidParams

GGOV1 = "GGOV1"
ST6B = "ST6B"


@dataclass
class Param:
    value: float
    lo: float
    hi: float
    free: bool

    def clipped(self, x: float) -> float:
        return min(max(x, self.lo), self.hi)


class ParamSet:
    """Ordered name -> Param map with attribute-style value access."""

    def __init__(self, kind: str, entries: dict[str, Param]):
        self.kind = kind
        self.entries = dict(entries)

    def __contains__(self, name):
        return name in self.entries

    def __getitem__(self, name) -> Param:
        return self.entries[name]

    def value(self, name: str) -> float:
        return self.entries[name].value

    def values(self) -> dict[str, float]:
        return {k: p.value for k, p in self.entries.items()}

    def names(self) -> list[str]:
        return list(self.entries)

    def free_names(self) -> list[str]:
        return [k for k, p in self.entries.items() if p.free]

    def set_value(self, name: str, value: float) -> None:
        self.entries[name].value = float(value)

    def updated(self, values: dict[str, float]) -> "ParamSet":
        out = self.copy()
        for name, value in values.items():
            if name not in out.entries:
                raise InvalidParams(f"unknown parameter '{name}' for {self.kind}")
            out.entries[name].value = float(value)
        return out

    def copy(self) -> "ParamSet":
        return ParamSet(self.kind, {k: Param(p.value, p.lo, p.hi, p.free)
                                    for k, p in self.entries.items()})

    def validate(self) -> None:
        for name, p in self.entries.items():
            if p.lo >= p.hi:
                raise InvalidParams(f"{name}: bound min {p.lo} >= max {p.hi}")
        v = self.value
        if self.kind == GGOV1:
            if v("r") <= 0:
                raise InvalidParams("r: permanent droop must be positive")
            if not 0 <= v("w_fnl") < 1:
                raise InvalidParams("w_fnl: no-load fuel flow must lie in [0, 1)")
            for name in ("t_act", "t_b", "t_pelec", "t_fload"):
                if v(name) <= 0:
                    raise InvalidParams(f"{name}: time constant must be positive")
            for name in ("t_c", "t_dgov", "t_eng"):
                if v(name) < 0:
                    raise InvalidParams(f"{name}: time constant must be >= 0")
            if v("k_dgov") != 0 and v("t_dgov") <= 0:
                raise InvalidParams("t_dgov: needed when k_dgov > 0 (pure differentiator)")
            if v("k_turb") <= 0:
                raise InvalidParams("k_turb: turbine gain must be positive")
        elif self.kind == ST6B:
            for name in ("k_pa", "k_ia", "k_m"):
                if v(name) <= 0:
                    raise InvalidParams(f"{name}: gain must be positive")
            if v("t_g") <= 0:
                raise InvalidParams("t_g: feedback lag must be positive")
            if v("v_b") <= 0:
                raise InvalidParams("v_b: available exciter voltage must be positive")
            if v("v_a_min") >= v("v_a_max"):
                raise InvalidParams("v_a_min >= v_a_max")
            if v("v_r_min") >= v("v_r_max"):
                raise InvalidParams("v_r_min >= v_r_max")
        else:
            raise InvalidParams(f"unknown model kind '{self.kind}'")


def _p(value, lo, hi, free=True) -> Param:
    return Param(float(value), float(lo), float(hi), free)


def ggov1_defaults() -> ParamSet:
    """Turbine-governor parameter table with engineering-range bounds."""
    return ParamSet(GGOV1, {
        "r":        _p(0.05, 0.02, 0.12),        # permanent droop
        "t_pelec":  _p(1.0, 0.1, 5.0),           # power transducer lag
        "k_pgov":   _p(3.0, 0.1, 10.0),          # governor PID
        "k_igov":   _p(1.0, 0.01, 5.0),
        "k_dgov":   _p(0.0, 0.0, 2.0),
        "t_dgov":   _p(0.0, 0.0, 1.0),
        "t_act":    _p(1.5, 0.1, 5.0),           # fuel actuator lag
        "k_turb":   _p(0.3, 0.1, 2.0),           # turbine gain
        "w_fnl":    _p(0.4, 0.0, 0.8),           # no-load fuel flow
        "t_b":      _p(0.5, 0.05, 5.0),          # turbine lag
        "t_c":      _p(0.0, 0.0, 2.0),           # turbine lead
        "t_eng":    _p(0.1, 0.0, 0.5),           # transport delay
        "t_fload":  _p(3.0, 0.2, 10.0),          # load-limiter lag
        "k_pload":  _p(10.0, 1.0, 50.0),         # load-limiter PI
        "k_iload":  _p(0.1, 0.01, 2.0),
        "l_dref":   _p(0.9, 0.5, 1.2),           # load-limiter reference
        # held at fixed defaults: outside the identification scope
        "d_m":      _p(0.0, 0.0, 1.0, free=False),    # speed sensitivity
        "k_imw":    _p(0.0, 0.0, 0.1, free=False),    # supervisory power controller
        "p_mwset":  _p(0.75, 0.0, 1.2, free=False),
        "k_a":      _p(10.0, 0.0, 50.0, free=False),  # acceleration limiter
        "t_a":      _p(0.1, 0.01, 1.0, free=False),
    })


def st6b_defaults() -> ParamSet:
    """Static exciter parameter table (AVR mode)."""
    return ParamSet(ST6B, {
        "k_pa":     _p(4.0, 0.5, 20.0),          # voltage regulator PI
        "k_ia":     _p(3.0, 0.1, 20.0),
        "k_m":      _p(1.0, 0.1, 5.0),           # inner-loop forward gain
        "k_ff":     _p(1.0, 0.1, 5.0),           # pre-control (feed-forward) gain
        # fixed model constants
        "k_g":      _p(1.0, 0.1, 5.0, free=False),    # inner-loop feedback gain
        "t_g":      _p(0.1, 0.005, 1.0, free=False),   # feedback lag
        "v_b":      _p(1.0, 0.1, 5.0, free=False),    # available exciter voltage
        "v_a_max":  _p(5.0, 0.0, 20.0, free=False),   # regulator limits
        "v_a_min":  _p(-5.0, -20.0, 0.0, free=False),
        "v_r_max":  _p(5.0, 0.0, 20.0, free=False),
        "v_r_min":  _p(-5.0, -20.0, 0.0, free=False),
        # field-current limiter branch, inactive in AVR mode
        "k_lr":     _p(17.33, 0.0, 50.0, free=False),
        "k_ci":     _p(1.0577, 0.0, 5.0, free=False),
        "i_lr":     _p(4.164, 0.0, 10.0, free=False),
    })


def defaults_for(kind: str) -> ParamSet:
    if kind == GGOV1:
        return ggov1_defaults()
    if kind == ST6B:
        return st6b_defaults()
    raise InvalidParams(f"unknown model kind '{kind}'")


def reference_ggov1() -> ParamSet:
    """Gas-unit parameter set used as ground truth in the synthetic suite."""
    return ggov1_defaults().updated({
        "k_pgov": 3.10, "k_igov": 0.90, "k_dgov": 0.0, "t_dgov": 0.0,
        "t_act": 1.83, "k_turb": 0.31, "t_b": 0.79, "t_c": 0.0,
        "t_eng": 0.10, "t_fload": 3.0, "k_pload": 25.01, "k_iload": 0.10,
        "t_pelec": 1.10, "l_dref": 0.90, "r": 0.05, "w_fnl": 0.43,
    })


def reference_st6b() -> ParamSet:
    return st6b_defaults().updated({
        "k_pa": 3.95, "k_ia": 2.84, "k_m": 1.10, "k_ff": 1.30,
    })
