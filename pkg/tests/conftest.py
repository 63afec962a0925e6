"""Shared fixtures: the canonical synthetic experiments.

The reference parameter values act as ground truth for round-trip recovery.
Training records use a power-reference square pulse (about 5 MW on the
160 MW base, 1 ms sampling) plus a small exhaust-proxy pulse; validation
records use a different pulse so they are genuinely held out.  The exciter
pulse starts at the operating point so records begin in steady state.
"""

import numpy as np
import pytest

from govid import plants
from govid.params import reference_ggov1, reference_st6b
from govid.signals import add_noise, square_pulse

DT = 0.001
# measurement noise lands on each subsystem's recorded output tap
GGOV1_NOISY_TAPS = ["p_mech", "droop_fb", "fsrn", "fsrt"]
ST6B_NOISY_TAPS = ["v_a", "e_fd"]


def make_ggov1_record(duration, p_period, p_low, p_high, t_period, t_low, t_high,
                      params=None, p_e0=0.75):
    params = params if params is not None else reference_ggov1()
    pulse = square_pulse(DT, duration, p_period, 0.5, p_low, p_high, channel="p_ref")
    proxy = square_pulse(DT, duration, t_period, 0.5, t_low, t_high, channel="temp_proxy")
    n = pulse.n_samples
    inputs = pulse.with_channels({"speed": np.ones(n),
                                  "temp_proxy": proxy.channel("temp_proxy")})
    model = plants.build_model("GGOV1", params, DT, p_e0=p_e0, fsrt_margin=0.5)
    return model.simulate(inputs)


def make_st6b_record(duration, period, low, high, params=None, e_fd0=1.0):
    params = params if params is not None else reference_st6b()
    pulse = square_pulse(DT, duration, period, 0.5, low, high, channel="v_ref")
    inputs = pulse.with_channels({"v_c": np.ones(pulse.n_samples)})
    model = plants.build_model("ST6B", params, DT, e_fd0=e_fd0)
    return model.simulate(inputs)


@pytest.fixture(scope="session")
def ref_ggov1():
    return reference_ggov1()


@pytest.fixture(scope="session")
def ref_st6b():
    return reference_st6b()


@pytest.fixture(scope="session")
def ggov1_train60():
    """60 s training record at the reference values (acceptance data)."""
    return make_ggov1_record(60.0, 20.0, 0.75, 0.78125, 24.0, 0.90, 0.908)


@pytest.fixture(scope="session")
def ggov1_valid40():
    """Held-out 40 s validation record with a different pulse."""
    return make_ggov1_record(40.0, 13.0, 0.75, 0.80, 17.0, 0.90, 0.906)


@pytest.fixture(scope="session")
def st6b_train60():
    return make_st6b_record(60.0, 20.0, 1.0, 1.02)


@pytest.fixture(scope="session")
def st6b_valid40():
    return make_st6b_record(40.0, 13.0, 1.0, 1.015)


@pytest.fixture(scope="session")
def ggov1_train60_noisy(ggov1_train60):
    return add_noise(ggov1_train60, 40.0, seed=11, channels=GGOV1_NOISY_TAPS)


@pytest.fixture(scope="session")
def ggov1_valid40_noisy(ggov1_valid40):
    return add_noise(ggov1_valid40, 40.0, seed=12, channels=GGOV1_NOISY_TAPS)


@pytest.fixture(scope="session")
def st6b_train60_noisy(st6b_train60):
    return add_noise(st6b_train60, 40.0, seed=13, channels=ST6B_NOISY_TAPS)


@pytest.fixture(scope="session")
def st6b_valid40_noisy(st6b_valid40):
    return add_noise(st6b_valid40, 40.0, seed=14, channels=ST6B_NOISY_TAPS)


@pytest.fixture(scope="session")
def ggov1_train10():
    """Short training record for optimizer experiments."""
    return make_ggov1_record(10.0, 4.0, 0.75, 0.78125, 5.0, 0.90, 0.906)


@pytest.fixture(scope="session")
def ggov1_valid10():
    return make_ggov1_record(10.0, 3.0, 0.75, 0.79, 4.0, 0.90, 0.905)
