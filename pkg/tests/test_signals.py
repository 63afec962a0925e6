import math

import numpy as np
import pytest

from govid.errors import (ConstantChannel, CutoffAboveNyquist, DegeneratePeriod,
                          EmptyFile, MalformedCsv, MissingBase, NonPositiveBase,
                          NonUniformSampling)
from govid.signals import (TimeSeries, add_noise, butterworth_lowpass,
                           de_per_unitize, load_csv, per_unitize, square_pulse,
                           write_csv)


def write_raw(path, lines):
    path.write_text("\n".join(lines) + "\n")


class TestCsv:
    def test_load_basic(self, tmp_path):
        f = tmp_path / "d.csv"
        rows = ["time_s,a,b"] + [f"{k * 0.001:.17g},{k},{2 * k}" for k in range(5001)]
        write_raw(f, rows)
        ts = load_csv(f)
        assert ts.dt == pytest.approx(0.001)
        assert ts.n_samples == 5001
        assert set(ts.channels) == {"a", "b"}

    def test_round_trip_equality(self, tmp_path):
        rng = np.random.default_rng(1)
        ts = TimeSeries(dt=0.002, channels={"x": rng.normal(size=400),
                                            "y": rng.normal(size=400) * 1e-7})
        f = tmp_path / "rt.csv"
        write_csv(ts, f)
        again = load_csv(f)
        assert ts.equals(again)

    def test_gap_rejected_with_index(self, tmp_path):
        f = tmp_path / "gap.csv"
        times = [k * 0.001 for k in range(200)]
        times[100] += 0.0005
        write_raw(f, ["time_s,a"] + [f"{t:.17g},{k}" for k, t in enumerate(times)])
        with pytest.raises(NonUniformSampling) as err:
            load_csv(f)
        assert err.value.index == 100

    def test_empty_file(self, tmp_path):
        f = tmp_path / "empty.csv"
        write_raw(f, ["time_s,a"])
        with pytest.raises(EmptyFile):
            load_csv(f)

    def test_malformed_field_count(self, tmp_path):
        f = tmp_path / "bad.csv"
        write_raw(f, ["time_s,a", "0.0,1.0", "0.001,1.0,9.9"])
        with pytest.raises(MalformedCsv) as err:
            load_csv(f)
        assert err.value.line == 3

    def test_malformed_not_a_number(self, tmp_path):
        f = tmp_path / "bad2.csv"
        write_raw(f, ["time_s,a", "0.0,1.0", "0.001,oops"])
        with pytest.raises(MalformedCsv):
            load_csv(f)

    def test_comments_skipped(self, tmp_path):
        f = tmp_path / "c.csv"
        write_raw(f, ["# comment", "time_s,a", "0.0,1.0", "# mid", "0.001,2.0"])
        ts = load_csv(f)
        assert ts.n_samples == 2


class TestButterworth:
    def test_constant_unchanged(self):
        ts = TimeSeries(dt=0.001, channels={"x": np.full(4000, 0.75)})
        out = butterworth_lowpass(ts, 40.0, 2)
        np.testing.assert_allclose(out.channel("x"), 0.75, atol=1e-9)

    def test_passband_and_stopband(self):
        # forward-backward magnitude is 1/(1 + (f/fc)^(2*order)); at 5 Hz
        # with a 40 Hz cutoff the amplitude survives within 1%, at 200 Hz it
        # is cut by at least 97%
        dt = 0.001
        t = np.arange(0, 20.0, dt)
        for freq, lo, hi in [(5.0, 0.99, 1.01), (200.0, 0.0, 0.03)]:
            ts = TimeSeries(dt=dt, channels={"x": np.sin(2 * np.pi * freq * t)})
            out = butterworth_lowpass(ts, 40.0, 2).channel("x")
            interior = slice(2000, -2000)
            amp = np.max(np.abs(out[interior]))
            assert lo <= amp <= hi

    def test_cutoff_above_nyquist(self):
        ts = TimeSeries(dt=0.001, channels={"x": np.zeros(100)})
        with pytest.raises(CutoffAboveNyquist):
            butterworth_lowpass(ts, 600.0, 2)

    def test_energy_non_increase(self):
        rng = np.random.default_rng(5)
        window = np.hanning(8000)
        ts = TimeSeries(dt=0.001, channels={"x": rng.normal(size=8000) * window})
        out = butterworth_lowpass(ts, 40.0, 2).channel("x")
        assert np.sum(out ** 2) <= np.sum(ts.channel("x") ** 2)

    def test_length_and_names_preserved(self):
        ts = TimeSeries(dt=0.001, channels={"a": np.ones(500), "b": np.zeros(500)})
        out = butterworth_lowpass(ts, 40.0, 2)
        assert set(out.channels) == {"a", "b"}
        assert out.n_samples == 500


class TestPerUnit:
    def test_rated_base(self):
        ts = TimeSeries(dt=0.001, channels={"power": np.array([160.0, 80.0, 0.0])},
                        units={"power": "MW"})
        pu = per_unitize(ts, {"power": 160.0})
        np.testing.assert_allclose(pu.channel("power"), [1.0, 0.5, 0.0])
        assert pu.units["power"] == "pu"

    def test_identity_base(self):
        ts = TimeSeries(dt=0.001, channels={"x": np.array([1.5, 2.5])})
        pu = per_unitize(ts, {"x": 1.0})
        np.testing.assert_array_equal(pu.channel("x"), ts.channel("x"))

    def test_round_trip(self):
        rng = np.random.default_rng(2)
        ts = TimeSeries(dt=0.001, channels={"x": rng.normal(size=300) * 50})
        back = de_per_unitize(per_unitize(ts, {"x": 37.5}))
        np.testing.assert_allclose(back.channel("x"), ts.channel("x"), rtol=1e-12)

    def test_missing_base(self):
        ts = TimeSeries(dt=0.001, channels={"x": np.ones(10), "y": np.ones(10)})
        with pytest.raises(MissingBase):
            per_unitize(ts, {"x": 1.0})

    def test_non_positive_base(self):
        ts = TimeSeries(dt=0.001, channels={"x": np.ones(10)})
        with pytest.raises(NonPositiveBase):
            per_unitize(ts, {"x": 0.0})


class TestSquarePulse:
    def test_five_mw_pulse_levels(self):
        # 5 MW on the 160 MW base
        ts = square_pulse(0.001, 40.0, 20.0, 0.5, 0.75, 0.78125)
        values = set(np.unique(ts.channel("u")))
        assert values == {0.75, 0.78125}

    def test_equal_on_off_counts(self):
        ts = square_pulse(0.001, 20.0, 20.0, 0.5, 0.0, 1.0)
        u = ts.channel("u")[:20000]
        assert int(np.sum(u == 1.0)) == 10000
        assert int(np.sum(u == 0.0)) == 10000

    def test_starts_low(self):
        ts = square_pulse(0.01, 2.0, 1.0, 0.5, -1.0, 1.0)
        assert ts.channel("u")[0] == -1.0

    def test_flat_when_levels_equal(self):
        ts = square_pulse(0.001, 5.0, 1.0, 0.5, 0.3, 0.3)
        np.testing.assert_array_equal(ts.channel("u"), 0.3)

    def test_degenerate_period(self):
        with pytest.raises(DegeneratePeriod):
            square_pulse(0.1, 10.0, 0.15, 0.5, 0.0, 1.0)

    def test_duty_out_of_range(self):
        with pytest.raises(ValueError):
            square_pulse(0.001, 1.0, 0.5, 1.5, 0.0, 1.0)


class TestAddNoise:
    def test_seed_determinism(self):
        ts = square_pulse(0.001, 10.0, 2.0, 0.5, 0.0, 1.0)
        a = add_noise(ts, 30.0, seed=42)
        b = add_noise(ts, 30.0, seed=42)
        assert a.equals(b)
        c = add_noise(ts, 30.0, seed=43)
        assert not a.equals(c)

    def test_empirical_snr(self):
        ts = square_pulse(0.001, 100.0, 2.0, 0.5, 0.0, 1.0)
        noisy = add_noise(ts, 40.0, seed=0)
        noise = noisy.channel("u") - ts.channel("u")
        snr_db = 10 * np.log10(np.var(ts.channel("u")) / np.var(noise))
        assert abs(snr_db - 40.0) < 0.5

    def test_infinite_snr_identity(self):
        ts = square_pulse(0.001, 5.0, 1.0, 0.5, 0.0, 1.0)
        out = add_noise(ts, math.inf, seed=0)
        assert out.equals(ts)

    def test_constant_channel_rejected(self):
        ts = TimeSeries(dt=0.001, channels={"x": np.ones(100)})
        with pytest.raises(ConstantChannel):
            add_noise(ts, 40.0, seed=0)
