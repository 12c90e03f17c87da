"""Time-domain solver checks against closed-form circuit responses."""

import math

import numpy as np
import pytest

from emtres import _kernel as K
from emtres import network as net
from emtres import solver
from emtres.errors import AssemblyError, DivergenceError, ParameterError, WindowError


def rl_step_network(r=1.0, l=10e-3):
    """Series RL loop energized by a 1 V DC source active from t = 0:
    the source EMF lives inside the inductive branch, the resistor closes
    the loop, so the circuit is exactly L di/dt + R i = 1."""
    nw = net.Network()
    nw.add_series_rle("coil", "gnd", "A", 0.0, l, source=net.SineSource(amp=-1.0))
    nw.add_resistor("load", "A", "gnd", r)
    return nw


def rl_analytic(t, r=1.0, l=10e-3):
    return (1.0 / r) * (1.0 - np.exp(-r * t / l))


class TestAssemble:
    def test_resistor_injection_node_voltage(self):
        nw = net.Network()
        nw.add_resistor("r1", "A", "gnd", 2.0)
        nw.add_current_source("inj", "gnd", "A", amp=1.0, freq=0.0)
        w = solver.run(nw, [], 1e-3, ["v:A"], dt=1e-4)
        assert w.channel("v:A")[-1] == pytest.approx(2.0, rel=1e-12)

    def test_inductor_companion_conductance(self):
        nw = net.Network()
        nw.add_inductor("l1", "A", "gnd", 1.0)
        st = solver.assemble(nw, dt=1e-3)
        G = np.zeros((1, 1))
        K._stamp(G, st.dt, st.gb, st.cb, st.rb, st.tb, st.sb)
        assert G[0, 0] == pytest.approx(5e-4, rel=1e-12)  # dt / (2 L)

    def test_capacitor_companion_conductance(self):
        nw = net.Network()
        nw.add_capacitor("c1", "A", "gnd", 1e-6)
        st = solver.assemble(nw, dt=1e-3)
        G = np.zeros((1, 1))
        K._stamp(G, st.dt, st.gb, st.cb, st.rb, st.tb, st.sb)
        assert G[0, 0] == pytest.approx(2e-3, rel=1e-12)  # 2 C / dt

    def test_floating_subnetwork_named(self):
        nw = net.Network()
        nw.add_resistor("r1", "A", "gnd", 1.0)
        nw.add_resistor("r2", "B", "C", 1.0)
        with pytest.raises(AssemblyError) as exc:
            solver.assemble(nw, dt=1e-4)
        assert "B" in str(exc.value) and "C" in str(exc.value)

    def test_empty_network(self):
        with pytest.raises(AssemblyError):
            solver.assemble(net.Network(), dt=1e-4)


class TestStep:
    def test_rl_step_matches_analytic(self):
        w = solver.run(rl_step_network(), [], 50e-3, ["i:coil"], dt=1e-4)
        err = np.max(np.abs(w.channel("i:coil") - rl_analytic(w.time())))
        assert err < 5e-5  # O(dt^2) on tau = 10 ms

    def test_order_two_convergence(self):
        errs = []
        for dt in (2e-4, 1e-4):
            w = solver.run(rl_step_network(), [], 50e-3, ["i:coil"], dt=dt)
            errs.append(np.max(np.abs(w.channel("i:coil") - rl_analytic(w.time()))))
        ratio = errs[0] / errs[1]
        assert 3.5 <= ratio <= 4.5

    def test_lc_period_and_energy_drift(self):
        l, c = 1e-3, 1e-6
        nw = net.Network()
        nw.add_inductor("ind", "A", "gnd", l)
        nw.add_capacitor("cap", "A", "gnd", c, v0=1.0)
        period = 2 * math.pi * math.sqrt(l * c)
        assert period == pytest.approx(198.7e-6, abs=0.05e-6)
        dt = 1e-6
        w = solver.run(nw, [], 100 * period, ["v:A", "i:ind"], dt=dt)
        v = w.channel("v:A")
        # trapezoidal maps the oscillation to exactly |lambda| = 1 at the
        # warped frequency; amplitude extracted there must not drift
        wd = (2.0 / dt) * math.atan(2 * math.pi / period * dt / 2.0)
        t = w.time()
        n_win = int(round(10 * period / dt))

        def amp(seg, tseg):
            a = np.column_stack([np.cos(wd * tseg), np.sin(wd * tseg)])
            coef, *_ = np.linalg.lstsq(a, seg, rcond=None)
            return math.hypot(coef[0], coef[1])

        a0 = amp(v[:n_win], t[:n_win])
        a1 = amp(v[-n_win:], t[-n_win:])
        assert abs(a1 - a0) / a0 < 1e-6
        # measured period from zero crossings
        sign = np.signbit(v)
        crossings = t[1:][sign[1:] != sign[:-1]]
        meas = 2 * np.mean(np.diff(crossings))
        assert meas == pytest.approx(period, rel=2e-4)

    def test_zero_sources_zero_trajectory(self):
        nw = net.Network()
        nw.add_resistor("r", "A", "gnd", 1.0)
        nw.add_inductor("l", "A", "B", 1e-3)
        nw.add_capacitor("c", "B", "gnd", 1e-6)
        w = solver.run(nw, [], 10e-3, ["v:A", "v:B", "i:l"], dt=1e-5)
        assert np.all(w.data == 0.0)

    def test_divergence_reported_with_node(self):
        st = solver.assemble(rl_step_network(), dt=1e-4)
        st.rb[2][0, 0] = math.nan
        with pytest.raises(DivergenceError) as exc:
            solver.continue_run(st, 1e-3, ["v:A"])
        assert "A" in str(exc.value)

    def test_zero_duration_empty(self):
        w = solver.run(rl_step_network(), [], 0.0, ["i:coil"], dt=1e-4)
        assert w.n_samples == 0


def breaker_network():
    """50 Hz source behind R-L feeding a closed switch to ground."""
    nw = net.Network()
    nw.add_series_rle("src", "gnd", "A", 1.0, 10e-3,
                      source=net.SineSource(amp=-100.0, freq=50.0))
    nw.add_switch("sw", "A", "gnd", r_closed=0.5, closed=True)
    return nw


class TestEvents:
    def test_fault_window_and_zero_cross_opening(self):
        nw = net.Network()
        nw.add_series_rle("src", "gnd", "A", 1.0, 10e-3,
                          source=net.SineSource(amp=-100.0, freq=50.0))
        nw.add_resistor("load", "A", "gnd", 50.0)
        nw.add_switch("flt", "A", "gnd", closed=False)
        events = [solver.Event(0.200, "fault_apply", "flt", {"resistance_ohm": 0.1}),
                  solver.Event(0.250, "fault_clear", "flt")]
        w = solver.run(nw, events, 0.4, ["i:flt"], dt=2e-5)
        i = w.channel("i:flt")
        t = w.time()
        assert np.all(i[t < 0.2] == 0.0)
        assert np.max(np.abs(i[(t > 0.205) & (t < 0.25)])) > 10.0
        t_open = [m for m in w.markers if m[1].startswith("breaker_open")][0][0]
        assert 0.25 <= t_open <= 0.25 + 0.010  # within a half cycle
        assert np.all(i[t > t_open + 2 * w.dt] == 0.0)

    def test_interpolated_opening_below_chop_threshold(self):
        events = [solver.Event(0.1052, "fault_clear", "sw")]  # mid-cycle arm
        w = solver.run(breaker_network(), events, 0.2, ["i:sw"], dt=2e-5)
        i, t = w.channel("i:sw"), w.time()
        i_clear = abs(i[np.searchsorted(t, 0.1052)])
        assert i_clear > 10.0  # armed away from a zero
        t_open = [m for m in w.markers if m[1].startswith("breaker_open")][0][0]
        # extrapolate the conducting trajectory to the recorded opening time
        k = np.searchsorted(t, t_open) - 1
        slope = (i[k] - i[k - 1]) / w.dt
        i_at_open = i[k] + slope * (t_open - t[k])
        assert abs(i_at_open) < 1e-3 * i_clear

    def test_parameter_step_changes_steady_amplitude(self):
        # halving the source inductance raises the steady current
        nw = net.Network()
        nw.add_series_rle("src", "gnd", "A", 1.0, 50e-3,
                          source=net.SineSource(amp=-100.0, freq=50.0))
        nw.add_resistor("load", "A", "gnd", 1.0)
        events = [solver.Event(0.3, "parameter_step", "src", {"l": 25e-3})]
        w = solver.run(nw, events, 0.6, ["i:src"], dt=5e-5)
        i, t = w.channel("i:src"), w.time()
        amp_pre = np.max(np.abs(i[(t > 0.20) & (t < 0.30)]))
        amp_post = np.max(np.abs(i[(t > 0.50) & (t < 0.60)]))
        w0 = 2 * math.pi * 50
        z_pre = math.hypot(2.0, w0 * 50e-3)
        z_post = math.hypot(2.0, w0 * 25e-3)
        assert amp_pre == pytest.approx(100.0 / z_pre, rel=2e-3)
        assert amp_post == pytest.approx(100.0 / z_post, rel=2e-3)

    def test_empty_schedule_identity(self):
        w1 = solver.run(rl_step_network(), [], 20e-3, ["i:coil"], dt=1e-4)
        w2 = solver.run(rl_step_network(), (), 20e-3, ["i:coil"], dt=1e-4)
        assert w1.data.tobytes() == w2.data.tobytes()

    def test_unknown_target_rejected(self):
        with pytest.raises(ParameterError):
            solver.run(rl_step_network(),
                       [solver.Event(0.01, "fault_apply", "nope")],
                       20e-3, [], dt=1e-4)

    def test_decreasing_times_rejected(self):
        nw = breaker_network()
        evs = [solver.Event(0.2, "fault_clear", "sw"),
               solver.Event(0.1, "fault_clear", "sw")]
        with pytest.raises(ParameterError):
            solver.run(nw, evs, 0.3, [], dt=1e-4)


class TestPowerBalance:
    def test_steady_state_cycle_balance(self):
        r, l, c = 1.0, 10e-3, 10e-6
        nw = net.Network()
        nw.add_series_rle("src", "gnd", "A", r, l,
                          source=net.SineSource(amp=-100.0, freq=50.0))
        nw.add_capacitor("cap", "A", "gnd", c)
        dt = 5e-6
        w = solver.run(nw, [], 0.5, ["i:src", "v:A"], dt=dt)
        t, i, v = w.time(), w.channel("i:src"), w.channel("v:A")
        e_src = 100.0 * np.cos(2 * math.pi * 50 * t)  # EMF drives -e
        cycle = int(round(0.02 / dt))
        k0 = len(t) - 2 * cycle  # a late, settled cycle
        sl = slice(k0, k0 + cycle + 1)
        p_src = np.trapezoid(e_src[sl] * i[sl], dx=dt)
        p_diss = np.trapezoid(r * i[sl] ** 2, dx=dt)
        stored = 0.5 * l * i**2 + 0.5 * c * v**2
        d_stored = stored[k0 + cycle] - stored[k0]
        assert abs(p_src - (p_diss + d_stored)) < 1e-3 * abs(p_src)


class TestDeterminism:
    def test_bit_identical_reruns(self):
        events = [solver.Event(0.1052, "fault_clear", "sw")]
        w1 = solver.run(breaker_network(), events, 0.2, ["i:sw", "v:A"], dt=2e-5)
        w2 = solver.run(breaker_network(), events, 0.2, ["i:sw", "v:A"], dt=2e-5)
        assert w1.data.tobytes() == w2.data.tobytes()
        assert w1.markers == w2.markers


class TestWaveformIO:
    def test_binary_round_trip_and_stability(self, tmp_path):
        w = solver.run(rl_step_network(), [], 20e-3, ["i:coil", "v:A"], dt=1e-4)
        p1, p2 = tmp_path / "a.emtw", tmp_path / "b.emtw"
        w.to_binary(p1)
        w.to_binary(p2)
        assert p1.read_bytes() == p2.read_bytes()
        r = solver.WaveformSet.from_binary(p1)
        assert r.names == w.names and r.units == w.units
        assert np.array_equal(r.data, w.data)
        assert r.dt == w.dt and r.t0 == w.t0

    def test_csv_header_and_values(self, tmp_path):
        w = solver.run(rl_step_network(), [], 5e-3, ["i:coil", "v:A"], dt=1e-4)
        p = tmp_path / "w.csv"
        w.to_csv(p)
        lines = p.read_text().splitlines()
        assert lines[0] == "time_s,i:coil [A],v:A [V]"
        back = np.loadtxt(p, delimiter=",", skiprows=1)
        assert np.array_equal(back[:, 1], w.channel("i:coil"))

    def test_window_bounds(self):
        w = solver.run(rl_step_network(), [], 5e-3, ["i:coil"], dt=1e-4)
        assert len(w.window("i:coil", w.t0, w.t0 + 1e-3)) == 10
        with pytest.raises(WindowError):
            w.window("i:coil", 0.0, 1.0)
