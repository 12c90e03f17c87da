"""Frequency-scan machinery: extraction primitives, the direct oracle and
the full perturbation pipeline on small analytic networks."""

import math

import numpy as np
import pytest

from emtres import grid, mmc
from emtres import network as net
from emtres import scan, solver
from emtres.errors import (AssemblyError, ParameterError, SteadyStateError,
                           UnsupportedElementError, WindowError)

W50 = 2 * math.pi * 50.0


class TestSingleBinDft:
    def test_pure_tone_exact(self):
        dt = 1e-5
        t = np.arange(int(0.2 / dt)) * dt
        x = np.cos(2 * np.pi * 76.0 * t)
        ph = scan.single_bin_dft(x, dt, 76.0, t0=0.0, n_periods=10)
        assert abs(ph - 1.0) < 1e-9

    def test_two_tone_commensurate_window(self):
        # 0.5 s holds 25 periods of 50 Hz and 38 of 76 Hz
        dt = 1e-5
        t = np.arange(int(round(0.5 / dt))) * dt
        x = np.cos(2 * np.pi * 50 * t) + 0.1 * np.cos(2 * np.pi * 76 * t)
        ph = scan.single_bin_dft(x, dt, 76.0, t0=0.0, n_periods=38)
        assert abs(ph - 0.1) < 1e-9

    def test_dc_reads_zero(self):
        dt = 1e-5
        x = np.full(int(0.2 / dt), 3.0)
        ph = scan.single_bin_dft(x, dt, 76.0, t0=0.0, n_periods=10)
        assert abs(ph) < 1e-12

    def test_phase_convention(self):
        dt = 1e-5
        t = np.arange(int(0.3 / dt)) * dt
        x = 2.0 * np.cos(2 * np.pi * 50 * t + 0.7)
        ph = scan.single_bin_dft(x, dt, 50.0, t0=0.0, n_periods=10)
        assert abs(ph - 2.0 * np.exp(1j * 0.7)) < 1e-9

    def test_window_outside_record(self):
        with pytest.raises(WindowError):
            scan.single_bin_dft(np.zeros(100), 1e-5, 76.0, t0=0.0, n_periods=10)


def _wave(x, dt, t0=dt if False else None):
    return solver.WaveformSet(dt, dt, ["ch"], [""], x.reshape(1, -1), [])


class TestDetectSteadyState:
    def test_pure_sinusoid_five_cycles(self):
        dt = 1e-4
        t = dt + np.arange(int(1.0 / dt)) * dt
        w = solver.WaveformSet(dt, dt, ["v"], ["V"],
                               np.sin(W50 * t).reshape(1, -1), [])
        assert scan.detect_steady_state(w) == pytest.approx(0.1, abs=dt)

    def test_settling_envelope(self):
        # (1 + e^(-t/tau)) * cos: per-cycle RMS change decays like
        # (1 - e^(-T/tau)) e^(-t/tau); solve that against the tolerance.
        dt, tau, tol = 1e-4, 0.2, 1e-3
        t = dt + np.arange(int(3.0 / dt)) * dt
        x = (1 + np.exp(-t / tau)) * np.cos(W50 * t)
        w = solver.WaveformSet(dt, dt, ["v"], ["V"], x.reshape(1, -1), [])
        got = scan.detect_steady_state(w, tol=tol)
        rate = 1 - math.exp(-0.02 / tau)
        t_pass = tau * math.log(rate / tol)  # first compliant cycle boundary
        assert got == pytest.approx(t_pass + 5 * 0.02, abs=0.06)

    def test_diverging_channel_errors(self):
        dt = 1e-4
        t = dt + np.arange(int(1.0 / dt)) * dt
        x = np.exp(t) * np.cos(W50 * t)
        w = solver.WaveformSet(dt, dt, ["v"], ["V"], x.reshape(1, -1), [])
        with pytest.raises(SteadyStateError):
            scan.detect_steady_state(w)


class TestInterpolate:
    def test_identity_on_own_grid(self):
        f = np.arange(10.0, 101.0, 1.0)
        z = (3 + 1j * 2 * np.pi * f * 0.01)
        c = scan.ImpedanceCurve(f, z)
        out = scan.interpolate(c, f)
        assert np.allclose(out.z, z, rtol=1e-12)
        assert out.provenance == "interpolated"

    def test_two_point_inductor_log_midpoint(self):
        l = 0.05
        f = np.array([10.0, 1000.0])
        c = scan.ImpedanceCurve(f, 1j * 2 * np.pi * f * l)
        out = scan.interpolate(c, np.array([100.0]))  # log midpoint
        assert abs(out.z[0]) == pytest.approx(2 * np.pi * 100 * l, rel=1e-12)
        assert np.angle(out.z[0]) == pytest.approx(np.pi / 2, abs=1e-12)

    def test_phase_unwrap_no_jumps(self):
        f = np.arange(10.0, 30.1, 2.0)
        ph = np.linspace(200.0, 340.0, len(f))  # crosses the +/-180 cut
        z = np.exp(1j * np.radians(ph))
        out = scan.interpolate(scan.ImpedanceCurve(f, z), np.arange(10.0, 30.01, 0.5))
        unw = np.unwrap(np.angle(out.z))
        assert np.max(np.abs(np.diff(np.degrees(unw)))) < 10.0

    def test_extrapolation_rejected(self):
        c = scan.ImpedanceCurve(np.array([10.0, 100.0]), np.array([1 + 0j, 2 + 0j]))
        with pytest.raises(WindowError):
            scan.interpolate(c, np.array([5.0]))

    def test_rejected_points_not_used(self):
        f = np.array([10.0, 20.0, 30.0])
        z = np.array([1.0, 100.0, 1.0], dtype=complex)  # middle point bogus
        acc = np.array([True, False, True])
        out = scan.interpolate(scan.ImpedanceCurve(f, z, accepted=acc), np.array([20.0]))
        assert abs(out.z[0]) == pytest.approx(1.0, rel=1e-9)


class TestDirectScan:
    def test_thevenin_at_50hz(self):
        tp = grid.thevenin_from_scc(400.0, 10.0, 10.0, 50.0)
        nw = net.Network()
        nw.add_series_rle("eq", "gnd", "P", tp.r_series, tp.l_series)
        c = scan.direct_scan(nw, "P", frequencies=[50.0])
        assert abs(c.z[0]) == pytest.approx(16.0, rel=1e-9)
        assert c.phase_deg[0] == pytest.approx(math.degrees(math.atan(10.0)), abs=1e-9)
        assert c.phase_deg[0] == pytest.approx(84.29, abs=0.01)

    def test_series_rlc_resonance(self):
        nw = net.Network()
        nw.add_series_rle("rl", "P", "M", 1.0, 10e-3)
        nw.add_capacitor("c", "M", "gnd", 10e-6)
        f0 = 1.0 / (2 * math.pi * math.sqrt(10e-3 * 10e-6))
        assert f0 == pytest.approx(503.3, abs=0.05)
        c = scan.direct_scan(nw, "P", frequencies=np.arange(450.0, 551.0, 1.0))
        k = np.argmin(c.magnitude)
        assert abs(c.f[k] - f0) <= 1.0
        assert c.magnitude[k] == pytest.approx(1.0, rel=1e-3)

    def test_open_bus_singular(self):
        nw = net.Network()
        nw.add_current_source("i", "gnd", "X", amp=1.0)
        with pytest.raises(AssemblyError):
            scan.direct_scan(nw, "X", frequencies=[50.0])

    def test_converter_rejected(self):
        nw = net.Network()
        st = mmc.MmcStation("mmc1", mmc.MmcParams(), ["a", "b", "c"], "dcp", "dcn")
        nw.add_station(st)
        with pytest.raises(UnsupportedElementError):
            scan.direct_scan(nw, "a", frequencies=[50.0])


def divider_network():
    nw = net.Network()
    nw.add_resistor("r1", "P", "gnd", 16.0)
    nw.add_resistor("r2", "P", "gnd", 100.0)
    return nw


def thevenin_branch_network():
    """Energized Thevenin on side 1, passive R-L on side 2."""
    tp = grid.thevenin_from_scc(400.0, 10.0, 10.0, 50.0)
    nw = net.Network()
    nw.add_series_rle("eq", "gnd", "P", tp.r_series, tp.l_series,
                      source=net.SineSource(tp.emf_peak, 50.0, 0.0, 0.0, 0.1))
    nw.add_series_rle("branch", "P", "gnd", 5.0, 20e-3)
    return nw, tp


class TestPerturbationScan:
    def test_resistive_divider(self):
        plan = scan.ScanPlan("P", [13.0, 76.0], side1=("r1",), side2=("r2",),
                             amplitude=1.0)
        pair = scan.scan(divider_network(), plan, dt=1e-4)
        assert np.all(pair.accepted)
        assert np.allclose(np.abs(pair.z1), 16.0, rtol=1e-6)
        assert np.allclose(np.abs(pair.z2), 100.0, rtol=1e-6)
        assert np.allclose(np.degrees(np.angle(pair.z1)), 0.0, atol=1e-4)

    def test_against_analytic_branch(self):
        nw, tp = thevenin_branch_network()
        freqs = np.array([20.0, 76.0, 210.0])
        plan = scan.ScanPlan("P", freqs, side1=("eq",), side2=None, amplitude=10.0)
        pair = scan.scan(nw, plan, dt=2e-5)
        assert np.all(pair.accepted)
        w = 2 * np.pi * freqs
        z1_ref = tp.r_series + 1j * w * tp.l_series
        z2_ref = 5.0 + 1j * w * 20e-3
        assert np.all(np.abs(np.abs(pair.z1) / np.abs(z1_ref) - 1) < 0.02)
        assert np.all(np.abs(np.abs(pair.z2) / np.abs(z2_ref) - 1) < 0.02)
        dph1 = np.degrees(np.angle(pair.z1 / z1_ref))
        dph2 = np.degrees(np.angle(pair.z2 / z2_ref))
        assert np.all(np.abs(dph1) < 2.0) and np.all(np.abs(dph2) < 2.0)
        assert np.all(pair.residual < 1e-3)

    def test_linearity_half_amplitude(self):
        nw, _ = thevenin_branch_network()
        out = {}
        for amp in (10.0, 5.0):
            plan = scan.ScanPlan("P", [76.0], side1=("eq",), amplitude=amp)
            out[amp] = scan.scan(nw, plan, dt=2e-5).z1[0]
        assert abs(out[5.0] / out[10.0] - 1) < 0.005

    def test_thread_determinism(self):
        plan = scan.ScanPlan("P", [13.0, 29.0, 76.0], side1=("r1",), side2=("r2",),
                             amplitude=1.0)
        p1 = scan.scan(divider_network(), plan, dt=1e-4, threads=1)
        p2 = scan.scan(divider_network(), plan, dt=1e-4, threads=3)
        assert np.array_equal(p1.z1, p2.z1)
        assert np.array_equal(p1.z2, p2.z2)

    def test_plan_validation(self):
        with pytest.raises(ParameterError):
            scan.ScanPlan("P", [50.0, 50.0], side1=("r1",))
        with pytest.raises(ParameterError):
            scan.ScanPlan("P", [], side1=("r1",))
        with pytest.raises(ParameterError):
            scan.ScanPlan("P", [10.0], side1=("r1",)).injection_amplitude()


class TestDefaultGrid:
    def test_segments(self):
        g = scan.default_frequency_grid()
        assert g[0] == 1.0 and g[-1] == 5000.0
        d = np.diff(g)
        assert np.all(d[g[1:] <= 150] == 1.0)
        assert np.all(d[(g[1:] > 150) & (g[1:] <= 750)] == 5.0)
        assert np.all(d[g[1:] > 750] == 50.0)
        assert len(g) <= 400
