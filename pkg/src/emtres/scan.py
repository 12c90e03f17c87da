"""Small-signal perturbation frequency scan and its direct linear oracle.

The perturbation path injects a gated sinusoidal current at a bus on top of
the settled operating point, subtracts a shared baseline run, and extracts
single-frequency phasors of the bus voltage and of the currents into each
subsystem.  The direct path assembles the complex nodal admittance of a
passive subnetwork per frequency and solves it; it is the validation oracle
for the perturbation path and must stay independent of the time-domain
machinery.
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import PchipInterpolator

from . import network as net
from . import solver
from .errors import (AssemblyError, ParameterError, SteadyStateError,
                     UnsupportedElementError, WindowError)

TWO_PI = 2.0 * math.pi


def default_frequency_grid(f_max=5000.0):
    """Variable-step grid: 1 Hz steps to 150 Hz, 5 Hz to 750 Hz, 50 Hz above."""
    parts = [np.arange(1.0, min(150.0, f_max) + 0.5, 1.0)]
    if f_max > 150.0:
        parts.append(np.arange(155.0, min(750.0, f_max) + 0.5, 5.0))
    if f_max > 750.0:
        parts.append(np.arange(800.0, f_max + 0.5, 50.0))
    return np.concatenate(parts)


@dataclass
class ScanPlan:
    """Where and how to perturb.

    side1/side2 list element names whose currents, oriented out of the bus,
    make up each subsystem; side2 = None means every other incident branch,
    side2 = () a single-sided measurement.
    """

    bus: str
    frequencies: np.ndarray
    side1: tuple
    side2: tuple | None = None
    amplitude: float | None = None          # A peak; overrides the fraction
    amplitude_fraction: float = 0.01
    nominal_current: float | None = None    # A peak, for the fraction
    settle_margin: float = 0.3
    min_window: float = 0.2
    min_periods: int = 10
    kcl_tol: float = 1e-3
    label: str = ""

    def __post_init__(self):
        f = np.asarray(self.frequencies, dtype=float)
        if f.ndim != 1 or len(f) == 0 or np.any(f <= 0) or np.any(np.diff(f) <= 0):
            raise ParameterError("frequencies must be strictly increasing and > 0")
        self.frequencies = f
        self.side1 = tuple(self.side1)
        if self.side2 is not None:
            self.side2 = tuple(self.side2)
        if self.min_periods < 1:
            raise ParameterError("measurement window must cover >= 1 period")

    def injection_amplitude(self):
        if self.amplitude is not None:
            return self.amplitude
        if self.nominal_current is None:
            raise ParameterError("need amplitude or nominal_current on the plan")
        return self.amplitude_fraction * self.nominal_current


@dataclass
class PerturbationMeasurement:
    frequency: float
    v: complex
    i1: complex
    i2: complex
    residual: float
    accepted: bool


@dataclass
class ImpedanceCurve:
    """Complex impedance versus frequency for one subsystem side."""

    f: np.ndarray
    z: np.ndarray
    side: str = "Z1"
    provenance: str = "perturbation"  # perturbation | direct-scan | interpolated
    accepted: np.ndarray = None

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        self.z = np.asarray(self.z, dtype=complex)
        if self.accepted is None:
            self.accepted = np.ones(len(self.f), dtype=bool)

    @property
    def magnitude(self):
        return np.abs(self.z)

    @property
    def phase_deg(self):
        return np.degrees(np.angle(self.z))

    def to_csv(self, path):
        with open(path, "w") as fp:
            fp.write("frequency_hz,re_ohm,im_ohm,mag_ohm,phase_deg,provenance,accepted\n")
            for k in range(len(self.f)):
                z = complex(self.z[k])
                fp.write(f"{float(self.f[k])!r},{z.real!r},{z.imag!r},"
                         f"{abs(z)!r},{math.degrees(cmath.phase(z))!r},"
                         f"{self.provenance},{int(self.accepted[k])}\n")


@dataclass
class ImpedancePair:
    """Z1/Z2 seen from one perturbation bus, on a common frequency grid."""

    f: np.ndarray
    z1: np.ndarray
    z2: np.ndarray | None
    provenance: str = "perturbation"
    accepted: np.ndarray = None
    residual: np.ndarray = None
    measurements: list = field(default_factory=list)
    label: str = ""

    def __post_init__(self):
        self.f = np.asarray(self.f, dtype=float)
        self.z1 = np.asarray(self.z1, dtype=complex)
        if self.z2 is not None:
            self.z2 = np.asarray(self.z2, dtype=complex)
        if self.accepted is None:
            self.accepted = np.ones(len(self.f), dtype=bool)
        if self.residual is None:
            self.residual = np.zeros(len(self.f))

    def curve1(self):
        return ImpedanceCurve(self.f, self.z1, "Z1", self.provenance, self.accepted.copy())

    def curve2(self):
        if self.z2 is None:
            raise ParameterError("single-sided scan has no Z2 curve")
        return ImpedanceCurve(self.f, self.z2, "Z2", self.provenance, self.accepted.copy())


# ---------------------------------------------------------------------------
# extraction primitives
# ---------------------------------------------------------------------------

def single_bin_dft(samples, dt, f, t0=0.0, n_periods=10):
    """Phasor (peak amplitude, phase at window start) of the f-component.

    Solved as a three-parameter least-squares fit {cos, sin, DC} over the
    window, which is exact (to rounding) for any tone at f regardless of
    sampling commensurability, and reduces to the orthogonal single-bin DFT
    when the window holds an integer number of every component's periods.
    """
    if f <= 0:
        raise ParameterError("single_bin_dft needs f > 0")
    samples = np.asarray(samples, dtype=float)
    k0 = int(round(t0 / dt))
    n = int(round(n_periods / (f * dt)))
    if k0 < 0 or n < 2 or k0 + n > len(samples):
        raise WindowError(
            f"window of {n_periods} periods at {f} Hz from t0={t0} exceeds the record")
    seg = samples[k0:k0 + n]
    t = np.arange(n) * dt
    a = np.empty((n, 3))
    a[:, 0] = np.cos(TWO_PI * f * t)
    a[:, 1] = np.sin(TWO_PI * f * t)
    a[:, 2] = 1.0
    coef, *_ = np.linalg.lstsq(a, seg, rcond=None)
    return complex(coef[0], -coef[1])


def detect_steady_state(wave: solver.WaveformSet, tol=1e-3, f_nom=50.0,
                        channels=None, n_cycles=5):
    """Earliest time at which every monitored channel's per-cycle RMS has
    changed by less than `tol` (relative) across `n_cycles` consecutive
    fundamental cycles.  Raises SteadyStateError when the record never
    qualifies."""
    names = channels if channels is not None else wave.names
    npc = int(round(1.0 / (f_nom * wave.dt)))
    total = wave.n_samples // npc
    if total < n_cycles:
        raise SteadyStateError(f"record shorter than {n_cycles} cycles")
    rms = np.empty((len(names), total))
    for c, name in enumerate(names):
        x = wave.channel(name)[:total * npc].reshape(total, npc)
        rms[c] = np.sqrt(np.mean(x * x, axis=1))
    scale = np.maximum(rms.max(axis=1, keepdims=True), 1e-300)
    change = np.abs(np.diff(rms, axis=1)) / np.maximum(
        np.maximum(rms[:, 1:], rms[:, :-1]), 1e-9 * scale)
    ok = np.all(change < tol, axis=0)
    need = n_cycles - 1
    run = 0
    for m in range(len(ok)):
        run = run + 1 if ok[m] else 0
        if run >= need:
            # cycle index m+1 closes the qualifying window
            return wave.t0 - wave.dt + (m + 2) * npc * wave.dt
    raise SteadyStateError(
        f"no steady state within the {wave.n_samples * wave.dt:.3g} s record (tol {tol})")


def measurement_window(f, dt, min_periods=10, min_window=0.2):
    """Integer-period window: (n_periods, n_samples)."""
    n_per = max(min_periods, int(math.ceil(min_window * f)))
    return n_per, int(round(n_per / (f * dt)))


# ---------------------------------------------------------------------------
# direct linear frequency scan (the oracle)
# ---------------------------------------------------------------------------

def direct_scan(network: net.Network, bus, frequencies=None, df=1.0, f_max=5000.0,
                side="Z1"):
    """Driving-point impedance of a linear passive subnetwork by complex
    nodal solution, unit current injected at `bus`.

    Rejects networks containing converter stations; independent sources are
    linearized (EMFs shorted, current sources opened); the magnetizing
    branch uses its unsaturated first segment.
    """
    if network.stations:
        raise UnsupportedElementError(
            "direct_scan applies to passive subnetworks only; remove MMC stations")
    if frequencies is None:
        frequencies = np.arange(df, f_max + 0.5 * df, df)
    f = np.asarray(frequencies, dtype=float)
    buses = sorted(network.buses())
    if bus not in buses:
        raise AssemblyError(f"unknown bus {bus!r}")
    bidx = {b: i for i, b in enumerate(buses)}
    bidx[net.GROUND] = -1
    n = len(buses)
    k_inj = bidx[bus]

    z = np.empty(len(f), dtype=complex)
    for kf, fk in enumerate(f):
        w = TWO_PI * fk
        Y = np.zeros((n, n), dtype=complex)

        def add(i, j, y):
            if i >= 0:
                Y[i, i] += y
                if j >= 0:
                    Y[i, j] -= y
                    Y[j, i] -= y
            if j >= 0:
                Y[j, j] += y

        for e in network.elements:
            if isinstance(e, net.Resistor):
                add(bidx[e.bus1], bidx[e.bus2], 1.0 / e.ohms)
            elif isinstance(e, net.Switch):
                if e.closed:
                    add(bidx[e.bus1], bidx[e.bus2], 1.0 / e.r_closed)
            elif isinstance(e, net.Capacitor):
                add(bidx[e.bus1], bidx[e.bus2], 1j * w * e.farads)
            elif isinstance(e, net.SeriesRLE):
                add(bidx[e.bus1], bidx[e.bus2], 1.0 / (e.r + 1j * w * e.l))
            elif isinstance(e, net.SaturableInductor):
                l1 = e.flux_points[1] / e.current_points[1]
                add(bidx[e.bus1], bidx[e.bus2], 1.0 / (1j * w * l1))
            elif isinstance(e, net.Transformer):
                y = 1.0 / (e.r_primary + 1j * w * e.l_primary)
                nodes = (bidx[e.p1], bidx[e.p2], bidx[e.s1], bidx[e.s2])
                coef = (1.0, -1.0, -e.ratio, e.ratio)
                for ri in range(4):
                    if nodes[ri] < 0:
                        continue
                    for rj in range(4):
                        if nodes[rj] >= 0:
                            Y[nodes[ri], nodes[rj]] += y * coef[ri] * coef[rj]
            # current sources are open in the linearized network

        rhs = np.zeros(n, dtype=complex)
        rhs[k_inj] = 1.0
        try:
            v = np.linalg.solve(Y, rhs)
        except np.linalg.LinAlgError as exc:
            raise AssemblyError(f"singular nodal system at {fk} Hz: {exc}") from exc
        if not np.all(np.isfinite(v)):
            raise AssemblyError(f"singular nodal system at {fk} Hz")
        z[kf] = v[k_inj]
    return ImpedanceCurve(f, z, side=side, provenance="direct-scan")


# ---------------------------------------------------------------------------
# perturbation scan
# ---------------------------------------------------------------------------

def _orientation(elem, bus):
    if isinstance(elem, net.Transformer):
        if elem.p1 == bus:
            return +1.0
        if elem.p2 == bus:
            return -1.0
        raise ParameterError(f"{elem.name} does not touch {bus} on its primary")
    if elem.bus1 == bus:
        return +1.0
    if elem.bus2 == bus:
        return -1.0
    raise ParameterError(f"{elem.name} does not touch {bus}")


def scan(network: net.Network, plan: ScanPlan, dt=1e-5, steady_tol=1e-3,
         baseline_horizon=10.0, settle_chunk=1.0, threads=1,
         snapshot=None) -> ImpedancePair:
    """Run the perturbation method for every planned frequency.

    A baseline run (no injection) is brought to steady state once and
    shared; each frequency then continues from the same snapshot with the
    injection gated on, and phasors are extracted from the injected-minus-
    baseline waveforms so background harmonics cancel exactly.  Points
    whose KCL phasor residual exceeds the plan tolerance are marked
    rejected, never dropped.  Pass `snapshot=(state, network)` from
    `prepare_scan_state` to share a settled operating point across plans.
    """
    if snapshot is None:
        state0, nw = prepare_scan_state(network, plan.bus, dt, steady_tol,
                                        baseline_horizon, settle_chunk)
    else:
        state0, nw = snapshot

    inj = "_inj"
    side1 = [(nw.element(nm), _orientation(nw.element(nm), plan.bus)) for nm in plan.side1]
    if plan.side2 is None:
        used = set(plan.side1)
        side2 = [(e, s) for e, s in nw.incident(plan.bus) if e.name not in used]
    else:
        side2 = [(nw.element(nm), _orientation(nw.element(nm), plan.bus)) for nm in plan.side2]
    if not side1:
        raise ParameterError("side1 must name at least one branch")

    probes = (["v:" + plan.bus, "i:" + inj]
              + [f"i:{e.name}" for e, _ in side1] + [f"i:{e.name}" for e, _ in side2])
    amp = plan.injection_amplitude()

    windows = {f: measurement_window(f, dt, plan.min_periods, plan.min_window)
               for f in plan.frequencies}
    t_max = plan.settle_margin + max(np.array(
        [n_s * dt for (_, n_s) in windows.values()]))
    base_state = state0.copy()
    w_base = solver.continue_run(base_state, t_max, probes)

    def one(f):
        n_per, n_samp = windows[f]
        st = state0.copy()
        st.set_current_source(inj, amp, f, 0.0, t_on=st.t)
        dur = plan.settle_margin + n_samp * dt
        w = solver.continue_run(st, dur, probes)
        diff = w.data - w_base.data[:, :w.n_samples]
        k0 = int(round(plan.settle_margin / dt))

        def phasor(row):
            seg = diff[row, k0:k0 + n_samp]
            t = np.arange(n_samp) * dt
            a = np.empty((n_samp, 3))
            a[:, 0] = np.cos(TWO_PI * f * t)
            a[:, 1] = np.sin(TWO_PI * f * t)
            a[:, 2] = 1.0
            coef, *_ = np.linalg.lstsq(a, seg, rcond=None)
            return complex(coef[0], -coef[1])

        v = phasor(0)
        i_inj = phasor(1)
        i1 = sum(s * phasor(2 + k) for k, (_, s) in enumerate(side1))
        i2 = sum(s * phasor(2 + len(side1) + k) for k, (_, s) in enumerate(side2))
        res = abs(i_inj - i1 - i2) / max(abs(i_inj), 1e-300)
        return PerturbationMeasurement(f, v, i1, i2, res, res < plan.kcl_tol)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            meas = list(pool.map(one, plan.frequencies))
    else:
        meas = [one(f) for f in plan.frequencies]

    z1 = np.array([m.v / m.i1 if m.i1 != 0 else complex(math.nan) for m in meas])
    z2 = None
    if side2:
        z2 = np.array([m.v / m.i2 if m.i2 != 0 else complex(math.nan) for m in meas])
    return ImpedancePair(
        f=plan.frequencies, z1=z1, z2=z2, provenance="perturbation",
        accepted=np.array([m.accepted for m in meas]),
        residual=np.array([m.residual for m in meas]),
        measurements=meas, label=plan.label)


def prepare_scan_state(network, bus, dt=1e-5, steady_tol=1e-3,
                       baseline_horizon=10.0, settle_chunk=1.0):
    """Assemble the network plus injection source and run it to steady state.

    Returns (state, network-with-injection); the state sits at the snapshot
    every per-frequency run branches from.
    """
    nw = network.copy()
    nw.add_current_source("_inj", net.GROUND, bus, amp=0.0)
    state = solver.assemble(nw, dt)
    monitor = ["v:" + bus] + [f"{s.name}.i_dc" for s in nw.stations]
    elapsed = 0.0
    last_err = None
    while elapsed < baseline_horizon:
        w = solver.continue_run(state, settle_chunk, monitor)
        elapsed += settle_chunk
        try:
            detect_steady_state(w, tol=steady_tol, f_nom=nw.f_nom)
            return state, nw
        except SteadyStateError as exc:
            last_err = exc
    raise SteadyStateError(
        f"no steady state at {bus} within {baseline_horizon} s: {last_err}")


# ---------------------------------------------------------------------------
# interpolation onto a uniform grid
# ---------------------------------------------------------------------------

def interpolate(curve: ImpedanceCurve, f_target) -> ImpedanceCurve:
    """Monotone piecewise-cubic interpolation of log10|Z| and unwrapped
    phase, each against log10 f; raises on extrapolation requests.  Only
    accepted points support the interpolant."""
    f_target = np.asarray(f_target, dtype=float)
    m = curve.accepted & np.isfinite(curve.z) & (np.abs(curve.z) > 0)
    f_src = curve.f[m]
    if len(f_src) < 2:
        raise ParameterError("need at least two accepted points to interpolate")
    if f_target.min() < f_src.min() - 1e-12 or f_target.max() > f_src.max() + 1e-12:
        raise WindowError(
            f"target grid [{f_target.min()}, {f_target.max()}] Hz extrapolates the "
            f"scan range [{f_src.min()}, {f_src.max()}] Hz")
    lx = np.log10(f_src)
    mag = PchipInterpolator(lx, np.log10(np.abs(curve.z[m])))
    ph = PchipInterpolator(lx, np.unwrap(np.angle(curve.z[m])))
    lt = np.log10(f_target)
    z = 10.0 ** mag(lt) * np.exp(1j * ph(lt))
    return ImpedanceCurve(f_target, z, curve.side, "interpolated")


def interpolate_pair(pair: ImpedancePair, f_target) -> ImpedancePair:
    z1 = interpolate(pair.curve1(), f_target).z
    z2 = interpolate(pair.curve2(), f_target).z if pair.z2 is not None else None
    return ImpedancePair(np.asarray(f_target, dtype=float), z1, z2,
                         provenance="interpolated", label=pair.label)
