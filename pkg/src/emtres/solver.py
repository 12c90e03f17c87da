"""Fixed-step time-domain solver: companion-model nodal analysis with
trapezoidal integration, event scheduling and waveform probing.

`assemble` turns a Network into a SolverState (flat kernel arrays plus the
name maps); `run`/`continue_run` advance it and record probe channels.
A run is strictly sequential; distinct states share nothing, so scans and
sweeps parallelize by copying states.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernel as K
from . import network as net
from .errors import AssemblyError, DivergenceError, ParameterError, WindowError

BINARY_MAGIC = b"EMTWAV01"

STATION_CHANNELS = {
    "i_dc": (0, "A"),
    "v_csum": (1, "V"),
    "prot_mode": (2, ""),
    "f_pll": (3, "Hz"),
    "p_ac": (4, "W"),
    "q_ac": (5, "var"),
}

EVENT_KINDS = ("fault_apply", "fault_clear", "parameter_step", "breaker_open",
               "injection_start", "injection_stop")


@dataclass
class Event:
    """Scheduled network change; times must be non-decreasing in a schedule."""

    time: float
    kind: str
    target: str
    payload: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ParameterError(f"unknown event kind {self.kind!r}")


@dataclass
class WaveformSet:
    """Uniformly sampled multi-channel record with event markers."""

    dt: float
    t0: float  # time of the first sample
    names: list
    units: list
    data: np.ndarray  # [n_channels, n_samples]
    markers: list = field(default_factory=list)  # (time, label)

    @property
    def n_samples(self):
        return self.data.shape[1]

    def time(self):
        return self.t0 + self.dt * np.arange(self.n_samples)

    def channel(self, name):
        return self.data[self.names.index(name)]

    def window(self, name, t_start, t_stop):
        """Samples of one channel on [t_start, t_stop)."""
        i0 = int(math.ceil((t_start - self.t0) / self.dt - 1e-9))
        i1 = int(math.ceil((t_stop - self.t0) / self.dt - 1e-9))
        if i0 < 0 or i1 > self.n_samples:
            raise WindowError(
                f"window [{t_start}, {t_stop}) outside record "
                f"[{self.t0}, {self.t0 + self.n_samples * self.dt})")
        return self.channel(name)[i0:i1]

    def to_csv(self, path):
        t = self.time()
        with open(path, "w") as f:
            cols = ["time_s"] + [
                f"{n} [{u}]" if u else n for n, u in zip(self.names, self.units)]
            f.write(",".join(cols) + "\n")
            for k in range(self.n_samples):
                row = [repr(float(t[k]))] + [
                    repr(float(self.data[c, k])) for c in range(len(self.names))]
                f.write(",".join(row) + "\n")

    def to_binary(self, path):
        """Columnar little-endian float64 with a JSON header; bit-stable."""
        header = json.dumps({
            "dt": self.dt, "t0": self.t0, "n_samples": int(self.n_samples),
            "channels": [{"name": n, "unit": u} for n, u in zip(self.names, self.units)],
            "markers": [[t, lab] for t, lab in self.markers],
        }, sort_keys=True).encode()
        with open(path, "wb") as f:
            f.write(BINARY_MAGIC)
            f.write(np.uint32(len(header)).astype("<u4").tobytes())
            f.write(header)
            f.write(np.ascontiguousarray(self.data, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, path):
        with open(path, "rb") as f:
            if f.read(8) != BINARY_MAGIC:
                raise ValueError(f"{path}: not a waveform file")
            hlen = int(np.frombuffer(f.read(4), dtype="<u4")[0])
            h = json.loads(f.read(hlen).decode())
            data = np.frombuffer(f.read(), dtype="<f8").reshape(
                len(h["channels"]), h["n_samples"]).copy()
        return cls(h["dt"], h["t0"], [c["name"] for c in h["channels"]],
                   [c["unit"] for c in h["channels"]], data,
                   [(m[0], m[1]) for m in h["markers"]])


# element kind tags used in the name map
KIND_GB, KIND_CB, KIND_RB, KIND_TB, KIND_SB, KIND_IS, KIND_ST = range(7)


class SolverState:
    """Assembled nodal system plus all per-branch histories.

    The dense conductance matrix is refactored (re-inverted) by the kernel
    whenever the topology epoch changes -- switch events, parameter steps or
    saturation segment changes -- never mid-epoch.
    """

    def __init__(self):
        self.n = 0
        self.dt = 0.0
        self.t = 0.0
        self.f_nom = 50.0
        self.bus_index = {}
        self.elem = {}  # name -> (kind, idx)
        self.gb_names = []
        self.station_names = []
        # kernel array tuples filled by assemble()
        self.gb = self.cb = self.rb = self.tb = self.sb = self.isrc = self.st = None

    def copy(self):
        s = SolverState.__new__(SolverState)
        s.n, s.dt, s.t, s.f_nom = self.n, self.dt, self.t, self.f_nom
        s.bus_index = self.bus_index
        s.elem = self.elem
        s.gb_names = self.gb_names
        s.station_names = self.station_names
        s.gb = tuple(a.copy() for a in self.gb)
        s.cb = tuple(a.copy() for a in self.cb)
        s.rb = tuple(a.copy() for a in self.rb)
        s.tb = tuple(a.copy() for a in self.tb)
        s.sb = tuple(a.copy() for a in self.sb)
        s.isrc = tuple(a.copy() for a in self.isrc)
        s.st = tuple(a.copy() for a in self.st)
        return s

    # -- direct manipulation used by the scan layer -------------------------

    def set_current_source(self, name, amp, freq, phase=0.0, t_on=None, t_off=math.inf):
        kind, idx = self.elem[name]
        if kind != KIND_IS:
            raise ParameterError(f"{name} is not a current source")
        self.isrc[1][idx] = (amp, freq, phase,
                             self.t if t_on is None else t_on, t_off)

    def branch_current(self, name):
        kind, idx = self.elem[name]
        if kind == KIND_RB:
            return self.rb[2][idx, 0]
        if kind == KIND_CB:
            return self.cb[2][idx, 1]
        if kind == KIND_TB:
            return self.tb[2][idx, 0]
        if kind == KIND_SB:
            return self.sb[1][idx, 2]
        if kind == KIND_GB:
            return self.gb[4][idx]
        raise ParameterError(f"{name} has no branch current")


def assemble(network: net.Network, dt, t0=0.0) -> SolverState:
    """Stamp every element into kernel arrays; validates connectivity first."""
    if dt <= 0:
        raise ParameterError("dt must be > 0")
    network.validate()
    buses = sorted(network.buses())
    if not buses:
        raise AssemblyError("empty network")
    bidx = {b: i for i, b in enumerate(buses)}
    bidx[net.GROUND] = -1

    def nid(b):
        if b not in bidx:
            raise AssemblyError(f"unknown bus {b!r}")
        return bidx[b]

    st = SolverState()
    st.n = len(buses)
    st.dt = dt
    st.t = t0
    st.f_nom = network.f_nom
    st.bus_index = bidx

    gb_nodes, gb_g = [], []
    cb_nodes, cb_c, cb_v0 = [], [], []
    rb_nodes, rb_rl, rb_kind, rb_srcpar, rb_i0, rb_e0 = [], [], [], [], [], []
    tb_nodes, tb_par = [], []
    sb_nodes, sb_curves = [], []
    is_nodes, is_par = [], []

    for e in network.elements:
        if isinstance(e, net.Resistor):
            st.elem[e.name] = (KIND_GB, len(gb_nodes))
            st.gb_names.append(e.name)
            gb_nodes.append((nid(e.bus1), nid(e.bus2)))
            gb_g.append(1.0 / e.ohms)
        elif isinstance(e, net.Switch):
            st.elem[e.name] = (KIND_GB, len(gb_nodes))
            st.gb_names.append(e.name)
            gb_nodes.append((nid(e.bus1), nid(e.bus2)))
            gb_g.append(1.0 / e.r_closed if e.closed else 0.0)
        elif isinstance(e, net.Capacitor):
            st.elem[e.name] = (KIND_CB, len(cb_nodes))
            cb_nodes.append((nid(e.bus1), nid(e.bus2)))
            cb_c.append(e.farads)
            cb_v0.append(e.v0)
        elif isinstance(e, net.SeriesRLE):
            st.elem[e.name] = (KIND_RB, len(rb_nodes))
            rb_nodes.append((nid(e.bus1), nid(e.bus2)))
            rb_rl.append((e.r, e.l))
            rb_i0.append(e.i0)
            if e.controlled:
                rb_kind.append(2)
                rb_srcpar.append((0.0, 0.0, 0.0, 0.0, 0.0))
                rb_e0.append(0.0)
            elif e.source is not None:
                s = e.source
                rb_kind.append(1)
                rb_srcpar.append((s.amp, s.freq, s.phase, s.ramp_t0, s.ramp_t1))
                rb_e0.append(K._sine(t0, s.amp, s.freq, s.phase, s.ramp_t0, s.ramp_t1))
            else:
                rb_kind.append(0)
                rb_srcpar.append((0.0, 0.0, 0.0, 0.0, 0.0))
                rb_e0.append(0.0)
        elif isinstance(e, net.Transformer):
            st.elem[e.name] = (KIND_TB, len(tb_nodes))
            tb_nodes.append((nid(e.p1), nid(e.p2), nid(e.s1), nid(e.s2)))
            tb_par.append((e.r_primary, e.l_primary, e.ratio))
        elif isinstance(e, net.SaturableInductor):
            st.elem[e.name] = (KIND_SB, len(sb_nodes))
            sb_nodes.append((nid(e.bus1), nid(e.bus2)))
            sb_curves.append(np.column_stack([e.flux_points, e.current_points]))
        elif isinstance(e, net.CurrentSource):
            st.elem[e.name] = (KIND_IS, len(is_nodes))
            is_nodes.append((nid(e.bus1), nid(e.bus2)))
            is_par.append((e.amp, e.freq, e.phase, e.t_on, e.t_off))
        else:  # pragma: no cover
            raise AssemblyError(f"unknown element type {type(e).__name__}")

    st_par, st_state, st_arms, st_acn, st_dcn = [], [], [], [], []
    for s_idx, station in enumerate(network.stations):
        st.elem[station.name] = (KIND_ST, s_idx)
        st.station_names.append(station.name)
        arm_ids = []
        e0 = station.initial_arm_emf()
        for name, (b1, b2) in zip(station.arm_names(), station.arm_endpoints()):
            st.elem[name] = (KIND_RB, len(rb_nodes))
            arm_ids.append(len(rb_nodes))
            rb_nodes.append((nid(b1), nid(b2)))
            rb_rl.append((station.base.r_arm, station.base.l_arm))
            rb_kind.append(2)
            rb_srcpar.append((0.0, 0.0, 0.0, 0.0, 0.0))
            rb_i0.append(0.0)
            rb_e0.append(e0)
        st_par.append(station.par_array())
        st_state.append(station.initial_state())
        st_arms.append(arm_ids)
        st_acn.append([nid(b) for b in station.ac_buses])
        st_dcn.append([nid(station.dc_p), nid(station.dc_n)])

    def arr2(lst, dtype, width):
        if lst:
            return np.array(lst, dtype=dtype).reshape(len(lst), width)
        return np.zeros((0, width), dtype=dtype)

    ng, nc, nr, nt, ns_, ni = (len(gb_nodes), len(cb_nodes), len(rb_nodes),
                               len(tb_nodes), len(sb_nodes), len(is_nodes))
    max_pts = max((c.shape[0] for c in sb_curves), default=2)
    sb_pts = np.zeros((ns_, max_pts, 2))
    sb_npts = np.zeros(ns_, dtype=np.int32)
    for k, c in enumerate(sb_curves):
        sb_pts[k, :c.shape[0]] = c
        sb_npts[k] = c.shape[0]

    cb_state = np.zeros((nc, 2))
    if nc:
        cb_state[:, 0] = cb_v0
    rb_state = np.zeros((nr, 3))
    if nr:
        rb_state[:, 0] = rb_i0
        rb_state[:, 2] = rb_e0

    st.gb = (arr2(gb_nodes, np.int32, 2), np.array(gb_g, dtype=float),
             np.zeros(ng, dtype=np.uint8), np.zeros(ng), np.zeros(ng))
    st.cb = (arr2(cb_nodes, np.int32, 2), np.array(cb_c, dtype=float),
             cb_state, np.zeros(nc))
    st.rb = (arr2(rb_nodes, np.int32, 2), arr2(rb_rl, float, 2), rb_state,
             np.array(rb_kind, dtype=np.int32), arr2(rb_srcpar, float, 5),
             np.array(rb_e0, dtype=float), np.zeros(nr))
    st.tb = (arr2(tb_nodes, np.int32, 4), arr2(tb_par, float, 3),
             np.zeros((nt, 2)), np.zeros(nt))
    st.sb = (arr2(sb_nodes, np.int32, 2), np.zeros((ns_, 3)),
             np.zeros(ns_, dtype=np.int32), sb_pts, sb_npts, np.zeros((ns_, 2)))
    st.isrc = (arr2(is_nodes, np.int32, 2), arr2(is_par, float, 5))
    st.st = (arr2(st_par, float, K.SP_N), arr2(st_state, float, K.SS_N),
             arr2(st_arms, np.int32, 6), arr2(st_acn, np.int32, 3),
             arr2(st_dcn, np.int32, 2))
    return st


def _parse_probe(state: SolverState, spec):
    if spec.startswith("v:"):
        bus = spec[2:]
        if bus not in state.bus_index:
            raise ParameterError(f"probe {spec!r}: unknown bus")
        return K.PR_V, state.bus_index[bus], 0, "V"
    if spec.startswith("i:"):
        name = spec[2:]
        if name not in state.elem:
            raise ParameterError(f"probe {spec!r}: unknown element")
        kind, idx = state.elem[name]
        table = {KIND_GB: K.PR_GB, KIND_CB: K.PR_CB, KIND_RB: K.PR_RB,
                 KIND_TB: K.PR_TB, KIND_SB: K.PR_SB, KIND_IS: K.PR_IS}
        if kind not in table:
            raise ParameterError(f"probe {spec!r}: element has no branch current")
        return table[kind], idx, 0, "A"
    if "." in spec:
        stname, chan = spec.rsplit(".", 1)
        if stname in state.elem and chan in STATION_CHANNELS:
            kind, idx = state.elem[stname]
            if kind == KIND_ST:
                sub, unit = STATION_CHANNELS[chan]
                return K.PR_ST, idx, sub, unit
    raise ParameterError(f"unparseable probe spec {spec!r}")


def _events_to_arrays(state: SolverState, events):
    times, kinds, targets, pays = [], [], [], []
    last_t = -math.inf
    for ev in events:
        if ev.time < last_t:
            raise ParameterError("event times must be non-decreasing")
        last_t = ev.time
        if ev.target not in state.elem:
            raise ParameterError(f"event targets unknown element {ev.target!r}")
        kind, idx = state.elem[ev.target]
        pay = [0.0, 0.0, 0.0, 0.0]
        if ev.kind == "fault_apply":
            if kind != KIND_GB:
                raise ParameterError(f"fault_apply target {ev.target!r} is not a switch")
            r = ev.payload.get("resistance_ohm", 0.1)
            kk = K.EV_SET_SWITCH
            pay[0] = 1.0 / r
        elif ev.kind in ("fault_clear", "breaker_open"):
            if kind != KIND_GB:
                raise ParameterError(f"{ev.kind} target {ev.target!r} is not a switch")
            kk = K.EV_ARM_SWITCH
        elif ev.kind == "parameter_step":
            if kind != KIND_RB:
                raise ParameterError(f"parameter_step target {ev.target!r} is not a series branch")
            kk = K.EV_RLE_UPDATE
            pay[0] = ev.payload.get("r", math.nan)
            pay[1] = ev.payload.get("l", math.nan)
            pay[2] = ev.payload.get("amp", math.nan)
        elif ev.kind == "injection_start":
            if kind != KIND_IS:
                raise ParameterError(f"injection target {ev.target!r} is not a current source")
            kk = K.EV_ISRC_ON
            pay[0] = ev.payload["amp"]
            pay[1] = ev.payload["freq"]
            pay[2] = ev.payload.get("phase", 0.0)
            pay[3] = ev.payload.get("t_off", math.inf)
        else:  # injection_stop
            if kind != KIND_IS:
                raise ParameterError(f"injection target {ev.target!r} is not a current source")
            kk = K.EV_ISRC_OFF
        times.append(ev.time)
        kinds.append(kk)
        targets.append(idx)
        pays.append(pay)
    return (np.array(times, dtype=float), np.array(kinds, dtype=np.int32),
            np.array(targets, dtype=np.int32),
            np.array(pays, dtype=float).reshape(len(pays), 4) if pays
            else np.zeros((0, 4)))


_MARKER_LABELS = {K.MK_OPEN: "breaker_open", K.MK_PICKUP: "protection_pickup",
                  K.MK_DROPOUT: "protection_dropout", K.MK_BLOCK: "protection_blocked"}


def continue_run(state: SolverState, duration, probes=(), events=()) -> WaveformSet:
    """Advance an assembled state by `duration`, recording samples on
    (t, t + duration].  Identical inputs yield bit-identical outputs."""
    if duration < 0:
        raise ParameterError("duration must be >= 0")
    nsteps = int(round(duration / state.dt))
    parsed = [_parse_probe(state, p) for p in probes]
    names = list(probes)
    units = [p[3] for p in parsed]
    pr_kind = np.array([p[0] for p in parsed], dtype=np.int32)
    pr_idx = np.array([p[1] for p in parsed], dtype=np.int32)
    pr_sub = np.array([p[2] for p in parsed], dtype=np.int32)
    out = np.zeros((len(parsed), nsteps))
    if nsteps == 0:
        return WaveformSet(state.dt, state.t, names, units, out, [])

    ev_time, ev_kind, ev_target, ev_pay = _events_to_arrays(state, events)
    cap = 4096
    mk_t = np.zeros(cap)
    mk_code = np.zeros(cap, dtype=np.int32)
    mk_aux = np.zeros(cap, dtype=np.int32)

    t_begin = state.t
    status, bad, nm, _ = K.run_kernel(
        state.n, state.dt, state.t, nsteps,
        state.gb, state.cb, state.rb, state.tb, state.sb, state.isrc, state.st,
        ev_time, ev_kind, ev_target, ev_pay, 0,
        pr_kind, pr_idx, pr_sub, out, 0, mk_t, mk_code, mk_aux)
    state.t = t_begin + nsteps * state.dt
    if status == K.NONFINITE:
        rev = {v: k for k, v in state.bus_index.items()}
        raise DivergenceError(state.t, rev.get(bad, bad))

    markers = [(ev.time, f"{ev.kind}:{ev.target}") for ev in events]
    for k in range(nm):
        code = int(mk_code[k])
        aux = int(mk_aux[k])
        if code == K.MK_OPEN:
            tgt = state.gb_names[aux]
        else:
            tgt = state.station_names[aux] if aux < len(state.station_names) else str(aux)
        markers.append((float(mk_t[k]), f"{_MARKER_LABELS[code]}:{tgt}"))
    markers.sort(key=lambda m: m[0])
    return WaveformSet(state.dt, t_begin + state.dt, names, units, out, markers)


def step(state: SolverState, n=1, probes=()):
    """Advance n single steps (diagnostic path; identical math to run)."""
    return continue_run(state, n * state.dt, probes)


def run(network, events, duration, probes, dt, t0=0.0) -> WaveformSet:
    """Assemble and run in one shot.  Deterministic: identical inputs give
    bit-identical waveforms."""
    state = assemble(network, dt, t0)
    return continue_run(state, duration, probes, events)
