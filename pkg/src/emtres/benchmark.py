"""Benchmark AC-HVDC network: two Thevenin networks, a long compensated AC
cable, two MMC stations joined by a DC cable.

Bus naming: POINT1.<ph> is the sending-end bus (equivalent network 1),
POINT2.<ph> the cable receiving end at the converter transformer; CONV<n>.<ph>
are converter AC terminals, DC<n>P/DC<n>N the station poles, GRID2.<ph> the
second network's bus.  Scan side conventions follow "Z1 is the subsystem
toward equivalent network 1".
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

from . import grid, mmc
from . import network as net
from .errors import ParameterError

PHASES = ("a", "b", "c")
PHASE_SHIFT = {"a": 0.0, "b": -2.0 * math.pi / 3.0, "c": 2.0 * math.pi / 3.0}


@dataclass
class StudyParams:
    """Study-level inputs from which every element parameter derives."""

    v_nom_kv: float = 400.0
    f_nom_hz: float = 50.0
    scc1_gva: float = 10.0
    scc2_gva: float = 10.0
    x_r_ratio: float = 10.0
    ac_cable: grid.CableConfig = field(default_factory=lambda: grid.CableConfig(160.0))
    compensation_mode: str = "auto"  # auto | none | manual
    compensation_l_h: float | None = None
    reactor_quality: float = 100.0
    dc_cable: grid.CableConfig = field(
        default_factory=lambda: grid.CableConfig(100.0, side="dc"))
    include_mmc: bool = True
    mmc1: mmc.MmcParams = field(default_factory=lambda: mmc.MmcParams(control_role="power"))
    mmc2: mmc.MmcParams = field(
        default_factory=lambda: mmc.MmcParams(control_role="dc-voltage"))
    tf1_saturation: bool = True
    tf2_saturation: bool = False
    source_ramp_s: float = 0.5

    def shunt_inductance(self):
        """Per-side compensation inductance in henry, or None."""
        if self.compensation_mode == "none":
            return None
        if self.compensation_mode == "manual":
            if self.compensation_l_h is None or self.compensation_l_h <= 0:
                raise ParameterError("manual compensation needs compensation_l_h > 0")
            return self.compensation_l_h
        if self.compensation_mode != "auto":
            raise ParameterError(f"unknown compensation mode {self.compensation_mode!r}")
        return grid.compensation_for_length(
            self.ac_cable.length_km, f_nom_hz=self.f_nom_hz,
            c_uf_per_km=self.ac_cable.c_uf_per_km)

    @property
    def nominal_current_peak(self):
        s = self.mmc1.rated_power_mva * 1e6
        return math.sqrt(2.0) * s / (math.sqrt(3.0) * self.v_nom_kv * 1e3)


@dataclass
class BenchmarkInfo:
    """Probe points and subsystem boundaries of a built network."""

    sides: dict          # (point, phase) -> (side1 names, side2 names or None)
    points: tuple
    nominal_current_peak: float
    fault_switches: dict  # (point, phase) -> switch name
    station_names: tuple


def _add_phase_cable(nw, prefix, cfg: grid.CableConfig, bus_from, bus_to, v0=0.0):
    """One PI-section ladder between two buses; returns section branch names."""
    lad = grid.build_cable(cfg)
    n = cfg.sections
    nodes = [bus_from] + [f"{prefix}_n{k}" for k in range(1, n)] + [bus_to]
    sections = []
    for k in range(n):
        name = f"{prefix}_s{k}"
        nw.add_series_rle(name, nodes[k], nodes[k + 1], lad.r_section, lad.l_section)
        sections.append(name)
    for k in range(n + 1):
        nw.add_capacitor(f"{prefix}_c{k}", nodes[k], net.GROUND,
                         lad.node_capacitance(k), v0=v0)
    return sections


def _add_thevenin(nw, name, bus, v_nom_kv, scc_gva, x_r, f_nom, phase, ramp_s):
    tp = grid.thevenin_from_scc(v_nom_kv, scc_gva, x_r, f_nom)
    nw.add_series_rle(name, net.GROUND, bus, tp.r_series, tp.l_series,
                      source=net.SineSource(tp.emf_peak, f_nom, phase, 0.0, ramp_s))
    return tp


def _add_transformer_bank(nw, name, study, p_bus_fmt, s_bus_fmt, params, saturated):
    tdef = grid.SaturableTransformer(
        rated_mva=params.rated_power_mva,
        v_primary_kv=params.v_primary_kv,
        v_secondary_kv=params.v_secondary_kv,
        leakage_pu=params.transformer_reactance_pu,
        resistance_pu=params.transformer_resistance_pu,
        f_nom_hz=study.f_nom_hz,
        saturation_enabled=saturated)
    model = grid.build_transformer(tdef)
    for ph in PHASES:
        nw.add_transformer(f"{name}_{ph}", p_bus_fmt.format(ph=ph), net.GROUND,
                           s_bus_fmt.format(ph=ph), net.GROUND,
                           model.r_primary, model.l_primary, model.ratio)
        if saturated:
            nw.add_saturable_inductor(f"{name}mag_{ph}", s_bus_fmt.format(ph=ph),
                                      net.GROUND, model.mag_flux_points,
                                      model.mag_current_points)
        else:
            nw.add_inductor(f"{name}mag_{ph}", s_bus_fmt.format(ph=ph), net.GROUND,
                            model.l_magnetizing)
    return model


def build_benchmark(study: StudyParams):
    """Full study network plus its probe/side metadata."""
    nw = net.Network(f_nom=study.f_nom_hz)
    ramp = study.source_ramp_s
    n_ac = study.ac_cable.sections
    l_sh = study.shunt_inductance()

    sides = {}
    fault_switches = {}
    for ph in PHASES:
        p1 = f"POINT1.{ph}"
        p2 = f"POINT2.{ph}"
        _add_thevenin(nw, f"eqnet1_{ph}", p1, study.v_nom_kv, study.scc1_gva,
                      study.x_r_ratio, study.f_nom_hz, PHASE_SHIFT[ph], ramp)
        if l_sh is not None:
            for end, bus in (("1", p1), ("2", p2)):
                r = grid.shunt_reactor(l_sh, bus, study.f_nom_hz, study.reactor_quality)
                nw.add_series_rle(f"reactor{end}_{ph}", bus, net.GROUND,
                                  r.r_loss, r.l_shunt)
        secs = _add_phase_cable(nw, f"accab_{ph}", study.ac_cable, p1, p2)
        for point, bus in (("POINT1", p1), ("POINT2", p2)):
            swname = f"fault_{point}_{ph}"
            nw.add_switch(swname, bus, net.GROUND, r_closed=0.1, closed=False)
            fault_switches[(point, ph)] = swname
        sides[("POINT1", ph)] = ((f"eqnet1_{ph}",), None)
        side1_p2 = [secs[-1], f"accab_{ph}_c{n_ac}", f"fault_POINT2_{ph}"]
        if l_sh is not None:
            side1_p2.append(f"reactor2_{ph}")
        side2_p2 = (f"tf1_{ph}",) if study.include_mmc else ()
        sides[("POINT2", ph)] = (tuple(side1_p2), side2_p2)

    stations = ()
    if study.include_mmc:
        _add_transformer_bank(nw, "tf1", study, "POINT2.{ph}", "CONV1.{ph}",
                              study.mmc1, study.tf1_saturation)
        _add_transformer_bank(nw, "tf2", study, "GRID2.{ph}", "CONV2.{ph}",
                              study.mmc2, study.tf2_saturation)
        for n_, prm in (("1", study.mmc1), ("2", study.mmc2)):
            for ph in PHASES:
                nw.add_series_rle(f"star{n_}_{ph}", f"CONV{n_}.{ph}", net.GROUND,
                                  prm.star_point_r_ohm, prm.star_point_l_h)
        v_half = study.mmc1.v_dc_kv * 1e3 / 2.0
        _add_phase_cable(nw, "dccab_p", study.dc_cable, "DC1P", "DC2P", v0=+v_half)
        _add_phase_cable(nw, "dccab_n", study.dc_cable, "DC1N", "DC2N", v0=-v_half)
        nw.add_station(mmc.MmcStation(
            "mmc1", study.mmc1, [f"CONV1.{p}" for p in PHASES], "DC1P", "DC1N"))
        nw.add_station(mmc.MmcStation(
            "mmc2", study.mmc2, [f"CONV2.{p}" for p in PHASES], "DC2P", "DC2N"))
        for ph in PHASES:
            _add_thevenin(nw, f"eqnet2_{ph}", f"GRID2.{ph}", study.v_nom_kv,
                          study.scc2_gva, study.x_r_ratio, study.f_nom_hz,
                          PHASE_SHIFT[ph], ramp)
        stations = ("mmc1", "mmc2")

    info = BenchmarkInfo(sides=sides, points=("POINT1", "POINT2"),
                         nominal_current_peak=study.nominal_current_peak,
                         fault_switches=fault_switches, station_names=stations)
    return nw, info


def build_passive_ac_side(study: StudyParams, upto="point2"):
    """Passive AC-side subnetworks for oracle validation.

    upto="point1": equivalent network 1 alone, scanned at POINT1.
    upto="point2": network 1 + AC cable + both reactors, scanned at POINT2.
    """
    nw = net.Network(f_nom=study.f_nom_hz)
    sides = {}
    for ph in PHASES:
        p1 = f"POINT1.{ph}"
        _add_thevenin(nw, f"eqnet1_{ph}", p1, study.v_nom_kv, study.scc1_gva,
                      study.x_r_ratio, study.f_nom_hz, PHASE_SHIFT[ph],
                      study.source_ramp_s)
        sides[("POINT1", ph)] = ((f"eqnet1_{ph}",), ())
        if upto == "point2":
            p2 = f"POINT2.{ph}"
            l_sh = study.shunt_inductance()
            if l_sh is not None:
                for end, bus in (("1", p1), ("2", p2)):
                    r = grid.shunt_reactor(l_sh, bus, study.f_nom_hz,
                                           study.reactor_quality)
                    nw.add_series_rle(f"reactor{end}_{ph}", bus, net.GROUND,
                                      r.r_loss, r.l_shunt)
            secs = _add_phase_cable(nw, f"accab_{ph}", study.ac_cable, p1, p2)
            s1 = [secs[-1], f"accab_{ph}_c{study.ac_cable.sections}"]
            if l_sh is not None:
                s1.append(f"reactor2_{ph}")
            sides[("POINT2", ph)] = (tuple(s1), ())
    info = BenchmarkInfo(sides=sides, points=("POINT1", "POINT2"),
                         nominal_current_peak=study.nominal_current_peak,
                         fault_switches={}, station_names=())
    return nw, info


def default_probes(info: BenchmarkInfo):
    probes = [f"v:POINT1.{p}" for p in PHASES] + [f"v:POINT2.{p}" for p in PHASES]
    for st in info.station_names:
        probes += [f"{st}.i_dc", f"{st}.p_ac", f"{st}.prot_mode", f"{st}.v_csum"]
    if info.station_names:
        probes += ["v:DC1P", "v:DC1N"]
    return probes
