"""Element-graph description of a network, independent of any solver state.

Buses are plain strings; the reserved name ``"gnd"`` is the reference node.
Elements are small records; the solver turns them into companion-model
stamps at assembly time.  Everything here is cheap to copy, so scan and
sweep layers freely deep-copy networks.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

from .errors import AssemblyError, ParameterError

GROUND = "gnd"


@dataclass
class SineSource:
    """amp * cos(2*pi*f*t + phase), scaled by a linear 0->1 ramp on
    [ramp_t0, ramp_t1].  f = 0 gives a (ramped) DC source."""

    amp: float
    freq: float = 0.0
    phase: float = 0.0
    ramp_t0: float = 0.0
    ramp_t1: float = 0.0


@dataclass
class Resistor:
    name: str
    bus1: str
    bus2: str
    ohms: float


@dataclass
class Switch:
    """Resistive branch that events may close (fault) and re-open at a
    current zero crossing (breaker)."""

    name: str
    bus1: str
    bus2: str
    r_closed: float = 0.1
    closed: bool = False


@dataclass
class Capacitor:
    name: str
    bus1: str
    bus2: str
    farads: float
    v0: float = 0.0


@dataclass
class SeriesRLE:
    """Series R-L branch with an optional EMF source inside (v = Ri + L di/dt + e).

    Covers plain inductors (r=0, no source), Thevenin equivalents, shunt
    reactors and, with an externally controlled source, MMC arms.
    """

    name: str
    bus1: str
    bus2: str
    r: float
    l: float
    source: SineSource | None = None
    i0: float = 0.0
    controlled: bool = False


@dataclass
class Transformer:
    """Two-winding per-phase transformer: leakage R-L referred to the primary
    in series with an ideal ratio.  Magnetizing branch, if any, is a separate
    element across the secondary."""

    name: str
    p1: str
    p2: str
    s1: str
    s2: str
    r_primary: float
    l_primary: float
    ratio: float


@dataclass
class SaturableInductor:
    """Piecewise-linear flux/current inductor (symmetric about the origin).

    Points are ((flux_Wb...), (current_A...)) starting at (0, 0), strictly
    increasing; the last segment slope extends to infinity.
    """

    name: str
    bus1: str
    bus2: str
    flux_points: tuple
    current_points: tuple

    def __post_init__(self):
        f, i = self.flux_points, self.current_points
        if len(f) != len(i) or len(f) < 2 or f[0] != 0.0 or i[0] != 0.0:
            raise ParameterError(f"{self.name}: curve must start at (0,0) with >= 2 points")
        if any(b <= a for a, b in zip(f, f[1:])) or any(b <= a for a, b in zip(i, i[1:])):
            raise ParameterError(f"{self.name}: curve must be strictly increasing")


@dataclass
class CurrentSource:
    """Ideal gated sinusoidal current source, bus1 -> bus2 internally
    (injects into bus2).  Used for perturbation injection."""

    name: str
    bus1: str
    bus2: str
    amp: float = 0.0
    freq: float = 0.0
    phase: float = 0.0
    t_on: float = 0.0
    t_off: float = math.inf


CONDUCTIVE = (Resistor, Switch, Capacitor, SeriesRLE, Transformer, SaturableInductor)


class Network:
    """Mutable element graph plus the MMC stations attached to it."""

    def __init__(self, f_nom=50.0):
        self.f_nom = f_nom
        self.elements = []
        self.stations = []  # mmc.MmcStation instances
        self._names = set()

    # -- construction ------------------------------------------------------

    def _add(self, elem):
        if elem.name in self._names:
            raise ParameterError(f"duplicate element name {elem.name!r}")
        self._names.add(elem.name)
        self.elements.append(elem)
        return elem

    def add_resistor(self, name, bus1, bus2, ohms):
        if ohms <= 0:
            raise ParameterError(f"{name}: resistance must be > 0")
        return self._add(Resistor(name, bus1, bus2, ohms))

    def add_switch(self, name, bus1, bus2, r_closed=0.1, closed=False):
        if r_closed <= 0:
            raise ParameterError(f"{name}: closed resistance must be > 0")
        return self._add(Switch(name, bus1, bus2, r_closed, closed))

    def add_capacitor(self, name, bus1, bus2, farads, v0=0.0):
        if farads <= 0:
            raise ParameterError(f"{name}: capacitance must be > 0")
        return self._add(Capacitor(name, bus1, bus2, farads, v0))

    def add_inductor(self, name, bus1, bus2, henries, i0=0.0):
        if henries <= 0:
            raise ParameterError(f"{name}: inductance must be > 0")
        return self._add(SeriesRLE(name, bus1, bus2, 0.0, henries, None, i0))

    def add_series_rle(self, name, bus1, bus2, r, l, source=None, i0=0.0, controlled=False):
        # l > 0 keeps the branch dynamic; a memoryless source branch has no
        # well-posed trapezoidal companion (use Resistor for pure resistance).
        if r < 0 or l <= 0:
            raise ParameterError(f"{name}: series branch needs r >= 0 and l > 0")
        return self._add(SeriesRLE(name, bus1, bus2, r, l, source, i0, controlled))

    def add_transformer(self, name, p1, p2, s1, s2, r_primary, l_primary, ratio):
        if l_primary <= 0 or ratio <= 0:
            raise ParameterError(f"{name}: leakage inductance and ratio must be > 0")
        return self._add(Transformer(name, p1, p2, s1, s2, r_primary, l_primary, ratio))

    def add_saturable_inductor(self, name, bus1, bus2, flux_points, current_points):
        return self._add(SaturableInductor(name, bus1, bus2,
                                           tuple(flux_points), tuple(current_points)))

    def add_current_source(self, name, bus1, bus2, amp=0.0, freq=0.0, phase=0.0,
                           t_on=0.0, t_off=math.inf):
        return self._add(CurrentSource(name, bus1, bus2, amp, freq, phase, t_on, t_off))

    def add_station(self, station):
        if station.name in self._names:
            raise ParameterError(f"duplicate element name {station.name!r}")
        self._names.add(station.name)
        self.stations.append(station)
        return station

    # -- queries -----------------------------------------------------------

    def element(self, name):
        for e in self.elements:
            if e.name == name:
                return e
        raise KeyError(name)

    def buses(self):
        out = set()
        for e in self.elements:
            for b in _element_buses(e):
                out.add(b)
        for st in self.stations:
            out.update(st.buses())
        out.discard(GROUND)
        return out

    def incident(self, bus):
        """Elements touching a bus, with +1 if the element's branch current
        (its internal bus1 -> bus2 direction; primary for transformers)
        flows out of that bus."""
        out = []
        for e in self.elements:
            if isinstance(e, Transformer):
                if e.p1 == bus:
                    out.append((e, +1))
                elif e.p2 == bus:
                    out.append((e, -1))
            elif isinstance(e, CurrentSource):
                continue
            else:
                if e.bus1 == bus:
                    out.append((e, +1))
                elif e.bus2 == bus:
                    out.append((e, -1))
        return out

    def copy(self):
        return copy.deepcopy(self)

    # -- validation --------------------------------------------------------

    def validate(self):
        """Check every bus has a conductive path to ground; returns the bus
        list on success, raises AssemblyError naming floating nodes."""
        parent = {GROUND: GROUND}

        def find(x):
            parent.setdefault(x, x)
            while parent[x] != x:
                parent[x] = parent[parent[x]]
                x = parent[x]
            return x

        def union(a, b):
            parent[find(a)] = find(b)

        for e in self.elements:
            if isinstance(e, Transformer):
                union(e.p1, e.p2)
                union(e.s1, e.s2)
            elif isinstance(e, CONDUCTIVE):
                union(e.bus1, e.bus2)
        for st in self.stations:
            for b1, b2 in st.conductive_pairs():
                union(b1, b2)
        floating = sorted(b for b in self.buses() if find(b) != find(GROUND))
        if floating:
            raise AssemblyError(f"floating subnetwork, no conductive path to ground: {floating}")
        return sorted(self.buses())


def _element_buses(e):
    if isinstance(e, Transformer):
        return (e.p1, e.p2, e.s1, e.s2)
    return (e.bus1, e.bus2)
