"""Averaged switching-function MMC station: parameters, control design and
the standalone control-block primitives.

The station's electrical side is six series R-L branches with controlled
EMF sources (one per arm, e = m * v_Csum); the solver kernel owns the
per-step execution, this module owns the parameter block, the derived
bases and gains, and reference implementations of the control blocks used
for design verification.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernel as K
from .errors import ParameterError

TWO_PI = 2.0 * math.pi

# -3 dB bandwidth of a 2nd-order loop with damping 0.7 is ~2.06 x its
# natural frequency.
PLL_BW_TO_WN = 2.06


@dataclass(frozen=True)
class MmcParams:
    """Station parameter block (ratings follow the benchmark's converter table)."""

    rated_power_mva: float = 1000.0
    v_primary_kv: float = 400.0
    v_secondary_kv: float = 320.0
    frequency_hz: float = 50.0
    v_dc_kv: float = 640.0
    transformer_reactance_pu: float = 0.18
    transformer_resistance_pu: float = 0.001
    arm_inductance_pu: float = 0.15
    submodule_energy_kj_per_mva: float = 40.0
    submodules_per_arm: int = 400
    conduction_loss_ohm_per_device: float = 0.001
    star_point_r_ohm: float = 7700.0
    star_point_l_h: float = 6500.0
    inner_time_constant_s: float = 0.01
    protection_limit_pu: float = 6.0
    protection_enabled: bool = True
    protection_delay_s: float = 0.02
    protection_dropout_ratio: float = 0.9
    control_role: str = "power"  # "power" | "dc-voltage"
    p_order_mw: float = 1000.0   # + means absorbing from its AC side
    q_order_mvar: float = 0.0
    current_clamp_pu: float = 1.1
    pll_bandwidth_hz: float = 20.0
    pll_damping: float = 0.7
    outer_bandwidth_scale: float = 0.1  # outer crossover = scale / T_c
    ccsc_enabled: bool = True
    release_time_s: float = 0.8
    ramp_t0_s: float = 1.0
    ramp_t1_s: float = 1.5

    def __post_init__(self):
        pos = (self.rated_power_mva, self.v_primary_kv, self.v_secondary_kv,
               self.frequency_hz, self.v_dc_kv, self.transformer_reactance_pu,
               self.arm_inductance_pu, self.submodule_energy_kj_per_mva,
               self.submodules_per_arm, self.inner_time_constant_s,
               self.star_point_r_ohm, self.star_point_l_h)
        if min(pos) <= 0:
            raise ParameterError("all MMC physical quantities must be > 0")
        if self.protection_limit_pu <= 1.0:
            raise ParameterError("protection limit must exceed 1 p.u.")
        if self.control_role not in ("power", "dc-voltage"):
            raise ParameterError(f"unknown control role {self.control_role!r}")


@dataclass(frozen=True)
class MmcBase:
    """Derived per-station electrical quantities (SI units)."""

    z_base: float        # ohm, secondary voltage / station MVA base
    c_arm: float         # F, equivalent arm capacitance
    l_arm: float         # H
    r_arm: float         # ohm per arm (conduction)
    l_leak: float        # H, transformer leakage referred to secondary
    r_leak: float        # ohm
    l_eq: float          # H, inner-loop plant inductance = l_arm/2 (the
                         # controller measures voltage at the converter node,
                         # so only the arm half-inductance is inside the loop)
    r_eq: float          # ohm
    v_base_peak: float   # V, secondary phase peak
    i_base_peak: float   # A, phase current peak at rating
    i_dc_base: float     # A, rated DC current


def derive_base_quantities(p: MmcParams) -> MmcBase:
    """Table-block to SI conversion on the converter-side (secondary) base."""
    s = p.rated_power_mva * 1e6
    v_sec = p.v_secondary_kv * 1e3
    v_dc = p.v_dc_kv * 1e3
    w = TWO_PI * p.frequency_hz
    z_base = v_sec**2 / s
    w_spec = p.submodule_energy_kj_per_mva * 1e3 / 1e6  # J per VA
    c_arm = 2.0 * (w_spec * s / 6.0) / v_dc**2
    l_arm = p.arm_inductance_pu * z_base / w
    r_arm = p.conduction_loss_ohm_per_device * p.submodules_per_arm
    l_leak = p.transformer_reactance_pu * z_base / w
    r_leak = p.transformer_resistance_pu * z_base
    v_base_peak = v_sec * math.sqrt(2.0 / 3.0)
    i_base_peak = math.sqrt(2.0) * s / (math.sqrt(3.0) * v_sec)
    return MmcBase(
        z_base=z_base, c_arm=c_arm, l_arm=l_arm, r_arm=r_arm,
        l_leak=l_leak, r_leak=r_leak,
        l_eq=0.5 * l_arm, r_eq=0.5 * r_arm,
        v_base_peak=v_base_peak, i_base_peak=i_base_peak,
        i_dc_base=s / v_dc,
    )


def inner_gains(base: MmcBase, t_c: float):
    """Modulus-optimum pole cancellation: closed loop = 1 / (T_c s + 1)."""
    return base.l_eq / t_c, base.r_eq / t_c


def pll_gains(bandwidth_hz: float, damping: float):
    wn = TWO_PI * bandwidth_hz / PLL_BW_TO_WN
    return 2.0 * damping * wn, wn * wn


# ---------------------------------------------------------------------------
# station object wired into a Network
# ---------------------------------------------------------------------------

class MmcStation:
    """Six averaged arms between the converter AC buses and the DC poles."""

    def __init__(self, name, params: MmcParams, ac_buses, dc_p, dc_n):
        if len(ac_buses) != 3:
            raise ParameterError(f"{name}: need exactly three AC phase buses")
        self.name = name
        self.params = params
        self.ac_buses = tuple(ac_buses)
        self.dc_p = dc_p
        self.dc_n = dc_n
        self.base = derive_base_quantities(params)

    def buses(self):
        return set(self.ac_buses) | {self.dc_p, self.dc_n}

    def conductive_pairs(self):
        out = []
        for b in self.ac_buses:
            out.append((self.dc_p, b))
            out.append((b, self.dc_n))
        return out

    def arm_names(self):
        out = []
        for ph in "abc":
            out.append(f"{self.name}.arm_{ph}u")
            out.append(f"{self.name}.arm_{ph}l")
        return out

    def arm_endpoints(self):
        """(bus1, bus2) per arm; upper arms run pole -> phase, lower arms
        phase -> pole, so positive current is the stack-charging direction."""
        out = []
        for b in self.ac_buses:
            out.append((self.dc_p, b))
            out.append((b, self.dc_n))
        return out

    def par_array(self) -> np.ndarray:
        p, b = self.params, self.base
        a = np.zeros(K.SP_N)
        a[K.SP_S] = p.rated_power_mva * 1e6
        a[K.SP_VSEC] = p.v_secondary_kv * 1e3
        a[K.SP_FNOM] = p.frequency_hz
        a[K.SP_VDC] = p.v_dc_kv * 1e3
        a[K.SP_RARM] = b.r_arm
        a[K.SP_LARM] = b.l_arm
        a[K.SP_CARM] = b.c_arm
        a[K.SP_ROLE] = 0.0 if p.control_role == "power" else 1.0
        a[K.SP_PREF] = p.p_order_mw * 1e6
        a[K.SP_QREF] = p.q_order_mvar * 1e6
        a[K.SP_VDCREF] = p.v_dc_kv * 1e3
        a[K.SP_TC] = p.inner_time_constant_s
        a[K.SP_LEQ] = b.l_eq
        a[K.SP_REQ] = b.r_eq
        kp, ki = inner_gains(b, p.inner_time_constant_s)
        a[K.SP_KPI] = kp
        a[K.SP_KII] = ki
        w_out = p.outer_bandwidth_scale / p.inner_time_constant_s
        a[K.SP_KIOUTP] = w_out / (1.5 * b.v_base_peak)
        a[K.SP_KIOUTQ] = w_out / (1.5 * b.v_base_peak)
        # DC-voltage plant: both stations' stacks look like 12 C_arm at V_dc
        kp_vdc = w_out * 12.0 * b.c_arm * (p.v_dc_kv * 1e3) / (1.5 * b.v_base_peak)
        a[K.SP_KPVDC] = kp_vdc
        a[K.SP_KIVDC] = kp_vdc * w_out / 5.0
        a[K.SP_ICLAMP] = p.current_clamp_pu * b.i_base_peak
        pkp, pki = pll_gains(p.pll_bandwidth_hz, p.pll_damping)
        a[K.SP_PLLKP] = pkp
        a[K.SP_PLLKI] = pki
        a[K.SP_PROTLIM] = p.protection_limit_pu
        a[K.SP_PROTDELAY] = p.protection_delay_s
        a[K.SP_PROTEN] = 1.0 if p.protection_enabled else 0.0
        a[K.SP_PROTDROP] = p.protection_dropout_ratio
        a[K.SP_RELEASE] = p.release_time_s
        a[K.SP_RAMPT0] = p.ramp_t0_s
        a[K.SP_RAMPT1] = p.ramp_t1_s
        a[K.SP_CCSCON] = 1.0 if p.ccsc_enabled else 0.0
        w_cc = 0.5 / p.inner_time_constant_s
        a[K.SP_CCSCKP] = 2.0 * b.l_arm * w_cc
        a[K.SP_CCSCKI] = 2.0 * b.r_arm * w_cc
        a[K.SP_IDCBASE] = b.i_dc_base
        a[K.SP_VBASEPK] = b.v_base_peak
        return a

    def initial_state(self) -> np.ndarray:
        s = np.zeros(K.SS_N)
        v_dc = self.params.v_dc_kv * 1e3
        for k in range(6):
            s[K.SS_M0 + k] = 0.5
            s[K.SS_VCS0 + k] = v_dc
        return s

    def initial_arm_emf(self) -> float:
        return 0.5 * self.params.v_dc_kv * 1e3


# ---------------------------------------------------------------------------
# standalone control blocks (reference implementations)
# ---------------------------------------------------------------------------

@dataclass
class ArmState:
    """One averaged arm: stack voltage, modulation index, branch current."""

    v_csum: float
    m: float
    i_arm: float

    def __post_init__(self):
        self.m = min(max(self.m, 0.0), 1.0)


def arm_interface(arm: ArmState, r_arm, l_arm, dt, v_branch_prev, e_prev):
    """Norton companion (conductance, history current) of the arm branch for
    the next solve, with the arm EMF e = m * v_Csum applied at both window
    ends."""
    e_next = arm.m * arm.v_csum
    a2 = 2.0 * l_arm / dt
    g = 1.0 / (a2 + r_arm)
    h = g * ((a2 - r_arm) * arm.i_arm + v_branch_prev - e_prev - e_next)
    return g, h


def arm_capacitor_step(v_csum, ei_prev, e_now, i_now, c_arm, dt):
    """Trapezoidal stack-energy update from the applied source power e*i.

    d/dt (C v^2 / 2) = e * i holds exactly per update:
    v1^2 = v0^2 + (dt / C) * (e0 i0 + e1 i1).
    """
    v2 = v_csum**2 + (dt / c_arm) * (ei_prev + e_now * i_now)
    return math.sqrt(max(v2, 0.0)), e_now * i_now


class InnerCurrentController:
    """dq current PI with decoupling feed-forward; closed loop on the design
    plant is first-order with time constant t_c."""

    def __init__(self, l_eq, r_eq, t_c):
        self.l_eq = l_eq
        self.kp = l_eq / t_c
        self.ki = r_eq / t_c
        self.zd = 0.0
        self.zq = 0.0

    def step(self, i_ref_dq, i_dq, v_dq, omega, dt):
        ed = i_ref_dq[0] - i_dq[0]
        eq = i_ref_dq[1] - i_dq[1]
        self.zd += self.ki * ed * dt
        self.zq += self.ki * eq * dt
        ud = self.kp * ed + self.zd
        uq = self.kp * eq + self.zq
        wl = omega * self.l_eq
        return (v_dq[0] + wl * i_dq[1] - ud,
                v_dq[1] - wl * i_dq[0] - uq)


class OuterController:
    """Slow reference generator: P/Q trim integrators or a DC-voltage PI,
    output clamped to the current limit."""

    def __init__(self, role, base: MmcBase, t_c, scale=0.1, clamp_pu=1.1):
        self.role = role
        self.base = base
        w_out = scale / t_c
        self.ki_p = w_out / (1.5 * base.v_base_peak)
        kp_vdc = w_out * 12.0 * base.c_arm
        self.kp_vdc = kp_vdc  # per (V * V_dc) -- see par_array for the full scale
        self.clamp = clamp_pu * base.i_base_peak
        self.int_p = 0.0
        self.int_q = 0.0

    def step(self, p_ref, q_ref, meas, dt):
        """meas: dict with v_dq, i_dq (and v_dc when in dc-voltage role)."""
        vd, vq = meas["v_dq"]
        idm, iqm = meas["i_dq"]
        vd_eff = max(vd, 0.2 * self.base.v_base_peak)
        if self.role == "power":
            p = 1.5 * (vd * idm + vq * iqm)
            self.int_p += self.ki_p * (p_ref - p) * dt
            id_ref = p_ref / (1.5 * vd_eff) + self.int_p
        else:
            err = meas["v_dc_ref"] - meas["v_dc"]
            self.int_p += self.ki_p * err * dt
            id_ref = self.kp_vdc * err + self.int_p
        q = 1.5 * (vq * idm - vd * iqm)
        self.int_q += self.ki_p * (q_ref - q) * dt
        iq_ref = -q_ref / (1.5 * vd_eff) + self.int_q
        mag = math.hypot(id_ref, iq_ref)
        if mag > self.clamp:
            s = self.clamp / mag
            id_ref, iq_ref = id_ref * s, iq_ref * s
            self.int_p *= s
            self.int_q *= s
        return id_ref, iq_ref


class Pll:
    """Synchronous-reference-frame PLL, second-order loop."""

    def __init__(self, f_nom, v_peak, bandwidth_hz=20.0, damping=0.7):
        self.f_nom = f_nom
        self.v_peak = v_peak
        self.kp, self.ki = pll_gains(bandwidth_hz, damping)
        self.theta = 0.0
        self.integ = 0.0
        self.omega = TWO_PI * f_nom

    def step(self, v_abc, dt):
        vd, vq = park(v_abc, self.theta)
        vmag = math.hypot(vd, vq)
        floor = 0.02 * self.v_peak
        verr = vq / (vmag if vmag > floor else floor)
        self.integ += self.ki * verr * dt
        self.omega = TWO_PI * self.f_nom + self.kp * verr + self.integ
        self.theta = _wrap(self.theta + self.omega * dt)
        return self.theta, self.omega / TWO_PI


@dataclass(frozen=True)
class ProtectionState:
    mode: str = "normal"  # normal | pickup | blocked
    pickup_time: float = 0.0


def protection_step(i_dc_pu, state: ProtectionState, t, *, limit_pu=6.0,
                    delay_s=0.02, enabled=True, dropout_ratio=0.9):
    """DC overcurrent pickup/confirm/dropout; blocked latches until an
    explicit deblock."""
    if not enabled or state.mode == "blocked":
        return state
    ipu = abs(i_dc_pu)
    if state.mode == "normal":
        if ipu > limit_pu:
            return ProtectionState("pickup", t)
        return state
    if ipu < limit_pu * dropout_ratio:
        return ProtectionState("normal", 0.0)
    if t - state.pickup_time >= delay_s:
        return ProtectionState("blocked", state.pickup_time)
    return state


def park(abc, theta):
    a, b, c = abc
    tb = theta - 2.0 * math.pi / 3.0
    tc = theta + 2.0 * math.pi / 3.0
    d = (2.0 / 3.0) * (a * math.cos(theta) + b * math.cos(tb) + c * math.cos(tc))
    q = -(2.0 / 3.0) * (a * math.sin(theta) + b * math.sin(tb) + c * math.sin(tc))
    return d, q


def inv_park(dq, theta):
    d, q = dq
    tb = theta - 2.0 * math.pi / 3.0
    tc = theta + 2.0 * math.pi / 3.0
    return (d * math.cos(theta) - q * math.sin(theta),
            d * math.cos(tb) - q * math.sin(tb),
            d * math.cos(tc) - q * math.sin(tc))


def _wrap(th):
    if th > math.pi:
        return th - TWO_PI
    if th < -math.pi:
        return th + TWO_PI
    return th
