"""Parameter-derivation checks for the passive network elements."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from emtres import grid
from emtres.errors import ParameterError

W50 = 2 * math.pi * 50.0


class TestThevenin:
    def test_base_case_magnitude(self):
        # |Z| = V^2/S = (400e3)^2 / 10e9 = 16 ohm
        tp = grid.thevenin_from_scc(400.0, 10.0, 10.0, 50.0)
        assert tp.z_mag == pytest.approx(16.0, rel=1e-12)

    def test_weak_case_magnitude(self):
        tp = grid.thevenin_from_scc(400.0, 4.7, 10.0, 50.0)
        assert tp.z_mag == pytest.approx((400e3) ** 2 / 4.7e9, rel=1e-12)
        assert tp.z_mag == pytest.approx(34.043, rel=1e-4)

    def test_infinite_strength_limit(self):
        tp = grid.thevenin_from_scc(400.0, 1e9, 10.0, 50.0)
        assert tp.z_mag < 1e-6

    def test_x_r_split(self):
        tp = grid.thevenin_from_scc(400.0, 10.0, 10.0, 50.0)
        assert (W50 * tp.l_series) / tp.r_series == pytest.approx(10.0, rel=1e-12)

    def test_rejects_nonpositive(self):
        with pytest.raises(ParameterError):
            grid.thevenin_from_scc(0.0, 10.0)
        with pytest.raises(ParameterError):
            grid.thevenin_from_scc(400.0, -1.0)

    @given(v=st.floats(10.0, 1000.0), s=st.floats(0.1, 100.0),
           xr=st.floats(1.0, 50.0))
    @settings(max_examples=50, deadline=None)
    def test_magnitude_invariant(self, v, s, xr):
        tp = grid.thevenin_from_scc(v, s, xr, 50.0)
        assert abs(tp.z_mag - (v * 1e3) ** 2 / (s * 1e9)) <= 1e-9 * tp.z_mag


class TestCable:
    def test_surge_impedance_default(self):
        cfg = grid.CableConfig(160.0)
        assert cfg.surge_impedance == pytest.approx(math.sqrt(0.4e-3 / 0.25e-6), rel=1e-12)
        assert cfg.surge_impedance == pytest.approx(40.0)

    def test_total_capacitance(self):
        cfg = grid.CableConfig(160.0)
        assert cfg.c_total == pytest.approx(40e-6, rel=1e-12)

    def test_default_sections(self):
        assert grid.CableConfig(160.0).sections == 80
        assert grid.CableConfig(10.0).sections == 8
        assert grid.CableConfig(3.0).sections == 8

    def test_single_section_is_lumped_pi(self):
        cfg = grid.CableConfig(1.0, n_sections=1)
        lad = grid.build_cable(cfg)
        assert lad.r_section == pytest.approx(cfg.r_ohm_per_km * 1.0)
        assert lad.l_section == pytest.approx(cfg.l_mh_per_km * 1e-3)
        assert lad.node_capacitance(0) + lad.node_capacitance(1) == pytest.approx(cfg.c_total)

    def test_section_totals(self):
        cfg = grid.CableConfig(160.0)
        lad = grid.build_cable(cfg)
        n = cfg.sections
        total_c = sum(lad.node_capacitance(k) for k in range(n + 1))
        assert total_c == pytest.approx(cfg.c_total, rel=1e-12)
        assert n * lad.r_section == pytest.approx(0.03 * 160.0, rel=1e-12)

    def test_zero_length_rejected(self):
        with pytest.raises(ParameterError):
            grid.CableConfig(0.0)


class TestCompensation:
    def test_paper_lookup(self):
        assert grid.compensation_for_length(160.0) == pytest.approx(0.5)
        assert grid.compensation_for_length(80.0) == pytest.approx(1.0)
        assert grid.compensation_for_length(40.0) == pytest.approx(1.5)
        assert grid.compensation_for_length(10.0) is None

    def test_computed_fallback(self):
        # l = 2 / (w^2 c_total k): independent closed form
        l = grid.compensation_for_length(120.0, degree=1.0)
        c_tot = 0.25e-6 * 120.0
        assert l == pytest.approx(2.0 / (W50**2 * c_tot), rel=1e-12)

    def test_degree_base_case(self):
        # 160 km at 0.25 uF/km with 2 x 500 mH -> 2/(w^2 * 0.5 * 40e-6)
        cable = grid.CableConfig(160.0)
        rx = [grid.shunt_reactor(0.5), grid.shunt_reactor(0.5)]
        d = grid.degree_of_compensation(cable, rx)
        assert d == pytest.approx(2.0 / (W50**2 * 0.5 * 40e-6), rel=1e-12)
        assert d == pytest.approx(1.013, abs=5e-4)

    def test_degree_80km(self):
        cable = grid.CableConfig(80.0)
        rx = [grid.shunt_reactor(1.0), grid.shunt_reactor(1.0)]
        assert grid.degree_of_compensation(cable, rx) == pytest.approx(1.013, abs=5e-4)

    def test_no_reactors(self):
        assert grid.degree_of_compensation(grid.CableConfig(160.0), []) == 0.0

    @given(l=st.floats(0.1, 5.0), length=st.floats(20.0, 200.0))
    @settings(max_examples=30, deadline=None)
    def test_split_invariance(self, l, length):
        # one reactor of L equals two parallel reactors of 2L
        cable = grid.CableConfig(length)
        one = grid.degree_of_compensation(cable, [grid.shunt_reactor(l)])
        two = grid.degree_of_compensation(
            cable, [grid.shunt_reactor(2 * l), grid.shunt_reactor(2 * l)])
        assert one == pytest.approx(two, rel=1e-12)


class TestTransformer:
    def tf(self, **kw):
        return grid.SaturableTransformer(
            rated_mva=1000.0, v_primary_kv=400.0, v_secondary_kv=320.0,
            leakage_pu=0.18, resistance_pu=0.001, **kw)

    def test_secondary_referred_leakage(self):
        m = grid.build_transformer(self.tf())
        x = W50 * m.l_secondary
        assert x == pytest.approx(0.18 * (320e3) ** 2 / 1e9, rel=1e-12)
        assert x == pytest.approx(18.43, abs=5e-3)
        assert m.l_secondary == pytest.approx(58.67e-3, rel=1e-3)

    def test_secondary_referred_resistance(self):
        m = grid.build_transformer(self.tf())
        assert m.r_secondary == pytest.approx(0.001 * (320e3) ** 2 / 1e9, rel=1e-12)
        assert m.r_secondary == pytest.approx(0.1024, rel=1e-6)

    def test_primary_secondary_consistency(self):
        m = grid.build_transformer(self.tf())
        assert m.l_primary == pytest.approx(m.l_secondary * m.ratio**2, rel=1e-12)

    def test_curve_through_origin(self):
        m = grid.build_transformer(self.tf())
        assert m.mag_flux_points[0] == 0.0
        assert m.mag_current_points[0] == 0.0

    def test_saturation_disabled_first_segment(self):
        m = grid.build_transformer(self.tf(saturation_enabled=False))
        assert len(m.mag_flux_points) == 2
        # first-segment inductance unchanged by truncation
        m_full = grid.build_transformer(self.tf())
        assert m.l_magnetizing == pytest.approx(m_full.l_magnetizing)

    def test_non_monotone_curve_rejected(self):
        with pytest.raises(ParameterError):
            self.tf(magnetization_pu=((0.0, 0.0), (1.2, 0.01), (1.1, 0.02)))
        with pytest.raises(ParameterError):
            self.tf(magnetization_pu=((0.1, 0.0), (1.2, 0.01)))
