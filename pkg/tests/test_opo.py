import math

import numpy as np
import pytest

from gauss_squeeze.gaussian import apply_linear, attach_vacuum, condition_homodyne, new_vacuum, trace_out
from gauss_squeeze.opo import (
    CAVITY,
    SEGMENT,
    Measured,
    OpoParams,
    opo_step_matrix,
    oracle_intracavity,
    oracle_normal_ordered_xT,
    oracle_spectrum,
    oracle_var_xT_long_time,
    riccati_intracavity,
    riccati_system_for,
    simulate_intracavity,
)


class TestParams:
    def test_default_tau(self):
        p = OpoParams()
        assert p.tau * p.gamma == pytest.approx(1e-3)

    @pytest.mark.parametrize("g", [0.25, 0.3, -0.25])
    def test_threshold(self, g):
        with pytest.raises(ValueError, match="4g < gamma"):
            OpoParams(1.0, g)

    def test_tau_bounds(self):
        with pytest.raises(ValueError):
            OpoParams(1.0, 0.2, 0.5)
        with pytest.raises(ValueError):
            OpoParams(1.0, 0.2, -1e-3)

    def test_measured_parse(self):
        assert Measured.parse("P") is Measured.P
        assert Measured.parse(None) is Measured.NONE
        with pytest.raises(ValueError):
            Measured.parse("q")


def test_step_matrix_entries():
    S = opo_step_matrix(OpoParams(1.0, 0.2, 0.01))
    assert S.names == CAVITY + SEGMENT
    assert S.matrix[0, 0] == pytest.approx(0.999)  # xi + 2 g tau
    assert S.matrix[1, 1] == pytest.approx(0.991)
    assert S.matrix[0, 2] == pytest.approx(0.1)
    assert S.matrix[2, 0] == pytest.approx(-0.1)
    assert S.matrix[2, 2] == pytest.approx(0.995)


def test_one_step_cov():
    p = OpoParams(1.0, 0.2, 0.01)
    s = apply_linear(attach_vacuum(new_vacuum(CAVITY), SEGMENT), opo_step_matrix(p))
    assert s.cov[0, 0] == pytest.approx(0.999**2 + 0.01)
    assert s.cov[0, 2] == pytest.approx(-0.1 * 0.999 + 0.1 * 0.995)


class TestOracle:
    def test_start_is_vacuum(self):
        for m in Measured:
            vx, vp = oracle_intracavity(OpoParams(1.0, 0.2), 0.0, m)
            assert (float(vx), float(vp)) == pytest.approx((0.5, 0.5))

    def test_no_gain(self):
        t = np.linspace(0, 5, 11)
        vx, vp = oracle_intracavity(OpoParams(1.0, 0.0), t, "p")
        np.testing.assert_allclose(vx, 0.5)
        np.testing.assert_allclose(vp, 0.5)

    def test_limits(self):
        p = OpoParams(1.0, 0.2)
        vx, vp = oracle_intracavity(p, 1e3, "none")
        assert (float(vx), float(vp)) == pytest.approx((2.5, 0.277778), abs=1e-6)
        vx, vp = oracle_intracavity(p, 1e3, "p")
        assert (float(vx), float(vp)) == pytest.approx((2.5, 0.1))

    def test_conditioned_is_minimum_uncertainty(self):
        t = np.linspace(0, 30, 31)
        vx, vp = oracle_intracavity(OpoParams(1.0, 0.2), t, "p")
        np.testing.assert_allclose(vx * vp, 0.25, rtol=1e-14)

    def test_spectrum(self):
        p = OpoParams(1.0, 0.2)
        assert float(oracle_spectrum(p, 0.0)) == pytest.approx(40.0)
        assert float(oracle_spectrum(p, 1e8)) < 1e-12
        np.testing.assert_array_equal(oracle_spectrum(OpoParams(1.0, 0.0), [0.0, 1.0]), 0.0)

    def test_integrated_long_time(self):
        p = OpoParams(1.0, 0.2)
        assert oracle_var_xT_long_time(p) == pytest.approx(40.5)
        assert float(oracle_normal_ordered_xT(p, 1e9)) + 0.5 == pytest.approx(40.5, rel=1e-6)

    def test_spectrum_area_matches_long_time(self):
        # The T -> infinity normal-ordered value equals the zero-frequency spectrum.
        p = OpoParams(1.0, 0.13)
        assert float(oracle_normal_ordered_xT(p, 1e10)) == pytest.approx(float(oracle_spectrum(p, 0.0)), rel=1e-6)


@pytest.mark.parametrize("measured", ["none", "p", "x"])
def test_riccati_matches_oracle(measured):
    p = OpoParams(1.0, 0.2)
    t = np.linspace(0, 20, 81)
    series = riccati_intracavity(p, t, measured)
    vx, vp = oracle_intracavity(p, t, measured)
    np.testing.assert_allclose(series.var_xc, vx, rtol=1e-10)
    np.testing.assert_allclose(series.var_pc, vp, rtol=1e-10)


def test_riccati_system_shapes():
    p = OpoParams(1.0, 0.2)
    sx = riccati_system_for(p, "x")
    np.testing.assert_array_equal(sx.G, np.diag([0.0, 1.0]))
    np.testing.assert_array_equal(sx.F, np.diag([1.0, 0.0]))
    np.testing.assert_allclose(sx.D, np.diag([-0.9, 0.9]))
    sn = riccati_system_for(p, "none")
    np.testing.assert_array_equal(sn.F, 0.0)


def test_mirror_symmetry():
    p = OpoParams(1.0, 0.2, 1e-3)
    a = simulate_intracavity(p, 2.0, "p", dt_out=0.5)
    b = simulate_intracavity(p.mirrored(), 2.0, "x", dt_out=0.5)
    np.testing.assert_array_equal(a.var_xc, b.var_pc)
    np.testing.assert_array_equal(a.var_pc, b.var_xc)
    t = np.linspace(0, 3, 7)
    ox, op = oracle_intracavity(p, t, "none")
    mx, mp = oracle_intracavity(p.mirrored(), t, "none")
    np.testing.assert_array_equal(ox, mp)
    np.testing.assert_array_equal(op, mx)


def test_simulation_agrees_with_generic_ops():
    p = OpoParams(1.0, 0.2, 0.01)
    state = new_vacuum(CAVITY)
    for _ in range(50):
        joint = apply_linear(attach_vacuum(state, SEGMENT), opo_step_matrix(p))
        state = condition_homodyne(joint, "p_ph", 0.0)
    series = simulate_intracavity(p, 0.5, "p")
    assert series.var_xc[-1] == pytest.approx(state.variance("x_c"), rel=1e-12)
    assert series.var_pc[-1] == pytest.approx(state.variance("p_c"), rel=1e-12)
    state = new_vacuum(CAVITY)
    for _ in range(50):
        state = trace_out(apply_linear(attach_vacuum(state, SEGMENT), opo_step_matrix(p)), SEGMENT)
    series = simulate_intracavity(p, 0.5, "none")
    assert series.var_xc[-1] == pytest.approx(state.variance("x_c"), rel=1e-12)


def test_segment_error_first_order():
    errs = []
    for tau in (2e-3, 1e-3, 5e-4):
        p = OpoParams(1.0, 0.2, tau)
        s = simulate_intracavity(p, 4.0, "p", dt_out=1.0)
        vx, vp = oracle_intracavity(p, s.times, "p")
        errs.append(max(np.abs(s.var_xc - vx).max(), np.abs(s.var_pc - vp).max()))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    np.testing.assert_allclose(ratios, 2.0, rtol=0.05)


def test_output_grid():
    s = simulate_intracavity(OpoParams(1.0, 0.2, 0.01), 1.0, dt_out=0.25)
    np.testing.assert_allclose(s.times, [0, 0.25, 0.5, 0.75, 1.0])
    assert s.purity[0] == 1.0
    with pytest.raises(ValueError):
        simulate_intracavity(OpoParams(1.0, 0.2, 0.01), 0.0)
