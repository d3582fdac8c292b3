"""Integration engine: tail startup, event location, dense output, the
radius-variable route, and the energy monitor."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from qshoot.config import ProblemConfig
from qshoot.errors import AdmissionError, ConfigError, EventNotFoundError
from qshoot.nonlinearity import find_s0, make_nonlinearity
from qshoot.ode import (
    StateR,
    StateT,
    energy_series,
    energy_violations,
    first_zero_of_y,
    integrate_r,
    integrate_t,
    quad_dense,
    series_startup_radius,
    state_t_from_r,
    t_floor,
    tail_admissible,
    tail_refinement_delta,
    tail_start,
    wprime_from_Phi,
    y_reaches,
    yprime_from_psi,
)


class TestStateHelpers:
    def test_slope_from_flux(self):
        assert yprime_from_psi(0.25, 2) == 0.25
        assert yprime_from_psi(0.25, 3) == 0.5
        assert yprime_from_psi(0.0, 3) == 0.0

    def test_radial_slope_keeps_the_flux_sign(self):
        assert wprime_from_Phi(-4.0, 2.0, 2) == -2.0
        assert wprime_from_Phi(4.0, 2.0, 2) == 2.0
        assert wprime_from_Phi(-8.0, 2.0, 3) == -math.sqrt(2.0)

    def test_states_are_frozen(self):
        st = StateT(t=1.0, y=2.0, psi=3.0)
        with pytest.raises(AttributeError):
            st.y = 0.0

    def test_conversion_to_log_radius(self):
        st = state_t_from_r(StateR(r=2.0, w=1.5, Phi=-4.0), 2)
        assert st.t == pytest.approx(-2.0 * math.log(1.0), abs=1e-15)
        assert st.y == 1.5
        assert st.psi == 2.0
        with pytest.raises(ConfigError):
            state_t_from_r(StateR(r=0.0, w=1.0, Phi=0.0), 2)


class TestTailStart:
    def test_linear_family_is_refused(self, nl_linear):
        with pytest.raises(AdmissionError):
            tail_start(nl_linear, 2, 1.0)

    def test_shallow_exponent_is_refused(self, nl_square):
        # g'(0.4) = 0.8 <= 1
        with pytest.raises(AdmissionError):
            tail_start(nl_square, 2, 0.4)

    def test_short_tail_window_is_refused(self, nl_square):
        with pytest.raises(AdmissionError):
            tail_start(nl_square, 2, 5.0, c_tail=0.1)

    def test_amplitude_below_convexity_floor_is_refused(self, nl_family_ii):
        floor = find_s0(nl_family_ii, strict=False).s0
        with pytest.raises(AdmissionError):
            tail_start(nl_family_ii, 2, 0.5 * floor)

    def test_start_state_sits_near_the_amplitude(self, nl_square, cfg2):
        gamma = 5.0
        st = tail_start(nl_square, 2, gamma, cfg=cfg2)
        assert 0.9 * gamma < st.y < gamma
        assert st.psi > 0.0

    def test_admissibility_mirrors_the_start(self, nl_exp, nl_square, cfg2):
        # pure exponential: the comparison solution is exact, but the start
        # value must stay well above zero
        assert not tail_admissible(nl_exp, 2, 1.0, cfg2)
        assert tail_admissible(nl_exp, 2, 3.0, cfg2)
        assert tail_admissible(nl_square, 2, 5.0, cfg2)
        assert not tail_admissible(nl_square, 2, 0.4, cfg2)

    def test_picard_pass_confirms_the_start_state(self, nl_square):
        rep = tail_refinement_delta(nl_square, 2, 5.0)
        assert rep["delta_y"] <= 1e-10
        assert rep["delta_psi"] <= 1e-10
        assert rep["window"] == 40.0


class TestBackwardMarch:
    def test_zero_event_residual(self, nl_square, cfg2):
        st = tail_start(nl_square, 2, 5.0, cfg=cfg2)
        traj = integrate_t(nl_square, 2, st, first_zero_of_y(), cfg2, gamma=5.0)
        assert abs(traj.events["stop_residual"]) <= cfg2.event_tol

    def test_dense_output_is_exact_at_nodes(self, nl_square, cfg2):
        st = tail_start(nl_square, 2, 5.0, cfg=cfg2)
        traj = integrate_t(nl_square, 2, st, first_zero_of_y(), cfg2, gamma=5.0)
        dev = max(abs(float(traj.dense(t)[0]) - traj.states[i, 0])
                  for i, t in enumerate(traj.ts))
        assert dev <= 1e-13

    def test_dense_midpoints_agree_with_a_tighter_run(self, nl_square, cfg2):
        st = tail_start(nl_square, 2, 5.0, cfg=cfg2)
        tr1 = integrate_t(nl_square, 2, st, first_zero_of_y(), cfg2, gamma=5.0)
        tight = ProblemConfig(n=2, rtol=1e-12, atol=1e-14)
        tr2 = integrate_t(nl_square, 2, tail_start(nl_square, 2, 5.0, cfg=tight),
                          first_zero_of_y(), tight, gamma=5.0)
        mids = 0.5 * (tr1.ts[:-1] + tr1.ts[1:])
        dev = max(abs(float(tr1.dense(m)[0]) - float(tr2.dense(m)[0]))
                  for m in mids if m > tr2.ts[-1])
        assert dev <= 1e-7

    def test_tightening_the_tolerance_tightens_the_zero(self, nl_square):
        def T_of(rtol):
            cfg = ProblemConfig(n=2, rtol=rtol, atol=rtol * 1e-2)
            st = tail_start(nl_square, 2, 5.0, cfg=cfg)
            traj = integrate_t(nl_square, 2, st, first_zero_of_y(), cfg,
                               gamma=5.0)
            return traj.events["stop_t"]

        ref = T_of(1e-12)
        e_loose = abs(T_of(1e-5) - ref)
        e_tight = abs(T_of(1e-9) - ref)
        assert e_tight < e_loose
        assert e_loose / max(e_tight, 1e-300) >= 2.0
        assert e_tight <= 1e-7

    def test_missing_event_reports_the_last_state(self, nl_square, cfg2):
        st = tail_start(nl_square, 2, 5.0, cfg=cfg2)
        with pytest.raises(EventNotFoundError) as exc:
            integrate_t(nl_square, 2, st,
                        first_zero_of_y(floor=st.t - 1.0), cfg2, gamma=5.0)
        last = exc.value.last_state
        assert isinstance(last, StateT)
        assert last.y > 0.0  # never reached zero in one unit of t

    def test_level_crossing_stop(self, nl_square, cfg2):
        st = tail_start(nl_square, 2, 5.0, cfg=cfg2)
        traj = integrate_t(nl_square, 2, st, y_reaches(2.5), cfg2, gamma=5.0)
        te = traj.events["stop_t"]
        assert float(traj.dense(te)[0]) == pytest.approx(2.5, abs=1e-10)

    def test_threshold_crossing_is_tracked(self, nl_family_ii, cfg2):
        s0 = find_s0(nl_family_ii).s0
        st = tail_start(nl_family_ii, 2, 8.0, cfg=cfg2)
        traj = integrate_t(nl_family_ii, 2, st, first_zero_of_y(), cfg2,
                           track_s0=s0, gamma=8.0)
        assert "s0_t" in traj.events
        y_at = float(traj.dense(traj.events["s0_t"])[0])
        assert y_at == pytest.approx(s0, abs=1e-9)

    def test_floor_must_lie_below_the_start(self, nl_square, cfg2):
        st = tail_start(nl_square, 2, 5.0, cfg=cfg2)
        with pytest.raises(ConfigError):
            integrate_t(nl_square, 2, st, t_floor(st.t + 1.0), cfg2, gamma=5.0)


class TestOutwardMarch:
    @pytest.mark.parametrize("n", [2, 3])
    def test_agrees_with_the_backward_march(self, n, nl_square):
        cfg = ProblemConfig(n=n)
        st = tail_start(nl_square, n, 3.0, cfg=cfg)
        trt = integrate_t(nl_square, n, st, first_zero_of_y(), cfg, gamma=3.0)
        Tt = trt.events["stop_t"]
        trr = integrate_r(nl_square, n, 3.0, first_zero_of_y(), cfg)
        Tr = -n * math.log(trr.events["stop_r"] / n)
        assert abs(Tt - Tr) <= 1e-6 * (1.0 + abs(Tt))

    def test_startup_radius_formula(self, nl_square, cfg2):
        r0 = series_startup_radius(nl_square, 2, 3.0, cfg2)
        assert r0 == pytest.approx(
            (cfg2.rtol * 2.0 / math.exp(9.0)) ** 0.5, rel=1e-13)
        assert r0 <= 1e-3

    def test_exponent_budget_guards_the_startup(self, nl_square, cfg2):
        # log f(30) = 900 exceeds the default budget of 600
        with pytest.raises(AdmissionError):
            integrate_r(nl_square, 2, 30.0, first_zero_of_y(), cfg2)

    def test_weighted_linearization_is_refused(self, nl_square):
        cfg = ProblemConfig(n=2, beta_weight=1.0)
        with pytest.raises(ConfigError):
            integrate_r(nl_square, 2, 2.0, first_zero_of_y(), cfg, lin=True)

    def test_rejects_nonpositive_amplitude(self, nl_square, cfg2):
        with pytest.raises(ConfigError):
            integrate_r(nl_square, 2, -1.0, first_zero_of_y(), cfg2)

    def test_profile_decreases_from_the_amplitude(self, nl_square, cfg2):
        traj = integrate_r(nl_square, 2, 3.0, first_zero_of_y(), cfg2)
        w = traj.states[:, 0]
        assert w[0] < 3.0
        assert all(b < a for a, b in zip(w, w[1:]))


class TestEnergyMonitor:
    def test_no_violations_along_a_shot(self, nl_square, cfg2):
        st = tail_start(nl_square, 2, 5.0, cfg=cfg2)
        traj = integrate_t(nl_square, 2, st, first_zero_of_y(), cfg2, gamma=5.0)
        recs = energy_series(traj)
        assert len(recs) > 50
        assert energy_violations(recs) == []
        assert all(r.scale > 0.0 for r in recs)

    def test_restricted_to_the_log_radius_route(self, nl_square, cfg2):
        traj = integrate_r(nl_square, 2, 3.0, first_zero_of_y(), cfg2)
        with pytest.raises(ConfigError):
            energy_series(traj)

    def test_linear_family_is_refused(self, nl_linear, nl_square, cfg2):
        st = tail_start(nl_square, 2, 5.0, cfg=cfg2)
        traj = integrate_t(nl_square, 2, st, first_zero_of_y(), cfg2, gamma=5.0)
        with pytest.raises(ConfigError):
            energy_series(traj, nl=nl_linear)

    def test_violation_detector_flags_an_increase(self):
        from qshoot.ode import EnergyRecord
        recs = [EnergyRecord(t=2.0, E=1.0, scale=1.0),
                EnergyRecord(t=1.0, E=1.1, scale=1.0),
                EnergyRecord(t=0.0, E=1.05, scale=1.0)]
        # records run in decreasing t; E must not decrease along the list
        bad = energy_violations(recs, tol=1e-9)
        assert len(bad) == 1
        assert bad[0][0] == 1.0 and bad[0][1] == 0.0


class TestDenseQuadrature:
    def test_matches_adaptive_quadrature(self, nl_square, cfg2):
        st = tail_start(nl_square, 2, 5.0, cfg=cfg2)
        traj = integrate_t(nl_square, 2, st, first_zero_of_y(), cfg2, gamma=5.0)

        def fun(x, state):
            return math.sin(0.3 * x) * float(state[0])

        a, b = float(traj.ts[-1]), float(traj.ts[0])
        ref, _ = quad(lambda x: fun(x, traj.dense(x)), a, b, limit=400)
        got = quad_dense(traj, fun, a, b)
        assert got == pytest.approx(ref, abs=1e-8)

    def test_orientation_and_degenerate_window(self, nl_square, cfg2):
        st = tail_start(nl_square, 2, 5.0, cfg=cfg2)
        traj = integrate_t(nl_square, 2, st, first_zero_of_y(), cfg2, gamma=5.0)
        fun = lambda x, state: float(state[1])
        a, b = float(traj.ts[-1]), float(traj.ts[0])
        assert quad_dense(traj, fun, b, a) == -quad_dense(traj, fun, a, b)
        assert quad_dense(traj, fun, a, a) == 0.0


class TestTrajectoryViews:
    def test_span_and_bounds(self, nl_square, cfg2):
        st = tail_start(nl_square, 2, 5.0, cfg=cfg2)
        traj = integrate_t(nl_square, 2, st, first_zero_of_y(), cfg2, gamma=5.0)
        lo, hi = traj.t_bounds()
        assert lo < hi
        assert lo == pytest.approx(min(traj.ts), abs=0.0)
        assert hi == pytest.approx(max(traj.ts), abs=0.0)

    def test_slope_views_agree_across_routes(self, nl_square):
        # -(r/n) dw/dr at r = n e^{-t/n} is the t-route slope
        cfg = ProblemConfig(n=2)
        st = tail_start(nl_square, 2, 3.0, cfg=cfg)
        trt = integrate_t(nl_square, 2, st, first_zero_of_y(), cfg, gamma=3.0)
        trr = integrate_r(nl_square, 2, 3.0, first_zero_of_y(), cfg)
        lo_t, hi_t = trt.t_bounds()
        lo_r, hi_r = trr.t_bounds()
        for t in np.linspace(max(lo_t, lo_r) + 0.1, min(hi_t, hi_r) - 0.1, 7):
            assert trt.yprime_t(float(t)) == pytest.approx(
                trr.yprime_t(float(t)), rel=1e-6, abs=1e-9)
