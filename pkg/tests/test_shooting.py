"""First-zero shooting: reference problems with closed forms, route choice,
sweeps, small-amplitude regimes and the weighted reduction."""

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from qshoot.config import ProblemConfig
from qshoot.errors import ConfigError
from qshoot.nonlinearity import make_nonlinearity, with_lambda
from qshoot.shooting import (
    choose_route,
    classify_small_gamma,
    export_profile,
    shoot,
    shoot_singular,
    shoot_weighted_direct,
    singular_reduce,
    sweep,
)
from conftest import bessel_first_zero


class TestReferenceProblems:
    def test_linear_source_reproduces_the_bessel_zero(self, nl_linear, cfg2):
        want = bessel_first_zero()
        Rs = [shoot(nl_linear, 2, g, cfg2).R for g in (0.5, 1.0, 2.0)]
        for R in Rs:
            assert R == pytest.approx(want, abs=1e-6)
        # amplitude drops out of a linear problem entirely
        assert max(Rs) - min(Rs) <= 1e-8

    @pytest.mark.parametrize("gamma", [1.0, 2.0, 5.0, 10.0])
    def test_planar_exponential_closed_form(self, nl_exp, cfg2, gamma):
        want = math.sqrt(8.0 * math.expm1(gamma / 2.0) * math.exp(-gamma))
        out = shoot(nl_exp, 2, gamma, cfg2)
        assert out.R == pytest.approx(want, rel=1e-6)
        assert out.lam == pytest.approx(out.R ** 2, rel=1e-14)

    def test_slope_near_its_leading_order(self, cfg2):
        # f = u e^{u^2}: at gamma=4 the slope should sit within a quarter
        # of n/((n-1) g'), g' = 1/4 + 8
        nl = make_nonlinearity("pow_exp", q=2.0, p=1.0)
        out = shoot(nl, 2, 4.0, cfg2)
        lead = 2.0 / 8.25
        assert abs(out.yprime_T - lead) <= 0.25 * lead

    def test_zero_moves_out_as_the_amplitude_grows(self, nl_square, cfg2):
        Ts = [shoot(nl_square, 2, float(g), cfg2).T
              for g in np.linspace(3.0, 6.0, 7)]
        assert all(b > a for a, b in zip(Ts, Ts[1:]))

    def test_radius_and_multiplier_are_locked_together(self, nl_square, cfg2):
        out = shoot(nl_square, 2, 5.0, cfg2)
        assert out.R == 2.0 * math.exp(-out.T / 2.0)
        assert out.lam == out.R ** 2

    def test_multiplier_rescaling_shifts_the_zero(self, cfg2):
        # replacing lambda by 4 lambda shifts T by exactly log 4 at leading
        # order in the planar exponential family, where the form is exact
        base = make_nonlinearity("exp")
        out1 = shoot(base, 2, 3.0, cfg2)
        out4 = shoot(with_lambda(base, 4.0), 2, 3.0, cfg2)
        want = math.sqrt(8.0 * math.expm1(1.5) * math.exp(-3.0) / 4.0)
        assert out4.R == pytest.approx(want, rel=1e-6)
        assert out4.T > out1.T


class TestRouteChoice:
    def test_small_amplitudes_march_outward(self, nl_square, cfg2):
        assert choose_route(nl_square, 2, 0.5, cfg2) == "r"

    def test_steep_tails_march_backward(self, nl_square, nl_exp, cfg2):
        assert choose_route(nl_square, 2, 5.0, cfg2) == "t"
        assert choose_route(nl_exp, 2, 1.0, cfg2) == "r"

    def test_linear_and_weighted_always_march_outward(self, nl_linear,
                                                      nl_square):
        assert choose_route(nl_linear, 2, 1.0, ProblemConfig(n=2)) == "r"
        wcfg = ProblemConfig(n=2, beta_weight=1.0)
        assert choose_route(nl_square, 2, 5.0, wcfg) == "r"

    def test_routes_cross_validate(self, nl_square, cfg2):
        for gamma in (2.0, 3.0, 5.0):
            a = shoot(nl_square, 2, gamma, cfg2, route="t")
            b = shoot(nl_square, 2, gamma, cfg2, route="r")
            assert abs(a.T - b.T) <= 1e-6 * (1.0 + abs(a.T))
            assert a.yprime_T == pytest.approx(b.yprime_T, rel=1e-5)

    def test_outcome_records_its_route(self, nl_square, cfg2):
        assert shoot(nl_square, 2, 5.0, cfg2).route == "t"
        assert shoot(nl_square, 2, 0.5, cfg2).route == "r"


class TestSweep:
    def test_rows_carry_the_export_schema(self, nl_square, cfg2):
        curve = sweep(nl_square, 2, [3.0, 4.0], cfg2)
        rows = list(curve.rows())
        assert [r["gamma"] for r in rows] == [3.0, 4.0]
        for r in rows:
            assert {"gamma", "T", "R", "lambda", "yprime_T"} <= set(r)

    def test_failures_become_placeholder_rows(self, nl_square, cfg2):
        curve = sweep(nl_square, 2, [3.0, -1.0, 4.0], cfg2)
        assert len(curve.outcomes) == 3
        assert curve.outcomes[0].T is not None
        assert curve.outcomes[1].T is None
        assert curve.outcomes[2].T is not None
        assert len(curve.errors) == 1
        bad_gamma, msg = curve.errors[0]
        assert bad_gamma == -1.0
        assert "gamma" in msg

    def test_derivative_columns_agree(self, nl_family_ii, cfg2):
        curve = sweep(nl_family_ii, 2, [4.0, 6.0], cfg2, with_derivative=True)
        for v1, fd in zip(curve.tprime_v1, curve.tprime_fd):
            assert v1 == pytest.approx(fd, rel=1e-3, abs=1e-6)

    def test_thread_pool_is_order_preserving(self, nl_square, cfg2):
        gammas = [2.0, 3.0, 4.0, 5.0, 6.0]
        one = sweep(nl_square, 2, gammas, cfg2, threads=1)
        four = sweep(nl_square, 2, gammas, cfg2, threads=4)
        assert [o.T for o in one.outcomes] == [o.T for o in four.outcomes]
        assert [o.R for o in one.outcomes] == [o.R for o in four.outcomes]

    def test_thread_count_env_override(self, nl_square):
        code = (
            "from qshoot.config import ProblemConfig\n"
            "from qshoot.nonlinearity import make_nonlinearity\n"
            "from qshoot.shooting import sweep\n"
            "nl = make_nonlinearity('pow_exp', q=2.0)\n"
            "c = sweep(nl, 2, [3.0, 5.0], ProblemConfig(n=2))\n"
            "print(repr([o.T for o in c.outcomes]))\n")
        env = dict(os.environ)
        outs = []
        for n_threads in ("1", "3"):
            env["QSHOOT_THREADS"] = n_threads
            res = subprocess.run([sys.executable, "-c", code], env=env,
                                 capture_output=True, text=True, check=True)
            outs.append(res.stdout)
        assert outs[0] == outs[1]

    def test_repeat_sweeps_are_bitwise_identical(self, nl_square, cfg2):
        a = sweep(nl_square, 2, [2.0, 4.0, 6.0], cfg2)
        b = sweep(nl_square, 2, [2.0, 4.0, 6.0], cfg2)
        assert [o.as_dict() for o in a.outcomes] == \
               [o.as_dict() for o in b.outcomes]


class TestSmallAmplitudeRegimes:
    def test_logarithm_strength_splits_three_ways(self, cfg2):
        expected = {0.3: "diverges_up", 1.0: "bounded", 2.0: "diverges_down"}
        for p, verdict in expected.items():
            nl = make_nonlinearity("pow_exp", q=2.0, p=p)
            rep = classify_small_gamma(nl, 2, cfg=cfg2)
            assert rep.verdict == verdict
            assert rep.p_estimate == pytest.approx(p, abs=1e-5)

    def test_bounded_case_has_a_small_spread(self, cfg2):
        nl = make_nonlinearity("pow_exp", q=2.0, p=1.0)
        rep = classify_small_gamma(nl, 2, cfg=cfg2)
        assert rep.spread <= 0.75
        assert len(rep.Ts) == len(rep.gammas)

    def test_needs_at_least_three_points(self, cfg2):
        nl = make_nonlinearity("pow_exp", q=2.0, p=1.0)
        with pytest.raises(ConfigError):
            classify_small_gamma(nl, 2, gammas=(1e-2, 1e-3), cfg=cfg2)


class TestWeightedReduction:
    def test_zero_weight_is_the_identity(self, nl_exp, cfg2):
        direct = shoot(nl_exp, 2, 3.0, cfg2)
        red = shoot_singular(nl_exp, 2, 0.0, 3.0, cfg2)
        assert red.T == direct.T
        assert red.R == direct.R
        assert red.lam == direct.lam

    def test_reduction_matches_the_direct_march(self, nl_exp, cfg2):
        for gamma in (1.0, 2.0, 4.0):
            red = shoot_singular(nl_exp, 2, 1.0, gamma, cfg2)
            direct = shoot_weighted_direct(nl_exp, 2, 1.0, gamma, cfg2)
            assert red.R == pytest.approx(direct.R, rel=1e-5)

    def test_planar_weighted_closed_form(self, nl_exp, cfg2):
        # n=2, weight exponent 1, f = e^u: R = 2 expm1(gamma/2) e^{-gamma}
        for gamma in (1.0, 2.0, 4.0):
            want = 2.0 * math.expm1(gamma / 2.0) * math.exp(-gamma)
            out = shoot_singular(nl_exp, 2, 1.0, gamma, cfg2)
            assert out.R == pytest.approx(want, rel=1e-6)

    def test_reduced_family_rescales_the_multiplier(self, nl_exp):
        nl_red, a = singular_reduce(nl_exp, 2, 1.0)
        assert a == 0.5
        assert nl_red.lam == pytest.approx(1.0 / (2.0 * 0.25), rel=1e-15)

    def test_weight_must_stay_below_the_dimension(self, nl_exp, cfg2):
        with pytest.raises(ConfigError):
            shoot_singular(nl_exp, 2, 2.0, 1.0, cfg2)
        with pytest.raises(ConfigError):
            shoot_singular(nl_exp, 2, -0.5, 1.0, cfg2)


class TestProfileExport:
    def test_endpoints_are_pinned(self, nl_exp, cfg2):
        pr = export_profile(nl_exp, 2, 2.0, cfg2)
        assert pr.xi[0] == 0.0 and pr.xi[-1] == 1.0
        assert pr.u[0] == 2.0
        assert abs(pr.u[-1]) <= 1e-10

    def test_matches_the_planar_exponential_profile(self, nl_exp, cfg2):
        # u(xi) = gamma - 2 log(1 + expm1(gamma/2) xi^2) at lambda = 1
        gamma = 2.0
        pr = export_profile(nl_exp, 2, gamma, cfg2)
        for frac in (0.25, 0.5, 0.75):
            i = int(np.argmin(np.abs(pr.xi - frac)))
            want = gamma - 2.0 * math.log1p(math.expm1(gamma / 2.0)
                                            * pr.xi[i] ** 2)
            assert pr.u[i] == pytest.approx(want, abs=1e-9)

    def test_profile_is_strictly_decreasing(self, nl_square, cfg2):
        pr = export_profile(nl_square, 2, 5.0, cfg2)
        assert all(b < a for a, b in zip(pr.u, pr.u[1:]))

    def test_point_count_is_respected(self, nl_exp, cfg2):
        pr = export_profile(nl_exp, 2, 2.0, cfg2, npts=101)
        assert len(pr.xi) == 101 and len(pr.u) == 101
