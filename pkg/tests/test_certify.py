"""Closed-form certificates: contraction factors, gain scales, margins."""

import math

import numpy as np
import pytest
from scipy.integrate import quad

import switchstab as ss

from conftest import make_benchmark


def exp_mean_oracle(lam, T):
    """Quadrature value of E[e^{-lam S}], S ~ Uniform(0, T]."""
    val, err = quad(lambda s: math.exp(-lam * s), 0.0, T, epsabs=1e-13, epsrel=1e-13)
    return val / T


def decay_residual_oracle(lam, T):
    """Quadrature value of E[(1 - e^{-lam S}) / lam], stable through lam = 0."""
    if lam == 0.0:
        integrand = lambda s: s
    else:
        integrand = lambda s: -math.expm1(-lam * s) / lam
    val, err = quad(integrand, 0.0, T, epsabs=1e-13, epsrel=1e-13)
    return val / T


class TestPhi0:
    def test_values(self):
        assert ss.phi0(0.0) == 1.0
        assert ss.phi0(1.0) == pytest.approx(1.0 - 1.0 / math.e, rel=1e-15)
        assert ss.phi0(-1.0) == pytest.approx(math.e - 1.0, rel=1e-15)

    def test_series_direct_agree_across_cutoff(self):
        # expm1 gives full precision on both sides of the branch point
        zs = np.concatenate([
            -np.logspace(-6, -3, 40), np.logspace(-6, -3, 40), [0.0],
        ])
        ref = np.array([1.0 if z == 0.0 else -math.expm1(-z) / z for z in zs])
        np.testing.assert_allclose(ss.phi0(zs), ref, rtol=1e-12, atol=0.0)

    def test_vectorized_matches_scalar(self):
        zs = np.array([-2.0, -1e-5, 0.0, 1e-5, 0.3, 7.0])
        np.testing.assert_array_equal(ss.phi0(zs),
                                      np.array([ss.phi0(z) for z in zs]))

    def test_monotone_decreasing(self):
        zs = np.linspace(-3.0, 3.0, 101)
        vals = ss.phi0(zs)
        assert np.all(np.diff(vals) < 0)


class TestUniformMoments:
    @pytest.mark.parametrize("lam,T", [
        (1.0, 1.0), (3.0, 1.0), (-0.5, 1.0), (2.5, 0.3),
        (1e-6, 2.0), (-1e-6, 2.0), (0.0, 0.7), (12.0, 0.1),
    ])
    def test_exp_mean_vs_quadrature(self, lam, T):
        assert ss.uniform_exp_mean(lam, T) == pytest.approx(
            exp_mean_oracle(lam, T), rel=1e-10)

    @pytest.mark.parametrize("lam,T", [
        (1.0, 1.0), (3.0, 1.0), (-0.5, 1.0), (2.5, 0.3),
        (1e-6, 2.0), (-1e-6, 2.0), (0.0, 0.7), (12.0, 0.1),
    ])
    def test_decay_residual_vs_quadrature(self, lam, T):
        assert ss.uniform_decay_residual(lam, T) == pytest.approx(
            decay_residual_oracle(lam, T), rel=1e-10)

    def test_zero_rate_limits(self):
        assert ss.uniform_exp_mean(0.0, 2.0) == 1.0
        assert ss.uniform_decay_residual(0.0, 2.0) == pytest.approx(1.0, rel=1e-14)

    def test_bad_T(self):
        with pytest.raises(ValueError, match="T must be positive"):
            ss.uniform_exp_mean(1.0, 0.0)
        with pytest.raises(ValueError, match="T must be positive"):
            ss.uniform_decay_residual(1.0, -1.0)


class TestUHContraction:
    def test_benchmark_frozen_value(self):
        eta = ss.uh_contraction(1.0, (1.0, 3.0), (0.5, 0.5), 1.0)
        assert eta == pytest.approx(0.4744291013529681, rel=1e-12)

    def test_three_mode_frozen_value(self):
        eta = ss.uh_contraction(1.0, (1.0, 3.0, -0.5), (0.4, 0.4, 0.2), 1.0)
        assert eta == pytest.approx(0.6390317893624258, rel=1e-12)

    def test_single_mode_closed_form(self):
        assert ss.uh_contraction(1.0, (1.0,), (1.0,), 1.0) == pytest.approx(
            1.0 - 1.0 / math.e, rel=1e-15)

    def test_mu_scales_linearly(self):
        base = ss.uh_contraction(1.0, (1.0, 3.0), (0.5, 0.5), 1.0)
        assert ss.uh_contraction(2.0, (1.0, 3.0), (0.5, 0.5), 1.0) == pytest.approx(
            2.0 * base, rel=1e-15)

    def test_validation(self):
        with pytest.raises(ValueError, match="probability vector"):
            ss.uh_contraction(1.0, (1.0, 2.0), (0.7, 0.7), 1.0)
        with pytest.raises(ValueError, match="probability vector"):
            ss.uh_contraction(1.0, (1.0, 2.0), (-0.2, 1.2), 1.0)
        with pytest.raises(ValueError, match="equal length"):
            ss.uh_contraction(1.0, (1.0, 2.0), (1.0,), 1.0)
        with pytest.raises(ValueError, match="mu must be >= 1"):
            ss.uh_contraction(0.9, (1.0,), (1.0,), 1.0)
        with pytest.raises(ValueError, match="T must be positive"):
            ss.uh_contraction(1.0, (1.0,), (1.0,), 0.0)


class TestUHGainScale:
    def test_benchmark_frozen_value(self):
        gain = ss.uh_gain_scale(1.0, (1.0, 3.0), (0.5, 0.5), 1.0)
        assert gain == pytest.approx(0.5666538628873022, rel=1e-12)

    def test_three_mode_frozen_value(self):
        gain = ss.uh_gain_scale(1.0, (1.0, 3.0, -0.5), (0.4, 0.4, 0.2), 1.0)
        assert gain == pytest.approx(0.9896451542941229, rel=1e-12)

    def test_single_mode_is_exactly_one(self):
        # numerator and 1 - eta are the same float expression here
        assert ss.uh_gain_scale(1.0, (1.0,), (1.0,), 1.0) == 1.0

    def test_divergent_contraction_raises(self):
        with pytest.raises(ss.InfeasibleCertificate, match="diverges"):
            ss.uh_gain_scale(1.0, (-0.5,), (1.0,), 1.0)


class TestUHCertificate:
    def test_passing_report(self):
        rep = ss.uh_certificate(1.0, (1.0, 3.0), (0.5, 0.5), 1.0,
                                alpha2=ss.PowerGain(1.0, 2.0),
                                chi=ss.PowerGain(2.0, 2.0))
        assert rep.kind == "uh" and rep.passed
        assert rep.contraction == pytest.approx(0.4744291013529681, rel=1e-12)
        assert rep.gain_scale == pytest.approx(0.5666538628873022, rel=1e-12)
        assert rep.gamma.c == pytest.approx(2.0 * rep.gain_scale, rel=1e-15)
        assert rep.gamma.p == 2.0
        assert rep.inputs == {"mu": 1.0, "rates": [1.0, 3.0], "q": [0.5, 0.5], "T": 1.0}

    def test_failing_report(self):
        rep = ss.uh_certificate(1.0, (-0.5,), (1.0,), 1.0)
        assert not rep.passed
        assert rep.contraction > 1.0
        assert rep.gain_scale is None
        assert ">= 1" in rep.reason

    def test_to_dict_serializable(self):
        import json
        rep = ss.uh_certificate(1.0, (1.0, 3.0), (0.5, 0.5), 1.0,
                                chi=ss.PowerGain(1.0, 2.0))
        blob = json.dumps(rep.to_dict())
        assert "contraction" in blob


class TestUHBound:
    def setup_method(self):
        _, self.fam, _ = make_benchmark()
        self.rep = ss.uh_certificate(1.0, (1.0, 3.0), (0.5, 0.5), 1.0,
                                     alpha2=self.fam.alpha2, chi=self.fam.chi)

    def test_hand_formula(self):
        b = ss.uh_bound(self.fam, self.rep, 5.0, 0.5, 3)
        eta, g = self.rep.contraction, self.rep.gain_scale
        assert b == pytest.approx(25.0 * eta**3 + g * 0.25, rel=1e-15)

    def test_monotone_to_asymptote(self):
        bounds = [ss.uh_bound(self.fam, self.rep, 5.0, 0.5, nu) for nu in range(12)]
        assert all(b1 > b2 for b1, b2 in zip(bounds, bounds[1:]))
        assert bounds[-1] > self.rep.gain_scale * self.fam.chi(0.5)

    def test_zero_disturbance_pure_geometric(self):
        b = ss.uh_bound(self.fam, self.rep, 2.0, 0.0, 4)
        assert b == pytest.approx(4.0 * self.rep.contraction**4, rel=1e-15)

    def test_kind_and_state_validation(self):
        other = ss.slow_switching_certificate(
            1.0, 1.0, ss.ClassGParams(lambda_bar=0.2, lambda_tilde=0.2))
        with pytest.raises(ValueError, match="kind"):
            ss.uh_bound(self.fam, other, 1.0, 0.0, 0)
        failed = ss.uh_certificate(1.0, (-0.5,), (1.0,), 1.0)
        with pytest.raises(ss.InfeasibleCertificate):
            ss.uh_bound(self.fam, failed, 1.0, 0.0, 0)
        with pytest.raises(ValueError, match="nonnegative"):
            ss.uh_bound(self.fam, self.rep, 1.0, 0.0, -1)


class TestSlowSwitchingCertificate:
    def test_hand_margin_and_rate(self):
        p = ss.ClassGParams(lambda_bar=0.2, lambda_tilde=0.2)
        rep = ss.slow_switching_certificate(1.0, 1.0, p)
        assert rep.kind == "slow-switching" and rep.passed
        assert rep.margin == pytest.approx(5.0, abs=1e-12)
        assert rep.decay_rate == pytest.approx(1.0, abs=1e-12)

    def test_boundary_margin_fails(self):
        p = ss.ClassGParams(lambda_bar=0.2, lambda_tilde=0.2)
        rep = ss.slow_switching_certificate(6.0, 1.0, p)
        assert not rep.passed
        assert rep.margin == pytest.approx(0.0, abs=1e-12)
        assert "<= 0" in rep.reason

    def test_gamma_composition(self):
        p = ss.ClassGParams(lambda_bar=0.2, lambda_tilde=0.2)
        rep = ss.slow_switching_certificate(
            1.0, 2.0, p, alpha2=ss.PowerGain(2.0, 2.0),
            rho=ss.PowerGain(0.5, 1.0), eta_ball=1.6, delta=1.0)
        # (1 + 1/delta) * alpha2(eta_ball * rho(r)) = 4 * (0.8 r)^2
        assert rep.gamma.c == pytest.approx(4.0 * 0.64, rel=1e-14)
        assert rep.gamma.p == 2.0

    def test_gamma_absent_without_pieces(self):
        p = ss.ClassGParams(lambda_bar=0.2, lambda_tilde=0.2)
        rep = ss.slow_switching_certificate(1.0, 1.0, p, alpha2=ss.PowerGain(1.0, 2.0))
        assert rep.gamma is None

    def test_validation(self):
        p = ss.ClassGParams(lambda_bar=0.2, lambda_tilde=0.2)
        with pytest.raises(ValueError, match="mu must be >= 1"):
            ss.slow_switching_certificate(0.5, 1.0, p)
        with pytest.raises(ValueError, match="lambda_circ"):
            ss.slow_switching_certificate(1.0, 0.0, p)
        with pytest.raises(ValueError, match="delta"):
            ss.slow_switching_certificate(1.0, 1.0, p, delta=0.0)


def make_markov_pair():
    """Two contracting scalar modes with distinct quadratics and hand-checkable
    extended-generator values."""
    A = [np.array([[-1.0]]), np.array([[-2.0]])]
    B = [np.eye(1), np.eye(1)]
    sys = ss.make_linear_system(A, B)
    fam = ss.LyapunovFamily.quadratic(
        [np.array([[1.0]]), np.array([[2.0]])], (1.0, 1.0), ss.PowerGain(1.0, 2.0))
    Q = np.array([[-1.0, 1.0], [1.0, -1.0]])
    return sys, fam, Q


class TestMarkovGeneratorCheck:
    def test_hand_values_and_pass(self):
        sys, fam, Q = make_markov_pair()
        rho = ss.PowerGain(4.0, 1.0)
        xs = [np.array([v]) for v in (1.0, -2.0, 3.0)]
        ds = [np.array([v]) for v in (0.0, 0.2, -0.25)]
        rep = ss.markov_generator_check(sys, fam, Q, rho, 0.4, xs, ds)
        # generator values: mode 0 gives -x^2 + 2xd, mode 1 gives -9x^2 + 4xd
        worst = -np.inf
        for x in (1.0, -2.0, 3.0):
            for d in (0.0, 0.2, -0.25):
                if abs(x) < 4.0 * abs(d):
                    continue
                worst = max(worst,
                            -x * x + 2 * x * d + 0.4 * x * x,
                            -9 * x * x + 4 * x * d + 0.4 * 2 * x * x)
        assert rep.max_residual == pytest.approx(worst, rel=1e-12)
        assert rep.passed

    def test_skips_counted_and_all_skipped_raises(self):
        sys, fam, Q = make_markov_pair()
        rho = ss.PowerGain(4.0, 1.0)
        rep = ss.markov_generator_check(sys, fam, Q, rho, 0.4,
                                        [np.array([1.0])],
                                        [np.array([0.0]), np.array([1.0])])
        assert rep.n_skipped == 2    # |x| = 1 < 4 for both modes at |d| = 1
        assert rep.n_points == 2
        with pytest.raises(ValueError, match="nothing was checked"):
            ss.markov_generator_check(sys, fam, Q, rho, 0.4,
                                      [np.array([0.1])], [np.array([1.0])])

    def test_violation_detected(self):
        sys, fam, Q = make_markov_pair()
        # lambda_circ far too large: residual (lam - 0.6) x^2 at d = 0
        rep = ss.markov_generator_check(sys, fam, Q, ss.PowerGain(4.0, 1.0), 2.0,
                                        [np.array([1.0])], [np.array([0.0])])
        assert not rep.passed
        assert rep.max_residual == pytest.approx(1.0 + 2.0 * 1.0 - 2.0, rel=1e-12)

    def test_validation(self):
        sys, fam, Q = make_markov_pair()
        with pytest.raises(ValueError, match="shape"):
            ss.markov_generator_check(sys, fam, np.eye(3), ss.PowerGain(1.0, 1.0),
                                      0.4, [np.array([1.0])], [np.array([0.0])])
        with pytest.raises(ValueError, match="lambda_circ"):
            ss.markov_generator_check(sys, fam, Q, ss.PowerGain(1.0, 1.0), 0.0,
                                      [np.array([1.0])], [np.array([0.0])])
