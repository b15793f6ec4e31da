import itertools
import math

import numpy as np
import pytest

from selex.kernels import QuadratureSpec, inverse_mills
from selex.ordering import (
    MeanConfig,
    UnderflowWarning,
    _batch_log_ordering_prob,
    _log_pass,
    grad_log_ordering_probability,
    mc_ordering_probability,
    ordering_probability,
)

SPEC = QuadratureSpec()


class TestMeanConfig:
    def test_valid(self):
        cfg = MeanConfig((1.0, 0.0), 2.0)
        assert cfg.p == 2

    @pytest.mark.parametrize(
        "mu,sigma",
        [((1.0,), 1.0), ((1.0, math.nan), 1.0), ((1.0, 0.0), 0.0), ((1.0, 0.0), -1.0)],
    )
    def test_invalid(self, mu, sigma):
        with pytest.raises(ValueError):
            MeanConfig(mu, sigma)


class TestOrderingProbability:
    def test_two_equal_means(self):
        prob = ordering_probability(MeanConfig((0.0, 0.0), 1.0))
        assert prob.value == 0.5
        assert prob.method == "closed_form_p2"

    def test_p2_closed_form(self):
        prob = ordering_probability(MeanConfig((1.0, 0.0), 1.0))
        assert prob.value == pytest.approx(0.7602499389065233, abs=1e-9)

    def test_three_exchangeable(self):
        prob = ordering_probability(MeanConfig((0.0, 0.0, 0.0), 1.0))
        assert prob.value == pytest.approx(1.0 / 6.0, abs=1e-8)
        assert prob.method == "quadrature"

    def test_four_exchangeable(self):
        prob = ordering_probability(MeanConfig((0.0, 0.0, 0.0, 0.0), 1.0))
        assert prob.value == pytest.approx(1.0 / 24.0, abs=1e-8)

    def test_log_value_consistent(self):
        prob = ordering_probability(MeanConfig((2.0, 1.0, 0.0), 1.0))
        assert prob.log_value == pytest.approx(math.log(prob.value), abs=1e-12)

    def test_against_mc_oracle(self):
        cfg = MeanConfig((2.0, 1.0, 0.0), 1.0)
        quad = ordering_probability(cfg)
        mc = mc_ordering_probability(cfg, 10**6, seed=20240817)
        assert abs(quad.value - mc.value) <= 3.0 * mc.err_est

    def test_permutation_completeness(self):
        rng = np.random.default_rng(5)
        for p in (2, 3, 4):
            mu = rng.normal(0, 1.2, p)
            total = sum(
                ordering_probability(MeanConfig(tuple(mu[list(perm)]), 1.0)).value
                for perm in itertools.permutations(range(p))
            )
            assert total == pytest.approx(1.0, abs=1e-6)

    def test_translation_invariance(self):
        rng = np.random.default_rng(6)
        mu = (1.3, 0.4, -0.2)
        base = ordering_probability(MeanConfig(mu, 1.0)).value
        for _ in range(3):
            c = rng.normal(0, 5)
            shifted = ordering_probability(
                MeanConfig(tuple(m + c for m in mu), 1.0)
            ).value
            assert shifted == pytest.approx(base, abs=1e-10)

    def test_scale_coupling(self):
        mu = (1.1, 0.0, -0.7)
        base = ordering_probability(MeanConfig(mu, 0.8)).value
        for a in (0.5, 2.0, 7.0):
            scaled = ordering_probability(
                MeanConfig(tuple(a * m for m in mu), a * 0.8)
            ).value
            assert scaled == pytest.approx(base, abs=1e-10)

    def test_monotone_in_leading_mean(self):
        values = [
            ordering_probability(MeanConfig((m1, 0.5, 0.0), 1.0)).value
            for m1 in np.linspace(-2, 4, 13)
        ]
        assert np.all(np.diff(values) >= -1e-10)

    def test_underflow_warns_and_keeps_log(self):
        with pytest.warns(UnderflowWarning):
            prob = ordering_probability(MeanConfig((-40.0, 0.0, 40.0), 1.0))
        assert prob.value == 0.0
        assert math.isfinite(prob.log_value) and prob.log_value < -500

    def test_log_pass_matches_direct(self):
        # exercise the log-stabilized recursion where the direct value is
        # still representable, so both paths can be compared
        mus = np.array([[-3.0, 0.0, 3.0]])
        grid = np.linspace(-11.0, 11.0, 2049)
        z = (grid[None, :] - mus[0][:, None])
        logpdf = -0.5 * z * z - 0.5 * math.log(2 * math.pi)
        log_direct = _batch_log_ordering_prob(mus, 1.0, 8.0, 2049)[1][0]
        log_stable = _log_pass(grid, logpdf, 3)
        assert log_stable == pytest.approx(log_direct, abs=1e-3)


class TestMonteCarlo:
    def test_symmetric_pair(self):
        prob = mc_ordering_probability(MeanConfig((0.0, 0.0), 1.0), 10**6, seed=1)
        assert prob.value == pytest.approx(0.5, abs=0.0015)

    def test_matches_closed_form(self):
        cfg = MeanConfig((5.0, 0.0), 1.0)
        mc = mc_ordering_probability(cfg, 10**6, seed=2)
        exact = ordering_probability(cfg).value
        assert abs(mc.value - exact) <= 3.0 * max(mc.err_est, 1e-6)

    def test_deterministic(self):
        cfg = MeanConfig((1.0, 0.3, 0.0), 1.0)
        a = mc_ordering_probability(cfg, 10**5, seed=99)
        b = mc_ordering_probability(cfg, 10**5, seed=99)
        assert a.value == b.value

    def test_degenerate_flag(self):
        prob = mc_ordering_probability(MeanConfig((-20.0, 20.0), 1.0), 10**4, seed=3)
        assert prob.degenerate
        assert prob.value == 0.0
        assert math.isnan(prob.log_value)

    def test_min_draws_enforced(self):
        with pytest.raises(ValueError):
            mc_ordering_probability(MeanConfig((0.0, 0.0), 1.0), 100, seed=0)


class TestGradient:
    def test_p2_analytic_value(self):
        grad = grad_log_ordering_probability(MeanConfig((1.0, 0.0), 1.0))
        expected = inverse_mills(-1.0 / math.sqrt(2)) / math.sqrt(2)
        assert grad[0] == pytest.approx(expected, abs=1e-12)
        assert grad[1] == pytest.approx(-expected, abs=1e-12)
        # frozen value of the analytic expression g(-1/sqrt(2))/sqrt(2)
        assert grad[0] == pytest.approx(0.2889781813726, abs=1e-10)

    def test_p2_equal_means(self):
        grad = grad_log_ordering_probability(MeanConfig((0.0, 0.0), 1.0))
        expected = math.sqrt(2.0 / math.pi) / math.sqrt(2.0)
        assert grad[0] == pytest.approx(expected, abs=1e-6)
        assert grad[0] == pytest.approx(0.5641895835, abs=1e-6)

    def test_components_sum_to_zero(self):
        rng = np.random.default_rng(11)
        for p in (2, 3, 4):
            mu = tuple(rng.normal(0, 1, p))
            grad = grad_log_ordering_probability(MeanConfig(mu, 1.0))
            assert abs(grad.sum()) < 1e-6

    def test_fd_matches_analytic_p2(self):
        rng = np.random.default_rng(12)
        worst = 0.0
        for _ in range(20):
            mu = (rng.normal(0, 1.5), rng.normal(0, 1.5))
            sigma = rng.uniform(0.3, 2.0)
            analytic = grad_log_ordering_probability(MeanConfig(mu, sigma))
            h = 1e-5 * sigma
            fd = np.empty(2)
            for i in range(2):
                up = list(mu)
                dn = list(mu)
                up[i] += h
                dn[i] -= h
                lu = ordering_probability(MeanConfig(tuple(up), sigma)).log_value
                ld = ordering_probability(MeanConfig(tuple(dn), sigma)).log_value
                fd[i] = (lu - ld) / (2 * h)
            worst = max(worst, float(np.abs(fd - analytic).max()))
        assert worst <= 1e-5
