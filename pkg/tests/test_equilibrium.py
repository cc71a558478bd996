import numpy as np
import pytest

from eqmarket import (
    DomainError,
    MarketConfig,
    concavity_diagnostic,
    finite_n_q,
    mean_field_report,
    mean_field_utility,
    solve_mu,
    stein_dq,
)
from eqmarket.equilibrium import mean_field_utility_batch, solve_mu_batch


class TestSolveMu:
    def test_residual_contract(self, base_model):
        eq = solve_mu(20.0, 0.0, 0.4, base_model)
        assert eq.residual < 1e-12
        assert 0.0 < eq.mu <= 1.0
        assert eq.q == pytest.approx(base_model.allocation.omega(0.4 / eq.mu), abs=1e-12)

    def test_vanishing_payment_limit(self, base_model):
        # With almost no payment, activation settles at the zero-earnings
        # propensity of the outside-option population.
        eq = solve_mu(1e-9, 0.0, 0.4, base_model)
        target = float(base_model.choice.expected_prob(0.0))
        assert not eq.degenerate
        assert eq.mu == pytest.approx(target, rel=1e-3)

    def test_served_demand_bounded(self, base_model):
        eq = solve_mu(17.0, 0.0, 0.4, base_model)
        served = eq.mu * eq.q
        assert served <= min(0.4, eq.mu) + 1e-12

    def test_perturbation_shifts_are_quadratic(self, base_model):
        p, d = 17.0, 0.4
        mu0 = solve_mu(p, 0.0, d, base_model).mu
        zetas = np.array([0.025, 0.05, 0.1, 0.2])
        shifts = np.array([abs(solve_mu(p, z, d, base_model).mu - mu0) for z in zetas])
        assert np.all(shifts > 0)
        slope = np.polyfit(np.log(zetas), np.log(shifts), 1)[0]
        assert slope == pytest.approx(2.0, abs=0.1)

    def test_uniqueness_under_bracket_restarts(self, base_model):
        # Random sub-brackets containing the root all converge to the same
        # fixed point: the balance map is monotone so the root is unique.
        rng = np.random.default_rng(7)
        for _ in range(100):
            p = rng.uniform(6.0, 45.0)
            d = rng.uniform(0.1, 0.9)
            zeta = rng.uniform(0.0, 0.5)
            mu_ref = solve_mu(p, zeta, d, base_model).mu
            lo = rng.uniform(1e-9, mu_ref * 0.98, size=64)
            hi = rng.uniform(min(mu_ref * 1.02, 1.0), 1.0, size=64)
            mus, _, _, _, dgn = solve_mu_batch(
                np.full(64, p), np.full(64, zeta), np.full(64, d),
                base_model, lo=lo, hi=hi,
            )
            assert not dgn.any()
            assert np.max(np.abs(mus - mu_ref)) < 1e-10

    def test_degenerate_flagged(self, base_model):
        eq = solve_mu(2e-9, 0.0, 0.4, base_model, bracket=(0.1, 1.0))
        assert eq.degenerate and eq.mu == pytest.approx(0.1)

    def test_domain_checks(self, base_model):
        with pytest.raises(DomainError):
            solve_mu(0.4, 0.5, 0.4, base_model)  # p <= zeta
        with pytest.raises(DomainError):
            solve_mu(10.0, 0.0, -0.1, base_model)

    def test_surge_balance_consistency(self, surge_model):
        # Under the demand-ratio multiplier the anticipated earnings are
        # exactly p * d / mu, so the fixed point must satisfy the balance
        # equation with that substituted earning map.
        for p, d in ((12.0, 0.3), (17.0, 0.4), (26.0, 0.6)):
            mu = solve_mu(p, 0.0, d, surge_model).mu
            implied = float(surge_model.choice.expected_prob(p * d / mu))
            assert abs(mu - implied) < 1e-10


class TestMeanFieldReport:
    def test_frozen_reference_point(self, base_model):
        r = mean_field_report(20.0, 0.4, base_model)
        assert r.mu == pytest.approx(0.4296571714939915, abs=1e-9)
        assert r.q == pytest.approx(0.8415794548704170, rel=1e-9)
        assert r.delta == pytest.approx(0.0197054526, rel=1e-6)
        assert r.mu_prime == pytest.approx(0.0127969275, rel=1e-6)
        assert r.u_prime == pytest.approx(-0.0070984, rel=1e-4)

    def test_interference_decomposition(self, base_model):
        for p in (12.0, 20.0, 28.0):
            r = mean_field_report(p, 0.4, base_model)
            assert r.interference == pytest.approx(r.sigma_delta * r.sigma_omega, rel=1e-12)
            assert r.mu_prime == pytest.approx(r.delta / (1.0 + r.interference), rel=1e-12)
            assert 0.0 <= r.sigma_omega <= 1.0

    def test_matching_elasticity_vanishes_when_demand_dominates(self, base_model):
        # Large demand per supplier saturates the servers and the matching
        # elasticity goes to zero.
        sigma = [mean_field_report(17.0, d, base_model).sigma_omega for d in (0.4, 2.0, 8.0)]
        assert sigma[0] > sigma[1] > sigma[2]
        assert sigma[2] < 1e-4

    def test_supply_gradient_attenuated(self, base_model):
        for p in np.linspace(8.0, 40.0, 9):
            r = mean_field_report(p, 0.4, base_model)
            assert r.mu_prime <= r.delta + 1e-15

    @pytest.mark.parametrize("variant", ["identity", "risk", "surge"])
    def test_derivative_identities_match_finite_differences(self, variant):
        if variant == "identity":
            model = MarketConfig.default()
        elif variant == "risk":
            model = MarketConfig.default(risk_beta="sqrt")
        else:
            model = MarketConfig.default(surge=True)
        h = 1e-5
        for p in np.linspace(10.0, 30.0, 7):
            for d in (0.25, 0.4, 0.6):
                r = mean_field_report(p, d, model)
                mu_fd = (solve_mu(p + h, 0, d, model).mu - solve_mu(p - h, 0, d, model).mu) / (2 * h)
                u_fd = (mean_field_utility(p + h, d, model) - mean_field_utility(p - h, d, model)) / (2 * h)
                assert r.mu_prime == pytest.approx(mu_fd, rel=1e-4)
                assert r.u_prime == pytest.approx(u_fd, rel=1e-4, abs=1e-10)

    def test_gradient_vanishes_at_fixed_demand_optimum(self, base_model):
        # Golden-section maximum of u(., d=0.4), then the analytic gradient
        # must vanish there.
        from eqmarket.policy import _golden_section_max

        p_star, _ = _golden_section_max(
            lambda p: mean_field_utility(p, 0.4, base_model), 10.0, 30.0, tol=1e-8
        )
        assert abs(mean_field_report(p_star, 0.4, base_model).u_prime) < 1e-6

    def test_utility_accounting_consistency(self, base_model, surge_model):
        for model in (base_model, surge_model):
            r = mean_field_report(17.0, 0.4, model)
            assert r.u == pytest.approx(mean_field_utility(17.0, 0.4, model, 0.0), abs=1e-12)

    def test_perturbed_utility_costs_money(self, base_model, surge_model):
        for model in (base_model, surge_model):
            u0 = mean_field_utility(17.6, 0.4, model, 0.0)
            u_z = mean_field_utility(17.6, 0.4, model, 0.5)
            assert u_z < u0

    def test_batch_matches_scalar(self, base_model):
        # Scalar and batched paths share the algorithm; only BLAS summation
        # order differs, so agreement is to a few ulps.
        ps = np.array([12.0, 17.0, 25.0])
        ds = np.array([0.3, 0.4, 0.5])
        batch = mean_field_utility_batch(ps, ds, base_model, 0.0)
        for i in range(3):
            scalar = mean_field_utility(float(ps[i]), float(ds[i]), base_model)
            assert batch[i] == pytest.approx(scalar, abs=1e-12)


class TestFiniteN:
    def test_degenerate_single_supplier(self, base_model):
        # One supplier always active: the allocation is the curve itself.
        val = finite_n_q(1 - 1e-12, 0.5, 1, base_model)
        assert val == pytest.approx(base_model.allocation.omega(0.5), rel=1e-9)

    def test_monotone_decreasing_in_mu(self, base_model):
        vals = [finite_n_q(mu, 16.0, 40, base_model) for mu in (0.2, 0.35, 0.5, 0.65, 0.8)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_large_n_reaches_scaling_limit(self, base_model):
        n = 10_000
        mu, d = 0.43, 0.4
        exact = finite_n_q(mu, d * n, n, base_model)
        limit = base_model.allocation.omega(d / mu)
        assert exact == pytest.approx(limit, rel=1e-4)

    def test_exact_mode_refuses_large_n(self, base_model):
        with pytest.raises(DomainError):
            finite_n_q(0.5, 16.0, 20_000, base_model)
        with pytest.raises(DomainError):
            finite_n_q(0.0, 16.0, 40, base_model)

    def test_covariance_identity_nonpositive(self, base_model):
        rng = np.random.default_rng(3)
        for _ in range(20):
            n = int(rng.integers(5, 100))
            mu = float(rng.uniform(0.05, 0.95))
            d = float(rng.uniform(0.2, 2.0)) * n
            assert stein_dq(mu, d, n, base_model) <= 1e-12

    def test_covariance_identity_zero_for_constant_allocation(self, base_model):
        # Saturated regime: the allocation is ~1 whatever the active count.
        val = stein_dq(0.5, 1e6, 40, base_model)
        assert abs(val) < 1e-9

    def test_covariance_identity_matches_finite_difference(self, base_model):
        h = 1e-6
        val = stein_dq(0.5, 16.0, 40, base_model)
        fd = (finite_n_q(0.5 + h, 16.0, 40, base_model) - finite_n_q(0.5 - h, 16.0, 40, base_model)) / (2 * h)
        assert val == pytest.approx(fd, abs=1e-7)

    def test_covariance_identity_random_instances(self, base_model):
        rng = np.random.default_rng(11)
        h = 1e-6
        for _ in range(20):
            n = int(rng.integers(5, 80))
            mu = float(rng.uniform(0.1, 0.9))
            d = float(rng.uniform(0.2, 1.5)) * n
            val = stein_dq(mu, d, n, base_model)
            fd = (finite_n_q(mu + h, d, n, base_model) - finite_n_q(mu - h, d, n, base_model)) / (2 * h)
            assert val == pytest.approx(fd, abs=1e-7)

    def test_derivative_domain(self, base_model):
        with pytest.raises(DomainError):
            stein_dq(0.0, 16.0, 40, base_model)
        with pytest.raises(DomainError):
            stein_dq(1.0, 16.0, 40, base_model)


class TestConcavityDiagnostic:
    def test_benchmark_interval_concave(self, base_model):
        report = concavity_diagnostic(base_model, (10.0, 30.0))
        assert report.passed
        assert report.worst_u_second_diff < 0
        assert report.choice_concave and report.allocation_concave

    def test_zero_margin_at_revenue_boundary(self, base_model):
        # At p equal to the per-unit revenue the utility factor vanishes.
        assert mean_field_utility(100.0, 0.4, base_model) == pytest.approx(0.0, abs=1e-12)

    def test_linear_allocation_region_kills_curvature(self):
        # With demand so small that the load ratio stays deep in the linear
        # part of the allocation curve, served demand is constant in p and
        # the utility is exactly linear: second differences ~ 0.
        model = MarketConfig.default(fixed_demand=1e-4)
        report = concavity_diagnostic(model, (10.0, 30.0))
        assert abs(report.worst_u_second_diff) < 1e-8

    def test_non_concave_interval_detected(self, base_model):
        report = concavity_diagnostic(base_model, (1.0, 60.0))
        assert not report.passed
        assert report.worst_u_second_diff > 0

    def test_surge_diagnostic_skips_structural_checks(self, surge_model):
        report = concavity_diagnostic(surge_model, (10.0, 30.0))
        assert report.passed
        assert report.choice_concave is None
