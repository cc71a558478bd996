import numpy as np
import pytest

from eqmarket import (
    AllocationCurve,
    BetaContext,
    ChoiceFamily,
    ContextModel,
    DemandRatioSurge,
    DomainError,
    EarningFunction,
    FixedContext,
    LogNormalOutsideOption,
    MarketConfig,
    RevenueCurve,
)


class TestAllocationCurve:
    def test_value_at_one(self):
        assert AllocationCurve(capacity=8).omega(1.0) == pytest.approx(0.875, abs=1e-15)

    def test_value_at_zero(self):
        assert AllocationCurve(capacity=8).omega(0.0) == 0.0

    def test_exact_rational_point(self):
        # (1/2 - 1/256) / (1 - 1/256) = 127/255
        assert AllocationCurve(capacity=8).omega(0.5) == pytest.approx(127.0 / 255.0, abs=1e-15)

    def test_negative_ratio_rejected(self):
        with pytest.raises(DomainError):
            AllocationCurve().omega(-0.1)
        with pytest.raises(DomainError):
            AllocationCurve().omega_prime(-1e-9)

    def test_capacity_validation(self):
        with pytest.raises(DomainError):
            AllocationCurve(capacity=1)
        with pytest.raises(DomainError):
            AllocationCurve(family="bogus")

    def test_continuity_across_center_branch(self):
        # Just outside the branch the direct formula loses ~1e-11 to
        # cancellation in (1 - x**L); inside, the rearranged form is exact.
        curve = AllocationCurve(capacity=8)
        for x in (1.0 - 1.0000001e-6, 1.0 - 0.9999999e-6, 1.0 + 0.9999999e-6, 1.0 + 1.0000001e-6):
            xl = np.longdouble(x) ** 8
            reference = float((np.longdouble(x) - xl) / (1.0 - xl))
            assert curve.omega(x) == pytest.approx(reference, abs=5e-11)

    def test_derivative_matches_finite_differences(self):
        curve = AllocationCurve(capacity=8)
        h = 1e-6
        for x in np.concatenate([np.linspace(0.01, 0.98, 23), np.linspace(1.02, 6.0, 23)]):
            fd = (curve.omega(x + h) - curve.omega(x - h)) / (2 * h)
            assert curve.omega_prime(x) == pytest.approx(fd, abs=1e-8)

    def test_derivative_at_one_matches_finite_difference(self):
        # The step straddles the seam, so the difference quotient carries
        # ~1e-8 of cancellation noise on top of its truncation error.
        curve = AllocationCurve(capacity=8)
        h = 1e-5
        fd = (curve.omega(1.0 + h) - curve.omega(1.0 - h)) / (2 * h)
        assert curve.omega_prime(1.0) == pytest.approx(fd, abs=1e-6)
        assert curve.omega_prime(1.0) == pytest.approx(7.0 / 16.0, abs=1e-14)

    def test_derivative_limits(self):
        curve = AllocationCurve(capacity=8)
        assert curve.omega_prime(0.0) == pytest.approx(1.0, abs=1e-12)
        slope_far = curve.omega_prime(10.0)
        assert 0.0 <= slope_far < 1e-6

    @pytest.mark.parametrize("capacity", [2, 3, 8, 20])
    def test_shape_invariants_on_log_grid(self, capacity):
        curve = AllocationCurve(capacity=capacity)
        xs = np.logspace(-2, 2, 10_000)
        w = curve.omega(xs)
        assert np.all((w >= 0) & (w <= curve.saturation))
        assert np.all(np.diff(w) >= -1e-12)
        slopes = np.diff(w) / np.diff(xs)
        assert np.all(np.diff(slopes) <= 1e-9)  # concavity via slope decay
        wp = curve.omega_prime(xs)
        assert np.all(xs * wp <= w + 1e-9)
        assert np.all(wp >= -1e-15)

    def test_inverse_pinned_points(self):
        curve = AllocationCurve(capacity=8)
        assert curve.omega_inverse(0.875) == pytest.approx(1.0, abs=1e-10)
        assert curve.omega_inverse(127.0 / 255.0) == pytest.approx(0.5, abs=1e-10)
        assert curve.omega_inverse(1e-9) == pytest.approx(0.0, abs=1e-8)

    def test_inverse_roundtrip_rate_space(self):
        curve = AllocationCurve(capacity=8)
        for x in np.logspace(-2, 2, 60):
            q = curve.omega(x)
            assert curve.omega(curve.omega_inverse(q)) == pytest.approx(q, abs=1e-12)

    def test_inverse_roundtrip_ratio_space(self):
        # The ratio itself is only recoverable where the curve has slope;
        # below the saturation shoulder the round trip is exact to 1e-10.
        curve = AllocationCurve(capacity=8)
        for x in np.logspace(-2, np.log10(2.2), 60):
            assert curve.omega_inverse(curve.omega(x)) == pytest.approx(x, abs=1e-10)

    def test_inverse_domain(self):
        curve = AllocationCurve(capacity=8)
        for q in (0.0, -0.1, 1.0, 1.3):
            with pytest.raises(DomainError):
                curve.omega_inverse(q)


class TestChoiceFamily:
    def test_symmetry_at_break_even(self):
        choice = ChoiceFamily()
        assert choice.prob(20.0, 20.0) == pytest.approx(0.5, abs=1e-15)

    def test_saturation(self):
        choice = ChoiceFamily()
        assert choice.prob(20.0, 1e9) == pytest.approx(1.0, abs=1e-12)
        assert choice.prob(20.0, -1e9) == pytest.approx(0.0, abs=1e-12)

    def test_unit_example(self):
        choice = ChoiceFamily(alpha=1.0)
        assert choice.prob(20.0, 21.0) == pytest.approx(1.0 / (1.0 + np.exp(-1.0)), abs=1e-12)

    def test_extreme_arguments_stable(self):
        choice = ChoiceFamily(alpha=1.0)
        with np.errstate(all="raise"):
            assert choice.prob(20.0, 1e6 + 20.0) == 1.0
            assert choice.prob(20.0, -1e6) == pytest.approx(0.0, abs=1e-300)
            assert np.isfinite(choice.prob_deriv(20.0, 1e6))

    def test_monotone_in_earnings_and_feature(self, rng):
        choice = ChoiceFamily()
        xs = np.sort(rng.uniform(-5, 60, 200))
        probs = choice.prob(20.0, xs)
        assert np.all(np.diff(probs) >= 0)
        bs = np.sort(rng.uniform(0.5, 80, 200))
        probs_b = np.array([choice.prob(b, 15.0) for b in bs])
        assert np.all(np.diff(probs_b) <= 1e-15)

    def test_prob_deriv_matches_finite_differences(self):
        choice = ChoiceFamily(alpha=1.3)
        h = 1e-6
        for x in (-3.0, 10.0, 19.5, 20.5, 44.0):
            fd = (choice.prob(20.0, x + h) - choice.prob(20.0, x - h)) / (2 * h)
            assert choice.prob_deriv(20.0, x) == pytest.approx(fd, rel=1e-7, abs=1e-12)

    def test_expected_prob_matches_monte_carlo(self, rng):
        # One-time validation of the fixed quadrature rule against sampling.
        choice = ChoiceFamily()
        n = 1_000_000
        b = choice.outside_option.sample(rng, n)
        for x in (2.0, 10.0, 17.6, 25.0, 60.0):
            draws = choice.prob(b, x)
            mc, se = draws.mean(), draws.std() / np.sqrt(n)
            assert choice.expected_prob(x) == pytest.approx(mc, abs=max(4 * se, 1e-5))
            d_draws = choice.prob_deriv(b, x)
            mc_d, se_d = d_draws.mean(), d_draws.std() / np.sqrt(n)
            assert choice.expected_prob_deriv(x) == pytest.approx(mc_d, abs=max(4 * se_d, 1e-5))

    def test_expected_prob_node_doubling(self):
        # Over the earnings range the solvers visit, the fixed 128-node rule
        # agrees with a 512-node rule to ~1e-5, i.e. converged well past the
        # 1e-4 contract; far beyond it the integrand narrows and accuracy
        # degrades gracefully.
        coarse = ChoiceFamily()
        fine = ChoiceFamily(outside_option=LogNormalOutsideOption(quad_nodes=512))
        xs = np.linspace(0.1, 60.0, 120)
        assert np.max(np.abs(coarse.expected_prob(xs) - fine.expected_prob(xs))) < 2e-5
        assert np.max(np.abs(coarse.expected_prob_deriv(xs) - fine.expected_prob_deriv(xs))) < 2e-5
        far = np.linspace(60.0, 120.0, 60)
        assert np.max(np.abs(coarse.expected_prob(far) - fine.expected_prob(far))) < 5e-4

    def test_validation(self):
        with pytest.raises(DomainError):
            ChoiceFamily(alpha=0.0)
        with pytest.raises(DomainError):
            ChoiceFamily(family="probit")
        with pytest.raises(DomainError):
            LogNormalOutsideOption(median=-1.0)


class TestEarningFunction:
    def test_identity_value(self):
        assert EarningFunction.identity().value(17.0, 0.5) == pytest.approx(8.5, abs=1e-15)

    def test_risk_with_identity_map_degenerates(self):
        earning = EarningFunction.risk_averse("identity")
        assert earning.value(17.0, 0.5) == pytest.approx(8.5, abs=1e-15)

    def test_surge_algebraic_identity(self):
        # multiplier(x) * omega(x) = x, so theta(p, omega(x)) = p * x
        alloc = AllocationCurve(capacity=8)
        earning = EarningFunction.surge(alloc)
        q = alloc.omega(0.9)
        assert earning.value(17.0, q) == pytest.approx(17.0 * 0.9, abs=1e-9)
        xs = np.linspace(0.05, 5.0, 40)
        rule = DemandRatioSurge(alloc)
        assert np.allclose(rule.multiplier(xs) * alloc.omega(xs), xs, atol=1e-12)
        assert np.all(rule.multiplier(xs) >= 1.0 - 1e-12)
        assert rule.multiplier(0.0) == 1.0

    def test_surge_domain_error_at_saturation(self):
        earning = EarningFunction.surge(AllocationCurve(capacity=8))
        with pytest.raises(DomainError):
            earning.value(17.0, 1.0)
        with pytest.raises(DomainError):
            earning.partials(17.0, 1.5)

    @pytest.mark.parametrize(
        "earning",
        [
            EarningFunction.identity(),
            EarningFunction.risk_averse("sqrt"),
            EarningFunction.risk_averse("log1p"),
            EarningFunction.surge(AllocationCurve(capacity=8)),
        ],
        ids=["identity", "risk-sqrt", "risk-log1p", "surge"],
    )
    def test_partials_match_finite_differences(self, earning):
        h = 1e-6
        for p in (5.0, 17.0, 42.0):
            for q in (0.15, 0.5, 0.85):
                d1, d2 = earning.partials(p, q)
                fd1 = (earning.value(p + h, q) - earning.value(p - h, q)) / (2 * h)
                fd2 = (earning.value(p, q + h) - earning.value(p, q - h)) / (2 * h)
                assert d1 == pytest.approx(fd1, rel=1e-6, abs=1e-9)
                assert d2 == pytest.approx(fd2, rel=1e-6, abs=1e-9)

    def test_value_at_ratio_consistency(self):
        alloc = AllocationCurve(capacity=8)
        for earning in (EarningFunction.identity(), EarningFunction.surge(alloc)):
            for x in (0.3, 0.9, 1.7):
                q = alloc.omega(x)
                assert earning.value_at_ratio(17.0, x, alloc) == pytest.approx(
                    earning.value(17.0, q), abs=1e-9
                )

    def test_variant_validation(self):
        with pytest.raises(DomainError):
            EarningFunction(variant="bogus")
        with pytest.raises(DomainError):
            EarningFunction(variant="risk")
        with pytest.raises(DomainError):
            MarketConfig.default(surge=True, risk_beta="sqrt")


class TestRevenueAndContext:
    def test_linear_revenue_scaling(self):
        alloc = AllocationCurve(capacity=8)
        revenue = RevenueCurve(alloc, gamma=100.0)
        assert revenue.total(80.0, 100.0) / 100.0 == pytest.approx(revenue.rate(0.8), abs=1e-12)
        assert revenue.total(80.0, 0.0) == 0.0

    def test_beta_quadrature_moments(self):
        ctx = BetaContext(15.0, 35.0)
        nodes, w = ctx.quadrature(256)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert nodes @ w == pytest.approx(0.3, abs=1e-12)
        # second moment of Beta(15, 35): a(a+1)/((a+b)(a+b+1))
        assert (nodes**2) @ w == pytest.approx(15 * 16 / (50 * 51), abs=1e-12)

    def test_demand_sampler_conditional_mean(self, rng):
        ctx = ContextModel(demand_mean=FixedContext(0.4), demand_sampler="poisson")
        n = 10_000
        draws = np.array([ctx.sample_demand(rng, n, 0.4) for _ in range(400)])
        se = draws.std() / np.sqrt(draws.size)
        assert draws.mean() == pytest.approx(n * 0.4, abs=4 * se)
        det = ContextModel(demand_mean=FixedContext(0.4), demand_sampler="deterministic")
        assert det.sample_demand(rng, n, 0.4) == 4000

    def test_fixed_context(self, rng):
        ctx = FixedContext(0.37)
        assert ctx.sample(rng) == 0.37
        nodes, w = ctx.quadrature()
        assert nodes.tolist() == [0.37] and w.tolist() == [1.0]


class TestMarketConfig:
    def test_roundtrip_identity(self):
        model = MarketConfig.default()
        again = MarketConfig.from_dict(model.to_dict())
        assert again.to_dict() == model.to_dict()

    def test_roundtrip_variants(self):
        for model in (
            MarketConfig.default(surge=True),
            MarketConfig.default(risk_beta="log1p"),
            MarketConfig.default(fixed_demand=0.4, demand_sampler="deterministic"),
        ):
            again = MarketConfig.from_dict(model.to_dict())
            assert again.to_dict() == model.to_dict()
            assert again.earning.variant == model.earning.variant

    def test_unknown_keys_rejected(self):
        data = MarketConfig.default().to_dict()
        data["mystery"] = 1
        with pytest.raises(DomainError):
            MarketConfig.from_dict(data)

    def test_zeta_schedule(self):
        model = MarketConfig.default()
        assert model.zeta_at() == 0.5
        powered = MarketConfig(zeta=0.5, zeta_schedule="power", zeta_exponent=0.25)
        assert powered.zeta_at(10_000) == pytest.approx(0.5 * 10_000**-0.25)
        with pytest.raises(DomainError):
            MarketConfig(zeta_schedule="power", zeta_exponent=0.7)

    def test_basic_validation(self):
        with pytest.raises(DomainError):
            MarketConfig(n=0)
        with pytest.raises(DomainError):
            MarketConfig(zeta=-0.5)
        with pytest.raises(DomainError):
            MarketConfig(interval=(30.0, 10.0))
