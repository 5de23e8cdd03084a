import math

import numpy as np
import pytest
from scipy.special import erfc as sp_erfc

from noma_weibull import (
    AberQuery,
    DiversityConfig,
    DomainError,
    LinkContext,
    NomaAllocation,
    OutageQuery,
    SeriesConvergenceError,
    WeibullParams,
    aber_floor,
    aber_quadrature,
    aber_user1_asymptotic,
    aber_user1_exact,
    aber_user_u,
    build_table,
    evaluate_aber,
    evaluate_aber_user_u,
    outage_asymptotic,
    outage_exact,
)
from noma_weibull.statistics import envelope_sf_numeric

FIG2_BETAS = (0.01, 0.44, 0.55)


def rayleigh_aber(mean_snr, mod_a=1.0):
    g = mod_a * mean_snr
    return 0.5 * (1 - math.sqrt(g / (1 + g)))


@pytest.fixture(scope="module")
def fig_tables():
    config = DiversityConfig(3, 2)
    return {k: build_table(WeibullParams(k, 2.0), config) for k in (0.8, 1.2, 1.6)}


def fig_ctx(k, rho, user, m=3, n=2):
    return LinkContext(WeibullParams(k, 2.0), DiversityConfig(m, n), NomaAllocation(FIG2_BETAS), rho, user)


class TestQueries:
    @pytest.mark.parametrize("gamma", [-1.0, math.inf, math.nan])
    def test_outage_threshold(self, gamma):
        with pytest.raises(DomainError):
            OutageQuery(fig_ctx(1.2, 10.0, 1), gamma)

    @pytest.mark.parametrize("field,value", [("mod_a", 0.0), ("trunc_a", -1.0), ("mod_a", math.inf)])
    def test_aber_constants(self, field, value):
        kwargs = {"mod_a": 1.0, field: value}
        with pytest.raises(DomainError):
            AberQuery(fig_ctx(1.2, 10.0, 2), **kwargs)

    def test_table_mismatch(self, rayleigh):
        with pytest.raises(DomainError):
            outage_exact(OutageQuery(fig_ctx(1.2, 10.0, 1), 1.0), rayleigh[2])


class TestOutageExact:
    def test_zero_threshold(self, fig_tables):
        assert outage_exact(OutageQuery(fig_ctx(1.2, 10.0, 3), 0.0), fig_tables[1.2]) == 0.0

    def test_support_bound(self, fig_tables):
        for gamma in (0.55 / 0.45, 5.0):
            assert outage_exact(OutageQuery(fig_ctx(1.2, 10.0, 3), gamma), fig_tables[1.2]) == 1.0

    @pytest.mark.parametrize("rho_db", [0, 10, 20, 30])
    def test_rayleigh(self, rayleigh, rho_db):
        params, config, table = rayleigh
        rho = 10 ** (rho_db / 10)
        ctx = LinkContext(params, config, NomaAllocation((1.0,)), rho, 1)
        assert outage_exact(OutageQuery(ctx, 1.0), table) == pytest.approx(-math.expm1(-1 / rho), rel=1e-10)

    def test_matches_envelope_oracle(self, fig_tables):
        # OP of user 3 at gamma is P(Psi <= psi(gamma)) from numerical convolution
        for rho in (1.0, 10.0, 100.0):
            ctx = fig_ctx(1.2, rho, 3)
            gamma = 0.7
            psi = math.sqrt(2 * gamma / (rho * (0.55 - gamma * 0.45)))
            expected = 1 - envelope_sf_numeric(ctx.params, ctx.config, psi)
            assert outage_exact(OutageQuery(ctx, gamma), fig_tables[1.2]) == pytest.approx(expected, rel=1e-9)

    @pytest.mark.parametrize("user", [1, 3])
    def test_nonincreasing_in_rho(self, fig_tables, user):
        values = [outage_exact(OutageQuery(fig_ctx(0.8, 10 ** (d / 10), user), 1.0), fig_tables[0.8])
                  for d in np.arange(0, 42.5, 2.5)]
        assert all(b <= a for a, b in zip(values, values[1:]))


class TestOutageAsymptotic:
    def test_diversity_gain(self):
        ctx = LinkContext(WeibullParams(2.0, 1.0), DiversityConfig(3, 2), NomaAllocation(FIG2_BETAS), 10.0, 3)
        report, _ = outage_asymptotic(OutageQuery(ctx, 1.0))
        assert report.diversity_gain == 6
        assert report.floor is None

    @pytest.mark.parametrize("k,user", [(0.8, 1), (1.2, 3), (1.6, 3)])
    def test_tracks_exact_at_high_snr(self, fig_tables, k, user):
        q = OutageQuery(fig_ctx(k, 1e6, user), 1.0)
        _, value = outage_asymptotic(q)
        assert outage_exact(q, fig_tables[k]) / value == pytest.approx(1.0, abs=0.05)

    @pytest.mark.parametrize("k", [0.8, 1.2, 1.6])
    def test_exact_slope(self, fig_tables, k):
        lo, hi = (outage_exact(OutageQuery(fig_ctx(k, rho, 3), 1.0), fig_tables[k]) for rho in (1e5, 1e6))
        assert math.log10(lo / hi) == pytest.approx(k * 3, rel=0.02)

    def test_no_coding_gain_past_bound(self):
        with pytest.raises(DomainError):
            outage_asymptotic(OutageQuery(fig_ctx(1.2, 10.0, 3), 2.0))


class TestAberFirstUser:
    @pytest.mark.parametrize("rho", [10.0, 100.0, 1000.0])
    def test_rayleigh_closed_form(self, rayleigh, rho):
        params, config, table = rayleigh
        ctx = LinkContext(params, config, NomaAllocation((1.0,)), rho, 1)
        assert aber_user1_exact(AberQuery(ctx, 1.0), table) == pytest.approx(rayleigh_aber(rho), rel=1e-10)

    def test_rayleigh_low_snr_needs_quadrature(self, rayleigh):
        params, config, table = rayleigh
        ctx = LinkContext(params, config, NomaAllocation((1.0,)), 1.0, 1)
        result = evaluate_aber(AberQuery(ctx, 1.0), table)
        assert result.method == "quadrature"
        assert result.value == pytest.approx(rayleigh_aber(1.0), rel=1e-8)

    def test_vanishes_at_high_snr(self, fig_tables):
        assert aber_user1_exact(AberQuery(fig_ctx(1.6, 1e12, 1), 1.0), fig_tables[1.6]) < 1e-30

    @pytest.mark.parametrize("k", [0.8, 1.2, 1.6])
    def test_matches_quadrature(self, fig_tables, k):
        q = AberQuery(fig_ctx(k, 100.0, 1), 1.0)
        assert aber_user1_exact(q, fig_tables[k]) == pytest.approx(aber_quadrature(q), abs=1e-8)

    def test_diverges_for_large_shape(self):
        params, config = WeibullParams(2.5, 1.0), DiversityConfig(1, 1)
        table = build_table(params, config)
        q = AberQuery(LinkContext(params, config, NomaAllocation((1.0,)), 10.0, 1), 1.0)
        with pytest.raises(SeriesConvergenceError):
            aber_user1_exact(q, table)
        result = evaluate_aber(q, table)
        assert result.method == "quadrature"
        assert 0 < result.value < 0.5

    def test_wrong_user(self, fig_tables):
        with pytest.raises(DomainError):
            aber_user1_exact(AberQuery(fig_ctx(1.2, 10.0, 2), 1.0), fig_tables[1.2])


class TestAberFirstUserAsymptotic:
    def test_diversity_gain(self):
        report, _ = aber_user1_asymptotic(AberQuery(fig_ctx(1.2, 10.0, 1), 1.0))
        assert report.diversity_gain == pytest.approx(3.6)

    # the relative correction decays like rho**(-k/2), slowly for small k
    @pytest.mark.parametrize("k,rho", [(1.2, 1e6), (1.6, 1e6), (0.8, 1e8)])
    def test_tracks_exact(self, fig_tables, k, rho):
        q = AberQuery(fig_ctx(k, rho, 1), 1.0)
        _, value = aber_user1_asymptotic(q)
        assert aber_user1_exact(q, fig_tables[k]) / value == pytest.approx(1.0, abs=0.05)

    def test_rayleigh_leading_term(self):
        # 1/2 (1 - sqrt(g/(1+g))) ~ 1/(4 g) with mean SNR g
        ctx = LinkContext(WeibullParams(2.0, 1.0), DiversityConfig(1, 1), NomaAllocation((1.0,)), 1e6, 1)
        _, value = aber_user1_asymptotic(AberQuery(ctx, 1.0))
        assert value == pytest.approx(1 / (4e6), rel=1e-12)

    def test_decreasing(self):
        values = [aber_user1_asymptotic(AberQuery(fig_ctx(1.2, 10 ** (d / 10), 1), 1.0))[1]
                  for d in range(0, 60, 5)]
        assert all(b < a for a, b in zip(values, values[1:]))


class TestAberFloor:
    def test_fig4_value(self):
        alloc = NomaAllocation(FIG2_BETAS)
        assert aber_floor(alloc, 3, 1.0) == pytest.approx(0.5 * sp_erfc(math.sqrt(11 / 9)), rel=1e-13)
        assert aber_floor(alloc, 3, 1.0) == pytest.approx(0.05897, abs=5e-6)

    def test_vanishes_without_interference(self):
        assert aber_floor(NomaAllocation((1e-9, 1 - 1e-9)), 2, 1.0) < 1e-100

    def test_first_user_has_no_floor(self):
        with pytest.raises(DomainError):
            aber_floor(NomaAllocation(FIG2_BETAS), 1, 1.0)


class TestAberWeakerUser:
    def test_matches_quadrature_at_rho_10(self, fig_tables):
        q = AberQuery(fig_ctx(1.6, 10.0, 3), 1.0)
        result = evaluate_aber_user_u(q, fig_tables[1.6])
        assert result.method in ("series", "series_mp")
        assert result.value == pytest.approx(aber_quadrature(q), rel=1e-6)

    def test_approaches_floor(self, fig_tables):
        q = AberQuery(fig_ctx(1.6, 1e6, 3), 1.0)
        value = aber_user_u(q, fig_tables[1.6])
        floor = aber_floor(q.ctx.alloc, 3, 1.0)
        assert floor <= value <= 1.01 * floor

    def test_nonincreasing_on_db_grid(self):
        params, config = WeibullParams(1.6, 2.0), DiversityConfig(1, 2)
        table = build_table(params, config)
        alloc = NomaAllocation(FIG2_BETAS)
        values = [aber_user_u(AberQuery(LinkContext(params, config, alloc, 10 ** (d / 10), 3), 1.0), table)
                  for d in np.linspace(0, 57, 20)]
        floor = aber_floor(alloc, 3, 1.0)
        assert all(b <= a for a, b in zip(values, values[1:]))
        assert all(v >= floor for v in values)

    def test_truncation_is_the_only_gap(self, fig_tables):
        # at k = 0.8 the envelope still has mass beyond tau = 35; the series
        # equals the integral cut at tau, and the gap is that missing mass
        q = AberQuery(fig_ctx(0.8, 10.0, 3), 1.0)
        result = evaluate_aber_user_u(q, fig_tables[0.8])
        value = result.value
        assert value == pytest.approx(aber_quadrature(q, upper=35.0), rel=1e-12)
        full = aber_quadrature(q)
        tail = envelope_sf_numeric(q.ctx.params, q.ctx.config, 35.0)
        assert tail > 1e-4
        assert 0 < full - value <= result.diagnostics["truncation_bound"] < tail

    def test_truncation_bound_negligible_for_light_tails(self, fig_tables):
        result = evaluate_aber_user_u(AberQuery(fig_ctx(1.6, 100.0, 3), 1.0), fig_tables[1.6])
        assert result.diagnostics["truncation_bound"] < 1e-6 * result.value

    def test_failover_recorded(self, rayleigh):
        params, config, table = rayleigh
        ctx = LinkContext(params, config, NomaAllocation(FIG2_BETAS), 10.0, 3)
        result = evaluate_aber_user_u(AberQuery(ctx, 1.0), table)
        assert result.method == "quadrature"
        assert "series_mp" in result.diagnostics
        with pytest.raises(SeriesConvergenceError):
            evaluate_aber_user_u(AberQuery(ctx, 1.0), table, failover=False)

    def test_wrong_user(self, fig_tables):
        with pytest.raises(DomainError):
            aber_user_u(AberQuery(fig_ctx(1.2, 10.0, 1), 1.0), fig_tables[1.2])


class TestQuadratureOracle:
    def test_rayleigh(self):
        ctx = LinkContext(WeibullParams(2.0, 1.0), DiversityConfig(1, 1), NomaAllocation((1.0,)), 10.0, 1)
        assert aber_quadrature(AberQuery(ctx, 1.0)) == pytest.approx(rayleigh_aber(10.0), rel=1e-9)

    def test_rejects_bad_upper(self):
        with pytest.raises(DomainError):
            aber_quadrature(AberQuery(fig_ctx(1.2, 10.0, 3), 1.0), upper=0.0)
