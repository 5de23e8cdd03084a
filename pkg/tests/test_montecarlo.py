import math

import numpy as np
import pytest
from scipy import stats

from noma_weibull import (
    AberQuery,
    DiversityConfig,
    DomainError,
    LinkContext,
    NomaAllocation,
    SimulationPlan,
    WeibullParams,
    aber_floor,
    aber_quadrature,
    run,
    sample_weibull,
    snr_realization,
    tas_select,
)

FIG2_BETAS = (0.01, 0.44, 0.55)


def rayleigh_ctx(rho=10.0):
    return LinkContext(WeibullParams(2.0, 1.0), DiversityConfig(1, 1), NomaAllocation((1.0,)), rho, 1)


class TestSampleWeibull:
    def test_exponential_mean(self):
        x = sample_weibull(WeibullParams(1.0, 1.0), np.random.default_rng(1), 10**6)
        assert x.mean() == pytest.approx(1.0, abs=0.01)

    def test_rayleigh_mean(self):
        x = sample_weibull(WeibullParams(2.0, 1.0), np.random.default_rng(2), 10**6)
        assert x.mean() == pytest.approx(math.sqrt(math.pi) / 2, abs=0.01)

    @pytest.mark.parametrize("k,lam", [(0.8, 2.0), (1.6, 0.5)])
    def test_ks(self, k, lam):
        x = sample_weibull(WeibullParams(k, lam), np.random.default_rng(3), 10**5)
        result = stats.kstest(x, lambda t: -np.expm1(-((t / lam) ** k)))
        assert result.pvalue > 0.01

    def test_scalar_and_positive(self):
        rng = np.random.default_rng(4)
        assert sample_weibull(WeibullParams(1.2, 2.0), rng) > 0
        assert np.all(sample_weibull(WeibullParams(0.5, 1.0), rng, 10**5) > 0)


class TestTasSelect:
    def test_single_antenna(self):
        assert tas_select([[0.3], [0.7]], 2, 1) == 1

    def test_argmax(self):
        assert tas_select([[1.0, 3.0, 2.0]], 1, 3) == 2
        assert tas_select([[0.5, 1.0, 1.5], [0.5, 2.0, 0.4]], 2, 3) == 2

    def test_ties_pick_lowest_index(self):
        assert tas_select(np.ones((2, 3)), 2, 3) == 1

    def test_shape_checked(self):
        with pytest.raises(DomainError):
            tas_select(np.ones((3, 2)), 2, 3)


class TestSnrRealization:
    def test_first_user_arithmetic(self):
        assert snr_realization(rayleigh_ctx(), [0.5]) == pytest.approx(2.5)
        assert snr_realization(rayleigh_ctx(), [0.0]) == 0.0

    def test_saturates_at_bound(self):
        ctx = LinkContext(WeibullParams(1.2, 2.0), DiversityConfig(3, 2), NomaAllocation(FIG2_BETAS), 10.0, 3)
        assert snr_realization(ctx, [1e8, 1e8]) == pytest.approx(0.55 / 0.45, rel=1e-12)

    def test_combines_branches(self):
        ctx = LinkContext(WeibullParams(1.2, 2.0), DiversityConfig(3, 2), NomaAllocation(FIG2_BETAS), 10.0, 1)
        assert snr_realization(ctx, [1.0, 2.0]) == pytest.approx(0.01 * 10 * 9 / 2)

    def test_rejects_bad_input(self):
        with pytest.raises(DomainError):
            snr_realization(rayleigh_ctx(), [1.0, 2.0])
        with pytest.raises(DomainError):
            snr_realization(rayleigh_ctx(), [-1.0])


class TestSimulationPlan:
    @pytest.mark.parametrize("kwargs", [{"realizations": 0}, {"realizations": 10, "chunk_size": 0},
                                        {"realizations": 10, "seed": -1}, {"realizations": 2.5}])
    def test_validation(self, kwargs):
        with pytest.raises(DomainError):
            SimulationPlan(rayleigh_ctx(), **kwargs)

    def test_chunks_cover_realizations(self):
        plan = SimulationPlan(rayleigh_ctx(), 25, chunk_size=10)
        assert plan.chunks() == [(0, 10), (1, 10), (2, 5)]
        assert SimulationPlan(rayleigh_ctx(), 5, chunk_size=10).chunk_size == 5


class TestRun:
    def test_rayleigh_outage(self):
        res = run(SimulationPlan(rayleigh_ctx(), 10**6, seed=5), 1.0, 1.0)
        assert res.samples == 10**6
        assert abs(res.op_estimate - (1 - math.exp(-0.1))) < 3 * res.op_stderr

    def test_rayleigh_aber(self):
        res = run(SimulationPlan(rayleigh_ctx(), 10**6, seed=6), 1.0, 1.0)
        exact = 0.5 * (1 - math.sqrt(10 / 11))
        assert abs(res.aber_estimate - exact) < 3 * res.aber_stderr

    def test_zero_threshold(self):
        assert run(SimulationPlan(rayleigh_ctx(), 10**4, seed=1), 0.0, 1.0).op_estimate == 0.0

    def test_floor_at_high_snr(self):
        ctx = LinkContext(WeibullParams(1.6, 2.0), DiversityConfig(3, 2), NomaAllocation(FIG2_BETAS), 1e5, 3)
        res = run(SimulationPlan(ctx, 10**5, seed=7), 1.0, 1.0)
        floor = aber_floor(ctx.alloc, 3, 1.0)
        assert res.aber_estimate == pytest.approx(floor, rel=0.02)
        assert res.max_snr < ctx.snr_bound

    def test_matches_quadrature(self):
        ctx = LinkContext(WeibullParams(1.2, 2.0), DiversityConfig(3, 2), NomaAllocation(FIG2_BETAS), 10.0, 3)
        res = run(SimulationPlan(ctx, 10**6, seed=8), 1.0, 1.0)
        assert abs(res.aber_estimate - aber_quadrature(AberQuery(ctx, 1.0))) < 3 * res.aber_stderr

    def test_independent_of_workers(self):
        ctx = LinkContext(WeibullParams(0.8, 2.0), DiversityConfig(3, 2), NomaAllocation(FIG2_BETAS), 10.0, 3)
        plan = SimulationPlan(ctx, 50_000, seed=9, chunk_size=7_000)
        assert run(plan, 1.0, 1.0, workers=1) == run(plan, 1.0, 1.0, workers=4)

    def test_seed_changes_result(self):
        a = run(SimulationPlan(rayleigh_ctx(), 10**4, seed=1), 1.0, 1.0)
        b = run(SimulationPlan(rayleigh_ctx(), 10**4, seed=2), 1.0, 1.0)
        assert a != b

    def test_stderr_scaling(self):
        errs = [run(SimulationPlan(rayleigh_ctx(), n, seed=10), 1.0, 1.0).op_stderr for n in (10**4, 10**5, 10**6)]
        for small, large in zip(errs, errs[1:]):
            assert small / large == pytest.approx(math.sqrt(10), rel=0.2)

    def test_interval(self):
        res = run(SimulationPlan(rayleigh_ctx(), 10**4, seed=11), 1.0, 1.0)
        lo, hi = res.op_interval()
        assert 0 <= lo < res.op_estimate < hi <= 1

    @pytest.mark.parametrize("gamma,mod_a", [(-1.0, 1.0), (1.0, 0.0), (math.nan, 1.0)])
    def test_argument_checks(self, gamma, mod_a):
        with pytest.raises(DomainError):
            run(SimulationPlan(rayleigh_ctx(), 10), gamma, mod_a)
