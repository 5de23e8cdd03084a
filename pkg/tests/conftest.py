import pytest

from noma_weibull import DiversityConfig, LinkContext, NomaAllocation, WeibullParams, build_table


@pytest.fixture(scope="session")
def fig2_alloc():
    return NomaAllocation((0.01, 0.44, 0.55))


@pytest.fixture(scope="session")
def fig_config():
    return DiversityConfig(m_tx=3, n_rx=2)


@pytest.fixture(scope="session")
def rayleigh():
    params, config = WeibullParams(2.0, 1.0), DiversityConfig(1, 1)
    return params, config, build_table(params, config)


@pytest.fixture
def make_ctx():
    def make(params, config, betas, rho, user):
        return LinkContext(params, config, NomaAllocation(betas), rho, user)
    return make
