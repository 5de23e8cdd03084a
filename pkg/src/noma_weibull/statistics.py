"""Distribution of the combined envelope and of the per-user SNR.

With TAS and EGC the combined envelope is ``Psi = max_m sum_n |h_{n,m}|``.
Its CDF is the ascending series

    F(psi) = (k / lam**k)**(NM) * sum_i xi_i psi**(k (i + N M))

and the user SNRs are monotone maps of ``Psi``::

    chi_1 = beta_1 rho Psi**2 / N
    chi_u = beta_u rho Psi**2 / (N + rho Psi**2 theta_u),   u >= 2

so ``chi_u`` never reaches ``beta_u / theta_u``.

Series are summed in extended precision first; when that cannot meet the
accuracy target (large arguments cause heavy cancellation) they are summed
again in multiprecision unless ``precision="double"`` is requested.
"""

import math
from dataclasses import dataclass

import gmpy2
import numpy as np
from scipy import integrate

from .exceptions import DomainError, SeriesConvergenceError
from .series import DiversityConfig, WeibullParams, hp_power_sum, power_sum

__all__ = [
    "NomaAllocation",
    "LinkContext",
    "cdf_psi",
    "pdf_psi",
    "cdf_chi_1",
    "pdf_chi_1",
    "cdf_chi_u",
    "pdf_chi_u",
    "cdf_chi",
    "pdf_chi",
    "psi_from_chi",
    "chi_from_psi",
    "envelope_cdf_numeric",
    "envelope_sf_numeric",
]

PRECISIONS = ("auto", "double")


@dataclass(frozen=True)
class NomaAllocation:
    """Power fractions ``beta_1 <= ... <= beta_U`` summing to one."""

    betas: tuple

    def __post_init__(self):
        betas = tuple(float(b) for b in self.betas)
        if not betas:
            raise DomainError("at least one user is required")
        if any(not (math.isfinite(b) and b > 0) for b in betas):
            raise DomainError(f"power fractions must be finite and > 0, got {betas}")
        if abs(math.fsum(betas) - 1.0) > 1e-12:
            raise DomainError(f"power fractions must sum to 1, got {math.fsum(betas)!r}")
        if any(b1 > b2 for b1, b2 in zip(betas, betas[1:])):
            raise DomainError("power fractions must be ordered beta_1 <= beta_2 <= ... <= beta_U")
        object.__setattr__(self, "betas", betas)

    @property
    def user_count(self):
        return len(self.betas)

    def beta(self, u):
        self._check(u)
        return self.betas[u - 1]

    def theta(self, u):
        """Interference fraction ``sum_{j<u} beta_j`` seen by user ``u``."""
        self._check(u)
        return math.fsum(self.betas[: u - 1])

    def snr_bound(self, u):
        """Supremum of the SNR of user ``u`` (infinite for user 1)."""
        th = self.theta(u)
        return math.inf if th == 0 else self.beta(u) / th

    def _check(self, u):
        if isinstance(u, bool) or not isinstance(u, (int, np.integer)) or not 1 <= u <= len(self.betas):
            raise DomainError(f"user index must be in [1, {len(self.betas)}], got {u!r}")


@dataclass(frozen=True)
class LinkContext:
    """Everything that fixes the SNR distribution of one user."""

    params: WeibullParams
    config: DiversityConfig
    alloc: NomaAllocation
    rho: float
    user_index: int

    def __post_init__(self):
        if not (math.isfinite(self.rho) and self.rho > 0):
            raise DomainError(f"rho must be finite and > 0, got {self.rho!r}")
        self.alloc._check(self.user_index)
        object.__setattr__(self, "rho", float(self.rho))

    @property
    def beta(self):
        return self.alloc.beta(self.user_index)

    @property
    def theta(self):
        return self.alloc.theta(self.user_index)

    @property
    def snr_bound(self):
        return self.alloc.snr_bound(self.user_index)


def chi_from_psi(ctx, psi):
    """SNR of the context's user for a combined envelope ``psi`` (array-aware)."""
    psi2 = np.square(np.asarray(psi, dtype=float))
    n = ctx.config.n_rx
    if ctx.user_index == 1:
        return ctx.beta * ctx.rho * psi2 / n
    return ctx.beta * ctx.rho * psi2 / (n + ctx.rho * psi2 * ctx.theta)


def psi_from_chi(ctx, chi):
    """Envelope value mapped to ``chi`` (inverse of :func:`chi_from_psi`)."""
    n = ctx.config.n_rx
    if ctx.user_index == 1:
        return math.sqrt(n * chi / (ctx.beta * ctx.rho))
    return math.sqrt(n * chi / (ctx.rho * (ctx.beta - chi * ctx.theta)))


def _check_precision(precision):
    if precision not in PRECISIONS:
        raise DomainError(f"precision must be one of {PRECISIONS}, got {precision!r}")


def _series(table, x, weight_power, precision, what):
    """(k/lam**k)**(NM) sum xi_i (i+NM)**weight_power x**(k(i+NM))."""
    _check_precision(precision)
    nm = table.config.order
    log_w = None
    if weight_power:
        log_w = weight_power * np.log(np.arange(nm, nm + len(table), dtype=np.longdouble))
    try:
        return power_sum(
            table, table.params.k * math.log(x), log_weights=log_w,
            log_prefactor=table.log_prefactor, what=what,
        )
    except SeriesConvergenceError:
        if precision == "double":
            raise
    weight = None
    if weight_power:
        def weight(i, p):
            return gmpy2.mpfr(i + nm) ** weight_power
    value, _ = hp_power_sum(table.params, table.config, x, weight, what=what)
    return value


def cdf_psi(table, psi, precision="auto"):
    """CDF of the combined envelope at ``psi``.

    Parameters
    ----------
    table : CoefficientTable
    psi : float
        Envelope value, ``psi >= 0``.
    precision : {"auto", "double"}
        ``"double"`` raises :class:`SeriesConvergenceError` instead of
        switching to multiprecision summation.

    Returns
    -------
    float
        Probability in [0, 1].
    """
    psi = float(psi)
    if not psi >= 0 or math.isnan(psi):
        raise DomainError(f"psi must be >= 0, got {psi}")
    if psi == 0:
        return 0.0
    if math.isinf(psi):
        return 1.0
    return min(1.0, max(0.0, _series(table, psi, 0, precision, "cdf_psi")))


def pdf_psi(table, psi, precision="auto"):
    """Density of the combined envelope at ``psi > 0``."""
    psi = float(psi)
    if not psi > 0 or math.isinf(psi):
        raise DomainError(f"psi must be finite and > 0, got {psi}")
    s = _series(table, psi, 1, precision, "pdf_psi")
    return max(0.0, table.params.k / psi * s)


def _check_user(ctx, table, first):
    if (ctx.user_index == 1) != first:
        raise DomainError("user index does not match the requested SNR distribution")
    if ctx.params != table.params or ctx.config != table.config:
        raise DomainError("coefficient table was built for different channel parameters")


def cdf_chi_1(ctx, table, chi, precision="auto"):
    """CDF of the SNR of user 1 (no residual interference)."""
    _check_user(ctx, table, True)
    chi = float(chi)
    if not chi >= 0:
        raise DomainError(f"chi must be >= 0, got {chi}")
    if chi == 0:
        return 0.0
    return cdf_psi(table, psi_from_chi(ctx, chi), precision)


def pdf_chi_1(ctx, table, chi, precision="auto"):
    """Density of the SNR of user 1 at ``chi > 0``."""
    _check_user(ctx, table, True)
    chi = float(chi)
    if not chi > 0 or math.isinf(chi):
        raise DomainError(f"chi must be finite and > 0, got {chi}")
    psi = psi_from_chi(ctx, chi)
    dpsi = ctx.config.n_rx / (2 * psi * ctx.beta * ctx.rho)
    return pdf_psi(table, psi, precision) * dpsi


def cdf_chi_u(ctx, table, chi, precision="auto"):
    """CDF of the SNR of user ``u >= 2``; equals 1 from ``beta_u/theta_u`` on."""
    _check_user(ctx, table, False)
    chi = float(chi)
    if not chi >= 0:
        raise DomainError(f"chi must be >= 0, got {chi}")
    if chi == 0:
        return 0.0
    if chi >= ctx.snr_bound:
        return 1.0
    return cdf_psi(table, psi_from_chi(ctx, chi), precision)


def pdf_chi_u(ctx, table, chi, precision="auto"):
    """Density of the SNR of user ``u >= 2`` on the open support ``(0, beta_u/theta_u)``."""
    _check_user(ctx, table, False)
    chi = float(chi)
    if not 0 < chi < ctx.snr_bound:
        raise DomainError(f"chi must lie in (0, {ctx.snr_bound}), got {chi}")
    psi = psi_from_chi(ctx, chi)
    gap = ctx.beta - chi * ctx.theta
    dpsi = ctx.config.n_rx * ctx.beta / (2 * psi * ctx.rho * gap * gap)
    return pdf_psi(table, psi, precision) * dpsi


def cdf_chi(ctx, table, chi, precision="auto"):
    """SNR CDF of the context's user."""
    f = cdf_chi_1 if ctx.user_index == 1 else cdf_chi_u
    return f(ctx, table, chi, precision)


def pdf_chi(ctx, table, chi, precision="auto"):
    """SNR density of the context's user."""
    f = pdf_chi_1 if ctx.user_index == 1 else pdf_chi_u
    return f(ctx, table, chi, precision)


# ----------------------------------------------------------------------------
# numerical convolution (independent of the series coefficients)
# ----------------------------------------------------------------------------

_QUAD = {"epsabs": 1e-17, "epsrel": 1e-13, "limit": 200}


def _column_cdf(k, lam, n, s):
    """P(sum of n Weibull envelopes <= s)."""
    if s <= 0:
        return 0.0
    if n == 1:
        return -math.expm1(-((s / lam) ** k))
    if n == 2:
        # 2 int_0^{s/2} f(x) [F(s-x) - F(x)] dx with y = (x/lam)**k
        def integrand(y):
            b = ((s - lam * y ** (1 / k)) / lam) ** k
            return math.exp(-y) * math.exp(-y) * -math.expm1(-(b - y))
        val, _ = integrate.quad(integrand, 0.0, (s / (2 * lam)) ** k, **_QUAD)
        return 2 * val

    def integrand(y):
        return math.exp(-y) * _column_cdf(k, lam, n - 1, s - lam * y ** (1 / k))
    val, _ = integrate.quad(integrand, 0.0, (s / lam) ** k, **_QUAD)
    return val


def _column_sf(k, lam, n, s):
    """P(sum of n Weibull envelopes > s)."""
    if s <= 0:
        return 1.0
    if n == 1:
        return math.exp(-((s / lam) ** k))
    if n == 2:
        # 2 int_0^{s/2} f(x) S(s-x) dx + S(s/2)**2
        def integrand(y):
            return math.exp(-y - ((s - lam * y ** (1 / k)) / lam) ** k)
        val, _ = integrate.quad(integrand, 0.0, (s / (2 * lam)) ** k, **_QUAD)
        return 2 * val + math.exp(-2 * (s / (2 * lam)) ** k)

    def integrand(y):
        return math.exp(-y) * _column_sf(k, lam, n - 1, s - lam * y ** (1 / k))
    val, _ = integrate.quad(integrand, 0.0, (s / lam) ** k, **_QUAD)
    return math.exp(-((s / lam) ** k)) + val


def envelope_cdf_numeric(params, config, psi):
    """CDF of the combined envelope by numerical convolution of Weibull laws.

    Independent of the series coefficients; intended as an oracle.  Accurate
    in relative terms where the CDF is small.
    """
    psi = float(psi)
    if psi <= 0:
        return 0.0
    col = _column_cdf(params.k, params.lam, config.n_rx, psi)
    if col > 0.5:
        sf = _column_sf(params.k, params.lam, config.n_rx, psi)
        return math.exp(config.m_tx * math.log1p(-sf))
    return col ** config.m_tx


def envelope_sf_numeric(params, config, psi):
    """Survival function of the combined envelope by numerical convolution.

    Accurate in relative terms where the survival probability is small.
    """
    psi = float(psi)
    if psi <= 0:
        return 1.0
    sf = _column_sf(params.k, params.lam, config.n_rx, psi)
    if sf > 0.5:
        col = _column_cdf(params.k, params.lam, config.n_rx, psi)
        return -math.expm1(config.m_tx * math.log(col)) if col > 0 else 1.0
    return -math.expm1(config.m_tx * math.log1p(-sf))
