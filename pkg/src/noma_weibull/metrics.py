"""Outage probability and average bit error rate.

Outage is the SNR CDF at the threshold.  The ABER of a user with SNR ``chi``
is ``E[erfc(sqrt(A chi)) / 2]``; writing ``chi`` through the combined envelope
``Psi`` and integrating by parts against the envelope CDF gives

* user 1: an ascending series in ``sqrt(N / (A beta_1 rho))`` whose terms
  carry ``Gamma((p_i + 1) / 2)`` with ``p_i = k (i + N M)``;
* user ``u >= 2``: the integral up to a truncation point ``tau`` (``a_dagger``)

      P(tau) = C sum_i xi_i [tau**p_i erfc(g(tau)) + 2/sqrt(pi) Z_i(tau)]
      Z_i(tau) = sum_j s (-s**2)**j / j! K(p_i + 2 j, j + 3/2)
      K(e, a) = int_0^tau x**e (1 + c x**2)**(-a) dx
              = tau**(e+1) / (e+1) 2F1(a, (e+1)/2; (e+3)/2; -c tau**2)

  with ``s = sqrt(A rho beta_u / N)``, ``c = theta_u rho / N``,
  ``g(x) = s x / sqrt(1 + c x**2)`` and ``C = k**(MN) / (2 lam**(k M N))``.

The double-precision evaluation of the user-``u`` series fails for realistic
``tau`` (the outer sum cancels over more than a hundred decades).  In that case
the multiprecision path sums over ``j`` in closed form: expanding ``K`` in
``1/(c tau**2)`` and exchanging the sums turns the ``j`` series into Laguerre
polynomials ``L_n^(1/2)(r)`` with ``r = A beta_u / theta_u`` independent of
``rho``, which stays well conditioned at any SNR.
"""

import math
from dataclasses import dataclass, field

import gmpy2
import numpy as np
from scipy import integrate
from scipy.special import gammaln

from .exceptions import DomainError, EvaluationError, SeriesConvergenceError
from .series import hp_power_sum, mp_shape, power_sum
from .specfun import erfc, gauss_2f1, ln_gamma
from .statistics import LinkContext, cdf_chi, envelope_cdf_numeric, envelope_sf_numeric

__all__ = [
    "OutageQuery",
    "AberQuery",
    "AsymptoteReport",
    "AberEvaluation",
    "outage_exact",
    "outage_asymptotic",
    "aber_user1_exact",
    "aber_user1_asymptotic",
    "aber_user_u",
    "evaluate_aber_user_u",
    "evaluate_aber",
    "aber_floor",
    "aber_quadrature",
    "DEFAULT_A_DAGGER",
]

DEFAULT_A_DAGGER = 35.0
_J_CAP = 5000
_CANCELLATION_LIMIT = 1e12
_SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class OutageQuery:
    """Outage of ``ctx``'s user against the linear SNR threshold ``gamma``."""

    ctx: LinkContext
    gamma: float

    def __post_init__(self):
        if not (math.isfinite(self.gamma) and self.gamma >= 0):
            raise DomainError(f"gamma must be finite and >= 0, got {self.gamma!r}")


@dataclass(frozen=True)
class AberQuery:
    """ABER of ``ctx``'s user for modulation constant ``mod_a``."""

    ctx: LinkContext
    mod_a: float
    trunc_a: float = DEFAULT_A_DAGGER

    def __post_init__(self):
        for name in ("mod_a", "trunc_a"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be finite and > 0, got {v!r}")


@dataclass(frozen=True)
class AsymptoteReport:
    """High-SNR power law ``(coding_gain * rho) ** (-diversity_gain)``."""

    diversity_gain: float
    coding_gain: float
    floor: float = None

    def value(self, rho):
        return (self.coding_gain * rho) ** (-self.diversity_gain)


@dataclass(frozen=True)
class AberEvaluation:
    """An ABER value and the route that produced it."""

    value: float
    method: str
    diagnostics: dict = field(default_factory=dict, compare=False)


def _check_table(ctx, table):
    if ctx.params != table.params or ctx.config != table.config:
        raise DomainError("coefficient table was built for different channel parameters")


# ----------------------------------------------------------------------------
# outage
# ----------------------------------------------------------------------------

def outage_exact(q, table, precision="auto"):
    """Probability that the SNR of the query's user does not exceed ``gamma``.

    Returns 1 for ``u >= 2`` when ``gamma >= beta_u / theta_u``.
    """
    _check_table(q.ctx, table)
    if q.gamma == 0:
        return 0.0
    return cdf_chi(q.ctx, table, q.gamma, precision)


def _shape_factor(params, config):
    """log of Gamma(k+1)**N / Gamma(kN+1)."""
    k, n = params.k, config.n_rx
    return n * ln_gamma(k + 1) - ln_gamma(k * n + 1)


def outage_asymptotic(q):
    """High-SNR outage law.

    Returns
    -------
    (AsymptoteReport, float)
        Diversity gain ``k M N / 2``, the coding gain and the asymptotic
        outage value at ``q.ctx.rho``.
    """
    ctx = q.ctx
    k, lam = ctx.params.k, ctx.params.lam
    n = ctx.config.n_rx
    if q.gamma <= 0:
        raise DomainError("the asymptotic outage needs gamma > 0")
    margin = ctx.beta - q.gamma * ctx.theta
    if margin <= 0:
        raise DomainError("gamma is at or beyond the SNR support bound; no coding gain")
    div = k * ctx.config.order / 2
    log_x = _shape_factor(ctx.params, ctx.config)
    coding = lam**2 * margin / (n * q.gamma) * math.exp(-2 * log_x / (k * n))
    report = AsymptoteReport(div, coding)
    return report, report.value(ctx.rho)


# ----------------------------------------------------------------------------
# ABER of user 1
# ----------------------------------------------------------------------------

def _ld_log_gamma(values):
    """log Gamma of mpfr arguments rounded to longdouble via a hi/lo split."""
    out = np.empty(len(values), dtype=np.longdouble)
    with gmpy2.context(gmpy2.get_context(), precision=128):
        for i, v in enumerate(values):
            lg = gmpy2.lgamma(v)[0]
            hi = float(lg)
            out[i] = np.longdouble(hi) + np.longdouble(float(lg - hi))
    return out


def aber_user1_exact(q, table, precision="auto"):
    """Exact ABER of user 1 as an ascending series.

    The series converges for ``k < 2`` (and for ``k = 2`` when
    ``N / (A beta_1 rho) < lam**2``); for ``k > 2`` it diverges and
    :class:`SeriesConvergenceError` is raised so the caller can use
    :func:`aber_quadrature`.
    """
    ctx = q.ctx
    if ctx.user_index != 1:
        raise DomainError("aber_user1_exact applies to user 1 only")
    _check_table(ctx, table)
    k = ctx.params.k
    if k > 2:
        raise SeriesConvergenceError("user-1 ABER series diverges for k > 2", k=k)
    x2 = ctx.config.n_rx / (q.mod_a * ctx.beta * ctx.rho)
    nm = ctx.config.order
    k_mp, _ = mp_shape(k)
    with gmpy2.context(gmpy2.get_context(), precision=128):
        args = [(k_mp * (i + nm) + 1) / 2 for i in range(len(table))]
    log_w = _ld_log_gamma(args)
    log_half_sqrt_pi = math.log(2 * _SQRT_PI)
    try:
        return power_sum(
            table, 0.5 * k * math.log(x2), log_weights=log_w,
            log_prefactor=table.log_prefactor - np.longdouble(log_half_sqrt_pi),
            what="aber_user1",
        )
    except SeriesConvergenceError:
        if precision == "double":
            raise

    def weight(i, p):
        return gmpy2.gamma((p + 1) / 2)

    def log_weight(i):
        return gammaln((k * (i + nm) + 1) / 2)

    value, _ = hp_power_sum(
        ctx.params, ctx.config, math.sqrt(x2), weight, log_scale=-log_half_sqrt_pi,
        log_weight_model=log_weight, what="aber_user1",
    )
    return value


def aber_user1_asymptotic(q):
    """High-SNR ABER law of user 1: ``(G_c rho) ** (-k M N / 2)``."""
    ctx = q.ctx
    if ctx.user_index != 1:
        raise DomainError("aber_user1_asymptotic applies to user 1 only")
    k, lam = ctx.params.k, ctx.params.lam
    n, m = ctx.config.n_rx, ctx.config.m_tx
    div = k * m * n / 2
    log_g = ln_gamma((k * m * n + 1) / 2) - math.log(2 * _SQRT_PI)
    log_x = _shape_factor(ctx.params, ctx.config)
    coding = q.mod_a * ctx.beta * lam**2 / n * math.exp(-2 * (log_g / m + log_x) / (k * n))
    report = AsymptoteReport(div, coding)
    return report, report.value(ctx.rho)


# ----------------------------------------------------------------------------
# ABER of user u >= 2
# ----------------------------------------------------------------------------

def aber_floor(alloc, u, mod_a):
    """High-SNR ABER limit ``erfc(sqrt(A beta_u / theta_u)) / 2`` of user ``u >= 2``."""
    if u < 2:
        raise DomainError("the ABER floor exists only for users u >= 2")
    if not mod_a > 0:
        raise DomainError("mod_a must be > 0")
    return 0.5 * erfc(math.sqrt(mod_a * alloc.beta(u) / alloc.theta(u)))


def _user_u_constants(q):
    ctx = q.ctx
    n = ctx.config.n_rx
    s = math.sqrt(q.mod_a * ctx.rho * ctx.beta / n)
    c = ctx.theta * ctx.rho / n
    return s, c


def _aber_u_double(q, table):
    """Truncated user-u series in double precision; raises when unreliable."""
    ctx = q.ctx
    tau = q.trunc_a
    s, c = _user_u_constants(q)
    z = -c * tau * tau
    st2 = s * s * tau * tau
    g_tau = s * tau / math.sqrt(1 + c * tau * tau)
    erfc_tau = erfc(g_tau)
    k, nm = ctx.params.k, ctx.config.order
    log_w = np.empty(len(table), dtype=np.longdouble)
    signs = np.empty(len(table), dtype=np.int64)
    for i in range(len(table)):
        p = k * (i + nm)
        # scaled by tau**-p: s (-s^2 tau^2)^j / j! * tau / (e + 1) * 2F1(...)
        total = 0.0
        comp = 0.0
        peak = 0.0
        coef = s * tau
        small = 0
        for j in range(_J_CAP):
            e = p + 2 * j
            f = gauss_2f1(j + 1.5, (e + 1) / 2, (e + 3) / 2, z)
            term = coef / (e + 1) * f.value
            peak = max(peak, abs(term))
            y = term - comp
            t = total + y
            comp = (t - total) - y
            total = t
            if abs(term) <= 1e-17 * abs(total):
                small += 1
                if small >= 5:
                    break
            else:
                small = 0
            coef *= -st2 / (j + 1)
            if not math.isfinite(coef):
                break
        else:
            raise SeriesConvergenceError("inner j-series hit the term cap", index=i, cap=_J_CAP)
        total -= comp
        if not math.isfinite(total) or peak > _CANCELLATION_LIMIT * abs(total):
            raise SeriesConvergenceError(
                "cancellation in the inner j-series", index=i, peak=peak, value=total,
            )
        bracket = erfc_tau + 2 / _SQRT_PI * total
        log_w[i] = math.log(abs(bracket)) if bracket != 0 else -np.inf
        signs[i] = 1 if bracket >= 0 else -1
    return power_sum(
        table, k * math.log(tau), log_weights=log_w, weight_signs=signs,
        log_prefactor=table.log_prefactor - np.longdouble(math.log(2.0)),
        what="aber_user_u",
    )


class _BracketMP:
    """Multiprecision ``tau**-p [tau**p erfc(g(tau)) + 2/sqrt(pi) Z(p, tau)]``."""

    def __init__(self, q):
        s, c = _user_u_constants(q)
        self.tau = q.trunc_a
        self.s = s
        self.c = c
        self.r = q.mod_a * q.ctx.beta / q.ctx.theta
        self.large = c * self.tau**2 > 2.0
        self._cache = {}

    def _consts(self, prec):
        if prec in self._cache:
            return self._cache[prec]
        mpf = gmpy2.mpfr
        tau, s, c, r = mpf(self.tau), mpf(self.s), mpf(self.c), mpf(self.r)
        ct2 = c * tau * tau
        g = s * tau / gmpy2.sqrt(1 + ct2)
        out = {
            "tau": tau, "s": s, "c": c, "r": r, "ct2": ct2, "log_tau": gmpy2.log(tau),
            "erfc": gmpy2.erfc(g), "two_over_sqrt_pi": 2 / gmpy2.sqrt(gmpy2.const_pi()),
            "gamma_3_2": gmpy2.sqrt(gmpy2.const_pi()) / 2,
        }
        if self.large:
            u = 1 / ct2
            digits = prec * 0.30103
            count = int(digits * math.log(10) / -math.log(float(u))) + 20
            # A_n = e^-r L_n^(1/2)(r) by the three-term recurrence
            er = gmpy2.exp(-r)
            lag = [mpf(1), mpf(1.5) - r]
            for n in range(1, count):
                lag.append(((2 * n + mpf(1.5) - r) * lag[n] - (n + mpf(0.5)) * lag[n - 1]) / (n + 1))
            weights = []
            power = mpf(1)
            for n in range(count):
                weights.append(er * lag[n] * power)
                power *= -u
            out["an_un"] = weights
        self._cache[prec] = out
        return out

    def _z_large(self, p, k):
        """tau**-p Z(p) from the expansion in 1 / (c tau**2)."""
        d = 1 - p / 2
        s1 = sum(w / (d + n) for n, w in enumerate(k["an_un"]))
        first = -k["s"] / 2 * s1 / (k["tau"] ** 2 * k["c"] ** gmpy2.mpfr(1.5))
        b0 = (p + 1) / 2
        eps = gmpy2.exp2(-gmpy2.get_context().precision - 8)
        t = gmpy2.mpfr(1)
        total = t
        j = 0
        while True:
            ratio = k["r"] * (j + b0) / ((j + 1) * (j + gmpy2.mpfr(1.5)))
            t *= -ratio
            total += t
            j += 1
            if t == 0 or (ratio < 1 and abs(t) < abs(total) * eps):
                break
        # Gamma(d) Gamma(b0) by reflection: pi Gamma(b0) / (sin(pi d) Gamma(p/2))
        pi = gmpy2.const_pi()
        gg = pi * gmpy2.exp(gmpy2.lgamma(b0)[0] - gmpy2.lgamma(p / 2)[0]) / gmpy2.sin(pi * d)
        # c**-b0 tau**-p = c**-1/2 (c tau^2)**(-p/2)
        scale = gmpy2.exp(-p / 2 * gmpy2.log(k["ct2"])) / gmpy2.sqrt(k["c"])
        second = k["s"] / 2 * gg / k["gamma_3_2"] * scale * total
        return first + second

    def _z_small(self, p, k):
        """tau**-p Z(p) from the j-series with Pfaff-transformed 2F1 terms."""
        eps = gmpy2.exp2(-gmpy2.get_context().precision - 8)
        w = k["ct2"] / (1 + k["ct2"])
        log1p_ct2 = gmpy2.log1p(k["ct2"])
        st2 = k["s"] ** 2 * k["tau"] ** 2
        coef = k["s"] * k["tau"]
        total = gmpy2.mpfr(0)
        j = 0
        while True:
            a = j + gmpy2.mpfr(1.5)
            e = p + 2 * j
            cc = (e + 3) / 2
            # 2F1(a, (e+1)/2; cc; -ct2) = (1+ct2)^-a 2F1(a, 1; cc; w)
            term, f, n = gmpy2.mpfr(1), gmpy2.mpfr(1), 0
            while True:
                term *= (a + n) / (cc + n) * w
                f += term
                n += 1
                if term < f * eps:
                    break
            t = coef / (e + 1) * f * gmpy2.exp(-a * log1p_ct2)
            total += t
            if abs(t) < abs(total) * eps and j > 2:
                break
            coef *= -st2 / (j + 1)
            j += 1
        return total

    def __call__(self, i, p):
        outer = gmpy2.get_context().precision
        with gmpy2.context(gmpy2.get_context(), precision=3 * outer + 256):
            k = self._consts(3 * outer + 256)
            z = self._z_large if self.large else self._z_small
            m = float(p) / 2 - 1
            if self.large and m > -0.5 and abs(m - round(m)) < 1e-2:
                # removable singularity: average tau^p b(p) at p -/+ delta
                delta = gmpy2.exp2(-outer - 64)
                lo = z(p - delta, k) * gmpy2.exp(-delta * k["log_tau"])
                hi = z(p + delta, k) * gmpy2.exp(delta * k["log_tau"])
                zp = (lo + hi) / 2
            else:
                zp = z(p, k)
            value = k["erfc"] + k["two_over_sqrt_pi"] * zp
        return +value


def _aber_u_mp(q, table):
    ctx = q.ctx
    bracket = _BracketMP(q)
    value, info = hp_power_sum(
        ctx.params, ctx.config, q.trunc_a, bracket, log_scale=-math.log(2.0), what="aber_user_u",
    )
    return value, info


def _truncation_bound(q):
    """Upper bound ``erfc(g(tau)) / 2 * P(Psi > tau)`` on the ABER mass cut off at ``tau``."""
    s, c = _user_u_constants(q)
    tau = q.trunc_a
    tail = envelope_sf_numeric(q.ctx.params, q.ctx.config, tau)
    return 0.5 * erfc(s * tau / math.sqrt(1 + c * tau * tau)) * tail


def evaluate_aber_user_u(q, table, precision="auto", failover=True):
    """ABER of user ``u >= 2`` truncated at ``tau = q.trunc_a``.

    Tries double precision, then multiprecision summation of the same series,
    then (if ``failover``) :func:`aber_quadrature` over ``(0, tau)``.

    Returns
    -------
    AberEvaluation
        ``method`` is ``"series"``, ``"series_mp"`` or ``"quadrature"``;
        ``diagnostics["truncation_bound"]`` bounds the ABER lost by cutting
        the integral at ``tau``.
    """
    ctx = q.ctx
    if ctx.user_index < 2:
        raise DomainError("evaluate_aber_user_u applies to users u >= 2")
    _check_table(ctx, table)
    floor_hi = 0.5
    diagnostics = {}
    try:
        # the outer sum cancels at least as badly as the CDF series at tau
        power_sum(table, ctx.params.k * math.log(q.trunc_a), log_prefactor=table.log_prefactor,
                  what="cdf_at_tau")
        s, c = _user_u_constants(q)
        if (s * q.trunc_a) ** 2 > 25:
            raise SeriesConvergenceError("inner j-series would cancel", s_tau_sq=(s * q.trunc_a) ** 2)
        value = _aber_u_double(q, table)
        return AberEvaluation(min(floor_hi, max(0.0, value)), "series",
                              {"truncation_bound": _truncation_bound(q)})
    except EvaluationError as exc:
        diagnostics["series"] = str(exc)
        if precision == "double" and not failover:
            raise
    if precision != "double":
        try:
            value, info = _aber_u_mp(q, table)
            diagnostics.update(info)
            diagnostics["truncation_bound"] = _truncation_bound(q)
            return AberEvaluation(min(floor_hi, max(0.0, value)), "series_mp", diagnostics)
        except EvaluationError as exc:
            diagnostics["series_mp"] = str(exc)
            if not failover:
                raise
    if not failover:
        raise SeriesConvergenceError("series evaluation failed; use aber_quadrature", **diagnostics)
    value = aber_quadrature(q, table, upper=q.trunc_a)
    diagnostics["truncation_bound"] = _truncation_bound(q)
    return AberEvaluation(value, "quadrature", diagnostics)


def aber_user_u(q, table, precision="auto", failover=True):
    """ABER of user ``u >= 2``; see :func:`evaluate_aber_user_u`."""
    return evaluate_aber_user_u(q, table, precision, failover).value


def evaluate_aber(q, table):
    """ABER of any user with automatic fallback to quadrature."""
    if q.ctx.user_index >= 2:
        return evaluate_aber_user_u(q, table)
    try:
        return AberEvaluation(aber_user1_exact(q, table), "series")
    except EvaluationError as exc:
        return AberEvaluation(aber_quadrature(q, table), "quadrature", {"series": str(exc)})


# ----------------------------------------------------------------------------
# quadrature oracle
# ----------------------------------------------------------------------------

def _psi_max(params, config):
    """Envelope value beyond which the survival function is below ~1e-16."""
    return config.n_rx * params.lam * math.log(config.order * 1e16) ** (1 / params.k)


def aber_quadrature(q, table=None, upper=None, tol=1e-10):
    """ABER by numerical integration against the envelope CDF.

    Uses ``P = h(U) F(U) + 1/sqrt(pi) int_0^U F(x) exp(-g(x)^2) g'(x) dx`` with
    ``h = erfc(g) / 2``, where ``F`` comes from numerical convolution of the
    Weibull laws (not from the series coefficients).  ``upper`` truncates the
    integral at ``U``; by default ``U`` is where the envelope survival
    function drops below about 1e-16.

    ``table`` is accepted for signature symmetry and only checked for
    consistency.
    """
    ctx = q.ctx
    if table is not None:
        _check_table(ctx, table)
    n = ctx.config.n_rx
    beta, theta = ctx.beta, ctx.theta
    s = math.sqrt(q.mod_a * ctx.rho * beta / n)
    c = theta * ctx.rho / n
    top = _psi_max(ctx.params, ctx.config)
    if upper is not None:
        if not upper > 0:
            raise DomainError("upper must be > 0")
        top = min(top, float(upper))

    def g(x):
        return s * x / math.sqrt(1 + c * x * x)

    def integrand(x):
        if x <= 0:
            return 0.0
        f = envelope_cdf_numeric(ctx.params, ctx.config, x)
        return f * math.exp(-g(x) ** 2) * s * (1 + c * x * x) ** -1.5

    # break points where the integrand changes character
    marks = {ctx.params.lam, n * ctx.params.lam, 3.0 / s}
    if c > 0:
        marks.update({0.3 / math.sqrt(c), 1 / math.sqrt(c), 3 / math.sqrt(c)})
    points = sorted(x for x in marks if 0 < x < top)
    val, err = integrate.quad(integrand, 0.0, top, points=points or None,
                              limit=500, epsabs=tol / 10, epsrel=1e-12)
    if not err <= tol:
        raise EvaluationError("ABER quadrature did not reach the tolerance", abserr=err, tol=tol)
    edge = 0.5 * erfc(g(top)) * envelope_cdf_numeric(ctx.params, ctx.config, top)
    return edge + val / _SQRT_PI
