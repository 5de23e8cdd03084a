"""Series coefficients for the CDF of the TAS/EGC combined envelope.

The CDF of the sum of ``N`` i.i.d. Weibull envelopes is an ascending series in
``psi**k`` with coefficients ``delta_i / Gamma(i k + N k + 1)`` (``eta_i``).
Raising it to the power ``M`` (transmit antenna selection takes the maximum of
``M`` independent column sums) gives the ``xi_i`` coefficients through the
power recursion

    xi_0 = eta_0 ** M
    xi_i = 1 / (i eta_0) * sum_{q=1..i} (q (M + 1) - i) eta_q xi_{i-q}

Both recursions lose roughly one decimal digit per index in floating point, so
they are run in multiprecision (gmpy2) with a guard of 1.5 digits per term and
only the final values are rounded.  Values are stored as a sign plus the
natural log of the magnitude in extended precision (``numpy.longdouble``),
which keeps coefficients far outside the double range usable.
"""

import csv
import functools
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction

import gmpy2
import numpy as np

from .exceptions import DomainError, EvaluationError, SeriesConvergenceError

__all__ = [
    "WeibullParams",
    "DiversityConfig",
    "CoefficientTable",
    "delta_coeffs",
    "xi_coeffs",
    "build_table",
    "guard_digits",
    "hp_coefficients",
    "hp_power_sum",
    "estimate_terms",
    "power_sum",
    "write_table_csv",
    "DEFAULT_TOL",
    "DEFAULT_MAX_TERMS",
    "DEFAULT_RTOL",
]

DEFAULT_TOL = 1e-12
DEFAULT_MAX_TERMS = 200
# accuracy demanded from a double-precision series evaluation before it is
# declared unreliable
DEFAULT_RTOL = 1e-10
_CONVERGENCE_RUN = 10
_LD = np.longdouble
_LD_EPS = float(np.finfo(np.longdouble).eps)
_HP_MAX_TERMS = 2000
_MODEL_TERMS = 200


@dataclass(frozen=True)
class WeibullParams:
    """Shape ``k`` and scale ``lam`` of the Weibull envelope distribution."""

    k: float
    lam: float

    def __post_init__(self):
        for name in ("k", "lam"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float, np.floating, np.integer)) and math.isfinite(v) and v > 0):
                raise DomainError(f"WeibullParams.{name} must be finite and > 0, got {v!r}")
        object.__setattr__(self, "k", float(self.k))
        object.__setattr__(self, "lam", float(self.lam))


@dataclass(frozen=True)
class DiversityConfig:
    """Transmit (``m_tx``) and receive (``n_rx``) antenna counts."""

    m_tx: int
    n_rx: int

    def __post_init__(self):
        for name in ("m_tx", "n_rx"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)) or v < 1:
                raise DomainError(f"DiversityConfig.{name} must be an integer >= 1, got {v!r}")
        object.__setattr__(self, "m_tx", int(self.m_tx))
        object.__setattr__(self, "n_rx", int(self.n_rx))

    @property
    def order(self):
        """Number of branches entering the leading power, ``N * M``."""
        return self.m_tx * self.n_rx


def guard_digits(count):
    """Decimal digits used to run the coefficient recursions for ``count`` terms."""
    return int(math.ceil(1.5 * count)) + 40


def _bits(digits):
    return int(math.ceil(digits * 3.3219280948873626)) + 16


def mp_shape(k):
    """Multiprecision shape parameter used by every multiprecision path.

    A double within two ulps of a fraction with denominator <= 64 is taken as
    that fraction, so that gamma values along ``j k`` can be generated by
    recurrence.  All multiprecision code must use this value consistently.
    """
    frac = Fraction(k).limit_denominator(64)
    if abs(float(frac) - k) <= 2 * math.ulp(k):
        return gmpy2.mpfr(frac.numerator) / frac.denominator, frac
    return gmpy2.mpfr(k), None


def _gamma_progression(k, count):
    """Gamma(j k) for j = 1..count at the active precision."""
    k_mp, frac = mp_shape(k)
    out = [None] * (count + 1)
    if frac is None:
        for j in range(1, count + 1):
            out[j] = gmpy2.gamma(j * k_mp)
        return out
    a, b = frac.numerator, frac.denominator
    for j in range(1, count + 1):
        if j <= b:
            out[j] = gmpy2.gamma(j * k_mp)
        else:
            x = (j - b) * k_mp
            v = out[j - b]
            for t in range(a):
                v *= x + t
            out[j] = v
    return out


def _delta_mp(k, lam, n_rx, count, gam):
    """delta_0..delta_{count-1} as mpfr at the current context precision."""
    k_mp, _ = mp_shape(k)
    gk = gam[1]
    step = gmpy2.exp(-k_mp * gmpy2.log(gmpy2.mpfr(lam)))
    g = [None]
    power = gmpy2.mpfr(1)
    fact = gmpy2.mpfr(1)
    for p in range(1, count):
        power *= -step
        fact *= p
        g.append(gam[p + 1] * power / fact)
    delta = [gk**n_rx]
    for i in range(1, count):
        s = sum(delta[i - p] * ((n_rx + 1) * p - i) * g[p] for p in range(1, i + 1))
        delta.append(s / (i * gk))
    return delta


def _eta_mp(delta, k, n_rx, gam=None):
    k_mp, _ = mp_shape(k)
    if gam is None:
        gam = _gamma_progression(k, len(delta) + n_rx)
    # Gamma(i k + N k + 1) = (i + N) k Gamma((i + N) k)
    return [d / ((i + n_rx) * k_mp * gam[i + n_rx]) for i, d in enumerate(delta)]


def _xi_mp(eta, m_tx):
    if eta[0] == 0:
        raise DomainError("leading coefficient is zero; the power recursion is undefined")
    xi = [eta[0] ** m_tx]
    for i in range(1, len(eta)):
        s = sum(((m_tx + 1) * q - i) * eta[q] * xi[i - q] for q in range(1, i + 1))
        xi.append(s / (i * eta[0]))
    return xi


@functools.lru_cache(maxsize=64)
def _hp_cached(k, lam, n_rx, m_tx, count, digits):
    with gmpy2.context(gmpy2.get_context(), precision=_bits(digits)):
        gam = _gamma_progression(k, count + n_rx)
        delta = _delta_mp(k, lam, n_rx, count, gam)
        eta = _eta_mp(delta, k, n_rx, gam)
        xi = _xi_mp(eta, m_tx) if m_tx > 1 else list(eta)
    return tuple(delta), tuple(eta), tuple(xi)


def hp_coefficients(params, config, count, digits=None):
    """Multiprecision (delta, eta, xi) tuples of length ``count``.

    ``digits`` is the working precision of the recursions; by default it is
    ``guard_digits(count)``, which leaves at least ~40 correct digits in every
    coefficient.  Results are cached.
    """
    if count < 1:
        raise DomainError("count must be >= 1")
    if digits is None:
        digits = guard_digits(count)
    return _hp_cached(params.k, params.lam, config.n_rx, config.m_tx, int(count), int(digits))


def _log_sign(values):
    """Split mpfr values into (longdouble log|x|, int8 sign)."""
    logs = np.empty(len(values), dtype=_LD)
    signs = np.empty(len(values), dtype=np.int8)
    for i, v in enumerate(values):
        if v == 0:
            logs[i] = -np.inf
            signs[i] = 0
            continue
        lv = gmpy2.log(abs(v))
        hi = float(lv)
        lo = float(lv - hi)
        logs[i] = _LD(hi) + _LD(lo)
        signs[i] = 1 if v > 0 else -1
    return logs, signs


def _to_float_array(logs, signs):
    with np.errstate(over="ignore", under="ignore"):
        return (signs * np.exp(logs)).astype(float)


def delta_coeffs(params, n_rx, count):
    """Coefficients delta_0..delta_{count-1} of the N-fold Weibull sum.

    Raises
    ------
    EvaluationError
        If a coefficient does not fit in double precision; use
        :func:`build_table`, which keeps coefficients in log form, instead.
    """
    if count < 1:
        raise DomainError("count must be >= 1")
    config = DiversityConfig(1, n_rx)
    delta, _, _ = hp_coefficients(params, config, count)
    out = np.array([float(d) for d in delta])
    bad = ~np.isfinite(out) | ((out == 0) & np.array([d != 0 for d in delta]))
    if bad.any():
        first = int(np.argmax(bad))
        raise EvaluationError(
            "delta coefficient outside double range; use the log-scaled table",
            index=first,
        )
    return out


def xi_coeffs(delta, params, config):
    """Power-recursion coefficients xi_0..xi_I from given delta values.

    The recursion sums ``delta_q`` (not ``delta_i``) against ``xi_{i-q}``;
    with ``M = 1`` it reproduces ``eta_i = delta_i / Gamma(i k + N k + 1)``.
    """
    delta = [float(d) for d in np.atleast_1d(delta)]
    if not delta:
        raise DomainError("delta must be non-empty")
    if delta[0] == 0:
        raise DomainError("delta[0] == 0: degenerate series, xi is undefined")
    digits = guard_digits(len(delta))
    with gmpy2.context(gmpy2.get_context(), precision=_bits(digits)):
        eta = _eta_mp([gmpy2.mpfr(d) for d in delta], params.k, config.n_rx)
        xi = _xi_mp(eta, config.m_tx) if config.m_tx > 1 else eta
        return np.array([float(x) for x in xi])


@dataclass(frozen=True)
class CoefficientTable:
    """Truncated delta/eta/xi coefficients in sign + log-magnitude form.

    Index ``i`` of the arrays holds the coefficient of ``psi**(k (i + N M))``
    (for xi) or ``psi**(k (i + N))`` (for delta and eta).
    """

    params: WeibullParams
    config: DiversityConfig
    log_delta: np.ndarray
    sign_delta: np.ndarray
    log_eta: np.ndarray
    sign_eta: np.ndarray
    log_xi: np.ndarray
    sign_xi: np.ndarray
    truncation_index: int
    converged: bool
    tol: float = DEFAULT_TOL
    ref_psi: float = 0.0
    max_terms: int = DEFAULT_MAX_TERMS
    notes: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("log_delta", "sign_delta", "log_eta", "sign_eta", "log_xi", "sign_xi"):
            getattr(self, name).flags.writeable = False

    def __len__(self):
        return len(self.log_xi)

    @property
    def delta(self):
        """delta_i as doubles (may overflow to inf for large i)."""
        return _to_float_array(self.log_delta, self.sign_delta)

    @property
    def eta(self):
        return _to_float_array(self.log_eta, self.sign_eta)

    @property
    def xi(self):
        """xi_i as doubles (tiny values underflow to zero)."""
        return _to_float_array(self.log_xi, self.sign_xi)

    @property
    def log_prefactor(self):
        """log of (k / lam**k)**(N M), the common factor of the CDF series."""
        k, lam = self.params.k, self.params.lam
        return _LD(self.config.order) * (_LD(math.log(k)) - _LD(k) * _LD(math.log(lam)))

    def with_xi_scaled(self, index, factor):
        """Copy of the table with ``xi[index]`` multiplied by ``factor``.

        Used for fault injection in validation tests.
        """
        if factor == 0:
            raise DomainError("factor must be non-zero")
        log_xi = self.log_xi.copy()
        sign_xi = self.sign_xi.copy()
        log_xi[index] += _LD(math.log(abs(factor)))
        if factor < 0:
            sign_xi[index] = -sign_xi[index]
        notes = dict(self.notes, corrupted=(int(index), float(factor)))
        return CoefficientTable(
            self.params, self.config, self.log_delta.copy(), self.sign_delta.copy(),
            self.log_eta.copy(), self.sign_eta.copy(), log_xi, sign_xi,
            self.truncation_index, self.converged, self.tol, self.ref_psi,
            self.max_terms, notes,
        )


@functools.lru_cache(maxsize=64)
def _full_log_table(k, lam, n_rx, m_tx, count):
    params = WeibullParams(k, lam)
    config = DiversityConfig(m_tx, n_rx)
    delta, eta, xi = hp_coefficients(params, config, count)
    return _log_sign(delta) + _log_sign(eta) + _log_sign(xi)


def build_table(params, config, tol=DEFAULT_TOL, max_terms=DEFAULT_MAX_TERMS, ref_psi=None):
    """Compute a truncated coefficient table.

    Coefficients are generated up to ``max_terms``; the table is cut at the
    end of the first run of ten consecutive indices whose CDF term
    ``(k/lam**k)**(NM) |xi_i| ref_psi**(k (i + NM))`` stays below ``tol``.
    If no such run exists the whole table is kept and ``converged`` is False.

    ``ref_psi`` is the largest envelope value the caller intends to evaluate
    (the series is ascending, so it converges last).  It defaults to ``lam``.
    """
    if not tol > 0:
        raise DomainError("tol must be > 0")
    if max_terms < 1:
        raise DomainError("max_terms must be >= 1")
    if ref_psi is None:
        ref_psi = params.lam
    if ref_psi < 0 or not math.isfinite(ref_psi):
        raise DomainError("ref_psi must be finite and >= 0")
    arrays = _full_log_table(params.k, params.lam, config.n_rx, config.m_tx, int(max_terms))
    log_delta, sign_delta, log_eta, sign_eta, log_xi, sign_xi = arrays

    nm = config.order
    if ref_psi == 0:
        last, converged = min(max_terms, _CONVERGENCE_RUN) - 1, True
    else:
        log_pref = _LD(nm) * (_LD(math.log(params.k)) - _LD(params.k) * _LD(math.log(params.lam)))
        idx = np.arange(max_terms)
        log_terms = log_xi + log_pref + _LD(params.k) * (idx + nm) * _LD(math.log(ref_psi))
        small = log_terms < math.log(tol)
        last, converged = max_terms - 1, False
        run = 0
        for i, s in enumerate(small):
            run = run + 1 if s else 0
            if run == _CONVERGENCE_RUN:
                last, converged = i, True
                break
    n = last + 1
    return CoefficientTable(
        params, config,
        log_delta[:n].copy(), sign_delta[:n].copy(),
        log_eta[:n].copy(), sign_eta[:n].copy(),
        log_xi[:n].copy(), sign_xi[:n].copy(),
        truncation_index=last, converged=converged, tol=float(tol),
        ref_psi=float(ref_psi), max_terms=int(max_terms),
    )


def write_table_csv(table, out=None):
    """Write a coefficient table as CSV; returns the text when ``out`` is None."""
    own = out is None
    buf = io.StringIO() if own else out
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", "delta", "xi", "log_abs_delta", "sign_delta", "log_abs_xi", "sign_xi"])
    delta, xi = table.delta, table.xi
    for i in range(len(table)):
        writer.writerow([
            i, repr(float(delta[i])), repr(float(xi[i])),
            repr(float(table.log_delta[i])), int(table.sign_delta[i]),
            repr(float(table.log_xi[i])), int(table.sign_xi[i]),
        ])
    return buf.getvalue() if own else None


# ----------------------------------------------------------------------------
# series summation
# ----------------------------------------------------------------------------

def _exact_sum(values):
    """Sum longdouble values exactly-rounded via a hi/lo double split."""
    hi = values.astype(float)
    lo = (values - hi.astype(_LD)).astype(float)
    return math.fsum(np.concatenate([hi, lo]))


def power_sum(table, log_arg, *, log_weights=None, weight_signs=None,
              log_prefactor=0.0, rtol=DEFAULT_RTOL, atol=0.0, what="series"):
    """Sum ``prefactor * sum_i xi_i w_i exp((i + NM) * log_arg)`` in extended precision.

    ``log_arg`` is ``k * log(x)`` for the series argument ``x``.  Raises
    :class:`SeriesConvergenceError` if the truncation or rounding error
    estimate exceeds ``rtol * |sum| + atol``.
    """
    n = len(table)
    idx = np.arange(n)
    log_t = table.log_xi + _LD(log_prefactor) + (idx + table.config.order) * _LD(log_arg)
    signs = table.sign_xi.astype(np.int64)
    if log_weights is not None:
        log_t = log_t + np.asarray(log_weights, dtype=_LD)
    if weight_signs is not None:
        signs = signs * np.asarray(weight_signs, dtype=np.int64)
    if np.any(log_t > 11000):
        raise SeriesConvergenceError(f"{what}: terms exceed the extended range", what=what)
    with np.errstate(under="ignore"):
        terms = signs * np.exp(log_t)
    mags = np.abs(terms)
    total = _exact_sum(terms)
    exps = np.abs(np.where(np.isfinite(log_t), log_t, 0))
    rounding = float(np.sum(mags * (2 + exps + np.abs(idx * _LD(log_arg))))) * _LD_EPS
    tail = float(np.max(mags[-min(3, n):]))
    if n >= 2 and float(mags[-1]) > float(mags[-2]):
        tail = math.inf  # still growing at the end of the table
    allowed = rtol * abs(total) + atol
    if tail > allowed or rounding > allowed:
        raise SeriesConvergenceError(
            f"{what}: series unreliable at this argument",
            what=what, value=total, tail=tail, rounding=rounding,
            terms=n, max_term=float(mags.max()),
        )
    return total


def _coefficient_model(params, config):
    """Fit log|xi_i| ~ a + b i + c i log i on a short multiprecision table."""
    arrays = _full_log_table(params.k, params.lam, config.n_rx, config.m_tx, _MODEL_TERMS)
    log_xi = np.asarray(arrays[4], dtype=float)
    i = np.arange(len(log_xi), dtype=float)
    sel = (i >= _MODEL_TERMS // 2) & np.isfinite(log_xi)
    design = np.column_stack([np.ones(sel.sum()), i[sel], i[sel] * np.log(i[sel])])
    coef, *_ = np.linalg.lstsq(design, log_xi[sel], rcond=None)
    return coef


def estimate_terms(params, config, log_arg, log_target, limit=_HP_MAX_TERMS, log_weight_model=None):
    """Rough number of terms before ``|xi_i| exp((i+NM) log_arg)`` drops below ``exp(log_target)``.

    Returns ``(terms, log_peak)`` where ``log_peak`` is the predicted log of
    the largest term.  Based on an extrapolated fit of the coefficient magnitudes; callers must
    still verify the tail.  ``log_weight_model(i)`` adds the log of any
    extra term weight.
    """
    a, b, c = _coefficient_model(params, config)
    i = np.arange(1, limit + 1, dtype=float)
    log_t = a + b * i + c * i * np.log(i) + (i + config.order) * log_arg
    if log_weight_model is not None:
        log_t = log_t + log_weight_model(i)
    peak = int(np.argmax(log_t))
    below = np.nonzero(log_t[peak:] < log_target)[0]
    if below.size == 0:
        return limit, float(log_t[peak])
    n = peak + int(below[0]) + 1
    return min(limit, max(_MODEL_TERMS, int(1.15 * n) + 20)), float(log_t[peak])


def hp_power_sum(params, config, x, weight=None, *, log_scale=0.0, rtol=1e-15,
                 start_terms=None, max_terms=_HP_MAX_TERMS, log_weight_model=None,
                 what="series"):
    """Multiprecision ``exp(log_scale) (k/lam**k)**(NM) sum_i xi_i weight(i, p_i) x**p_i``.

    ``p_i = k (i + N M)``.  ``weight`` receives ``(i, p_i)`` as mpfr and must
    return an mpfr at the active precision.  The number of terms and the
    working precision are raised until the tail and the cancellation loss are
    both under control; :class:`SeriesConvergenceError` is raised when more
    than ``max_terms`` terms would be needed.  Returns ``(value, info)`` where ``info`` records the
    terms and digits used.
    """
    x = float(x)
    if x < 0:
        raise DomainError("series argument must be >= 0")
    if x == 0:
        return 0.0, {"terms": 0, "digits": 0, "lost_digits": 0.0}
    log_arg = params.k * math.log(x)
    log_prefactor = log_scale + config.order * (math.log(params.k) - params.k * math.log(params.lam))
    # first pass assumes an O(1) result, as for a CDF
    guess, log_peak = estimate_terms(params, config, log_arg, math.log(rtol) - log_prefactor - 2.3,
                                     max_terms, log_weight_model)
    if guess >= max_terms and start_terms is None:
        raise SeriesConvergenceError(
            f"{what}: series needs more than {max_terms} terms at this argument",
            what=what, x=x,
        )
    count = int(start_terms) if start_terms is not None else guess
    extra = max(40, int((log_peak + log_prefactor) / math.log(10)) + 45)
    nm = config.order
    while True:
        digits = guard_digits(count) + extra
        _, _, xi = hp_coefficients(params, config, count, digits)
        with gmpy2.context(gmpy2.get_context(), precision=_bits(extra + 20)):
            # the working precision only needs to absorb the cancellation
            k, _ = mp_shape(params.k)
            lx = gmpy2.log(gmpy2.mpfr(x))
            pref = (k * gmpy2.exp(-k * gmpy2.log(gmpy2.mpfr(params.lam)))) ** nm
            pref *= gmpy2.exp(gmpy2.mpfr(log_scale))
            terms = []
            for i, c in enumerate(xi):
                p = k * (i + nm)
                t = c * gmpy2.exp(p * lx)
                if weight is not None:
                    t *= weight(i, p)
                terms.append(t * pref)
            total = sum(terms)
            mags = [abs(t) for t in terms]
            peak = max(mags)
            tail = max(mags[-10:])
        lost = 0.0 if total == 0 else max(0.0, float(gmpy2.log10(peak / abs(total))))
        growing = len(mags) < 2 or mags[-1] > mags[-2]
        converged = total != 0 and not growing and tail <= rtol * abs(total)
        if converged and extra >= lost + 25:
            return float(total), {"terms": count, "digits": digits, "lost_digits": lost}
        if lost + 25 > extra:
            extra = int(lost) + 40
        if not converged:
            if count >= max_terms:
                raise SeriesConvergenceError(
                    f"{what}: multiprecision series did not converge",
                    what=what, terms=count, tail=float(tail),
                )
            target = math.log(rtol * abs(float(total))) if total != 0 else math.log(rtol) - 46
            guess, _ = estimate_terms(params, config, log_arg, target - log_prefactor, max_terms,
                                      log_weight_model)
            count = min(max_terms, max(guess, int(count * 1.3)))
