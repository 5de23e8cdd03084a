"""Special functions used by the analytical formulas.

``ln_gamma`` and ``erfc`` wrap the C library routines exposed by :mod:`math`
(both accurate to a few ulp).  ``gauss_2f1`` is evaluated here for real
parameters and non-positive argument, which is the only branch the ABER
series needs.
"""

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError, EvaluationError

__all__ = ["EvalResult", "ln_gamma", "erfc", "gauss_2f1"]

_EPS = np.finfo(float).eps
_STOP_RUN = 5
_STOP_RTOL = 1e-16
_MAX_TERMS = 100_000
# the direct series is used for z >= -1/2; for z < -1/2 the Pfaff image
# w = z/(z-1) lies in (1/3, 1) and converges faster than the alternating series.
_PFAFF_SWITCH = -0.5


@dataclass(frozen=True)
class EvalResult:
    """A function value together with an estimate of its absolute error."""

    value: float
    est_abs_error: float
    terms: int = 0

    def __float__(self):
        return float(self.value)


def ln_gamma(x):
    """Natural logarithm of the gamma function for ``x > 0``."""
    x = float(x)
    if not x > 0 or not math.isfinite(x):
        raise DomainError(f"ln_gamma requires a finite positive argument, got {x}")
    return math.lgamma(x)


def erfc(x):
    """Complementary error function of a finite real argument."""
    x = float(x)
    if math.isnan(x):
        raise DomainError("erfc of NaN")
    return math.erfc(x)


def _is_nonpositive_integer(v):
    return v <= 0 and v == math.floor(v)


def _series(a, b, c, z):
    """Direct hypergeometric series in ``z`` with |z| < 1.

    Returns (sum, abs error estimate, number of terms, converged flag).
    """
    term = 1.0
    total = 1.0
    abs_total = 1.0
    comp = 0.0  # Kahan compensation
    small_run = 0
    n = 0
    while n < _MAX_TERMS:
        ratio = (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z
        term *= ratio
        n += 1
        if term == 0.0:
            # one of the upper parameters is a non-positive integer: polynomial
            return total - comp, _EPS * abs_total, n, True
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        abs_total += abs(term)
        if abs(term) < _STOP_RTOL * abs(total):
            small_run += 1
            if small_run >= _STOP_RUN:
                return total - comp, 4 * _EPS * abs_total + abs(term), n, True
        else:
            small_run = 0
    # tail estimate from the current term ratio; the ratio tends to z from
    # below or above, so guard the geometric bound with the limit |z|
    q = max(abs(ratio), abs(z))
    tail = abs(term) * q / (1.0 - q) if q < 1 else math.inf
    return total - comp, tail + 4 * _EPS * abs_total, n, False


def gauss_2f1(a, b, c, z):
    """Gauss hypergeometric function 2F1(a, b; c; z) for real ``z <= 0``.

    Near the origin the defining series is summed directly.  For
    ``z < -1/2`` the Pfaff transformation

        2F1(a, b; c; z) = (1 - z)**(-a) * 2F1(a, c - b; c; z / (z - 1))

    maps the argument into [1/3, 1) where the series converges
    monotonically.

    Parameters
    ----------
    a, b, c : float
        Real parameters; ``c`` must not be a non-positive integer.
    z : float
        Non-positive argument.

    Returns
    -------
    EvalResult
        Value and an estimate of the absolute truncation plus rounding error.

    Raises
    ------
    DomainError
        If ``z > 0`` or ``c`` is a pole of the function.
    EvaluationError
        If the series does not reach the stopping rule within the term cap and
        its tail cannot be bounded.
    """
    a, b, c, z = float(a), float(b), float(c), float(z)
    if not all(math.isfinite(v) for v in (a, b, c, z)):
        raise DomainError("gauss_2f1 needs finite arguments")
    if z > 0:
        raise DomainError(f"gauss_2f1 is only implemented for z <= 0, got z={z}")
    if _is_nonpositive_integer(c):
        raise EvaluationError("c is a non-positive integer (pole of 2F1)", a=a, b=b, c=c, z=z)
    if z == 0.0:
        return EvalResult(1.0, 0.0, 0)

    if z >= _PFAFF_SWITCH:
        total, err, n, ok = _series(a, b, c, z)
        scale = 1.0
    else:
        w = z / (z - 1.0)
        total, err, n, ok = _series(a, c - b, c, w)
        scale = math.exp(-a * math.log1p(-z))
    if not math.isfinite(err):
        raise EvaluationError(
            "hypergeometric series did not converge within the term cap",
            a=a, b=b, c=c, z=z, terms=n,
        )
    value = scale * total
    if not math.isfinite(value):
        raise EvaluationError("2F1 value overflowed", a=a, b=b, c=c, z=z)
    return EvalResult(value, scale * err, n)
