"""
Special functions: Gamma, Pochhammer symbols, generalized Laguerre
polynomials and the modified Bessel function of the first kind I_nu(x) of
arbitrary real order.

The inner loops are compiled with numba; the public functions validate
their arguments and wrap the compiled kernels.
"""
import dataclasses
import logging
import math

import numba
import numpy as np

from . import core

logger = logging.getLogger(__name__)

# Lanczos approximation with g=7 and nine coefficients.
LANCZOS_G = 7.0
LANCZOS_COEFFS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
SQRT_2PI = math.sqrt(2 * math.pi)
LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)
LN10 = math.log(10)

# Largest x with exp(x) finite.
LOG_MAX_FLOAT = 709.782712893384
GAMMA_MAX_ARG = 171.62

SERIES_RTOL = 1e-17
MAX_SERIES_TERMS = 100_000
# Nats of cancellation we accept in the integral representation before
# falling back to the (always positive) ascending series.
CANCELLATION_LIMIT = 7.0
# The integrands are cut where they fall below exp(-TAIL_NATS) of their peak.
TAIL_NATS = 45.0

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_GL_NODES_LOW, _GL_WEIGHTS_LOW = np.polynomial.legendre.leggauss(16)


@dataclasses.dataclass(frozen=True)
class EvalResult:
    value: float
    abs_error_estimate: float

    def asdict(self):
        value = self.value
        if isinstance(value, complex):
            value = {"re": value.real, "im": value.imag}
        return {"value": value, "abs_error_estimate": self.abs_error_estimate}


@numba.njit
def _lanczos_sum(x):
    a = LANCZOS_COEFFS[0]
    for i in range(1, len(LANCZOS_COEFFS)):
        a += LANCZOS_COEFFS[i] / (x + i)
    return a


@numba.njit
def _log_gamma_upper(x):
    # Valid for x >= 0.5
    x -= 1.0
    t = x + LANCZOS_G + 0.5
    return LOG_SQRT_2PI + (x + 0.5) * math.log(t) - t + math.log(_lanczos_sum(x))


@numba.njit
def _log_gamma(x):
    if x < 0.5:
        return math.log(math.pi / math.sin(math.pi * x)) - _log_gamma_upper(1.0 - x)
    return _log_gamma_upper(x)


@numba.njit
def _gamma_upper(x):
    x -= 1.0
    t = x + LANCZOS_G + 0.5
    # Split the power so that t ** (x + 0.5) does not overflow near x = 171.
    p = t ** ((x + 0.5) / 2)
    return SQRT_2PI * p * (p * math.exp(-t)) * _lanczos_sum(x)


@numba.njit
def _gamma(x):
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * _gamma_upper(1.0 - x))
    return _gamma_upper(x)


def _check_positive(name, x):
    if not x > 0:
        raise core.DomainError(f"{name} must be > 0, got {x}")


def gamma_fn(x):
    """
    Returns Gamma(x) for x > 0.
    """
    _check_positive("x", x)
    if x > GAMMA_MAX_ARG:
        raise core.BesselOverflowError(f"Gamma({x}) is not representable")
    return _gamma(float(x))


def log_gamma(x):
    """
    Returns log(Gamma(x)) for x > 0.
    """
    _check_positive("x", x)
    return _log_gamma(float(x))


def pochhammer(a, n):
    """
    Returns the rising factorial (a)_n = a(a+1)...(a+n-1), with (a)_0 = 1.
    """
    if n < 0 or int(n) != n:
        raise core.DomainError(f"n must be a nonnegative integer, got {n}")
    result = 1.0
    for j in range(int(n)):
        result *= a + j
    return result


@numba.njit
def _laguerre(order, degree, x):
    if degree == 0:
        return 1.0
    prev = 1.0
    cur = 1.0 + order - x
    for n in range(1, degree):
        nxt = ((2 * n + 1 + order - x) * cur - (n + order) * prev) / (n + 1)
        prev = cur
        cur = nxt
    return cur


@numba.njit
def _pkm_poly(alpha_k, degree, x):
    # L^a_m(x) / binom(m + a, m) satisfies the same three-term recurrence
    # with rescaled coefficients, so the binomial is never formed.
    if degree == 0:
        return 1.0
    prev = 1.0
    cur = 1.0 - x / (1.0 + alpha_k)
    for m in range(1, degree):
        nxt = ((2 * m + 1 + alpha_k - x) * cur - m * prev) / (m + 1 + alpha_k)
        prev = cur
        cur = nxt
    return cur


@numba.njit
def _normalized_laguerre(a, m_max, x, log_scale, out):
    """
    Fills out[m] = exp(log_scale) * sqrt(m! / Gamma(m + a + 1)) * L^a_m(x)
    for m = 0..m_max using the recurrence of the normalized family, which
    needs no Gamma ratio for large m. The recurrence runs on a rescaled
    copy so that a start value below the double range does not flush the
    later, larger entries to zero.
    """
    log_acc = log_scale - 0.5 * _log_gamma(a + 1.0)
    prev = 0.0
    cur = 1.0
    out[0] = math.exp(log_acc)
    for m in range(m_max):
        nxt = (
            (2 * m + 1 + a - x) * cur - math.sqrt(m * (m + a)) * prev
        ) / math.sqrt((m + 1) * (m + 1 + a))
        prev = cur
        cur = nxt
        if abs(cur) > 1e100:
            cur *= 1e-100
            prev *= 1e-100
            log_acc += 100 * LN10
        out[m + 1] = cur * math.exp(log_acc) if log_acc > -745.0 else 0.0


def _check_laguerre_args(order, degree, x):
    if not order > -1:
        raise core.DomainError(f"Laguerre order must be > -1, got {order}")
    if degree < 0 or int(degree) != degree:
        raise core.DomainError(f"degree must be a nonnegative integer, got {degree}")
    if x < 0:
        raise core.DomainError(f"x must be >= 0, got {x}")


def laguerre(order, degree, x):
    """
    Returns the generalized Laguerre polynomial L^order_degree(x), evaluated
    by upward recurrence in the degree.
    """
    _check_laguerre_args(order, degree, x)
    return _laguerre(float(order), int(degree), float(x))


def pkm_poly(alpha_k, degree, r):
    """
    Returns the radial polynomial P_{k,m}(r) = binom(m + alpha_k, m)^{-1}
    L^{alpha_k}_m(r) of the eigenfunctions, where alpha_k = |k + alpha|.
    """
    _check_laguerre_args(alpha_k, degree, r)
    return _pkm_poly(float(alpha_k), int(degree), float(r))


def pkm_poly_direct(alpha_k, degree, r):
    """
    The explicit hypergeometric sum sum_n (-m)_n / (1 + alpha_k)_n r^n / n!.
    Cancels catastrophically for large degree; kept as an oracle.
    """
    _check_laguerre_args(alpha_k, degree, r)
    total = 0.0
    term = 1.0
    for n in range(int(degree) + 1):
        total += term
        term *= (n - degree) / (1 + alpha_k + n) * r / (n + 1)
    return total


@numba.njit
def _log_bessel_i_series(nu, x):
    """
    Returns log(exp(-x) I_nu(x)) from the ascending series, and the size of
    the last term added relative to the sum.
    """
    if x == 0.0:
        if nu == 0.0:
            return 0.0, 0.0
        return -np.inf, 0.0
    half = 0.5 * x
    log_scale = nu * math.log(half) - _log_gamma(nu + 1.0) - x
    q = half * half
    total = 1.0
    term = 1.0
    small = 0
    n = 0
    while n < MAX_SERIES_TERMS:
        n += 1
        term *= q / (n * (n + nu))
        total += term
        if term < SERIES_RTOL * total:
            small += 1
            if small == 3:
                break
        else:
            small = 0
        if total > 1e280:
            total *= 1e-280
            term *= 1e-280
            log_scale += 280 * LN10
    return log_scale + math.log(total), term / total


@numba.njit
def _gl_panels(func_kind, nu, x, a, b, n_panels, nodes, weights):
    h = (b - a) / n_panels
    total = 0.0
    for p in range(n_panels):
        left = a + p * h
        for j in range(len(nodes)):
            s = left + 0.5 * h * (nodes[j] + 1.0)
            if func_kind == 0:
                f = math.exp(x * (math.cos(s) - 1.0)) * math.cos(nu * s)
            else:
                f = math.exp(-x * (math.cosh(s) - 1.0) - nu * s)
            total += weights[j] * f
    return 0.5 * h * total


@numba.njit
def _log_bessel_i_integral(nu, x):
    """
    log(exp(-x) I_nu(x)) from the integral representation
    (1/pi) int_0^pi e^{x cos s} cos(nu s) ds
        - (sin(nu pi) / pi) int_0^inf e^{-x cosh s - nu s} ds,
    with x > 0. Returns the log value and a relative error estimate from
    two Gauss-Legendre orders.
    """
    if 2.0 * x <= TAIL_NATS:
        s1 = math.pi
    else:
        s1 = math.acos(1.0 - TAIL_NATS / x)
    h = min(0.5, 1.0 / math.sqrt(x), 1.5 / (nu + 1.0))
    n1 = int(math.ceil(s1 / h))
    first = _gl_panels(0, nu, x, 0.0, s1, n1, _GL_NODES, _GL_WEIGHTS) / math.pi
    first_low = (
        _gl_panels(0, nu, x, 0.0, s1, n1, _GL_NODES_LOW, _GL_WEIGHTS_LOW) / math.pi
    )

    sin_term = math.sin(nu * math.pi) / math.pi
    second = 0.0
    second_low = 0.0
    if sin_term != 0.0:
        s2 = 0.5
        while x * (math.cosh(s2) - 1.0) + nu * s2 < TAIL_NATS and s2 < 50.0:
            s2 *= 1.5
        n2 = int(math.ceil(s2 / min(0.5, s2 / 8.0)))
        # The second integral carries an extra factor exp(-2x) after scaling.
        damp = math.exp(-2.0 * x)
        second = damp * _gl_panels(1, nu, x, 0.0, s2, n2, _GL_NODES, _GL_WEIGHTS)
        second_low = damp * _gl_panels(
            1, nu, x, 0.0, s2, n2, _GL_NODES_LOW, _GL_WEIGHTS_LOW
        )
    value = first - sin_term * second
    value_low = first_low - sin_term * second_low
    if value <= 0.0:
        return -np.inf, np.inf
    err = abs(value - value_low) + 1e-15 * (abs(first) + abs(sin_term * second))
    return math.log(value), err / value


@numba.njit
def _use_series(nu, x):
    return x <= max(30.0, 2.0 * nu) or nu * nu > 2.0 * CANCELLATION_LIMIT * x


@numba.njit
def _log_bessel_i_scaled(nu, x):
    if _use_series(nu, x):
        return _log_bessel_i_series(nu, x)
    return _log_bessel_i_integral(nu, x)


def _check_bessel_args(nu, x):
    if nu < 0:
        raise core.DomainError(f"Bessel order must be >= 0, got {nu}")
    if x < 0:
        raise core.DomainError(f"Bessel argument must be >= 0, got {x}")


def _finish(log_value, rel_err):
    if log_value == -np.inf:
        return EvalResult(0.0, 0.0)
    value = math.exp(log_value)
    return EvalResult(value, value * (rel_err + 4 * np.finfo(float).eps))


def bessel_i(nu, x):
    """
    Returns I_nu(x) for real nu >= 0, x >= 0 as an EvalResult. Raises
    BesselOverflowError when the value exceeds the double range; use
    bessel_i_scaled for large arguments.
    """
    _check_bessel_args(nu, x)
    log_scaled, rel_err = _log_bessel_i_scaled(float(nu), float(x))
    log_value = log_scaled + x
    if log_value > LOG_MAX_FLOAT:
        raise core.BesselOverflowError(
            f"I_{nu}({x}) = exp({log_value:.2f}) overflows double precision"
        )
    return _finish(log_value, rel_err)


def bessel_i_scaled(nu, x):
    """
    Returns exp(-x) I_nu(x) as an EvalResult.
    """
    _check_bessel_args(nu, x)
    return _finish(*_log_bessel_i_scaled(float(nu), float(x)))


def bessel_i_integral(nu, x):
    """
    Returns I_nu(x) computed from its integral representation regardless of
    the regime, as an independent check on bessel_i.
    """
    _check_bessel_args(nu, x)
    if x == 0:
        return bessel_i(nu, x)
    log_scaled, rel_err = _log_bessel_i_integral(float(nu), float(x))
    log_value = log_scaled + x
    if log_value > LOG_MAX_FLOAT:
        raise core.BesselOverflowError(f"I_{nu}({x}) overflows double precision")
    return _finish(log_value, rel_err)


def bessel_generating_sum(z, t, tol=1e-17, k_cap=4096):
    """
    Returns (partial_sum, K) for sum_{|k| <= K} e^{kt} I_{|k|}(z), with K the
    first block after which both tail ratios are below one and the next
    terms are below tol relative to the partial sum. The partial sum
    converges to e^{z cosh t}.
    """
    _check_bessel_args(0, z)
    total = bessel_i(0, z).value
    for k in range(1, k_cap + 1):
        ik = bessel_i(k, z).value
        pos = math.exp(k * t) * ik
        neg = math.exp(-k * t) * ik
        total += pos + neg
        # I_{k+1}(z) / I_k(z) <= z / (2(k+1))
        ratio = math.exp(abs(t)) * z / (2 * (k + 1))
        if ratio < 1 and (pos + neg) * ratio / (1 - ratio) < tol * total:
            return total, k
    raise core.NonConvergenceError(f"Generating sum at z={z}, t={t} did not converge")


def laguerre_poisson_kernel(order, x, y, w, tol=1e-16, m_cap=1 << 16):
    """
    Evaluates both sides of the Poisson kernel identity

        sum_m w^m m!/Gamma(m+a+1) L^a_m(x) L^a_m(y)
            = (xyw)^{-a/2} e^{-(x+y)w/(1-w)} I_a(2 sqrt(xyw)/(1-w)) / (1-w)

    for 0 < w < 1 and x, y > 0. Returns (series, closed).
    """
    _check_laguerre_args(order, 0, min(x, y))
    if not 0 < w < 1:
        raise core.DomainError(f"w must lie in (0, 1), got {w}")
    if x == 0 or y == 0:
        raise core.DomainError("x and y must be > 0")
    m_max = 64
    while True:
        lx = np.empty(m_max + 1)
        ly = np.empty(m_max + 1)
        _normalized_laguerre(float(order), m_max, float(x), 0.0, lx)
        _normalized_laguerre(float(order), m_max, float(y), 0.0, ly)
        terms = w ** np.arange(m_max + 1) * lx * ly
        series = np.sum(terms)
        if np.all(np.abs(terms[-5:]) < tol * abs(series)):
            break
        if m_max >= m_cap:
            raise core.NonConvergenceError(
                "Laguerre Poisson kernel series did not converge"
            )
        m_max *= 2
    arg = 2 * math.sqrt(x * y * w) / (1 - w)
    log_closed = (
        -0.5 * order * math.log(x * y * w)
        - (x + y) * w / (1 - w)
        - math.log(1 - w)
        + arg
        + math.log(bessel_i_scaled(order, arg).value)
    )
    return float(series), math.exp(log_closed)
