"""
The heat kernel of exp(-tH) by its Bessel series and by the closed form
obtained from summing over the angular covering, the Mehler reference kernel
and the numerical checks of the Gaussian-type bounds.

All kernels are integral kernels against Lebesgue measure,
K(t; x, y) = sum_{k,m} exp(-t lambda_{k,m}) V~_{k,m}(x) conj(V~_{k,m}(y)),
and share the prefactor B0 / (4 pi sinh(t B0)).
"""
import cmath
import dataclasses
import enum
import logging
import math

import numba
import numpy as np
import scipy.integrate

from . import core
from . import propagators
from . import specfun
from . import spectrum

logger = logging.getLogger(__name__)

K_CAP = 4096
# Below this value of t * B0 the Bessel series needs O(1/t) terms.
SMALL_TIME = 1e-4
# The closed form integrand is cut where its log falls below log(tol) - 5.
TAIL_MARGIN = 5.0
EPS = np.finfo(float).eps


class KernelMethod(enum.Enum):
    SERIES = "series"
    CLOSED_FORM = "closed_form"
    MEHLER = "mehler"


@dataclasses.dataclass(frozen=True)
class KernelValue:
    value: complex
    method: KernelMethod
    abs_error_estimate: float

    def asdict(self):
        return {
            "re": self.value.real,
            "im": self.value.imag,
            "method": self.method.value,
            "abs_error_estimate": self.abs_error_estimate,
        }


@dataclasses.dataclass(frozen=True)
class PhaseFactor:
    value: complex

    def __post_init__(self):
        if abs(abs(self.value) - 1) > 1e-12:
            raise ValueError(f"Phase factor {self.value} is not of unit modulus")


def phase_factor(alpha, dtheta):
    """
    Returns the branch phase of the closed form for dtheta = theta1 - theta2
    in (-2 pi, 2 pi): 1 on |dtheta| <= pi and exp(+-2 pi i alpha) on the
    outer branches dtheta > pi and dtheta < -pi.
    """
    if dtheta > math.pi:
        return PhaseFactor(cmath.exp(2j * math.pi * alpha))
    if dtheta < -math.pi:
        return PhaseFactor(cmath.exp(-2j * math.pi * alpha))
    return PhaseFactor(1 + 0j)


@numba.njit
def _log_sinh(tau):
    if tau > 20.0:
        return tau - math.log(2.0) + math.log1p(-math.exp(-2.0 * tau))
    return math.log(math.sinh(tau))


@numba.njit
def _series_kernel(alpha, b0, t, r1, th1, r2, th2, tail_tol, k_cap):
    """
    Returns (re, im, abs_error, K) for the Bessel series of the heat kernel,
    summed over the blocks |k| <= K. K = -1 signals that the tail rule was
    not met within k_cap.

    The tail after block K is bounded with I_{nu+1}(z) / I_nu(z) <= z/(2(nu+1))
    and the monotonicity of I_nu in nu, separately for k > 0 and k < 0.
    """
    if r1 == 0.0 or r2 == 0.0:
        return 0.0, 0.0, 0.0, 0
    tau = t * b0
    log_sinh = _log_sinh(tau)
    z = math.exp(math.log(0.5 * b0 * r1 * r2) - log_sinh)
    # -B0 (r1^2 + r2^2) coth / 4 + z, rewritten without cancellation.
    log_pref = (
        math.log(b0 / (4 * math.pi))
        - log_sinh
        - alpha * tau
        - 0.25 * b0 * (r1 - r2) ** 2 / math.tanh(tau)
        - 0.5 * b0 * r1 * r2 * math.tanh(0.5 * tau)
    )
    dtheta = th1 - th2
    log_b, rel = specfun._log_bessel_i_scaled(alpha, z)
    t0 = math.exp(log_b)
    re = t0
    im = 0.0
    abs_sum = t0
    err = rel * t0
    for k in range(1, k_cap + 1):
        nu_p = k + alpha
        nu_m = k - alpha
        lp, rp = specfun._log_bessel_i_scaled(nu_p, z)
        lm, rm = specfun._log_bessel_i_scaled(nu_m, z)
        tp = math.exp(lp - k * tau)
        tm = math.exp(lm + k * tau)
        c = math.cos(k * dtheta)
        s = math.sin(k * dtheta)
        re += (tp + tm) * c
        im += (tp - tm) * s
        abs_sum += tp + tm
        err += rp * tp + rm * tm
        rho_p = math.exp(-tau) * min(1.0, z / (2.0 * (nu_p + 1.0)))
        rho_m = math.exp(tau) * z / (2.0 * (nu_m + 1.0))
        if rho_p < 1.0 and rho_m < 1.0:
            tail = tp * rho_p / (1.0 - rho_p) + tm * rho_m / (1.0 - rho_m)
            if tail <= tail_tol * abs_sum:
                # Rounding floor of the alternating k-sum.
                err += tail + 2.0 * EPS * (2 * k + 1) * abs_sum
                scale = math.exp(log_pref)
                return scale * re, scale * im, scale * err, k
    return 0.0, 0.0, np.inf, -1


@numba.njit
def _series_kernel_matrix(alpha, b0, t, r1, th1, r2, th2, tail_tol, k_cap, out, err):
    n_fail = 0
    for i in range(len(r1)):
        for j in range(len(r2)):
            re, im, e, k = _series_kernel(
                alpha, b0, t, r1[i], th1[i], r2[j], th2[j], tail_tol, k_cap
            )
            if k < 0:
                n_fail += 1
            out[i, j] = complex(re, im)
            err[i, j] = e
    return n_fail


def _check_time(t):
    if not t > 0:
        raise core.DomainError(f"t must be > 0, got {t}")


def heat_kernel_series(cfg, t, x, y, tail_tol=1e-14, k_cap=K_CAP):
    """
    Evaluates

        B0 e^{-alpha t B0} / (4 pi sinh(t B0)) e^{-B0 (r1^2 + r2^2) coth(t B0) / 4}
            sum_k e^{ik(theta1 - theta2 + i t B0)} I_{|k + alpha|}(z),

    with z = B0 r1 r2 / (2 sinh(t B0)), summing symmetric blocks in k until
    the tail bound falls below tail_tol relative to the sum of the moduli of
    the terms.
    """
    _check_time(t)
    if not tail_tol > 0:
        raise core.DomainError(f"tail_tol must be > 0, got {tail_tol}")
    re, im, err, k = _series_kernel(
        cfg.alpha, cfg.b0, t, x.r, x.theta, y.r, y.theta, tail_tol, k_cap
    )
    if k < 0:
        raise core.NonConvergenceError(
            f"Heat kernel series at t={t}, x={x}, y={y} not converged "
            f"for |k| <= {k_cap}"
        )
    logger.debug(f"Heat kernel series summed over |k| <= {k}")
    return KernelValue(complex(re, im), KernelMethod.SERIES, err)


def series_kernel_matrix(cfg, t, r1, theta1, r2, theta2, tail_tol=1e-14):
    """
    Returns (values, errors): the series kernel K(t; x_i, y_j) for the points
    x_i = (r1[i], theta1[i]) and y_j = (r2[j], theta2[j]), with the estimated
    absolute errors.
    """
    _check_time(t)
    r1, theta1, r2, theta2 = (
        np.ascontiguousarray(a, dtype=float) for a in (r1, theta1, r2, theta2)
    )
    out = np.empty((len(r1), len(r2)), dtype=complex)
    err = np.empty((len(r1), len(r2)))
    n_fail = _series_kernel_matrix(
        cfg.alpha, cfg.b0, t, r1, theta1, r2, theta2, tail_tol, K_CAP, out, err
    )
    if n_fail > 0:
        raise core.NonConvergenceError(
            f"Heat kernel series not converged at {n_fail} points (t={t})"
        )
    return out, err


def _bernoulli_part(w):
    # 1/w - 1/(e^w - 1), analytic at w = 0.
    if abs(w) < 1e-2:
        w2 = w * w
        return 0.5 - w / 12 + w * w2 / 720 - w * w2 * w2 / 30240
    return 1 / w - 1 / (cmath.exp(w) - 1)


def _find_cut(log_density, start, step, threshold, limit=1e6):
    """
    Returns the first point start + n * step (with step doubling) at which
    log_density falls below threshold.
    """
    s = start
    while log_density(s) > threshold:
        step *= 2
        s += step
        if abs(s) > limit:
            raise core.QuadratureError("Could not locate the integrand tail")
    return s


def _check_quad_vec(res, err, info, epsabs, epsrel, what):
    """
    Accepts quad_vec results that converged, or that stopped on roundoff
    (status 2) with an error estimate within ten times the target.
    """
    target = max(epsabs, epsrel * float(np.linalg.norm(res)))
    if info.status == 0:
        return
    if info.status == 2 and err <= 10 * target:
        logger.debug(f"{what}: roundoff at error {err:.2e} (target {target:.2e})")
        return
    raise core.QuadratureError(
        f"{what} did not converge (status {info.status}, error {err:.2e}, "
        f"target {target:.2e}, {info.intervals.shape[0]} intervals)"
    )


def _correction_integral(alpha, tau, z, dtheta, quad_tol, scale=1.0):
    """
    J = int_R g(sigma) / (1 - e^{sigma + i delta}) d sigma with
    g(sigma) = exp(-z (cosh(tau + sigma) - 1) + alpha sigma) and
    delta = (dtheta mod 2 pi) - pi, so that e^{i dtheta} = -e^{i delta}.

    For |delta| < 1 the near pole at sigma = -i delta is subtracted on
    |sigma| < 1 and integrated in closed form; at delta = 0 this is the
    principal value. The absolute target is quad_tol * scale, scale being
    the size of J at which the kernel is resolved. Returns (J, abs_error).
    """
    delta = math.fmod(dtheta, 2 * math.pi)
    if delta < 0:
        delta += 2 * math.pi
    delta -= math.pi

    def log_g(sigma):
        h = abs(0.5 * (tau + sigma))
        if h < 300:
            return -2 * z * math.sinh(h) ** 2 + alpha * sigma
        log_v = math.log(0.5 * z) + 2 * h
        return (-math.exp(log_v) if log_v < 700 else -math.inf) + alpha * sigma

    log_g0 = log_g(0.0)
    g0 = math.exp(log_g0)
    subtract = abs(delta) < 1

    def integrand(sigma):
        w = complex(sigma, delta)
        lg = log_g(sigma)
        if subtract and abs(sigma) < 1:
            # g B(w) + (g0 - g) / w
            value = math.exp(lg) * _bernoulli_part(w) - g0 * math.expm1(lg - log_g0) / w
        else:
            value = -math.exp(lg) / (cmath.exp(w) - 1)
        return np.array([value.real, value.imag])

    epsabs = max(quad_tol * scale, 1e-300)
    threshold = math.log(min(quad_tol * scale, quad_tol)) - TAIL_MARGIN

    def log_right(sigma):
        log_den = sigma if sigma > 30 else math.log(math.expm1(sigma))
        return log_g(sigma) - log_den

    right = _find_cut(log_right, 1.0, 1.0, threshold)
    left = _find_cut(log_g, min(-1.0, -tau - 1.0), -1.0, threshold)
    points = sorted({-1.0, 0.0, 1.0, -tau})
    points = [p for p in points if left < p < right]
    res, err, info = scipy.integrate.quad_vec(
        integrand,
        left,
        right,
        epsabs=epsabs,
        epsrel=quad_tol,
        points=points,
        limit=1 << 12,
        full_output=True,
    )
    _check_quad_vec(res, err, info, epsabs, quad_tol, "Correction integral")
    value = complex(res[0], res[1])
    if subtract and delta != 0:
        # int_{-1}^{1} d sigma / (sigma + i delta)
        value -= g0 * (-2j * math.atan(1 / delta))
    logger.debug(
        f"Correction integral on [{left:.2f}, {right:.2f}], "
        f"{info.intervals.shape[0]} intervals, error {err:.2e}"
    )
    return value, float(err) + math.exp(threshold) * (right - left)


def closed_form_kernel(alpha, b0, t, x, y, quad_tol=1e-12):
    """
    The closed form of the heat kernel for a bare flux value alpha in [0, 1):

        K = B0 / (4 pi sinh(t B0)) e^{-B0 (r1^2 + r2^2) coth(t B0) / 4} [
              e^{z cosh(t B0 - i dtheta)} e^{-i alpha dtheta} phi(dtheta)
              - (sin(alpha pi) / pi) int_R e^{-z cosh s} e^{alpha (s - t B0)}
                    / (e^{i dtheta} e^{s - t B0} + 1) ds ]

    with dtheta = theta1 - theta2 and phi the branch phase. On the jump line
    |dtheta| = pi the branch average cos(alpha pi) is used together with the
    principal value of the integral. At alpha = 0 this is the Mehler kernel.
    """
    _check_time(t)
    if not 0 <= alpha < 1:
        raise core.DomainError(f"alpha must lie in [0, 1), got {alpha}")
    if not b0 > 0:
        raise core.DomainError(f"b0 must be > 0, got {b0}")
    tau = t * b0
    r1, r2 = x.r, y.r
    if alpha > 0 and (r1 == 0 or r2 == 0):
        # The branch and correction terms cancel exactly at the solenoid.
        return KernelValue(0j, KernelMethod.CLOSED_FORM, 0.0)
    log_sinh = _log_sinh(tau)
    log_pref = math.log(b0 / (4 * math.pi)) - log_sinh
    z = 0.5 * b0 * r1 * r2 * math.exp(-log_sinh)
    dtheta = x.theta - y.theta
    dist_sq = r1**2 + r2**2 - 2 * r1 * r2 * math.cos(dtheta)
    main_mag = math.exp(log_pref - 0.25 * b0 * dist_sq / math.tanh(tau))
    main = main_mag * cmath.exp(-0.5j * b0 * r1 * r2 * math.sin(dtheta))
    if abs(abs(dtheta) - math.pi) == 0:
        main *= math.cos(alpha * math.pi)
    else:
        main *= cmath.exp(-1j * alpha * dtheta) * phase_factor(alpha, dtheta).value
    abs_error = 4 * EPS * main_mag
    value = main
    if alpha > 0:
        # Scale of the integrand: e^{-B0 (r1^2 + r2^2) coth / 4 - z}.
        log_scale = log_pref - 0.25 * b0 * (r1**2 + r2**2) / math.tanh(tau) - z
        factor = math.sin(alpha * math.pi) / math.pi * math.exp(log_scale)
        # J is needed to quad_tol relative to main_mag / factor.
        log_ratio = (
            0.5 * b0 * r1 * r2 * math.cos(dtheta) / math.tanh(tau)
            + z
            - math.log(math.sin(alpha * math.pi) / math.pi)
        )
        scale = math.exp(min(max(log_ratio, -700.0), 700.0))
        integral, err = _correction_integral(alpha, tau, z, dtheta, quad_tol, scale)
        value = main - factor * integral
        abs_error += factor * (err + 4 * EPS * abs(integral))
    return KernelValue(complex(value), KernelMethod.CLOSED_FORM, abs_error)


def heat_kernel_closed(cfg, t, x, y, quad_tol=1e-12):
    return closed_form_kernel(cfg.alpha, cfg.b0, t, x, y, quad_tol=quad_tol)


def mehler_kernel(b0, t, x, y):
    """
    Returns the heat kernel of the operator without flux,
    B0 / (4 pi sinh(B0 t)) exp(-B0 |x - y|^2 / (4 tanh(B0 t))
        + i B0 (x1 y2 - x2 y1) / 2).
    """
    _check_time(t)
    if not b0 > 0:
        raise core.DomainError(f"b0 must be > 0, got {b0}")
    tau = b0 * t
    x1, x2 = x.cartesian()
    y1, y2 = y.cartesian()
    dist_sq = (x1 - y1) ** 2 + (x2 - y2) ** 2
    log_mag = (
        math.log(b0 / (4 * math.pi))
        - _log_sinh(tau)
        - 0.25 * b0 * dist_sq / math.tanh(tau)
    )
    value = math.exp(log_mag) * cmath.exp(0.5j * b0 * (x1 * y2 - x2 * y1))
    return KernelValue(value, KernelMethod.MEHLER, 4 * EPS * abs(value))


def heat_kernel(cfg, t, x, y, method="auto", tail_tol=1e-14, quad_tol=1e-12):
    """
    Evaluates the heat kernel with the requested method. "auto" uses the
    closed form for t B0 < SMALL_TIME and otherwise the series, falling back
    to the closed form when cancellation in the k-sum leaves the series
    error above 1e-6 of the value.
    """
    method = KernelMethod(method) if method != "auto" else method
    if method == KernelMethod.SERIES and t * cfg.b0 < SMALL_TIME:
        logger.warning(
            f"t B0 = {t * cfg.b0:.2e} below {SMALL_TIME}; using the closed form"
        )
        method = KernelMethod.CLOSED_FORM
    if method == KernelMethod.CLOSED_FORM:
        return heat_kernel_closed(cfg, t, x, y, quad_tol=quad_tol)
    if method == KernelMethod.MEHLER:
        return mehler_kernel(cfg.b0, t, x, y)
    if method == KernelMethod.SERIES:
        return heat_kernel_series(cfg, t, x, y, tail_tol=tail_tol)
    if t * cfg.b0 < SMALL_TIME:
        return heat_kernel_closed(cfg, t, x, y, quad_tol=quad_tol)
    value = heat_kernel_series(cfg, t, x, y, tail_tol=tail_tol)
    if value.abs_error_estimate > 1e-6 * abs(value.value):
        logger.debug(f"Series cancellation at x={x}, y={y}; using the closed form")
        value = heat_kernel_closed(cfg, t, x, y, quad_tol=quad_tol)
    return value


def diamagnetic_ratio(cfg, t, x, y, quad_tol=1e-12):
    """
    Returns |K_{alpha,B0}(t; x, y)| / |K_{0,B0}(t; x, y)|.
    """
    k_alpha = heat_kernel_closed(cfg, t, x, y, quad_tol=quad_tol)
    k_zero = mehler_kernel(cfg.b0, t, x, y)
    return abs(k_alpha.value) / abs(k_zero.value)


class BoundKind(enum.Enum):
    SHARP = "sharp"
    RADIAL = "radial"
    FLAT = "flat"


def log_bound_envelope(cfg, t, x, y, which):
    """
    Returns the log of the selected envelope with constant 1:

    sharp:  B0 e^{-alpha t B0} / (4 pi sinh(t B0))
            * e^{-B0 |x - y|^2 / (4 tanh(t B0))}
    radial: B0 e^{(1 - alpha) t B0} / (4 pi sinh(t B0))
            * e^{-B0 (r1 - r2)^2 / (4 tanh(t B0))}
    flat:   t^{-1} e^{-|x - y|^2 / (4 t)}
    """
    which = BoundKind(which)
    tau = t * cfg.b0
    x1, x2 = x.cartesian()
    y1, y2 = y.cartesian()
    dist_sq = (x1 - y1) ** 2 + (x2 - y2) ** 2
    head = math.log(cfg.b0 / (4 * math.pi)) - _log_sinh(tau)
    if which == BoundKind.SHARP:
        return head - cfg.alpha * tau - 0.25 * cfg.b0 * dist_sq / math.tanh(tau)
    if which == BoundKind.RADIAL:
        return (
            head
            + (1 - cfg.alpha) * tau
            - 0.25 * cfg.b0 * (x.r - y.r) ** 2 / math.tanh(tau)
        )
    return -math.log(t) - 0.25 * dist_sq / t


def gaussian_bound_ratio(cfg, t, x, y, which, kernel=None):
    """
    Returns |K(t; x, y)| divided by the envelope selected by which.
    """
    _check_time(t)
    if kernel is None:
        kernel = heat_kernel(cfg, t, x, y)
    magnitude = abs(kernel.value)
    if magnitude == 0:
        return 0.0
    return math.exp(math.log(magnitude) - log_bound_envelope(cfg, t, x, y, which))


@dataclasses.dataclass(frozen=True)
class BoundFit:
    which: str
    constant: float
    argmax: dict
    n_points: int
    refine: int

    def asdict(self):
        return dataclasses.asdict(self)


def bound_grid(times, r_max, n_r, n_theta, refine=1):
    """
    Returns the (t, r1, r2, dtheta) evaluation grid. Refinement by an
    integer factor keeps the coarse points.
    """
    radii = np.linspace(0, r_max, (n_r - 1) * refine + 1)
    n = n_theta * refine
    dthetas = 2 * np.pi * np.arange(n) / n
    for t in times:
        for r1 in radii:
            for r2 in radii:
                for dtheta in dthetas:
                    yield float(t), float(r1), float(r2), float(dtheta)


def fit_bound_constant(cfg, which, times, r_max, n_r, n_theta, refine=1):
    """
    Returns the supremum of gaussian_bound_ratio over the bound grid, with
    x = (r1, dtheta) and y = (r2, 0).
    """
    which = BoundKind(which)
    best = 0.0
    argmax = None
    n_points = 0
    for t, r1, r2, dtheta in bound_grid(times, r_max, n_r, n_theta, refine):
        x = spectrum.PolarPoint(r1, dtheta)
        y = spectrum.PolarPoint(r2, 0.0)
        ratio = gaussian_bound_ratio(cfg, t, x, y, which)
        n_points += 1
        if ratio > best:
            best = ratio
            argmax = {"t": t, "r1": r1, "r2": r2, "dtheta": dtheta}
    logger.info(
        f"Fitted {which.value} bound constant {best:.6g} over {n_points} points"
    )
    return BoundFit(which.value, best, argmax, n_points, refine)


@dataclasses.dataclass(frozen=True)
class AnnularSector:
    """
    The set {r_min <= r <= r_max, theta_min <= theta <= theta_max}, angles
    taken modulo 2 pi. A full annulus has theta_max - theta_min = 2 pi.
    """

    r_min: float
    r_max: float
    theta_min: float = 0.0
    theta_max: float = 2 * math.pi

    def __post_init__(self):
        if not 0 <= self.r_min < self.r_max:
            raise core.DomainError(f"Invalid radial range [{self.r_min}, {self.r_max}]")
        width = self.theta_max - self.theta_min
        if not 0 < width <= 2 * math.pi:
            raise core.DomainError(f"Invalid angular range of width {width}")

    @property
    def width(self):
        return self.theta_max - self.theta_min

    @property
    def is_annulus(self):
        return self.width >= 2 * math.pi

    def contains(self, r, theta):
        r = np.asarray(r)
        offset = np.mod(np.asarray(theta) - self.theta_min, 2 * np.pi)
        inside = (r >= self.r_min) & (r <= self.r_max)
        if self.is_annulus:
            return inside
        return inside & (offset <= self.width)

    def bump(self):
        """
        Returns a C^1 bump supported in the sector,
        sin^2(pi (r - r_min) / (r_max - r_min)) sin^2(pi (theta - theta_min) / width),
        with the angular factor dropped for a full annulus.
        """

        def f(r, theta):
            r = np.asarray(r, dtype=float)
            radial = np.sin(np.pi * (r - self.r_min) / (self.r_max - self.r_min)) ** 2
            value = radial
            if not self.is_annulus:
                offset = np.mod(np.asarray(theta) - self.theta_min, 2 * np.pi)
                value = value * np.sin(np.pi * offset / self.width) ** 2
            return np.where(self.contains(r, theta), value, 0.0)

        return f

    def quadrature(self, n_r=12, n_theta=12):
        """
        Returns (r, theta, weights) of a Gauss-Legendre product rule on the
        sector, flattened, with weights including the area element r.
        """
        xr, wr = np.polynomial.legendre.leggauss(n_r)
        half_r = 0.5 * (self.r_max - self.r_min)
        r = self.r_min + half_r * (xr + 1)
        wr = half_r * wr * r
        if self.is_annulus:
            theta = 2 * np.pi * np.arange(n_theta) / n_theta
            wt = np.full(n_theta, 2 * np.pi / n_theta)
        else:
            xt, wt = np.polynomial.legendre.leggauss(n_theta)
            half_t = 0.5 * self.width
            theta = self.theta_min + half_t * (xt + 1)
            wt = half_t * wt
        R, T = np.meshgrid(r, theta, indexing="ij")
        W = np.outer(wr, wt)
        return R.ravel(), np.mod(T.ravel(), 2 * np.pi), W.ravel()


def _angular_gap(a, b):
    if a.is_annulus or b.is_annulus:
        return 0.0
    two_pi = 2 * math.pi

    def inside(theta, sector):
        return (theta - sector.theta_min) % two_pi <= sector.width

    if inside(a.theta_min, b) or inside(b.theta_min, a):
        return 0.0
    gap = math.inf
    for s in (a.theta_min, a.theta_max):
        for u in (b.theta_min, b.theta_max):
            d = abs(s - u) % two_pi
            gap = min(gap, d, two_pi - d)
    return gap


def sector_distance(a, b):
    """
    Returns the Euclidean distance between two annular sectors.

    For a fixed angular separation phi the squared distance
    r1^2 + r2^2 - 2 r1 r2 cos(phi) increases with phi on [0, pi], so phi is
    the smallest angular gap between the sectors. The remaining quadratic in
    (r1, r2) is convex with its minimum at the origin, so the constrained
    minimum lies on an edge of the radial rectangle, where the optimal
    partner radius is r cos(phi) clipped to the other range.
    """
    phi = _angular_gap(a, b)
    c = math.cos(phi)

    def dist_sq(r1, r2):
        return r1 * r1 + r2 * r2 - 2 * r1 * r2 * c

    candidates = []
    for r1 in (a.r_min, a.r_max):
        candidates.append(dist_sq(r1, min(max(r1 * c, b.r_min), b.r_max)))
    for r2 in (b.r_min, b.r_max):
        candidates.append(dist_sq(min(max(r2 * c, a.r_min), a.r_max), r2))
    return math.sqrt(max(0.0, min(candidates)))


@dataclasses.dataclass(frozen=True)
class DaviesGaffneyRecord:
    t: float
    distance: float
    lhs: float
    lhs_error: float
    rhs: float

    @property
    def holds(self):
        return self.lhs - self.lhs_error <= self.rhs

    @property
    def margin(self):
        return self.rhs - self.lhs

    def asdict(self):
        d = dataclasses.asdict(self)
        d["holds"] = self.holds
        d["margin"] = self.margin
        return d


def _sector_values(f, sector, r, theta):
    if isinstance(f, spectrum.StateCoeffs):
        values = spectrum.synthesize_values(f, r, theta)
    else:
        values = np.broadcast_to(np.asarray(f(r, theta), dtype=complex), r.shape)
    return np.where(sector.contains(r, theta), values, 0.0)


def _dg_pairing(cfg, t, f, g, set_a, set_b, n_r, n_theta):
    ra, ta, wa = set_a.quadrature(n_r, n_theta)
    rb, tb, wb = set_b.quadrature(n_r, n_theta)
    fv = _sector_values(f, set_a, ra, ta)
    gv = _sector_values(g, set_b, rb, tb)
    norm_f = math.sqrt(np.sum(wa * np.abs(fv) ** 2))
    norm_g = math.sqrt(np.sum(wb * np.abs(gv) ** 2))
    if norm_f == 0 or norm_g == 0:
        return 0.0, 0.0, norm_f, norm_g
    # <e^{-tH} f, g> = int int K(t; x, y) f(y) conj(g(x)) dy dx, x in B, y in A
    kernel, err = series_kernel_matrix(cfg, t, rb, tb, ra, ta)
    gw = np.conj(gv) * wb
    fw = fv * wa
    pairing = abs(gw @ kernel @ fw)
    series_error = float(np.abs(gw) @ err @ np.abs(fw))
    return float(pairing), series_error, norm_f, norm_g


def davies_gaffney_check(cfg, t, set_a, set_b, f=None, g=None, n_r=12, n_theta=12):
    """
    Compares lhs = |<e^{-tH} f, g>| with rhs = ||f||_{L2(A)} ||g||_{L2(B)}
    e^{-d(A, B)^2 / 4t}, for f restricted to A and g restricted to B. f and g
    are StateCoeffs or callables (r, theta) -> values; by default the
    sector bumps. The lhs is a product-rule quadrature of the series
    kernel. Its error estimate is the series error plus the change in lhs
    when both rules lose four nodes per direction.
    """
    _check_time(t)
    distance = sector_distance(set_a, set_b)
    if distance == 0:
        raise core.RegionOverlapError(f"Sectors {set_a} and {set_b} are not disjoint")
    f = set_a.bump() if f is None else f
    g = set_b.bump() if g is None else g
    lhs, series_error, norm_f, norm_g = _dg_pairing(
        cfg, t, f, g, set_a, set_b, n_r, n_theta
    )
    rhs = norm_f * norm_g * math.exp(-(distance**2) / (4 * t))
    if norm_f == 0 or norm_g == 0:
        return DaviesGaffneyRecord(t, distance, 0.0, 0.0, rhs)
    coarse, _, _, _ = _dg_pairing(
        cfg, t, f, g, set_a, set_b, max(n_r - 4, 2), max(n_theta - 4, 2)
    )
    lhs_error = series_error + abs(lhs - coarse)
    logger.debug(f"Davies-Gaffney at t={t}: lhs={lhs:.3e}, rhs={rhs:.3e}")
    return DaviesGaffneyRecord(t, distance, lhs, lhs_error, rhs)


def semigroup_residual(cfg, t, s, x, y, quad=None):
    """
    Returns |K(t+s; x, y) - int K(t; x, z) K(s; z, y) dz| / |K(t+s; x, y)|
    with the z-integral by the polar product rule of quad.
    """
    _check_time(t)
    _check_time(s)
    if quad is None:
        quad = spectrum.QuadratureSpec(
            order=16, panels=24, grading_levels=6, n_theta=256
        )
    spread = max(math.tanh(t * cfg.b0), math.tanh(s * cfg.b0))
    width = math.sqrt(4 * 45 * spread / cfg.b0)
    r_max = max(x.r, y.r) + width if quad.r_max is None else quad.r_max
    r, wr = quad.radial_rule(r_max)
    theta, wt = quad.angular_rule()
    R, T = np.meshgrid(r, theta, indexing="ij")
    W = np.outer(wr * r, wt).ravel()
    R, T = R.ravel(), T.ravel()
    k_xz, _ = series_kernel_matrix(cfg, t, [x.r], [x.theta], R, T)
    k_zy, _ = series_kernel_matrix(cfg, s, R, T, [y.r], [y.theta])
    convolved = np.sum(k_xz[0] * W * k_zy[:, 0])
    direct = heat_kernel(cfg, t + s, x, y).value
    residual = abs(direct - convolved) / abs(direct)
    logger.debug(f"Semigroup residual {residual:.2e} with {len(W)} nodes")
    return float(residual)


@dataclasses.dataclass(frozen=True)
class IdentityRecord:
    lhs: complex
    rhs: complex

    @property
    def abs_diff(self):
        return abs(self.lhs - self.rhs)

    def asdict(self):
        return {
            "lhs": {"re": self.lhs.real, "im": self.lhs.imag},
            "rhs": {"re": self.rhs.real, "im": self.rhs.imag},
            "abs_diff": self.abs_diff,
        }


def _complex_quad(func, a, b, quad_tol, epsabs, points=None):
    def vector(u):
        value = func(u)
        return np.array([value.real, value.imag])

    epsabs = max(epsabs, 1e-300)
    res, err, info = scipy.integrate.quad_vec(
        vector,
        a,
        b,
        epsabs=epsabs,
        epsrel=quad_tol,
        points=points,
        limit=1 << 14,
        full_output=True,
    )
    _check_quad_vec(res, err, info, epsabs, quad_tol, f"Quadrature on [{a}, {b}]")
    return complex(res[0], res[1]), float(err)


def bessel_identity_lhs(z, x, quad_tol=1e-10, k_cap=K_CAP):
    """
    Returns int_R e^{z k} I_{|k|}(x) dk by quadrature over the real order.

    The integrand is taken with the scaled e^{-x} I_{|k|}(x). Its absolute
    target is quad_tol times max(1, |e^{x cosh z}|) in unscaled units, but
    never below the rounding level of the integrand mass, which is about
    e^{x (cosh(Re z) - 1)}.
    """
    growth = abs(z.real)
    # I_nu(x) <= (x/2)^nu e^{x^2/4} / Gamma(nu + 1)
    cut = 1.0
    scale = min(x, 700.0)
    while (
        growth * cut
        + cut * math.log(0.5 * x)
        + 0.25 * x * x
        - specfun.log_gamma(cut + 1)
        > math.log(quad_tol) + scale - 10
    ):
        cut *= 1.25
        if cut > k_cap:
            raise core.NonConvergenceError(f"Order tail not bounded for x={x}, z={z}")

    def integrand(k):
        return cmath.exp(z * k) * specfun.bessel_i_scaled(abs(k), x).value

    log_size = max(0.0, x * cmath.cosh(z).real) - x
    log_mass = x * (math.cosh(z.real) - 1)
    epsabs = max(
        quad_tol * math.exp(max(log_size, -700.0)),
        64 * EPS * math.exp(min(log_mass, 700.0)),
    )
    value, _ = _complex_quad(integrand, -cut, cut, quad_tol, epsabs, points=[0.0])
    return math.exp(x) * value


def bessel_identity_rhs(z, x, quad_tol=1e-10):
    """
    Returns e^{x cosh z} H(pi - |Im z|) - int_R e^{-x cosh s} / ((z + s)^2 + pi^2) ds.
    """
    if abs(abs(z.imag) - math.pi) == 0:
        raise core.DomainError("|Im z| = pi lies on the jump line")
    cut = math.acosh(1 + (-math.log(quad_tol) + 20) / x)
    lo = min(-cut, -z.real - 1)
    hi = max(cut, -z.real + 1)

    def integrand(s):
        return math.exp(-x * (math.cosh(s) - 1)) / ((z + s) ** 2 + math.pi**2)

    integral, _ = _complex_quad(integrand, lo, hi, quad_tol, quad_tol, points=[-z.real])
    value = -math.exp(-x) * integral
    if abs(z.imag) < math.pi:
        value += cmath.exp(x * cmath.cosh(z))
    return value


def bessel_integral_identity_check(z, x, quad_tol=1e-10):
    """
    Evaluates both sides of

        int_R e^{z k} I_{|k|}(x) dk = e^{x cosh z} H(pi - |Im z|)
            + (1 / 2 pi i) int_R e^{-x cosh s} (1/(z + s + i pi) - 1/(z + s - i pi)) ds,

    the second integrand being -e^{-x cosh s} / ((z + s)^2 + pi^2) after
    combining the fractions.
    """
    z = complex(z)
    if not x > 0:
        raise core.DomainError(f"x must be > 0, got {x}")
    if abs(abs(z.imag) - math.pi) == 0:
        raise core.DomainError("|Im z| = pi lies on the jump line")
    return IdentityRecord(
        bessel_identity_lhs(z, x, quad_tol), bessel_identity_rhs(z, x, quad_tol)
    )


@dataclasses.dataclass(frozen=True)
class JumpRecord:
    eps: list
    differences: list
    extrapolated: float

    def asdict(self):
        return dataclasses.asdict(self)


def bessel_identity_jump(
    a, x, eps_seq=(1e-2, 1e-3, 1e-4), quad_tol=1e-10, side="lhs"
):
    """
    Checks continuity of one side of the identity across Im z = pi: returns
    the differences |F(a + i(pi - eps)) - F(a + i(pi + eps))| for eps in
    eps_seq and their Richardson extrapolation to eps = 0. F is the order
    integral for side="lhs"; for side="rhs" it is the right-hand side,
    whose Heaviside jump the correction integral must compensate.
    """
    sides = {"lhs": bessel_identity_lhs, "rhs": bessel_identity_rhs}
    if side not in sides:
        raise core.DomainError(f"side must be 'lhs' or 'rhs', got '{side}'")
    evaluate = sides[side]
    eps_seq = list(eps_seq)
    ratios = {eps_seq[i] / eps_seq[i + 1] for i in range(len(eps_seq) - 1)}
    if len(ratios) > 1 and not np.allclose(list(ratios), min(ratios)):
        raise core.DomainError("eps_seq must be geometric")
    diffs = []
    for eps in eps_seq:
        below = evaluate(complex(a, math.pi - eps), x, quad_tol)
        above = evaluate(complex(a, math.pi + eps), x, quad_tol)
        diffs.append(abs(below - above))
    step_ratio = eps_seq[0] / eps_seq[1] if len(eps_seq) > 1 else 1.0
    limit = propagators.richardson_limit(step_ratio, diffs)
    return JumpRecord(eps_seq, diffs, abs(limit))
