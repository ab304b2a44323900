"""
Evolution groups at the level of spectral coefficients, Littlewood-Paley
localization, spatial norms on polar grids and the subordination identities
that connect the heat semigroup to the Poisson and half-wave groups.
"""
import cmath
import dataclasses
import logging
import math

import numpy as np
import scipy.integrate

from . import core
from . import spectrum

logger = logging.getLogger(__name__)

# kernel_row reproduces the heat kernel series with this factor; the series
# prefactor B0 / (4 pi sinh(t B0)) is already that of the orthonormal
# expansion.
KERNEL_ROW_CONVENTION = 1.0


def _bump_exp(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    positive = u > 0
    out[positive] = np.exp(-1 / u[positive])
    return out


def smooth_step(lam):
    """
    psi(lam) = g(2 - lam) / (g(2 - lam) + g(lam - 1)) with g(u) = e^{-1/u} for
    u > 0: equal to 1 on lam <= 1 and 0 on lam >= 2.
    """
    lam = np.asarray(lam, dtype=float)
    a = _bump_exp(2 - lam)
    b = _bump_exp(lam - 1)
    return a / (a + b)


def default_profile(lam):
    """
    phi(lam) = psi(lam) - psi(2 lam), supported in [1/2, 2], with
    sum_j phi(2^{-j} lam) = 1 for lam > 0.
    """
    return smooth_step(lam) - smooth_step(2 * np.asarray(lam, dtype=float))


@dataclasses.dataclass(frozen=True)
class LPBump:
    j: int
    profile: object = default_profile

    def __call__(self, frequency):
        """
        Returns phi(2^{-j} frequency).
        """
        return self.profile(np.ldexp(np.asarray(frequency, dtype=float), -self.j))

    def support(self):
        return math.ldexp(0.5, self.j), math.ldexp(2.0, self.j)

    @staticmethod
    def scales(frequencies):
        """
        Returns the range of j whose bumps meet the positive frequencies given.
        """
        frequencies = np.asarray(frequencies, dtype=float)
        frequencies = frequencies[frequencies > 0]
        if len(frequencies) == 0:
            return range(0)
        lo = math.floor(math.log2(np.min(frequencies))) - 1
        hi = math.ceil(math.log2(np.max(frequencies))) + 1
        return range(lo, hi + 1)


def heat_evolve(state, t):
    return spectrum.apply_multiplier(state, lambda lam: np.exp(-t * lam))


def poisson_evolve(state, y):
    return spectrum.apply_multiplier(state, lambda lam: np.exp(-y * np.sqrt(lam)))


def schrodinger_evolve(state, t):
    """
    Multiplies the coefficients by exp(-i t lambda).
    """
    return spectrum.apply_multiplier(state, lambda lam: np.exp(-1j * t * lam))


def halfwave_evolve(state, t):
    """
    Multiplies the coefficients by exp(i t sqrt(lambda)).
    """
    return spectrum.apply_multiplier(state, lambda lam: np.exp(1j * t * np.sqrt(lam)))


def _check_wave_data(u0, u1):
    if u0.config != u1.config or u0.modes != u1.modes:
        raise ValueError("Wave data must share the field config and the mode window")


def wave_solution(cfg, u0, u1, t):
    """
    Returns the solution of u'' + H u = 0 with u(0) = u0, u'(0) = u1:
    a(t) = cos(t sqrt(lambda)) a0 + sin(t sqrt(lambda)) / sqrt(lambda) a1.
    """
    _check_wave_data(u0, u1)
    if u0.config != cfg:
        raise ValueError("Wave data config does not match")
    root = np.sqrt(u0.eigenvalues())
    coeffs = np.cos(t * root) * u0.coeffs + np.sin(t * root) / root * u1.coeffs
    return u0.with_coeffs(coeffs)


def wave_velocity(cfg, u0, u1, t):
    """
    Returns the time derivative of wave_solution.
    """
    _check_wave_data(u0, u1)
    root = np.sqrt(u0.eigenvalues())
    coeffs = -root * np.sin(t * root) * u0.coeffs + np.cos(t * root) * u1.coeffs
    return u0.with_coeffs(coeffs)


def wave_energy(cfg, u0, u1, t):
    """
    Returns sum lambda |a(t)|^2 + |a'(t)|^2.
    """
    a = wave_solution(cfg, u0, u1, t).coeffs
    da = wave_velocity(cfg, u0, u1, t).coeffs
    return float(np.sum(u0.eigenvalues() * np.abs(a) ** 2 + np.abs(da) ** 2))


def frequency_localize(state, bump):
    """
    Multiplies the coefficients by phi(2^{-j} sqrt(lambda)).
    """
    return spectrum.apply_multiplier(state, lambda lam: bump(np.sqrt(lam)))


def spectral_scales(state):
    """
    Returns the Littlewood-Paley scales meeting the frequencies of the
    nonzero coefficients of state.
    """
    lam = state.eigenvalues()[state.coeffs != 0]
    return LPBump.scales(np.sqrt(lam))


def kernel_row(cfg, modes, y0, multiplier):
    """
    Returns the state with coefficients F(lambda) conj(V~_{k,m}(y0)), whose
    synthesis is the kernel x -> F(H)(x, y0).
    """
    if y0.r == 0:
        # Every eigenfunction vanishes at the solenoid.
        return spectrum.StateCoeffs.zeros(cfg, modes)
    coeffs = np.empty(modes.shape, dtype=complex)
    r0 = np.array([y0.r])
    for i, k in enumerate(modes.k_values):
        profile = spectrum.radial_profiles(cfg, k, modes.m_max, r0)[:, 0]
        coeffs[i] = profile * np.exp(-1j * k * y0.theta)
    lam = spectrum.eigenvalue_grid(cfg, modes)
    factors = np.asarray(multiplier(lam))
    return spectrum.StateCoeffs(cfg, modes, KERNEL_ROW_CONVENTION * factors * coeffs)


def richardson_limit(step_ratio, values):
    """
    Extrapolates values computed at steps h, h/step_ratio, h/step_ratio^2, ...
    to h = 0, eliminating the error terms h, h^2, ... in turn.
    """
    n_steps = len(values)
    if n_steps == 1:
        return values[0]
    last_level = list(values)
    for m in range(1, n_steps):
        mult = step_ratio**m
        last_level = [
            (mult * last_level[i + 1] - last_level[i]) / (mult - 1.0)
            for i in range(n_steps - m)
        ]
    return last_level[0]


def richardson_table(step_ratio, values):
    """
    Returns the extrapolants richardson_limit(values[:n]) for n = 1..len(values).
    """
    return [richardson_limit(step_ratio, values[:n]) for n in range(1, len(values) + 1)]


@dataclasses.dataclass(frozen=True)
class SubordinationRecord:
    x: float
    y: float
    lhs: complex
    rhs: complex
    error_estimate: float = 0.0

    @property
    def abs_diff(self):
        return abs(self.lhs - self.rhs)

    def asdict(self):
        def encode(v):
            v = complex(v)
            return {"re": v.real, "im": v.imag}

        return {
            "x": self.x,
            "y": self.y,
            "lhs": encode(self.lhs),
            "rhs": encode(self.rhs),
            "abs_diff": self.abs_diff,
            "error_estimate": self.error_estimate,
        }


# scipy's quad rejects smaller relative tolerances when epsabs <= 0.
MIN_EPSREL = 1e-13


def _quad(func, a, b, quad_tol, epsabs=0.0, **kwargs):
    quad_tol = max(quad_tol, MIN_EPSREL)
    value, err = scipy.integrate.quad(
        func,
        a,
        b,
        epsabs=epsabs,
        epsrel=quad_tol,
        limit=200,
        full_output=True,
        **kwargs,
    )[:2]
    if err > 10 * max(quad_tol * abs(value), epsabs) and err > 1e-14:
        raise core.QuadratureError(
            f"Quadrature on [{a}, {b}] reached error {err:.2e} "
            f"(tolerance {quad_tol:.1e})"
        )
    return value, err


def subordination_heat_check(x, y, quad_tol=1e-12):
    """
    Checks

        e^{-y sqrt(x)} = (y / (2 sqrt(pi))) int_0^inf e^{-s x - y^2/(4s)} s^{-3/2} ds.

    With s = (y / (2 sqrt(x))) e^u the exponent becomes -y sqrt(x) cosh(u),
    and the right side is
    (y / (2 sqrt(pi))) s0^{-1/2} e^{-a} int_R e^{-u/2 - a (cosh(u) - 1)} du
    with a = y sqrt(x) and s0 = y / (2 sqrt(x)).
    """
    if not x > 0 or not y > 0:
        raise core.DomainError(f"x and y must be > 0, got x={x}, y={y}")
    a = y * math.sqrt(x)
    s0 = y / (2 * math.sqrt(x))

    def integrand(u):
        return math.exp(-0.5 * u - 2 * a * math.sinh(0.5 * u) ** 2)

    def log_density(u):
        return -0.5 * u - 2 * a * math.sinh(0.5 * u) ** 2

    threshold = math.log(quad_tol) - 10
    hi = 1.0
    while log_density(hi) > threshold:
        hi *= 1.5
    lo = -1.0
    while log_density(lo) > threshold:
        lo *= 1.5
    value, err = _quad(integrand, lo, hi, quad_tol * 1e-2, points=[0.0])
    factor = y / (2 * math.sqrt(math.pi)) / math.sqrt(s0) * math.exp(-a)
    return SubordinationRecord(x, y, math.exp(-a), factor * value, factor * err)


def _halfwave_density(w, x):
    """
    Returns h(w) = sum over the two branches rho(w) of w = x rho + 1/(4 rho)
    of rho^{-3/2} |d rho / d w|.
    """
    s = math.sqrt(max(w * w - x, 0.0))
    rho_plus = (w + s) / (2 * x)
    rho_minus = 1 / (4 * x * rho_plus)
    # |1 - w/s| = x / (s (s + w)), written without cancellation.
    d_plus = (1 + w / s) / (2 * x)
    d_minus = x / (s * (s + w)) / (2 * x)
    return rho_plus**-1.5 * d_plus + rho_minus**-1.5 * d_minus


def halfwave_regularized(x, t, eps, quad_tol=1e-10):
    """
    Returns the regularized subordination integral

        (sqrt(eps - i t) / (2 sqrt(pi)))
            * int_0^inf e^{-(eps - i t)(x rho + 1/(4 rho))} rho^{-3/2} d rho,

    which equals e^{-(eps - i t) sqrt(x)} for eps > 0 (and for eps = 0 as an
    oscillatory integral). The integral is taken in the phase variable
    w = x rho + 1/(4 rho) >= sqrt(x): near w = sqrt(x) with w = sqrt(x) + v^2,
    which removes the square-root singularity of the density, and on the
    tail with the Fourier-weighted rule for e^{itw}.
    """
    root = math.sqrt(x)
    split = root + 1.0

    def finite_part(v, part):
        w = root + v * v
        f = math.exp(-eps * w) * _halfwave_density(w, x) * 2 * v
        return f * (math.cos(t * w) if part == 0 else math.sin(t * w))

    v_max = math.sqrt(split - root)
    re_head, err_re = _quad(lambda v: finite_part(v, 0), 0.0, v_max, quad_tol, quad_tol)
    im_head, err_im = _quad(lambda v: finite_part(v, 1), 0.0, v_max, quad_tol, quad_tol)

    def tail(w):
        return math.exp(-eps * w) * _halfwave_density(w, x)

    re_tail, err_rt = _tail_quad(tail, split, t, "cos", quad_tol)
    im_tail, err_it = _tail_quad(tail, split, t, "sin", quad_tol)
    integral = complex(re_head + re_tail, im_head + im_tail)
    prefactor = cmath.sqrt(complex(eps, -t)) / (2 * math.sqrt(math.pi))
    error = abs(prefactor) * (err_re + err_im + err_rt + err_it)
    return prefactor * integral, error


def _tail_quad(func, a, omega, weight, quad_tol):
    if omega == 0:
        if weight == "sin":
            return 0.0, 0.0
        return _quad(func, a, np.inf, quad_tol, quad_tol)
    # QAWF works with the absolute tolerance only.
    value, err, _, *message = scipy.integrate.quad(
        func,
        a,
        np.inf,
        weight=weight,
        wvar=abs(omega),
        epsabs=quad_tol,
        limlst=200,
        full_output=True,
    )
    if message and err > 100 * quad_tol:
        raise core.QuadratureError(
            f"Fourier tail on [{a}, inf) reached error {err:.2e}: {message[0]}"
        )
    if weight == "sin" and omega < 0:
        value = -value
    return value, err


@dataclasses.dataclass(frozen=True)
class HalfwaveRecord:
    x: float
    t: float
    eps: list
    values: list
    lhs: complex
    rhs_extrapolated: complex

    @property
    def abs_diff(self):
        return abs(self.lhs - self.rhs_extrapolated)

    def asdict(self):
        def encode(v):
            return {"re": v.real, "im": v.imag}

        return {
            "x": self.x,
            "t": self.t,
            "eps": list(self.eps),
            "values": [encode(v) for v in self.values],
            "lhs": encode(self.lhs),
            "rhs_extrapolated": encode(self.rhs_extrapolated),
            "abs_diff": self.abs_diff,
        }


DEFAULT_EPS_SEQ = tuple(0.1 * 2.0**-n for n in range(6))


def subordination_halfwave_check(x, t, eps_seq=DEFAULT_EPS_SEQ, quad_tol=1e-10):
    """
    Checks e^{it sqrt(x)} = lim_{eps -> 0+} e^{-(eps - it) sqrt(x)}, the right
    side given by the regularized subordination integral at each eps and
    extrapolated to eps = 0. eps_seq must be geometric and decreasing.
    Negative t is handled through conjugation.
    """
    if not x > 0:
        raise core.DomainError(f"x must be > 0, got {x}")
    if t == 0:
        raise core.DomainError("t must be nonzero")
    if t < 0:
        record = subordination_halfwave_check(x, -t, eps_seq, quad_tol)
        return dataclasses.replace(
            record,
            t=t,
            values=[v.conjugate() for v in record.values],
            lhs=record.lhs.conjugate(),
            rhs_extrapolated=record.rhs_extrapolated.conjugate(),
        )
    eps_seq = list(eps_seq)
    if len(eps_seq) < 2 or any(b >= a for a, b in zip(eps_seq, eps_seq[1:])):
        raise core.DomainError("eps_seq must be decreasing with at least two entries")
    step_ratio = eps_seq[0] / eps_seq[1]
    if not np.allclose(np.array(eps_seq[:-1]) / np.array(eps_seq[1:]), step_ratio):
        raise core.DomainError("eps_seq must be geometric")
    values = [halfwave_regularized(x, t, eps, quad_tol)[0] for eps in eps_seq]
    table = richardson_table(step_ratio, values)
    steps = [abs(b - a) for a, b in zip(table[1:], table[2:])]
    floor = 100 * quad_tol
    if len(steps) >= 2 and steps[-1] > steps[-2] and steps[-1] > floor:
        raise core.NonConvergenceError(
            f"Richardson extrapolants do not contract at x={x}, t={t}: {steps}"
        )
    lhs = cmath.exp(1j * t * math.sqrt(x))
    logger.debug(f"Half-wave subordination at x={x}, t={t}: steps {steps}")
    return HalfwaveRecord(x, t, eps_seq, values, lhs, table[-1])


# Exterior values must stay below this fraction of the interior maximum.
BOUNDARY_RATIO = 1e-3
# Width in rho past the last turning point: e^{-TAIL_RHO / 4} is a
# hundredth of BOUNDARY_RATIO.
TAIL_RHO = 4 * math.log(100 / BOUNDARY_RATIO)


@dataclasses.dataclass(frozen=True)
class PolarGrid:
    """
    A polar product grid on the disk of radius r_max. Radial spacing is
    "sqrt" (midpoints equispaced in r^2, i.e. equal-area rings), "uniform"
    (midpoints equispaced in r) or "gauss" (Gauss-Legendre in r).
    """

    r_max: float
    n_r: int = 200
    n_theta: int = 256
    spacing: str = "sqrt"

    def __post_init__(self):
        if not self.r_max > 0:
            raise core.DomainError(f"r_max must be > 0, got {self.r_max}")
        if self.spacing not in ("sqrt", "uniform", "gauss"):
            raise core.DomainError(f"Unknown radial spacing '{self.spacing}'")

    @staticmethod
    def for_state(state, n_r=200, n_theta=256, spacing="sqrt", rtol=1e-10):
        """
        Returns a grid reaching past the outermost radial turning point of
        the modes whose coefficients exceed rtol times the largest one. In
        rho = B0 r^2 / 2 the profile of mode (k, m) turns at
        4m + 2|k + alpha| + 2 and decays at least like e^{-rho/4} beyond it;
        the grid adds TAIL_RHO to the largest turning point.
        """
        magnitude = np.abs(state.coeffs)
        significant = magnitude > rtol * np.max(magnitude)
        if not np.any(significant):
            significant = np.ones_like(significant)
        a = np.abs(state.modes.k_values + state.config.alpha)[:, np.newaxis]
        m = np.arange(state.modes.m_max + 1)[np.newaxis, :]
        rho_turn = np.broadcast_to(4 * m + 2 * a + 2, magnitude.shape)
        rho_max = float(np.max(rho_turn[significant])) + TAIL_RHO
        r_max = math.sqrt(2 * rho_max / state.config.b0)
        return PolarGrid(r_max, n_r, n_theta, spacing)

    def refined(self, factor=2):
        return dataclasses.replace(
            self, n_r=self.n_r * factor, n_theta=self.n_theta * factor
        )

    def radii(self):
        return self.radial_rule()[0]

    def angles(self):
        return 2 * np.pi * np.arange(self.n_theta) / self.n_theta

    def radial_rule(self):
        """
        Returns radial nodes and weights for integrals in r dr.
        """
        if self.spacing == "sqrt":
            du = self.r_max**2 / self.n_r
            u = du * (np.arange(self.n_r) + 0.5)
            return np.sqrt(u), np.full(self.n_r, du / 2)
        if self.spacing == "uniform":
            dr = self.r_max / self.n_r
            r = dr * (np.arange(self.n_r) + 0.5)
            return r, r * dr
        x, w = np.polynomial.legendre.leggauss(self.n_r)
        r = 0.5 * self.r_max * (x + 1)
        return r, 0.5 * self.r_max * w * r

    def weights(self):
        """
        Returns the area weights of the grid, of shape (n_r, n_theta).
        """
        _, wr = self.radial_rule()
        return np.outer(wr, np.full(self.n_theta, 2 * np.pi / self.n_theta))

    def values(self, state):
        return spectrum.synthesize_grid(state, self.radii(), self.angles())


@dataclasses.dataclass(frozen=True)
class SupNorm:
    value: float
    argmax: spectrum.PolarPoint

    def asdict(self):
        return {"value": self.value, "argmax": self.argmax.asdict()}


def _newton_refine(state, p, hr, ht, iterations=4):
    """
    Newton iteration for the maximum of |f|^2 starting at p, alternating
    between the radial and angular directions with central differences of
    steps hr and ht. Steps longer than four stencil widths are rejected.
    """

    def g(r, theta):
        return abs(spectrum.synthesize(state, spectrum.PolarPoint(r, theta))) ** 2

    r, th = p.r, p.theta
    for _ in range(iterations):
        moved = False
        for axis, h in ((0, hr), (1, ht)):
            if axis == 0 and r <= h:
                continue
            here = (r, th)
            plus = (r + h, th) if axis == 0 else (r, th + h)
            minus = (r - h, th) if axis == 0 else (r, th - h)
            g0, gp, gm = g(*here), g(*plus), g(*minus)
            curvature = (gp - 2 * g0 + gm) / h**2
            if not curvature < 0:
                continue
            step = -(gp - gm) / (2 * h) / curvature
            if abs(step) > 4 * h or (axis == 0 and r + step <= 0):
                continue
            if axis == 0:
                r += step
            else:
                th += step
            moved = moved or abs(step) > 1e-3 * h
        if not moved:
            break
    return spectrum.PolarPoint(r, th)


def sup_norm(state, grid=None):
    """
    Returns the maximum of |sum c V~| over the grid, refined by one Newton
    step around the coarse argmax. Raises GridTooSmallError if the outer
    ring carries values above BOUNDARY_RATIO of the maximum.
    """
    if state.is_zero():
        return SupNorm(0.0, spectrum.PolarPoint(0.0, 0.0))
    grid = PolarGrid.for_state(state) if grid is None else grid
    r = grid.radii()
    theta = grid.angles()
    magnitude = np.abs(grid.values(state))
    i, j = np.unravel_index(np.argmax(magnitude), magnitude.shape)
    peak = float(magnitude[i, j])
    outer = float(np.max(magnitude[-1]))
    if outer > BOUNDARY_RATIO * peak:
        raise core.GridTooSmallError(
            f"Values on the outer ring r={r[-1]:.3f} reach {outer / peak:.2e} of the "
            f"maximum; enlarge r_max={grid.r_max:.3f}"
        )
    coarse = spectrum.PolarPoint(float(r[i]), float(theta[j]))
    hr = 0.25 * (r[min(i + 1, len(r) - 1)] - r[max(i - 1, 0)]) / 2
    ht = 0.25 * (2 * np.pi / grid.n_theta)
    refined = _newton_refine(state, coarse, hr, ht)
    value = abs(spectrum.synthesize(state, refined))
    if value > peak:
        return SupNorm(value, refined)
    return SupNorm(peak, coarse)


def lp_norm(state, p, grid=None):
    """
    Returns the L^p norm of the synthesized function by the polar rule of
    grid; p = inf delegates to sup_norm.
    """
    if p == np.inf:
        return sup_norm(state, grid).value
    if not p >= 1:
        raise core.DomainError(f"p must be >= 1, got {p}")
    if state.is_zero():
        return 0.0
    grid = PolarGrid.for_state(state) if grid is None else grid
    values = np.abs(grid.values(state))
    return float(np.sum(grid.weights() * values**p) ** (1 / p))
