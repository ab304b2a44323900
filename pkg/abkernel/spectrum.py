"""
Exact spectral data of the Aharonov-Bohm operator with uniform field,
H = -(nabla + i A)^2 with A = alpha (-x2, x1)/|x|^2 + (B0/2)(-x2, x1).

Eigenfunctions are labelled by (k, m) with k the angular index and m >= 0
the radial index; states are stored as dense coefficient arrays over a
rectangular window of modes.
"""
import dataclasses
import logging
import math

import numba
import numpy as np

from . import core
from . import specfun

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi


@dataclasses.dataclass(frozen=True)
class FieldConfig:
    alpha: float
    b0: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise core.DomainError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not self.b0 > 0:
            raise core.DomainError(f"b0 must be > 0, got {self.b0}")

    @staticmethod
    def normalized(alpha, b0):
        """
        Returns (config, message) where alpha has been reduced modulo one.
        The message describes the normalization and is None if alpha was
        already in (0, 1). Integer alpha is rejected.
        """
        reduced = alpha - math.floor(alpha)
        if reduced == 0:
            raise core.DomainError(
                f"alpha must not be an integer, got {alpha} (flux-free gauge)"
            )
        message = None
        if reduced != alpha:
            message = f"alpha normalized from {alpha} to {reduced}"
            logger.warning(message)
        return FieldConfig(reduced, b0), message

    def alpha_k(self, k):
        return abs(k + self.alpha)

    def asdict(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class ModeIndex:
    k: int
    m: int

    def __post_init__(self):
        if self.m < 0:
            raise core.DomainError(f"radial index m must be >= 0, got {self.m}")


@dataclasses.dataclass(frozen=True)
class ModeSet:
    k_min: int
    k_max: int
    m_max: int

    def __post_init__(self):
        if self.k_min > self.k_max:
            raise core.DomainError(f"k_min={self.k_min} > k_max={self.k_max}")
        if self.m_max < 0:
            raise core.DomainError(f"m_max must be >= 0, got {self.m_max}")

    @staticmethod
    def default():
        return ModeSet(**core.DEFAULTS["modes"])

    @property
    def k_values(self):
        return np.arange(self.k_min, self.k_max + 1)

    @property
    def shape(self):
        return (self.k_max - self.k_min + 1, self.m_max + 1)

    def __len__(self):
        return self.shape[0] * self.shape[1]

    def __iter__(self):
        for k in range(self.k_min, self.k_max + 1):
            for m in range(self.m_max + 1):
                yield ModeIndex(k, m)

    def __contains__(self, mode):
        return self.k_min <= mode.k <= self.k_max and 0 <= mode.m <= self.m_max

    def position(self, mode):
        if mode not in self:
            raise KeyError(f"{mode} is outside {self}")
        return mode.k - self.k_min, mode.m

    @staticmethod
    def for_band(cfg, lam_max, y0, rtol=1e-14, k_cap=4096):
        """
        Returns the smallest window holding every mode with eigenvalue
        <= lam_max whose normalized eigenfunction at y0 is not negligible
        (relative to the largest such value).
        """
        if y0.r == 0:
            raise core.DomainError("Every eigenfunction vanishes at the origin")
        m_max = math.floor((lam_max / cfg.b0 - 1) / 2)
        if m_max < 0:
            raise core.DomainError(f"No eigenvalue below {lam_max} for b0={cfg.b0}")
        r0 = np.array([y0.r])
        largest = 0.0
        bounds = []
        for direction in (1, -1):
            k = 0 if direction == 1 else -1
            quiet = 0
            last = k
            while abs(k) <= k_cap:
                lam = eigenvalue_grid(cfg, ModeSet(k, k, m_max))[0]
                keep = lam <= lam_max
                if not np.any(keep):
                    break
                values = np.abs(radial_profiles(cfg, k, m_max, r0)[keep, 0])
                peak = np.max(values)
                largest = max(largest, peak)
                if peak < rtol * largest:
                    quiet += 1
                    if quiet == 8:
                        break
                else:
                    quiet = 0
                    last = k
                k += direction
            bounds.append(last)
        modes = ModeSet(bounds[1], bounds[0], m_max)
        logger.info(f"Mode window for lambda <= {lam_max} at r={y0.r}: {modes}")
        return modes


@dataclasses.dataclass(frozen=True)
class PolarPoint:
    r: float
    theta: float = 0.0

    def __post_init__(self):
        if not self.r >= 0:
            raise core.DomainError(f"radius must be >= 0, got {self.r}")
        object.__setattr__(self, "theta", float(self.theta) % TWO_PI)

    @staticmethod
    def from_cartesian(x1, x2):
        return PolarPoint(math.hypot(x1, x2), math.atan2(x2, x1))

    @staticmethod
    def parse(text):
        """
        Parses "r,theta".
        """
        try:
            r, theta = (float(v) for v in text.split(","))
        except ValueError:
            raise core.DomainError(f"Cannot parse polar point '{text}'; use r,theta")
        return PolarPoint(r, theta)

    def cartesian(self):
        return self.r * math.cos(self.theta), self.r * math.sin(self.theta)

    def asdict(self):
        return {"r": self.r, "theta": self.theta}


@dataclasses.dataclass(frozen=True, eq=False)
class StateCoeffs:
    """
    Coefficients c_{k,m} against the normalized eigenbasis. The array has
    shape modes.shape, row i holding k = modes.k_min + i.
    """

    config: FieldConfig
    modes: ModeSet
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=complex)
        if coeffs.shape != self.modes.shape:
            raise ValueError(
                f"Coefficient array shape {coeffs.shape} does not match "
                f"modes {self.modes.shape}"
            )
        coeffs.flags.writeable = False
        object.__setattr__(self, "coeffs", coeffs)

    @staticmethod
    def zeros(cfg, modes):
        return StateCoeffs(cfg, modes, np.zeros(modes.shape, dtype=complex))

    @staticmethod
    def from_dict(cfg, modes, mapping):
        coeffs = np.zeros(modes.shape, dtype=complex)
        for mode, value in mapping.items():
            coeffs[modes.position(mode)] = value
        return StateCoeffs(cfg, modes, coeffs)

    @staticmethod
    def single(cfg, modes, mode, value=1.0):
        return StateCoeffs.from_dict(cfg, modes, {mode: value})

    def __getitem__(self, mode):
        if mode not in self.modes:
            return 0j
        return self.coeffs[self.modes.position(mode)]

    def to_dict(self, threshold=0.0):
        d = {}
        for i, m in zip(*np.nonzero(np.abs(self.coeffs) > threshold)):
            d[ModeIndex(int(self.modes.k_min + i), int(m))] = complex(self.coeffs[i, m])
        return d

    def with_coeffs(self, coeffs):
        return StateCoeffs(self.config, self.modes, coeffs)

    def scaled(self, c):
        return self.with_coeffs(c * self.coeffs)

    def _check_compatible(self, other):
        if other.config != self.config or other.modes != self.modes:
            raise ValueError("States must share their field config and mode window")

    def __add__(self, other):
        self._check_compatible(other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check_compatible(other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def eigenvalues(self):
        return eigenvalue_grid(self.config, self.modes)

    def l2_norm(self):
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def is_zero(self):
        return not np.any(self.coeffs)


@dataclasses.dataclass(frozen=True)
class QuadratureSpec:
    """
    Polar product rule: composite Gauss-Legendre in r on panels that are
    geometrically graded towards the origin, trapezoid rule in theta.
    """

    order: int = 16
    panels: int = 48
    grading_levels: int = 12
    grading_ratio: float = 0.2
    n_theta: int = 256
    tol: float = 1e-8
    r_max: float = None

    @staticmethod
    def from_config(config):
        return QuadratureSpec(**config["quadrature"])

    def refined(self, factor=2):
        return dataclasses.replace(
            self, panels=self.panels * factor, n_theta=self.n_theta * factor
        )

    def coarse(self):
        return dataclasses.replace(
            self, order=max(4, self.order - 4), n_theta=self.n_theta // 2
        )

    def radial_rule(self, r_max, r_min=0.0):
        """
        Returns nodes and weights for integrals over [r_min, r_max] in dr.
        Grading is applied only when r_min is 0.
        """
        width = (r_max - r_min) / self.panels
        edges = r_min + width * np.arange(self.panels + 1)
        if r_min == 0:
            graded = width * self.grading_ratio ** np.arange(self.grading_levels, 0, -1)
            edges = np.concatenate([[0.0], graded, edges[1:]])
        x, w = np.polynomial.legendre.leggauss(self.order)
        left = edges[:-1, np.newaxis]
        half = 0.5 * np.diff(edges)[:, np.newaxis]
        nodes = left + half * (x + 1)
        weights = half * w
        return nodes.ravel(), weights.ravel()

    def angular_rule(self):
        theta = TWO_PI * np.arange(self.n_theta) / self.n_theta
        return theta, np.full(self.n_theta, TWO_PI / self.n_theta)


def eigenvalue(cfg, mode):
    """
    Returns lambda_{k,m} = (2m + 1 + |k + alpha|) B0 + (k + alpha) B0.
    """
    shift = mode.k + cfg.alpha
    return (2 * mode.m + 1 + abs(shift)) * cfg.b0 + shift * cfg.b0


def eigenvalue_grid(cfg, modes):
    shift = modes.k_values[:, np.newaxis] + cfg.alpha
    m = np.arange(modes.m_max + 1)[np.newaxis, :]
    return (2 * m + 1 + np.abs(shift)) * cfg.b0 + shift * cfg.b0


def log_mode_norm_sq(cfg, mode):
    a = cfg.alpha_k(mode.k)
    log_binom = (
        specfun.log_gamma(mode.m + a + 1)
        - specfun.log_gamma(mode.m + 1)
        - specfun.log_gamma(a + 1)
    )
    return (
        math.log(math.pi)
        + (a + 1) * math.log(2 / cfg.b0)
        + specfun.log_gamma(1 + a)
        - log_binom
    )


def mode_norm_sq(cfg, mode):
    """
    Returns ||V_{k,m}||^2 = pi (2/B0)^{alpha_k + 1} Gamma(1 + alpha_k)
    / binom(m + alpha_k, m).
    """
    return math.exp(log_mode_norm_sq(cfg, mode))


def eigenfunction(cfg, mode, p, normalized=False):
    """
    Returns V_{k,m}(p) = r^{alpha_k} e^{-B0 r^2/4} P_{k,m}(B0 r^2/2) e^{ik theta},
    divided by its L2 norm if normalized is True.
    """
    if p.r == 0:
        return 0j
    a = cfg.alpha_k(mode.k)
    log_mag = a * math.log(p.r) - cfg.b0 * p.r**2 / 4
    if normalized:
        log_mag -= 0.5 * log_mode_norm_sq(cfg, mode)
    poly = specfun.pkm_poly(a, mode.m, cfg.b0 * p.r**2 / 2)
    phase = complex(math.cos(mode.k * p.theta), math.sin(mode.k * p.theta))
    return math.exp(log_mag) * poly * phase


@numba.njit
def _radial_profiles(a, b0, m_max, r, out):
    column = np.empty(m_max + 1)
    pref = 0.5 * math.log(b0 / TWO_PI)
    for i in range(len(r)):
        u = 0.5 * b0 * r[i] * r[i]
        if u == 0.0:
            out[:, i] = 0.0
            continue
        log_scale = pref + 0.5 * a * math.log(u) - 0.5 * u
        specfun._normalized_laguerre(a, m_max, u, log_scale, column)
        out[:, i] = column


def radial_profiles(cfg, k, m_max, r):
    """
    Returns the array R[m, i] of normalized radial profiles, so that
    V~_{k,m}(r, theta) = R[m](r) e^{ik theta}, for m = 0..m_max.
    """
    r = np.asarray(r, dtype=float)
    out = np.empty((m_max + 1, len(r)))
    _radial_profiles(cfg.alpha_k(k), cfg.b0, m_max, r, out)
    return out


@numba.njit
def _contract_radial(alpha, b0, k_values, coeffs, r, out):
    m_max = coeffs.shape[1] - 1
    column = np.empty(m_max + 1)
    pref = 0.5 * math.log(b0 / TWO_PI)
    for j in range(len(k_values)):
        a = abs(k_values[j] + alpha)
        row = coeffs[j]
        if not np.any(row != 0):
            out[j, :] = 0
            continue
        for i in range(len(r)):
            u = 0.5 * b0 * r[i] * r[i]
            if u == 0.0:
                out[j, i] = 0
                continue
            log_scale = pref + 0.5 * a * math.log(u) - 0.5 * u
            specfun._normalized_laguerre(a, m_max, u, log_scale, column)
            acc = 0j
            for m in range(m_max + 1):
                acc += row[m] * column[m]
            out[j, i] = acc


def radial_coefficients(state, r):
    """
    Returns A[j, i] = sum_m c_{k_j, m} R_{k_j, m}(r_i), the angular Fourier
    coefficients of the synthesized function on the radii r.
    """
    r = np.ascontiguousarray(r, dtype=float)
    out = np.empty((state.modes.shape[0], len(r)), dtype=complex)
    coeffs = np.ascontiguousarray(state.coeffs)
    _contract_radial(
        state.config.alpha, state.config.b0, state.modes.k_values, coeffs, r, out
    )
    return out


def synthesize_grid(state, r, theta):
    """
    Returns the values sum c_{k,m} V~_{k,m} on the tensor grid r x theta, as
    an array of shape (len(r), len(theta)).
    """
    a = radial_coefficients(state, r)
    phases = np.exp(1j * np.outer(state.modes.k_values, theta))
    return a.T @ phases


def synthesize_values(state, r, theta, chunk_size=4096):
    """
    Returns the synthesized values at the scattered points (r[i], theta[i]).
    """
    r = np.asarray(r, dtype=float).ravel()
    theta = np.asarray(theta, dtype=float).ravel()
    values = np.empty(len(r), dtype=complex)
    k = state.modes.k_values[:, np.newaxis]
    for start in range(0, len(r), chunk_size):
        sl = slice(start, start + chunk_size)
        a = radial_coefficients(state, r[sl])
        values[sl] = np.sum(a * np.exp(1j * k * theta[np.newaxis, sl]), axis=0)
    return values


def synthesize(state, p):
    """
    Returns sum c_{k,m} V~_{k,m}(p).
    """
    return complex(synthesize_values(state, [p.r], [p.theta])[0])


def default_r_max(cfg, modes):
    a_max = max(cfg.alpha_k(modes.k_min), cfg.alpha_k(modes.k_max))
    u_turn = 2 * (2 * modes.m_max + a_max + 1)
    u_max = u_turn + 12 * math.sqrt(u_turn) + 60
    return math.sqrt(2 * u_max / cfg.b0)


def _project(cfg, f, modes, quad, r_max):
    n_k = modes.shape[0]
    if max(abs(modes.k_min), abs(modes.k_max)) >= quad.n_theta // 2:
        raise core.DomainError(
            f"n_theta={quad.n_theta} cannot resolve angular indices in {modes}"
        )
    r, wr = quad.radial_rule(r_max)
    theta, _ = quad.angular_rule()
    values = np.asarray(f(r[:, np.newaxis], theta[np.newaxis, :]), dtype=complex)
    values = np.broadcast_to(values, (len(r), len(theta)))
    # fhat[:, k] = (1/n) sum_j f(r, theta_j) e^{-ik theta_j}
    fhat = np.fft.fft(values, axis=1) / quad.n_theta
    coeffs = np.empty(modes.shape, dtype=complex)
    for j, k in enumerate(modes.k_values):
        profiles = radial_profiles(cfg, k, modes.m_max, r)
        coeffs[j] = TWO_PI * (profiles @ (wr * r * fhat[:, k % quad.n_theta]))
    return coeffs


def expand(cfg, f, modes=None, quad=None):
    """
    Returns the coefficients c_{k,m} = int f conj(V~_{k,m}) dx of f over the
    modes window. f is called once with broadcastable arrays (r, theta) and
    must return the values of the function there.

    The quadrature error is estimated by repeating the projection with a
    coarser rule; QuadratureError is raised if it exceeds quad.tol.
    """
    modes = ModeSet.default() if modes is None else modes
    quad = QuadratureSpec() if quad is None else quad
    r_max = default_r_max(cfg, modes) if quad.r_max is None else quad.r_max
    coeffs = _project(cfg, f, modes, quad, r_max)
    coarse = _project(cfg, f, modes, quad.coarse(), r_max)
    err = float(np.max(np.abs(coeffs - coarse)))
    logger.debug(f"Expanded over {modes} with r_max={r_max:.3f}, error {err:.2e}")
    if err > quad.tol:
        raise core.QuadratureError(
            f"Estimated coefficient error {err:.3e} exceeds tolerance {quad.tol:.1e}"
        )
    return StateCoeffs(cfg, modes, coeffs)


def polar_l2_norm(f, r_max, quad=None):
    """
    Returns the L2 norm of f over the disk of radius r_max by the polar rule.
    """
    quad = QuadratureSpec() if quad is None else quad
    r, wr = quad.radial_rule(r_max)
    theta, wt = quad.angular_rule()
    values = np.asarray(f(r[:, np.newaxis], theta[np.newaxis, :]))
    values = np.broadcast_to(values, (len(r), len(theta)))
    return float(np.sqrt(np.einsum("i,ij,j->", wr * r, np.abs(values) ** 2, wt)))


def multiplicity_in_window(cfg, lam, window, tol=1e-9):
    """
    Returns the number of modes in window with |lambda_{k,m} - lam| <= tol.
    """
    if not tol > 0:
        raise core.DomainError(f"tol must be > 0, got {tol}")
    return int(np.sum(np.abs(eigenvalue_grid(cfg, window) - lam) <= tol))


def spectrum_table(cfg, window):
    """
    Returns a list of dicts (k, m, alpha_k, eigenvalue, norm_sq) over window,
    sorted by eigenvalue then k then m.
    """
    rows = []
    for mode in window:
        rows.append(
            {
                "k": mode.k,
                "m": mode.m,
                "alpha_k": cfg.alpha_k(mode.k),
                "eigenvalue": eigenvalue(cfg, mode),
                "norm_sq": mode_norm_sq(cfg, mode),
            }
        )
    rows.sort(key=lambda row: (row["eigenvalue"], row["k"], row["m"]))
    return rows


def apply_multiplier(state, F):
    """
    Returns the state with coefficients F(lambda_{k,m}) c_{k,m}. F is called
    once with the array of eigenvalues.
    """
    factors = np.asarray(F(state.eigenvalues()))
    return state.with_coeffs(factors * state.coeffs)


def eigen_residual(cfg, mode, h, r_min=0.25, r_end=None):
    """
    Returns the relative L2(r dr) residual of the radial eigen-relation

        -R'' - R'/r + (k + alpha + B0 r^2/2)^2 / r^2 R = lambda R

    with second-order central differences of step h on [r_min, r_end]. The
    interval stays away from the origin, where the profile behaves like
    r^{alpha_k}.
    """
    if r_end is None:
        a = cfg.alpha_k(mode.k)
        u_turn = 2 * (2 * mode.m + a + 1)
        r_end = math.sqrt(2 * (u_turn + 12 * math.sqrt(u_turn) + 40) / cfg.b0)
    n = int(round((r_end - r_min) / h))
    r = r_min + h * np.arange(-1, n + 2)
    R = radial_profiles(cfg, mode.k, mode.m, r)[mode.m]
    ri = r[1:-1]
    d2 = (R[2:] - 2 * R[1:-1] + R[:-2]) / h**2
    d1 = (R[2:] - R[:-2]) / (2 * h)
    potential = (mode.k + cfg.alpha + cfg.b0 * ri**2 / 2) ** 2 / ri**2
    lam = eigenvalue(cfg, mode)
    residual = -d2 - d1 / ri + potential * R[1:-1] - lam * R[1:-1]
    return float(
        np.sqrt(np.sum(residual**2 * ri)) / np.sqrt(np.sum((lam * R[1:-1]) ** 2 * ri))
    )
