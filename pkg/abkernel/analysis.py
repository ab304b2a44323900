"""
Sobolev and Besov norms built on the Littlewood-Paley bumps, and the
numerical harness for the Bernstein, square function, microlocalized decay
and Strichartz estimates.
"""
import concurrent.futures
import dataclasses
import fractions
import logging
import math

import numpy as np
import scipy.integrate
import scipy.stats
import tqdm

from . import core
from . import propagators
from . import spectrum

logger = logging.getLogger(__name__)


def sobolev_norm(state, s):
    """
    Returns (sum lambda^s |c|^2)^{1/2}.
    """
    lam = state.eigenvalues()
    return float(np.sqrt(np.sum(lam**s * np.abs(state.coeffs) ** 2)))


def spatial_norm(state, p, grid=None):
    """
    Returns the L^p norm of the synthesized state. For p = 2 this is the
    coefficient norm, exact by orthonormality; other p use the polar grid.
    """
    if p == 2:
        return state.l2_norm()
    return propagators.lp_norm(state, p, grid)


def besov_norm(state, s, p, r, grid=None):
    """
    Returns (sum_j 2^{jsr} ||phi_j(sqrt H) f||_p^r)^{1/r}, the sum taken over
    the scales meeting the spectral support of state.
    """
    if not p >= 1:
        raise core.DomainError(f"p must be >= 1, got {p}")
    if not 1 <= r < np.inf:
        raise core.DomainError(f"r must lie in [1, inf), got {r}")
    if state.is_zero():
        return 0.0
    total = 0.0
    for j in propagators.spectral_scales(state):
        piece = propagators.frequency_localize(state, propagators.LPBump(j))
        if piece.is_zero():
            continue
        total += 2.0 ** (j * s * r) * spatial_norm(piece, p, grid) ** r
    return total ** (1 / r)


def bernstein_ratio(state, j, p, q, grid=None):
    """
    Returns ||phi_j(sqrt H) f||_p / (2^{2j(1/q - 1/p)} ||f||_q).
    """
    if not 1 <= q <= p:
        raise core.DomainError(f"Need 1 <= q <= p, got q={q}, p={p}")
    if state.is_zero():
        raise core.DomainError("Bernstein ratio of the zero state is undefined")
    piece = propagators.frequency_localize(state, propagators.LPBump(j))
    scale = 2.0 ** (2 * j * (1 / q - 1 / p))
    return spatial_norm(piece, p, grid) / (scale * spatial_norm(state, q, grid))


def square_function_ratio(state, p, grid=None):
    """
    Returns ||(sum_j |phi_j(sqrt H) f|^2)^{1/2}||_p / ||f||_p. At p = 2 both
    norms are taken at coefficient level.
    """
    if not 1 < p < np.inf:
        raise core.DomainError(f"p must lie in (1, inf), got {p}")
    if state.is_zero():
        raise core.DomainError("Square function ratio of the zero state is undefined")
    scales = propagators.spectral_scales(state)
    if p == 2:
        root = np.sqrt(state.eigenvalues())
        weight = sum(propagators.LPBump(j)(root) ** 2 for j in scales)
        num = np.sqrt(np.sum(weight * np.abs(state.coeffs) ** 2))
        return float(num / state.l2_norm())
    grid = propagators.PolarGrid.for_state(state) if grid is None else grid
    square = np.zeros((grid.n_r, grid.n_theta))
    for j in scales:
        piece = propagators.frequency_localize(state, propagators.LPBump(j))
        square += np.abs(grid.values(piece)) ** 2
    weights = grid.weights()
    num = np.sum(weights * square ** (p / 2)) ** (1 / p)
    den = np.sum(weights * np.abs(grid.values(state)) ** p) ** (1 / p)
    return float(num / den)


def localized_kernel_row(cfg, j, y0):
    """
    Returns the kernel row x -> phi_j(sqrt H)(x, y0) over the smallest mode
    window that carries it.
    """
    bump = propagators.LPBump(j)
    lam_max = bump.support()[1] ** 2
    modes = spectrum.ModeSet.for_band(cfg, lam_max, y0)
    return propagators.kernel_row(cfg, modes, y0, lambda lam: bump(np.sqrt(lam)))


def kernel_reach(b0, rtol=1e-4):
    """
    Returns the distance beyond which the lowest Landau level factor
    e^{-B0 d^2 / 4} of a kernel row falls below rtol.
    """
    return math.sqrt(-4 * math.log(rtol) / b0)


def local_grid(cfg, y0, t_max, j, n_min=200):
    """
    Returns a uniform polar grid around the origin covering y0, the light
    cone up to time t_max and the Gaussian reach of the kernel, resolving
    frequencies up to 2^{j+1} with about eight points per wavelength.
    """
    r_max = y0.r + t_max + kernel_reach(cfg.b0)
    density = 8 * 2.0 ** (j + 1) / (2 * np.pi)
    n_r = max(n_min, math.ceil(density * r_max))
    n_theta = max(256, 1 << math.ceil(math.log2(2 * np.pi * density * r_max)))
    return propagators.PolarGrid(r_max, n_r, n_theta, "uniform")


@dataclasses.dataclass(frozen=True)
class ScaleRecord:
    j: int
    value: float

    def asdict(self):
        return dataclasses.asdict(self)


def bernstein_sweep(cfg, js, p, q, y0, grid=None):
    """
    Returns Bernstein ratios of the localized kernel rows at each scale in js,
    sorted by scale.
    """
    records = []
    for j in sorted(js):
        state = localized_kernel_row(cfg, j, y0)
        scale_grid = local_grid(cfg, y0, 0.0, j) if grid is None else grid
        value = bernstein_ratio(state, j, p, q, scale_grid)
        logger.info(f"Bernstein ratio at j={j}, (q, p)=({q}, {p}): {value:.6g}")
        records.append(ScaleRecord(j, value))
    return records


def square_function_sweep(cfg, js, p, y0, grid=None):
    records = []
    for j in sorted(js):
        state = localized_kernel_row(cfg, j, y0)
        scale_grid = local_grid(cfg, y0, 0.0, j) if grid is None else grid
        value = square_function_ratio(state, p, scale_grid)
        logger.info(f"Square function ratio at j={j}, p={p}: {value:.6g}")
        records.append(ScaleRecord(j, value))
    return records


def no_monotone_growth(values, slack=1.1):
    """
    Returns True unless every value exceeds its predecessor by more than the
    factor slack.
    """
    if len(values) < 2:
        return True
    return not all(b > slack * a for a, b in zip(values, values[1:]))


def regime_window(j, b0):
    """
    Returns the time window 2^{-j} <= t <= 2^j pi / (8 B0) on which the
    microlocalized decay bound is proven.
    """
    return math.ldexp(1.0, -j), math.ldexp(math.pi / (8 * b0), j)


def decay_regime(j, b0, times):
    """
    Returns the sorted times lying in the regime window for (j, b0).
    """
    lo, hi = regime_window(j, b0)
    return sorted(float(t) for t in times if lo <= t <= hi)


def decay_times(j, b0, tmin, tmax, samples):
    """
    Returns samples log-spaced times on the intersection of [tmin, tmax] with
    the regime window, raising EmptyRegimeError if it is empty.
    """
    lo, hi = regime_window(j, b0)
    lo = max(lo, tmin)
    hi = min(hi, tmax)
    if lo > hi or (lo == hi and samples > 1):
        raise core.EmptyRegimeError(
            f"Empty decay regime for j={j}, b0={b0}: need 2^j t >= 1 and "
            f"2^-j t <= pi/(8 b0) within [{tmin}, {tmax}]"
        )
    if samples == 1:
        return [lo]
    return list(np.geomspace(lo, hi, samples))


def decay_envelope(j, t):
    """
    Returns 2^{2j} (1 + 2^j t)^{-1/2}.
    """
    return 4.0**j / math.sqrt(1 + math.ldexp(t, j))


@dataclasses.dataclass(frozen=True)
class DecayFit:
    j: int
    times: list
    sup_norms: list
    fitted_exponent: float
    fitted_constant: float
    r_squared: float

    def rows(self):
        return [
            {"t": t, "sup_norm": s, "bound_envelope": decay_envelope(self.j, t)}
            for t, s in zip(self.times, self.sup_norms)
        ]

    def asdict(self):
        return dataclasses.asdict(self)


def _evolved_sup_norm(state, t, grid):
    return propagators.sup_norm(propagators.halfwave_evolve(state, t), grid).value


def decay_sup_norms(state, times, grid, show_progress=False, threads=1):
    """
    Returns the sup norms of the half-wave evolutions of state at times, in
    order, computed on threads worker processes.
    """
    if threads == 1:
        return [
            _evolved_sup_norm(state, t, grid)
            for t in tqdm.tqdm(times, desc="Sup norms", disable=not show_progress)
        ]
    sup_norms = [None] * len(times)
    with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as executor:
        future_to_index = {
            executor.submit(_evolved_sup_norm, state, t, grid): i
            for i, t in enumerate(times)
        }
        bar = tqdm.tqdm(
            concurrent.futures.as_completed(future_to_index),
            total=len(times),
            desc="Sup norms",
            disable=not show_progress,
        )
        for future in bar:
            sup_norms[future_to_index[future]] = future.result()
    return sup_norms


def fit_decay(j, times, sup_norms):
    """
    Least squares fit of log(sup / 2^{2j}) against log(1 + 2^j t).
    """
    if len(times) < 2:
        raise core.EmptyRegimeError(f"Need at least two times to fit, got {len(times)}")
    x = np.log1p(np.ldexp(np.asarray(times, dtype=float), j))
    y = np.log(np.asarray(sup_norms) / 4.0**j)
    fit = scipy.stats.linregress(x, y)
    return DecayFit(
        j=j,
        times=[float(t) for t in times],
        sup_norms=[float(s) for s in sup_norms],
        fitted_exponent=float(fit.slope),
        fitted_constant=float(math.exp(fit.intercept)),
        r_squared=float(fit.rvalue**2),
    )


def decay_fit(cfg, j, y0, times, grid=None, show_progress=False, threads=1):
    """
    Evolves the frequency-localized kernel row at y0 with the half-wave
    group and fits the decay exponent of its sup norm over those times
    that lie in the proven regime.
    """
    regime = decay_regime(j, cfg.b0, times)
    if len(regime) == 0:
        raise core.EmptyRegimeError(
            f"No time in {list(times)} lies in the decay regime for j={j}, b0={cfg.b0}"
        )
    if len(regime) < len(times):
        logger.warning(f"Dropped {len(times) - len(regime)} times outside the regime")
    state = localized_kernel_row(cfg, j, y0)
    grid = local_grid(cfg, y0, max(regime), j) if grid is None else grid
    logger.info(
        f"Decay fit at j={j} over {len(state.modes)} modes, grid "
        f"{grid.n_r}x{grid.n_theta} of radius {grid.r_max:.3f}"
    )
    sup_norms = decay_sup_norms(state, regime, grid, show_progress, threads)
    return fit_decay(j, regime, sup_norms)


def decay_short_time(cfg, j, y0, samples=5, grid=None):
    """
    Returns (times, ratios) with ratios the sup norms at 2^j t in [0, 1]
    divided by the sup norm at t = 0.
    """
    state = localized_kernel_row(cfg, j, y0)
    times = list(np.linspace(0, math.ldexp(1.0, -j), samples))
    grid = local_grid(cfg, y0, times[-1], j) if grid is None else grid
    sup_norms = decay_sup_norms(state, times, grid)
    return times, [s / sup_norms[0] for s in sup_norms]


@dataclasses.dataclass(frozen=True)
class AdmissiblePair:
    q: float
    p: float

    @property
    def s(self):
        return 1 - 1 / self.q - 2 / self.p

    def asdict(self):
        return {"q": self.q, "p": self.p, "s": self.s}


def admissibility_conditions(q, p):
    """
    Returns [(description, holds)] for the two admissibility conditions.
    """
    in_range = 2 <= q <= np.inf and 2 <= p < np.inf
    gap = False
    if q > 0 and p > 0:
        # Exact rational arithmetic on the binary values of q and p.
        inv_q = 0 if q == np.inf else 1 / fractions.Fraction(q)
        inv_p = 0 if p == np.inf else 1 / fractions.Fraction(p)
        gap = 2 * inv_q <= fractions.Fraction(1, 2) - inv_p
    return [
        ("(q, p) in [2, inf] x [2, inf)", in_range),
        ("2/q <= 1/2 - 1/p", gap),
    ]


def admissible_pair(q, p):
    """
    Returns the AdmissiblePair for (q, p), raising AdmissibilityError with
    both conditions listed and the failing ones marked otherwise.
    """
    conditions = admissibility_conditions(q, p)
    if all(holds for _, holds in conditions):
        return AdmissiblePair(float(q), float(p))
    lines = [f"  [{'ok' if holds else 'FAILS'}] {text}" for text, holds in conditions]
    raise core.AdmissibilityError(
        f"(q, p) = ({q}, {p}) is not admissible:\n" + "\n".join(lines)
    )


@dataclasses.dataclass(frozen=True)
class StrichartzRecord:
    q: float
    p: float
    s: float
    T: float
    nt: int
    lhs: float
    rhs: float

    @property
    def ratio(self):
        return self.lhs / self.rhs

    def asdict(self):
        d = dataclasses.asdict(self)
        d["ratio"] = self.ratio
        return d


def log_time_nodes(T, nt, ratio=2.0**-10):
    """
    Returns nt log-spaced nodes on [ratio T, T].
    """
    if nt < 3 or nt % 2 == 0:
        raise core.DomainError(f"nt must be odd and >= 3, got {nt}")
    return np.geomspace(ratio * T, T, nt)


def strichartz_norm(cfg, u0, u1, pair, T, nt=33, grid=None):
    """
    Returns lhs = ||u||_{L^q([0, T]; L^p)} for the wave solution with data
    (u0, u1), by composite Simpson in log t on nt nodes plus a trapezoid on
    [0, t_0], and rhs = ||u0||_{H^s} + ||u1||_{H^{s-1}}.
    """
    if not isinstance(pair, AdmissiblePair):
        pair = admissible_pair(*pair)
    s = pair.s
    if not 0 <= s < 1:
        raise core.AdmissibilityError(f"Need 0 <= s < 1, got s={s}")
    if not T > 0:
        raise core.DomainError(f"T must be > 0, got {T}")
    if grid is None:
        grid = propagators.PolarGrid.for_state(u0 + u1)
        grid = dataclasses.replace(grid, r_max=grid.r_max + T)

    def norm_at(t):
        u = propagators.wave_solution(cfg, u0, u1, t)
        return spatial_norm(u, pair.p, grid)

    nodes = log_time_nodes(T, nt)
    values = np.array([norm_at(t) for t in nodes])
    at_zero = norm_at(0.0)
    if pair.q == np.inf:
        lhs = float(max(at_zero, np.max(values)))
    else:
        v = np.log(nodes)
        integrand = values**pair.q * nodes
        head = 0.5 * nodes[0] * (at_zero**pair.q + values[0] ** pair.q)
        lhs = float((scipy.integrate.simpson(integrand, x=v) + head) ** (1 / pair.q))
    rhs = sobolev_norm(u0, s) + sobolev_norm(u1, s - 1)
    logger.info(
        f"Strichartz ({pair.q}, {pair.p}) on [0, {T}]: lhs={lhs:.6g} rhs={rhs:.6g}"
    )
    return StrichartzRecord(pair.q, pair.p, s, T, nt, lhs, rhs)


def strichartz_refinement(cfg, u0, u1, pair, T, nt=33, grid=None):
    """
    Returns (coarse, fine, refinement_ratio), the fine record using twice
    the time nodes and twice the spatial resolution.
    """
    if grid is None:
        grid = propagators.PolarGrid.for_state(u0 + u1)
        grid = dataclasses.replace(grid, r_max=grid.r_max + T)
    coarse = strichartz_norm(cfg, u0, u1, pair, T, nt, grid)
    fine = strichartz_norm(cfg, u0, u1, pair, T, 2 * nt - 1, grid.refined())
    return coarse, fine, fine.ratio / coarse.ratio


STRICHARTZ_PRESETS = ("single-mode", "gaussian", "kernel-row-j")


def strichartz_data(cfg, preset, T=1.0, j=2, modes=None, quad=None):
    """
    Returns (u0, u1, grid) for a named data preset:

    single-mode: u0 the normalized mode (0, 1), u1 = 0;
    gaussian: u0 = exp(-|x - (1, 0)|^2) expanded over modes, u1 = 0;
    kernel-row-j: u0 the kernel row of phi_j(sqrt H) at (1, 0), u1 = 0.
    """
    y0 = spectrum.PolarPoint(1.0, 0.0)
    if preset == "single-mode":
        modes = spectrum.ModeSet(-2, 2, 2) if modes is None else modes
        u0 = spectrum.StateCoeffs.single(cfg, modes, spectrum.ModeIndex(0, 1))
        grid = None
    elif preset == "gaussian":
        modes = spectrum.ModeSet.default() if modes is None else modes

        def gaussian(r, theta):
            return np.exp(-(r**2 + 1 - 2 * r * np.cos(theta)))

        u0 = spectrum.expand(cfg, gaussian, modes, quad)
        grid = propagators.PolarGrid(7.0 + T, 200, 256, "uniform")
    elif preset == "kernel-row-j":
        u0 = localized_kernel_row(cfg, j, y0)
        grid = local_grid(cfg, y0, T, j)
    else:
        raise core.DomainError(
            f"Unknown data preset '{preset}'; choose from "
            f"{', '.join(STRICHARTZ_PRESETS)}"
        )
    u1 = spectrum.StateCoeffs.zeros(cfg, u0.modes)
    return u0, u1, grid
