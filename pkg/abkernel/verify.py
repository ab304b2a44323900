"""
Property suites behind `abkernel verify`. Every check returns CheckResult
records naming the estimate or identity it exercises; suites are run in a
process pool and reported in registry order.
"""
import concurrent.futures
import dataclasses
import fractions
import itertools
import logging
import math

import numpy as np
import scipy.optimize
import tqdm

from . import analysis
from . import core
from . import kernels
from . import propagators
from . import specfun
from . import spectrum

logger = logging.getLogger(__name__)

SUITES = ("specfun", "spectrum", "kernels", "propagators", "analysis")

PASS = "pass"
FAIL = "fail"
RECORDED = "recorded"


@dataclasses.dataclass(frozen=True)
class CheckResult:
    name: str
    anchor: str
    status: str
    measured: float
    bound: float
    tolerance: str
    detail: str = ""

    @property
    def passed(self):
        return self.status != FAIL

    def asdict(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass
class CheckContext:
    rng: np.random.Generator
    config: dict
    grid_refine: int = 2

    def tol(self, name):
        return self.config["tolerances"][name]


def upper(name, anchor, measured, bound, tolerance, detail=""):
    status = PASS if measured <= bound else FAIL
    return CheckResult(
        name, anchor, status, float(measured), float(bound), tolerance, detail
    )


def lower(name, anchor, measured, bound, tolerance, detail=""):
    status = PASS if measured >= bound else FAIL
    return CheckResult(
        name, anchor, status, float(measured), float(bound), tolerance, detail
    )


def recorded(name, anchor, measured, detail=""):
    return CheckResult(name, anchor, RECORDED, float(measured), None, "", detail)


def reference_config():
    return spectrum.FieldConfig(0.5, 1.0)


def random_state(rng, cfg, modes):
    coeffs = rng.normal(size=modes.shape) + 1j * rng.normal(size=modes.shape)
    return spectrum.StateCoeffs(cfg, modes, coeffs)


def rel(a, b):
    return abs(a - b) / abs(b)


# specfun


def check_gamma_recurrence(ctx):
    xs = ctx.rng.uniform(0.1, 50, 20)
    err = max(rel(specfun.gamma_fn(x + 1), x * specfun.gamma_fn(x)) for x in xs)
    return [upper("gamma_recurrence", "Gamma(x+1) = x Gamma(x)", err, 1e-12, "fixed")]


def check_bessel_series_integral(ctx):
    tol = ctx.tol("bessel")
    err = 0.0
    for nu, x in zip(ctx.rng.uniform(0, 4, 20), ctx.rng.uniform(2, 40, 20)):
        series = specfun.bessel_i(nu, x).value
        err = max(err, rel(series, specfun.bessel_i_integral(nu, x).value))
    anchor = "I_nu series and integral representation"
    return [upper("bessel_series_vs_integral", anchor, err, tol, "bessel")]


def check_bessel_recurrence(ctx):
    tol = ctx.tol("bessel")
    err = 0.0
    for nu, x in zip(ctx.rng.uniform(1, 10, 20), ctx.rng.uniform(0.1, 50, 20)):
        below = specfun.bessel_i(nu - 1, x).value
        above = specfun.bessel_i(nu + 1, x).value
        mid = specfun.bessel_i(nu, x).value
        err = max(err, abs(below - above - 2 * nu / x * mid) / below)
    anchor = "I_{nu-1} - I_{nu+1} = (2 nu / x) I_nu"
    return [upper("bessel_recurrence", anchor, err, tol, "bessel")]


def check_bessel_generating(ctx):
    tol = ctx.tol("bessel")
    err = 0.0
    for z in (0.5, 5.0, 30.0):
        for t in (-1.0, 0.0, 0.7):
            total, _ = specfun.bessel_generating_sum(z, t)
            err = max(err, rel(total, math.exp(z * math.cosh(t))))
    anchor = "sum_k e^{kt} I_k(z) = e^{z cosh t}"
    return [upper("bessel_generating_function", anchor, err, tol, "bessel")]


def check_laguerre_poisson(ctx):
    tol = ctx.tol("bessel")
    err = 0.0
    for _ in range(10):
        a = ctx.rng.uniform(0, 3)
        x, y = ctx.rng.uniform(0.1, 5, 2)
        w = ctx.rng.uniform(0.1, 0.8)
        series, closed = specfun.laguerre_poisson_kernel(a, x, y, w)
        err = max(err, rel(series, closed))
    anchor = "Laguerre Poisson kernel (Hille-Hardy)"
    return [upper("laguerre_poisson_kernel", anchor, err, tol, "bessel")]


def check_pkm_direct(ctx):
    err = 0.0
    for degree in range(7):
        a = ctx.rng.uniform(0, 3)
        r = ctx.rng.uniform(0, 5)
        direct = specfun.pkm_poly_direct(a, degree, r)
        diff = abs(specfun.pkm_poly(a, degree, r) - direct)
        err = max(err, diff / max(1.0, abs(direct)))
    anchor = "P_{k,m} recurrence and explicit sum"
    return [upper("pkm_recurrence_vs_sum", anchor, err, 1e-12, "fixed")]


# spectrum


def _gram_window():
    return spectrum.ModeSet(-4, 4, 4)


def check_gram(ctx):
    cfg = reference_config()
    modes = _gram_window()
    quad = spectrum.QuadratureSpec.from_config(ctx.config)
    r, wr = quad.radial_rule(spectrum.default_r_max(cfg, modes))
    err = 0.0
    for k in modes.k_values:
        R = spectrum.radial_profiles(cfg, k, modes.m_max, r)
        gram = 2 * np.pi * (R * (wr * r)) @ R.T
        err = max(err, float(np.max(np.abs(gram - np.eye(modes.m_max + 1)))))
    anchor = "orthonormality of the eigenbasis"
    return [upper("gram_matrix", anchor, err, ctx.tol("gram"), "gram")]


def check_norm_formula(ctx):
    cfg = reference_config()
    modes = _gram_window()
    quad = spectrum.QuadratureSpec.from_config(ctx.config)
    r, wr = quad.radial_rule(spectrum.default_r_max(cfg, modes))
    poly = np.vectorize(specfun.pkm_poly)
    err = 0.0
    for mode in modes:
        a = cfg.alpha_k(mode.k)
        profile = r**a * np.exp(-cfg.b0 * r**2 / 4) * poly(a, mode.m, cfg.b0 * r**2 / 2)
        integral = 2 * np.pi * np.sum(wr * r * profile**2)
        err = max(err, rel(integral, spectrum.mode_norm_sq(cfg, mode)))
    anchor = "closed form of ||V_{k,m}||^2"
    return [upper("norm_formula", anchor, err, ctx.tol("norm_formula"), "norm_formula")]


def check_eigen_residual(ctx):
    cfg = reference_config()
    mode = spectrum.ModeIndex(1, 2)
    coarse = spectrum.eigen_residual(cfg, mode, 0.02)
    fine = spectrum.eigen_residual(cfg, mode, 0.01)
    order = math.log2(coarse / fine)
    anchor = "radial eigen-relation, O(h^2) residual"
    detail = f"residuals {coarse:.3e}, {fine:.3e}"
    return [lower("eigen_residual_order", anchor, order, 1.8, "fixed", detail)]


def check_expansion(ctx):
    cfg = reference_config()
    modes = spectrum.ModeSet(-3, 3, 3)
    state = random_state(ctx.rng, cfg, modes)

    def f(r, theta):
        return spectrum.synthesize_grid(state, r.ravel(), theta.ravel())

    quad = spectrum.QuadratureSpec.from_config(ctx.config)
    quad = dataclasses.replace(quad, tol=1e-6)
    expanded = spectrum.expand(cfg, f, modes, quad)
    err = float(np.max(np.abs(expanded.coeffs - state.coeffs)))
    anchor = "expansion inverts synthesis"
    return [upper("expand_synthesize", anchor, err, ctx.tol("gram"), "gram")]


def check_parseval(ctx):
    cfg = reference_config()
    modes = spectrum.ModeSet(-3, 3, 40)
    weights = ctx.rng.normal(size=7) + 1j * ctx.rng.normal(size=7)

    # r^{|k+alpha|} e^{-r^2} has geometrically decaying Laguerre coefficients.
    def f(r, theta):
        total = 0
        for w, k in zip(weights, range(-3, 4)):
            total = total + w * r ** cfg.alpha_k(k) * np.exp(-(r**2) + 1j * k * theta)
        return total

    quad = spectrum.QuadratureSpec.from_config(ctx.config)
    state = spectrum.expand(cfg, f, modes, quad)
    a = np.array([cfg.alpha_k(k) for k in range(-3, 4)])
    mode_norms = [math.pi * specfun.gamma_fn(ak + 1) / 2 ** (ak + 1) for ak in a]
    exact = float(np.sum(np.abs(weights) ** 2 * mode_norms))
    err = rel(state.l2_norm() ** 2, exact)
    anchor = "Parseval identity of the expansion"
    return [upper("parseval", anchor, err, 1e-6, "fixed")]


# kernels


CROSS_METHOD_GRID = {
    "alpha": (0.1, 0.5, 0.9),
    "b0": (0.5, 2.0),
    "t": (0.05, 0.2, 1.0),
    "r": (0.2, 1.0, 2.5),
    "dtheta": (0.0, 1.0, math.pi, 5.0),
}


def cross_method_points():
    g = CROSS_METHOD_GRID
    for alpha, b0, t, r1, r2, dtheta in itertools.product(
        g["alpha"], g["b0"], g["t"], g["r"], g["r"], g["dtheta"]
    ):
        x = spectrum.PolarPoint(r1, dtheta)
        y = spectrum.PolarPoint(r2, 0.0)
        yield spectrum.FieldConfig(alpha, b0), t, x, y


def check_cross_method(ctx):
    """
    Points where the summed error estimates of the two methods stay below
    rtol |K| are compared by relative difference. At the remaining points
    the kernel lies under the rounding floor of the series, and the
    difference must stay within rtol |K| plus both error estimates.
    """
    rtol = ctx.tol("cross_method")
    quad_tol = ctx.tol("closed_quad")
    worst = 0.0
    n = 0
    below_floor = 0
    violations = 0
    for cfg, t, x, y in cross_method_points():
        ks = kernels.heat_kernel_series(cfg, t, x, y)
        kc = kernels.heat_kernel_closed(cfg, t, x, y, quad_tol)
        floor = ks.abs_error_estimate + kc.abs_error_estimate
        diff = abs(ks.value - kc.value)
        scale = abs(kc.value)
        n += 1
        if floor <= rtol * scale:
            worst = max(worst, diff / scale)
        else:
            below_floor += 1
            violations += diff > rtol * scale + floor
    anchor = "heat kernel Bessel series = closed form"
    detail = f"{n - below_floor} of {n} points above the rounding floor"
    floor_anchor = "agreement within the error estimates below the rounding floor"
    floor_detail = f"{below_floor} points"
    return [
        upper("heat_cross_method", anchor, worst, rtol, "cross_method", detail),
        upper(
            "heat_cross_method_floor",
            floor_anchor,
            violations,
            0,
            "exact",
            floor_detail,
        ),
    ]


def check_mehler(ctx):
    worst = 0.0
    continuity = 0.0
    for b0 in (0.5, 2.0):
        for t in (0.1, 1.0):
            for r1, r2, dtheta in ((0.5, 1.0, 0.3), (1.0, 1.0, 2.0), (2.0, 0.7, 4.0)):
                x = spectrum.PolarPoint(r1, dtheta)
                y = spectrum.PolarPoint(r2, 0.0)
                reference = kernels.mehler_kernel(b0, t, x, y).value
                closed = kernels.closed_form_kernel(0.0, b0, t, x, y).value
                nearby = kernels.closed_form_kernel(1e-6, b0, t, x, y).value
                worst = max(worst, rel(closed, reference))
                continuity = max(continuity, rel(nearby, reference))
    reduction = "closed form at alpha = 0 is the Mehler kernel"
    limit = "closed form continuous as alpha -> 0"
    return [
        upper("mehler_reduction", reduction, worst, 1e-12, "fixed"),
        upper("mehler_continuity", limit, continuity, 1e-5, "fixed"),
    ]


def check_bessel_identity(ctx):
    tol = ctx.tol("bessel_identity")
    worst = 0.0
    for z in (0j, 0.5 + 0.5j, 1.8j):
        for x in (0.5, 2.0, 10.0):
            record = kernels.bessel_integral_identity_check(z, x)
            worst = max(worst, record.abs_diff / max(1.0, abs(record.lhs)))
    anchor = "integral over the order of e^{zk} I_|k|(x)"
    return [upper("bessel_order_integral", anchor, worst, tol, "bessel_identity")]


def check_bessel_jump(ctx):
    results = []
    sides = (("lhs", "bessel_order_integral_jump"), ("rhs", "bessel_rhs_jump"))
    for side, name in sides:
        record = kernels.bessel_identity_jump(0.5, 2.0, side=side)
        anchor = f"continuity of the {side} across |Im z| = pi"
        measured = record.extrapolated
        results.append(upper(name, anchor, measured, ctx.tol("jump"), "jump"))
    return results


def check_gaussian_bounds(ctx):
    cfg = reference_config()
    b = ctx.config["bounds"]
    results = []
    for which in ("sharp", "flat", "radial"):
        grid = (b["times"], b["r_max"], b["n_r"], b["n_theta"])
        coarse = kernels.fit_bound_constant(cfg, which, *grid)
        fine = kernels.fit_bound_constant(cfg, which, *grid, refine=ctx.grid_refine)
        change = abs(fine.constant - coarse.constant) / coarse.constant
        detail = f"constants {coarse.constant:.6g} -> {fine.constant:.6g}"
        name = f"gaussian_bound_{which}"
        anchor = f"{which} Gaussian upper bound of the heat kernel"
        if which == "radial":
            results.append(recorded(name, anchor, fine.constant, detail))
        else:
            tol = ctx.tol("refinement")
            results.append(upper(name, anchor, change, tol, "refinement", detail))
    return results


DG_CONFIGURATIONS = (
    ((0.2, 1.0, 0.0, np.pi / 2), (1.5, 2.5, 0.0, np.pi / 2)),
    ((0.5, 1.0, 0.0, np.pi / 3), (0.5, 1.0, np.pi, 4 * np.pi / 3)),
    ((0.0, 0.5, 0.0, 2 * np.pi), (1.0, 2.0, 0.0, 2 * np.pi)),
    ((1.0, 2.0, 0.0, np.pi / 4), (1.0, 2.0, np.pi / 2, 3 * np.pi / 4)),
    ((0.1, 0.6, 0.0, np.pi), (0.8, 1.5, np.pi, 2 * np.pi)),
    ((2.0, 3.0, 0.0, np.pi / 2), (0.5, 1.0, np.pi, 3 * np.pi / 2)),
    ((0.3, 0.8, 0.0, np.pi / 4), (1.2, 1.6, np.pi / 8, np.pi / 2)),
    ((1.0, 1.5, 0.0, 2 * np.pi), (2.0, 3.0, 0.0, np.pi / 6)),
    ((0.5, 1.0, np.pi / 2, np.pi), (0.5, 1.0, 3 * np.pi / 2, 2 * np.pi)),
    ((0.2, 1.0, 0.0, np.pi / 2), (0.2, 1.0, np.pi, 3 * np.pi / 2)),
)


def check_davies_gaffney(ctx):
    cfg = reference_config()
    violations = 0
    margin = math.inf
    for a, b in DG_CONFIGURATIONS:
        set_a = kernels.AnnularSector(*a)
        set_b = kernels.AnnularSector(*b)
        for t in (0.1, 1.0, 10.0):
            record = kernels.davies_gaffney_check(cfg, t, set_a, set_b)
            violations += not record.holds
            margin = min(margin, record.margin)
    anchor = "Davies-Gaffney off-diagonal bound"
    detail = f"smallest margin {margin:.3e}"
    return [upper("davies_gaffney", anchor, violations, 0, "exact", detail)]


SEMIGROUP_CONFIGURATIONS = (
    (0.1, 0.2, (1.0, 0.0), (1.0, 0.5)),
    (0.5, 0.5, (0.5, 0.0), (1.0, np.pi)),
    (1.0, 0.3, (2.0, 1.0), (1.5, 2.0)),
    (0.2, 1.0, (0.3, 0.0), (0.8, 3.0)),
    (0.7, 0.7, (1.2, 0.0), (1.2, np.pi / 2)),
)


def check_semigroup(ctx):
    cfg = reference_config()
    worst = 0.0
    for t, s, x, y in SEMIGROUP_CONFIGURATIONS:
        residual = kernels.semigroup_residual(
            cfg, t, s, spectrum.PolarPoint(*x), spectrum.PolarPoint(*y)
        )
        worst = max(worst, residual)
    anchor = "K(t+s) = K(t) * K(s)"
    return [upper("semigroup", anchor, worst, ctx.tol("semigroup"), "semigroup")]


def check_diamagnetic(ctx):
    cfg = reference_config()
    worst = 0.0
    for t in (0.1, 1.0):
        for r1, r2, dtheta in ((0.5, 1.0, 0.3), (1.0, 1.0, np.pi), (2.0, 0.7, 4.0)):
            ratio = kernels.diamagnetic_ratio(
                cfg, t, spectrum.PolarPoint(r1, dtheta), spectrum.PolarPoint(r2, 0.0)
            )
            worst = max(worst, ratio)
    return [recorded("diamagnetic_ratio", "|K_alpha| / |K_0|", worst)]


# propagators


def _small_state(ctx):
    cfg = reference_config()
    return random_state(ctx.rng, cfg, spectrum.ModeSet(-6, 6, 6))


def check_unitarity(ctx):
    state = _small_state(ctx)
    norm = state.l2_norm()
    err = 0.0
    for t in ctx.rng.uniform(-10, 10, 5):
        for evolve in (propagators.schrodinger_evolve, propagators.halfwave_evolve):
            err = max(err, abs(evolve(state, t).l2_norm() - norm) / norm)
    anchor = "unitarity of e^{-itH} and e^{it sqrt H}"
    return [upper("unitarity", anchor, err, ctx.tol("unitarity"), "unitarity")]


def check_group_law(ctx):
    state = _small_state(ctx)
    t, s = ctx.rng.uniform(-5, 5, 2)
    composed = propagators.halfwave_evolve(propagators.halfwave_evolve(state, s), t)
    direct = propagators.halfwave_evolve(state, t + s)
    err = float(np.max(np.abs(composed.coeffs - direct.coeffs))) / state.l2_norm()
    anchor = "e^{it sqrt H} e^{is sqrt H} = e^{i(t+s) sqrt H}"
    return [upper("halfwave_group_law", anchor, err, ctx.tol("unitarity"), "unitarity")]


def check_wave_energy(ctx):
    cfg = reference_config()
    u0 = _small_state(ctx)
    u1 = random_state(ctx.rng, cfg, u0.modes)
    energies = [propagators.wave_energy(cfg, u0, u1, t) for t in (0.0, 0.3, 1.7)]
    spread = (max(energies) - min(energies)) / energies[0]
    anchor = "conservation of the wave energy"
    return [upper("wave_energy", anchor, spread, ctx.tol("energy"), "energy")]


def check_wave_initial(ctx):
    cfg = reference_config()
    u0 = _small_state(ctx)
    u1 = random_state(ctx.rng, cfg, u0.modes)
    h = 1e-6
    at_zero = propagators.wave_solution(cfg, u0, u1, 0.0)
    plus = propagators.wave_solution(cfg, u0, u1, h).coeffs
    minus = propagators.wave_solution(cfg, u0, u1, -h).coeffs
    derivative = (plus - minus) / (2 * h)
    err = max(
        float(np.max(np.abs(at_zero.coeffs - u0.coeffs))),
        float(np.max(np.abs(derivative - u1.coeffs))),
    ) / max(u0.l2_norm(), u1.l2_norm())
    return [upper("wave_initial_data", "u(0) = u0, u'(0) = u1", err, 1e-7, "fixed")]


def check_partition_of_unity(ctx):
    lam = np.geomspace(1e-3, 1e3, 1001)
    total = np.zeros_like(lam)
    for j in range(-14, 14):
        total += propagators.LPBump(j)(lam)
    err = float(np.max(np.abs(total - 1)))
    anchor = "sum_j phi(2^-j lambda) = 1"
    return [upper("partition_of_unity", anchor, err, 1e-12, "fixed")]


def check_localization_sum(ctx):
    state = _small_state(ctx)
    total = spectrum.StateCoeffs.zeros(state.config, state.modes)
    for j in propagators.spectral_scales(state):
        total = total + propagators.frequency_localize(state, propagators.LPBump(j))
    err = float(np.max(np.abs(total.coeffs - state.coeffs))) / state.l2_norm()
    return [upper("localization_sum", "sum_j phi_j(sqrt H) f = f", err, 1e-12, "fixed")]


def check_subordination_heat(ctx):
    tol = ctx.tol("subordination_heat")
    worst = 0.0
    for x in (0.25, 1.0, 4.0):
        for y in (0.1, 0.5, 2.0):
            record = propagators.subordination_heat_check(x, y)
            worst = max(worst, record.abs_diff / record.lhs)
    anchor = "e^{-y sqrt x} by heat subordination"
    return [upper("subordination_heat", anchor, worst, tol, "subordination_heat")]


def check_subordination_halfwave(ctx):
    tol = ctx.tol("subordination_halfwave")
    worst = 0.0
    for x in (0.5, 1.0, 4.0, 25.0):
        for t in (0.5, 1.0, 4.0):
            record = propagators.subordination_halfwave_check(x, t)
            worst = max(worst, record.abs_diff)
    anchor = "e^{it sqrt x} as the eps -> 0 limit of subordination"
    name = "subordination_halfwave"
    return [upper(name, anchor, worst, tol, name)]


def check_kernel_row(ctx):
    cfg = reference_config()
    y0 = spectrum.PolarPoint(1.0, 0.3)
    t = 0.5
    modes = spectrum.ModeSet.for_band(cfg, 90.0, y0)
    row = propagators.kernel_row(cfg, modes, y0, lambda lam: np.exp(-t * lam))
    worst = 0.0
    for r, theta in ((0.5, 0.0), (1.0, 1.0), (1.5, 3.0)):
        x = spectrum.PolarPoint(r, theta)
        reference = kernels.heat_kernel_series(cfg, t, x, y0).value
        worst = max(worst, rel(spectrum.synthesize(row, x), reference))
    anchor = "kernel row of e^{-tH} matches the heat kernel"
    return [upper("kernel_row_heat", anchor, worst, 1e-8, "fixed")]


def check_sup_norm_mode(ctx):
    cfg = reference_config()
    modes = spectrum.ModeSet(-2, 2, 3)
    mode = spectrum.ModeIndex(1, 2)
    state = spectrum.StateCoeffs.single(cfg, modes, mode)

    def negative_profile(r):
        return -abs(spectrum.radial_profiles(cfg, mode.k, mode.m, [r])[mode.m, 0])

    r_grid = np.linspace(0.01, 8, 800)
    values = [negative_profile(r) for r in r_grid]
    r0 = r_grid[int(np.argmin(values))]
    best = scipy.optimize.minimize_scalar(
        negative_profile, bracket=(r0 - 0.01, r0, r0 + 0.01), tol=1e-12
    )
    exact = -best.fun
    measured = propagators.sup_norm(state).value
    anchor = "sup norm of a normalized eigenfunction"
    return [upper("sup_norm_single_mode", anchor, rel(measured, exact), 1e-6, "fixed")]


# analysis


def check_norm_equivalence(ctx):
    cfg = reference_config()
    modes = spectrum.ModeSet(-4, 4, 8)
    results = []
    windows = ((0.0, (1 / math.sqrt(2), 1.0)), (0.5, (0.5, 2.0)), (1.0, (0.5, 2.0)))
    anchor = "Besov(2,2) / Sobolev norm equivalence"
    for s, (w_lo, w_hi) in windows:
        ratios = []
        for _ in range(20):
            state = random_state(ctx.rng, cfg, modes)
            besov = analysis.besov_norm(state, s, 2, 2)
            ratios.append(besov / analysis.sobolev_norm(state, s))
        lo, hi = min(ratios), max(ratios)
        outside = max(w_lo - lo, hi - w_hi, 0.0)
        detail = f"ratios in [{lo:.6f}, {hi:.6f}], window [{w_lo:.6f}, {w_hi:.6f}]"
        name = f"besov_sobolev_s{s}"
        results.append(upper(name, anchor, outside, 1e-12, "fixed", detail))
    return results


def check_square_function_p2(ctx):
    cfg = reference_config()
    modes = spectrum.ModeSet(-4, 4, 8)
    ratios = [
        analysis.square_function_ratio(random_state(ctx.rng, cfg, modes), 2)
        for _ in range(20)
    ]
    outside = max(1 / math.sqrt(2) - min(ratios), max(ratios) - 1, 0.0)
    anchor = "square function at p = 2"
    return [upper("square_function_p2", anchor, outside, 1e-12, "fixed")]


SWEEP_SCALES = (0, 1, 2, 3)


def _sweep_detail(records):
    return ", ".join(f"j={r.j}: {r.value:.4g}" for r in records)


def check_bernstein(ctx):
    cfg = reference_config()
    y0 = spectrum.PolarPoint(*ctx.config["decay"]["y0"])
    results = []
    for q, p in ((2, np.inf), (1, 2)):
        records = analysis.bernstein_sweep(cfg, SWEEP_SCALES, p, q, y0)
        values = [r.value for r in records]
        bounded = analysis.no_monotone_growth(values) and all(np.isfinite(values))
        status = PASS if bounded else FAIL
        results.append(
            CheckResult(
                f"bernstein_q{q}_p{p}",
                "Bernstein inequality",
                status,
                max(values),
                None,
                "no monotone growth",
                _sweep_detail(records),
            )
        )
        if q == 2:
            change = abs(values[3] / values[2] - 1)
            anchor = "scale-uniform Bernstein constant"
            results.append(
                upper("bernstein_scale_invariance", anchor, change, 0.3, "fixed")
            )
    return results


def check_square_function(ctx):
    cfg = reference_config()
    y0 = spectrum.PolarPoint(*ctx.config["decay"]["y0"])
    records = analysis.square_function_sweep(cfg, SWEEP_SCALES, 4, y0)
    values = [r.value for r in records]
    status = PASS if analysis.no_monotone_growth(values) else FAIL
    return [
        CheckResult(
            "square_function_p4",
            "square function inequality",
            status,
            max(values),
            None,
            "no monotone growth",
            _sweep_detail(records),
        )
    ]


def check_decay(ctx):
    cfg = reference_config()
    d = ctx.config["decay"]
    y0 = spectrum.PolarPoint(*d["y0"])
    times = analysis.decay_times(d["j"], cfg.b0, d["tmin"], d["tmax"], d["samples"])
    fit = analysis.decay_fit(cfg, d["j"], y0, times)
    anchor = "microlocalized half-wave decay 2^{2j}(1 + 2^j t)^{-1/2}"
    detail = f"constant {fit.fitted_constant:.4g}, r^2 {fit.r_squared:.4f}"
    in_window = -0.6 <= fit.fitted_exponent <= -0.4 and fit.r_squared >= 0.9
    status = PASS if in_window else FAIL
    exponent = CheckResult(
        "decay_exponent", anchor, status, fit.fitted_exponent, -0.5, "0.1", detail
    )
    _, ratios = analysis.decay_short_time(cfg, d["j"], y0)
    spread = max(max(ratios), 1 / min(ratios))
    return [
        exponent,
        upper("decay_short_time", "boundedness for 2^j t <= 1", spread, 4.0, "fixed"),
    ]


STRICHARTZ_PAIRS = ((8.0, 4.0), (6.0, 6.0), (12.0, 4.0))


def check_strichartz(ctx):
    cfg = reference_config()
    s = ctx.config["strichartz"]
    u0, u1, grid = analysis.strichartz_data(cfg, "gaussian", s["T"])
    results = []
    anchor = "Strichartz estimate for the wave equation"
    for q, p in STRICHARTZ_PAIRS:
        pair = analysis.admissible_pair(q, p)
        coarse, fine, ratio = analysis.strichartz_refinement(
            cfg, u0, u1, pair, s["T"], s["nt"], grid
        )
        detail = f"lhs/rhs {coarse.ratio:.6g} -> {fine.ratio:.6g}"
        name = f"strichartz_q{q:g}_p{p:g}"
        change = abs(ratio - 1)
        tol = ctx.tol("refinement")
        results.append(upper(name, anchor, change, tol, "refinement", detail))
    T = 2 * math.pi / cfg.b0
    u0, u1, grid = analysis.strichartz_data(cfg, "gaussian", T)
    pair = analysis.admissible_pair(8, 4)
    record = analysis.strichartz_norm(cfg, u0, u1, pair, T, s["nt"], grid)
    anchor = "Strichartz ratio beyond the Larmor time"
    results.append(recorded("strichartz_long_time", anchor, record.ratio))
    return results


def _admissible_exact(q, p):
    if q == math.inf:
        inv_q = fractions.Fraction(0)
    else:
        inv_q = 1 / fractions.Fraction(q)
    if p == math.inf:
        return False
    if q < 2 or p < 2:
        return False
    return 2 * inv_q <= fractions.Fraction(1, 2) - 1 / fractions.Fraction(p)


def admissibility_cases():
    qs = (1.5, 2, 3, 4, 6, 8, 12, math.inf)
    ps = (1, 2, 4, 6, 8, 12, math.inf)
    cases = [(q, p) for q in qs for p in ps]
    return cases[:50]


def check_admissibility(ctx):
    mismatches = 0
    for q, p in admissibility_cases():
        try:
            analysis.admissible_pair(q, p)
            accepted = True
        except core.AdmissibilityError:
            accepted = False
        mismatches += accepted != _admissible_exact(q, p)
    rejected = 0
    for q, p in ((4.0, 12.0), (2.0, math.inf)):
        try:
            analysis.admissible_pair(q, p)
        except core.AdmissibilityError:
            rejected += 1
    anchor = "admissible (q, p) pairs"
    return [
        upper("admissibility_truth_table", anchor, mismatches, 0, "exact"),
        lower("admissibility_rejections", anchor, rejected, 2, "exact"),
    ]


@dataclasses.dataclass(frozen=True)
class Check:
    suite: str
    name: str
    func: object


CHECKS = (
    Check("specfun", "gamma_recurrence", check_gamma_recurrence),
    Check("specfun", "bessel_series_integral", check_bessel_series_integral),
    Check("specfun", "bessel_recurrence", check_bessel_recurrence),
    Check("specfun", "bessel_generating", check_bessel_generating),
    Check("specfun", "laguerre_poisson", check_laguerre_poisson),
    Check("specfun", "pkm_direct", check_pkm_direct),
    Check("spectrum", "gram", check_gram),
    Check("spectrum", "norm_formula", check_norm_formula),
    Check("spectrum", "eigen_residual", check_eigen_residual),
    Check("spectrum", "expansion", check_expansion),
    Check("spectrum", "parseval", check_parseval),
    Check("kernels", "cross_method", check_cross_method),
    Check("kernels", "mehler", check_mehler),
    Check("kernels", "bessel_identity", check_bessel_identity),
    Check("kernels", "bessel_jump", check_bessel_jump),
    Check("kernels", "gaussian_bounds", check_gaussian_bounds),
    Check("kernels", "davies_gaffney", check_davies_gaffney),
    Check("kernels", "semigroup", check_semigroup),
    Check("kernels", "diamagnetic", check_diamagnetic),
    Check("propagators", "unitarity", check_unitarity),
    Check("propagators", "group_law", check_group_law),
    Check("propagators", "wave_energy", check_wave_energy),
    Check("propagators", "wave_initial", check_wave_initial),
    Check("propagators", "partition_of_unity", check_partition_of_unity),
    Check("propagators", "localization_sum", check_localization_sum),
    Check("propagators", "subordination_heat", check_subordination_heat),
    Check("propagators", "subordination_halfwave", check_subordination_halfwave),
    Check("propagators", "kernel_row", check_kernel_row),
    Check("propagators", "sup_norm_mode", check_sup_norm_mode),
    Check("analysis", "norm_equivalence", check_norm_equivalence),
    Check("analysis", "square_function_p2", check_square_function_p2),
    Check("analysis", "bernstein", check_bernstein),
    Check("analysis", "square_function", check_square_function),
    Check("analysis", "decay", check_decay),
    Check("analysis", "strichartz", check_strichartz),
    Check("analysis", "admissibility", check_admissibility),
)


@dataclasses.dataclass(frozen=True)
class Work:
    index: int
    seed: int
    grid_refine: int
    config: dict


def select_checks(suite="all"):
    if suite != "all" and suite not in SUITES:
        choices = ", ".join(("all",) + SUITES)
        raise core.DomainError(f"Unknown suite '{suite}'; choose from {choices}")
    return [i for i, check in enumerate(CHECKS) if suite in ("all", check.suite)]


def run_check(work):
    """
    Runs CHECKS[work.index] with its own generator, returning the list of
    CheckResults. Library errors are reported as a failed result.
    """
    check = CHECKS[work.index]
    ctx = CheckContext(
        rng=np.random.default_rng([work.seed, work.index]),
        config=work.config,
        grid_refine=work.grid_refine,
    )
    try:
        return check.func(ctx)
    except core.AbkernelError as e:
        detail = f"{type(e).__name__}: {e}"
        logger.warning(f"Check {check.name} raised {detail}")
        return [CheckResult(check.name, check.suite, FAIL, None, None, "", detail)]


def run_suite(
    suite="all",
    seed=core.DEFAULT_SEED,
    config=None,
    grid_refine=2,
    threads=1,
    show_progress=False,
):
    """
    Runs the selected checks and returns their results, suite by suite in
    registry order.
    """
    config = core.load_config() if config is None else config
    work = [Work(i, seed, grid_refine, config) for i in select_checks(suite)]
    logger.info(f"Running {len(work)} checks in suite '{suite}' on {threads} workers")
    results = {}
    if threads == 1:
        for item in tqdm.tqdm(work, disable=not show_progress):
            results[item.index] = run_check(item)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=threads) as executor:
            future_to_work = {executor.submit(run_check, item): item for item in work}
            bar = tqdm.tqdm(
                concurrent.futures.as_completed(future_to_work),
                total=len(work),
                disable=not show_progress,
            )
            for future in bar:
                item = future_to_work[future]
                results[item.index] = future.result()
    return [result for index in sorted(results) for result in results[index]]
