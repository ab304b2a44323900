import cmath
import math

import numpy as np
import pytest

import abkernel
from abkernel import kernels
from abkernel import spectrum
import util

P = spectrum.PolarPoint


class TestSeriesClosedForm:
    @pytest.mark.parametrize(
        "t, x, y",
        [
            (0.5, P(1, 0), P(1, 0)),
            (0.25, P(1, 0.3), P(0.5, 2.0)),
            (1.0, P(2, 4.0), P(0.7, 0)),
            (0.1, P(0.5, 3.0), P(1.0, 0.5)),
            (2.0, P(1.5, 0), P(1.5, math.pi)),
        ],
    )
    @pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
    def test_agree(self, alpha, t, x, y):
        cfg = spectrum.FieldConfig(alpha, 1.0)
        series = kernels.heat_kernel_series(cfg, t, x, y)
        closed = kernels.heat_kernel_closed(cfg, t, x, y)
        assert series.method == kernels.KernelMethod.SERIES
        assert closed.method == kernels.KernelMethod.CLOSED_FORM
        floor = series.abs_error_estimate + closed.abs_error_estimate
        assert abs(series.value - closed.value) <= 1e-6 * abs(closed.value) + floor

    @pytest.mark.parametrize("b0", [0.5, 2.0])
    def test_agree_field_strength(self, b0):
        cfg = spectrum.FieldConfig(0.3, b0)
        x, y = P(1.2, 1.0), P(0.8, 5.5)
        series = kernels.heat_kernel_series(cfg, 0.4, x, y)
        closed = kernels.heat_kernel_closed(cfg, 0.4, x, y)
        assert series.value == pytest.approx(closed.value, rel=1e-6)

    @pytest.mark.parametrize(
        "alpha, b0, x, y",
        [
            (0.5, 0.5, P(0.2, math.pi), P(0.2, 0)),
            (0.9, 2.0, P(0.2, math.pi), P(2.5, 0)),
            (0.1, 2.0, P(2.5, math.pi), P(2.5, 0)),
        ],
    )
    def test_agree_opposite_short_time(self, alpha, b0, x, y):
        cfg = spectrum.FieldConfig(alpha, b0)
        series = kernels.heat_kernel_series(cfg, 0.05, x, y)
        closed = kernels.heat_kernel_closed(cfg, 0.05, x, y)
        assert np.isfinite(closed.abs_error_estimate)
        floor = series.abs_error_estimate + closed.abs_error_estimate
        assert abs(series.value - closed.value) <= 1e-6 * abs(closed.value) + floor

    def test_zero_at_solenoid(self):
        cfg = util.reference_config()
        origin = P(0, 0)
        assert kernels.heat_kernel_series(cfg, 0.5, origin, P(1, 0)).value == 0
        assert kernels.heat_kernel_closed(cfg, 0.5, origin, P(1, 0)).value == 0
        assert kernels.heat_kernel_series(cfg, 0.5, origin, origin).value == 0

    def test_hermitian(self):
        cfg = spectrum.FieldConfig(0.3, 1.0)
        x, y = P(1.0, 0.4), P(0.6, 2.5)
        kxy = kernels.heat_kernel_series(cfg, 0.7, x, y).value
        kyx = kernels.heat_kernel_series(cfg, 0.7, y, x).value
        assert kxy == pytest.approx(kyx.conjugate(), rel=1e-12)

    def test_rotation_invariant(self):
        cfg = util.reference_config()
        x, y = P(1.0, 0.4), P(0.6, 2.5)
        k1 = kernels.heat_kernel_series(cfg, 0.7, x, y).value
        k2 = kernels.heat_kernel_series(cfg, 0.7, P(1.0, 1.4), P(0.6, 3.5)).value
        assert k1 == pytest.approx(k2, rel=1e-12)

    def test_jump_line_continuous(self):
        # dtheta = pi exactly uses the branch average.
        cfg = spectrum.FieldConfig(0.4, 1.0)
        y = P(1.0, 0.0)
        on = kernels.heat_kernel_closed(cfg, 0.5, P(1.0, math.pi), y).value
        series = kernels.heat_kernel_series(cfg, 0.5, P(1.0, math.pi), y).value
        assert on == pytest.approx(series, rel=1e-6)
        near = kernels.heat_kernel_closed(cfg, 0.5, P(1.0, math.pi + 1e-7), y).value
        assert near == pytest.approx(on, rel=1e-5)

    def test_series_matrix(self):
        cfg = util.reference_config()
        r1, th1 = np.array([0.5, 1.0]), np.array([0.0, 1.0])
        r2, th2 = np.array([1.5, 0.2, 0.9]), np.array([2.0, 0.0, 4.0])
        values, errors = kernels.series_kernel_matrix(cfg, 0.3, r1, th1, r2, th2)
        assert values.shape == (2, 3)
        assert np.all(errors >= 0)
        for i in range(2):
            for j in range(3):
                x, y = P(r1[i], th1[i]), P(r2[j], th2[j])
                k = kernels.heat_kernel_series(cfg, 0.3, x, y)
                assert values[i, j] == pytest.approx(k.value, rel=1e-12)

    @pytest.mark.parametrize("t", [0, -1])
    def test_bad_time(self, t):
        cfg = util.reference_config()
        with pytest.raises(abkernel.DomainError):
            kernels.heat_kernel_series(cfg, t, P(1, 0), P(1, 0))
        with pytest.raises(abkernel.DomainError):
            kernels.heat_kernel_closed(cfg, t, P(1, 0), P(1, 0))

    def test_bad_tail_tol(self):
        cfg = util.reference_config()
        with pytest.raises(abkernel.DomainError):
            kernels.heat_kernel_series(cfg, 1, P(1, 0), P(1, 0), tail_tol=0)

    def test_bad_alpha(self):
        with pytest.raises(abkernel.DomainError):
            kernels.closed_form_kernel(1.0, 1.0, 0.5, P(1, 0), P(1, 0))


class TestMehler:
    @pytest.mark.parametrize("b0", [0.5, 1, 3])
    @pytest.mark.parametrize("t", [0.1, 1, 5])
    def test_diagonal(self, b0, t):
        x = P(1.3, 0.7)
        value = kernels.mehler_kernel(b0, t, x, x).value
        assert value.imag == pytest.approx(0, abs=1e-15)
        assert value.real == pytest.approx(b0 / (4 * math.pi * math.sinh(b0 * t)))

    def test_direct_formula(self):
        b0, t = 1.0, 0.5
        x, y = P(1, 0), P(1, math.pi / 2)
        # x = (1, 0), y = (0, 1): |x - y|^2 = 2 and x1 y2 - x2 y1 = 1
        expected = (
            b0
            / (4 * math.pi * math.sinh(b0 * t))
            * math.exp(-b0 * 2 / (4 * math.tanh(b0 * t)))
            * cmath.exp(0.5j * b0)
        )
        assert kernels.mehler_kernel(b0, t, x, y).value == pytest.approx(expected)

    def test_large_time(self):
        b0, t = 1.0, 30.0
        x, y = P(1, 0), P(2, 1)
        magnitude = abs(kernels.mehler_kernel(b0, t, x, y).value)
        x1, x2 = x.cartesian()
        y1, y2 = y.cartesian()
        d2 = (x1 - y1) ** 2 + (x2 - y2) ** 2
        expected = b0 / (4 * math.pi) * math.exp(-b0 * d2 / 4) * 2 * math.exp(-b0 * t)
        assert magnitude == pytest.approx(expected, rel=1e-10)

    @pytest.mark.parametrize("t", [0.1, 1.0])
    @pytest.mark.parametrize("x, y", [(P(0.5, 0.3), P(1, 0)), (P(2, 4), P(0.7, 0))])
    def test_closed_form_reduction(self, t, x, y):
        reference = kernels.mehler_kernel(2.0, t, x, y).value
        closed = kernels.closed_form_kernel(0.0, 2.0, t, x, y).value
        assert closed == pytest.approx(reference, rel=1e-12)

    def test_small_alpha_continuity(self):
        x, y = P(1.0, 2.0), P(1.0, 0.0)
        reference = kernels.mehler_kernel(1.0, 0.5, x, y).value
        nearby = kernels.closed_form_kernel(1e-8, 1.0, 0.5, x, y).value
        assert nearby == pytest.approx(reference, rel=1e-6)

    def test_diamagnetic(self):
        cfg = util.reference_config()
        for t in [0.1, 1.0]:
            ratio = kernels.diamagnetic_ratio(cfg, t, P(0.5, 0.3), P(1.0, 0))
            assert 0 < ratio < np.inf

    def test_bad_b0(self):
        with pytest.raises(abkernel.DomainError):
            kernels.mehler_kernel(0, 1, P(1, 0), P(1, 0))


class TestHeatKernel:
    @pytest.mark.parametrize("method", ["series", "closed_form", "mehler"])
    def test_methods(self, method):
        cfg = util.reference_config()
        value = kernels.heat_kernel(cfg, 0.5, P(1, 0.2), P(1, 0), method=method)
        assert value.method == kernels.KernelMethod(method)

    def test_auto(self):
        cfg = util.reference_config()
        value = kernels.heat_kernel(cfg, 0.5, P(1, 0.2), P(1, 0))
        assert value.method == kernels.KernelMethod.SERIES

    def test_small_time_uses_closed_form(self):
        cfg = util.reference_config()
        value = kernels.heat_kernel(cfg, 1e-6, P(1, 0), P(1, 0), method="series")
        assert value.method == kernels.KernelMethod.CLOSED_FORM

    def test_bad_method(self):
        with pytest.raises(ValueError):
            kernels.heat_kernel(util.reference_config(), 1, P(1, 0), P(1, 0), "bad")

    def test_asdict(self):
        value = kernels.heat_kernel(util.reference_config(), 0.5, P(1, 0), P(1, 0))
        d = value.asdict()
        assert set(d) == {"re", "im", "method", "abs_error_estimate"}
        assert d["method"] == "series"


class TestPhaseFactor:
    def test_branches(self):
        alpha = 0.3
        assert kernels.phase_factor(alpha, 0.5).value == 1
        assert kernels.phase_factor(alpha, -math.pi).value == 1
        assert kernels.phase_factor(alpha, 4.0).value == pytest.approx(
            cmath.exp(2j * math.pi * alpha)
        )
        assert kernels.phase_factor(alpha, -4.0).value == pytest.approx(
            cmath.exp(-2j * math.pi * alpha)
        )

    def test_unit_modulus(self):
        with pytest.raises(ValueError):
            kernels.PhaseFactor(2.0)


class TestGaussianBounds:
    def test_sharp_at_diagonal(self):
        cfg = util.reference_config()
        t = 0.5
        x = P(1.0, 0.0)
        k = kernels.heat_kernel(cfg, t, x, x)
        ratio = kernels.gaussian_bound_ratio(cfg, t, x, x, "sharp", kernel=k)
        tau = t * cfg.b0
        expected = abs(k.value) * 4 * math.pi * math.sinh(tau) / (
            cfg.b0 * math.exp(-cfg.alpha * tau)
        )
        assert ratio == pytest.approx(expected)

    def test_zero_kernel(self):
        cfg = util.reference_config()
        assert kernels.gaussian_bound_ratio(cfg, 1, P(0, 0), P(1, 0), "flat") == 0

    def test_bad_kind(self):
        with pytest.raises(ValueError):
            cfg = util.reference_config()
            kernels.log_bound_envelope(cfg, 1, P(1, 0), P(1, 0), "x")

    def test_bound_grid(self):
        points = list(kernels.bound_grid([0.1, 1.0], 3.0, 4, 4))
        assert len(points) == 2 * 4 * 4 * 4
        refined = set(kernels.bound_grid([0.1, 1.0], 3.0, 4, 4, refine=2))
        assert len(refined) == 2 * 7 * 7 * 8
        assert set(points) <= refined

    @pytest.mark.parametrize("which", ["sharp", "radial", "flat"])
    def test_fit_constant(self, which):
        cfg = util.reference_config()
        fit = kernels.fit_bound_constant(cfg, which, [0.2, 1.0], 2.0, 3, 4)
        assert fit.which == which
        assert fit.n_points == 2 * 3 * 3 * 4
        assert 0 < fit.constant < np.inf
        refined = kernels.fit_bound_constant(
            cfg, which, [0.2, 1.0], 2.0, 3, 4, refine=2
        )
        assert refined.constant >= fit.constant
        assert refined.refine == 2


class TestDaviesGaffney:
    def test_sector_distance_annuli(self):
        a = kernels.AnnularSector(0, 1)
        b = kernels.AnnularSector(3, 4)
        assert kernels.sector_distance(a, b) == pytest.approx(2)

    def test_sector_distance_opposite(self):
        a = kernels.AnnularSector(1, 2, 0, 0.5)
        b = kernels.AnnularSector(1, 2, math.pi, math.pi + 0.5)
        expected = 2 * math.sin((math.pi - 0.5) / 2)
        assert kernels.sector_distance(a, b) == pytest.approx(expected)

    def test_sector_distance_overlap(self):
        a = kernels.AnnularSector(1, 2, 0, 1)
        b = kernels.AnnularSector(1.5, 3, 0.5, 2)
        assert kernels.sector_distance(a, b) == 0

    @pytest.mark.parametrize(
        "args", [(1, 1), (2, 1), (-1, 1), (0, 1, 1, 1), (0, 1, 0, 7)]
    )
    def test_bad_sector(self, args):
        with pytest.raises(abkernel.DomainError):
            kernels.AnnularSector(*args)

    def test_contains(self):
        sector = kernels.AnnularSector(1, 2, 3 * math.pi / 2, 5 * math.pi / 2)
        # The sector wraps through theta = 0.
        assert sector.contains(1.5, 0.1)
        assert sector.contains(1.5, 2 * math.pi - 0.1)
        assert not sector.contains(1.5, math.pi)
        assert not sector.contains(2.5, 0.1)

    def test_quadrature_area(self):
        sector = kernels.AnnularSector(1, 2, 0, math.pi / 2)
        _, _, w = sector.quadrature()
        assert np.sum(w) == pytest.approx(math.pi / 2 * (4 - 1) / 2)
        annulus = kernels.AnnularSector(1, 2)
        _, _, w = annulus.quadrature()
        assert np.sum(w) == pytest.approx(math.pi * 3)

    @pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
    def test_disk_annulus(self, t):
        cfg = util.reference_config()
        a = kernels.AnnularSector(0, 1)
        b = kernels.AnnularSector(3, 4)
        record = kernels.davies_gaffney_check(cfg, t, a, b)
        assert record.distance == pytest.approx(2)
        assert record.holds
        assert record.lhs <= record.rhs
        d = record.asdict()
        assert d["holds"]
        assert d["margin"] == pytest.approx(record.rhs - record.lhs)

    def test_sectors(self):
        cfg = util.reference_config()
        a = kernels.AnnularSector(0.5, 1.0, 0, math.pi / 3)
        b = kernels.AnnularSector(0.5, 1.0, math.pi, 4 * math.pi / 3)
        for t in [0.1, 1.0]:
            assert kernels.davies_gaffney_check(cfg, t, a, b).holds

    def test_error_includes_quadrature(self):
        cfg = util.reference_config()
        a = kernels.AnnularSector(0.5, 1.0, 0, math.pi / 3)
        b = kernels.AnnularSector(0.5, 1.5, math.pi, 4 * math.pi / 3)
        fine = kernels.davies_gaffney_check(cfg, 0.1, a, b)
        coarse = kernels.davies_gaffney_check(cfg, 0.1, a, b, n_r=8, n_theta=8)
        assert fine.lhs != coarse.lhs
        assert fine.lhs_error >= abs(fine.lhs - coarse.lhs)

    def test_zero_function(self):
        cfg = util.reference_config()
        a = kernels.AnnularSector(0, 1)
        b = kernels.AnnularSector(2, 3)
        record = kernels.davies_gaffney_check(cfg, 1, a, b, f=lambda r, theta: 0 * r)
        assert record.lhs == 0
        assert record.holds

    def test_state_argument(self):
        cfg = util.reference_config()
        a = kernels.AnnularSector(0.2, 1)
        b = kernels.AnnularSector(2, 3)
        f = util.random_state(cfg, spectrum.ModeSet(-1, 1, 1))
        assert kernels.davies_gaffney_check(cfg, 0.5, a, b, f=f).holds

    def test_overlap(self):
        cfg = util.reference_config()
        a = kernels.AnnularSector(0, 2)
        b = kernels.AnnularSector(1, 3)
        with pytest.raises(abkernel.RegionOverlapError):
            kernels.davies_gaffney_check(cfg, 1, a, b)


class TestSemigroup:
    def test_example(self):
        cfg = util.reference_config()
        residual = kernels.semigroup_residual(cfg, 0.2, 0.3, P(1, 0), P(0.8, 1))
        assert residual <= 1e-5

    def test_diagonal(self):
        cfg = util.reference_config()
        x = P(1.0, 0.5)
        assert kernels.semigroup_residual(cfg, 0.5, 0.5, x, x) <= 1e-5

    def test_refinement(self):
        cfg = util.reference_config()
        coarse = spectrum.QuadratureSpec(
            order=8, panels=6, grading_levels=4, n_theta=32
        )
        fine = coarse.refined()
        x, y = P(1, 0), P(0.8, 1)
        r1 = kernels.semigroup_residual(cfg, 0.2, 0.3, x, y, coarse)
        r2 = kernels.semigroup_residual(cfg, 0.2, 0.3, x, y, fine)
        assert r2 < r1


class TestBesselIdentity:
    @pytest.mark.parametrize("z", [0, 0.5 + 0.5j, 1.8j, -0.7 + 1j])
    @pytest.mark.parametrize("x", [0.5, 1.0, 2.0, 10.0])
    def test_identity(self, z, x):
        record = kernels.bessel_integral_identity_check(z, x)
        assert record.abs_diff <= 1e-8 * max(1.0, abs(record.lhs))

    def test_oscillating_order_integral(self):
        # The integrand reaches I_0(10) ~ 2.8e3 while the integral is ~0.1.
        record = kernels.bessel_integral_identity_check(1.8j, 10.0)
        assert record.lhs == pytest.approx(cmath.exp(10 * cmath.cosh(1.8j)), rel=1e-2)
        assert record.abs_diff <= 1e-9

    def test_beyond_jump(self):
        # Only the correction integral survives for |Im z| > pi.
        record = kernels.bessel_integral_identity_check(0.3 + 4j, 1.5)
        assert record.abs_diff <= 1e-8 * max(1.0, abs(record.lhs))

    def test_on_jump_line(self):
        with pytest.raises(abkernel.DomainError):
            kernels.bessel_integral_identity_check(1j * math.pi, 1.0)

    def test_bad_x(self):
        with pytest.raises(abkernel.DomainError):
            kernels.bessel_integral_identity_check(0.5, 0)

    def test_jump(self):
        record = kernels.bessel_identity_jump(0.5, 2.0)
        assert len(record.differences) == 3
        assert record.extrapolated < 1e-4

    def test_jump_rhs(self):
        record = kernels.bessel_identity_jump(0.5, 2.0, side="rhs")
        assert record.extrapolated < 1e-4

    def test_jump_unknown_side(self):
        with pytest.raises(abkernel.DomainError):
            kernels.bessel_identity_jump(0.5, 2.0, side="both")

    def test_jump_not_geometric(self):
        with pytest.raises(abkernel.DomainError):
            kernels.bessel_identity_jump(0.5, 2.0, eps_seq=(1e-2, 1e-3, 5e-4))
