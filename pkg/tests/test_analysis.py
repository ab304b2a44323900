import fractions
import math

import numpy as np
import pytest

import abkernel
from abkernel import analysis
from abkernel import propagators
from abkernel import spectrum

import util


def exact_admissible(q, p):
    if q < 2 or p < 2 or p == math.inf:
        return False
    inv_q = 0 if q == math.inf else fractions.Fraction(1) / fractions.Fraction(q)
    return 2 * inv_q <= fractions.Fraction(1, 2) - 1 / fractions.Fraction(p)


QS = [1.5, 2, 3, 4, 6, 8, 12, math.inf]
PS = [1, 2, 4, 6, 8, 12, math.inf]


class TestAdmissibility:
    @pytest.mark.parametrize("q", QS)
    @pytest.mark.parametrize("p", PS)
    def test_truth_table(self, q, p):
        if exact_admissible(q, p):
            pair = analysis.admissible_pair(q, p)
            assert pair.q == q
            assert pair.p == p
        else:
            with pytest.raises(abkernel.AdmissibilityError):
                analysis.admissible_pair(q, p)

    @pytest.mark.parametrize(
        "q, p, s",
        [
            (6, 6, 0.5),
            (12, 4, 5 / 12),
            (8, 4, 3 / 8),
            (math.inf, 2, 0),
            (math.inf, 4, 0.5),
        ],
    )
    def test_regularity(self, q, p, s):
        assert analysis.admissible_pair(q, p).s == pytest.approx(s)

    @pytest.mark.parametrize("q, p", [(4, 12), (2, math.inf)])
    def test_rejected(self, q, p):
        with pytest.raises(abkernel.AdmissibilityError, match="FAILS"):
            analysis.admissible_pair(q, p)

    def test_conditions(self):
        conditions = analysis.admissibility_conditions(4, 12)
        assert [holds for _, holds in conditions] == [True, False]
        conditions = analysis.admissibility_conditions(2, math.inf)
        assert [holds for _, holds in conditions] == [False, False]

    def test_error_is_domain_error(self):
        with pytest.raises(abkernel.DomainError):
            analysis.admissible_pair(1, 1)


class TestDecayRegime:
    def test_window(self):
        lo, hi = analysis.regime_window(4, 1.0)
        assert lo == 1 / 16
        assert hi == pytest.approx(2 * math.pi)

    def test_regime(self):
        times = [5, 0.1, 1, 0.3]
        assert analysis.decay_regime(2, 1.0, times) == [0.3, 1]

    def test_times(self):
        times = analysis.decay_times(4, 1.0, 0.0625, 1, 16)
        assert len(times) == 16
        assert times[0] == pytest.approx(0.0625)
        assert times[-1] == pytest.approx(1)
        assert np.all(np.diff(times) > 0)

    def test_times_clipped(self):
        times = analysis.decay_times(2, 1.0, 0.01, 100, 5)
        assert times[0] == pytest.approx(0.25)
        assert times[-1] == pytest.approx(math.pi / 2)

    def test_single_sample(self):
        assert analysis.decay_times(4, 1.0, 0.1, 1, 1) == [0.1]

    @pytest.mark.parametrize(
        "j, b0, tmin, tmax", [(0, 1.0, 5, 10), (4, 1.0, 0.001, 0.01), (1, 100.0, 1, 2)]
    )
    def test_empty(self, j, b0, tmin, tmax):
        with pytest.raises(abkernel.EmptyRegimeError):
            analysis.decay_times(j, b0, tmin, tmax, 4)

    def test_decay_fit_empty(self):
        cfg = util.reference_config()
        with pytest.raises(abkernel.EmptyRegimeError):
            analysis.decay_fit(cfg, 4, spectrum.PolarPoint(1), [10.0, 20.0])

    def test_envelope(self):
        assert analysis.decay_envelope(2, 0) == 16
        assert analysis.decay_envelope(2, 2) == pytest.approx(16 / 3)


class TestFitDecay:
    def test_synthetic(self):
        j = 3
        times = np.geomspace(1 / 8, 1, 10)
        sup_norms = [2.5 * analysis.decay_envelope(j, t) for t in times]
        fit = analysis.fit_decay(j, times, sup_norms)
        assert fit.fitted_exponent == pytest.approx(-0.5)
        assert fit.fitted_constant == pytest.approx(2.5)
        assert fit.r_squared == pytest.approx(1)

    def test_rows(self):
        fit = analysis.fit_decay(1, [0.5, 1.0], [3.0, 2.0])
        rows = fit.rows()
        assert len(rows) == 2
        assert set(rows[0]) == {"t", "sup_norm", "bound_envelope"}
        assert rows[1]["sup_norm"] == 2.0

    def test_too_few(self):
        with pytest.raises(abkernel.EmptyRegimeError):
            analysis.fit_decay(1, [0.5], [1.0])

    def test_sup_norms_of_single_mode(self):
        cfg = util.reference_config()
        state = util.single_mode(cfg, 0, 1)
        grid = propagators.PolarGrid.for_state(state)
        values = analysis.decay_sup_norms(state, [0, 0.5, 1.0], grid)
        np.testing.assert_allclose(values, values[0], rtol=1e-12)


class TestMonotoneGrowth:
    @pytest.mark.parametrize(
        "values, expected",
        [
            ([1, 2, 4], False),
            ([1, 2, 1.5], True),
            ([1], True),
            ([1, 1.05, 1.1], True),
            ([], True),
        ],
    )
    def test_values(self, values, expected):
        assert analysis.no_monotone_growth(values) is expected


class TestSweeps:
    @pytest.mark.parametrize("q, p", [(2, np.inf), (1, 2)])
    def test_bernstein(self, q, p):
        cfg = util.reference_config()
        y0 = spectrum.PolarPoint(1.0, 0.0)
        records = analysis.bernstein_sweep(cfg, [2, 0, 1], p, q, y0)
        assert [record.j for record in records] == [0, 1, 2]
        values = [record.value for record in records]
        assert all(np.isfinite(values))
        assert all(value > 0 for value in values)
        assert analysis.no_monotone_growth(values)

    def test_square_function(self):
        cfg = util.reference_config()
        y0 = spectrum.PolarPoint(1.0, 0.0)
        records = analysis.square_function_sweep(cfg, [0, 1, 2], 4, y0)
        values = [record.value for record in records]
        assert all(np.isfinite(values))
        assert analysis.no_monotone_growth(values)
        assert records[0].asdict() == {"j": 0, "value": values[0]}


class TestNorms:
    def test_sobolev(self):
        cfg = util.reference_config()
        state = util.single_mode(cfg, 0, 0)
        assert analysis.sobolev_norm(state, 1) == pytest.approx(math.sqrt(2))
        assert analysis.sobolev_norm(state, 0) == pytest.approx(1)
        assert analysis.sobolev_norm(state, -1) == pytest.approx(math.sqrt(0.5))

    def test_spatial_l2(self):
        cfg = util.reference_config()
        state = util.random_state(cfg, spectrum.ModeSet(-3, 3, 3))
        assert analysis.spatial_norm(state, 2) == state.l2_norm()

    def test_besov_matches_square_function(self):
        cfg = util.reference_config(0.3, 2.0)
        state = util.random_state(cfg, spectrum.ModeSet(-5, 5, 5))
        besov = analysis.besov_norm(state, 0, 2, 2)
        square = analysis.square_function_ratio(state, 2)
        assert besov == pytest.approx(square * state.l2_norm(), rel=1e-12)
        assert 1 / math.sqrt(2) <= square <= 1

    def test_besov_regularity(self):
        cfg = util.reference_config()
        state = util.random_state(cfg, spectrum.ModeSet(-4, 4, 4))
        assert analysis.besov_norm(state, 1, 2, 2) > analysis.besov_norm(state, 0, 2, 2)

    def test_besov_zero(self):
        cfg = util.reference_config()
        state = spectrum.StateCoeffs.zeros(cfg, spectrum.ModeSet(-1, 1, 1))
        assert analysis.besov_norm(state, 1, 2, 2) == 0

    @pytest.mark.parametrize("p, r", [(0.5, 2), (2, 0.5), (2, math.inf)])
    def test_besov_bad_args(self, p, r):
        cfg = util.reference_config()
        with pytest.raises(abkernel.DomainError):
            analysis.besov_norm(util.single_mode(cfg), 0, p, r)

    def test_bernstein_single_mode(self):
        cfg = util.reference_config()
        state = util.single_mode(cfg, 0, 0)
        ratio = analysis.bernstein_ratio(state, 0, 2, 2)
        assert ratio == pytest.approx(float(propagators.LPBump(0)(math.sqrt(2))))

    @pytest.mark.parametrize("p, q", [(2, 4), (2, 0.5)])
    def test_bernstein_bad_args(self, p, q):
        cfg = util.reference_config()
        with pytest.raises(abkernel.DomainError):
            analysis.bernstein_ratio(util.single_mode(cfg), 0, p, q)

    def test_bernstein_zero(self):
        cfg = util.reference_config()
        state = spectrum.StateCoeffs.zeros(cfg, spectrum.ModeSet(-1, 1, 1))
        with pytest.raises(abkernel.DomainError):
            analysis.bernstein_ratio(state, 0, 4, 2)

    @pytest.mark.parametrize("p", [1, math.inf])
    def test_square_function_bad_p(self, p):
        cfg = util.reference_config()
        with pytest.raises(abkernel.DomainError):
            analysis.square_function_ratio(util.single_mode(cfg), p)


class TestKernelRows:
    def test_reach(self):
        d = analysis.kernel_reach(2.0, 1e-4)
        assert math.exp(-2.0 * d**2 / 4) == pytest.approx(1e-4)

    def test_local_grid(self):
        cfg = util.reference_config()
        y0 = spectrum.PolarPoint(1.0)
        grid = analysis.local_grid(cfg, y0, 0.5, 3)
        assert grid.r_max == pytest.approx(1.5 + analysis.kernel_reach(1.0))
        assert grid.spacing == "uniform"
        assert grid.n_r >= 200
        assert grid.n_theta >= 256
        assert grid.n_theta & (grid.n_theta - 1) == 0

    def test_localized_row_support(self):
        cfg = util.reference_config()
        state = analysis.localized_kernel_row(cfg, 1, spectrum.PolarPoint(1.0))
        assert not state.is_zero()
        root = np.sqrt(state.eigenvalues()[state.coeffs != 0])
        assert np.all(root > 1)
        assert np.all(root < 4)


class TestStrichartz:
    def test_time_nodes(self):
        nodes = analysis.log_time_nodes(2.0, 33)
        assert len(nodes) == 33
        assert nodes[0] == pytest.approx(2.0**-9)
        assert nodes[-1] == pytest.approx(2.0)

    @pytest.mark.parametrize("nt", [1, 2, 32])
    def test_time_nodes_bad(self, nt):
        with pytest.raises(abkernel.DomainError):
            analysis.log_time_nodes(1.0, nt)

    def test_presets(self):
        cfg = util.reference_config()
        u0, u1, grid = analysis.strichartz_data(cfg, "single-mode")
        assert u0[spectrum.ModeIndex(0, 1)] == 1
        assert u0.l2_norm() == 1
        assert u1.is_zero()
        assert grid is None

    def test_unknown_preset(self):
        cfg = util.reference_config()
        with pytest.raises(abkernel.DomainError):
            analysis.strichartz_data(cfg, "plane-wave")

    def test_energy_endpoint(self):
        # At (q, p) = (inf, 2) both sides reduce to the L^2 norm of u0.
        cfg = util.reference_config()
        u0, u1, _ = analysis.strichartz_data(cfg, "single-mode")
        record = analysis.strichartz_norm(cfg, u0, u1, (math.inf, 2), 1.0)
        assert record.s == 0
        assert record.lhs == pytest.approx(1)
        assert record.rhs == pytest.approx(1)
        assert record.asdict()["ratio"] == pytest.approx(1)

    def test_single_mode(self):
        cfg = util.reference_config()
        u0, u1, _ = analysis.strichartz_data(cfg, "single-mode")
        record = analysis.strichartz_norm(cfg, u0, u1, (8, 4), 1.0, nt=9)
        # lambda_{0,1} = 4, s = 3/8
        assert record.rhs == pytest.approx(4 ** (3 / 16))
        assert 0 < record.lhs < np.inf
        assert record.nt == 9

    def test_refinement(self):
        cfg = util.reference_config()
        u0, u1, _ = analysis.strichartz_data(cfg, "single-mode")
        coarse, fine, ratio = analysis.strichartz_refinement(
            cfg, u0, u1, (math.inf, 2), 1.0, nt=5
        )
        assert fine.nt == 9
        assert ratio == pytest.approx(1)

    def test_inadmissible(self):
        cfg = util.reference_config()
        u0, u1, _ = analysis.strichartz_data(cfg, "single-mode")
        with pytest.raises(abkernel.AdmissibilityError):
            analysis.strichartz_norm(cfg, u0, u1, (4, 12), 1.0)

    def test_bad_time(self):
        cfg = util.reference_config()
        u0, u1, _ = analysis.strichartz_data(cfg, "single-mode")
        with pytest.raises(abkernel.DomainError):
            analysis.strichartz_norm(cfg, u0, u1, (8, 4), 0)
