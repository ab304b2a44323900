import pytest

import abkernel
from abkernel import core
from abkernel import kernels
from abkernel import verify


class TestSelectChecks:
    def test_all(self):
        assert verify.select_checks() == list(range(len(verify.CHECKS)))

    @pytest.mark.parametrize("suite", verify.SUITES)
    def test_suite(self, suite):
        selected = verify.select_checks(suite)
        assert len(selected) > 0
        assert all(verify.CHECKS[i].suite == suite for i in selected)

    def test_unknown(self):
        with pytest.raises(abkernel.DomainError):
            verify.select_checks("physics")

    def test_names_unique(self):
        names = [check.name for check in verify.CHECKS]
        assert len(names) == len(set(names))


class TestCheckResult:
    def test_upper(self):
        assert verify.upper("a", "anchor", 1e-9, 1e-8, "fixed").status == verify.PASS
        assert verify.upper("a", "anchor", 1e-7, 1e-8, "fixed").status == verify.FAIL

    def test_lower(self):
        assert verify.lower("a", "anchor", 2.0, 1.8, "fixed").passed
        assert not verify.lower("a", "anchor", 1.0, 1.8, "fixed").passed

    def test_recorded(self):
        result = verify.recorded("a", "anchor", 3.5, "detail")
        assert result.passed
        assert result.bound is None
        d = result.asdict()
        assert d["status"] == verify.RECORDED
        assert d["measured"] == 3.5
        assert d["detail"] == "detail"


class TestRunCheck:
    def test_deterministic(self):
        config = core.load_config()
        index = verify.select_checks("specfun")[0]
        work = verify.Work(index, 42, 2, config)
        assert verify.run_check(work) == verify.run_check(work)

    def test_library_error_reported(self, monkeypatch):
        def broken(ctx):
            raise core.QuadratureError("no convergence")

        check = verify.Check("specfun", "broken", broken)
        monkeypatch.setattr(verify, "CHECKS", verify.CHECKS + (check,))
        work = verify.Work(len(verify.CHECKS) - 1, 42, 2, core.load_config())
        (result,) = verify.run_check(work)
        assert result.status == verify.FAIL
        assert "QuadratureError" in result.detail


class TestRunSuite:
    def test_specfun(self):
        results = verify.run_suite("specfun", threads=1)
        assert len(results) == len(verify.select_checks("specfun"))
        assert all(result.passed for result in results)

    def test_admissibility(self):
        index = [check.name for check in verify.CHECKS].index("admissibility")
        work = verify.Work(index, 42, 2, core.load_config())
        results = verify.run_check(work)
        assert [result.measured for result in results] == [0, 2]
        assert all(result.passed for result in results)

    def test_admissibility_cases(self):
        cases = verify.admissibility_cases()
        assert len(cases) == 50
        assert len(set(cases)) == 50

    @pytest.mark.parametrize("suite", verify.SUITES)
    def test_suite_passes(self, suite):
        results = verify.run_suite(suite, threads=1)
        assert len(results) >= len(verify.select_checks(suite))
        failed = [result.name for result in results if not result.passed]
        assert failed == []


def run_named(name):
    index = [check.name for check in verify.CHECKS].index(name)
    work = verify.Work(index, core.DEFAULT_SEED, 2, core.load_config())
    return {result.name: result for result in verify.run_check(work)}


class TestCrossMethod:
    def test_points(self):
        points = list(verify.cross_method_points())
        assert len(points) == 648
        cfg, t, x, y = points[0]
        assert cfg.alpha == 0.1
        assert y.theta == 0

    def test_passes(self):
        results = run_named("cross_method")
        assert set(results) == {"heat_cross_method", "heat_cross_method_floor"}
        assert all(result.passed for result in results.values())
        assert results["heat_cross_method_floor"].measured == 0

    def patch_kernels(self, monkeypatch, diff, series_error):
        def series(cfg, t, x, y):
            return kernels.KernelValue(
                1e-10 + diff, kernels.KernelMethod.SERIES, series_error
            )

        def closed(cfg, t, x, y, quad_tol):
            return kernels.KernelValue(1e-10, kernels.KernelMethod.CLOSED_FORM, 0.0)

        monkeypatch.setattr(kernels, "heat_kernel_series", series)
        monkeypatch.setattr(kernels, "heat_kernel_closed", closed)

    def test_below_floor_within_estimates(self, monkeypatch):
        self.patch_kernels(monkeypatch, 1e-16, 1e-15)
        results = run_named("cross_method")
        assert results["heat_cross_method"].measured == 0
        assert results["heat_cross_method"].detail.startswith("0 of 648")
        assert results["heat_cross_method_floor"].passed
        assert results["heat_cross_method_floor"].detail == "648 points"

    def test_below_floor_outside_estimates(self, monkeypatch):
        self.patch_kernels(monkeypatch, 1e-14, 1e-15)
        results = run_named("cross_method")
        floor = results["heat_cross_method_floor"]
        assert not floor.passed
        assert floor.measured == 648

    def test_above_floor_relative(self, monkeypatch):
        self.patch_kernels(monkeypatch, 1e-12, 0.0)
        results = run_named("cross_method")
        assert results["heat_cross_method"].measured == pytest.approx(0.01, rel=1e-3)
        assert not results["heat_cross_method"].passed


class TestSweepChecks:
    def test_decay(self):
        results = run_named("decay")
        exponent = results["decay_exponent"]
        assert exponent.passed
        assert -0.6 <= exponent.measured <= -0.4
        assert results["decay_short_time"].passed

    def test_bernstein(self):
        results = run_named("bernstein")
        assert set(results) == {
            "bernstein_q2_pinf",
            "bernstein_scale_invariance",
            "bernstein_q1_p2",
        }
        assert all(result.passed for result in results.values())

    def test_square_function(self):
        (result,) = run_named("square_function").values()
        assert result.name == "square_function_p4"
        assert result.passed
