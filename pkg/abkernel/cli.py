import json
import logging
import math
import platform
import sys
import time

import click
import daiquiri
import numba
import numpy as np
import pandas as pd
import scipy

from . import analysis
from . import core
from . import kernels
from . import spectrum
from . import verify

logger = logging.getLogger(__name__)


def get_environment():
    """
    Returns a dictionary describing the environment in which abkernel
    is currently running.
    """
    env = {
        "os": {
            "system": platform.system(),
            "node": platform.node(),
            "release": platform.release(),
            "version": platform.version(),
            "machine": platform.machine(),
        },
        "python": {
            "implementation": platform.python_implementation(),
            "version": platform.python_version(),
        },
        "libraries": {
            "numpy": {"version": np.__version__},
            "scipy": {"version": scipy.__version__},
            "numba": {"version": numba.__version__},
            "pandas": {"version": pd.__version__},
        },
    }
    return env


def get_provenance_dict():
    """
    Returns a dictionary describing this execution of abkernel.
    """
    document = {
        "schema_version": "1.0.0",
        "software": {"name": "abkernel", "version": core.__version__},
        "parameters": {"command": sys.argv[0], "args": sys.argv[1:]},
        "environment": get_environment(),
    }
    return document


def setup_logging(verbosity, log_file=None):
    log_level = "WARN"
    if verbosity > 0:
        log_level = "INFO"
    if verbosity > 1:
        log_level = "DEBUG"
    outputs = ["stderr"]
    if log_file is not None:
        outputs = [daiquiri.output.File(log_file)]
    daiquiri.setup(level=log_level, outputs=outputs, set_excepthook=False)


class Group(click.Group):
    """
    Reports usage errors with the invalid-flags exit status, and exits with
    the status returned by the subcommand.
    """

    def main(
        self,
        args=None,
        prog_name=None,
        complete_var=None,
        standalone_mode=True,
        **extra,
    ):
        try:
            rv = super().main(
                args, prog_name, complete_var, standalone_mode=False, **extra
            )
        except click.UsageError as e:
            e.show()
            rv = core.EXIT_INVALID_FLAGS
        except click.ClickException as e:
            e.show()
            rv = e.exit_code
        except click.Abort:
            click.echo("Aborted!", err=True)
            rv = 1
        if not isinstance(rv, int):
            rv = core.EXIT_OK
        if standalone_mode:
            sys.exit(rv)
        return rv


def fail(code, message):
    click.echo(f"Error: {message}", err=True)
    sys.exit(code)


def _positive(ctx, param, value):
    if value is not None and not value > 0:
        raise click.BadParameter(f"must be > 0, got {value}")
    return value


def _point(ctx, param, value):
    if value is None:
        return None
    try:
        return spectrum.PolarPoint.parse(value)
    except ValueError as e:
        raise click.BadParameter(str(e))


def _exponent(ctx, param, value):
    if value is None:
        return None
    if value.lower() in ("inf", "infinity"):
        return math.inf
    try:
        return float(value)
    except ValueError:
        raise click.BadParameter(f"'{value}' is not a number")


def _tolerances(ctx, param, values):
    """
    Parses repeated NAME=VALUE pairs. A bare number sets the cross-method
    tolerance.
    """
    overrides = {}
    for text in values:
        name, sep, value = text.partition("=")
        if not sep:
            name, value = "cross_method", text
        if name not in core.DEFAULTS["tolerances"]:
            raise click.BadParameter(f"unknown tolerance '{name}'")
        try:
            overrides[name] = float(value)
        except ValueError:
            raise click.BadParameter(f"'{value}' is not a number")
        if not overrides[name] > 0:
            raise click.BadParameter(f"tolerance {name} must be > 0")
    return overrides


def common_options(f):
    options = [
        click.option(
            "--config",
            "config_path",
            default=None,
            type=click.Path(exists=True, dir_okay=False),
            help="JSON file overriding the default configuration",
        ),
        click.option(
            "--tol",
            "tolerances",
            multiple=True,
            callback=_tolerances,
            help="Tolerance override as NAME=VALUE; may be repeated",
        ),
        click.option(
            "--threads",
            default=None,
            type=int,
            help=f"Worker processes (default ${core.THREADS_ENV_VAR} or all cores)",
        ),
        click.option(
            "--seed",
            default=core.DEFAULT_SEED,
            type=int,
            help="Seed for the randomized checks",
        ),
        click.option(
            "--output",
            "output_format",
            default="json",
            type=click.Choice(["json", "csv"]),
        ),
        click.option(
            "--out",
            "out_path",
            default=None,
            type=click.Path(dir_okay=False),
            help="Write output here instead of stdout",
        ),
        click.option(
            "--no-progress", is_flag=True, default=False, help="Don't show progress"
        ),
        click.option("-v", "--verbose", count=True),
        click.option("-l", "--log-file", default=None, type=click.Path(dir_okay=False)),
    ]
    for option in reversed(options):
        f = option(f)
    return f


def field_options(f):
    f = click.option(
        "--b0", default=1.0, type=float, callback=_positive, help="Field strength"
    )(f)
    f = click.option(
        "--alpha", default=0.5, type=float, help="Flux, reduced modulo one"
    )(f)
    return f


def resolve(config_path, tolerances, threads):
    try:
        config = core.load_config(config_path, tolerances)
        threads = core.resolve_threads(threads)
    except ValueError as e:
        fail(core.EXIT_INVALID_FLAGS, str(e))
    return config, threads


def make_field(alpha, b0):
    try:
        cfg, message = spectrum.FieldConfig.normalized(alpha, b0)
    except core.DomainError as e:
        raise click.BadParameter(str(e), param_hint="'--alpha'")
    return cfg, [] if message is None else [message]


def document(config, payload, warnings=()):
    doc = {
        "schema_version": core.SCHEMA_VERSION,
        "provenance": get_provenance_dict(),
        "config": config,
        "warnings": list(warnings),
    }
    doc.update(payload)
    return doc


def _finite(value):
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    if isinstance(value, dict):
        return {k: _finite(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_finite(v) for v in value]
    return value


def emit(doc, output_format, out_path, rows):
    """
    Writes doc as JSON, or rows as CSV with a header line.
    """
    if output_format == "csv":
        text = pd.DataFrame(rows).to_csv(index=False)
    else:
        text = json.dumps(_finite(doc), indent=2) + "\n"
    if out_path is None:
        click.echo(text, nl=False)
    else:
        with open(out_path, "w") as f:
            f.write(text)
        logger.info(f"Wrote {output_format} output to {out_path}")


NUMERICAL_FAILURES = (
    core.QuadratureError,
    core.NonConvergenceError,
    core.BesselOverflowError,
    core.GridTooSmallError,
)

HEAT_ANCHOR = "Bessel series = closed form heat kernel"
HEAT_METHODS = {
    "series": ["series"],
    "closed": ["closed_form"],
    "both": ["series", "closed_form"],
    "mehler": ["mehler"],
}


@click.command()
@field_options
@click.option("--t", "t", required=True, type=float, callback=_positive)
@click.option("--x", "x", required=True, callback=_point, help="Point as r,theta")
@click.option("--y", "y", required=True, callback=_point, help="Point as r,theta")
@click.option(
    "--method",
    default=None,
    type=click.Choice(list(HEAT_METHODS)),
    help="Evaluation method; both cross-checks series against closed form",
)
@common_options
def heat(
    alpha,
    b0,
    t,
    x,
    y,
    method,
    config_path,
    tolerances,
    threads,
    seed,
    output_format,
    out_path,
    no_progress,
    verbose,
    log_file,
):
    """
    Evaluate the heat kernel K(t; x, y).
    """
    setup_logging(verbose, log_file)
    config, _ = resolve(config_path, tolerances, threads)
    cfg, warnings = make_field(alpha, b0)
    method = config["heat"]["method"] if method is None else method
    tol = config["tolerances"]["cross_method"]
    values = {}
    before = time.perf_counter()
    try:
        for name in HEAT_METHODS[method]:
            values[name] = kernels.heat_kernel(
                cfg,
                t,
                x,
                y,
                method=name,
                tail_tol=config["tolerances"]["series_tail"],
                quad_tol=config["tolerances"]["closed_quad"],
            )
    except NUMERICAL_FAILURES as e:
        fail(core.EXIT_NUMERICAL_FAILURE, str(e))
    runtime_ms = 1000 * (time.perf_counter() - before)
    payload = {
        "field": cfg.asdict(),
        "t": t,
        "x": x.asdict(),
        "y": y.asdict(),
        "values": {name: value.asdict() for name, value in values.items()},
        "anchor": HEAT_ANCHOR,
        "tolerance": tol,
        "runtime_ms": runtime_ms,
    }
    disagree = False
    if len(values) == 2:
        series, closed = values["series"], values["closed_form"]
        diff = abs(series.value - closed.value)
        scale = abs(closed.value)
        payload["cross_method_rel_diff"] = diff / scale if scale > 0 else diff
        floor = series.abs_error_estimate + closed.abs_error_estimate
        disagree = diff > 10 * tol * scale + floor
    rows = [{"method": name, **value.asdict()} for name, value in values.items()]
    emit(document(config, payload, warnings), output_format, out_path, rows)
    if disagree:
        fail(
            core.EXIT_METHOD_DISAGREEMENT,
            f"Series and closed form differ by more than 10 x {tol:.1e} relative",
        )


@click.command(name="spectrum")
@field_options
@click.option("--kmin", default=-4, type=int)
@click.option("--kmax", default=4, type=int)
@click.option("--mmax", default=4, type=click.IntRange(min=0))
@common_options
def spectrum_cmd(
    alpha,
    b0,
    kmin,
    kmax,
    mmax,
    config_path,
    tolerances,
    threads,
    seed,
    output_format,
    out_path,
    no_progress,
    verbose,
    log_file,
):
    """
    List the eigenvalues over a window of modes.
    """
    setup_logging(verbose, log_file)
    config, _ = resolve(config_path, tolerances, threads)
    cfg, warnings = make_field(alpha, b0)
    try:
        window = spectrum.ModeSet(kmin, kmax, mmax)
    except core.DomainError as e:
        raise click.BadParameter(str(e), param_hint="'--kmin'")
    rows = spectrum.spectrum_table(cfg, window)
    distinct = np.unique(np.round([row["eigenvalue"] for row in rows], 9))
    multiplicities = [
        {
            "eigenvalue": float(lam),
            "multiplicity": spectrum.multiplicity_in_window(cfg, lam, window),
        }
        for lam in distinct
    ]
    payload = {
        "field": cfg.asdict(),
        "window": {"k_min": kmin, "k_max": kmax, "m_max": mmax},
        "rows": rows,
        "multiplicities": multiplicities,
    }
    emit(document(config, payload, warnings), output_format, out_path, rows)


DECAY_ANCHOR = "microlocalized half-wave decay 2^{2j} (1 + 2^j t)^{-1/2}"


@click.command()
@field_options
@click.option("--j", "j", default=None, type=int, help="Dyadic frequency scale")
@click.option("--tmin", default=None, type=float, callback=_positive)
@click.option("--tmax", default=None, type=float, callback=_positive)
@click.option("--samples", default=None, type=click.IntRange(min=2))
@click.option("--y0", default=None, callback=_point, help="Source point as r,theta")
@common_options
def decay(
    alpha,
    b0,
    j,
    tmin,
    tmax,
    samples,
    y0,
    config_path,
    tolerances,
    threads,
    seed,
    output_format,
    out_path,
    no_progress,
    verbose,
    log_file,
):
    """
    Fit the sup-norm decay of a frequency-localized half-wave kernel.
    """
    setup_logging(verbose, log_file)
    config, threads = resolve(config_path, tolerances, threads)
    cfg, warnings = make_field(alpha, b0)
    defaults = config["decay"]
    j = defaults["j"] if j is None else j
    tmin = defaults["tmin"] if tmin is None else tmin
    tmax = defaults["tmax"] if tmax is None else tmax
    samples = defaults["samples"] if samples is None else samples
    y0 = spectrum.PolarPoint(*defaults["y0"]) if y0 is None else y0
    if y0.r == 0:
        raise click.BadParameter("must not be the origin", param_hint="'--y0'")
    try:
        times = analysis.decay_times(j, cfg.b0, tmin, tmax, samples)
        fit = analysis.decay_fit(
            cfg, j, y0, times, show_progress=not no_progress, threads=threads
        )
    except core.EmptyRegimeError as e:
        fail(core.EXIT_EMPTY_REGIME, str(e))
    except NUMERICAL_FAILURES as e:
        fail(core.EXIT_NUMERICAL_FAILURE, str(e))
    payload = {
        "field": cfg.asdict(),
        "y0": y0.asdict(),
        "fit": fit.asdict(),
        "table": fit.rows(),
        "anchor": DECAY_ANCHOR,
    }
    emit(document(config, payload, warnings), output_format, out_path, fit.rows())


STRICHARTZ_ANCHOR = "wave Strichartz estimate on [0, T]"


@click.command()
@field_options
@click.option("--q", "q", default=None, callback=_exponent, help="Time exponent")
@click.option("--p", "p", default=None, callback=_exponent, help="Space exponent")
@click.option("--T", "T", default=None, type=float, callback=_positive)
@click.option("--data", default=None, type=click.Choice(analysis.STRICHARTZ_PRESETS))
@click.option("--j", "j", default=2, type=int, help="Scale for kernel-row-j data")
@click.option("--nt", default=None, type=int, help="Odd number of time nodes")
@common_options
def strichartz(
    alpha,
    b0,
    q,
    p,
    T,
    data,
    j,
    nt,
    config_path,
    tolerances,
    threads,
    seed,
    output_format,
    out_path,
    no_progress,
    verbose,
    log_file,
):
    """
    Compare the space-time norm of a wave solution with its data norms.
    """
    setup_logging(verbose, log_file)
    config, _ = resolve(config_path, tolerances, threads)
    cfg, warnings = make_field(alpha, b0)
    defaults = config["strichartz"]
    q = defaults["q"] if q is None else q
    p = defaults["p"] if p is None else p
    T = defaults["T"] if T is None else T
    data = defaults["data"] if data is None else data
    nt = defaults["nt"] if nt is None else nt
    try:
        pair = analysis.admissible_pair(q, p)
    except core.AdmissibilityError as e:
        fail(core.EXIT_INADMISSIBLE, str(e))
    try:
        analysis.log_time_nodes(T, nt)
    except core.DomainError as e:
        raise click.BadParameter(str(e), param_hint="'--nt'")
    try:
        u0, u1, grid = analysis.strichartz_data(cfg, data, T, j)
        coarse, fine, refinement = analysis.strichartz_refinement(
            cfg, u0, u1, pair, T, nt, grid
        )
    except core.AdmissibilityError as e:
        fail(core.EXIT_INADMISSIBLE, str(e))
    except NUMERICAL_FAILURES as e:
        fail(core.EXIT_NUMERICAL_FAILURE, str(e))
    except core.DomainError as e:
        # e.g. a --j whose frequency band holds no eigenvalue for this --b0
        fail(core.EXIT_INVALID_FLAGS, str(e))
    except core.AbkernelError as e:
        fail(core.EXIT_NUMERICAL_FAILURE, str(e))
    record = {
        "q": pair.q,
        "p": pair.p,
        "s": pair.s,
        "T": T,
        "data": data,
        "lhs": coarse.lhs,
        "rhs": coarse.rhs,
        "ratio": coarse.ratio,
        "refinement_ratio": refinement,
    }
    payload = {
        "field": cfg.asdict(),
        "result": record,
        "refined": fine.asdict(),
        "anchor": STRICHARTZ_ANCHOR,
        "tolerance": config["tolerances"]["refinement"],
    }
    emit(document(config, payload, warnings), output_format, out_path, [record])


@click.command(name="verify")
@click.option(
    "--suite", default="all", type=click.Choice(("all",) + verify.SUITES)
)
@click.option(
    "--grid-refine",
    default=2,
    type=click.IntRange(min=2),
    help="Refinement factor for the fitted bound constants",
)
@common_options
def verify_cmd(
    suite,
    grid_refine,
    config_path,
    tolerances,
    threads,
    seed,
    output_format,
    out_path,
    no_progress,
    verbose,
    log_file,
):
    """
    Run the property suites and report every check.
    """
    setup_logging(verbose, log_file)
    config, threads = resolve(config_path, tolerances, threads)
    results = verify.run_suite(
        suite,
        seed=seed,
        config=config,
        grid_refine=grid_refine,
        threads=threads,
        show_progress=not no_progress,
    )
    rows = [result.asdict() for result in results]
    summary = {
        status: sum(result.status == status for result in results)
        for status in (verify.PASS, verify.FAIL, verify.RECORDED)
    }
    payload = {"suite": suite, "seed": seed, "results": rows, "summary": summary}
    emit(document(config, payload), output_format, out_path, rows)
    if summary[verify.FAIL] > 0:
        fail(core.EXIT_CHECK_FAILED, f"{summary[verify.FAIL]} checks failed")


@click.version_option(core.__version__)
@click.group(cls=Group)
def cli():
    pass


cli.add_command(heat)
cli.add_command(spectrum_cmd)
cli.add_command(decay)
cli.add_command(strichartz)
cli.add_command(verify_cmd)
