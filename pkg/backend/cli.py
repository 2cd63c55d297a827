# backend/cli.py

"""
Command-line entry point.

    python backend/cli.py perm matrix.json
    python backend/cli.py estimate matrix.json --samples 100000 --seed 7
    python backend/cli.py bounds matrix.json [--T 1.0]
    python backend/cli.py verify [--config verify.json]
    python backend/cli.py concentration [--config conc.json]
    python backend/cli.py tightness [--config tight.json]
    python backend/cli.py gen haar_unitary 8 --seed 3 -o haar8.json
    python backend/cli.py serve --port 5000

Exit status: 0 when every assertion passed, 1 on a violation (or a structural /
numerical failure), 2 on usage and parse errors.
"""

import functools
import json
import logging
import sys

import click

import config
from errors import PermBoundError
from services.bound_service import bound_report
from services.experiment_service import (
    load_config, run_concentration, run_tightness, run_verify,
)
from services.glynn_service import estimate_perm
from services.linalg_service import EnsembleKind, gen_ensemble
from services.matrix_io import matrix_to_payload, read_matrix, write_matrix
from services.permanent_service import perm_exact
from services.rng_service import MAX_SEED

log = logging.getLogger("permbound")

SEED = click.IntRange(0, MAX_SEED - 1)


def _set_verbose(ctx, param, value):
    if value:
        logging.getLogger().setLevel(logging.DEBUG)


verbose_option = click.option("--verbose", "-v", is_flag=True, expose_value=False,
                              callback=_set_verbose, help="Log at DEBUG level.")


def _guarded(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except PermBoundError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(e.exit_code)
    return wrapper


def _experiment_options(fn):
    fn = click.option("--progress", is_flag=True, help="Show a progress bar.")(fn)
    fn = click.option("--workers", type=click.IntRange(1), default=None, help="joblib workers.")(fn)
    fn = click.option("--output", type=click.Path(file_okay=False), default=None,
                      help="Directory for reports (overrides the config).")(fn)
    fn = click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                      default=None, help="ExperimentConfig JSON file.")(fn)
    return verbose_option(fn)


def _load(command, config_path, output, workers, progress):
    cfg = load_config(config_path, command)
    update = {"output": output, "workers": workers, "progress": progress or None}
    return cfg.model_copy(update={k: v for k, v in update.items() if v is not None})


def format_value(value):
    """Integer-valued reals print as integers ("10"), everything else as repr."""
    if isinstance(value, float) and value.is_integer() and abs(value) < 2 ** 53:
        return str(int(value))
    return repr(value)


def _emit(text, output):
    if output:
        with open(output, "w") as f:
            f.write(text + "\n")
        log.info("wrote %s", output)
    else:
        click.echo(text)


@click.group()
def cli():
    """Exact permanents, the Glynn estimator and stability bounds on |perm(A)|."""
    logging.basicConfig(level=config.LOG_LEVEL,
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s")


# ------------------ single-matrix commands ------------------

@cli.command()
@click.argument("path", type=click.Path(dir_okay=False))
@click.option("--cross-check/--no-cross-check", default=True,
              help="Check the result against a second exact engine.")
@verbose_option
@_guarded
def perm(path, cross_check):
    """Print perm(A) and its ln-modulus form."""
    A = read_matrix(path)
    result = perm_exact(A, cross_check=cross_check)
    click.echo(format_value(result.value))
    click.echo(f"ln|perm| = {result.log_abs!r}  phase = {format_value(result.phase)}")


@cli.command()
@click.argument("path", type=click.Path(dir_okay=False))
@click.option("--samples", type=click.IntRange(1), default=10000, show_default=True)
@click.option("--seed", type=SEED, required=True)
@click.option("--T", "T", type=float, default=None, help="Upper bound on ||A||_2 (default: computed).")
@click.option("--workers", type=click.IntRange(1), default=config.WORKERS)
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
@verbose_option
@_guarded
def estimate(path, samples, seed, T, workers, output):
    """Monte Carlo Glynn estimate of perm(A)."""
    A = read_matrix(path)
    report = estimate_perm(A, T=T, samples=samples, seed=seed, workers=workers)
    _emit(report.model_dump_json(indent=2), output)
    if report.exceeded_Tn or report.exceeded_l1:
        sys.exit(1)


@cli.command()
@click.argument("path", type=click.Path(dir_okay=False))
@click.option("--T", "T", type=float, default=None, help="Upper bound on ||A||_2 (default: computed).")
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
@verbose_option
@_guarded
def bounds(path, T, output):
    """BoundReport for A as JSON."""
    A = read_matrix(path)
    _emit(bound_report(A, T=T).model_dump_json(indent=2), output)


# ------------------ experiments ------------------

@cli.command()
@_experiment_options
@_guarded
def verify(config_path, output, workers, progress):
    """Soundness sweep of every applicable bound against exact permanents."""
    cfg = _load("verify", config_path, output, workers, progress)
    report, _ = run_verify(cfg)
    click.echo(f"matrices tested: {report.matrices_tested}  skipped: {len(report.skipped)}  "
               f"violations: {len(report.violations)}")
    for v in report.violations:
        click.echo(f"  {v.matrix_id} {v.bound}: ln|perm| = {v.log_perm!r} > {v.log_value!r}")
    if not report.passed:
        sys.exit(1)


@cli.command()
@_experiment_options
@_guarded
def concentration(config_path, output, workers, progress):
    """Empirical tails against the closed-form tail bounds."""
    cfg = _load("concentration", config_path, output, workers, progress)
    run = run_concentration(cfg)
    failures = run.failures
    asserted = sum(1 for r in run.rows if r["asserted"])
    click.echo(f"rows: {len(run.rows)}  asserted: {asserted}  failed: {len(failures)}")
    for r in failures:
        click.echo(f"  {r['matrix_id']} {r['statistic']} t={r['t']!r}: "
                   f"{r['empirical']!r} > {r['bound']!r}")
    if failures:
        sys.exit(1)


@cli.command()
@_experiment_options
@_guarded
def tightness(config_path, output, workers, progress):
    """delta * I probe: ln perm against -n(1 - delta) and every theorem bound."""
    cfg = _load("tightness", config_path, output, workers, progress)
    df = run_tightness(cfg)
    bad = df[df["asserted"] & ~df["envelope_ok"]]
    click.echo(f"rows: {len(df)}  envelope failures: {len(bad)}")
    for _, r in bad.iterrows():
        click.echo(f"  n={r['n']} delta={r['delta']!r}: ln perm = {r['ln_perm']!r}")
    if len(bad):
        sys.exit(1)


# ------------------ utilities ------------------

def _parse_param(text):
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise click.BadParameter(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


@cli.command()
@click.argument("kind", type=click.Choice([k.value for k in EnsembleKind]))
@click.argument("n", type=click.IntRange(1))
@click.option("--seed", type=SEED, required=True)
@click.option("--param", "params", multiple=True, help="Ensemble parameter key=value.")
@click.option("-o", "--output", type=click.Path(dir_okay=False), default=None)
@verbose_option
@_guarded
def gen(kind, n, seed, params, output):
    """Write a seeded ensemble matrix in the matrix file format."""
    A = gen_ensemble(kind, n, dict(_parse_param(p) for p in params), seed)
    if output:
        write_matrix(A, output)
        log.info("wrote %s", output)
    else:
        click.echo(json.dumps(matrix_to_payload(A)))


@cli.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=5000, show_default=True)
@verbose_option
def serve(host, port):
    """Run the JSON HTTP service."""
    from app import create_app

    create_app().run(host=host, port=port)


if __name__ == "__main__":
    cli()
