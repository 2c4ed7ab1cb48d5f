"""Command line entry point ``torus-renorm``.

Exit codes: 0 success, 1 IO or configuration, 2 continued fractions,
3 renormalization, 4 conjugacy, 5 rotation.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import _accel
from .config import RunConfig
from .errors import (
    AccuracyError,
    ConfigError,
    DomainError,
    EmptyExpansionError,
    MalformedScheduleError,
    NearSingularMapError,
    PreconditionError,
    StepFailure,
    TorusRenormError,
)
from .lattice import expand, expansion_to_dict, op_norm

LOGGER = logging.getLogger("torus_renorm")

EXIT_IO, EXIT_CF, EXIT_RENORM, EXIT_CONJ, EXIT_ROT = 1, 2, 3, 4, 5


class Failure(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, ``repr`` floats, trailing newline."""
    from .renorm import _jsonable

    return json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n"


def _write(path, text):
    try:
        Path(path).write_text(text)
    except OSError as exc:
        raise Failure(EXIT_IO, f"cannot write {path}: {exc}") from exc


def _setup(config, threads, verbose) -> RunConfig:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    _accel.set_threads(threads if threads is not None else _accel.threads_from_env())
    try:
        if config is None:
            return RunConfig.from_dict({})
        if not Path(config).is_file():
            raise Failure(EXIT_IO, f"config file not found: {config}")
        return RunConfig.load(config)
    except ConfigError as exc:
        raise Failure(EXIT_IO, str(exc)) from exc


def _common(func):
    func = click.option("--verbose", "-v", is_flag=True, help="Debug logging to stderr.")(func)
    func = click.option("--threads", type=int, default=None,
                        help="Cap worker threads (fallback: TORUS_RENORM_THREADS).")(func)
    func = click.option("--no-fields", is_flag=True, help="Omit per-step fields and maps from JSON.")(func)
    func = click.option("--out", type=click.Path(dir_okay=False), default=None, help="Output file.")(func)
    func = click.option("--config", type=click.Path(dir_okay=False), default=None, help="JSON run config.")(func)
    return func


def _guard(func):
    def wrapper(*args, **kwargs):
        try:
            func(*args, **kwargs)
        except Failure as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(exc.code)
    wrapper.__name__ = func.__name__
    wrapper.__doc__ = func.__doc__
    return wrapper


@click.group()
@click.version_option(package_name="artifact")
def main():
    """Continued fractions, renormalization and conjugacies of torus flows."""


# ---------------------------------------------------------------------- pipeline pieces

def _expansion(cfg: RunConfig, code=EXIT_CF):
    from .renorm import expansion_for

    try:
        omega = cfg.frequency()
        t_max = cfg["depth"]["t_max"]
        if t_max is not None:
            return expand(omega, t_max, sigma_rule=cfg.sigma_rule())
        return expansion_for(omega, cfg["depth"]["n_max"] + 1, cfg.sigma_rule())
    except (DomainError, EmptyExpansionError, MalformedScheduleError, TorusRenormError) as exc:
        raise Failure(code, f"expansion failed: {type(exc).__name__}: {exc}") from exc


def _trace(cfg: RunConfig, exp):
    from .renorm import build_schedule, run

    try:
        sched = build_schedule(exp, cfg["rho"], cfg["nu"], cfg["delta"], cfg["depth"]["n_max"],
                               auto_raise=cfg["auto_raise_rho"])
        if sched.rho0 != cfg["rho"]:
            cfg.data["rho"] = sched.rho0
        X = cfg.field(exp.omega)
        n_max = min(cfg["depth"]["n_max"], len(sched.omega) - 1)
        return run(X, exp, sched, n_max=n_max, enforce=cfg["enforce"], tol=cfg["tolerances"]["newton"])
    except PreconditionError as exc:
        raise Failure(EXIT_RENORM, f"domain-exit: {exc}") from exc
    except (TorusRenormError, ValueError) as exc:
        raise Failure(EXIT_RENORM, f"{type(exc).__name__}: {exc}") from exc


def cf_summary_csv(exp) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "t_n", "norm_P_n", "gamma_n", "delta_n", "A_n"])
    for s in exp.steps:
        w.writerow([s.n, repr(s.t), repr(op_norm(s.P)), repr(s.gamma), repr(s.delta),
                    "" if s.A is None else repr(s.A)])
    return buf.getvalue()


# ---------------------------------------------------------------------- commands

@main.command("cf")
@_common
@_guard
def cmd_cf(config, out, no_fields, threads, verbose):
    """Continued fraction expansion; CSV summary to stdout."""
    cfg = _setup(config, threads, verbose)
    exp = _expansion(cfg)
    _write(out or cfg["outputs"]["cf"], dumps(expansion_to_dict(exp)))
    click.echo(cf_summary_csv(exp), nl=False)


@main.command("renorm")
@_common
@_guard
def cmd_renorm(config, out, no_fields, threads, verbose):
    """Schedule and renormalization run; exit 3 on domain-exit."""
    cfg = _setup(config, threads, verbose)
    exp = _expansion(cfg)
    trace = _trace(cfg, exp)
    _write(out or cfg["outputs"]["trace"], dumps(trace.to_dict(fields=not no_fields)))
    summary = trace.summary_csv()
    if cfg["outputs"]["summary"]:
        _write(cfg["outputs"]["summary"], summary)
    click.echo(summary, nl=False)
    click.echo(f"verdict: {trace.verdict}" + (f" ({trace.reason})" if trace.reason else ""), err=True)
    if trace.verdict == "domain-exit":
        sys.exit(EXIT_RENORM)


@main.command("conjugacy")
@_common
@_guard
def cmd_conjugacy(config, out, no_fields, threads, verbose):
    """Compose the conjugacy from a run and verify ``X o H = DH omega``."""
    from .conjugacy import chain_from_trace, check_chain

    cfg = _setup(config, threads, verbose)
    exp = _expansion(cfg)
    trace = _trace(cfg, exp)
    if not trace.maps:
        raise Failure(EXIT_CONJ, "the run produced no elimination maps")
    n = len(trace.maps) - 1
    st = exp.steps[n]
    try:
        chain = chain_from_trace(trace, exp)
        dist = trace.final_dist if trace.final_map is not None else trace.steps[-1].dist
        chain = check_chain(chain, trace.steps[0].field, exp.omega.components,
                            cfg["tolerances"]["conjugacy_grid"], lam=st.lam, P=st.P, dist=dist)
    except (NearSingularMapError, TorusRenormError) as exc:
        raise Failure(EXIT_CONJ, f"{type(exc).__name__}: {exc}") from exc
    record = chain.to_dict()
    if no_fields:
        record.pop("maps")
        record.pop("composed")
    record["verdict"] = trace.verdict
    _write(out or cfg["outputs"]["chain"], dumps(record))
    click.echo(f"residual {chain.check.residual!r} identity_bound {chain.check.identity_bound!r}")
    click.echo("c1_deltas " + " ".join(repr(v) for v in chain.c1_deltas))
    if not chain.check.residual < cfg["tolerances"]["conjugacy"]:
        raise Failure(EXIT_CONJ, f"residual {chain.check.residual:.3e} above {cfg['tolerances']['conjugacy']:.1e}")


@main.command("rotate")
@_common
@_guard
def cmd_rotate(config, out, no_fields, threads, verbose):
    """Rotation vector of the configured field by RK4 averaging."""
    from .rotation import rotation_vector

    cfg = _setup(config, threads, verbose)
    tol = cfg["tolerances"]
    try:
        omega = cfg.frequency()
        X = cfg.field(omega)
    except (TorusRenormError, ValueError) as exc:
        raise Failure(EXIT_IO, f"{type(exc).__name__}: {exc}") from exc
    try:
        est = rotation_vector(X, samples=tol["rotation_samples"], T=tol["rotation_T"],
                              h=tol["rotation_h"], error_samples=tol["rotation_error_samples"])
    except (AccuracyError, DomainError) as exc:
        raise Failure(EXIT_ROT, f"{type(exc).__name__}: {exc}") from exc
    err = float(np.abs(est.vector - omega.components).sum())
    record = est.to_dict()
    record.update({"omega": omega.components.tolist(), "error": err, "tolerance": tol["rotation"]})
    _write(out or cfg["outputs"]["rotation"], dumps(record))
    click.echo(f"rotation {' '.join(repr(float(v)) for v in est.vector)} error {err!r}")
    if not err < tol["rotation"]:
        raise Failure(EXIT_ROT, f"rotation error {err:.3e} above {tol['rotation']:.1e}")


@main.command("check")
@_common
@_guard
def cmd_check(config, out, no_fields, threads, verbose):
    """Quick invariant suite; exits with the code of the first failing module."""
    from .suite import invariant_suite

    cfg = _setup(config, threads, verbose)
    results = invariant_suite(seed=cfg["seed"])
    for r in results:
        click.echo(f"{'PASS' if r.ok else 'FAIL'} {r.name}: {r.detail}")
    if out:
        _write(out, dumps([r.__dict__ for r in results]))
    bad = [r for r in results if not r.ok]
    if bad:
        sys.exit(bad[0].code)


if __name__ == "__main__":  # pragma: no cover
    main()
