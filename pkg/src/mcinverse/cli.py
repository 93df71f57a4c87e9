"""Command-line entry point: ``mcinverse [global options] COMMAND ...``.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 container or filesystem error.
"""
from __future__ import annotations

import json
import logging
import sys
from pathlib import Path

import click
import numpy as np

from . import io
from .config import ExperimentConfig
from .dtn import BoundaryKernel, dtn_numeric, dtn_zero_disk
from .errors import ConfigError, ContainerError, DomainError, GridMismatch, NumericalFailure
from .forward import TorusKernel
from .pipeline import (HData, bench_convergence, bench_stability, build_potential, generate_data,
                       reconstruct_points, reconstruction_points, run_pipeline, write_report)
from .recover_h import algo1_pipeline, algo2_h

EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 2, 3, 4

log = logging.getLogger("mcinverse")


class Context:
    def __init__(self, cfg, out):
        self.cfg = cfg
        self.out = out

    def path(self, name):
        self.out.mkdir(parents=True, exist_ok=True)
        return self.out / name

    def prov(self, **kw):
        return {"config_hash": self.cfg.hash(), **kw}


def _fail(code, exc):
    where = getattr(exc, "stage", None)
    prefix = f"[{where}] " if where else ""
    click.echo(f"error: {prefix}{type(exc).__name__}: {exc}", err=True)
    sys.exit(code)


def _guard(fn):
    """Map package errors onto exit codes."""
    def wrapper(*a, **kw):
        try:
            return fn(*a, **kw)
        except (ConfigError, DomainError, GridMismatch) as exc:
            _fail(EXIT_CONFIG, exc)
        except NumericalFailure as exc:
            _fail(EXIT_NUMERIC, exc)
        except (ContainerError, OSError) as exc:
            _fail(EXIT_IO, exc)
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


def _load(path, kind):
    obj = io.load(path)
    if not isinstance(obj, kind):
        raise ContainerError(f"{path}: expected {kind.__name__}, found {type(obj).__name__}")
    return obj


def _echo_json(obj):
    click.echo(json.dumps(obj, indent=2, sort_keys=True))


def _tag(e):
    return f"{e:g}".replace(".", "p")


@click.group()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON experiment config; defaults are used for missing keys.")
@click.option("--out", type=click.Path(file_okay=False), default=None, help="Output directory.")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Noise seed.")
@click.option("--threads", type=click.IntRange(1), default=None, help="BLAS/FFT thread cap.")
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def main(ctx, config_path, out, seed, threads, verbose):
    """Fixed-energy inverse scattering for matrix-valued 2D potentials."""
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if threads is not None:
        from threadpoolctl import threadpool_limits
        ctx.with_resource(threadpool_limits(limits=threads))
    try:
        cfg = ExperimentConfig.load(config_path) if config_path else ExperimentConfig()
        changes = {}
        if out is not None:
            changes["out_dir"] = out
        if seed is not None:
            changes["seed"] = seed
        if changes:
            cfg = cfg.with_changes(**changes)
    except ConfigError as exc:
        _fail(EXIT_CONFIG, exc)
    except OSError as exc:
        _fail(EXIT_IO, exc)
    ctx.obj = Context(cfg, Path(cfg.out_dir))


@main.command()
@click.option("--csv", "as_csv", is_flag=True, help="Also write a CSV next to each kernel.")
@click.pass_obj
@_guard
def forward(obj, as_csv):
    """Scattering amplitude f on the torus for every configured energy."""
    cfg = obj.cfg.with_changes(algorithm="algo2")
    v = build_potential(cfg)
    for e in cfg.energies:
        f = generate_data(cfg, v, e).amplitude
        p = io.save(f, obj.path(f"f_E{_tag(e)}.mctk"), obj.prov(energy=e))
        if as_csv:
            io.export_csv(f, p.with_suffix(".csv"))
        click.echo(str(p))


@main.command()
@click.option("--difference/--full", default=True,
              help="Write Phi - Phi_0 (input of algo1-h) or Phi itself.")
@click.option("--csv", "as_csv", is_flag=True)
@click.pass_obj
@_guard
def dtn(obj, difference, as_csv):
    """Dirichlet-to-Neumann kernel on the unit circle for every configured energy."""
    cfg = obj.cfg
    v = build_potential(cfg)
    for e in cfg.energies:
        phi = dtn_numeric(v, e, cfg.boundary_size, cfg.radial_size, check=cfg.radial_check,
                          tol=cfg.tolerances.radial_check)
        if difference:
            phi = phi - dtn_zero_disk(e, cfg.boundary_size, v.channels)
        p = io.save(phi, obj.path(f"dtn_E{_tag(e)}.mcbk"), obj.prov(energy=e, difference=difference))
        if as_csv:
            io.export_csv(phi, p.with_suffix(".csv"))
        click.echo(str(p))


def _write_h(obj, hp, hm, e, source):
    for name, h in (("hplus", hp), ("hminus", hm)):
        p = io.save(h, obj.path(f"{name}_E{_tag(e)}.mctk"), obj.prov(energy=e, source=source))
        click.echo(str(p))


@main.command("algo1-h")
@click.argument("kernel", type=click.Path(exists=True, dir_okay=False))
@click.option("--torus", type=int, default=None, help="Circle grid size N (default: config).")
@click.pass_obj
@_guard
def algo1_h_cmd(obj, kernel, torus):
    """h_plus and h_minus from a Phi - Phi_0 kernel file (MCBK)."""
    k = _load(kernel, BoundaryKernel)
    nn = torus or obj.cfg.circle_size
    arc = obj.cfg.tolerances.arc_nodes
    hp, _ = algo1_pipeline(k, nn, 1, arc)
    hm, _ = algo1_pipeline(k, nn, -1, arc)
    _write_h(obj, hp, hm, k.energy, str(kernel))


@main.command("algo2-h")
@click.argument("amplitude", type=click.Path(exists=True, dir_okay=False))
@click.pass_obj
@_guard
def algo2_h_cmd(obj, amplitude):
    """h_plus and h_minus from a scattering amplitude file (MCTK)."""
    f = _load(amplitude, TorusKernel)
    _write_h(obj, algo2_h(f, 1), algo2_h(f, -1), f.energy, str(amplitude))


def _points(obj, point):
    if point:
        return np.array([complex(x, y) for x, y in point]), None
    v = build_potential(obj.cfg)
    return reconstruction_points(obj.cfg, v)


def _report_field(obj, rec, truth, name):
    p = io.save(rec, obj.path(name), obj.prov(energy=rec.energy, source=rec.source))
    io.export_csv(rec, p.with_suffix(".csv"))
    click.echo(str(p))
    if truth is not None:
        click.echo(f"max |V - V_appr| = {np.abs(rec.values - truth).max():.3e}")


@main.command()
@click.argument("h_files", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@click.option("--point", type=(float, float), multiple=True,
              help="Reconstruction point x1 x2; repeatable. Default: grid nodes near the support.")
@click.pass_obj
@_guard
def reconstruct(obj, h_files, point):
    """V_appr from HPLUS HMINUS files, or the full configured pipeline without arguments."""
    cfg = obj.cfg
    if not h_files:
        _, report = run_pipeline(cfg, write=True)
        for row in report["energies"]:
            click.echo(f"E={row['energy']:g} max|V-V_appr|={row['errors']['max']:.3e} "
                       f"L2={row['errors']['l2']:.3e}")
        return
    if len(h_files) != 2:
        raise ConfigError("reconstruct takes exactly two files: HPLUS HMINUS")
    hp, hm = (_load(p, TorusKernel) for p in h_files)
    if hp.energy != hm.energy or hp.size != hm.size:
        raise GridMismatch("h_plus and h_minus differ in energy or grid")
    pts, truth = _points(obj, point)
    rec = reconstruct_points(cfg.with_changes(algorithm="algo2"), HData(hp, hm), hp.energy, pts, "rhp")
    _report_field(obj, rec, truth, f"vappr_E{_tag(hp.energy)}.mcrf")


@main.command()
@click.argument("amplitude", type=click.Path(exists=True, dir_okay=False))
@click.option("--point", type=(float, float), multiple=True)
@click.pass_obj
@_guard
def born(obj, amplitude, point):
    """Linearised reconstruction from a scattering amplitude file."""
    f = _load(amplitude, TorusKernel)
    pts, truth = _points(obj, point)
    rec = reconstruct_points(obj.cfg.with_changes(algorithm="born"), HData(f, f), f.energy, pts, "born")
    _report_field(obj, rec, truth, f"born_E{_tag(f.energy)}.mcrf")


@main.command("bench-convergence")
@click.pass_obj
@_guard
def bench_convergence_cmd(obj):
    """Error against energy and the fitted log-log slope."""
    rep = bench_convergence(obj.cfg, write=True)
    conv = rep["convergence"]
    for e, err in zip(conv["energies"], conv["max_errors"]):
        click.echo(f"E={e:g} max_error={err:.3e}")
    if "slope" in conv:
        click.echo(f"slope={conv['slope']:.3f}")


@main.command("bench-stability")
@click.pass_obj
@_guard
def bench_stability_cmd(obj):
    """Reconstruction change under seeded data noise of each configured size."""
    rep = bench_stability(obj.cfg, write=True)
    for row in rep["stability"]:
        ratio = row["eps_over_delta"]
        click.echo(f"E={row['energy']:g} delta={row['delta']:.0e} eps={row['eps']:.3e} "
                   f"eps/delta={'-' if ratio is None else f'{ratio:.3g}'}")


@main.command()
@click.argument("path", type=click.Path(exists=True, dir_okay=False))
@click.option("--csv", "csv_path", type=click.Path(dir_okay=False), default=None,
              help="Export the payload as CSV.")
@click.option("--json-config", is_flag=True, help="Treat PATH as a config and print it with defaults.")
@_guard
def inspect(path, csv_path, json_config):
    """Header, sidecar provenance and summary norms of a container file."""
    if json_config:
        click.echo(ExperimentConfig.load(path).to_json())
        return
    info = io.header(path)
    obj = io.load(path)
    vals = obj.values
    info["max_abs"] = float(np.abs(vals).max()) if vals.size else 0.0
    side = io.sidecar_path(path)
    if side.exists():
        info["sidecar"] = json.loads(side.read_text())
    _echo_json(info)
    if csv_path:
        io.export_csv(obj, csv_path)


if __name__ == "__main__":
    main()
