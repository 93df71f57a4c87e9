"""Data generation, h_pm recovery and reconstruction for one configuration."""
from __future__ import annotations

import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .background import DiskBackground
from .config import ExperimentConfig
from .dtn import BoundaryKernel, dtn_numeric, dtn_zero_disk
from .errors import McInverseError, NearSingular
from .numerics import CircleGrid
from .forward import LippmannSchwinger, TorusKernel, scattering_amplitude
from .potentials import MatrixField, add_fields, make_test_potential
from .recover_h import algo1_pipeline, algo1A_boundary_psi, algo1A_h, algo2_h
from .rhp import (ReconstructionField, assemble_b, born_point, default_points,
                  solve_mu_tilde_plus, solve_mu_tilde_plus_background, v_appr_point)

log = logging.getLogger(__name__)


def build_potential(cfg: ExperimentConfig) -> MatrixField:
    p = cfg.potential
    if p.path:
        return io.load(p.path)
    return make_test_potential(p.kind, n=cfg.channels, amplitude=p.amplitude, width=p.width,
                               radius=p.radius, half_width=cfg.half_width, size=cfg.space_size,
                               smoothness=p.smoothness, seed=p.seed, diagonal=p.diagonal)


def background_field(cfg: ExperimentConfig) -> MatrixField:
    return make_test_potential("diagonal_constant_on_D", n=cfg.channels, radius=1.0,
                               half_width=cfg.half_width, size=cfg.space_size,
                               diagonal=cfg.background)


def reconstruction_points(cfg, potential):
    pts, mask = default_points(potential, cfg.point_margin)
    truth = potential.values[mask]
    s = cfg.point_stride
    return pts[::s], truth[::s]


def kernel_noise(shape, delta, weight, rng):
    """Complex Gaussian perturbation with weighted L^2 norm exactly ``delta``."""
    g = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    nrm = np.sqrt(np.sum(np.abs(g) ** 2)) * weight
    return g * (delta / nrm)


@dataclass
class EnergyData:
    """Measured data at one energy; ``kind`` is 'amplitude' or 'dtn'."""

    energy: float
    kind: str
    amplitude: TorusKernel | None = None
    dtn: BoundaryKernel | None = None       # Phi - Phi_0 (algo1) or Phi (algo1A)
    timings: dict = field(default_factory=dict)

    def perturbed(self, delta, rng):
        if self.kind == "amplitude":
            a = self.amplitude
            noise = kernel_noise(a.values.shape, delta, a.grid.weight, rng)
            return EnergyData(self.energy, self.kind, amplitude=TorusKernel(a.values + noise, a.energy))
        k = self.dtn
        noise = kernel_noise(k.values.shape, delta, k.weight, rng)
        return EnergyData(self.energy, self.kind, dtn=BoundaryKernel(k.values + noise, k.energy))


def generate_data(cfg: ExperimentConfig, potential: MatrixField, energy) -> EnergyData:
    t0 = time.perf_counter()
    if cfg.algorithm in ("algo2", "born"):
        solver = LippmannSchwinger(potential, energy, arc_nodes=cfg.tolerances.arc_nodes,
                                   tol=cfg.tolerances.ls_residual)
        f = scattering_amplitude(potential, energy, cfg.circle_size, solver)
        return EnergyData(energy, "amplitude", amplitude=f,
                          timings={"forward": time.perf_counter() - t0})
    nb = cfg.boundary_size
    full = potential
    if cfg.algorithm == "algo1A":
        full = add_fields(background_field(cfg), potential)
    phi = dtn_numeric(full, energy, nb, cfg.radial_size, check=cfg.radial_check,
                      tol=cfg.tolerances.radial_check)
    if cfg.algorithm == "algo1":
        phi = phi - dtn_zero_disk(energy, nb, cfg.channels)
    return EnergyData(energy, "dtn", dtn=phi, timings={"dtn": time.perf_counter() - t0})


@dataclass
class HData:
    h_plus: TorusKernel
    h_minus: TorusKernel
    background: DiskBackground | None = None
    h1: tuple | None = None


def data_to_h(cfg: ExperimentConfig, data: EnergyData) -> HData:
    e = data.energy
    nn = cfg.circle_size
    arc = cfg.tolerances.arc_nodes
    if cfg.algorithm == "born":
        return HData(data.amplitude, data.amplitude)
    if cfg.algorithm == "algo2":
        return HData(algo2_h(data.amplitude, 1), algo2_h(data.amplitude, -1))
    if cfg.algorithm == "algo1":
        hp, _ = algo1_pipeline(data.dtn, nn, 1, arc)
        hm, _ = algo1_pipeline(data.dtn, nn, -1, arc)
        return HData(hp, hm)
    bg = DiskBackground(cfg.background, e)
    nb = data.dtn.size
    phi = data.dtn
    phi1 = bg.dtn(nb)
    phi0 = dtn_zero_disk(e, nb, cfg.channels)
    out = []
    h1s = []
    for sign in (1, -1):
        h1 = bg.h_pm(sign, nn)
        traces = []
        for a in CircleGrid(nn).angles:
            psi, _ = algo1A_boundary_psi(phi, phi1, phi0, a, sign, arc)
            traces.append(psi)
        bg_traces = bg.boundary_traces(nb, nn, sign, h1)
        out.append(algo1A_h(phi, phi1, phi0, traces, bg_traces, h1, nn))
        h1s.append(h1)
    return HData(out[0], out[1], bg, tuple(h1s))


def reconstruct_points(cfg, hd: HData, energy, points, source):
    vals = []
    for z in points:
        if cfg.algorithm == "born":
            vals.append(born_point(hd.h_plus, z, energy))
        elif hd.background is not None:
            ws = assemble_b(hd.h_plus, hd.h_minus, z, energy)
            ws1 = assemble_b(hd.h1[0], hd.h1[1], z, energy)
            mu1 = hd.background.mu_plus(z, cfg.circle_size)
            mp = solve_mu_tilde_plus_background(ws, ws1, mu1)
            vals.append(v_appr_point(hd.h_plus, hd.h_minus, z, energy, ws=ws, mu_plus=mp))
        else:
            vals.append(v_appr_point(hd.h_plus, hd.h_minus, z, energy))
    return ReconstructionField(np.asarray(points, dtype=complex), np.array(vals), float(energy),
                               cfg.circle_size, source)


def _errors(field_, truth, area):
    """Max and L^2 error; ``area`` is the cell area carried by each point."""
    d = field_.values - truth
    return {"max": float(np.abs(d).max()),
            "l2": float(np.sqrt(np.sum(np.abs(d) ** 2) * area))}


def _etag(e):
    return f"{e:g}".replace(".", "p")


@contextmanager
def stage(name):
    """Tag package errors raised inside the block with the pipeline stage."""
    try:
        yield
    except McInverseError as exc:
        if getattr(exc, "stage", None) is None:
            exc.stage = name
        raise


def run_energy(cfg, potential, energy, out=None):
    """Full chain at one energy; returns (ReconstructionField, report row, timings)."""
    t0 = time.perf_counter()
    with stage("data"):
        data = generate_data(cfg, potential, energy)
    t1 = time.perf_counter()
    with stage("h"):
        hd = data_to_h(cfg, data)
    t2 = time.perf_counter()
    pts, truth = reconstruction_points(cfg, _truth_field(cfg, potential))
    with stage("reconstruct"):
        rec = reconstruct_points(cfg, hd, energy, pts, cfg.algorithm)
        b_norm = mu_max = None
        if cfg.algorithm != "born":
            ws = assemble_b(hd.h_plus, hd.h_minus, 0.0, energy)
            b_norm = ws.b_norm()
            mu_max = float(np.linalg.norm(solve_mu_tilde_plus(ws).values, 2, axis=(1, 2)).max())
    t3 = time.perf_counter()
    row = {
        "energy": energy,
        "errors": _errors(rec, truth, potential.step**2 * cfg.point_stride),
        "norms": {"h_plus": hd.h_plus.l2_norm(), "h_minus": hd.h_minus.l2_norm()},
        "diagnostics": {"b_norm_at_origin": b_norm, "mu_max_at_origin": mu_max},
    }
    if data.amplitude is not None:
        row["norms"]["f"] = data.amplitude.l2_norm()
    if data.dtn is not None:
        row["norms"]["dtn_kernel"] = data.dtn.l2_norm()
    timings = {"energy": energy, "data": t1 - t0, "h": t2 - t1, "reconstruct": t3 - t2}
    if out is not None:
        with stage("write"):
            tag = _etag(energy)
            prov = {"config_hash": cfg.hash(), "energy": energy}
            if data.amplitude is not None:
                io.save(data.amplitude, out / f"f_E{tag}.mctk", prov)
            if data.dtn is not None:
                io.save(data.dtn, out / f"dtn_E{tag}.mcbk", prov)
            io.save(hd.h_plus, out / f"hplus_E{tag}.mctk", prov)
            io.save(hd.h_minus, out / f"hminus_E{tag}.mctk", prov)
            io.save(rec, out / f"vappr_E{tag}.mcrf", prov)
    return rec, row, timings


def _truth_field(cfg, potential):
    if cfg.algorithm == "algo1A":
        return add_fields(background_field(cfg), potential)
    return potential


def _with_retry(fn, energy):
    """Run fn(E); on NearSingular retry once at 1.01 E and flag it."""
    try:
        return fn(energy), None
    except NearSingular as exc:
        log.warning("near-singular at E=%g (%s); retrying at %g", energy, exc, 1.01 * energy)
        return fn(1.01 * energy), {"requested": energy, "used": 1.01 * energy, "reason": str(exc)}


def _prepare_out(cfg, write):
    if not write:
        return None
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg.save(out / "config.json")
    return out


def run_pipeline(cfg: ExperimentConfig, write=True):
    """Every configured energy through data -> h_pm -> V_appr.

    Returns (fields, report). The report holds no wall-clock data so two runs
    of the same config are byte-identical; timings go to ``timings.json``.
    """
    with stage("potential"):
        potential = build_potential(cfg)
    out = _prepare_out(cfg, write)
    if out is not None:
        io.save(potential, out / "potential.mcip", {"config_hash": cfg.hash()})
    fields, rows, times = [], [], []
    for e in cfg.energies:
        (rec, row, tm), flag = _with_retry(lambda en: run_energy(cfg, potential, en, out), e)
        if flag:
            row["retry"] = flag
        fields.append(rec)
        rows.append(row)
        times.append(tm)
    report = {"config_hash": cfg.hash(), "algorithm": cfg.algorithm, "energies": rows,
              "stable_from_energy": stable_from(rows)}
    if out is not None:
        write_report(report, out / "report.json")
        write_report({"stages": times}, out / "timings.json")
    report["timings"] = times
    return fields, report


def stable_from(rows, b_max=0.5, mu_bound=2.0):
    """Smallest energy from which every row has ||B|| <= b_max and |mu~+| <= mu_bound at z = 0."""
    found = None
    for row in reversed(rows):
        d = row["diagnostics"]
        if d["b_norm_at_origin"] is None or d["b_norm_at_origin"] > b_max or d["mu_max_at_origin"] > mu_bound:
            break
        found = row["energy"]
    return found


def write_report(report, path):
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def fit_slope(energies, errors):
    """Least-squares slope of log(error) against log(E)."""
    x = np.log(np.asarray(energies, dtype=float))
    y = np.log(np.asarray(errors, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def bench_convergence(cfg: ExperimentConfig, write=True):
    """Error table over the configured energies; slope only with >= 3 energies."""
    _, report = run_pipeline(cfg, write=write)
    es = [r["energy"] for r in report["energies"]]
    errs = [r["errors"]["max"] for r in report["energies"]]
    conv = {"energies": es, "max_errors": errs}
    if len(es) >= 3:
        conv["slope"] = fit_slope(es, errs)
    report["convergence"] = conv
    if write:
        timings = report.pop("timings")
        write_report(report, Path(cfg.out_dir) / "convergence.json")
        report["timings"] = timings
    return report


def fit_eta(deltas, eps):
    """eta minimising sum (eps - eta delta)^2 over the nonzero deltas."""
    d = np.asarray(deltas, dtype=float)
    e = np.asarray(eps, dtype=float)
    keep = d > 0
    if not keep.any():
        return None
    return float(np.dot(d[keep], e[keep]) / np.dot(d[keep], d[keep]))


def bench_stability(cfg: ExperimentConfig, write=True):
    """Perturb the measured data by noise of L^2 size delta and compare reconstructions.

    The noise hits f for algo2/born and the DtN kernel for algo1/algo1A. Each
    (energy, delta) pair draws from its own generator seeded by
    (seed, energy index, delta index). Rows hold eps = max |V_appr' - V_appr|,
    eps / delta and eps / (delta E); each energy also gets a fitted eta.
    """
    with stage("potential"):
        potential = build_potential(cfg)
    _prepare_out(cfg, write)
    rows, fits = [], []
    for ie, e in enumerate(cfg.energies):
        def clean(en):
            with stage("data"):
                data = generate_data(cfg, potential, en)
            with stage("h"):
                hd = data_to_h(cfg, data)
            pts, _ = reconstruction_points(cfg, _truth_field(cfg, potential))
            with stage("reconstruct"):
                return data, pts, reconstruct_points(cfg, hd, en, pts, cfg.algorithm)

        (data, pts, base), flag = _with_retry(clean, e)
        eps_e = []
        for idl, delta in enumerate(cfg.noise_levels):
            rng = np.random.default_rng([cfg.seed, ie, idl])
            noisy = data.perturbed(delta, rng)
            with stage("reconstruct"):
                rec = reconstruct_points(cfg, data_to_h(cfg, noisy), data.energy, pts, cfg.algorithm)
            eps = float(np.abs(rec.values - base.values).max())
            eps_e.append(eps)
            row = {"energy": data.energy, "delta": delta, "eps": eps,
                   "eps_over_delta": eps / delta if delta > 0 else None,
                   "eps_over_delta_E": eps / (delta * data.energy) if delta > 0 else None}
            if flag:
                row["retry"] = flag
            rows.append(row)
        eta = fit_eta(cfg.noise_levels, eps_e)
        fits.append({"energy": data.energy, "eta": eta,
                     "eta_over_E": None if eta is None else eta / data.energy})
    report = {"config_hash": cfg.hash(), "algorithm": cfg.algorithm, "stability": rows, "eta": fits}
    if write:
        write_report(report, Path(cfg.out_dir) / "stability.json")
    return report
