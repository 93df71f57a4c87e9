"""Experiment harness: configuration, orchestration, benchmarks and containers in one namespace.

The implementation lives in ``config``, ``pipeline``, ``io`` and ``cli``; this
module gathers the pieces a driver script needs.
"""
from __future__ import annotations

import tempfile
from pathlib import Path

from . import io
from .cli import main
from .config import ExperimentConfig, PotentialSpec, Tolerances
from .pipeline import (bench_convergence, bench_stability, fit_eta, fit_slope, run_energy,
                       run_pipeline, write_report)


def io_roundtrip(path):
    """Load ``path``, save it again and reload; the result equals the input bit for bit."""
    obj = io.load(path)
    with tempfile.TemporaryDirectory() as tmp:
        return io.load(io.save(obj, Path(tmp) / Path(path).name))


__all__ = ["ExperimentConfig", "PotentialSpec", "Tolerances", "bench_convergence", "bench_stability",
           "fit_eta", "fit_slope", "io_roundtrip", "main", "run_energy", "run_pipeline", "write_report"]
