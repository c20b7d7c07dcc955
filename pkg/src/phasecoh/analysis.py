"""End-to-end analysis of a trace set: from records to figure tables."""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from . import traceio
from .circstats import (
    DEFAULT_BIN_WIDTH,
    WindowSpec,
    batch_average,
    holevo_variance,
    integrate_window,
    mean_resultant_length,
    phase_of,
    phase_pdf,
    r_surface,
    time_domain_summary,
)
from .errors import UnresolvedPhaseError
from .simulate import TraceSet


def window_stats(traceset: TraceSet, window: WindowSpec, M: int = 1) -> dict:
    """R, Holevo variance and mean coherent amplitude for one window.

    ``holevo`` is ``inf`` and ``resolved`` False when the ensemble sits below
    the resolution floor.
    """
    values = integrate_window(traceset, window)
    ens = phase_of(batch_average(values, M), window, M)
    R = mean_resultant_length(ens)
    try:
        vh = holevo_variance(ens)
        resolved = True
    except UnresolvedPhaseError:
        vh, resolved = math.inf, False
    return {"R": R, "holevo": vh, "resolved": resolved,
            "amplitude": float(abs(values.mean())), "groups": len(ens)}


def r_vs_m(traceset: TraceSet, window: WindowSpec, m_list) -> np.ndarray:
    values = integrate_window(traceset, window)
    return np.array([mean_resultant_length(phase_of(batch_average(values, int(M))))
                     for M in m_list])


def write_surface_csv(path, t_starts, windows, grid):
    tt, TT = np.meshgrid(t_starts, windows, indexing="ij")
    traceio.write_csv(path, {"t_start": tt.ravel(), "T": TT.ravel(), "R": np.ravel(grid)})


def read_surface_csv(path):
    cols = traceio.read_csv(path)
    t_starts = np.unique(cols["t_start"])
    windows = np.unique(cols["T"])
    grid = np.full((len(t_starts), len(windows)), np.nan)
    i = np.searchsorted(t_starts, cols["t_start"])
    j = np.searchsorted(windows, cols["T"])
    grid[i, j] = cols["R"]
    if np.any(np.isnan(grid)):
        raise ValueError("surface CSV does not cover a full rectangular grid")
    return t_starts, windows, grid


def analyze(traceset: TraceSet, out_dir, window: WindowSpec, m_list,
            bin_width: float = DEFAULT_BIN_WIDTH, surface=None) -> dict:
    """Write the standard figure tables for one trace set; returns {name: path}.

    ``surface`` is an optional ``(t_starts, windows, M)`` triple.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = {}

    values = integrate_window(traceset, window)
    pdf = phase_pdf(phase_of(values, window), bin_width)
    path = out / "phase_pdf.csv"
    traceio.write_csv(path, {"phase_low": pdf.bin_edges[:-1], "phase_high": pdf.bin_edges[1:],
                             "phase_center": pdf.centers, "mass": pdf.bin_masses})
    written["phase_pdf"] = path

    rows = {"M": [], "R": [], "holevo": [], "resolved": [], "groups": []}
    for M in m_list:
        st = window_stats(traceset, window, int(M))
        rows["M"].append(int(M))
        for k in ("R", "holevo", "resolved", "groups"):
            rows[k].append(st[k])
    path = out / "r_vs_m.csv"
    traceio.write_csv(path, rows)
    written["r_vs_m"] = path

    td = time_domain_summary(traceset)
    path = out / "time_domain.csv"
    traceio.write_csv(path, td)
    written["time_domain"] = path

    if surface is not None:
        t_starts, windows, M = surface
        grid = r_surface(traceset, t_starts, windows, M)
        path = out / "r_surface.csv"
        write_surface_csv(path, t_starts, windows, grid)
        written["r_surface"] = path

    st = window_stats(traceset, window, 1)
    summary = {
        "shots": traceset.n_shots,
        "window": {"t_start": window.t_start, "T": window.T},
        "bin_width": pdf.bin_width,
        "R": st["R"],
        "holevo": st["holevo"] if st["resolved"] else "unresolved",
        "amplitude": st["amplitude"],
        "pdf_argmax_phase": pdf.argmax_phase(),
    }
    path = out / "summary.json"
    traceio.write_json(path, summary)
    written["summary"] = path
    return written
