"""Result emission for CLI runs: delimited tables plus rendered figures.

Every run directory gets machine-readable CSV/JSON first; the figures are
rendered next to them from the same arrays (Agg backend, PNG files).
"""

from __future__ import annotations

import json
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .fields import _atomic_write, _csv_text

_FIG_KW = {"dpi": 130, "bbox_inches": "tight"}


def write_json(path: str, payload: dict):
    _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_table(path: str, names, cols):
    _atomic_write(path, _csv_text(names, cols))


def _save(fig, path: str):
    tmp = path + ".tmp"
    fig.savefig(tmp, format="png", **_FIG_KW)
    plt.close(fig)
    os.replace(tmp, path)


def render_solve_figures(outdir: str, report: dict):
    """Energy and residual histories of a solve run."""
    energies = report.get("energies") or []
    if energies:
        fig, ax = plt.subplots(figsize=(5.2, 3.4))
        ax.plot(energies, lw=1.2)
        ax.set_xlabel("accepted flow step")
        ax.set_ylabel("total energy")
        ax.set_title("energy history")
        _save(fig, os.path.join(outdir, "energy_history.png"))
    res = report.get("map_residuals") or []
    sres = report.get("spinor_residuals") or []
    if res or sres:
        fig, ax = plt.subplots(figsize=(5.2, 3.4))
        if res:
            ax.semilogy(res, lw=1.2, label="map residual")
        if any(v > 0 for v in sres):
            ax.semilogy([max(v, 1e-300) for v in sres], lw=1.2, label="spinor residual")
        ax.set_xlabel("outer iteration")
        ax.set_ylabel("L2 residual")
        ax.legend(frameon=False)
        ax.set_title("residual history")
        _save(fig, os.path.join(outdir, "residual_history.png"))


def render_spectrum_figure(outdir: str, eigenvalues):
    fig, ax = plt.subplots(figsize=(5.2, 3.4))
    vals = np.asarray(eigenvalues, dtype=float)
    ax.plot(np.arange(len(vals)), vals, "o", ms=5)
    ax.axhline(0.0, color="k", lw=0.6)
    ax.set_xlabel("mode index (by |lambda|)")
    ax.set_ylabel("eigenvalue")
    ax.set_title("twisted Dirac spectrum (lowest modes)")
    _save(fig, os.path.join(outdir, "spectrum.png"))


def render_diagnostics_figure(outdir: str, report: dict):
    vals = {k: v for k, v in report.get("values", {}).items()
            if isinstance(v, (int, float)) and np.isfinite(v)}
    if vals:
        fig, ax = plt.subplots(figsize=(6.0, 3.4))
        keys = list(vals)
        ax.bar(range(len(keys)), [max(vals[k], 1e-300) for k in keys])
        ax.set_yscale("log")
        ax.set_xticks(range(len(keys)))
        ax.set_xticklabels(keys, rotation=40, ha="right", fontsize=7)
        ax.set_ylabel("residual value")
        ax.set_title("structural residuals")
        _save(fig, os.path.join(outdir, "diagnostics.png"))
    decay = report.get("decay_table")
    if decay and decay.get("radii"):
        fig, ax = plt.subplots(figsize=(5.2, 3.4))
        ax.plot(decay["radii"], decay["ratio_phi"], lw=1.2, label="map ratio")
        if any(v > 0 for v in decay["ratio_psi"]):
            ax.plot(decay["radii"], decay["ratio_psi"], lw=1.2, label="spinor ratio")
        ax.set_xlabel("radius")
        ax.set_ylabel("decay ratio")
        ax.legend(frameon=False)
        ax.set_title("decay profile")
        _save(fig, os.path.join(outdir, "decay_profile.png"))
