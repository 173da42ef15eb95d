"""Render sweep results to figure files next to the CSV output."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def _parse_sweep_csv(text: str):
    rows = []
    header = None
    for line in io.StringIO(text):
        if line.startswith("#"):
            continue
        parsed = next(csv.reader([line]))
        if header is None:
            header = parsed
            continue
        rows.append(dict(zip(header, parsed)))
    return rows


def _series(rows, column):
    """Budget-indexed mean-row values of one column, skipping empty cells."""
    pts = [
        (float(r["B"]), float(r[column]))
        for r in rows
        if r.get("replication") == "mean" and r.get(column) not in ("", None)
    ]
    return [p[0] for p in pts], [p[1] for p in pts]


def render_sweep_figures(csv_text: str, csv_path) -> list[str]:
    """Write the value, ratio-bound, and guarantee figures for one sweep.

    Figures with no populated data (e.g. the optimum beyond the brute-force
    guard, or ratio bounds for the log-det objective) are skipped.
    """
    rows = _parse_sweep_csv(csv_text)
    stem = Path(csv_path).with_suffix("")
    written: list[str] = []

    greedy_b, greedy_v = _series(rows, "greedy_value")
    opt_b, opt_v = _series(rows, "opt_value")
    if greedy_b:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot(greedy_b, greedy_v, "o-", label="greedy")
        if opt_b:
            ax.plot(opt_b, opt_v, "s--", label="optimal (brute force)")
        ax.set_xlabel("budget B")
        ax.set_ylabel("objective value")
        ax.legend()
        fig.tight_layout()
        path = f"{stem}_values.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    g1_b, g1_v = _series(rows, "gamma1_lb")
    if g1_b:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot(g1_b, g1_v, "o-", color="tab:green")
        ax.set_xlabel("budget B")
        ax.set_ylabel("lower bound on the type-1 ratio")
        ax.set_ylim(0, 1)
        fig.tight_layout()
        path = f"{stem}_gamma1.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)

    frac_b, frac_v = _series(rows, "guarantee_fraction")
    if frac_b:
        fig, ax = plt.subplots(figsize=(5, 3.2))
        ax.plot(frac_b, frac_v, "o-", color="tab:red")
        ax.set_xlabel("budget B")
        ax.set_ylabel("guaranteed fraction of optimum")
        fig.tight_layout()
        path = f"{stem}_guarantee.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        written.append(path)
    return written
