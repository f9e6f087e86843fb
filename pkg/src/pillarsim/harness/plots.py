"""Static figure output (Agg backend, PNG)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def collection_plot(path, rows, bands):
    """Efficiency per orientation and the axial curve / basal band of enhancement."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    for o, marker in (("horizontal", "o"), ("vertical", "s")):
        pts = [(d, e) for d, oo, e, _ in rows if oo == o and d != "bulk"]
        if pts:
            d, e = zip(*pts)
            ax1.plot(d, np.array(e) * 100, marker=marker, label=o)
    ax1.set_xlabel("pillar diameter (nm)")
    ax1.set_ylabel("collection efficiency (%)")
    ax1.legend()
    if bands:
        d, axial, low, high, pair = (np.array(c) for c in zip(*bands))
        ax2.fill_between(d, low, high, alpha=0.3, label="basal band")
        ax2.plot(d, pair, "--", label="basal pair average")
        ax2.plot(d, axial, "o-", label="axial")
    ax2.set_xlabel("pillar diameter (nm)")
    ax2.set_ylabel("enhancement over bulk")
    ax2.legend()
    return _save(fig, path)


def ratio_plot(path, reports, sites):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    classes = {s.label: s.site_class for s in sites}
    labels = [r.label for r in reports[0].rows] if reports else []
    for label in labels:
        pts = sorted((rep.diameter, rep.row(label)) for rep in reports)
        d = [p[0] for p in pts]
        ax.errorbar(d, [p[1].ratio for p in pts], yerr=[p[1].ratio_err for p in pts],
                    marker="o" if classes.get(label) == "basal" else "s", capsize=2, label=label)
    ax.set_xlabel("pillar diameter (nm)")
    ax.set_ylabel("ZPL area ratio pillar / bulk")
    ax.legend(fontsize=8)
    return _save(fig, path)


def width_plot(path, reports):
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    labels = [r.label for r in reports[0].rows] if reports else []
    for label in labels:
        pts = sorted((rep.diameter, rep.row(label)) for rep in reports)
        d = [p[0] for p in pts]
        ax1.errorbar(d, [p[1].width_ratio for p in pts], yerr=[p[1].width_ratio_err for p in pts],
                     marker="o", capsize=2, label=label)
        ax2.errorbar(d, [p[1].shift_nm for p in pts], yerr=[p[1].shift_err for p in pts],
                     marker="o", capsize=2, label=label)
    ax1.set_ylabel("width ratio pillar / bulk")
    ax2.set_ylabel("center shift (nm)")
    for ax in (ax1, ax2):
        ax.set_xlabel("pillar diameter (nm)")
    ax1.legend(fontsize=8)
    return _save(fig, path)


def lifetime_plot(path, rows):
    fig, ax = plt.subplots(figsize=(5.5, 3.6))
    for band in dict.fromkeys(r[1] for r in rows):
        pts = [(r[0], r[2], r[3]) for r in rows if r[1] == band]
        d, tau, err = zip(*pts)
        ax.errorbar(d, tau, yerr=err, marker="o", capsize=2, label=band)
    ax.set_xlabel("pillar diameter (nm)")
    ax.set_ylabel("fitted lifetime (ns)")
    ax.legend()
    return _save(fig, path)
