"""Vector-graphic renderings of experiment summaries.

Each renderer takes SummaryRow tables (plus the true effects) and writes an
SVG next to the delimited output. Plots are deliberately plain: medians,
interquartile hinges, Tukey whiskers, and a dashed line at the true effect.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .harness import SummaryRow

__all__ = [
    "render_accuracy_by_n",
    "render_accuracy_by_ratio",
    "render_method_boxes",
    "render_coverage_bars",
]

_METHOD_LABELS = {
    "latent": "latent proxy",
    "linear": "linear",
    "ipw": "IPW",
    "iv": "IV (2SLS)",
    "pci": "PCI",
    "unadjusted": "unadjusted",
}
_METHOD_COLORS = {
    "latent": "#1f77b4",
    "linear": "#ff7f0e",
    "ipw": "#2ca02c",
    "iv": "#9467bd",
    "pci": "#d62728",
    "unadjusted": "#7f7f7f",
}


def _ordered_methods(rows: list[SummaryRow]) -> list[str]:
    seen = []
    for row in rows:
        if row.method not in seen:
            seen.append(row.method)
    return seen


def render_accuracy_by_n(rows: list[SummaryRow], truth: float, path) -> Path:
    """Median with IQR band versus sample size, one line per method."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for method in _ordered_methods(rows):
        pts = sorted((r for r in rows if r.method == method), key=lambda r: r.n)
        ns = [r.n for r in pts]
        ax.plot(
            ns,
            [r.median for r in pts],
            marker="o",
            label=_METHOD_LABELS.get(method, method),
            color=_METHOD_COLORS.get(method),
        )
        ax.fill_between(
            ns,
            [r.q25 for r in pts],
            [r.q75 for r in pts],
            alpha=0.15,
            color=_METHOD_COLORS.get(method),
        )
    ax.axhline(truth, color="black", linestyle="--", linewidth=1, label="true effect")
    ax.set_xscale("log")
    ax.set_xlabel("sample size")
    ax.set_ylabel("estimated effect (median, IQR)")
    ax.legend(fontsize=8)
    return _save(fig, path)


def render_accuracy_by_ratio(
    rows: list[SummaryRow], truth: float, k: int, path
) -> Path:
    """Median estimate versus proxies-per-factor ratio, one line per method."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for method in _ordered_methods(rows):
        pts = sorted((r for r in rows if r.method == method), key=lambda r: r.n)
        ratios = [_ratio_from_label(r.scenario, k) for r in pts]
        order = sorted(range(len(pts)), key=lambda i: ratios[i])
        ax.plot(
            [ratios[i] for i in order],
            [pts[i].median for i in order],
            marker="o",
            label=_METHOD_LABELS.get(method, method),
            color=_METHOD_COLORS.get(method),
        )
    ax.axhline(truth, color="black", linestyle="--", linewidth=1, label="true effect")
    ax.set_xlabel("proxies per latent dimension (p/k)")
    ax.set_ylabel("median estimated effect")
    ax.legend(fontsize=8)
    return _save(fig, path)


def _ratio_from_label(label: str, k: int) -> float:
    if "_p" in label:
        return int(label.rsplit("_p", 1)[1]) / k
    raise ValueError(f"label {label!r} carries no proxy count")


def render_method_boxes(rows: list[SummaryRow], truth: float, title: str, path) -> Path:
    """One box per method from precomputed quartiles and whiskers."""
    methods = _ordered_methods(rows)
    stats = []
    for method in methods:
        row = next(r for r in rows if r.method == method)
        stats.append(
            {
                "label": _METHOD_LABELS.get(method, method),
                "med": row.median,
                "q1": row.q25,
                "q3": row.q75,
                "whislo": row.whisker_low,
                "whishi": row.whisker_high,
                "fliers": [],
            }
        )
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    artists = ax.bxp(stats, showfliers=False, patch_artist=True)
    for patch, method in zip(artists["boxes"], methods):
        patch.set_facecolor(_METHOD_COLORS.get(method, "#cccccc"))
        patch.set_alpha(0.5)
    ax.axhline(truth, color="black", linestyle="--", linewidth=1)
    ax.set_ylabel("estimated effect")
    ax.set_title(title, fontsize=10)
    return _save(fig, path)


def render_coverage_bars(labels: list[str], coverages: list[float], level: float, path) -> Path:
    """Empirical CI coverage per scenario with the nominal level marked."""
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.bar(range(len(labels)), coverages, color="#1f77b4", alpha=0.7)
    ax.axhline(level, color="black", linestyle="--", linewidth=1, label=f"nominal {level:.2f}")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("empirical coverage")
    ax.legend(fontsize=8)
    return _save(fig, path)


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path
