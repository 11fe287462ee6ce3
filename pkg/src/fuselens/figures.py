"""Matplotlib renderings of the delimited outputs, for offline reports.

Every CLI command that writes CSV data also drops a PNG figure next to
it; these helpers own that rendering. All figures use the Agg backend,
so they work headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .losses import LossReport  # noqa: E402
from .saliency import GuidanceRGB, ScatterData  # noqa: E402
from .training import SweepRow  # noqa: E402


def _finish(fig, path: str | Path):
    fig.savefig(Path(path), dpi=120, bbox_inches="tight")
    plt.close(fig)


def loss_curve_figure(history: list[LossReport], path: str | Path):
    """All five exported loss curves over epochs, log-scaled y."""
    epochs = range(1, len(history) + 1)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    series = [
        ("l_ssim_mri", [r.l_ssim_mri for r in history]),
        ("l_ssim_pet", [r.l_ssim_pet for r in history]),
        ("l_l2_mri", [r.l_l2_mri for r in history]),
        ("l_l2_pet", [r.l_l2_pet for r in history]),
        ("l_total", [r.l_total for r in history]),
    ]
    for label, values in series:
        ax.plot(epochs, values, label=label, linewidth=1.2)
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def sweep_figure(rows: list[SweepRow], path: str | Path):
    """Per-cell SSIM imbalance, best cell marked."""
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = [r.index for r in rows]
    ys = [r.balance for r in rows]
    ax.bar(xs, ys, color="tab:gray")
    best = min(rows, key=lambda r: r.balance)
    ax.bar([best.index], [best.balance], color="tab:green",
           label=f"best: cell {best.index}")
    ax.set_xlabel("grid cell")
    ax.set_ylabel("|l_ssim_mri - l_ssim_pet|")
    ax.legend(fontsize=8)
    _finish(fig, path)


def _pane(ax, img, title, cmap="gray", vmin=0.0, vmax=1.0):
    if img.ndim == 2:
        ax.imshow(img, cmap=cmap, vmin=vmin, vmax=vmax, interpolation="nearest")
    else:
        ax.imshow(img, interpolation="nearest")
    ax.set_title(title, fontsize=8)
    ax.axis("off")


def guidance_report_figure(x1, x2, fused, g1_disp, g2_disp,
                           rgb: GuidanceRGB, path: str | Path):
    """Six panes: the input pair, fusion, both guidance displays, composite."""
    fig, axes = plt.subplots(2, 3, figsize=(9, 6))
    _pane(axes[0, 0], x1, "input x1")
    _pane(axes[0, 1], x2, "input x2")
    _pane(axes[0, 2], fused, "fused")
    _pane(axes[1, 0], g1_disp, "guidance x1")
    _pane(axes[1, 1], g2_disp, "guidance x2")
    _pane(axes[1, 2], rgb.to_array(), "guidance RGB")
    _finish(fig, path)


def scatter_figure(data: ScatterData, path: str | Path):
    """Gradient scatter: all pixels gray, hover neighborhood green."""
    fig, ax = plt.subplots(figsize=(5, 5))
    pts = data.points
    ax.scatter(pts[:, 0], pts[:, 1], s=4, c="lightgray", label="all pixels")
    sel = [h - 1 for h in data.highlight]
    ax.scatter(pts[sel, 0], pts[sel, 1], s=6, c="tab:green", label="neighborhood")
    title = "guidance gradients"
    if data.correlation is not None:
        title += f" (neighborhood r = {data.correlation:.3f})"
    ax.set_title(title, fontsize=9)
    ax.set_xlabel("gradient wrt x1")
    ax.set_ylabel("gradient wrt x2")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    _finish(fig, path)


def bench_figure(times: list[float], path: str | Path):
    """Per-hover latency histogram with the mean marked."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist([t * 1000 for t in times], bins=20, color="tab:blue", alpha=0.8)
    mean_ms = 1000 * sum(times) / len(times)
    ax.axvline(mean_ms, color="tab:red", linewidth=1.5,
               label=f"mean {mean_ms:.1f} ms")
    ax.set_xlabel("hover latency (ms)")
    ax.set_ylabel("count")
    ax.legend(fontsize=8)
    _finish(fig, path)
