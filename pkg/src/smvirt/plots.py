"""Figure rendering for sweep reports.

Three figure families accompany the delimited output: per-kernel cliff
curves (execution time versus block size, one line per policy), the
box-plot view of each policy's normalized performance distribution, and
a porting-loss bar chart.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .metrics import SweepResult, tukey_stats  # noqa: E402

_POLICY_STYLE = {
    "baseline": dict(color="#555555", marker="o"),
    "wlm": dict(color="#1f77b4", marker="s"),
    "virt": dict(color="#d62728", marker="^"),
}


def _style(policy):
    return _POLICY_STYLE.get(policy, dict(marker="x"))


def render_cliff_figure(sweeps: list[SweepResult], kernel: str, arch: str,
                        path: Path) -> None:
    """Execution time versus block size, normalized to the best point of
    the first policy plotted (the baseline when present)."""
    group = sorted((s for s in sweeps
                    if s.kernel == kernel and s.arch == arch),
                   key=lambda s: (s.policy != "baseline", s.policy))
    if not group:
        return
    norm = group[0].best_cycles()
    fig, ax = plt.subplots(figsize=(5.0, 3.2))
    for sweep in group:
        pts = sweep.sorted_by_block().points
        ax.plot([p.threads_per_block for p in pts],
                [p.total_cycles / norm for p in pts],
                label=sweep.policy, markersize=4, linewidth=1.2,
                **_style(sweep.policy))
    ax.set_xlabel("threads per block")
    ax.set_ylabel("normalized execution time")
    ax.set_title(f"{kernel} on {arch}")
    ax.legend(fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_range_figure(sweeps: list[SweepResult], path: Path) -> None:
    """Tukey box plot of normalized performance, one box per policy,
    pooling every sweep point (each sweep normalized to its own best)."""
    policies = sorted({s.policy for s in sweeps},
                      key=lambda p: (p != "baseline", p != "wlm", p))
    boxes = []
    for policy in policies:
        samples = []
        for sweep in sweeps:
            if sweep.policy != policy:
                continue
            best = sweep.best_cycles()
            samples.extend(best / p.total_cycles for p in sweep.points)
        box = tukey_stats(samples)
        boxes.append({
            "label": policy,
            "whislo": box.whisker_low,
            "q1": box.q1,
            "med": box.median,
            "q3": box.q3,
            "whishi": box.whisker_high,
            "mean": box.mean,
            "fliers": list(box.outliers),
        })
    fig, ax = plt.subplots(figsize=(4.2, 3.2))
    ax.bxp(boxes, showmeans=True)
    ax.set_ylabel("performance normalized to best point")
    ax.set_ylim(0.0, 1.05)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_porting_figure(summary: dict, path: Path) -> None:
    """Max porting loss per kernel, grouped bars per policy."""
    entries = summary.get("porting", [])
    if not entries:
        return
    kernels = sorted({e["kernel"] for e in entries})
    policies = sorted({e["policy"] for e in entries},
                      key=lambda p: (p != "baseline", p != "wlm", p))
    by = {(e["kernel"], e["policy"]): e["max_loss"] for e in entries}
    width = 0.8 / len(policies)
    fig, ax = plt.subplots(figsize=(max(4.0, 1.1 * len(kernels)), 3.2))
    for i, policy in enumerate(policies):
        xs = [k + i * width for k in range(len(kernels))]
        ys = [by.get((kernel, policy), 0.0) for kernel in kernels]
        style = _style(policy)
        ax.bar(xs, ys, width=width, label=policy, color=style.get("color"))
    ax.set_xticks([k + 0.4 - width / 2 for k in range(len(kernels))])
    ax.set_xticklabels(kernels, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("max porting performance loss")
    ax.legend(fontsize=8)
    ax.grid(True, axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_figures(sweeps: list[SweepResult], summary: dict,
                   out_dir: Path) -> dict[str, str]:
    written = {}
    for kernel in sorted({s.kernel for s in sweeps}):
        for arch in sorted({s.arch for s in sweeps}):
            if not any(s.kernel == kernel and s.arch == arch for s in sweeps):
                continue
            path = out_dir / f"cliff_{kernel}_{arch}.png"
            render_cliff_figure(sweeps, kernel, arch, path)
            written[f"cliff_{kernel}_{arch}"] = str(path)
    range_path = out_dir / "performance_range.png"
    render_range_figure(sweeps, range_path)
    written["performance_range"] = str(range_path)
    porting_path = out_dir / "porting_loss.png"
    render_porting_figure(summary, porting_path)
    written["porting_loss"] = str(porting_path)
    return written
