"""Sweep statistics and report emission.

Performance of a sweep point is 1 / total_cycles, so "x% lower
performance" statements compare inverse execution times.  Quartiles use
linear interpolation at p*(n-1) on the sorted sample, matching the common
"linear" convention, and box whiskers extend to the farthest sample
within 1.5 interquartile ranges of the box.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Sequence


@dataclass(frozen=True)
class SweepPoint:
    threads_per_block: int
    regs_per_thread: int
    smem_per_block: int
    total_cycles: int
    issue_utilization: float = 0.0
    swap_stall_cycles: int = 0


@dataclass(frozen=True)
class SweepResult:
    kernel: str
    arch: str
    policy: str
    points: tuple[SweepPoint, ...]

    def __post_init__(self):
        if not self.points:
            raise ValueError("a sweep needs at least one point")
        seen = set()
        for p in self.points:
            if p.total_cycles <= 0:
                raise ValueError("cycle counts must be positive")
            key = (p.threads_per_block, p.regs_per_thread, p.smem_per_block)
            if key in seen:
                raise ValueError(f"duplicate sweep point {key}")
            seen.add(key)
        object.__setattr__(self, "points", tuple(self.points))

    def cycles(self) -> list[int]:
        return [p.total_cycles for p in self.points]

    def best_cycles(self) -> int:
        return min(p.total_cycles for p in self.points)

    def sorted_by_block(self) -> "SweepResult":
        pts = sorted(self.points, key=lambda p: p.threads_per_block)
        return SweepResult(self.kernel, self.arch, self.policy, tuple(pts))


@dataclass(frozen=True)
class BoxStats:
    min: float
    q1: float
    median: float
    q3: float
    max: float
    mean: float
    whisker_low: float
    whisker_high: float
    outliers: tuple[float, ...]

    def as_dict(self) -> dict:
        d = {k: getattr(self, k) for k in
             ("min", "q1", "median", "q3", "max", "mean",
              "whisker_low", "whisker_high")}
        d["outliers"] = list(self.outliers)
        return d


def _quantile(sorted_samples: Sequence[float], p: float) -> float:
    idx = p * (len(sorted_samples) - 1)
    lo = math.floor(idx)
    hi = math.ceil(idx)
    if lo == hi:
        return float(sorted_samples[lo])
    frac = idx - lo
    return sorted_samples[lo] * (1.0 - frac) + sorted_samples[hi] * frac


def tukey_stats(samples: Sequence[float]) -> BoxStats:
    """Box-plot statistics: quartiles, 1.5*IQR whiskers, outliers."""
    if not samples:
        raise ValueError("tukey_stats needs at least one sample")
    data = sorted(float(x) for x in samples)
    q1 = _quantile(data, 0.25)
    median = _quantile(data, 0.5)
    q3 = _quantile(data, 0.75)
    iqr = q3 - q1
    lo_fence = q1 - 1.5 * iqr
    hi_fence = q3 + 1.5 * iqr
    within = [x for x in data if lo_fence <= x <= hi_fence]
    # whiskers reach the farthest samples inside the fences but never
    # retract past the box edge (interpolated quartiles can exceed every
    # in-fence sample on near-constant data)
    return BoxStats(
        min=data[0],
        q1=q1,
        median=median,
        q3=q3,
        max=data[-1],
        mean=sum(data) / len(data),
        whisker_low=min(q1, within[0]) if within else q1,
        whisker_high=max(q3, within[-1]) if within else q3,
        outliers=tuple(x for x in data if x < lo_fence or x > hi_fence),
    )


def performance_range(sweep: SweepResult) -> float:
    """How far the worst point falls below the best: 1 - worst/best
    performance, with performance = 1/cycles."""
    cycles = sweep.cycles()
    return 1.0 - min(cycles) / max(cycles)


def porting_loss(source: SweepResult, target: SweepResult,
                 margin: float = 0.05) -> float:
    """Worst performance drop on `target` among the points a programmer
    tuned on `source` might have shipped (within `margin` of the source's
    best performance)."""
    src_points = {(p.threads_per_block, p.regs_per_thread, p.smem_per_block): p
                  for p in source.points}
    tgt_points = {(p.threads_per_block, p.regs_per_thread, p.smem_per_block): p
                  for p in target.points}
    if set(src_points) != set(tgt_points):
        raise ValueError("sweeps cover different specification points")
    best_src = min(p.total_cycles for p in source.points)
    best_tgt = min(p.total_cycles for p in target.points)
    shippable = [key for key, p in src_points.items()
                 if 1.0 / p.total_cycles >= (1.0 - margin) / best_src]
    worst = min(best_tgt / tgt_points[key].total_cycles for key in shippable)
    return 1.0 - worst


def max_adjacent_cliff(sweep: SweepResult) -> float:
    """Largest relative cycle jump between neighbouring block sizes."""
    pts = sweep.sorted_by_block().points
    if len(pts) < 2:
        return 0.0
    worst = 0.0
    for prev, nxt in zip(pts, pts[1:]):
        jump = (nxt.total_cycles - prev.total_cycles) / prev.total_cycles
        if jump > worst:
            worst = jump
    return worst


CSV_COLUMNS = ("kernel", "arch", "policy", "threads_per_block",
               "regs_per_thread", "smem_per_block", "total_cycles",
               "issue_util", "swap_stall_cycles")


def render_csv(sweeps: Sequence[SweepResult]) -> str:
    """All sweep points as delimited text, sorted by
    (kernel, arch, policy, threads_per_block)."""
    rows = []
    for sweep in sweeps:
        for p in sweep.points:
            rows.append((sweep.kernel, sweep.arch, sweep.policy,
                         p.threads_per_block, p.regs_per_thread,
                         p.smem_per_block, p.total_cycles,
                         f"{p.issue_utilization:.6f}", p.swap_stall_cycles))
    rows.sort(key=lambda r: (r[0], r[1], r[2], r[3]))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    writer.writerows(rows)
    return out.getvalue()


def parse_csv(text: str) -> list[SweepResult]:
    """Inverse of render_csv (used for round-trip checks and plotting)."""
    reader = csv.DictReader(io.StringIO(text))
    grouped: dict[tuple, list[SweepPoint]] = {}
    for row in reader:
        key = (row["kernel"], row["arch"], row["policy"])
        grouped.setdefault(key, []).append(SweepPoint(
            threads_per_block=int(row["threads_per_block"]),
            regs_per_thread=int(row["regs_per_thread"]),
            smem_per_block=int(row["smem_per_block"]),
            total_cycles=int(row["total_cycles"]),
            issue_utilization=float(row["issue_util"]),
            swap_stall_cycles=int(row["swap_stall_cycles"]),
        ))
    return [SweepResult(k, a, p, tuple(pts))
            for (k, a, p), pts in sorted(grouped.items())]


def summarize(sweeps: Sequence[SweepResult], margin: float = 0.05) -> dict:
    """Per-sweep statistics plus porting losses over ordered preset pairs
    and policy aggregates, as a JSON-ready dict."""
    by_key = {(s.kernel, s.arch, s.policy): s for s in sweeps}
    kernels = sorted({s.kernel for s in sweeps})
    archs = sorted({s.arch for s in sweeps})
    policies = sorted({s.policy for s in sweeps})

    sweep_entries = []
    for (kernel, arch, policy), sweep in sorted(by_key.items()):
        perf = [1.0 / c for c in sweep.cycles()]
        sweep_entries.append({
            "kernel": kernel,
            "arch": arch,
            "policy": policy,
            "points": len(sweep.points),
            "best_cycles": sweep.best_cycles(),
            "performance_range": performance_range(sweep),
            "max_adjacent_cliff": max_adjacent_cliff(sweep),
            "box": tukey_stats(perf).as_dict(),
        })

    porting_entries = []
    for kernel in kernels:
        for policy in policies:
            pairs = {}
            for src in archs:
                for tgt in archs:
                    if src == tgt:
                        continue
                    s = by_key.get((kernel, src, policy))
                    t = by_key.get((kernel, tgt, policy))
                    if s is None or t is None:
                        continue
                    pairs[f"{src}->{tgt}"] = porting_loss(s, t, margin)
            if pairs:
                porting_entries.append({
                    "kernel": kernel,
                    "policy": policy,
                    "pairs": pairs,
                    "max_loss": max(pairs.values()),
                })

    aggregate = {}
    for policy in policies:
        ranges = [e["performance_range"] for e in sweep_entries
                  if e["policy"] == policy]
        cliffs = [e["max_adjacent_cliff"] for e in sweep_entries
                  if e["policy"] == policy]
        losses = [e["max_loss"] for e in porting_entries
                  if e["policy"] == policy]
        aggregate[policy] = {
            "mean_performance_range": sum(ranges) / len(ranges),
            "mean_max_adjacent_cliff": sum(cliffs) / len(cliffs),
            "mean_max_porting_loss": (sum(losses) / len(losses)
                                      if losses else None),
        }

    return {
        "margin": margin,
        "sweeps": sweep_entries,
        "porting": porting_entries,
        "aggregate": aggregate,
    }


def render_summary_json(summary: dict) -> str:
    return json.dumps(summary, indent=2, sort_keys=True) + "\n"


def emit_report(sweeps: Sequence[SweepResult], margin: float = 0.05
                ) -> tuple[str, str]:
    """CSV text plus JSON summary text for a collection of sweeps."""
    return render_csv(sweeps), render_summary_json(summarize(sweeps, margin))
