"""Sweep orchestration: (kernel x preset x policy x block size) runs.

Results are keyed and sorted before anything is written, so the output
bytes do not depend on the worker pool's scheduling.
"""

from __future__ import annotations

import configparser
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .coordinator import CoordinatorParams
from .engine import Policy, simulate
from .metrics import SweepPoint, SweepResult, render_csv, render_summary_json, summarize
from .workload import WorkloadSpec, arch_preset, parse_workload


class SweepError(RuntimeError):
    pass


@dataclass(frozen=True)
class SweepConfig:
    workload_paths: tuple[str, ...]
    block_sizes: tuple[int, ...]
    policies: tuple[str, ...]
    presets: tuple[str, ...]
    output_dir: str
    parallelism: int = 1
    margin: float = 0.05
    plots: bool = True
    coordinator: CoordinatorParams = CoordinatorParams()

    def __post_init__(self):
        if not (self.workload_paths and self.block_sizes and self.policies
                and self.presets):
            raise SweepError("sweep lists must be non-empty")
        for b in self.block_sizes:
            if b % 32 != 0 or b <= 0:
                raise SweepError(f"block size {b} is not a warp multiple")


def _split(raw: str) -> list[str]:
    return raw.replace(",", " ").split()


def load_config(path: str | Path) -> SweepConfig:
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise SweepError(f"cannot read config file {path}")
    if "sweep" not in parser:
        raise SweepError("config needs a [sweep] section")
    section = parser["sweep"]
    base = Path(path).parent
    try:
        workloads = tuple(
            str((base / p)) if not Path(p).is_absolute() else p
            for p in _split(section["workloads"]))
        blocks = tuple(int(b) for b in _split(section["block_sizes"]))
        policies = tuple(_split(section.get("policies", "baseline wlm virt")))
        presets = tuple(_split(section.get("presets", "gen-a gen-b gen-c")))
        out_dir = section.get("output_dir", "out")
        output_dir = str(base / out_dir) if not Path(out_dir).is_absolute() \
            else out_dir
        parallelism = section.getint("parallelism", 1)
        margin = section.getfloat("margin", 0.05)
        plots = section.getboolean("plots", True)
    except KeyError as exc:
        raise SweepError(f"config missing key {exc}") from None
    coord = CoordinatorParams()
    if "coordinator" in parser:
        c = parser["coordinator"]
        coord = CoordinatorParams(
            u_target=c.getfloat("u_target", 0.9),
            s_max=c.getfloat("s_max", 0.1),
            step=c.getfloat("step", 0.125),
            o_max=c.getfloat("o_max", 2.0),
            epoch_cycles=c.getint("epoch_cycles", 1000),
        )
    return SweepConfig(
        workload_paths=workloads, block_sizes=blocks, policies=policies,
        presets=presets, output_dir=output_dir, parallelism=parallelism,
        margin=margin, plots=plots, coordinator=coord)


def _policy(kind: str, params: CoordinatorParams) -> Policy:
    return Policy(kind, params) if kind == "virt" else Policy(kind)


def run_one_sweep(workload: WorkloadSpec, preset: str, policy_kind: str,
                  block_sizes, params: CoordinatorParams) -> SweepResult:
    """All block sizes of one (kernel, preset, policy) combination."""
    cfg = arch_preset(preset)
    policy = _policy(policy_kind, params)
    points = []
    for block in block_sizes:
        scaled = workload.with_block_size(block)
        try:
            res = simulate(scaled, cfg, policy)
        except Exception as exc:
            raise SweepError(
                f"simulation failed for kernel={workload.kernel.name} "
                f"preset={preset} policy={policy_kind} "
                f"threads_per_block={block}: {exc}") from exc
        points.append(SweepPoint(
            threads_per_block=block,
            regs_per_thread=scaled.spec.regs_per_thread,
            smem_per_block=scaled.spec.smem_per_block,
            total_cycles=res.total_cycles,
            issue_utilization=res.issue_utilization,
            swap_stall_cycles=res.swap_stall_cycles,
        ))
    return SweepResult(workload.kernel.name, preset, policy_kind,
                       tuple(points))


def _worker(args):
    workload, preset, policy_kind, block_sizes, params = args
    return run_one_sweep(workload, preset, policy_kind, block_sizes, params)


def compute_sweeps(config: SweepConfig,
                   workloads: list[WorkloadSpec]) -> list[SweepResult]:
    tasks = [(w, preset, policy, config.block_sizes, config.coordinator)
             for w in workloads
             for preset in config.presets
             for policy in config.policies]
    if config.parallelism <= 1:
        results = [_worker(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=config.parallelism) as pool:
            results = list(pool.map(_worker, tasks, chunksize=1))
    results.sort(key=lambda s: (s.kernel, s.arch, s.policy))
    return results


def load_workloads(config: SweepConfig) -> list[WorkloadSpec]:
    workloads = []
    for path in config.workload_paths:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise SweepError(f"cannot read workload {path}: {exc}") from exc
        workloads.append(parse_workload(text))
    names = [w.kernel.name for w in workloads]
    if len(set(names)) != len(names):
        raise SweepError(f"duplicate kernel names in workload set: {names}")
    return workloads


def run_sweep(config: SweepConfig) -> dict[str, str]:
    """Execute the configured sweep and write report artifacts.

    Returns the paths written (csv, summary, and any figures)."""
    workloads = load_workloads(config)
    sweeps = compute_sweeps(config, workloads)
    summary = summarize(sweeps, margin=config.margin)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "report.csv"
    json_path = out_dir / "summary.json"
    csv_path.write_text(render_csv(sweeps), encoding="utf-8")
    json_path.write_text(render_summary_json(summary), encoding="utf-8")
    written = {"csv": str(csv_path), "summary": str(json_path)}
    if config.plots:
        from .plots import render_figures
        for name, path in render_figures(sweeps, summary, out_dir).items():
            written[name] = path
    return written
