"""Deterministic simulator of GPU SM on-chip resource management.

Compares static block-granularity allocation, warp-level allocation, and
dynamic phase-based virtualization with oversubscription on synthetic
phase-annotated kernels, and derives sweep statistics (performance range,
cliffs, porting loss) from the results.
"""

from .coordinator import Coordinator, CoordinatorParams, EpochTelemetry
from .engine import (BASELINE, VIRT, WLM, Policy, SimResult,
                     UnschedulableError, simulate, warp_phase_cycles)
from .metrics import (BoxStats, SweepPoint, SweepResult, emit_report,
                      max_adjacent_cliff, performance_range, porting_loss,
                      tukey_stats)
from .occupancy import (AdmitDecision, SmOccupancyState, limiting_resource,
                        max_resident_blocks, wlm_admit)
from .phasegen import (GeneratorTemplate, InstructionRecord, InstructionTrace,
                       PhaseParams, generate_workload, identify_phases)
from .virt import AllocationOutcome, MappingTable, OversubLimits
from .workload import (GpuConfig, KernelProgram, PhaseDescriptor,
                       ResourceSpec, WorkloadError, WorkloadSpec, arch_preset,
                       declared_spec, parse_workload, serialize_workload)

__version__ = "0.1.0"
