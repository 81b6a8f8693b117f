"""Roofline arithmetic.

Bandwidth is in GB/s with GB = 1e9 bytes, traffic in GB, rates in GFLOPS.
A change is reported so that negative means worse than the bound: slower
than the minimum run time, or fewer GFLOPS than the roofline peak.
"""

from __future__ import annotations

from dataclasses import dataclass


class PerfModelError(ValueError):
    pass


@dataclass(frozen=True)
class MachineModel:
    bandwidth: float          # GB/s
    flops_per_cycle: float
    clock: float              # GHz

    def __post_init__(self):
        for name in ("bandwidth", "flops_per_cycle", "clock"):
            if not getattr(self, name) > 0:
                raise PerfModelError(f"{name} must be positive, got {getattr(self, name)}")


@dataclass(frozen=True)
class StencilPerf:
    arithmetic_intensity: float   # flop / byte
    memory_traffic: float         # GB
    actual_gflops: float | None = None
    actual_runtime_s: float | None = None
    name: str = ""

    def __post_init__(self):
        for name in ("arithmetic_intensity", "memory_traffic", "actual_gflops", "actual_runtime_s"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise PerfModelError(f"{name} must be non-negative, got {v}")


def machine_peak_gflops(m: MachineModel) -> float:
    return m.flops_per_cycle * m.clock


def stencil_peak_gflops(s: StencilPerf, m: MachineModel) -> float:
    """Memory-bound ceiling: intensity times bandwidth."""
    return s.arithmetic_intensity * m.bandwidth


def attainable_gflops(s: StencilPerf, m: MachineModel) -> float:
    return min(machine_peak_gflops(m), stencil_peak_gflops(s, m))


def is_memory_bound(s: StencilPerf, m: MachineModel) -> bool:
    return stencil_peak_gflops(s, m) < machine_peak_gflops(m)


def min_runtime_s(s: StencilPerf, m: MachineModel) -> float:
    return s.memory_traffic / m.bandwidth


@dataclass(frozen=True)
class PeakComparison:
    gflops_change_pct: float | None
    runtime_change_pct: float | None


def _pct(delta: float, base: float) -> float | None:
    return None if base == 0 else delta / base * 100.0


def compare_to_peak(s: StencilPerf, m: MachineModel) -> PeakComparison:
    peak = stencil_peak_gflops(s, m)
    tmin = min_runtime_s(s, m)
    g = _pct(s.actual_gflops - peak, peak) if s.actual_gflops is not None else None
    r = _pct(tmin - s.actual_runtime_s, tmin) if s.actual_runtime_s is not None else None
    return PeakComparison(g, r)


# Test machine and measured stencils from the published evaluation.
PUBLISHED_MACHINE = MachineModel(bandwidth=15.168, flops_per_cycle=32, clock=4.00)
PUBLISHED_ROWS = (
    StencilPerf(2.15, 11.101, actual_gflops=31.625, actual_runtime_s=0.753, name="row 1"),
    StencilPerf(2.20, 83.089, actual_gflops=28.862, actual_runtime_s=6.346, name="row 2"),
    StencilPerf(2.25, 174.079, actual_gflops=28.929, actual_runtime_s=13.727, name="row 3"),
)


def report_rows(rows, m: MachineModel) -> list[dict[str, float | str | None]]:
    out = []
    for s in rows:
        c = compare_to_peak(s, m)
        out.append({
            "name": s.name,
            "ai": s.arithmetic_intensity,
            "traffic_gb": s.memory_traffic,
            "peak_gflops": stencil_peak_gflops(s, m),
            "min_runtime_s": min_runtime_s(s, m),
            "machine_peak_gflops": machine_peak_gflops(m),
            "memory_bound": is_memory_bound(s, m),
            "actual_gflops": s.actual_gflops,
            "actual_runtime_s": s.actual_runtime_s,
            "gflops_change_pct": c.gflops_change_pct,
            "runtime_change_pct": c.runtime_change_pct,
        })
    return out


def _cell(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


_COLUMNS = (("ai", "AI"), ("traffic_gb", "traffic GB"), ("peak_gflops", "peak GFLOPS"),
            ("min_runtime_s", "min s"), ("actual_gflops", "GFLOPS"), ("gflops_change_pct", "change %"),
            ("actual_runtime_s", "run s"), ("runtime_change_pct", "change %"))


def format_table(records: list[dict]) -> str:
    """Aligned plain-text table of :func:`report_rows` records."""
    head = [h for _, h in _COLUMNS]
    body = [[_cell(r[k]) for k, _ in _COLUMNS] for r in records]
    widths = [max(len(x) for x in col) for col in zip(head, *body)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(head, widths))]
    lines += ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in body]
    return "\n".join(lines) + "\n"


def format_keyvalue(records: list[dict]) -> str:
    lines = []
    for i, r in enumerate(records, 1):
        for k, v in r.items():
            if k == "name":
                continue
            lines.append(f"row{i}.{k}={_cell(v) if not isinstance(v, float) else repr(round(v, 6))}")
    return "\n".join(lines) + "\n"
