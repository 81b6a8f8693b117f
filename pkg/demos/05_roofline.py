"""
Roofline bounds for the measured stencils
=========================================

A memory-bound stencil cannot beat intensity times bandwidth, and cannot
finish faster than its traffic divided by bandwidth.
"""

from polytile import perf

m = perf.PUBLISHED_MACHINE
print(f"machine peak {perf.machine_peak_gflops(m):g} GFLOPS at {m.bandwidth} GB/s")

records = perf.report_rows(perf.PUBLISHED_ROWS, m)
print(perf.format_table(records))

# every measured stencil sits under the bandwidth roof
for s in perf.PUBLISHED_ROWS:
    print(s.name, "memory bound:", perf.is_memory_bound(s, m))

# a hypothetical faster memory system
fast = perf.MachineModel(bandwidth=2 * m.bandwidth, flops_per_cycle=m.flops_per_cycle, clock=m.clock)
s = perf.PUBLISHED_ROWS[0]
print(f"doubling bandwidth: {perf.min_runtime_s(s, m):.3f} s -> {perf.min_runtime_s(s, fast):.3f} s")
