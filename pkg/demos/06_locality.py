"""
Reuse distance before and after time tiling
===========================================

The mean LRU stack distance counts how many distinct cells are touched
between two uses of the same cell.  Time tiling brings reuses closer.
"""

import polytile as P

spec = P.load_spec("awe_1d.stencil")
params = {"T": 16, "N": 64}

plain = P.reuse_distance(P.execution_order(spec.domain(), params), spec)
print(f"row-major order: mean distance {plain.mean:.3f} over {plain.accesses} accesses")

for x_tile, t_tile in [(8, 4), (16, 4), (8, 8)]:
    prog = P.time_tile(spec, P.TileConfig({"x": x_tile}, time_tile_size=t_tile))
    stats = P.reuse_distance(P.execution_order(prog, params), spec)
    print(f"x {x_tile:2d}, time {t_tile}: mean distance {stats.mean:.3f}")

# the histogram shows where the reuses fall
print("shortest distances, row-major:", dict(list(plain.histogram.items())[:5]))
