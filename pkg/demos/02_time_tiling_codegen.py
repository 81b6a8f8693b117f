"""
Time tiling and C generation
============================

Skew, tile and emit the loop nest.  The generated C hoists the skew into a
local variable and indexes the field with the unskewed coordinates.
"""

import polytile as P
from polytile.transform import BufferConstraintError

spec = P.load_spec("awe_so8_buffered.stencil")

# 16 x 16 spatial tiles and 8 time steps per tile, with the minimal skew
prog = P.time_tile(spec, P.TileConfig({"x": 16, "y": 16}, time_tile_size=8))
print("loop order:", " ".join(prog.loop_order))
print("skew:", prog.skew_factors)

ast = P.generate_loop_ast(prog, spec)
code = P.emit_c(ast, P.EmitOptions(omp=True, simd=True, denormals=True))
print("\n".join(code.splitlines()[:40]))
print("...")

# the time dimension is stored in an 8-slot ring, so a 9-step time tile is refused
try:
    P.time_tile(spec, P.TileConfig({"x": 16, "y": 16}, time_tile_size=9))
except BufferConstraintError as e:
    print("refused:", e)

# the generated nest can be run directly on a small instance
params = dict(time_size=6, x_size=12, y_size=12, z_size=12)
points = P.run_ast(ast, params)
print(f"{len(points)} statement instances on a 12^3 grid over 6 steps")
