"""
Reading and writing CLooG input files
=====================================

The bundled ``basic_loop.cloog`` describes a triangular loop nest and
``awe_tile16.cloog`` a hand-written time tiling with a scattering function.
"""

import polytile as P
from polytile import cloog

basic = P.data_path("basic_loop.cloog").read_text()
prob = P.parse_cloog_input(basic)
dom = P.to_domain(prob, 0)
print("basic loop:", dom.iterators, f"{len(P.enumerate_points(dom, {}))} points")

# writing the parsed problem back gives the same token stream
print("round trip identical:", cloog.tokens(P.write_cloog_input(prob)) == cloog.tokens(basic))

# code for the triangle, through the same generator as the stencils
print(P.emit_c(P.generate_loop_ast(P.to_program(prob, 0))))

# the tiling file orders its loops through the scattering rows
tile = P.parse_cloog_input(P.data_path("awe_tile16.cloog").read_text())
print("tile file parameters:", tile.parameter_names)
print("scattered loop order:", P.to_program(tile).loop_order)

# our own time tiling can be exported in the same format
spec = P.load_spec("toy_1d.stencil")
prog = P.time_tile(spec, P.TileConfig({"x": 4}, time_tile_size=2))
print(P.write_cloog_input(P.from_transformed(prog)))
