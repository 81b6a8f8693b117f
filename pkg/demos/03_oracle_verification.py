"""
Checking a tiling by brute force
================================

The oracle enumerates every point, executes them in the transformed order
and replays the stencil in single precision.  A legal tiling must leave
every bit of the result unchanged.
"""

import numpy as np

import polytile as P
from polytile import oracle

spec = P.load_spec("toy_1d.stencil")
params = {"T": 9, "N": 12}

# tiling time and space without a skew breaks the (1, -1) dependence
bad = P.time_tile(spec, P.TileConfig({"x": 3}, time_tile_size=3, skew_factors={"x": 0}), check=False)
report = P.verify(spec, bad, params, numeric=True)
print("unskewed:", report.summary())
d, src, snk = report.violations[0]
print(f"  first violation: {d} from {src} to {snk}")

# with the minimal skew the same tiling is legal
good = P.time_tile(spec, P.TileConfig({"x": 3}, time_tile_size=3))
print("skewed:  ", P.verify(spec, good, params, numeric=True).summary())

# the interpreter can also be used directly, on any order of the points
init = oracle.initial_grid(spec, params)
ref = P.interpret(spec, P.execution_order(spec.domain(), params), init, params)
out = P.interpret(spec, P.execution_order(good, params), init, params)
print("identical bits:", np.array_equal(ref.view(np.uint32), out.view(np.uint32)))

# reading a value before it was written is an error, not a silent wrong answer
order = list(P.execution_order(spec.domain(), params))
order[0], order[-1] = order[-1], order[0]
try:
    P.interpret(spec, order, init, params)
except oracle.UninitializedReadError as e:
    print("caught:", e)
