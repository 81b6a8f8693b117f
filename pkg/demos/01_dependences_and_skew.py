"""
Dependences, skew factors and tiling bands
==========================================

A stencil that reads ``u[t-1][x-4]`` creates a dependence pointing back in
space.  Tiling time together with x is only legal after skewing x by time.
"""

import polytile as P
from polytile import legality, stencil

# the acoustic wave update of space order 8 reads 25 neighbours one step back
# plus the centre two steps back
spec = P.load_spec("awe_so8.stencil")
deps = P.extract_dependences(spec)
print(f"{len(deps)} dependence vectors, for example {deps[0]} and {deps[-1]}")

# the extreme vectors are the ones that decide the skew
for d in stencil.extreme_dependences(deps):
    print("  extreme", d)

# the smallest skew that makes every spatial component non-negative
factors = P.compute_skew_factors(deps, [1, 2, 3])
print("skew factors:", {spec.dims[k]: f for k, f in factors.items()})

# before the skew the (time, x) band is not fully permutable, afterwards it is
raw = [tuple(d) for d in deps]
skewed = legality.skew_dependences(raw, factors)
print("band {time,x} legal before skew:", P.check_tiling_band(raw, [0, 1]))
print("band {time,x,y,z} legal after skew:", P.check_tiling_band(skewed, [0, 1, 2, 3]))
print("offending vectors before skew:", legality.band_violations(raw, [0, 1])[:3])

# a steep dependence needs a larger factor: (2, -3) gives ceil(3 / 2) = 2
print("skew for (2, -3):", P.compute_skew_factors([(2, -3)], [1]))
