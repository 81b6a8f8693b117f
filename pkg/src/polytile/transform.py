"""Schedules and domain rewrites: skew, strip-mine, interchange, tile, time-tile.

Domains are always kept in the coordinates of the loops being generated.
Skewing changes those coordinates (``x' = x + f*t``); the map back to the
original coordinates is carried as ``body_translation`` and applied when
statement bodies are emitted or interpreted.  Strip-mining adds tile
iterators to the domain; the order in which loops are scanned is a
permutation schedule over the domain iterators.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .legality import (band_violations, check_schedule_legality, check_tiled_order, check_tiling_band,
                       compute_skew_factors, skew_dependences, storage_anti_dependences)
from .polyhedron import AffineExpr, Constraint, Domain, floord
from .stencil import DependenceVector, StencilSpec, extract_dependences


class TransformError(ValueError):
    pass


class IllegalTilingError(TransformError):
    def __init__(self, message: str, dependence: tuple[int, ...] | None = None):
        super().__init__(message)
        self.dependence = dependence


class BufferConstraintError(TransformError):
    pass


@dataclass(frozen=True)
class Schedule:
    """Affine map ``out = linear @ in + shifts`` between named coordinate vectors."""

    input_names: tuple[str, ...]
    output_names: tuple[str, ...]
    linear: tuple[tuple[int, ...], ...]
    shifts: tuple[int, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "input_names", tuple(self.input_names))
        object.__setattr__(self, "output_names", tuple(self.output_names))
        object.__setattr__(self, "linear", tuple(tuple(int(c) for c in row) for row in self.linear))
        if not self.shifts:
            object.__setattr__(self, "shifts", (0,) * len(self.output_names))
        object.__setattr__(self, "shifts", tuple(self.shifts))
        if len(self.linear) != len(self.output_names) or len(self.shifts) != len(self.output_names):
            raise TransformError("schedule rows do not match its output names")
        if any(len(row) != len(self.input_names) for row in self.linear):
            raise TransformError("schedule columns do not match its input names")
        if len(set(self.output_names)) != len(self.output_names):
            raise TransformError(f"duplicate output names {self.output_names}")

    @classmethod
    def identity(cls, names: Sequence[str]) -> Schedule:
        n = len(names)
        return cls(tuple(names), tuple(names), tuple(tuple(int(i == j) for j in range(n)) for i in range(n)))

    @classmethod
    def permutation(cls, input_names: Sequence[str], order: Sequence[str]) -> Schedule:
        if sorted(order) != sorted(input_names):
            raise TransformError(f"{list(order)} is not a permutation of {list(input_names)}")
        idx = {n: i for i, n in enumerate(input_names)}
        rows = tuple(tuple(int(j == idx[o]) for j in range(len(input_names))) for o in order)
        return cls(tuple(input_names), tuple(order), rows)

    def apply(self, point: Sequence[int]) -> tuple[int, ...]:
        return tuple(sum(a * p for a, p in zip(row, point)) + s for row, s in zip(self.linear, self.shifts))

    def apply_linear(self, d: Sequence[int]) -> tuple[int, ...]:
        return tuple(sum(a * c for a, c in zip(row, d)) for row in self.linear)

    def then(self, other: Schedule) -> Schedule:
        """``other`` applied after ``self``."""
        if other.input_names != self.output_names:
            raise TransformError("schedules do not compose: name mismatch")
        rows = tuple(tuple(sum(o[k] * self.linear[k][j] for k in range(len(o)))
                           for j in range(len(self.input_names))) for o in other.linear)
        shifts = tuple(sum(o[k] * self.shifts[k] for k in range(len(o))) + s
                       for o, s in zip(other.linear, other.shifts))
        return Schedule(self.input_names, other.output_names, rows, shifts)

    def determinant(self) -> int:
        m = [[Fraction(c) for c in row] for row in self.linear]
        n = len(m)
        if n != len(self.input_names):
            raise TransformError("determinant of a non-square schedule")
        det = Fraction(1)
        for c in range(n):
            piv = next((r for r in range(c, n) if m[r][c] != 0), None)
            if piv is None:
                return 0
            if piv != c:
                m[c], m[piv] = m[piv], m[c]
                det = -det
            det *= m[c][c]
            for r in range(c + 1, n):
                f = m[r][c] / m[c][c]
                m[r] = [a - f * b for a, b in zip(m[r], m[c])]
        return int(det)

    def is_unimodular(self) -> bool:
        return len(self.linear) == len(self.input_names) and abs(self.determinant()) == 1

    def inverse_exprs(self) -> dict[str, AffineExpr]:
        """Each input coordinate as an affine expression of the outputs.

        Only defined for unimodular schedules, whose inverse is integral.
        """
        if not self.is_unimodular():
            raise TransformError("only unimodular schedules can be inverted")
        n = len(self.input_names)
        aug = [[Fraction(c) for c in row] + [Fraction(int(i == j)) for j in range(n)]
               for i, row in enumerate(self.linear)]
        for c in range(n):
            piv = next(r for r in range(c, n) if aug[r][c] != 0)
            aug[c], aug[piv] = aug[piv], aug[c]
            p = aug[c][c]
            aug[c] = [a / p for a in aug[c]]
            for r in range(n):
                if r != c and aug[r][c] != 0:
                    f = aug[r][c]
                    aug[r] = [a - f * b for a, b in zip(aug[r], aug[c])]
        inv = [[int(a) for a in row[n:]] for row in aug]
        out = {}
        for i, name in enumerate(self.input_names):
            e = AffineExpr.const(-sum(inv[i][k] * self.shifts[k] for k in range(n)))
            for k, o in enumerate(self.output_names):
                e = e + AffineExpr.var(o, inv[i][k])
            out[name] = e
        return out


def skew(d: Domain, s: Schedule, inner: str, outer: str, factor: int) -> tuple[Domain, Schedule]:
    """Skew ``inner`` by ``factor`` times ``outer``: ``inner' = inner + factor*outer``.

    ``d`` is expressed in the output coordinates of ``s``; the returned domain
    is rewritten by substituting ``inner = inner' - factor*outer``.
    """
    if factor < 0:
        raise TransformError(f"skew factor must be non-negative, got {factor}")
    if inner == outer:
        raise TransformError("cannot skew a loop against itself")
    for name in (inner, outer):
        if name not in d.iterators:
            raise TransformError(f"{name!r} is not an iterator of the domain")
        if name not in s.output_names:
            raise TransformError(f"{name!r} is not an output of the schedule")
    if d.iterators.index(outer) >= d.iterators.index(inner):
        raise TransformError(f"{inner!r} must be nested inside {outer!r} to be skewed against it")
    if factor == 0:
        return d, s
    sub = {inner: AffineExpr.var(inner) - AffineExpr.var(outer, factor)}
    nd = Domain(d.iterators, d.parameters, tuple(c.substitute(sub) for c in d.constraints))
    i, o = s.output_names.index(inner), s.output_names.index(outer)
    rows = list(s.linear)
    shifts = list(s.shifts)
    rows[i] = tuple(a + factor * b for a, b in zip(rows[i], rows[o]))
    shifts[i] += factor * shifts[o]
    return nd, Schedule(s.input_names, s.output_names, tuple(rows), tuple(shifts))


def tile_name(dim: str, taken: Sequence[str]) -> str:
    """Name of the tile loop for ``dim``: ``time`` -> ``tt``, ``x`` -> ``xx``."""
    name = dim[0] * 2
    if name not in taken and name != dim:
        return name
    name = f"{dim}_t"
    while name in taken:
        name += "_"
    return name


def strip_mine(d: Domain, dim: str, size: int, name: str | None = None) -> Domain:
    """Split ``dim`` into a tile loop and a point loop of ``size`` iterations.

    Tiles are aligned to multiples of ``size``: ``size*tile <= dim <= size*tile + size - 1``.
    """
    if size < 1:
        raise TransformError(f"tile size must be positive, got {size}")
    if dim not in d.iterators:
        raise TransformError(f"{dim!r} is not an iterator of the domain")
    name = name or tile_name(dim, d.iterators + d.parameters)
    if name in d.iterators or name in d.parameters:
        raise TransformError(f"tile iterator name {name!r} is already used")
    v, t = AffineExpr.var(dim), AffineExpr.var(name)
    its = list(d.iterators)
    its.insert(its.index(dim), name)
    cons = d.constraints + (Constraint.ge(v - t * size), Constraint.ge(t * size + (size - 1) - v))
    return Domain(tuple(its), d.parameters, cons)


def interchange(s: Schedule, a: int | str, b: int | str) -> Schedule:
    """Swap two output dimensions (given by position or name)."""
    n = len(s.output_names)
    ia = s.output_names.index(a) if isinstance(a, str) else a
    ib = s.output_names.index(b) if isinstance(b, str) else b
    if not (0 <= ia < n and 0 <= ib < n):
        raise TransformError(f"interchange dims {a!r}, {b!r} out of range for {n} outputs")
    rows, names, shifts = list(s.linear), list(s.output_names), list(s.shifts)
    for seq in (rows, names, shifts):
        seq[ia], seq[ib] = seq[ib], seq[ia]
    return Schedule(s.input_names, tuple(names), tuple(rows), tuple(shifts))


def tile(d: Domain, s: Schedule, sizes: Mapping[str, int],
         names: Mapping[str, str] | None = None) -> tuple[Domain, Schedule]:
    """Strip-mine every dim in ``sizes`` and hoist the tile loops outward as a band.

    Returns the strip-mined domain and the permutation schedule giving the
    loop order: tile loops in ``d``'s order, then all point loops.
    """
    if set(s.output_names) != set(d.iterators):
        raise TransformError("schedule outputs and domain iterators differ")
    for dim in sizes:
        if dim not in d.iterators:
            raise TransformError(f"cannot tile unknown dimension {dim!r}")
    names = dict(names or {})
    out = d
    tiles = []
    for dim in d.iterators:
        if dim in sizes:
            out = strip_mine(out, dim, sizes[dim], names.get(dim))
            tiles.append(out.iterators[out.iterators.index(dim) - 1])
    order = tiles + list(d.iterators)
    return out, Schedule.permutation(out.iterators, order)


@dataclass(frozen=True)
class TileConfig:
    spatial_tile_sizes: Mapping[str, int] = field(default_factory=dict)
    time_tile_size: int | None = None
    skew_factors: Mapping[str, int] | None = None

    def __post_init__(self):
        for k, v in self.spatial_tile_sizes.items():
            if v < 1:
                raise TransformError(f"tile size for {k!r} must be positive, got {v}")
        if self.time_tile_size is not None and self.time_tile_size < 1:
            raise TransformError(f"time tile size must be positive, got {self.time_tile_size}")
        for k, v in (self.skew_factors or {}).items():
            if v < 0:
                raise TransformError(f"skew factor for {k!r} must be non-negative, got {v}")


@dataclass(frozen=True)
class TransformedProgram:
    """A rewritten loop nest ready for scanning.

    ``domain`` holds the points in transformed coordinates (strip-mined,
    skewed); ``schedule`` is the permutation of its iterators giving the loop
    order.  ``skew`` maps original points to skewed coordinates and
    ``body_translation`` maps back, expressed over the domain iterators.
    """

    original: Domain
    domain: Domain
    schedule: Schedule
    skew: Schedule
    body_translation: Mapping[str, AffineExpr]
    skew_factors: Mapping[str, int] = field(default_factory=dict)
    tile_sizes: Mapping[str, int] = field(default_factory=dict)
    tile_names: Mapping[str, str] = field(default_factory=dict)
    deps: tuple[tuple[int, ...], ...] = ()
    time_dim: str | None = None
    vectorized: str | None = None

    @property
    def loop_order(self) -> tuple[str, ...]:
        return self.schedule.output_names

    def scan_domain(self) -> Domain:
        return self.domain.reorder(self.loop_order)

    def to_original(self, loop_point: Sequence[int]) -> tuple[int, ...]:
        env = dict(zip(self.loop_order, loop_point))
        return tuple(self.body_translation[d].evaluate(env) for d in self.original.iterators)

    def forward(self, point: Sequence[int]) -> tuple[int, ...]:
        """Loop-order coordinates of an original point, computed directly (no scanning)."""
        sk = dict(zip(self.skew.output_names, self.skew.apply(point)))
        env = dict(sk)
        for dim, name in self.tile_names.items():
            env[name] = floord(sk[dim], self.tile_sizes[dim])
        return tuple(env[n] for n in self.loop_order)

    def skewed_deps(self) -> list[tuple[int, ...]]:
        return [self.skew.apply_linear(d) for d in self.deps]

    def tiled_loop_order(self) -> list[tuple[int, bool]]:
        """Loop order as ``(skewed-dim index, is_tile_loop)`` pairs."""
        back = {v: k for k, v in self.tile_names.items()}
        idx = {n: i for i, n in enumerate(self.skew.output_names)}
        return [(idx[back[n]], True) if n in back else (idx[n], False) for n in self.loop_order]


def build_program(domain: Domain, deps: Sequence = (), skews: Mapping[str, int] | None = None,
                  order: Sequence[str] | None = None, tile_sizes: Mapping[str, int] | None = None,
                  time_dim: str | None = None, vectorized: str | None = None,
                  tile_names: Mapping[str, str] | None = None) -> TransformedProgram:
    """Skew (every listed dim against the outermost iterator), then tile or permute.

    With ``tile_sizes`` the tile loops form the outermost band and ``order``
    must be omitted; otherwise ``order`` permutes the skewed loops.
    """
    outer = time_dim or domain.iterators[0]
    s = Schedule.identity(domain.iterators)
    d = domain
    skews = {k: v for k, v in (skews or {}).items() if v}
    for dim in domain.iterators:
        if dim in skews:
            d, s = skew(d, s, dim, outer, skews[dim])
    translation = s.inverse_exprs()
    names: dict[str, str] = {}
    if tile_sizes:
        if order is not None:
            raise TransformError("order and tile_sizes are mutually exclusive")
        sizes = {k: v for k, v in tile_sizes.items()}
        d, perm = tile(d, Schedule.identity(d.iterators), sizes, tile_names)
        for dim in sizes:
            names[dim] = d.iterators[d.iterators.index(dim) - 1]
    else:
        perm = Schedule.permutation(d.iterators, order or d.iterators)
    return TransformedProgram(
        original=domain, domain=d, schedule=perm, skew=s, body_translation=translation,
        skew_factors=dict(skews), tile_sizes=dict(tile_sizes or {}), tile_names=names,
        deps=tuple(tuple(int(c) for c in dep) for dep in deps),
        time_dim=time_dim, vectorized=vectorized)


def time_tile(spec: StencilSpec, cfg: TileConfig, check: bool = True) -> TransformedProgram:
    """Skew, tile and (optionally) time-tile a stencil.

    Every spatial dimension with a non-zero factor is skewed against time,
    including the vectorized one, whose loop is never tiled.  Without a time
    tile, time ends up directly inside the spatial tile loops.  With
    ``check`` the band (time plus the tiled spatial dims) must be fully
    permutable after skewing, and for a buffered time dimension the order
    must not overwrite a ring slot before its last reader has run.
    ``check=False`` skips both tests so that illegal configurations can be
    handed to the oracle.  A time tile larger than the buffer is always
    refused.
    """
    deps = [tuple(d) for d in extract_dependences(spec)]
    t = spec.time
    for dim in cfg.spatial_tile_sizes:
        if dim == t:
            raise TransformError("use time_tile_size to tile the time dimension")
        if dim not in spec.spatial:
            raise TransformError(f"cannot tile unknown dimension {dim!r}")
        if dim == spec.vectorized:
            raise TransformError(f"the vectorized dimension {dim!r} is not tiled")
    for dim in cfg.skew_factors or {}:
        if dim not in spec.spatial:
            raise TransformError(f"cannot skew {dim!r}: not a spatial dimension")

    B = spec.time_buffer
    tt = cfg.time_tile_size
    if B is not None and tt is not None and tt > B:
        raise BufferConstraintError(
            f"time tile size {tt} exceeds the time buffer of {B} steps; "
            "time tiles must be no larger than the buffered dimension")

    spatial_idx = list(range(1, len(spec.dims)))
    factors = {spec.dims[k]: f for k, f in compute_skew_factors(deps, spatial_idx).items()} if deps \
        else {d: 0 for d in spec.spatial}
    factors.update(cfg.skew_factors or {})

    sizes = dict(cfg.spatial_tile_sizes)
    if tt is not None:
        sizes[t] = tt
    band_dims = [t] + [d for d in spec.spatial if d in sizes] if sizes else []
    if check and band_dims:
        skewed = skew_dependences(deps, {spec.dims.index(d): f for d, f in factors.items()})
        band = [spec.dims.index(d) for d in band_dims]
        if not check_tiling_band(skewed, band):
            bad = band_violations(skewed, band)[0]
            orig = deps[[tuple(s) for s in skewed].index(bad)]
            raise IllegalTilingError(
                f"dependence {DependenceVector(orig)} (skewed {DependenceVector(bad)}) has a negative "
                f"component in the tiling band ({', '.join(band_dims)}); increase the skew factors", orig)

    prog = build_program(spec.domain(), deps, factors, tile_sizes=sizes or None, time_dim=t,
                         vectorized=spec.vectorized)
    if check and B is not None:
        bad = buffer_violations(prog, spec.reads, B)
        if bad:
            raise BufferConstraintError(
                f"a {B}-step time buffer is too small for this order: the slot read at distance "
                f"{DependenceVector(bad[0])} is overwritten before the read")
    return prog


def buffer_violations(p: TransformedProgram, reads: Sequence, buffer: int) -> list[tuple[int, ...]]:
    """Storage anti-dependences of a ``buffer``-step ring that ``p``'s order breaks."""
    anti = storage_anti_dependences(reads, buffer)
    if p.tile_sizes:
        sizes = {p.skew.output_names.index(d): T for d, T in p.tile_sizes.items()}
        skewed = [p.skew.apply_linear(v) for v in anti]
        verdict = check_tiled_order(skewed, p.tiled_loop_order(), sizes)
        bad = {img for img, _ in verdict.violations}
        return [v for v, img in zip(anti, skewed) if img in bad]
    sched = p.skew.then(Schedule.permutation(p.skew.output_names, p.loop_order))
    return [d for d, _ in check_schedule_legality(anti, sched).violations]

