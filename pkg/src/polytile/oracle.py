"""Ground truth by brute force.

Nothing in this module uses Fourier-Motzkin projection.  Point sets come
from filtering an integer box against the exact constraints (with
backtracking on partial assignments), execution orders from sorting, and
numeric results from a point-by-point interpreter that timestamps every
cell so that reading a stale or never-written value is an error.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .polyhedron import Domain, bounding_box, floord
from .stencil import StencilSpec, default_weights, extract_dependences
from .transform import TransformedProgram

Point = tuple[int, ...]


class OracleError(RuntimeError):
    pass


class UninitializedReadError(OracleError):
    def __init__(self, point: Point, cell: Point, expected: int, found: int | None):
        what = "never written" if found is None else f"holds step {found}"
        super().__init__(f"point {point} reads cell {cell} for step {expected}, but the cell {what}")
        self.point, self.cell, self.expected, self.found = point, cell, expected, found


def brute_force_points(d: Domain, params: Mapping[str, int], box: Mapping[str, tuple[int, int]],
                       order: Sequence[str] | None = None) -> list[Point]:
    """Integer points of ``d`` inside ``box``, sorted lexicographically in ``order``.

    Iterators are assigned one at a time over their box interval; a
    constraint is tested as soon as all of its iterators are assigned.
    """
    bound = d.bind(params)
    if bound.parameters:
        raise OracleError(f"unbound parameters {list(bound.parameters)}")
    its = list(bound.iterators)
    levels = {it: i for i, it in enumerate(its)}
    checks: list[list] = [[] for _ in its]
    for c in bound.constraints:
        if not c.variables:
            if not c.is_trivial():
                return []
            continue
        last = max(levels[v] for v in c.variables)
        terms = tuple((levels[n], a) for n, a in c.expr.coeffs)
        checks[last].append((c.kind == "eq", terms, c.expr.constant))
    ranges = [range(box[it][0], box[it][1] + 1) for it in its]
    out: list[Point] = []
    point = [0] * len(its)

    def rec(k: int):
        if k == len(its):
            out.append(tuple(point))
            return
        for v in ranges[k]:
            point[k] = v
            ok = True
            for is_eq, terms, const in checks[k]:
                val = sum(a * point[i] for i, a in terms) + const
                if (val != 0) if is_eq else (val < 0):
                    ok = False
                    break
            if ok:
                rec(k + 1)

    if its:
        rec(0)
    else:
        out.append(())
    if order is not None:
        perm = [its.index(o) for o in order]
        out = [tuple(p[i] for i in perm) for p in out]
    return sorted(out)


def original_box(d: Domain, params: Mapping[str, int]) -> dict[str, tuple[int, int]]:
    """Exact box for rectangular domains, a projection-based enclosure otherwise."""
    bound = d.bind(params)
    lo: dict[str, int] = {}
    hi: dict[str, int] = {}
    for c in bound.constraints:
        if c.kind == "ge" and len(c.variables) == 1:
            (v, a), = c.expr.coeffs
            if a == 1:
                lo[v] = max(lo.get(v, -c.expr.constant), -c.expr.constant)
            elif a == -1:
                hi[v] = min(hi.get(v, c.expr.constant), c.expr.constant)
    if all(v in lo and v in hi for v in bound.iterators):
        return {v: (lo[v], hi[v]) for v in bound.iterators}
    return bounding_box(bound)


def program_box(p: TransformedProgram, params: Mapping[str, int], margin: int = 2) -> dict[str, tuple[int, int]]:
    """Interval enclosure of the transformed domain by forward interval arithmetic.

    The box is widened by ``margin`` so that points a buggy transformation
    adds just outside the true image are still found and reported.
    """
    box = original_box(p.original, params)
    out: dict[str, tuple[int, int]] = {}
    for name, row, shift in zip(p.skew.output_names, p.skew.linear, p.skew.shifts):
        lo = hi = shift
        for a, it in zip(row, p.skew.input_names):
            l, h = box[it]
            lo += min(a * l, a * h)
            hi += max(a * l, a * h)
        out[name] = (lo - margin, hi + margin)
    for dim, tname in p.tile_names.items():
        T = p.tile_sizes[dim]
        lo, hi = out[dim]
        out[tname] = (floord(lo, T) - 1, floord(hi, T) + 1)
    for it in p.domain.iterators:
        if it not in out:
            raise OracleError(f"no interval for iterator {it!r}")
    return out


@dataclass
class ExecutionOrder:
    points: list[Point]

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)


def execution_order(p: TransformedProgram | Domain, params: Mapping[str, int] | None = None) -> ExecutionOrder:
    """Original-space points in the order the transformed loops visit them."""
    params = dict(params or {})
    if isinstance(p, Domain):
        return ExecutionOrder(brute_force_points(p, params, original_box(p, params)))
    loop_pts = brute_force_points(p.domain, params, program_box(p, params), p.loop_order)
    return ExecutionOrder([p.to_original(q) for q in loop_pts])


def reference_order(p: TransformedProgram, params: Mapping[str, int]) -> ExecutionOrder:
    """The same order computed without the transformed domain: sort by forward image."""
    pts = execution_order(p.original, params).points
    return ExecutionOrder(sorted(pts, key=p.forward))


@dataclass
class VerificationReport:
    is_permutation: bool
    missing: list[Point] = field(default_factory=list)
    extra: list[Point] = field(default_factory=list)
    violations: list[tuple[Point, Point, Point]] = field(default_factory=list)
    numeric_equal: bool | None = None

    @property
    def legal(self) -> bool:
        return self.is_permutation and not self.violations

    def summary(self) -> str:
        parts = [f"{len(self.violations)} violations"]
        if not self.is_permutation:
            parts.append(f"{len(self.missing)} missing, {len(self.extra)} extra points")
        if self.numeric_equal is not None:
            parts.append("bitwise equal" if self.numeric_equal else "numeric mismatch")
        return "; ".join(parts)


def check_order(deps: Sequence, domain_points: Sequence[Point], order: Sequence[Point],
                limit: int | None = None) -> VerificationReport:
    """Compare an execution order with the domain and test every dependence instance."""
    expected = sorted(domain_points)
    got = sorted(order)
    missing, extra = _multiset_diff(expected, got)
    report = VerificationReport(is_permutation=not missing and not extra, missing=missing, extra=extra)
    pos: dict[Point, int] = {}
    for i, q in enumerate(order):
        pos.setdefault(tuple(q), i)
    members = set(map(tuple, domain_points))
    for d in deps:
        d = tuple(d)
        for q in order:
            src = tuple(a - b for a, b in zip(q, d))
            if src in members and src in pos and pos[src] >= pos[tuple(q)]:
                report.violations.append((d, src, tuple(q)))
                if limit is not None and len(report.violations) >= limit:
                    return report
    return report


def _multiset_diff(a: list[Point], b: list[Point]) -> tuple[list[Point], list[Point]]:
    missing, extra = [], []
    i = j = 0
    while i < len(a) or j < len(b):
        if j == len(b) or (i < len(a) and a[i] < b[j]):
            missing.append(a[i])
            i += 1
        elif i == len(a) or b[j] < a[i]:
            extra.append(b[j])
            j += 1
        else:
            i += 1
            j += 1
    return missing, extra


def verify(deps_or_spec, p: TransformedProgram, params: Mapping[str, int],
           numeric: bool = False, limit: int | None = None) -> VerificationReport:
    """Full check of a transformed program on one bounded instance.

    ``deps_or_spec`` is a stencil spec or a list of distance vectors.  With
    ``numeric`` (spec only) both orders are also interpreted and compared
    bitwise.
    """
    spec = deps_or_spec if isinstance(deps_or_spec, StencilSpec) else None
    deps = [tuple(d) for d in extract_dependences(spec)] if spec else [tuple(d) for d in deps_or_spec]
    domain_pts = execution_order(p.original, params).points
    order = execution_order(p, params).points
    report = check_order(deps, domain_pts, order, limit)
    if numeric:
        if spec is None:
            raise OracleError("numeric verification needs a stencil spec")
        if report.is_permutation:
            init = initial_grid(spec, params)
            try:
                ref = interpret(spec, domain_pts, init, params)
                out = interpret(spec, order, init, params)
                report.numeric_equal = bool(np.array_equal(ref.view(np.uint32), out.view(np.uint32)))
            except UninitializedReadError:
                report.numeric_equal = False
        else:
            report.numeric_equal = False
    return report


# ---------------------------------------------------------------------------
# Numeric interpretation


@dataclass(frozen=True)
class GridLayout:
    """Storage layout of the stencil array for one instance.

    Spatial cell ``x`` lives at index ``x``; the time axis is either the
    buffered ring (``slot = t mod B``) or all steps shifted so that the
    earliest value read sits at index 0.
    """

    t_lo: int
    t_hi: int
    lag: int
    buffer: int | None
    space_lo: tuple[int, ...]
    space_hi: tuple[int, ...]
    shape: tuple[int, ...]

    def slot(self, t: int) -> int:
        return t % self.buffer if self.buffer else t - (self.t_lo - self.lag)

    def interior(self, x: Sequence[int]) -> bool:
        return all(lo <= c <= hi for c, lo, hi in zip(x, self.space_lo, self.space_hi))


def grid_layout(spec: StencilSpec, params: Mapping[str, int]) -> GridLayout:
    env = dict(params)
    bnds = [(lo.evaluate(env), hi.evaluate(env)) for lo, hi in spec.bounds]
    (t_lo, t_hi), space = bnds[0], bnds[1:]
    lag = spec.max_time_lag()
    ext = []
    for k, (lo, hi) in enumerate(space, 1):
        neg = max([0] + [-r[k] for r in spec.reads])
        pos = max([0] + [r[k] for r in spec.reads])
        if lo - neg < 0:
            raise OracleError(f"dimension {spec.dims[k]!r} reads index {lo - neg}; "
                              "lower bounds must leave room for the halo")
        ext.append(hi + pos + 1)
    B = spec.time_buffer
    if B is not None and lag >= B + 1:
        raise OracleError(f"reads reach back {lag} steps but only {B} are buffered")
    nt = B if B else (t_hi - t_lo + 1) + lag
    return GridLayout(t_lo, t_hi, lag, B, tuple(lo for lo, _ in space), tuple(hi for _, hi in space),
                      (max(nt, 1),) + tuple(ext))


def initial_grid(spec: StencilSpec, params: Mapping[str, int], seed: int = 0) -> np.ndarray:
    """Deterministic pseudo-random starting values for every cell."""
    layout = grid_layout(spec, params)
    rng = np.random.default_rng(seed)
    return rng.uniform(-1.0, 1.0, size=layout.shape).astype(np.float32)


def interpret(spec: StencilSpec, order: Sequence[Point] | ExecutionOrder, initial: np.ndarray,
              params: Mapping[str, int], weights: Sequence[float] | None = None) -> np.ndarray:
    """Run ``u[p] = sum_r w_r * u[p + r]`` over ``order`` and return the final array.

    Arithmetic is single precision, one rounding per multiply and per add,
    summed left to right in read order: the same operations the emitted C
    performs.

    Every cell carries the time step its value belongs to.  Halo cells and
    steps before the first iteration start valid; a read whose cell holds a
    different step (never written yet, or already overwritten in the
    buffered ring) raises :class:`UninitializedReadError`.
    """
    layout = grid_layout(spec, params)
    if initial.shape != layout.shape:
        raise OracleError(f"initial grid has shape {initial.shape}, expected {layout.shape}")
    w = list(weights) if weights is not None else default_weights(spec)
    if len(w) != len(spec.reads):
        raise OracleError("one weight per read is required")
    u = initial.astype(np.float32).copy()
    stamp = np.full(layout.shape, np.iinfo(np.int64).min, dtype=np.int64)
    HALO = np.iinfo(np.int64).max
    # steps before the first iteration hold initial values
    for t in range(layout.t_lo - layout.lag, layout.t_lo):
        stamp[layout.slot(t)] = t
    space_idx = [np.arange(n) for n in layout.shape[1:]]
    mesh = np.meshgrid(*space_idx, indexing="ij") if space_idx else []
    halo = np.zeros(layout.shape[1:], dtype=bool)
    for k, m in enumerate(mesh):
        halo |= (m < layout.space_lo[k]) | (m > layout.space_hi[k])
    stamp[:, halo] = HALO

    reads = [tuple(r) for r in spec.reads]
    w = [np.float32(v) for v in w]
    for p in order:
        t, x = p[0], p[1:]
        acc = None
        for wr, r in zip(w, reads):
            ts = t + r[0]
            cell = (layout.slot(ts),) + tuple(c + o for c, o in zip(x, r[1:]))
            s = int(stamp[cell])
            if s != HALO and s != ts:
                raise UninitializedReadError(tuple(p), (ts,) + cell[1:], ts,
                                             None if s == np.iinfo(np.int64).min else s)
            term = wr * u[cell]
            acc = term if acc is None else acc + term
        cell = (layout.slot(t),) + tuple(x)
        u[cell] = acc if acc is not None else np.float32(0)
        stamp[cell] = t
    return u


# ---------------------------------------------------------------------------
# Locality


@dataclass
class ReuseStats:
    histogram: dict[int, int]
    mean: float | None
    cold: int
    accesses: int


def address_trace(order: Sequence[Point], spec: StencilSpec) -> list[Point]:
    """Reads (in spec order) then the write, per point; time folded into the buffer ring."""
    B = spec.time_buffer
    trace = []
    reads = [tuple(r) for r in spec.reads]
    for p in order:
        for r in reads:
            q = tuple(a + b for a, b in zip(p, r))
            trace.append(((q[0] % B) if B else q[0],) + q[1:])
        trace.append(((p[0] % B) if B else p[0],) + tuple(p[1:]))
    return trace


def reuse_distance(order: Sequence[Point] | ExecutionOrder, spec: StencilSpec) -> ReuseStats:
    """LRU stack distances over the address trace.

    The distance of an access is the number of distinct other addresses
    touched since the previous access to the same address; first touches are
    counted as cold.  A Fenwick tree over access times marks the most recent
    access of every address, so each distance is a range count.
    """
    trace = address_trace(list(order), spec)
    n = len(trace)
    tree = [0] * (n + 1)

    def add(i: int, v: int):
        i += 1
        while i <= n:
            tree[i] += v
            i += i & -i

    def prefix(i: int) -> int:
        s = 0
        while i > 0:
            s += tree[i]
            i -= i & -i
        return s

    last: dict[Point, int] = {}
    hist: dict[int, int] = {}
    cold = 0
    for now, a in enumerate(trace):
        prev = last.get(a)
        if prev is None:
            cold += 1
        else:
            dist = prefix(now) - prefix(prev + 1)
            hist[dist] = hist.get(dist, 0) + 1
            add(prev, -1)
        add(now, 1)
        last[a] = now
    reuses = sum(hist.values())
    mean = sum(k * v for k, v in hist.items()) / reuses if reuses else None
    return ReuseStats(dict(sorted(hist.items())), mean, cold, n)


# ---------------------------------------------------------------------------
# Grid files

_MAGIC = b"PTGRID1\0"
_DTYPES = {"f4": np.dtype("<f4")}


def write_grid(path, a: np.ndarray) -> None:
    a = np.ascontiguousarray(a, dtype="<f4")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<I", a.ndim))
        f.write(struct.pack(f"<{a.ndim}Q", *a.shape))
        f.write(b"f4\0\0")
        f.write(a.tobytes())


def read_grid(path) -> np.ndarray:
    with open(path, "rb") as f:
        data = f.read()
    if data[:8] != _MAGIC:
        raise OracleError(f"{path}: not a grid file")
    (ndim,) = struct.unpack_from("<I", data, 8)
    off = 12
    shape = struct.unpack_from(f"<{ndim}Q", data, off)
    off += 8 * ndim
    code = data[off:off + 4].rstrip(b"\0").decode()
    off += 4
    if code not in _DTYPES:
        raise OracleError(f"{path}: unsupported dtype {code!r}")
    count = int(np.prod(shape)) if shape else 1
    arr = np.frombuffer(data, dtype=_DTYPES[code], count=count, offset=off)
    if arr.size != count or len(data) != off + count * 4:
        raise OracleError(f"{path}: truncated or oversized payload")
    return arr.reshape(shape).astype(np.float32)

