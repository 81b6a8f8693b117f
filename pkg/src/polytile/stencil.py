"""Stencil problem descriptions and uniform flow-dependence extraction.

A stencil file is line oriented::

    # 1-D three point stencil
    dims: t, x
    params: T, N
    bounds: t in [1, T]; x in [1, N]
    reads: (-1, -1), (-1, 0), (-1, 1)
    time_buffer: 4          # optional
    vectorized: x           # optional
    flops_per_point: 5      # optional

The first dimension is time.  Every read is a constant offset from the
written point and must look strictly backwards in time.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field

from .polyhedron import AffineExpr, Constraint, Domain, PolyhedronError, parse_affine

Offset = tuple[int, ...]


class SpecError(ValueError):
    """Invalid stencil description.  ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class DependenceVector:
    components: tuple[int, ...]

    def __iter__(self):
        return iter(self.components)

    def __len__(self):
        return len(self.components)

    def __getitem__(self, k):
        return self.components[k]

    def __str__(self):
        return "(" + ", ".join(str(c) for c in self.components) + ")"


@dataclass(frozen=True)
class StencilSpec:
    dims: tuple[str, ...]
    params: tuple[str, ...]
    bounds: tuple[tuple[AffineExpr, AffineExpr], ...]
    reads: tuple[Offset, ...] = ()
    time_buffer: int | None = None
    vectorized: str | None = None
    flops_per_point: int | None = None
    write: Offset = field(default=())

    def __post_init__(self):
        n = len(self.dims)
        if n < 1:
            raise SpecError("at least the time dimension is required")
        if len(set(self.dims)) != n:
            raise SpecError(f"duplicate dimension names in {self.dims}")
        if set(self.dims) & set(self.params):
            raise SpecError("dimension and parameter names overlap")
        if len(self.bounds) != n:
            raise SpecError(f"expected bounds for {n} dimensions, got {len(self.bounds)}")
        for lo, hi in self.bounds:
            for e in (lo, hi):
                unknown = set(e.variables) - set(self.params)
                if unknown:
                    raise SpecError(f"bound {e} uses undeclared names {sorted(unknown)}")
        if not self.write:
            object.__setattr__(self, "write", (0,) * n)
        if any(self.write):
            raise SpecError("the written point must have offset zero")
        for r in self.reads:
            _check_read(r, n)
        if self.time_buffer is not None and self.time_buffer < 1:
            raise SpecError("time_buffer must be positive")
        if self.vectorized is not None:
            if self.vectorized not in self.dims[1:]:
                raise SpecError(f"vectorized dimension {self.vectorized!r} is not a spatial dimension")
            if self.vectorized != self.dims[-1]:
                raise SpecError("only the innermost dimension can be vectorized")
        if self.flops_per_point is not None and self.flops_per_point < 1:
            raise SpecError("flops_per_point must be positive")

    @property
    def time(self) -> str:
        return self.dims[0]

    @property
    def spatial(self) -> tuple[str, ...]:
        return self.dims[1:]

    def bound(self, dim: str) -> tuple[AffineExpr, AffineExpr]:
        return self.bounds[self.dims.index(dim)]

    def domain(self) -> Domain:
        cons = []
        for d, (lo, hi) in zip(self.dims, self.bounds):
            v = AffineExpr.var(d)
            cons += [Constraint.ge(v - lo), Constraint.ge(hi - v)]
        return Domain(self.dims, self.params, tuple(cons))

    def max_time_lag(self) -> int:
        return max((-r[0] for r in self.reads), default=0)


def _check_read(r: Offset, n: int, line: int | None = None):
    if len(r) != n:
        raise SpecError(f"read {r} has {len(r)} components, expected {n}", line)
    if r[0] > 0:
        raise SpecError(f"read {r} has a positive time offset", line)
    if r[0] == 0:
        raise SpecError(f"read {r} has a zero time offset; dependences must be carried by time", line)


_KEYS = ("dims", "params", "bounds", "reads", "time_buffer", "vectorized", "flops_per_point")
_TUPLE = re.compile(r"\(([^()]*)\)")
_BOUND = re.compile(r"^\s*([A-Za-z_]\w*)\s+in\s+\[(.*),(.*)\]\s*$")


def _names(value: str, line: int) -> tuple[str, ...]:
    items = tuple(v.strip() for v in value.split(",") if v.strip())
    for it in items:
        if not re.fullmatch(r"[A-Za-z_]\w*", it):
            raise SpecError(f"invalid name {it!r}", line)
    return items


def _int(value: str, key: str, line: int) -> int:
    try:
        return int(value.strip())
    except ValueError:
        raise SpecError(f"{key} expects an integer, got {value.strip()!r}", line) from None


def parse_stencil_spec(text: str) -> StencilSpec:
    fields: dict[str, tuple[str, int]] = {}
    reads_lines: list[tuple[str, int]] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition(":")
        key = key.strip()
        if not sep:
            raise SpecError(f"expected 'key: value', got {line!r}", lineno)
        if key not in _KEYS:
            raise SpecError(f"unknown key {key!r}", lineno)
        if key == "reads":
            reads_lines.append((value, lineno))
            continue
        if key in fields:
            raise SpecError(f"duplicate key {key!r}", lineno)
        fields[key] = (value, lineno)

    if "dims" not in fields:
        raise SpecError("missing 'dims'")
    dims = _names(*fields["dims"])
    params = _names(*fields["params"]) if "params" in fields else ()

    bounds: dict[str, tuple[AffineExpr, AffineExpr]] = {}
    if "bounds" in fields:
        value, lineno = fields["bounds"]
        for part in value.split(";"):
            if not part.strip():
                continue
            m = _BOUND.match(part)
            if not m:
                raise SpecError(f"cannot parse bound {part.strip()!r}", lineno)
            name, lo, hi = m.groups()
            if name not in dims:
                raise SpecError(f"bound for unknown dimension {name!r}", lineno)
            if name in bounds:
                raise SpecError(f"duplicate bound for {name!r}", lineno)
            try:
                lo_e, hi_e = parse_affine(lo), parse_affine(hi)
            except PolyhedronError as e:
                raise SpecError(str(e), lineno) from None
            for e in (lo_e, hi_e):
                unknown = set(e.variables) - set(params)
                if unknown:
                    raise SpecError(f"bound uses undeclared parameter(s) {sorted(unknown)}", lineno)
            bounds[name] = (lo_e, hi_e)
    missing = [d for d in dims if d not in bounds]
    if missing:
        raise SpecError(f"no bounds for dimension(s) {missing}")

    reads: list[Offset] = []
    for value, lineno in reads_lines:
        rest = _TUPLE.sub("", value).replace(",", "").strip()
        if rest:
            raise SpecError(f"unexpected text in reads: {rest!r}", lineno)
        for m in _TUPLE.finditer(value):
            try:
                off = tuple(int(v) for v in m.group(1).split(","))
            except ValueError:
                raise SpecError(f"non-uniform or non-integer offset ({m.group(1)})", lineno) from None
            _check_read(off, len(dims), lineno)
            reads.append(off)

    kw = {}
    for key in ("time_buffer", "flops_per_point"):
        if key in fields:
            value, lineno = fields[key]
            kw[key] = _int(value, key, lineno)
            if kw[key] < 1:
                raise SpecError(f"{key} must be positive", lineno)
    if "vectorized" in fields:
        value, lineno = fields["vectorized"]
        kw["vectorized"] = value.strip()
        if kw["vectorized"] != dims[-1] or len(dims) < 2:
            raise SpecError("vectorized dimension must be the innermost spatial dimension", lineno)
    return StencilSpec(dims, params, tuple(bounds[d] for d in dims), tuple(reads), **kw)


def write_spec_text(spec: StencilSpec) -> str:
    lines = [f"dims: {', '.join(spec.dims)}"]
    if spec.params:
        lines.append(f"params: {', '.join(spec.params)}")
    lines.append("bounds: " + "; ".join(f"{d} in [{lo}, {hi}]" for d, (lo, hi) in zip(spec.dims, spec.bounds)))
    if spec.reads:
        lines.append("reads: " + ", ".join("(" + ", ".join(str(c) for c in r) + ")" for r in spec.reads))
    if spec.time_buffer is not None:
        lines.append(f"time_buffer: {spec.time_buffer}")
    if spec.vectorized is not None:
        lines.append(f"vectorized: {spec.vectorized}")
    if spec.flops_per_point is not None:
        lines.append(f"flops_per_point: {spec.flops_per_point}")
    return "\n".join(lines) + "\n"


def extract_dependences(spec: StencilSpec) -> list[DependenceVector]:
    """Flow dependence distances ``sink - source`` for every read offset.

    The write happens at offset zero, so a read at offset ``r`` consumes a
    value produced ``-r`` iterations earlier.  Duplicates are merged and the
    result is sorted lexicographically.
    """
    return [DependenceVector(d) for d in sorted({tuple(-c for c in r) for r in spec.reads})]


def extreme_dependences(deps: list[DependenceVector]) -> list[DependenceVector]:
    """The dependences reaching furthest in each spatial direction.

    For every spatial dimension the vectors with the largest and smallest
    component are kept (ties broken lexicographically); zero extents are
    skipped.
    """
    out: set[tuple[int, ...]] = set()
    if not deps:
        return []
    for k in range(1, len(deps[0])):
        hi = max(d[k] for d in deps)
        lo = min(d[k] for d in deps)
        if hi > 0:
            out.add(min(d.components for d in deps if d[k] == hi))
        if lo < 0:
            out.add(min(d.components for d in deps if d[k] == lo))
    return [DependenceVector(d) for d in sorted(out)]


def default_weights(spec: StencilSpec) -> list[float]:
    """Deterministic single-precision weights ``1/(n+k)`` for the ``k``-th of ``n`` reads."""
    n = len(spec.reads)
    return [struct.unpack("<f", struct.pack("<f", 1.0 / (n + k)))[0] for k in range(n)]
