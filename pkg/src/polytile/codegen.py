"""Loop-nest generation by successive projection, and C emission.

For every loop level the domain (in loop order) is projected onto the
enclosing iterators plus the current one; the constraints on the current
iterator become ``max`` of ceiled lower bounds and ``min`` of floored upper
bounds.  Constraints left over on parameters alone are the conditions under
which the nest is non-empty; they are reported in a header comment rather
than emitted as runtime guards.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .legality import tile_offsets
from .polyhedron import AffineExpr, Constraint, Domain, ceild, floord, bounds_for, project_onto
from .stencil import StencilSpec, default_weights
from .transform import TransformedProgram


class CodegenError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Bound expressions


@dataclass(frozen=True)
class Aff:
    expr: AffineExpr

    def evaluate(self, env: Mapping[str, int]) -> int:
        return self.expr.evaluate(env)

    def to_c(self, order: Sequence[str]) -> str:
        return self.expr.format(order)


@dataclass(frozen=True)
class FloorD:
    expr: AffineExpr
    div: int

    def __post_init__(self):
        if self.div < 1:
            raise CodegenError("floord divisor must be a positive literal")

    def evaluate(self, env):
        return floord(self.expr.evaluate(env), self.div)

    def to_c(self, order):
        return f"floord({self.expr.format(order)},{self.div})"


@dataclass(frozen=True)
class CeilD:
    expr: AffineExpr
    div: int

    def __post_init__(self):
        if self.div < 1:
            raise CodegenError("ceild divisor must be a positive literal")

    def evaluate(self, env):
        return ceild(self.expr.evaluate(env), self.div)

    def to_c(self, order):
        return f"ceild({self.expr.format(order)},{self.div})"


@dataclass(frozen=True)
class Max:
    args: tuple

    def evaluate(self, env):
        return max(a.evaluate(env) for a in self.args)

    def to_c(self, order):
        out = self.args[0].to_c(order)
        for a in self.args[1:]:
            out = f"max({out},{a.to_c(order)})"
        return out


@dataclass(frozen=True)
class Min:
    args: tuple

    def evaluate(self, env):
        return min(a.evaluate(env) for a in self.args)

    def to_c(self, order):
        out = self.args[0].to_c(order)
        for a in self.args[1:]:
            out = f"min({out},{a.to_c(order)})"
        return out


def _prune(bounds: list[tuple[AffineExpr, int]], keep_larger: bool) -> list[tuple[AffineExpr, int]]:
    """Drop bounds another bound dominates for every value of the variables.

    Two bounds with the same divisor whose expressions differ by a constant
    are comparable; anything else is kept and left to ``max``/``min``.
    """
    out: list[tuple[AffineExpr, int]] = []
    for e, k in bounds:
        dominated = False
        for i, (f, j) in enumerate(out):
            if j != k or (e - f).coeffs:
                continue
            diff = (e - f).constant
            if (diff > 0) == keep_larger and diff != 0:
                out[i] = (e, k)
            dominated = True
            break
        if not dominated:
            out.append((e, k))
    return out


def _bound(bounds: list[tuple[AffineExpr, int]], lower: bool):
    nodes = tuple((CeilD(e, k) if lower else FloorD(e, k)) if k > 1 else Aff(e)
                  for e, k in _prune(bounds, keep_larger=lower))
    if len(nodes) == 1:
        return nodes[0]
    return Max(nodes) if lower else Min(nodes)


# ---------------------------------------------------------------------------
# AST


@dataclass(frozen=True)
class Loop:
    iterator: str
    lower: object
    upper: object
    pragmas: tuple[str, ...] = ()
    role: str | None = None  # "parallel", "vector" or None


@dataclass(frozen=True)
class Statement:
    """One statement instance per innermost iteration.

    ``index_map`` gives each original dimension as an affine expression of
    the loop iterators.  With ``reads`` set the body is a weighted-sum
    stencil update of array ``array``; otherwise a call ``name(indices)``.
    """

    index_map: tuple[tuple[str, AffineExpr], ...]
    name: str = "S1"
    reads: tuple[tuple[int, ...], ...] | None = None
    time_buffer: int | None = None
    time_lower: int | None = None
    extents: tuple[str, ...] = ()
    weights: tuple[float, ...] = ()
    array: str = "u"


@dataclass(frozen=True)
class LoopAst:
    loops: tuple[Loop, ...]
    body: Statement
    parameters: tuple[str, ...] = ()
    preconditions: tuple[Constraint, ...] = ()
    time_dim: str | None = None
    skew_factors: tuple[tuple[str, int], ...] = ()

    @property
    def loop_order(self) -> tuple[str, ...]:
        return tuple(l.iterator for l in self.loops)

    def loop(self, name: str) -> Loop:
        for l in self.loops:
            if l.iterator == name:
                return l
        raise KeyError(name)


OMP_FOR = "omp for schedule(static)"
SIMD = ("ivdep", "omp simd")


def generate_loop_ast(p: TransformedProgram | Domain, spec: StencilSpec | None = None) -> LoopAst:
    """Build the loop nest scanning ``p`` in its loop order."""
    if isinstance(p, Domain):
        scan = p
        index_map = tuple((it, AffineExpr.var(it)) for it in p.iterators)
        program = None
    else:
        scan = p.scan_domain()
        index_map = tuple((d, p.body_translation[d]) for d in p.original.iterators)
        program = p
    bounds = []
    for k, it in enumerate(scan.iterators):
        proj = project_onto(scan, k + 1)
        lows, ups = bounds_for(proj, it)
        if not lows or not ups:
            raise CodegenError(f"loop {it!r} has no {'lower' if not lows else 'upper'} bound")
        bounds.append((_bound(lows, True), _bound(ups, False)))
    pre = tuple(c for c in project_onto(scan, 0).constraints)

    roles: dict[str, str] = {}
    if program is not None and program.time_dim is not None:
        roles = _choose_roles(program)
    loops = []
    for it, (lo, up) in zip(scan.iterators, bounds):
        role = roles.get(it)
        pragmas = (OMP_FOR,) if role == "parallel" else SIMD if role == "vector" else ()
        loops.append(Loop(it, lo, up, pragmas, role))

    body = Statement(index_map)
    if spec is not None:
        t_lo = spec.bounds[0][0]
        extents = []
        for k, (_, hi) in enumerate(spec.bounds[1:], 1):
            pos = max([0] + [r[k] for r in spec.reads])
            extents.append((hi + (pos + 1)).format(spec.params))
        body = Statement(index_map, reads=tuple(tuple(r) for r in spec.reads),
                         time_buffer=spec.time_buffer,
                         time_lower=t_lo.constant if t_lo.is_constant() else None,
                         extents=tuple(extents), weights=tuple(default_weights(spec)))
    skews = tuple(sorted(program.skew_factors.items())) if program is not None else ()
    return LoopAst(tuple(loops), body, scan.parameters, pre,
                   program.time_dim if program is not None else None, skews)


def _choose_roles(p: TransformedProgram) -> dict[str, str]:
    order = p.loop_order
    roles: dict[str, str] = {}
    tiles = set(p.tile_names.values())
    if p.vectorized is not None and p.vectorized in order and p.vectorized not in tiles:
        roles[p.vectorized] = "vector"
    if p.time_dim in order:
        after = order[order.index(p.time_dim) + 1:]
        for name in after:
            if name in tiles or name == p.vectorized:
                continue
            if parallel_loop_is_safe(p, name):
                roles[name] = "parallel"
            break
    return roles


def parallel_loop_is_safe(p: TransformedProgram, loop: str) -> bool:
    """True iff no dependence is carried by ``loop``.

    A dependence is carried by a loop when source and sink can share every
    enclosing loop value and differ at this loop.  Enclosing tile loops can
    coincide whenever ``0`` is a possible tile offset; point loops only when
    the (skewed) distance component is ``0``.
    """
    order = p.loop_order
    pos = order.index(loop)
    entries = p.tiled_loop_order()
    for d in p.skewed_deps():
        same = True
        for (k, is_tile), name in zip(entries[:pos], order[:pos]):
            if is_tile:
                same = 0 in tile_offsets(d[k], p.tile_sizes[p.skew.output_names[k]])
            else:
                same = d[k] == 0
            if not same:
                break
        if not same:
            continue
        k, is_tile = entries[pos]
        if is_tile:
            if tile_offsets(d[k], p.tile_sizes[p.skew.output_names[k]]) != (0,):
                return False
        elif d[k] != 0:
            return False
    return True


# ---------------------------------------------------------------------------
# Direct interpretation


def run_ast(ast: LoopAst, params: Mapping[str, int]) -> list[tuple[int, ...]]:
    """Loop-order points visited by the AST when its bounds are evaluated directly."""
    env = dict(params)
    missing = [q for q in ast.parameters if q not in env]
    if missing:
        raise CodegenError(f"unbound parameters {missing}")
    out: list[tuple[int, ...]] = []
    n = len(ast.loops)

    def rec(k: int):
        if k == n:
            out.append(tuple(env[l.iterator] for l in ast.loops))
            return
        l = ast.loops[k]
        for v in range(l.lower.evaluate(env), l.upper.evaluate(env) + 1):
            env[l.iterator] = v
            rec(k + 1)
        env.pop(l.iterator, None)

    rec(0)
    return out


def ast_order(ast: LoopAst, params: Mapping[str, int]) -> list[tuple[int, ...]]:
    """Original-space statement instances in AST execution order."""
    pts = run_ast(ast, params)
    names = ast.loop_order
    out = []
    for q in pts:
        env = dict(params)
        env.update(zip(names, q))
        out.append(tuple(e.evaluate(env) for _, e in ast.body.index_map))
    return out


# ---------------------------------------------------------------------------
# C emission


@dataclass(frozen=True)
class EmitOptions:
    omp: bool = False
    simd: bool = False
    denormals: bool = False
    compilable_wrapper: bool = False


MACROS = (
    "#define floord(n,d) (((n)<0) ? -((-(n)+(d)-1)/(d)) : (n)/(d))\n"
    "#define ceild(n,d) (((n)<0) ? -((-(n))/(d)) : ((n)+(d)-1)/(d))\n"
    "#define max(a,b) (((a)>(b)) ? (a) : (b))\n"
    "#define min(a,b) (((a)<(b)) ? (a) : (b))\n"
)

DENORMALS = (
    "/* Flush denormal numbers to zero in hardware */",
    "_MM_SET_DENORMALS_ZERO_MODE(_MM_DENORMALS_ZERO_ON);",
    "_MM_SET_FLUSH_ZERO_MODE(_MM_FLUSH_ZERO_ON);",
)


@dataclass
class _Hoist:
    lines: list[str] = field(default_factory=list)
    names: dict[str, str] = field(default_factory=dict)  # dim -> variable holding its skew
    time_vars: dict[int, str] = field(default_factory=dict)  # time offset -> temporary


def _skew_of(expr: AffineExpr, dim: str, time: str) -> int | None:
    """``f`` when ``expr == dim - f*time`` exactly, else None."""
    rest = expr - AffineExpr.var(dim)
    if rest.constant or rest.variables not in ((), (time,)):
        return None
    return -rest.coeff(time)


def _hoisted(ast: LoopAst) -> _Hoist:
    h = _Hoist()
    t = ast.time_dim
    if t is None or t not in ast.loop_order:
        return h
    order = list(ast.loop_order) + list(ast.parameters)
    skews = {}
    for dim, e in ast.body.index_map:
        if dim == t:
            continue
        f = _skew_of(e, dim, t)
        if f:
            skews[dim] = f
    if skews:
        if len(set(skews.values())) == 1:
            f = next(iter(skews.values()))
            h.lines.append(f"int skew = {AffineExpr.var(t, f).format(order)}; // Skewing factor")
            h.names = {d: "skew" for d in skews}
        else:
            for d, f in skews.items():
                h.lines.append(f"int skew_{d} = {AffineExpr.var(t, f).format(order)}; // Skewing factor")
                h.names[d] = f"skew_{d}"
    reads = ast.body.reads
    if reads is not None:
        offs = [0] + sorted({r[0] for r in reads}, reverse=True)
        B = ast.body.time_buffer
        lag = -min(offs)
        for i, off in enumerate(dict.fromkeys(offs)):
            e = AffineExpr.var(t) + off
            if B:
                wrap = 0 if off >= 0 else -(-lag // B) * B
                if ast.body.time_lower is not None and ast.body.time_lower + off >= 0:
                    wrap = 0
                text = f"({(e + wrap).format(order)}) % {B}"
            else:
                text = f"({e.format(order)})"
            h.lines.append(f"int t{i} = {text};")
            h.time_vars[off] = f"t{i}"
    return h


def _index_text(dim: str, e: AffineExpr, h: _Hoist, order: Sequence[str], offset: int = 0) -> str:
    if dim in h.names:
        text = f"{dim}-{h.names[dim]}"
    else:
        text = e.format(order)
    if offset:
        text += f" + {offset}" if offset > 0 else f" - {-offset}"
    return text


def _body_lines(ast: LoopAst, h: _Hoist) -> list[str]:
    order = list(ast.loop_order) + list(ast.parameters)
    s = ast.body
    imap = dict(s.index_map)
    dims = [d for d, _ in s.index_map]
    if s.reads is None:
        args = ",".join(_index_text(d, imap[d], h, order) for d in dims)
        return [f"{s.name}({args});"]
    t = ast.time_dim or dims[0]

    def ref(offset: Sequence[int]) -> str:
        idx = []
        for d, o in zip(dims, offset):
            if d == t and o in h.time_vars:
                idx.append(h.time_vars[o])
            elif d == t and s.time_buffer:
                idx.append(f"({_index_text(d, imap[d], h, order, o)}) % {s.time_buffer}")
            else:
                idx.append(_index_text(d, imap[d], h, order, o))
        return s.array + "".join(f"[{i}]" for i in idx)

    lines = [f"{ref((0,) * len(dims))} ="]
    if not s.reads:
        lines.append("  0.0F;")
        return lines
    n = len(s.reads)
    weights = s.weights or tuple(1.0 / (n + k) for k in range(n))
    for k, r in enumerate(s.reads):
        w = f"{weights[k]:.9g}F"
        sep = ";" if k == n - 1 else ""
        lines.append(f"  {'+' if k else ' '} {w}*{ref(r)}{sep}")
    return lines


def emit_c(ast: LoopAst, opts: EmitOptions | None = None) -> str:
    opts = opts or EmitOptions()
    order = list(ast.loop_order) + list(ast.parameters)
    h = _hoisted(ast)
    notes = [f"/* loop order: {' '.join(ast.loop_order)} */"]
    if ast.preconditions:
        conds = ", ".join(f"{_cond_text(c, ast.parameters)}" for c in ast.preconditions)
        notes.append(f"/* the nest is empty unless: {conds} */")
    out: list[str] = []
    par = next((i for i, l in enumerate(ast.loops) if l.role == "parallel"), None) if opts.omp else None
    time_pos = ast.loop_order.index(ast.time_dim) if ast.time_dim in ast.loop_order else None

    def emit(k: int, ind: str):
        if k == len(ast.loops):
            out.extend(ind + line for line in _body_lines(ast, h))
            return
        l = ast.loops[k]
        if k == par:
            out.append(f"{ind}#pragma omp parallel")
            out.append(f"{ind}{{")
            ind2 = ind + "  "
            if opts.denormals:
                out.extend(ind2 + line for line in DENORMALS)
            out.append(f"{ind2}#pragma {OMP_FOR}")
            _loop(l, k, ind2)
            out.append(f"{ind}}}")
            return
        if opts.simd and l.role == "vector":
            out.extend(f"{ind}#pragma {p}" for p in SIMD)
        _loop(l, k, ind)

    def _loop(l: Loop, k: int, ind: str):
        out.append(f"{ind}for (int {l.iterator}={l.lower.to_c(order)}; "
                   f"{l.iterator}<={l.upper.to_c(order)}; {l.iterator}++) {{")
        inner = ind + "  "
        if k == time_pos:
            out.extend(inner + line for line in h.lines)
        emit(k + 1, inner)
        out.append(f"{ind}}}")

    top = "  " if opts.compilable_wrapper else ""
    if opts.denormals and par is None:
        out.extend(top + line for line in DENORMALS)
    emit(0, top)
    if time_pos is None and h.lines:
        raise CodegenError("hoisted temporaries need a time loop")
    nest = "\n".join(out) + "\n"
    if not opts.compilable_wrapper:
        return "\n".join(notes) + "\n" + nest
    return _wrap(ast, opts, notes, nest)


def _cond_text(c: Constraint, params: Sequence[str]) -> str:
    e = c.expr
    rhs = -e.constant
    lhs = AffineExpr(e.coeffs, 0).format(params)
    return f"{lhs} {'==' if c.kind == 'eq' else '>='} {rhs}"


def _wrap(ast: LoopAst, opts: EmitOptions, notes: list[str], nest: str) -> str:
    head = ["/* Generated by polytile */"] + notes
    if opts.denormals:
        head.append("#include <pmmintrin.h>")
        head.append("#include <xmmintrin.h>")
    head.append("")
    head.append(MACROS)
    params = ", ".join(f"int {q}" for q in ast.parameters)
    s = ast.body
    if s.reads is None:
        dims = ",".join(d for d, _ in s.index_map)
        head.append(f"#define {s.name}({dims}) (++count)")
        head.append("")
        sig = f"long kernel({params or 'void'})"
        return "\n".join(head) + f"\n{sig}\n{{\n  long count = 0;\n{nest}  return count;\n}}\n"
    arr = f"float {s.array}[]" + "".join(f"[{e}]" for e in s.extents)
    sig = f"void kernel({params + ', ' if params else ''}{arr})"
    return "\n".join(head) + f"\n{sig}\n{{\n{nest}}}\n"

