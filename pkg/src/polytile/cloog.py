"""Reader and writer for the subset of the CLooG input format used for stencils.

Layout (``#`` starts a comment, blank lines are ignored)::

    c                         language
    R C                       context matrix header, then R rows
    ...
    1                         parameter-names flag
    M N                       parameter names (when the flag is 1)
    1                         number of statements
    R C                       statement domain matrix, then R rows
    ...
    0 0 0                     statement options (kept verbatim)
    0                         iterator-names flag (+ names line)
    1                         number of scattering functions
    R C                       scattering matrix, then R rows
    ...
    1                         scattering-names flag (+ names line)

A context written as the single number ``0`` means "no parameters" and has
no names flag.  Every matrix row starts with ``0`` (equality) or ``1``
(inequality), followed by one column per iterator, per parameter, and the
constant.  Scattering rows have one extra leading column per output
dimension.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .polyhedron import AffineExpr, Constraint, Domain, EQ
from .transform import Schedule, TransformedProgram


class CloogParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class UnsupportedScatteringError(ValueError):
    pass


@dataclass(frozen=True)
class Matrix:
    rows: tuple[tuple[int, ...], ...]
    ncols: int

    @property
    def nrows(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class CloogStatement:
    domain: Matrix
    options: tuple[int, ...] = (0, 0, 0)


@dataclass(frozen=True)
class CloogProblem:
    language: str
    context: Matrix | None
    parameter_names: tuple[str, ...] | None
    statements: tuple[CloogStatement, ...]
    iterator_names: tuple[str, ...] | None
    scatterings: tuple[Matrix, ...] | None
    scattering_names: tuple[str, ...] | None

    @property
    def nparams(self) -> int:
        return self.context.ncols - 2 if self.context is not None else 0

    def niterators(self, i: int) -> int:
        return self.statements[i].domain.ncols - 2 - self.nparams


# ---------------------------------------------------------------------------
# Parsing


def _lines(text: str) -> list[tuple[int, list[str]]]:
    out = []
    for no, raw in enumerate(text.splitlines(), 1):
        toks = raw.split("#", 1)[0].split()
        if toks:
            out.append((no, toks))
    return out


class _Reader:
    def __init__(self, text: str):
        self.lines = _lines(text)
        self.pos = 0

    def more(self) -> bool:
        return self.pos < len(self.lines)

    def peek(self) -> tuple[int, list[str]]:
        if not self.more():
            raise CloogParseError("unexpected end of file")
        return self.lines[self.pos]

    def take(self) -> tuple[int, list[str]]:
        item = self.peek()
        self.pos += 1
        return item

    def ints(self, what: str, count: int | None = None) -> tuple[int, list[int]]:
        no, toks = self.take()
        try:
            vals = [int(t) for t in toks]
        except ValueError:
            raise CloogParseError(f"non-integer token in {what}: {' '.join(toks)!r}", no) from None
        if count is not None and len(vals) != count:
            raise CloogParseError(f"expected {count} integer(s) for {what}, got {len(vals)}", no)
        return no, vals

    def matrix(self, what: str) -> Matrix:
        no, hdr = self.ints(f"{what} header", 2)
        r, c = hdr
        if r < 0 or c < 2:
            raise CloogParseError(f"invalid {what} dimensions {r} x {c}", no)
        rows = []
        for _ in range(r):
            rno, row = self.ints(f"{what} row", None)
            if len(row) != c:
                raise CloogParseError(f"{what} row has {len(row)} columns, header declares {c}", rno)
            if row[0] not in (0, 1):
                raise CloogParseError(f"first column must be 0 (equality) or 1 (inequality), got {row[0]}", rno)
            rows.append(tuple(row))
        return Matrix(tuple(rows), c)

    def names(self, count: int, what: str) -> tuple[str, ...]:
        """A names flag and, when it is 1, the names line; flag 0 gives ``()``."""
        no, (flag,) = self.ints(f"{what} flag", 1)
        if flag not in (0, 1):
            raise CloogParseError(f"{what} flag must be 0 or 1, got {flag}", no)
        if not flag:
            return ()
        no, toks = self.take()
        if len(toks) != count:
            raise CloogParseError(f"expected {count} {what}, got {len(toks)}", no)
        return tuple(toks)


def parse_cloog_input(text: str) -> CloogProblem:
    rd = _Reader(text)
    no, toks = rd.take()
    if len(toks) != 1 or toks[0] not in ("c", "f"):
        raise CloogParseError(f"expected language 'c' or 'f', got {' '.join(toks)!r}", no)
    language = toks[0]

    no, toks = rd.peek()
    if toks == ["0"]:
        rd.take()
        context, pnames = None, None
    else:
        context = rd.matrix("context")
        pnames = rd.names(context.ncols - 2, "parameter names")
    np_ = context.ncols - 2 if context else 0

    no, (nstmt,) = rd.ints("statement count", 1)
    if nstmt < 0:
        raise CloogParseError("negative statement count", no)
    stmts = []
    for _ in range(nstmt):
        no, toks = rd.peek()
        if len(toks) == 1:
            raise CloogParseError("unions of domains per statement are not supported", no)
        m = rd.matrix("domain")
        if m.ncols - 2 - np_ < 0:
            raise CloogParseError(f"domain has {m.ncols} columns but there are {np_} parameters", no)
        _, opts = rd.ints("statement options", None)
        stmts.append(CloogStatement(m, tuple(opts)))
    nit = stmts[0].domain.ncols - 2 - np_ if stmts else 0
    if any(s.domain.ncols - 2 - np_ != nit for s in stmts):
        raise CloogParseError("statements with different iterator counts are not supported")
    inames = None
    if stmts or rd.pos + 1 < len(rd.lines):
        inames = rd.names(nit, "iterator names")

    scats: list[Matrix] | None = None
    snames = None
    if rd.more():
        scats = []
        no, (nscat,) = rd.ints("scattering count", 1)
        if nscat not in (0, len(stmts)):
            raise CloogParseError(f"{nscat} scattering functions for {len(stmts)} statements", no)
        for _ in range(nscat):
            sno, _t = rd.peek()
            m = rd.matrix("scattering")
            if m.ncols != 1 + m.nrows + nit + np_ + 1:
                raise CloogParseError(
                    f"scattering has {m.ncols} columns, expected {1 + m.nrows + nit + np_ + 1}", sno)
            scats.append(m)
        if scats and len({m.nrows for m in scats}) != 1:
            raise CloogParseError("scattering functions must have the same number of outputs")
        if rd.more():
            snames = rd.names(scats[0].nrows if scats else 0, "scattering names")
    if rd.more():
        no, toks = rd.peek()
        raise CloogParseError(f"unexpected trailing content {' '.join(toks)!r}", no)
    return CloogProblem(language, context, pnames, tuple(stmts), inames,
                        tuple(scats) if scats is not None else None, snames)


# ---------------------------------------------------------------------------
# Writing


def _fmt_rows(m: Matrix) -> list[str]:
    width = max([len(str(v)) for r in m.rows for v in r] + [1])
    return [" ".join(str(v).rjust(width) for v in r) for r in m.rows]


def write_cloog_input(p: CloogProblem, column_names: Sequence[str] | None = None) -> str:
    out = ["# language", p.language, ""]
    out.append("# context")
    if p.context is None:
        out.append("0")
    else:
        out.append(f"{p.context.nrows} {p.context.ncols}")
        out += _fmt_rows(p.context)
        out += _names(p.parameter_names or ())
    out += ["", "# number of statements", str(len(p.statements))]
    for s in p.statements:
        out.append(f"{s.domain.nrows} {s.domain.ncols}")
        if column_names:
            out.append("# " + " ".join(column_names))
        out += _fmt_rows(s.domain)
        out.append(" ".join(str(v) for v in s.options))
    if p.iterator_names is not None:
        out.append("# iterator names")
        out += _names(p.iterator_names)
    if p.scatterings is not None:
        out += ["", "# number of scattering functions", str(len(p.scatterings))]
        for m in p.scatterings:
            out.append(f"{m.nrows} {m.ncols}")
            out += _fmt_rows(m)
    if p.scattering_names is not None:
        out += ["", "# scattering names"] + _names(p.scattering_names)
    return "\n".join(out) + "\n"


def _names(names: tuple[str, ...]) -> list[str]:
    return ["1", " ".join(names)] if names else ["0"]


def tokens(text: str) -> list[str]:
    """Whitespace tokens with comments removed: the round-trip comparison key."""
    return [t for _, toks in _lines(text) for t in toks]


# ---------------------------------------------------------------------------
# Conversions

_DEFAULT_ITERATORS = "ijklmnopqrs"
_DEFAULT_PARAMS = "MNOPQRSTUVW"


def _default_names(n: int, letters: str, prefix: str) -> tuple[str, ...]:
    if n <= len(letters):
        return tuple(letters[:n])
    return tuple(f"{prefix}{k + 1}" for k in range(n))


def parameter_names(p: CloogProblem) -> tuple[str, ...]:
    return p.parameter_names or _default_names(p.nparams, _DEFAULT_PARAMS, "p")


def scattering_permutation(p: CloogProblem, i: int) -> list[int]:
    """For each scattering output, the iterator column it copies.

    Only pure permutations (``c_k = it_j`` per row) are supported.
    """
    m = p.scatterings[i]
    ns, nit = m.nrows, p.niterators(i)
    perm = []
    for k, row in enumerate(m.rows):
        scat, its, rest = row[1:1 + ns], row[1 + ns:1 + ns + nit], row[1 + ns + nit:]
        sign = scat[k]
        ok = (row[0] == 0 and sign in (1, -1) and sum(map(abs, scat)) == 1
              and sum(map(abs, its)) == 1 and -sign in its and not any(rest))
        if not ok:
            raise UnsupportedScatteringError(
                f"unsupported scattering: row {k + 1} is not of the form c{k + 1} = iterator")
        perm.append(its.index(-sign))
    if sorted(perm) != list(range(nit)):
        raise UnsupportedScatteringError("unsupported scattering: outputs do not permute the iterators")
    return perm


def iterator_names(p: CloogProblem, i: int) -> tuple[str, ...]:
    nit = p.niterators(i)
    if p.iterator_names:
        return p.iterator_names
    if p.scattering_names and p.scatterings:
        perm = scattering_permutation(p, i)
        names = [""] * nit
        for k, j in enumerate(perm):
            names[j] = p.scattering_names[k]
        return tuple(names)
    return _default_names(nit, _DEFAULT_ITERATORS, "c")


def to_domain(p: CloogProblem, i: int) -> Domain:
    if not 0 <= i < len(p.statements):
        raise IndexError(f"statement {i} out of range")
    its = iterator_names(p, i)
    params = parameter_names(p)
    cols = its + params
    cons = []
    for row in p.statements[i].domain.rows:
        e = AffineExpr(tuple(zip(cols, row[1:-1])), row[-1])
        cons.append(Constraint("eq" if row[0] == 0 else "ge", e))
    return Domain(its, params, tuple(cons))


def context_domain(p: CloogProblem) -> Domain:
    params = parameter_names(p)
    cons = []
    if p.context is not None:
        for row in p.context.rows:
            cons.append(Constraint("eq" if row[0] == 0 else "ge", AffineExpr(tuple(zip(params, row[1:-1])), row[-1])))
    return Domain((), params, tuple(cons))


def to_program(p: CloogProblem, i: int = 0) -> TransformedProgram:
    """Statement ``i`` with its scattering as a loop order (identity when absent)."""
    d = to_domain(p, i)
    if p.scatterings:
        order = [d.iterators[j] for j in scattering_permutation(p, i)]
    else:
        order = list(d.iterators)
    ident = Schedule.identity(d.iterators)
    return TransformedProgram(
        original=d, domain=d, schedule=Schedule.permutation(d.iterators, order), skew=ident,
        body_translation={it: AffineExpr.var(it) for it in d.iterators})


def _row(c: Constraint, cols: Sequence[str], lead: Sequence[int] = ()) -> tuple[int, ...]:
    coeffs = c.expr.as_dict()
    return (0 if c.kind == EQ else 1,) + tuple(lead) + tuple(coeffs.get(n, 0) for n in cols) + (c.expr.constant,)


def from_domain(d: Domain, order: Sequence[str] | None = None, context: Domain | None = None,
                language: str = "c") -> CloogProblem:
    cols = d.iterators + d.parameters
    m = Matrix(tuple(_row(c, cols) for c in d.constraints), len(cols) + 2)
    if d.parameters:
        ctx_cons = context.constraints if context is not None else ()
        ctx = Matrix(tuple(_row(c, d.parameters) for c in ctx_cons), len(d.parameters) + 2)
        pnames = d.parameters
    else:
        ctx, pnames = None, None
    scats: tuple[Matrix, ...] = ()
    snames: tuple[str, ...] | None = None
    if order is not None:
        n = len(order)
        rows = []
        for k, name in enumerate(order):
            lead = [0] * n
            lead[k] = 1
            it = [0] * len(d.iterators)
            it[d.iterators.index(name)] = -1
            rows.append((0,) + tuple(lead) + tuple(it) + (0,) * len(d.parameters) + (0,))
        scats = (Matrix(tuple(rows), 1 + n + len(cols) + 1),)
        snames = tuple(order)
    inames = () if snames else d.iterators
    return CloogProblem(language, ctx, pnames, (CloogStatement(m),), inames, scats, snames)


def from_transformed(p: TransformedProgram, context: Domain | None = None) -> CloogProblem:
    """The strip-mined, skewed domain with its loop order as a permutation scattering."""
    return from_domain(p.domain, p.loop_order, context)
