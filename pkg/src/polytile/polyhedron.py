"""Integer affine constraint systems.

Domains are conjunctions of affine equalities and inequalities over named
loop iterators and symbolic parameters.  The module provides the pieces a
polyhedral scanner needs: Fourier-Motzkin elimination with integer
tightening, splitting of constraints into loop bounds, and exact
lexicographic enumeration of integer points.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence


class PolyhedronError(ValueError):
    pass


class UnboundedError(PolyhedronError):
    def __init__(self, iterator: str, side: str):
        super().__init__(f"iterator {iterator!r} has no {side} bound")
        self.iterator = iterator
        self.side = side


def floord(a: int, b: int) -> int:
    if b <= 0:
        raise PolyhedronError("floord divisor must be positive")
    return a // b


def ceild(a: int, b: int) -> int:
    if b <= 0:
        raise PolyhedronError("ceild divisor must be positive")
    return -((-a) // b)


@dataclass(frozen=True)
class AffineExpr:
    """``sum(coeff * var) + constant`` with integer coefficients.

    ``coeffs`` is stored canonically: sorted by name, zero terms removed, so
    structural equality is semantic equality.
    """

    coeffs: tuple[tuple[str, int], ...] = ()
    constant: int = 0

    def __post_init__(self):
        merged: dict[str, int] = {}
        for name, c in self.coeffs:
            if not isinstance(c, int) or isinstance(c, bool):
                raise TypeError(f"coefficient of {name!r} must be int, got {c!r}")
            merged[name] = merged.get(name, 0) + c
        canon = tuple(sorted((n, c) for n, c in merged.items() if c != 0))
        object.__setattr__(self, "coeffs", canon)
        if not isinstance(self.constant, int) or isinstance(self.constant, bool):
            raise TypeError(f"constant must be int, got {self.constant!r}")

    @classmethod
    def of(cls, coeffs: Mapping[str, int] | None = None, constant: int = 0) -> AffineExpr:
        return cls(tuple((coeffs or {}).items()), constant)

    @classmethod
    def var(cls, name: str, coeff: int = 1) -> AffineExpr:
        return cls(((name, coeff),), 0)

    @classmethod
    def const(cls, value: int) -> AffineExpr:
        return cls((), value)

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.coeffs)

    def coeff(self, name: str) -> int:
        for n, c in self.coeffs:
            if n == name:
                return c
        return 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.coeffs)

    def is_constant(self) -> bool:
        return not self.coeffs

    def __add__(self, other) -> AffineExpr:
        if isinstance(other, int):
            return AffineExpr(self.coeffs, self.constant + other)
        return AffineExpr(self.coeffs + other.coeffs, self.constant + other.constant)

    __radd__ = __add__

    def __neg__(self) -> AffineExpr:
        return AffineExpr(tuple((n, -c) for n, c in self.coeffs), -self.constant)

    def __sub__(self, other) -> AffineExpr:
        return self + (-other)

    def __rsub__(self, other) -> AffineExpr:
        return (-self) + other

    def __mul__(self, k: int) -> AffineExpr:
        if not isinstance(k, int):
            return NotImplemented
        return AffineExpr(tuple((n, c * k) for n, c in self.coeffs), self.constant * k)

    __rmul__ = __mul__

    def drop(self, name: str) -> AffineExpr:
        return AffineExpr(tuple((n, c) for n, c in self.coeffs if n != name), self.constant)

    def substitute(self, bindings: Mapping[str, AffineExpr | int]) -> AffineExpr:
        out = AffineExpr.const(self.constant)
        for n, c in self.coeffs:
            if n in bindings:
                v = bindings[n]
                out = out + (v * c if isinstance(v, AffineExpr) else c * v)
            else:
                out = out + AffineExpr.var(n, c)
        return out

    def evaluate(self, env: Mapping[str, int]) -> int:
        total = self.constant
        for n, c in self.coeffs:
            try:
                total += c * env[n]
            except KeyError:
                raise PolyhedronError(f"no value bound for {n!r}") from None
        return total

    def content(self) -> int:
        """gcd of the variable coefficients (0 for a constant)."""
        g = 0
        for _, c in self.coeffs:
            g = math.gcd(g, c)
        return g

    def format(self, order: Sequence[str] | None = None, mul: str = "*") -> str:
        names = [n for n, _ in self.coeffs]
        if order is not None:
            rank = {n: i for i, n in enumerate(order)}
            names.sort(key=lambda n: (rank.get(n, len(rank)), n))
        parts: list[str] = []
        d = self.as_dict()
        for n in names:
            c = d[n]
            mag = abs(c)
            term = n if mag == 1 else f"{mag}{mul}{n}"
            if not parts:
                parts.append(term if c > 0 else f"-{term}")
            else:
                parts.append(f"+{term}" if c > 0 else f"-{term}")
        if self.constant or not parts:
            if parts and self.constant > 0:
                parts.append(f"+{self.constant}")
            else:
                parts.append(str(self.constant))
        return "".join(parts)

    def __str__(self) -> str:
        return self.format()


_TERM = re.compile(r"\s*([+-]?)\s*(?:(\d+)\s*\*?\s*)?([A-Za-z_]\w*)?\s*")


def parse_affine(text: str) -> AffineExpr:
    """Parse ``"4*time + x_size - 5"`` style integer affine expressions."""
    s = text.strip()
    if not s:
        raise PolyhedronError("empty affine expression")
    pos = 0
    coeffs: list[tuple[str, int]] = []
    const = 0
    first = True
    while pos < len(s):
        m = _TERM.match(s, pos)
        if m is None or m.end() == pos:
            raise PolyhedronError(f"cannot parse affine expression {text!r} at {s[pos:]!r}")
        sign, num, name = m.groups()
        if not sign and not first:
            raise PolyhedronError(f"missing operator in {text!r} near {s[pos:]!r}")
        if num is None and name is None:
            raise PolyhedronError(f"dangling operator in {text!r}")
        k = -1 if sign == "-" else 1
        if name is None:
            const += k * int(num)
        else:
            coeffs.append((name, k * (int(num) if num is not None else 1)))
        pos = m.end()
        first = False
    return AffineExpr(tuple(coeffs), const)


EQ = "eq"
GE = "ge"


@dataclass(frozen=True)
class Constraint:
    """``expr == 0`` (kind ``eq``) or ``expr >= 0`` (kind ``ge``), kept canonical."""

    kind: str
    expr: AffineExpr

    def __post_init__(self):
        if self.kind not in (EQ, GE):
            raise ValueError(f"unknown constraint kind {self.kind!r}")
        object.__setattr__(self, "expr", _normalize(self.kind, self.expr))

    @classmethod
    def ge(cls, expr: AffineExpr) -> Constraint:
        return cls(GE, expr)

    @classmethod
    def le(cls, lhs: AffineExpr, rhs: AffineExpr) -> Constraint:
        return cls(GE, rhs - lhs)

    @classmethod
    def eq(cls, expr: AffineExpr) -> Constraint:
        return cls(EQ, expr)

    @property
    def variables(self) -> tuple[str, ...]:
        return self.expr.variables

    def is_trivial(self) -> bool:
        """True when the constraint has no variables and always holds."""
        if not self.expr.is_constant():
            return False
        c = self.expr.constant
        return c == 0 if self.kind == EQ else c >= 0

    def is_infeasible(self) -> bool:
        if not self.expr.is_constant():
            return False
        return not self.is_trivial()

    def holds(self, env: Mapping[str, int]) -> bool:
        v = self.expr.evaluate(env)
        return v == 0 if self.kind == EQ else v >= 0

    def substitute(self, bindings: Mapping[str, AffineExpr | int]) -> Constraint:
        return Constraint(self.kind, self.expr.substitute(bindings))

    def __str__(self) -> str:
        return f"{self.expr} {'=' if self.kind == EQ else '>='} 0"


def _normalize(kind: str, e: AffineExpr) -> AffineExpr:
    g = e.content()
    if g == 0:
        return e
    if kind == GE:
        # integer tightening: sum(a*x) + c >= 0 with g | a  <=>  sum(a/g*x) + floor(c/g) >= 0
        return AffineExpr(tuple((n, c // g) for n, c in e.coeffs), floord(e.constant, g))
    if e.constant % g:
        return AffineExpr.const(-1)  # no integer solution; encoded as -1 = 0
    e = AffineExpr(tuple((n, c // g) for n, c in e.coeffs), e.constant // g)
    return -e if e.coeffs[0][1] < 0 else e


@dataclass(frozen=True)
class Domain:
    """A convex integer polyhedron over ``iterators`` (outermost first)."""

    iterators: tuple[str, ...]
    parameters: tuple[str, ...] = ()
    constraints: tuple[Constraint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "iterators", tuple(self.iterators))
        object.__setattr__(self, "parameters", tuple(self.parameters))
        names = self.iterators + self.parameters
        if len(set(names)) != len(names):
            raise PolyhedronError(f"duplicate names in {names}")
        known = set(names)
        kept: list[Constraint] = []
        seen: set[Constraint] = set()
        for c in self.constraints:
            extra = set(c.variables) - known
            if extra:
                raise PolyhedronError(f"constraint {c} uses undeclared {sorted(extra)}")
            if c.is_trivial() or c in seen:
                continue
            seen.add(c)
            kept.append(c)
        object.__setattr__(self, "constraints", tuple(kept))

    @classmethod
    def box(cls, bounds: Mapping[str, tuple[int | AffineExpr, int | AffineExpr]],
            parameters: Sequence[str] = ()) -> Domain:
        """Rectangular domain with inclusive ``lo <= it <= hi`` bounds per iterator."""
        cons = []
        for it, (lo, hi) in bounds.items():
            v = AffineExpr.var(it)
            cons.append(Constraint.ge(v - lo))
            cons.append(Constraint.ge(hi - v))
        return cls(tuple(bounds), tuple(parameters), tuple(cons))

    @property
    def is_obviously_empty(self) -> bool:
        return any(c.is_infeasible() for c in self.constraints)

    def with_constraints(self, extra: Iterable[Constraint]) -> Domain:
        return Domain(self.iterators, self.parameters, self.constraints + tuple(extra))

    def reorder(self, iterators: Sequence[str]) -> Domain:
        if sorted(iterators) != sorted(self.iterators):
            raise PolyhedronError(f"{list(iterators)} is not a permutation of {list(self.iterators)}")
        return Domain(tuple(iterators), self.parameters, self.constraints)

    def bind(self, params: Mapping[str, int]) -> Domain:
        """Substitute parameter values; unbound parameters stay symbolic."""
        vals = {p: params[p] for p in self.parameters if p in params}
        rest = tuple(p for p in self.parameters if p not in vals)
        return Domain(self.iterators, rest, tuple(c.substitute(vals) for c in self.constraints))

    def contains(self, env: Mapping[str, int]) -> bool:
        return all(c.holds(env) for c in self.constraints)

    def contains_point(self, point: Sequence[int], params: Mapping[str, int] | None = None) -> bool:
        env = dict(params or {})
        env.update(zip(self.iterators, point))
        return self.contains(env)

    def simplify(self) -> Domain:
        """Drop inequalities syntactically dominated by a tighter parallel one."""
        best: dict[tuple, Constraint] = {}
        others: list[Constraint] = []
        for c in self.constraints:
            if c.kind != GE:
                others.append(c)
                continue
            key = c.expr.coeffs
            prev = best.get(key)
            if prev is None or c.expr.constant < prev.expr.constant:
                best[key] = c
        return Domain(self.iterators, self.parameters, tuple(others) + tuple(best.values()))

    def __str__(self) -> str:
        body = " and ".join(str(c) for c in self.constraints) or "true"
        params = f"[{', '.join(self.parameters)}] -> " if self.parameters else ""
        return f"{params}{{ [{', '.join(self.iterators)}] : {body} }}"


def project_eliminate(d: Domain, var: str) -> Domain:
    """Fourier-Motzkin elimination of ``var``.

    Every lower bound ``a*var + p >= 0`` is paired with every upper bound
    ``-b*var + q >= 0`` to give ``b*p + a*q >= 0``; the resulting constraints
    are gcd-tightened.  The result contains the projection of every integer
    point of ``d`` and may over-approximate it.
    """
    if var not in d.iterators:
        raise PolyhedronError(f"{var!r} is not an iterator of the domain")
    lowers, uppers, rest = [], [], []
    for c in d.constraints:
        a = c.expr.coeff(var)
        if a == 0:
            rest.append(c)
        elif c.kind == EQ:
            lowers.append(c.expr if a > 0 else -c.expr)
            uppers.append(-c.expr if a > 0 else c.expr)
        elif a > 0:
            lowers.append(c.expr)
        else:
            uppers.append(c.expr)
    new = list(rest)
    for lo in lowers:
        a = lo.coeff(var)
        for up in uppers:
            b = -up.coeff(var)
            new.append(Constraint.ge((lo * b + up * a).drop(var)))
    its = tuple(i for i in d.iterators if i != var)
    return Domain(its, d.parameters, tuple(new)).simplify()


def project_onto(d: Domain, keep: int) -> Domain:
    """Eliminate all but the ``keep`` outermost iterators (innermost first)."""
    out = d
    for var in reversed(d.iterators[keep:]):
        out = project_eliminate(out, var)
    return out


Bound = tuple[AffineExpr, int]


def bounds_for(d: Domain, var: str) -> tuple[list[Bound], list[Bound]]:
    """Split the constraints mentioning ``var`` into loop bounds.

    A lower bound ``(e, k)`` means ``var >= ceild(e, k)``; an upper bound
    means ``var <= floord(e, k)``.  An equality contributes to both lists.
    """
    if var not in d.iterators:
        raise PolyhedronError(f"{var!r} is not an iterator of the domain")
    lowers: list[Bound] = []
    uppers: list[Bound] = []
    for c in d.constraints:
        a = c.expr.coeff(var)
        if a == 0:
            continue
        rest = c.expr.drop(var)
        if c.kind == EQ:
            # a*var + rest == 0  ->  var == -rest/a
            e, k = (-rest, a) if a > 0 else (rest, -a)
            lowers.append((e, k))
            uppers.append((e, k))
        elif a > 0:
            lowers.append((-rest, a))
        else:
            uppers.append((rest, -a))
    return lowers, uppers


def _scan_plan(d: Domain):
    plan = []
    for k, it in enumerate(d.iterators):
        proj = project_onto(d, k + 1)
        if proj.is_obviously_empty:
            return None
        lo, up = bounds_for(proj, it)
        if not lo:
            raise UnboundedError(it, "lower")
        if not up:
            raise UnboundedError(it, "upper")
        plan.append((it, _compile(lo, d.iterators), _compile(up, d.iterators)))
    return plan


def _compile(bounds: list[Bound], order: Sequence[str]):
    idx = {n: i for i, n in enumerate(order)}
    return [(tuple((idx[n], c) for n, c in e.coeffs), e.constant, k) for e, k in bounds]


def enumerate_points(d: Domain, params: Mapping[str, int] | None = None) -> list[tuple[int, ...]]:
    """All integer points of ``d`` in lexicographic order of its iterators.

    Loop bounds come from successive projections; membership of each point is
    re-tested against the original constraints so the result is exact even
    where the projection over-approximates.
    """
    params = dict(params or {})
    missing = [p for p in d.parameters if p not in params]
    if missing:
        raise PolyhedronError(f"unbound parameters {missing}")
    bound = d.bind(params)
    for c in bound.constraints:
        if c.is_infeasible():
            return []
    if not bound.iterators:
        return [()]
    plan = _scan_plan(bound)
    if plan is None:
        return []
    full = _compile_constraints(bound)
    n = len(bound.iterators)
    out: list[tuple[int, ...]] = []
    point = [0] * n

    def rec(k: int):
        _, lows, ups = plan[k]
        lo = max(-((-(sum(c * point[i] for i, c in terms) + const)) // div) for terms, const, div in lows)
        hi = min((sum(c * point[i] for i, c in terms) + const) // div for terms, const, div in ups)
        last = k == n - 1
        for v in range(lo, hi + 1):
            point[k] = v
            if last:
                if all(_holds(c, point) for c in full):
                    out.append(tuple(point))
            else:
                rec(k + 1)

    rec(0)
    return out


def _compile_constraints(d: Domain):
    idx = {n: i for i, n in enumerate(d.iterators)}
    return [(c.kind, tuple((idx[n], a) for n, a in c.expr.coeffs), c.expr.constant)
            for c in d.constraints]


def _holds(c, point) -> bool:
    kind, terms, const = c
    v = sum(a * point[i] for i, a in terms) + const
    return v == 0 if kind == EQ else v >= 0


def bounding_box(d: Domain, params: Mapping[str, int] | None = None) -> dict[str, tuple[int, int]]:
    """Per-iterator integer interval enclosing ``d`` (an over-approximation)."""
    bound = d.bind(dict(params or {}))
    if bound.parameters:
        raise PolyhedronError(f"unbound parameters {list(bound.parameters)}")
    box = {}
    for it in bound.iterators:
        others = [o for o in bound.iterators if o != it]
        proj = bound
        for o in reversed(others):
            proj = project_eliminate(proj, o)
        if proj.is_obviously_empty:
            return {i: (0, -1) for i in bound.iterators}
        lo, up = bounds_for(proj, it)
        if not lo:
            raise UnboundedError(it, "lower")
        if not up:
            raise UnboundedError(it, "upper")
        box[it] = (max(ceild(e.constant, k) for e, k in lo), min(floord(e.constant, k) for e, k in up))
    return box
