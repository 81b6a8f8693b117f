"""Legality of reorderings for uniform dependences.

Everything here reasons about dependence distance vectors only; no points
are enumerated.  The brute-force counterpart lives in :mod:`polytile.oracle`.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .polyhedron import ceild, floord

Vec = tuple[int, ...]


class LegalityError(ValueError):
    pass


def _vec(d) -> Vec:
    return tuple(int(c) for c in d)


def is_lex_positive(d) -> bool:
    for c in d:
        if c != 0:
            return c > 0
    return False


@dataclass
class Verdict:
    """Outcome of a legality check; falsy when there are violations.

    ``violations`` pairs each offending dependence with its transformed image
    (for tiled orders, the timestamp difference that witnesses the violation).
    """

    violations: list[tuple[Vec, Vec]] = field(default_factory=list)

    @property
    def legal(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.legal


def check_schedule_legality(deps: Sequence, sched) -> Verdict:
    """Apply the linear part of ``sched`` to every dependence.

    The schedule is legal iff each image is lexicographically positive.
    """
    n = len(sched.input_names)
    out = Verdict()
    for d in deps:
        d = _vec(d)
        if len(d) != n:
            raise LegalityError(f"dependence {d} has {len(d)} components, schedule has {n} inputs")
        img = sched.apply_linear(d)
        if not is_lex_positive(img):
            out.violations.append((d, img))
    return out


def compute_skew_factors(deps: Sequence, dims_to_tile: Sequence[int], time_dim: int = 0) -> dict[int, int]:
    """Smallest non-negative ``f_k`` with ``d_k + f_k * d_time >= 0`` for all deps."""
    deps = [_vec(d) for d in deps]
    for d in deps:
        if d[time_dim] <= 0:
            raise LegalityError(f"dependence {d} has non-positive time component")
    factors = {}
    for k in dims_to_tile:
        if k == time_dim:
            raise LegalityError("the time dimension cannot be skewed against itself")
        factors[k] = max([0] + [ceild(-d[k], d[time_dim]) for d in deps])
    return factors


def skew_dependences(deps: Sequence, factors: Mapping[int, int], time_dim: int = 0) -> list[Vec]:
    out = []
    for d in deps:
        d = list(_vec(d))
        for k, f in factors.items():
            d[k] += f * d[time_dim]
        out.append(tuple(d))
    return out


def check_tiling_band(deps: Sequence, band: Sequence[int]) -> bool:
    """Full permutability: every dependence is non-negative along every band dim.

    This is sufficient for rectangular tiling of the band to be legal.
    """
    return all(_vec(d)[k] >= 0 for d in deps for k in band)


def band_violations(deps: Sequence, band: Sequence[int]) -> list[Vec]:
    return [_vec(d) for d in deps if any(_vec(d)[k] < 0 for k in band)]


def storage_anti_dependences(reads: Sequence, buffer: int) -> list[Vec]:
    """Distances from each read to the later write that reuses its buffer slot.

    With ``buffer`` time steps kept in a ring, the value read at offset
    ``(-j, rho)`` is overwritten by the write ``buffer - j`` steps later at
    spatial offset ``rho``.  Every such reader must run before that writer,
    so these vectors are ordering constraints exactly like flow dependences.
    A zero vector (a point overwriting the cell it reads) is harmless because
    the statement reads before it writes.
    """
    out = {(buffer + int(r[0]),) + tuple(int(c) for c in r[1:]) for r in reads}
    return sorted(v for v in out if any(v))


def tile_offsets(distance: int, size: int) -> tuple[int, ...]:
    """Tile-index differences a distance can produce between absolute-aligned tiles."""
    lo = floord(distance, size)
    return (lo,) if distance % size == 0 else (lo, lo + 1)


def check_tiled_order(deps: Sequence, loop_order: Sequence[tuple[int, bool]],
                      tile_sizes: Mapping[int, int]) -> Verdict:
    """Exact legality of a rectangularly tiled loop order on an unbounded domain.

    ``loop_order`` lists ``(dim, is_tile_loop)`` entries outermost first, with
    dependences expressed in the (possibly skewed) coordinates being tiled.
    Tiles are aligned to multiples of their size, so a distance ``d`` along a
    tiled dimension moves the tile index by ``floord(d, T)`` or one more
    depending on where the source sits inside its tile.  Offsets are chosen
    independently per dimension, so every combination occurs and the order is
    legal iff all resulting timestamp differences are lexicographically
    positive.
    """
    tiled = [k for k, is_tile in loop_order if is_tile]
    out = Verdict()
    for d in deps:
        d = _vec(d)
        choices = [tile_offsets(d[k], tile_sizes[k]) for k in tiled]
        for combo in itertools.product(*choices):
            pick = dict(zip(tiled, combo))
            diff = tuple(pick[k] if is_tile else d[k] for k, is_tile in loop_order)
            if not is_lex_positive(diff):
                out.violations.append((d, diff))
                break
    return out
