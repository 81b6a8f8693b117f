"""Randomized small instances for cross-checking legality against the oracle.

Each instance is a box domain of at most three dimensions, up to four
lexicographically positive uniform dependences, skews of every inner
dimension against the outermost one, and either a loop permutation or a
rectangular tiling of a subset of the dimensions.

Instances are drawn so that every dependence is realized in the box and,
along every tiled dimension, enough sources exist for every possible tile
offset to occur.  Under those conditions the distance-vector predictions
are exact and can be compared one-to-one with the brute-force verdict.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .legality import check_schedule_legality, check_tiled_order, check_tiling_band, is_lex_positive
from .polyhedron import Domain
from .transform import Schedule, TransformedProgram, build_program

NAMES = ("t", "x", "y")


@dataclass(frozen=True)
class Instance:
    domain: Domain
    deps: tuple[tuple[int, ...], ...]
    skews: dict
    order: tuple[str, ...] | None
    tile_sizes: dict | None
    program: TransformedProgram

    @property
    def tiled(self) -> bool:
        return bool(self.tile_sizes)

    def predicted_legal(self) -> bool:
        """Verdict from distance vectors alone."""
        p = self.program
        if not self.tiled:
            sched = p.skew.then(Schedule.permutation(p.skew.output_names, p.loop_order))
            return check_schedule_legality(self.deps, sched).legal
        sizes = {p.skew.output_names.index(d): T for d, T in p.tile_sizes.items()}
        return check_tiled_order(p.skewed_deps(), p.tiled_loop_order(), sizes).legal

    def band(self) -> list[int]:
        return [self.program.skew.output_names.index(d) for d in self.tile_sizes or {}]

    def band_legal(self) -> bool:
        return check_tiling_band(self.program.skewed_deps(), self.band())

    def band_is_exact(self) -> bool:
        """Full permutability decides tiling exactly when no distance spans a whole tile."""
        names = self.program.skew.output_names
        return all(abs(d[names.index(k)]) < T for d in self.program.skewed_deps()
                   for k, T in self.tile_sizes.items())


def _dep(rng: random.Random, n: int) -> tuple[int, ...]:
    while True:
        d = tuple(rng.randint(-2, 2) for _ in range(n))
        if is_lex_positive(d):
            return d


def random_instance(rng: random.Random) -> Instance:
    n = rng.randint(1, 3)
    names = NAMES[:n]
    deps = tuple(sorted({_dep(rng, n) for _ in range(rng.randint(1, 4))}))
    skews = {names[k]: rng.randint(0, 3) for k in range(1, n)}
    tiled = rng.random() < 0.5
    sizes = None
    order = None
    if tiled:
        chosen = [nm for nm in names if rng.random() < 0.7] or [rng.choice(names)]
        sizes = {nm: rng.choice((2, 3, 4)) for nm in chosen}
    else:
        order = tuple(rng.sample(names, n))
    box = {}
    for k, nm in enumerate(names):
        span = max(abs(d[k]) for d in deps)
        need = span + (sizes[nm] if sizes and nm in sizes else 1)
        lo = rng.randint(0, 2)
        # need <= 6 and lo <= 2, so the upper bound stays within 8
        box[nm] = (lo, rng.randint(lo + need - 1, 8))
    dom = Domain.box(box)
    prog = build_program(dom, deps, skews, order=order, tile_sizes=sizes, time_dim=names[0])
    return Instance(dom, deps, skews, order, sizes, prog)


def suite(count: int, seed: int = 0) -> list[Instance]:
    rng = random.Random(seed)
    return [random_instance(rng) for _ in range(count)]
