"""Combinatorial neighborhoods at fixed cell and a greedy descent over them.

Three neighborhoods are provided:

* ``k_ion_swap`` permutes the positions of ``k`` ions;
* ``k_swap`` exchanges ``k`` ions with points of a grid laid over the cell
  (an occupied point trades places with the moving ion, a vacant one just
  receives it);
* ``axes`` relocates one ion along each of the three lattice-parallel lines
  through it, in steps of ``delta``.

Only arrangements passing the hard-sphere test are neighbors.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .energy import PairTables, batch_energy, depth_energy
from .lattice import feasible_mask
from .model import ForceField, Structure, wrap

KINDS = ("k_ion_swap", "k_swap", "axes")
# fractional tolerance for "this ion sits on that grid point"
_SAME_POINT = 1e-9
_BATCH = 512


@dataclass(frozen=True)
class NeighborhoodSpec:
    kind: str
    k: int | None = None
    delta: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown neighborhood {self.kind!r}; expected one of {KINDS}")
        needs_k = self.kind in ("k_ion_swap", "k_swap")
        needs_delta = self.kind in ("k_swap", "axes")
        if needs_k and (self.k is None or self.k < 1):
            raise ValueError(f"{self.kind} needs a positive k")
        if not needs_k and self.k is not None:
            raise ValueError(f"{self.kind} takes no k")
        if needs_delta and (self.delta is None or not self.delta > 0):
            raise ValueError(f"{self.kind} needs a positive delta")
        if not needs_delta and self.delta is not None:
            raise ValueError(f"{self.kind} takes no delta")

    @property
    def label(self) -> str:
        if self.kind == "axes":
            return f"axes(delta={self.delta:g})"
        if self.kind == "k_swap":
            return f"{self.k}-swap(delta={self.delta:g})"
        return f"{self.k}-ion-swap"


@dataclass(frozen=True)
class Move:
    """Sites ``sites`` end up at fractional positions ``targets``; ``displaced`` ions fill the vacated spots."""

    kind: str
    sites: tuple[int, ...]
    targets: tuple[tuple[float, float, float], ...]
    displaced: tuple[tuple[int, tuple[float, float, float]], ...] = ()

    def apply(self, s: Structure) -> Structure:
        return s.with_frac(self.apply_frac(s.frac))

    def apply_frac(self, frac: np.ndarray) -> np.ndarray:
        out = np.array(frac, dtype=float)
        for i, t in zip(self.sites, self.targets):
            out[i] = t
        for j, t in self.displaced:
            out[j] = t
        return out

    @property
    def touched(self) -> tuple[int, ...]:
        return tuple(sorted(set(self.sites) | {j for j, _ in self.displaced}))


def points_per_axis(length: float, delta: float) -> int:
    return math.ceil(length / delta - 1e-12)


def grid_fractions(length: float, delta: float) -> np.ndarray:
    """Fractional coordinates j*delta/length, j = 0 .. ceil(length/delta)-1."""
    return np.arange(points_per_axis(length, delta)) * delta / length


def _check_delta(s: Structure, delta: float) -> None:
    if delta > min(s.cell.lengths):
        raise ValueError(f"delta {delta} exceeds the shortest cell length; the grid would be empty")


def _key(frac: np.ndarray, site_species: np.ndarray) -> tuple:
    """Arrangement identity: which species sits where, independent of site labels."""
    w = wrap(np.round(frac, 9))
    w[w >= 1.0 - 5e-10] = 0.0
    rows = sorted(zip(site_species.tolist(), map(tuple, np.round(w, 9).tolist())))
    return tuple(rows)


def _ion_swap_moves(s: Structure, k: int) -> Iterator[Move]:
    frac = s.frac
    for group in itertools.combinations(range(s.n), k):
        for perm in itertools.permutations(group):
            if perm == group:
                continue
            yield Move("k_ion_swap", group, tuple(tuple(frac[p]) for p in perm))


def _grid_points(s: Structure, delta: float) -> np.ndarray:
    axes = [grid_fractions(L, delta) for L in s.cell.lengths]
    return np.array(list(itertools.product(*axes)))


def _occupant(frac: np.ndarray, point: np.ndarray) -> int | None:
    d = np.abs(frac - point)
    d = np.minimum(d, 1.0 - d)
    hit = np.flatnonzero(np.all(d < _SAME_POINT, axis=1))
    return int(hit[0]) if len(hit) else None


def _swap_moves(s: Structure, k: int, delta: float) -> Iterator[Move]:
    _check_delta(s, delta)
    grid = _grid_points(s, delta)
    occupant = [_occupant(s.frac, g) for g in grid]
    frac = s.frac
    for group in itertools.combinations(range(s.n), k):
        for targets in itertools.permutations(range(len(grid)), k):
            displaced = []
            ok = True
            for site, t in zip(group, targets):
                o = occupant[t]
                if o is None:
                    continue
                if o in group:
                    # a moving ion's own spot (or another mover's) is not a target
                    ok = False
                    break
                displaced.append((o, tuple(frac[site])))
            if ok:
                yield Move("k_swap", group, tuple(tuple(grid[t]) for t in targets), tuple(displaced))


def _axes_moves(s: Structure, delta: float) -> Iterator[Move]:
    _check_delta(s, delta)
    for i in range(s.n):
        x = s.frac[i]
        for dim, length in enumerate(s.cell.lengths):
            for step in grid_fractions(length, delta)[1:]:
                t = x.copy()
                t[dim] = (t[dim] + step) % 1.0
                if _occupant(s.frac, t) is not None:
                    continue
                yield Move("axes", (i,), (tuple(t),))


def enumerate_moves(s: Structure, spec: NeighborhoodSpec) -> Iterator[Move]:
    """Candidate moves in a fixed order, before feasibility and duplicate filtering."""
    if spec.kind == "k_ion_swap":
        yield from _ion_swap_moves(s, spec.k)
    elif spec.kind == "k_swap":
        yield from _swap_moves(s, spec.k, spec.delta)
    else:
        yield from _axes_moves(s, spec.delta)


def _feasible_unique(s: Structure, spec: NeighborhoodSpec) -> Iterator[tuple[Move, np.ndarray]]:
    """Feasible, distinct, non-identity neighbors as (move, frac) in enumeration order."""
    radii = s.radii
    seen = {_key(s.frac, s.site_species)}
    pending = []

    def flush():
        fracs = np.array([f for _, f in pending])
        ok = feasible_mask(fracs, s.lattice, radii)
        for (m, f), good in zip(pending, ok):
            if good:
                yield m, f
        pending.clear()

    for move in enumerate_moves(s, spec):
        f = move.apply_frac(s.frac)
        key = _key(f, s.site_species)
        if key in seen:
            continue
        seen.add(key)
        pending.append((move, wrap(f)))
        if len(pending) >= _BATCH:
            yield from flush()
    if pending:
        yield from flush()


def enumerate_neighbors(s: Structure, spec: NeighborhoodSpec) -> Iterator[Structure]:
    """Lazily yield every feasible neighbor of ``s``."""
    for _, f in _feasible_unique(s, spec):
        yield s.with_frac(f)


def greedy_step(
    s: Structure,
    spec: NeighborhoodSpec,
    ff: ForceField,
    k_energy: int = 1,
    energy: float | None = None,
    tables: PairTables | None = None,
) -> tuple[Structure, float] | None:
    """Lowest-energy neighbor if it is strictly below ``s``, else ``None``.

    Ties go to the first neighbor in enumeration order.
    """
    tables = tables or PairTables(s, ff)
    if energy is None:
        energy = depth_energy(s, ff, k_energy).total
    best_e, best_f = math.inf, None
    chunk = []

    def scan():
        nonlocal best_e, best_f
        fracs = np.array(chunk)
        es = batch_energy(s, ff, fracs, k_energy, tables=tables)
        i = int(np.argmin(es))
        if es[i] < best_e:
            best_e, best_f = float(es[i]), fracs[i]
        chunk.clear()

    for _, f in _feasible_unique(s, spec):
        chunk.append(f)
        if len(chunk) >= _BATCH:
            scan()
    if chunk:
        scan()
    if best_f is None or not best_e < energy:
        return None
    return s.with_frac(best_f), best_e


@dataclass
class LocalSearchResult:
    structure: Structure
    steps: int
    energy_trace: list

    @property
    def energy(self) -> float:
        return self.energy_trace[-1]


def local_search(
    s: Structure,
    spec: NeighborhoodSpec,
    ff: ForceField,
    k_energy: int = 1,
    max_steps: int = 10_000,
) -> LocalSearchResult:
    """Apply greedy steps until none improves or ``max_steps`` is reached."""
    tables = PairTables(s, ff)
    energy = depth_energy(s, ff, k_energy).total
    trace = [energy]
    steps = 0
    while steps < max_steps:
        found = greedy_step(s, spec, ff, k_energy, energy, tables)
        if found is None:
            break
        assert found[1] < energy, "greedy step did not lower the energy"
        s, energy = found
        trace.append(energy)
        steps += 1
    return LocalSearchResult(s, steps, trace)
