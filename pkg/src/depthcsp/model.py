"""Domain types: species, compositions, unit cells, structures and force fields."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

# eV * Angstrom per e^2
COULOMB_CONSTANT = 14.399645


@dataclass(frozen=True)
class Species:
    symbol: str
    charge: int
    radius: float

    def __post_init__(self):
        if not self.symbol:
            raise ValueError("species symbol must be non-empty")
        if int(self.charge) != self.charge:
            raise ValueError(f"{self.symbol}: charge must be an integer, got {self.charge}")
        if self.charge == 0:
            raise ValueError(f"{self.symbol}: charge must be non-zero")
        if not math.isfinite(self.radius) or self.radius < 0:
            raise ValueError(f"{self.symbol}: radius must be a non-negative number, got {self.radius}")
        object.__setattr__(self, "charge", int(self.charge))
        object.__setattr__(self, "radius", float(self.radius))


@dataclass(frozen=True)
class Composition:
    """Species with per-formula multiplicities, repeated ``formula_units`` times per cell.

    Construction does not enforce charge neutrality; use
    :func:`validate_composition` to get a report.
    """

    entries: tuple[tuple[Species, int], ...]
    formula_units: int = 1

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple((sp, int(m)) for sp, m in self.entries))

    @classmethod
    def from_counts(cls, counts: Iterable[tuple[Species, int]], formula_units: int = 1) -> "Composition":
        return cls(tuple(counts), formula_units)

    @property
    def species(self) -> tuple[Species, ...]:
        return tuple(sp for sp, _ in self.entries)

    @property
    def n_sites(self) -> int:
        return sum(m for _, m in self.entries) * self.formula_units

    def site_species(self) -> np.ndarray:
        """Species index for every site, in composition order."""
        idx = []
        for k, (_, m) in enumerate(self.entries):
            idx.extend([k] * (m * self.formula_units))
        return np.array(idx, dtype=np.intp)


def validate_composition(c: Composition) -> str | None:
    """Return ``None`` if the composition is usable, else a message naming the first violated rule."""
    if not c.entries:
        return "composition has no species"
    if c.formula_units < 1:
        return f"formula_units must be >= 1, got {c.formula_units}"
    seen = set()
    for sp, m in c.entries:
        if m < 1:
            return f"multiplicity of {sp.symbol} must be >= 1, got {m}"
        if sp.symbol in seen:
            return f"species {sp.symbol} listed twice"
        seen.add(sp.symbol)
    net = sum(sp.charge * m for sp, m in c.entries) * c.formula_units
    if net != 0:
        return f"cell is not charge neutral (net charge {net:+d})"
    return None


@dataclass(frozen=True)
class UnitCell:
    """Cell lengths (a, b, c) in Angstrom and angles (alpha, beta, gamma) in degrees.

    alpha is the angle between b and c, beta between a and c, gamma between a and b.
    """

    lengths: tuple[float, float, float]
    angles: tuple[float, float, float] = (90.0, 90.0, 90.0)

    def __post_init__(self):
        lengths = tuple(float(v) for v in self.lengths)
        angles = tuple(float(v) for v in self.angles)
        if len(lengths) != 3 or len(angles) != 3:
            raise ValueError("a unit cell needs three lengths and three angles")
        if not all(math.isfinite(v) and v > 0 for v in lengths):
            raise ValueError(f"cell lengths must be positive, got {lengths}")
        if not all(0.0 < v < 180.0 for v in angles):
            raise ValueError(f"cell angles must lie in (0, 180) degrees, got {angles}")
        object.__setattr__(self, "lengths", lengths)
        object.__setattr__(self, "angles", angles)

    @classmethod
    def cubic(cls, a: float) -> "UnitCell":
        return cls((a, a, a))


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def wrap(frac) -> np.ndarray:
    """Map fractional coordinates into [0, 1)."""
    w = np.mod(np.asarray(frac, dtype=float), 1.0)
    # mod can return exactly 1.0 for tiny negative inputs
    w[w >= 1.0] = 0.0
    return w


@dataclass(frozen=True, eq=False)
class Structure:
    """A unit cell holding ``n`` ions at fractional coordinates.

    ``site_species[i]`` indexes into ``species``. Cartesian positions are
    always derived from ``frac`` through the cell.
    """

    cell: UnitCell
    species: tuple[Species, ...]
    site_species: np.ndarray
    frac: np.ndarray
    _lattice: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        site_species = np.array(self.site_species, dtype=np.intp).reshape(-1)
        frac = np.array(self.frac, dtype=float).reshape(-1, 3)
        if len(site_species) == 0:
            raise ValueError("a structure needs at least one site")
        if len(site_species) != len(frac):
            raise ValueError("site_species and frac have different lengths")
        if site_species.min() < 0 or site_species.max() >= len(self.species):
            raise ValueError("site species index out of range")
        if not np.all(np.isfinite(frac)):
            raise ValueError("fractional coordinates must be finite")
        object.__setattr__(self, "species", tuple(self.species))
        object.__setattr__(self, "site_species", _freeze(site_species))
        object.__setattr__(self, "frac", _freeze(wrap(frac)))
        if self._lattice is None:
            from .lattice import lattice_matrix

            object.__setattr__(self, "_lattice", lattice_matrix(self.cell))

    @property
    def n(self) -> int:
        return len(self.site_species)

    @property
    def lattice(self) -> np.ndarray:
        """3x3 matrix whose columns are the lattice vectors."""
        return self._lattice

    @property
    def cartesian(self) -> np.ndarray:
        return self.frac @ self._lattice.T

    @property
    def charges(self) -> np.ndarray:
        return np.array([self.species[k].charge for k in self.site_species], dtype=float)

    @property
    def radii(self) -> np.ndarray:
        return np.array([self.species[k].radius for k in self.site_species], dtype=float)

    def with_frac(self, frac) -> "Structure":
        return Structure(self.cell, self.species, self.site_species, frac, self._lattice)

    def __eq__(self, other):
        if not isinstance(other, Structure):
            return NotImplemented
        return (
            self.cell == other.cell
            and self.species == other.species
            and np.array_equal(self.site_species, other.site_species)
            and np.array_equal(self.frac, other.frac)
        )

    __hash__ = None


def build_structure(cell: UnitCell, composition: Composition, frac_positions) -> Structure:
    """Place the composition's ions at ``frac_positions`` (composition order)."""
    problem = validate_composition(composition)
    if problem:
        raise ValueError(problem)
    frac = np.asarray(frac_positions, dtype=float)
    if frac.ndim != 2 or frac.shape[1] != 3:
        raise ValueError("positions must be an (n, 3) array")
    if len(frac) != composition.n_sites:
        raise ValueError(
            f"composition needs {composition.n_sites} positions, got {len(frac)}"
        )
    if not np.all(np.isfinite(frac)):
        raise ValueError("positions must be finite")
    return Structure(cell, composition.species, composition.site_species(), frac)


@dataclass(frozen=True)
class Buckingham:
    A: float
    rho: float
    C: float

    def __post_init__(self):
        if self.A < 0 or self.C < 0 or not self.rho > 0:
            raise ValueError(f"need A >= 0, rho > 0, C >= 0; got {self}")


NO_INTERACTION = Buckingham(0.0, 1.0, 0.0)


@dataclass(frozen=True)
class ForceField:
    """Buckingham coefficients keyed by unordered species-symbol pairs.

    Pairs that are not listed contribute nothing.
    """

    pairs: dict = field(default_factory=dict)
    coulomb_constant: float = COULOMB_CONSTANT

    def __post_init__(self):
        table = {}
        for key, params in dict(self.pairs).items():
            a, b = key
            if not isinstance(params, Buckingham):
                params = Buckingham(*params)
            pair = _pair_key(a, b)
            if pair in table and table[pair] != params:
                raise ValueError(f"conflicting parameters for pair {a}-{b}")
            table[pair] = params
        object.__setattr__(self, "pairs", table)

    def lookup(self, a, b) -> Buckingham:
        return self.pairs.get(_pair_key(_symbol(a), _symbol(b)), NO_INTERACTION)

    def with_coulomb_constant(self, value: float) -> "ForceField":
        return ForceField(self.pairs, value)

    def tables(self, species: Sequence[Species]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(A, rho, C) matrices indexed by species index."""
        m = len(species)
        A = np.zeros((m, m))
        rho = np.ones((m, m))
        C = np.zeros((m, m))
        for i in range(m):
            for j in range(m):
                p = self.lookup(species[i], species[j])
                A[i, j], rho[i, j], C[i, j] = p.A, p.rho, p.C
        return A, rho, C


def forcefield_lookup(ff: ForceField, a, b) -> tuple[float, float, float]:
    p = ff.lookup(a, b)
    return p.A, p.rho, p.C


def _symbol(s) -> str:
    return s.symbol if isinstance(s, Species) else str(s)


def _pair_key(a: str, b: str) -> tuple[str, str]:
    return (a, b) if a <= b else (b, a)
