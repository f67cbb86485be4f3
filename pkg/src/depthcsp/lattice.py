"""Triclinic cell geometry, periodic images, hard-sphere feasibility and random structures."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .model import Composition, Species, Structure, UnitCell, build_structure, validate_composition

# smallest accepted volume relative to a*b*c
MIN_RELATIVE_VOLUME = 1e-4
# slack for the non-strict hard-sphere inequality
CONTACT_TOL = 1e-9


class GenerationError(RuntimeError):
    """Raised when no feasible random structure is found within the attempt budget."""


def lattice_matrix(cell: UnitCell) -> np.ndarray:
    """Columns are the lattice vectors a, b, c (a along x, b in the xy plane)."""
    a, b, c = cell.lengths
    alpha, beta, gamma = np.radians(cell.angles)
    cos_a, cos_b, cos_g = np.cos(alpha), np.cos(beta), np.cos(gamma)
    sin_g = np.sin(gamma)
    cy = (cos_a - cos_b * cos_g) / sin_g
    cz2 = 1.0 - cos_b**2 - cy**2
    rel_volume = sin_g * np.sqrt(max(cz2, 0.0))
    if cz2 <= 0 or rel_volume <= MIN_RELATIVE_VOLUME:
        raise ValueError(f"cell angles {cell.angles} give a degenerate cell")
    m = np.array(
        [
            [a, b * cos_g, c * cos_b],
            [0.0, b * sin_g, c * cy],
            [0.0, 0.0, c * np.sqrt(cz2)],
        ]
    )
    # exact zeros for right angles keep cubic matrices diagonal
    m[np.abs(m) < 1e-12 * max(a, b, c)] = 0.0
    return m


def cell_volume(cell: UnitCell) -> float:
    return float(np.linalg.det(lattice_matrix(cell)))


def perpendicular_widths(lattice: np.ndarray) -> np.ndarray:
    """Distances between opposite faces of the cell."""
    a, b, c = lattice.T
    vol = abs(np.dot(a, np.cross(b, c)))
    return vol / np.array(
        [np.linalg.norm(np.cross(b, c)), np.linalg.norm(np.cross(a, c)), np.linalg.norm(np.cross(a, b))]
    )


@dataclass(frozen=True)
class ImageShell:
    """All integer cell offsets with Chebyshev norm at most ``depth``."""

    depth: int

    def __post_init__(self):
        if self.depth < 0:
            raise ValueError("shell depth must be non-negative")

    @property
    def offsets(self) -> np.ndarray:
        return _offsets(self.depth)

    def __len__(self):
        return (2 * self.depth + 1) ** 3


@lru_cache(maxsize=None)
def _offsets(k: int) -> np.ndarray:
    r = range(-k, k + 1)
    o = np.array(list(itertools.product(r, r, r)), dtype=float)
    o.setflags(write=False)
    return o


def distance(s: Structure, i: int, j: int, offset=(0, 0, 0)) -> float:
    """Distance from site ``i`` to the image of site ``j`` shifted by integer ``offset``."""
    df = s.frac[j] + np.asarray(offset, dtype=float) - s.frac[i]
    return float(np.linalg.norm(s.lattice @ df))


def minimum_image(dfrac: np.ndarray) -> np.ndarray:
    """Fold fractional differences into [-0.5, 0.5)."""
    return dfrac - np.floor(dfrac + 0.5)


def pair_vectors(frac: np.ndarray) -> np.ndarray:
    """Minimum-image fractional vectors ``frac[..., j, :] - frac[..., i, :]``, shape (..., n, n, 3)."""
    return minimum_image(frac[..., None, :, :] - frac[..., :, None, :])


def image_distances(frac: np.ndarray, lattice: np.ndarray, depth: int = 1) -> np.ndarray:
    """Distances to every image in the depth-``depth`` shell around the minimum image.

    Returns shape (..., n, n, M) where M = (2*depth+1)**3; the self term
    ``i == j`` at zero offset is set to ``inf``.
    """
    offsets = _offsets(depth)
    cart = pair_vectors(frac) @ lattice.T
    shifts = offsets @ lattice.T
    d = np.linalg.norm(cart[..., None, :] + shifts, axis=-1)
    n = frac.shape[-2]
    zero = (len(offsets) - 1) // 2
    d[..., np.arange(n), np.arange(n), zero] = np.inf
    return d


def closest_contacts(frac: np.ndarray, lattice: np.ndarray) -> np.ndarray:
    """Shortest distance between every pair of sites over the depth-1 shell, shape (..., n, n)."""
    return image_distances(frac, lattice, 1).min(axis=-1)


def check_radii_fit(cell_or_lattice, radii) -> None:
    """Depth-1 feasibility is exact only while every contact distance is below the cell width."""
    lat = cell_or_lattice if isinstance(cell_or_lattice, np.ndarray) else lattice_matrix(cell_or_lattice)
    radii = np.asarray(radii, dtype=float)
    if radii.size == 0:
        return
    widest = 2.0 * radii.max()
    if widest >= perpendicular_widths(lat).min():
        raise ValueError(
            f"largest contact distance {widest:.3f} A is not smaller than the cell width; "
            "feasibility over the first image shell would be unreliable"
        )


def is_feasible(s: Structure, shell: ImageShell | int = 1) -> bool:
    """True iff no two hard spheres overlap (touching is allowed)."""
    depth = shell.depth if isinstance(shell, ImageShell) else int(shell)
    if depth < 1:
        raise ValueError("feasibility needs a shell of depth >= 1")
    d = image_distances(s.frac, s.lattice, depth).min(axis=-1)
    r = s.radii
    return bool(np.all(d >= r[:, None] + r[None, :] - CONTACT_TOL))


def feasible_mask(frac_batch: np.ndarray, lattice: np.ndarray, radii: np.ndarray) -> np.ndarray:
    """Feasibility of each arrangement in a (B, n, 3) batch, using a compiled scan."""
    from . import _kernels

    radii = np.asarray(radii, dtype=float)
    need = radii[:, None] + radii[None, :] - CONTACT_TOL
    frac_batch = np.ascontiguousarray(np.asarray(frac_batch, dtype=float).reshape(-1, len(radii), 3))
    shifts = np.ascontiguousarray(_offsets(1) @ lattice.T)
    return _kernels.batch_feasible(frac_batch, np.ascontiguousarray(lattice), shifts, need)


def _with_radii(composition: Composition, radii) -> Composition:
    if not radii:
        return composition
    entries = []
    for sp, m in composition.entries:
        r = radii.get(sp.symbol, sp.radius)
        entries.append((Species(sp.symbol, sp.charge, r), m))
    return Composition(tuple(entries), composition.formula_units)


def random_feasible(
    cell: UnitCell,
    composition: Composition,
    radii: dict | None = None,
    rng=None,
    max_attempts: int = 100_000,
    restart_after: int = 500,
) -> Structure:
    """Draw uniform fractional positions one ion at a time, rejecting overlaps.

    ``rng`` is a seed or a ``numpy.random.Generator``. Every rejected draw counts
    against ``max_attempts``. If a single ion is rejected ``restart_after`` times
    in a row, the partial structure is discarded and filling starts over.
    """
    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    problem = validate_composition(composition)
    if problem:
        raise ValueError(problem)
    composition = _with_radii(composition, radii)
    rng = np.random.default_rng(rng)
    lat = lattice_matrix(cell)
    site_r = np.array([composition.species[k].radius for k in composition.site_species()])
    n = len(site_r)
    shifts = _offsets(1) @ lat.T
    self_images = np.linalg.norm(shifts, axis=1)
    self_images = self_images[self_images > 0].min()

    rejected = 0
    while True:
        placed = np.empty((n, 3))
        i = 0
        streak = 0
        while i < n:
            if rejected >= max_attempts:
                raise GenerationError(
                    f"no feasible arrangement after {max_attempts} rejected draws; the cell may be over-packed"
                )
            x = rng.random(3)
            ok = self_images >= 2 * site_r[i] - CONTACT_TOL
            if ok and i:
                df = minimum_image(placed[:i] - x) @ lat.T
                d = np.linalg.norm(df[:, None, :] + shifts, axis=-1).min(axis=1)
                ok = bool(np.all(d >= site_r[:i] + site_r[i] - CONTACT_TOL))
            if ok:
                placed[i] = x
                i += 1
                streak = 0
                continue
            rejected += 1
            streak += 1
            if streak >= restart_after:
                break
        if i == n:
            return build_structure(cell, composition, placed)
