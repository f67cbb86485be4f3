"""Slow, independent reference implementations used to check the package."""

from __future__ import annotations

import itertools
import math

import numpy as np


def lattice_from_params(lengths, angles_deg):
    """Lattice vectors as columns, a along x and b in the xy plane."""
    a, b, c = lengths
    al, be, ga = (math.radians(x) for x in angles_deg)
    cx = c * math.cos(be)
    cy = c * (math.cos(al) - math.cos(be) * math.cos(ga)) / math.sin(ga)
    cz = math.sqrt(c * c - cx * cx - cy * cy)
    return np.array(
        [
            [a, b * math.cos(ga), cx],
            [0.0, b * math.sin(ga), cy],
            [0.0, 0.0, cz],
        ]
    )


def naive_energy(frac, charges, symbols, lengths, angles, pairs, coulomb_constant, k):
    """Literal triple loop: every site, every image cell within k layers, every other site.

    ``pairs`` maps frozenset({a, b}) (or {a} for like pairs) to (A, rho, C).
    Returns (total, coulomb, buckingham).
    """
    lat = lattice_from_params(lengths, angles)
    n = len(frac)
    coul = 0.0
    buck = 0.0
    r = range(-k, k + 1)
    for i in range(n):
        xi = [sum(lat[row][col] * frac[i][col] for col in range(3)) for row in range(3)]
        for k1 in r:
            for k2 in r:
                for k3 in r:
                    for j in range(n):
                        if i == j and (k1, k2, k3) == (0, 0, 0):
                            continue
                        shifted = (frac[j][0] + k1, frac[j][1] + k2, frac[j][2] + k3)
                        xj = [sum(lat[row][col] * shifted[col] for col in range(3)) for row in range(3)]
                        d = math.sqrt(sum((xi[t] - xj[t]) ** 2 for t in range(3)))
                        coul += coulomb_constant * charges[i] * charges[j] / d
                        A, rho, C = pairs.get(frozenset((symbols[i], symbols[j])), (0.0, 1.0, 0.0))
                        buck += A * math.exp(-d / rho) - C / d**6
    return coul + buck, coul, buck


def structure_energy(s, ff, k):
    pairs = {frozenset(key): (p.A, p.rho, p.C) for key, p in ff.pairs.items()}
    symbols = [s.species[t].symbol for t in s.site_species]
    return naive_energy(
        s.frac.tolist(), s.charges.tolist(), symbols, s.cell.lengths, s.cell.angles, pairs, ff.coulomb_constant, k
    )


def naive_feasible(s):
    """Every pair and every self-copy over the 27 nearest cells, compared against radius sums."""
    lat = s.lattice
    n = s.n
    radii = s.radii
    for i in range(n):
        for j in range(n):
            for off in itertools.product((-1, 0, 1), repeat=3):
                if i == j and off == (0, 0, 0):
                    continue
                d = np.linalg.norm(lat @ (s.frac[j] + np.array(off) - s.frac[i]))
                if d < radii[i] + radii[j] - 1e-9:
                    return False
    return True


def finite_difference_gradient(energy_fn, s, h=1e-5):
    """Central differences of ``energy_fn`` with respect to Cartesian positions."""
    inv = np.linalg.inv(s.lattice)
    g = np.zeros((s.n, 3))
    for i in range(s.n):
        for d in range(3):
            step = np.zeros(3)
            step[d] = h
            plus = np.array(s.frac)
            minus = np.array(s.frac)
            plus[i] += inv @ step
            minus[i] -= inv @ step
            # no wrapping: the moved ion keeps its cell copy
            g[i, d] = (energy_fn(plus) - energy_fn(minus)) / (2 * h)
    return g


def arrangement_key(frac, site_species):
    """Species-to-position multiset, positions wrapped and rounded."""
    w = np.mod(np.round(np.asarray(frac, dtype=float), 9), 1.0)
    w[w >= 1.0 - 5e-10] = 0.0
    return tuple(sorted(zip(np.asarray(site_species).tolist(), map(tuple, np.round(w, 9).tolist()))))


def brute_ion_swap(s, k):
    """All arrangements reachable by giving k sites each other's positions (identity and repeats dropped)."""
    out = set()
    base = arrangement_key(s.frac, s.site_species)
    for group in itertools.combinations(range(s.n), k):
        for perm in itertools.permutations(group):
            f = np.array(s.frac)
            f[list(group)] = s.frac[list(perm)]
            key = arrangement_key(f, s.site_species)
            if key != base:
                out.add(key)
    return out


def brute_axes(s, delta):
    """One ion moved along one axis by a whole number of grid steps onto an empty point."""
    out = set()
    base = arrangement_key(s.frac, s.site_species)
    occupied = {tuple(np.round(np.mod(p, 1.0), 9)) for p in s.frac}
    for i in range(s.n):
        for d, length in enumerate(s.cell.lengths):
            g = math.ceil(length / delta - 1e-12)
            for j in range(1, g):
                f = np.array(s.frac)
                f[i, d] = (f[i, d] + j * delta / length) % 1.0
                if tuple(np.round(np.mod(f[i], 1.0), 9)) in occupied:
                    continue
                key = arrangement_key(f, s.site_species)
                if key != base:
                    out.add(key)
    return out


def brute_one_swap(s, delta):
    """One ion sent to an origin-anchored grid point; an occupant of that point takes the ion's place."""
    out = set()
    base = arrangement_key(s.frac, s.site_species)
    axes = [np.arange(math.ceil(L / delta - 1e-12)) * delta / L for L in s.cell.lengths]
    for point in itertools.product(*axes):
        point = np.array(point)
        for i in range(s.n):
            f = np.array(s.frac)
            occ = [j for j in range(s.n) if np.all(np.abs((s.frac[j] - point + 0.5) % 1.0 - 0.5) < 1e-9)]
            if i in occ:
                continue
            for j in occ:
                f[j] = s.frac[i]
            f[i] = point
            key = arrangement_key(f, s.site_species)
            if key != base:
                out.add(key)
    return out


def filter_feasible(s, keys):
    """Keys whose arrangement passes :func:`naive_feasible`."""
    kept = set()
    for key in keys:
        species = np.array([sp for sp, _ in key])
        frac = np.array([p for _, p in key])
        t = _reorder(s, species, frac)
        if naive_feasible(t):
            kept.add(key)
    return kept


def _reorder(s, species, frac):
    from depthcsp.model import Structure

    order = np.argsort(species, kind="stable")
    return Structure(s.cell, s.species, species[order], frac[order])
