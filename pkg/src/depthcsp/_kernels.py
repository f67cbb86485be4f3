"""Compiled pair loops for the cell-anchored image sum.

Each unordered pair i < j is visited once and counted twice. Interactions of
a site with its own copies are constant and handled by the caller.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

SINGULAR = 1e-9


@njit(cache=True)
def pair_sum(frac, lattice, shifts, qq, A, inv_rho, C, want_grad):
    """Return (coulomb, buckingham, grad, ok); ``ok`` is False on a singular distance."""
    n = frac.shape[0]
    m = shifts.shape[0]
    grad = np.zeros((n, 3))
    coul = 0.0
    buck = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            f0 = frac[j, 0] - frac[i, 0]
            f1 = frac[j, 1] - frac[i, 1]
            f2 = frac[j, 2] - frac[i, 2]
            c0 = lattice[0, 0] * f0 + lattice[0, 1] * f1 + lattice[0, 2] * f2
            c1 = lattice[1, 0] * f0 + lattice[1, 1] * f1 + lattice[1, 2] * f2
            c2 = lattice[2, 0] * f0 + lattice[2, 1] * f1 + lattice[2, 2] * f2
            q = qq[i, j]
            a = A[i, j]
            b = inv_rho[i, j]
            cc = C[i, j]
            short = a != 0.0 or cc != 0.0
            g0 = 0.0
            g1 = 0.0
            g2 = 0.0
            for o in range(m):
                v0 = c0 + shifts[o, 0]
                v1 = c1 + shifts[o, 1]
                v2 = c2 + shifts[o, 2]
                d = math.sqrt(v0 * v0 + v1 * v1 + v2 * v2)
                if d < SINGULAR:
                    return 0.0, 0.0, grad, False
                inv = 1.0 / d
                coul += q * inv
                dphi = -q * inv * inv
                if short:
                    rep = a * math.exp(-d * b)
                    inv6 = inv * inv * inv
                    inv6 = inv6 * inv6
                    buck += rep - cc * inv6
                    dphi += -rep * b + 6.0 * cc * inv6 * inv
                if want_grad:
                    s = dphi * inv
                    g0 += s * v0
                    g1 += s * v1
                    g2 += s * v2
            if want_grad:
                grad[i, 0] -= 2.0 * g0
                grad[i, 1] -= 2.0 * g1
                grad[i, 2] -= 2.0 * g2
                grad[j, 0] += 2.0 * g0
                grad[j, 1] += 2.0 * g1
                grad[j, 2] += 2.0 * g2
    return 2.0 * coul, 2.0 * buck, grad, True


@njit(cache=True)
def batch_pair_sum(frac_batch, lattice, shifts, qq, A, inv_rho, C):
    """Coulomb plus Buckingham pair sums for a (B, n, 3) batch; NaN marks a singular arrangement."""
    out = np.empty(frac_batch.shape[0])
    for b in range(frac_batch.shape[0]):
        coul, buck, _, ok = pair_sum(frac_batch[b], lattice, shifts, qq, A, inv_rho, C, False)
        out[b] = coul + buck if ok else np.nan
    return out


@njit(cache=True)
def closest_contacts(frac, lattice, shifts):
    """Shortest distance from each site to each other site's copies in ``shifts``, shape (n, n)."""
    n = frac.shape[0]
    out = np.full((n, n), np.inf)
    for i in range(n):
        for j in range(i, n):
            f0 = frac[j, 0] - frac[i, 0]
            f1 = frac[j, 1] - frac[i, 1]
            f2 = frac[j, 2] - frac[i, 2]
            # fold into the nearest copy before scanning the shell
            f0 -= math.floor(f0 + 0.5)
            f1 -= math.floor(f1 + 0.5)
            f2 -= math.floor(f2 + 0.5)
            c0 = lattice[0, 0] * f0 + lattice[0, 1] * f1 + lattice[0, 2] * f2
            c1 = lattice[1, 0] * f0 + lattice[1, 1] * f1 + lattice[1, 2] * f2
            c2 = lattice[2, 0] * f0 + lattice[2, 1] * f1 + lattice[2, 2] * f2
            best = np.inf
            for o in range(shifts.shape[0]):
                v0 = c0 + shifts[o, 0]
                v1 = c1 + shifts[o, 1]
                v2 = c2 + shifts[o, 2]
                d2 = v0 * v0 + v1 * v1 + v2 * v2
                if i == j and d2 == 0.0:
                    continue
                if d2 < best:
                    best = d2
            out[i, j] = math.sqrt(best)
            out[j, i] = out[i, j]
    return out


@njit(cache=True)
def batch_feasible(frac_batch, lattice, shifts, need):
    """For each arrangement: True iff every contact distance is at least ``need[i, j]``."""
    out = np.ones(frac_batch.shape[0], dtype=np.bool_)
    for b in range(frac_batch.shape[0]):
        d = closest_contacts(frac_batch[b], lattice, shifts)
        n = d.shape[0]
        for i in range(n):
            for j in range(i, n):
                if d[i, j] < need[i, j]:
                    out[b] = False
                    break
            if not out[b]:
                break
    return out
