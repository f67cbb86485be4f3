"""Buckingham-Coulomb lattice energy summed over k layers of periodic images.

The central unit cell is surrounded by ``k`` layers of copies, giving a block
of ``(2k+1)**3`` cells. Every ion of the central cell interacts with every
other ion of the block; the double sum runs over ordered pairs, so a pair
inside the central cell appears once from either end. Pass
``conventional=True`` for the usual half-counted lattice energy.

The block is anchored on the unit cell (``anchor="cell"``), so the result
depends on where each ion sits in [0, 1): it is smooth while ions stay inside
the cell and jumps when one crosses a face. ``anchor="minimum_image"``
instead centres a block on the nearest copy of each partner, which makes the
energy depend on relative positions only; when a fractional separation is
exactly one half, both equally-near blocks are included with weight 1/2.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np

from .lattice import _offsets, minimum_image
from .model import ForceField, Structure

SINGULAR_DISTANCE = 1e-9
TIE_TOLERANCE = 1e-9
# fractional distance from +-1/2 treated as a tie between two images
HALF_TOL = 1e-10
# max elements per (entries x images) work array
_CHUNK = 1_000_000


class SingularityError(ValueError):
    """Two ions (or an ion and an image) coincide."""


@dataclass(frozen=True)
class EnergyReport:
    total: float
    per_ion: float
    depth: int
    coulomb_part: float
    buckingham_part: float
    n: int

    def to_dict(self) -> dict:
        return asdict(self)


def coulomb_pair(q_i: float, q_j: float, d: float, constant: float = 1.0) -> float:
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    return constant * q_i * q_j / d


def buckingham_pair(coeffs, d: float) -> float:
    A, rho, C = coeffs
    if not d > 0:
        raise ValueError(f"distance must be positive, got {d}")
    if not rho > 0:
        raise ValueError(f"rho must be positive, got {rho}")
    return A * np.exp(-d / rho) - C / d**6


class PairTables:
    """Site-by-site charge products and Buckingham coefficients for one set of site species."""

    def __init__(self, s: Structure, ff: ForceField):
        A, rho, C = ff.tables(s.species)
        sp = s.site_species
        q = s.charges
        self.qq = ff.coulomb_constant * np.outer(q, q)
        self.A = A[np.ix_(sp, sp)]
        self.inv_rho = 1.0 / rho[np.ix_(sp, sp)]
        self.C = C[np.ix_(sp, sp)]
        self.has_buckingham = bool(np.any(self.A) or np.any(self.C))
        self._self_cache = {}

    def self_parts(self, lattice: np.ndarray, k: int) -> tuple[float, float]:
        key = (k, lattice.tobytes())
        if key not in self._self_cache:
            self._self_cache[key] = _self_parts(lattice, self, k)
        return self._self_cache[key]


@dataclass
class _Entries:
    """Flattened (item, i, j, block centre, weight) records."""

    item: np.ndarray
    i: np.ndarray
    j: np.ndarray
    centre: np.ndarray  # fractional
    weight: np.ndarray


def _check_depth(k: int) -> int:
    if int(k) != k or k < 1:
        raise ValueError(f"depth must be an integer >= 1, got {k}")
    return int(k)


def _entries(frac: np.ndarray, anchor: str) -> _Entries:
    """Block centres for the pairs i <= j of every arrangement in a (B, n, 3) batch.

    The image offsets are symmetric, so (j, i) sees the same distances as
    (i, j); unordered pairs carry weight 2 and stand for both orders.
    """
    B, n, _ = frac.shape
    iu, ju = np.triu_indices(n)
    diff = frac[:, ju, :] - frac[:, iu, :]
    item = np.repeat(np.arange(B), len(iu))
    i = np.tile(iu, B)
    j = np.tile(ju, B)
    weight = np.where(i == j, 1.0, 2.0)
    if anchor == "cell":
        return _Entries(item, i, j, diff.reshape(-1, 3), weight)
    if anchor != "minimum_image":
        raise ValueError(f"unknown anchor {anchor!r}")
    centre = minimum_image(diff).reshape(-1, 3)
    on_half = np.abs(np.abs(centre) - 0.5) < HALF_TOL
    tied = np.flatnonzero(on_half.any(axis=1))
    if len(tied) == 0:
        return _Entries(item, i, j, centre, weight)
    # split each tied pair over the 2**b equally-near blocks
    weight[tied] *= 0.5 ** on_half[tied].sum(axis=1)
    extra = []
    for mask in range(1, 8):
        flip = np.array([(mask >> c) & 1 for c in range(3)], dtype=bool)
        rows = tied[np.all(on_half[tied][:, flip], axis=1)]
        if len(rows):
            c = centre[rows].copy()
            c[:, flip] -= np.sign(c[:, flip])
            extra.append((rows, c))
    rows = np.concatenate([r for r, _ in extra])
    return _Entries(
        np.concatenate([item, item[rows]]),
        np.concatenate([i, i[rows]]),
        np.concatenate([j, j[rows]]),
        np.concatenate([centre] + [c for _, c in extra]),
        np.concatenate([weight, weight[rows]]),
    )


def _image_chunks(e: _Entries, lattice: np.ndarray, k: int):
    """Yield (rows, cartesian vectors to images, distances) with self-overlaps masked."""
    offsets = _offsets(k)
    shifts = offsets @ lattice.T
    zero = (len(offsets) - 1) // 2
    cart = e.centre @ lattice.T
    self_rows = e.i == e.j
    step = max(1, _CHUNK // len(offsets))
    for start in range(0, len(cart), step):
        rows = slice(start, start + step)
        v = cart[rows, None, :] + shifts
        d = np.sqrt(np.einsum("emx,emx->em", v, v))
        d[self_rows[rows], zero] = np.inf
        if np.any(d < SINGULAR_DISTANCE):
            raise SingularityError("ions closer than 1e-9 A; the energy is singular")
        yield rows, v, d


def _coefficients(e: _Entries, t: PairTables):
    qq = t.qq[e.i, e.j] * e.weight
    A = t.A[e.i, e.j] * e.weight
    inv_rho = t.inv_rho[e.i, e.j]
    C = t.C[e.i, e.j] * e.weight
    short = (A != 0) | (C != 0)
    return qq, A, inv_rho, C, short


def _energy_parts(frac: np.ndarray, lattice: np.ndarray, t: PairTables, k: int, anchor: str):
    """Per-arrangement Coulomb and Buckingham sums for a (B, n, 3) batch."""
    e = _entries(frac, anchor)
    qq, A, inv_rho, C, short = _coefficients(e, t)
    coul = np.zeros(len(e.item))
    buck = np.zeros(len(e.item))
    for rows, _, d in _image_chunks(e, lattice, k):
        inv = 1.0 / d
        coul[rows] = qq[rows] * inv.sum(axis=1)
        sel = np.flatnonzero(short[rows])
        if len(sel):
            ds = d[sel]
            idx = sel + rows.start
            inv3 = inv[sel] ** 3
            rep = np.exp(-ds * inv_rho[idx, None]).sum(axis=1)
            buck[idx] = A[idx] * rep - C[idx] * (inv3 * inv3).sum(axis=1)
    B = frac.shape[0]
    return np.bincount(e.item, coul, B), np.bincount(e.item, buck, B)


METHODS = ("compiled", "numpy")


def _check_method(method: str, anchor: str) -> bool:
    """True if the compiled kernel applies."""
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    if anchor not in ("cell", "minimum_image"):
        raise ValueError(f"unknown anchor {anchor!r}")
    return method == "compiled" and anchor == "cell"


def _self_parts(lattice: np.ndarray, t: PairTables, k: int) -> tuple[float, float]:
    """Coulomb and Buckingham interaction of every site with its own periodic copies."""
    shifts = _offsets(k) @ lattice.T
    d = np.linalg.norm(shifts, axis=1)
    d = d[d > 0]
    inv = 1.0 / d
    diag = np.diag_indices(len(t.qq))
    qq, A, inv_rho, C = t.qq[diag], t.A[diag], t.inv_rho[diag], t.C[diag]
    coul = float(np.sum(qq) * inv.sum())
    buck = float(np.sum(A[:, None] * np.exp(-d[None, :] * inv_rho[:, None])) - np.sum(C) * np.sum(inv**6))
    return coul, buck


def _compiled(frac, lattice, t: PairTables, k: int, want_grad: bool):
    from . import _kernels

    shifts = np.ascontiguousarray(_offsets(k) @ lattice.T)
    coul, buck, grad, ok = _kernels.pair_sum(
        np.ascontiguousarray(frac), np.ascontiguousarray(lattice), shifts, t.qq, t.A, t.inv_rho, t.C, want_grad
    )
    if not ok:
        raise SingularityError("ions closer than 1e-9 A; the energy is singular")
    self_coul, self_buck = t.self_parts(lattice, k)
    return coul + self_coul, buck + self_buck, grad


def depth_energy(
    s: Structure,
    ff: ForceField,
    k: int = 1,
    conventional: bool = False,
    anchor: str = "cell",
    method: str = "compiled",
) -> EnergyReport:
    """Total Buckingham-Coulomb energy over the depth-``k`` image block."""
    k = _check_depth(k)
    t = PairTables(s, ff)
    if _check_method(method, anchor):
        coul, buck, _ = _compiled(s.frac, s.lattice, t, k, False)
    else:
        c, b = _energy_parts(s.frac[None], s.lattice, t, k, anchor)
        coul, buck = float(c[0]), float(b[0])
    scale = 0.5 if conventional else 1.0
    coul, buck = coul * scale, buck * scale
    total = coul + buck
    return EnergyReport(total, total / s.n, k, coul, buck, s.n)


def batch_energy(
    s: Structure,
    ff: ForceField,
    frac_batch: np.ndarray,
    k: int = 1,
    conventional: bool = False,
    anchor: str = "cell",
    tables: PairTables | None = None,
    method: str = "compiled",
) -> np.ndarray:
    """Totals for many arrangements sharing ``s``'s cell and site species; (B, n, 3) -> (B,)."""
    k = _check_depth(k)
    frac_batch = np.asarray(frac_batch, dtype=float).reshape(-1, s.n, 3)
    t = tables or PairTables(s, ff)
    if _check_method(method, anchor):
        from . import _kernels

        shifts = np.ascontiguousarray(_offsets(k) @ s.lattice.T)
        out = _kernels.batch_pair_sum(
            np.ascontiguousarray(frac_batch), np.ascontiguousarray(s.lattice), shifts, t.qq, t.A, t.inv_rho, t.C
        )
        if np.isnan(out).any():
            raise SingularityError("ions closer than 1e-9 A; the energy is singular")
        out += sum(t.self_parts(s.lattice, k))
    else:
        step = max(1, 20 * _CHUNK // (s.n * s.n * len(_offsets(k))))
        out = np.empty(len(frac_batch))
        for start in range(0, len(frac_batch), step):
            coul, buck = _energy_parts(frac_batch[start : start + step], s.lattice, t, k, anchor)
            out[start : start + step] = coul + buck
    return out * (0.5 if conventional else 1.0)


def depth_energy_gradient(
    s: Structure,
    ff: ForceField,
    k: int = 1,
    conventional: bool = False,
    anchor: str = "cell",
    tables: PairTables | None = None,
    method: str = "compiled",
) -> np.ndarray:
    """Cartesian gradient dE/dr_i (eV/A), shape (n, 3).

    Each site drags all of its periodic copies along, so interactions of a
    site with its own images do not contribute.
    """
    return energy_and_gradient(s, ff, k, conventional, anchor, tables, method)[1]


def _numpy_energy_and_gradient(s, t, k, anchor):
    e = _entries(s.frac[None], anchor)
    keep = e.i != e.j
    e = _Entries(e.item[keep], e.i[keep], e.j[keep], e.centre[keep], e.weight[keep])
    qq, A, inv_rho, C, short = _coefficients(e, t)
    energy = 0.0
    force_sum = np.zeros((len(e.i), 3))
    for rows, v, d in _image_chunks(e, s.lattice, k):
        inv = 1.0 / d
        inv2 = inv * inv
        energy += float(np.sum(qq[rows, None] * inv))
        dphi = -qq[rows, None] * inv2
        sel = np.flatnonzero(short[rows])
        if len(sel):
            idx = sel + rows.start
            inv6 = inv2[sel] ** 3
            rep = np.exp(-d[sel] * inv_rho[idx, None]) * A[idx, None]
            energy += float(np.sum(rep - C[idx, None] * inv6))
            dphi[sel] += -rep * inv_rho[idx, None] + 6.0 * C[idx, None] * inv6 * inv[sel]
        force_sum[rows] = np.einsum("em,emx->ex", dphi * inv, v)
    grad = np.zeros((s.n, 3))
    # v points from i towards the image of j: moving i changes d by -v/d, moving j by +v/d
    np.add.at(grad, e.i, -force_sum)
    np.add.at(grad, e.j, force_sum)
    # self-image terms are constant; add them back for a consistent total
    return energy + sum(t.self_parts(s.lattice, k)), grad


def energy_and_gradient(
    s: Structure,
    ff: ForceField,
    k: int = 1,
    conventional: bool = False,
    anchor: str = "cell",
    tables: PairTables | None = None,
    method: str = "compiled",
) -> tuple[float, np.ndarray]:
    """Total energy and Cartesian gradient from a single pass over the image block."""
    k = _check_depth(k)
    t = tables or PairTables(s, ff)
    if _check_method(method, anchor):
        coul, buck, grad = _compiled(s.frac, s.lattice, t, k, True)
        energy = coul + buck
    else:
        energy, grad = _numpy_energy_and_gradient(s, t, k, anchor)
    scale = 0.5 if conventional else 1.0
    return energy * scale, grad * scale


class Ordering(str, enum.Enum):
    A_LOWER = "A_lower"
    B_LOWER = "B_lower"
    TIE = "tie"


def energy_ordering(sA: Structure, sB: Structure, ff: ForceField, k: int = 1, tol: float = TIE_TOLERANCE) -> Ordering:
    """Which of two arrangements of the same composition and cell is lower in depth-k energy."""
    if sA.cell != sB.cell or sA.species != sB.species or not np.array_equal(
        np.sort(sA.site_species), np.sort(sB.site_species)
    ):
        raise ValueError("structures must share cell and composition to be compared")
    eA = depth_energy(sA, ff, k).total
    eB = depth_energy(sB, ff, k).total
    if abs(eA - eB) <= tol:
        return Ordering.TIE
    return Ordering.A_LOWER if eA < eB else Ordering.B_LOWER
