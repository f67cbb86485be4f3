"""Fixed-cell relaxation by steepest descent with a backtracking line search."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .energy import EnergyReport, PairTables, depth_energy, energy_and_gradient
from . import _kernels
from .lattice import _offsets, perpendicular_widths
from .model import ForceField, Structure

GUARDS = ("barrier", "hard_sphere", "none")
FACES = ("adaptive", "project", "wrap")
# largest fractional coordinate an ion can be pushed to against the upper face
_UPPER = 1.0 - 1e-12


@dataclass(frozen=True)
class RelaxSettings:
    depth: int = 2
    max_iters: int = 2000
    grad_tol: float = 1e-3  # eV/A
    initial_step: float = 0.1  # A, largest single-ion displacement per step
    backtrack_factor: float = 0.5
    armijo_c: float = 1e-4
    report_depth: int = 6
    min_step: float = 1e-10  # A
    guard: str = "barrier"
    faces: str = "adaptive"

    def __post_init__(self):
        if self.depth < 1 or self.report_depth < 1:
            raise ValueError("depths must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.grad_tol > 0 and self.initial_step > 0 and self.min_step > 0):
            raise ValueError("grad_tol, initial_step and min_step must be positive")
        if not (0 < self.backtrack_factor < 1 and 0 < self.armijo_c < 1):
            raise ValueError("backtrack_factor and armijo_c must lie in (0, 1)")
        if self.guard not in GUARDS:
            raise ValueError(f"guard must be one of {GUARDS}")
        if self.faces not in FACES:
            raise ValueError(f"faces must be one of {FACES}")


@dataclass
class RelaxResult:
    structure: Structure
    energy: EnergyReport  # at report_depth
    iterations: int
    converged: bool
    energy_trace: list = field(default_factory=list)  # at the relaxation depth
    max_gradient: float = float("nan")

    @property
    def final_energy(self) -> float:
        return self.energy_trace[-1]


def pair_barrier(q_product: float, A: float, rho: float, C: float, d_max: float = 5.0) -> float:
    """Position of the innermost local maximum of a single pair's energy, or 0 if there is none.

    Inside that distance the pair falls into the unphysical well at d -> 0
    (large C or a Coulomb attraction beating the exponential wall).
    """
    d = np.linspace(1e-3, d_max, 50_001)
    with np.errstate(over="ignore"):
        phi = q_product / d + A * np.exp(-d / rho) - C / d**6
    rising = np.diff(phi) > 0
    peaks = np.flatnonzero(rising[:-1] & ~rising[1:])
    return float(d[peaks[0] + 1]) if len(peaks) else 0.0


@lru_cache(maxsize=256)
def _barrier_cached(q_product: float, A: float, rho: float, C: float) -> float:
    return pair_barrier(q_product, A, rho, C)


def barrier_table(s: Structure, ff: ForceField) -> np.ndarray:
    """Site-by-site barrier distances (A) for ``s``."""
    t = PairTables(s, ff)
    out = np.zeros((s.n, s.n))
    for i in range(s.n):
        for j in range(s.n):
            out[i, j] = _barrier_cached(float(t.qq[i, j]), float(t.A[i, j]), float(1 / t.inv_rho[i, j]), float(t.C[i, j]))
    return out


def _min_distance_table(s: Structure, ff: ForceField, guard: str) -> np.ndarray | None:
    if guard == "none":
        return None
    if guard == "hard_sphere":
        r = s.radii
        return r[:, None] + r[None, :] - 1e-9
    return barrier_table(s, ff)


def _best_hop(s, near, ff, depth, tables, energy):
    """Push one ion close to a face onto the opposite face if that lowers the energy.

    The ion moves by less than one line-search step; mostly what changes is
    which cell copy counts as the original.
    """
    best = None
    for i, dim in zip(*np.nonzero(near)):
        frac = np.array(s.frac)
        frac[i, dim] = _UPPER if frac[i, dim] < 0.5 else 0.0
        trial = s.with_frac(frac)
        e, g = energy_and_gradient(trial, ff, depth, tables=tables)
        if e < energy and (best is None or e < best[1]):
            best = (trial, e, g)
    return best


def _recentered(frac: np.ndarray) -> np.ndarray:
    """Rigidly shift all ions so that along each axis the widest empty gap straddles the cell face."""
    out = np.array(frac)
    for d in range(3):
        c = np.sort(frac[:, d])
        gaps = np.diff(np.append(c, c[0] + 1.0))
        i = int(np.argmax(gaps))
        out[:, d] = np.mod(frac[:, d] - (c[i] + gaps[i] / 2), 1.0)
    return np.minimum(out, _UPPER)


def relax(s: Structure, ff: ForceField, settings: RelaxSettings = RelaxSettings()) -> RelaxResult:
    """Move ions downhill on the depth-k surface until the largest gradient component is below ``grad_tol``.

    The cell is never changed and every accepted step satisfies the Armijo
    condition, so the energy trace never increases.

    The depth-k energy jumps when an ion crosses a cell face. With
    ``faces="project"`` ions are held inside the cell: a component pushing an
    ion through a face is dropped and the ion slides along it. ``"adaptive"``
    does the same but also lets an ion within ``initial_step`` of a face jump
    onto the opposite face whenever that lowers the energy, and when descent
    stalls tries a rigid shift that moves the ions away from the faces. With ``faces="wrap"`` ions
    are wrapped freely and a crossing survives only if the step still passes
    the line search.

    ``guard`` rejects trial steps that bring two ions closer than a minimum
    distance: the innermost maximum of their pair energy (``"barrier"``), the
    sum of hard-sphere radii (``"hard_sphere"``), or nothing (``"none"``). Some
    Buckingham pairs diverge to minus infinity at short range, so without a
    guard a relaxation can collapse.

    The search stops when the gradient left after dropping blocked components
    is below ``grad_tol``; ``converged`` reports whether the full gradient is.
    If no step down to ``min_step`` is acceptable the best structure so far is
    returned.
    """
    tables = PairTables(s, ff)
    lat = s.lattice
    inv_lat = np.linalg.inv(lat)
    min_dist = _min_distance_table(s, ff, settings.guard)
    project = settings.faces != "wrap"
    # fractional distance from a face within which an ion may hop across it
    hop_reach = settings.initial_step / perpendicular_widths(lat)

    def pinned(frac, grad):
        """Components pushing an ion through the face it sits on."""
        d_frac = -grad @ inv_lat.T
        return ((frac <= 0.0) & (d_frac < 0)) | ((frac >= _UPPER) & (d_frac > 0)), d_frac

    shell = np.ascontiguousarray(_offsets(1) @ lat.T)

    def contacts(frac):
        return _kernels.closest_contacts(np.ascontiguousarray(frac), lat, shell)

    def guarded(trial, d_now):
        if min_dist is None:
            return True
        d = contacts(trial.frac)
        return not np.any((d < min_dist) & (d < d_now))

    def try_hop(d_frac=None):
        """Face hop for ions near a face; with ``d_frac`` only for those heading into it."""
        if settings.faces != "adaptive":
            return None
        low, high = current.frac <= hop_reach, current.frac >= 1.0 - hop_reach
        if d_frac is not None:
            low, high = low & (d_frac < 0), high & (d_frac > 0)
        near = low | high
        return _best_hop(current, near, ff, settings.depth, tables, energy) if near.any() else None

    def try_recenter():
        if settings.faces != "adaptive":
            return None
        trial = current.with_frac(_recentered(current.frac))
        e, g = energy_and_gradient(trial, ff, settings.depth, tables=tables)
        return (trial, e, g) if e < energy else None

    current = s
    energy, grad = energy_and_gradient(current, ff, settings.depth, tables=tables)
    trace = [energy]
    step = settings.initial_step
    iterations = 0
    while iterations < settings.max_iters:
        blocked, d_frac = pinned(current.frac, grad)
        hop = try_hop(d_frac)
        if hop is not None:
            iterations += 1
            current, energy, grad = hop
            trace.append(energy)
            continue
        if project:
            d_frac[blocked] = 0.0
        move = d_frac @ lat.T
        mmax = float(np.abs(move).max())
        accepted = None
        if mmax > settings.grad_tol:
            direction = move / mmax
            d_now = contacts(current.frac) if min_dist is not None else None
            trial_step = min(2.0 * step, settings.initial_step)
            while trial_step >= settings.min_step:
                frac = current.frac + (trial_step * direction) @ inv_lat.T
                if project:
                    frac = np.clip(frac, 0.0, _UPPER)
                trial = current.with_frac(frac)
                if guarded(trial, d_now):
                    e_new, g_new = energy_and_gradient(trial, ff, settings.depth, tables=tables)
                    shift = (frac - current.frac) @ lat.T
                    if e_new <= energy + settings.armijo_c * float(np.sum(grad * shift)):
                        accepted = (trial, e_new, g_new)
                        step = trial_step
                        break
                trial_step *= settings.backtrack_factor
        if accepted is None:
            # descent is stuck; face hops and a rigid recentering are the last resort
            accepted = try_hop() or try_recenter()
            if accepted is None:
                break
        assert accepted[1] <= energy, "relaxation step raised the energy"
        iterations += 1
        current, energy, grad = accepted
        trace.append(energy)
    gmax = float(np.abs(grad).max())
    report = depth_energy(current, ff, settings.report_depth)
    return RelaxResult(current, report, iterations, gmax <= settings.grad_tol, trace, gmax)
