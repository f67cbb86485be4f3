"""Basin hopping, with and without an axes local search before each relaxation."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import asdict, dataclass, field, replace
from typing import Callable

import numpy as np

from .energy import depth_energy
from .lattice import feasible_mask, random_feasible
from .localsearch import NeighborhoodSpec, local_search
from .model import Composition, ForceField, UnitCell
from .relax import RelaxSettings, relax

MODES = ("basin_hopping", "axes_bh")
CSV_FIELDS = (
    "iteration",
    "structure_index",
    "start_energy",
    "local_search_energy",
    "local_search_steps",
    "relaxed_energy",
    "relax_iterations",
    "relax_converged",
    "accepted",
    "best_energy",
    "relaxations",
)


@dataclass(frozen=True)
class SearchSettings:
    """Search parameters. Energies are totals in eV at the relaxation depth."""

    mode: str = "basin_hopping"
    seed: int = 0
    patience: int = 10
    max_relaxations: int = 100
    neighborhood: NeighborhoodSpec | None = None
    relax: RelaxSettings = RelaxSettings()
    k_report: int = 6
    temperature: float | None = None  # eV; None keeps strict improvement
    perturb_incumbent: bool = False
    perturb_amplitude: float = 0.5  # A
    target_energy: float | None = None
    max_local_steps: int = 10_000
    max_attempts: int = 100_000

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.patience < 1 or self.max_relaxations < 1:
            raise ValueError("patience and max_relaxations must be >= 1")
        if self.k_report < 1:
            raise ValueError("k_report must be >= 1")
        if self.mode == "axes_bh" and (self.neighborhood is None or self.neighborhood.kind != "axes"):
            raise ValueError("axes_bh needs an axes neighborhood")
        if self.temperature is not None and not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if not self.perturb_amplitude > 0:
            raise ValueError("perturb_amplitude must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["neighborhood"] = None if self.neighborhood is None else asdict(self.neighborhood)
        return d


@dataclass(frozen=True)
class IterationRecord:
    iteration: int  # 1-based relaxation index
    structure_index: int  # how many start structures have been drawn so far
    start_energy: float
    local_search_energy: float | None
    local_search_steps: int
    relaxed_energy: float
    relax_iterations: int
    relax_converged: bool
    accepted: bool
    best_energy: float
    relaxations: int


@dataclass
class RunRecord:
    mode: str
    seed: int
    settings: dict
    iterations: list = field(default_factory=list)
    relaxations: int = 0
    local_search_steps: int = 0
    best_energy: float = math.inf
    best_report_energy: float | None = None  # at k_report
    best_structure: dict | None = None
    stop_reason: str = ""
    n_sites: int = 0
    relax_traces: list = field(default_factory=list)
    local_search_traces: list = field(default_factory=list)

    @property
    def best_trace(self) -> list:
        return [it.best_energy for it in self.iterations]

    def relaxations_to_reach(self, threshold: float) -> int | None:
        """Relaxations used until the incumbent first got to ``threshold`` or below."""
        for it in self.iterations:
            if it.best_energy <= threshold:
                return it.relaxations
        return None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["iterations"] = [asdict(it) for it in self.iterations]
        return d

    def to_json(self) -> str:
        from .io import dumps

        return dumps(self.to_dict())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
        w.writeheader()
        for it in self.iterations:
            w.writerow({k: _csv_value(v) for k, v in asdict(it).items()})
        return buf.getvalue()


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _perturb(s, amplitude, rng, attempts):
    """Displace every ion uniformly inside a ball of radius ``amplitude``; None if nothing feasible turns up."""
    inv = np.linalg.inv(s.lattice)
    for _ in range(attempts):
        v = rng.normal(size=(s.n, 3))
        v *= (amplitude * rng.random((s.n, 1)) ** (1 / 3)) / np.linalg.norm(v, axis=1, keepdims=True)
        frac = s.frac + v @ inv.T
        if feasible_mask(np.mod(frac, 1.0)[None], s.lattice, s.radii)[0]:
            return s.with_frac(frac)
    return None


def _run(
    cell: UnitCell,
    composition: Composition,
    radii: dict | None,
    ff: ForceField,
    settings: SearchSettings,
    local: Callable | None,
) -> RunRecord:
    rng = np.random.default_rng(settings.seed)
    accept_rng = np.random.default_rng([settings.seed, 1])
    relax_settings = replace(settings.relax, report_depth=settings.k_report)
    k = relax_settings.depth
    record = RunRecord(settings.mode, settings.seed, settings.to_dict())
    current = None  # structure and energy of the Markov-chain state
    since_improvement = 0
    drawn = 0
    while True:
        start = None
        if settings.perturb_incumbent and current is not None:
            start = _perturb(current[0], settings.perturb_amplitude, rng, 1000)
        if start is None:
            start = random_feasible(cell, composition, radii, rng, settings.max_attempts)
        drawn += 1
        record.n_sites = start.n
        start_energy = depth_energy(start, ff, k).total
        ls_energy, ls_steps = None, 0
        if local is not None:
            ls = local(start, settings.neighborhood, ff, k, settings.max_local_steps)
            record.local_search_traces.append(list(ls.energy_trace))
            start, ls_energy, ls_steps = ls.structure, ls.energy, ls.steps
            record.local_search_steps += ls_steps
        r = relax(start, ff, relax_settings)
        record.relaxations += 1
        record.relax_traces.append(list(r.energy_trace))
        e = r.final_energy
        improved = e < record.best_energy
        if improved:
            record.best_energy = e
            record.best_report_energy = r.energy.total
            from .io import structure_to_dict

            record.best_structure = structure_to_dict(r.structure)
            since_improvement = 0
        else:
            since_improvement += 1
        if current is None or e < current[1]:
            accepted = True
        elif settings.temperature is not None:
            accepted = bool(accept_rng.random() < math.exp(-(e - current[1]) / settings.temperature))
        else:
            accepted = False
        if accepted:
            current = (r.structure, e)
        record.iterations.append(
            IterationRecord(
                iteration=record.relaxations,
                structure_index=drawn,
                start_energy=start_energy,
                local_search_energy=ls_energy,
                local_search_steps=ls_steps,
                relaxed_energy=e,
                relax_iterations=r.iterations,
                relax_converged=r.converged,
                accepted=accepted,
                best_energy=record.best_energy,
                relaxations=record.relaxations,
            )
        )
        if settings.target_energy is not None and record.best_energy <= settings.target_energy:
            record.stop_reason = "target"
            break
        if since_improvement >= settings.patience:
            record.stop_reason = "patience"
            break
        if record.relaxations >= settings.max_relaxations:
            record.stop_reason = "max_relaxations"
            break
    return record


def basin_hopping(
    cell: UnitCell,
    composition: Composition,
    radii: dict | None,
    ff: ForceField,
    settings: SearchSettings,
) -> RunRecord:
    """Draw a random feasible structure, relax it, keep it if it beats the incumbent; repeat.

    Stops after ``patience`` relaxations in a row without improvement, after
    ``max_relaxations`` relaxations, or when ``target_energy`` is reached.
    """
    if settings.mode != "basin_hopping":
        settings = replace(settings, mode="basin_hopping")
    return _run(cell, composition, radii, ff, settings, None)


def axes_bh(
    cell: UnitCell,
    composition: Composition,
    radii: dict | None,
    ff: ForceField,
    settings: SearchSettings,
    local_search_fn: Callable = local_search,
) -> RunRecord:
    """Basin hopping with a greedy axes-neighborhood descent between drawing and relaxing.

    ``local_search_fn`` has the signature of :func:`local_search`.
    """
    if settings.mode != "axes_bh":
        settings = replace(settings, mode="axes_bh")
    return _run(cell, composition, radii, ff, settings, local_search_fn)


def run_search(cell, composition, radii, ff, settings: SearchSettings) -> RunRecord:
    if settings.mode == "axes_bh":
        return axes_bh(cell, composition, radii, ff, settings)
    return basin_hopping(cell, composition, radii, ff, settings)


def lower_envelope(records: list[RunRecord], length: int | None = None) -> list[float]:
    """Lowest incumbent energy over all runs after each relaxation count.

    A run that stopped early keeps its final best for the remaining counts.
    """
    if not records:
        raise ValueError("no records")
    length = length or max(len(r.iterations) for r in records)
    env = [math.inf] * length
    for r in records:
        trace = r.best_trace
        for i in range(length):
            v = trace[min(i, len(trace) - 1)] if trace else math.inf
            env[i] = min(env[i], v)
    return env


@dataclass(frozen=True)
class Summary:
    mean: float
    median: float
    stdev: float

    @classmethod
    def of(cls, values) -> "Summary":
        values = [float(v) for v in values]
        sd = statistics.stdev(values) if len(values) > 1 else 0.0
        return cls(statistics.fmean(values), statistics.median(values), sd)


@dataclass(frozen=True)
class RunStats:
    runs: int
    relaxations: Summary
    local_search_steps: Summary
    best_energy: Summary
    envelope: tuple

    def to_dict(self) -> dict:
        return asdict(self)


def run_stats(records: list[RunRecord]) -> RunStats:
    if not records:
        raise ValueError("run_stats needs at least one record")
    return RunStats(
        runs=len(records),
        relaxations=Summary.of(r.relaxations for r in records),
        local_search_steps=Summary.of(r.local_search_steps for r in records),
        best_energy=Summary.of(r.best_energy for r in records),
        envelope=tuple(lower_envelope(records)),
    )
