"""Depth-k periodic lattice energies and search for ionic crystal structures."""

from .energy import (
    EnergyReport,
    Ordering,
    SingularityError,
    batch_energy,
    depth_energy,
    depth_energy_gradient,
    energy_and_gradient,
    energy_ordering,
)
from .io import (
    SchemaError,
    bundled_problem,
    bundled_structure,
    default_forcefield,
    load_forcefield,
    load_problem,
    load_structure,
    save_structure,
)
from .lattice import GenerationError, distance, is_feasible, random_feasible
from .localsearch import NeighborhoodSpec, enumerate_neighbors, greedy_step, local_search
from .model import (
    Buckingham,
    Composition,
    ForceField,
    Species,
    Structure,
    UnitCell,
    build_structure,
    validate_composition,
)
from .relax import RelaxResult, RelaxSettings, relax
from .search import RunRecord, SearchSettings, axes_bh, basin_hopping, lower_envelope, run_stats

__version__ = "0.1.0"

__all__ = [
    "Buckingham",
    "Composition",
    "EnergyReport",
    "ForceField",
    "GenerationError",
    "NeighborhoodSpec",
    "Ordering",
    "RelaxResult",
    "RelaxSettings",
    "RunRecord",
    "SchemaError",
    "SearchSettings",
    "SingularityError",
    "Species",
    "Structure",
    "UnitCell",
    "axes_bh",
    "basin_hopping",
    "batch_energy",
    "build_structure",
    "bundled_problem",
    "bundled_structure",
    "default_forcefield",
    "depth_energy",
    "depth_energy_gradient",
    "distance",
    "energy_and_gradient",
    "energy_ordering",
    "enumerate_neighbors",
    "greedy_step",
    "is_feasible",
    "load_forcefield",
    "load_problem",
    "load_structure",
    "local_search",
    "lower_envelope",
    "random_feasible",
    "relax",
    "run_stats",
    "save_structure",
    "validate_composition",
]
