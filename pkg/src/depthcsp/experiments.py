"""Seeded experiment drivers behind ``depthcsp experiment``.

Each driver returns a list of per-row dicts and a list of summary dicts; the
CLI writes both as CSV. All randomness comes from the seed argument.
"""

from __future__ import annotations

import csv
import statistics
from dataclasses import replace
from pathlib import Path

import numpy as np

from .energy import TIE_TOLERANCE, depth_energy
from .lattice import random_feasible
from .localsearch import NeighborhoodSpec, local_search
from .model import Composition, ForceField, UnitCell
from .search import SearchSettings, axes_bh, basin_hopping, lower_envelope, run_stats

EXPERIMENTS = ("depth_convergence", "ordering", "neighborhood_compare", "search_compare")


def _structures(cell, composition, count, seed, radii=None):
    rng = np.random.default_rng(seed)
    return [random_feasible(cell, composition, radii, rng) for _ in range(count)]


def depth_convergence(
    cell: UnitCell,
    composition: Composition,
    ff: ForceField,
    count: int = 100,
    k_values=range(1, 7),
    k_ref: int = 10,
    seed: int = 0,
    radii=None,
):
    """Mean per-ion |E_k - E_ref| over random feasible structures."""
    k_values = list(k_values)
    rows = []
    for idx, s in enumerate(_structures(cell, composition, count, seed, radii)):
        ref = depth_energy(s, ff, k_ref).per_ion
        for k in k_values:
            e = depth_energy(s, ff, k).per_ion
            rows.append({"structure": idx, "k": k, "per_ion": e, "per_ion_ref": ref, "abs_diff": abs(e - ref)})
    summary = []
    for k in k_values:
        diffs = [r["abs_diff"] for r in rows if r["k"] == k]
        summary.append(
            {
                "k": k,
                "k_ref": k_ref,
                "structures": len(diffs),
                "mean_abs_diff": statistics.fmean(diffs),
                "stdev_abs_diff": statistics.stdev(diffs) if len(diffs) > 1 else 0.0,
            }
        )
    return rows, summary


def _verdict(ea, eb, tol=TIE_TOLERANCE):
    if abs(ea - eb) <= tol:
        return "tie"
    return "A_lower" if ea < eb else "B_lower"


def ordering(
    cell: UnitCell,
    composition: Composition,
    ff: ForceField,
    pairs: int = 500,
    k_low: int = 1,
    k_high: int = 6,
    seed: int = 0,
    radii=None,
):
    """How often the depth-k_low and depth-k_high energies rank random pairs the same way."""
    structures = _structures(cell, composition, 2 * pairs, seed, radii)
    rows = []
    for p in range(pairs):
        a, b = structures[2 * p], structures[2 * p + 1]
        ea_lo, eb_lo = depth_energy(a, ff, k_low).total, depth_energy(b, ff, k_low).total
        ea_hi, eb_hi = depth_energy(a, ff, k_high).total, depth_energy(b, ff, k_high).total
        v_lo, v_hi = _verdict(ea_lo, eb_lo), _verdict(ea_hi, eb_hi)
        rows.append(
            {
                "pair": p,
                "energy_a_low": ea_lo,
                "energy_b_low": eb_lo,
                "energy_a_high": ea_hi,
                "energy_b_high": eb_hi,
                "verdict_low": v_lo,
                "verdict_high": v_hi,
                "agree": int(v_lo == v_hi),
            }
        )
    agree = sum(r["agree"] for r in rows)
    summary = [{"pairs": pairs, "k_low": k_low, "k_high": k_high, "agree": agree, "agreement_pct": 100.0 * agree / pairs}]
    return rows, summary


def parse_neighborhood(text: str, delta: float | None) -> NeighborhoodSpec:
    """``axes``, ``2-ion-swap`` (k-ion swap) or ``1-swap`` (k-swap) style labels."""
    text = text.strip()
    if text == "axes":
        return NeighborhoodSpec("axes", delta=delta)
    for suffix, kind in (("-ion-swap", "k_ion_swap"), ("-swap", "k_swap")):
        if text.endswith(suffix):
            k = int(text[: -len(suffix)])
            return NeighborhoodSpec(kind, k=k, delta=delta if kind == "k_swap" else None)
    raise ValueError(f"unknown neighborhood {text!r}")


def neighborhood_compare(
    cell: UnitCell,
    composition: Composition,
    ff: ForceField,
    specs: list[NeighborhoodSpec],
    starts: int = 50,
    k_energy: int = 1,
    seed: int = 0,
    radii=None,
    max_steps: int = 10_000,
):
    """Energy drop and step count of a greedy descent to a combinatorial minimum, per neighborhood."""
    rows = []
    for idx, s in enumerate(_structures(cell, composition, starts, seed, radii)):
        for spec in specs:
            ls = local_search(s, spec, ff, k_energy, max_steps)
            rows.append(
                {
                    "start": idx,
                    "neighborhood": spec.label,
                    "start_energy": ls.energy_trace[0],
                    "final_energy": ls.energy,
                    "drop": ls.energy_trace[0] - ls.energy,
                    "steps": ls.steps,
                }
            )
    summary = []
    for spec in specs:
        mine = [r for r in rows if r["neighborhood"] == spec.label]
        drops = [r["drop"] for r in mine]
        summary.append(
            {
                "neighborhood": spec.label,
                "starts": len(mine),
                "mean_drop": statistics.fmean(drops),
                "stdev_drop": statistics.stdev(drops) if len(drops) > 1 else 0.0,
                "mean_steps": statistics.fmean(r["steps"] for r in mine),
            }
        )
    return rows, summary


def search_compare(
    cell: UnitCell,
    composition: Composition,
    ff: ForceField,
    settings: SearchSettings,
    runs: int = 20,
    seed: int = 0,
    radii=None,
    threshold: float | None = None,
):
    """Seed-paired basin hopping and axes basin hopping runs.

    Run ``i`` of both modes uses seed ``seed + i`` and so relaxes the same
    sequence of random starts. ``threshold`` (total eV at the relaxation
    depth) is the energy a run must reach; a pair counts as a win for the
    axes variant when it reaches it with no more relaxations than plain
    basin hopping, or when only the axes variant reaches it.
    """
    rows, records = [], {"basin_hopping": [], "axes_bh": []}
    for i in range(runs):
        per = {}
        for mode, fn in (("basin_hopping", basin_hopping), ("axes_bh", axes_bh)):
            rec = fn(cell, composition, radii, ff, replace(settings, mode=mode, seed=seed + i))
            records[mode].append(rec)
            per[mode] = rec
        bh, ax = per["basin_hopping"], per["axes_bh"]
        row = {
            "run": i,
            "seed": seed + i,
            "bh_relaxations": bh.relaxations,
            "axes_relaxations": ax.relaxations,
            "bh_best": bh.best_energy,
            "axes_best": ax.best_energy,
            "axes_local_search_steps": ax.local_search_steps,
        }
        if threshold is not None:
            bh_hit, ax_hit = bh.relaxations_to_reach(threshold), ax.relaxations_to_reach(threshold)
            row["bh_relaxations_to_threshold"] = "" if bh_hit is None else bh_hit
            row["axes_relaxations_to_threshold"] = "" if ax_hit is None else ax_hit
            row["axes_win"] = int(ax_hit is not None and (bh_hit is None or ax_hit <= bh_hit))
        rows.append(row)
    summary = []
    for mode, recs in records.items():
        st = run_stats(recs)
        entry = {
            "mode": mode,
            "runs": st.runs,
            "mean_relaxations": st.relaxations.mean,
            "median_relaxations": st.relaxations.median,
            "stdev_relaxations": st.relaxations.stdev,
            "mean_local_search_steps": st.local_search_steps.mean,
            "mean_best_energy": st.best_energy.mean,
            "min_best_energy": min(r.best_energy for r in recs),
        }
        if threshold is not None:
            entry["reached_threshold"] = sum(r.relaxations_to_reach(threshold) is not None for r in recs)
        summary.append(entry)
    if threshold is not None:
        wins = sum(r["axes_win"] for r in rows)
        summary.append({"mode": "paired", "runs": runs, "axes_wins": wins, "axes_win_pct": 100.0 * wins / runs})
    envelopes = {mode: lower_envelope(recs) for mode, recs in records.items()}
    return rows, summary, envelopes, records


def write_csv(rows: list[dict], path) -> None:
    path = Path(path)
    fields = []
    for r in rows:
        for k in r:
            if k not in fields:
                fields.append(k)
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})


def read_csv(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
