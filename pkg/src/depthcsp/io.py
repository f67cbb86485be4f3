"""JSON files for structures, force fields and search problems.

Every loader reports schema problems as :class:`SchemaError` naming the
offending field (``sites[2].frac``) and, for malformed JSON, the byte offset.
"""

from __future__ import annotations

import json
import math
from importlib import resources
from pathlib import Path

from .model import Buckingham, Composition, ForceField, Species, Structure, UnitCell, COULOMB_CONSTANT


class SchemaError(ValueError):
    """A file does not parse or does not match the expected layout."""

    def __init__(self, source: str, message: str):
        super().__init__(f"{source}: {message}")
        self.source = source


def _parse(text: bytes | str, source: str):
    raw = text.encode() if isinstance(text, str) else text
    try:
        decoded = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise SchemaError(source, f"not valid UTF-8 at byte {e.start}") from None
    try:
        return json.loads(decoded)
    except json.JSONDecodeError as e:
        offset = len(decoded[: e.pos].encode("utf-8"))
        raise SchemaError(source, f"malformed JSON at byte {offset}: {e.msg}") from None


def read_json(path, source: str | None = None):
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise SchemaError(source or str(path), f"cannot read file ({e.strerror})") from None
    return _parse(data, source or str(path))


def dumps(obj) -> str:
    """Canonical formatting: sorted keys, two-space indent, shortest round-trip floats."""
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


class _Reader:
    def __init__(self, source: str):
        self.source = source

    def fail(self, where: str, message: str):
        raise SchemaError(self.source, f"field {where!r}: {message}")

    def obj(self, value, where):
        if not isinstance(value, dict):
            self.fail(where, "expected an object")
        return value

    def get(self, d, key, where):
        if key not in d:
            self.fail(f"{where}.{key}" if where else key, "missing")
        return d[key]

    def number(self, value, where):
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
            self.fail(where, f"expected a finite number, got {value!r}")
        return float(value)

    def integer(self, value, where):
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(where, f"expected an integer, got {value!r}")
        return value

    def string(self, value, where):
        if not isinstance(value, str) or not value:
            self.fail(where, f"expected a non-empty string, got {value!r}")
        return value

    def triple(self, value, where):
        if not isinstance(value, list) or len(value) != 3:
            self.fail(where, "expected a list of three numbers")
        return tuple(self.number(v, f"{where}[{i}]") for i, v in enumerate(value))

    def array(self, value, where):
        if not isinstance(value, list):
            self.fail(where, "expected a list")
        return value

    def build(self, where, factory, *args):
        try:
            return factory(*args)
        except ValueError as e:
            self.fail(where, str(e))


def _cell(r: _Reader, d, where="cell") -> UnitCell:
    d = r.obj(d, where)
    lengths = r.triple(r.get(d, "lengths", where), f"{where}.lengths")
    angles = r.triple(r.get(d, "angles_deg", where), f"{where}.angles_deg")
    cell = r.build(where, UnitCell, lengths, angles)
    from .lattice import lattice_matrix

    r.build(f"{where}.angles_deg", lattice_matrix, cell)
    return cell


def _species(r: _Reader, d, where) -> Species:
    d = r.obj(d, where)
    symbol = r.string(r.get(d, "symbol", where), f"{where}.symbol")
    charge = r.integer(r.get(d, "charge", where), f"{where}.charge")
    radius = r.number(r.get(d, "radius", where), f"{where}.radius")
    if radius < 0:
        r.fail(f"{where}.radius", f"must be non-negative, got {radius}")
    if charge == 0:
        r.fail(f"{where}.charge", "must be non-zero")
    return Species(symbol, charge, radius)


def _cell_json(cell: UnitCell) -> dict:
    return {"lengths": list(cell.lengths), "angles_deg": list(cell.angles)}


def _species_json(sp: Species) -> dict:
    return {"symbol": sp.symbol, "charge": sp.charge, "radius": sp.radius}


def structure_from_dict(data, source: str = "<structure>") -> Structure:
    r = _Reader(source)
    data = r.obj(data, "")
    cell = _cell(r, r.get(data, "cell", ""))
    species = tuple(_species(r, sp, f"species[{i}]") for i, sp in enumerate(r.array(r.get(data, "species", ""), "species")))
    if not species:
        r.fail("species", "needs at least one entry")
    symbols = [sp.symbol for sp in species]
    if len(set(symbols)) != len(symbols):
        r.fail("species", "symbols must be distinct")
    sites = r.array(r.get(data, "sites", ""), "sites")
    if not sites:
        r.fail("sites", "needs at least one site")
    index, frac = [], []
    for i, site in enumerate(sites):
        where = f"sites[{i}]"
        site = r.obj(site, where)
        k = r.integer(r.get(site, "species", where), f"{where}.species")
        if not 0 <= k < len(species):
            r.fail(f"{where}.species", f"index {k} out of range")
        index.append(k)
        frac.append(r.triple(r.get(site, "frac", where), f"{where}.frac"))
    return Structure(cell, species, index, frac)


def structure_to_dict(s: Structure) -> dict:
    return {
        "cell": _cell_json(s.cell),
        "species": [_species_json(sp) for sp in s.species],
        "sites": [{"species": int(k), "frac": [float(v) for v in f]} for k, f in zip(s.site_species, s.frac)],
    }


def load_structure(path) -> Structure:
    return structure_from_dict(read_json(path), str(path))


def save_structure(s: Structure, path) -> None:
    Path(path).write_text(dumps(structure_to_dict(s)))


def forcefield_from_dict(data, source: str = "<forcefield>") -> ForceField:
    r = _Reader(source)
    data = r.obj(data, "")
    kc = r.number(data.get("coulomb_constant", COULOMB_CONSTANT), "coulomb_constant")
    if not kc > 0:
        r.fail("coulomb_constant", "must be positive")
    pairs = {}
    for i, p in enumerate(r.array(r.get(data, "pairs", ""), "pairs")):
        where = f"pairs[{i}]"
        p = r.obj(p, where)
        a = r.string(r.get(p, "a", where), f"{where}.a")
        b = r.string(r.get(p, "b", where), f"{where}.b")
        A = r.number(r.get(p, "A_eV", where), f"{where}.A_eV")
        rho = r.number(r.get(p, "rho_ang", where), f"{where}.rho_ang")
        C = r.number(r.get(p, "C_eV_ang6", where), f"{where}.C_eV_ang6")
        for name, value, ok in (("A_eV", A, A >= 0), ("rho_ang", rho, rho > 0), ("C_eV_ang6", C, C >= 0)):
            if not ok:
                r.fail(f"{where}.{name}", f"out of range: {value}")
        params = r.build(where, Buckingham, A, rho, C)
        key = tuple(sorted((a, b)))
        if key in pairs:
            r.fail(where, f"pair {a}-{b} listed twice")
        pairs[key] = params
    return ForceField(pairs, kc)


def forcefield_to_dict(ff: ForceField) -> dict:
    return {
        "coulomb_constant": ff.coulomb_constant,
        "pairs": [
            {"a": a, "b": b, "A_eV": p.A, "rho_ang": p.rho, "C_eV_ang6": p.C}
            for (a, b), p in sorted(ff.pairs.items())
        ],
    }


def load_forcefield(path) -> ForceField:
    return forcefield_from_dict(read_json(path), str(path))


def save_forcefield(ff: ForceField, path) -> None:
    Path(path).write_text(dumps(forcefield_to_dict(ff)))


def problem_from_dict(data, source: str = "<problem>") -> tuple[UnitCell, Composition]:
    """A search problem: a cell plus a composition with per-formula counts and Z."""
    r = _Reader(source)
    data = r.obj(data, "")
    cell = _cell(r, r.get(data, "cell", ""))
    comp = r.obj(r.get(data, "composition", ""), "composition")
    z = r.integer(comp.get("formula_units", 1), "composition.formula_units")
    entries = []
    for i, e in enumerate(r.array(r.get(comp, "species", "composition"), "composition.species")):
        where = f"composition.species[{i}]"
        sp = _species(r, e, where)
        count = r.integer(r.get(e, "count", where), f"{where}.count")
        entries.append((sp, count))
    composition = Composition(tuple(entries), z)
    from .model import validate_composition

    problem = validate_composition(composition)
    if problem:
        r.fail("composition", problem)
    return cell, composition


def problem_to_dict(cell: UnitCell, composition: Composition) -> dict:
    return {
        "cell": _cell_json(cell),
        "composition": {
            "formula_units": composition.formula_units,
            "species": [dict(_species_json(sp), count=m) for sp, m in composition.entries],
        },
    }


def load_problem(path) -> tuple[UnitCell, Composition]:
    return problem_from_dict(read_json(path), str(path))


def _data(name: str):
    return resources.files("depthcsp") / "data" / name


def bundled_path(name: str) -> Path:
    """Filesystem path of a bundled data file."""
    return Path(str(_data(name)))


def default_forcefield() -> ForceField:
    return forcefield_from_dict(_parse(_data("forcefield.json").read_bytes(), "forcefield.json"), "forcefield.json")


def bundled_structure(name: str = "srtio3_perovskite.json") -> Structure:
    return structure_from_dict(_parse(_data(name).read_bytes(), name), name)


def bundled_problem(name: str) -> tuple[UnitCell, Composition]:
    return problem_from_dict(_parse(_data(name).read_bytes(), name), name)
