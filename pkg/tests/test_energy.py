import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import srtio3
from depthcsp import (
    ForceField,
    Ordering,
    SingularityError,
    Species,
    Structure,
    UnitCell,
    batch_energy,
    depth_energy,
    depth_energy_gradient,
    energy_and_gradient,
    energy_ordering,
    random_feasible,
)
from depthcsp.energy import buckingham_pair, coulomb_pair
from oracles import finite_difference_gradient, structure_energy

CUBIC_Z3 = UnitCell.cubic(3.905 * 3 ** (1 / 3))


def test_coulomb_pair_examples():
    assert coulomb_pair(2, -2, 2.0, 1.0) == -2.0
    assert coulomb_pair(2, -2, 2.0, 14.399645) == pytest.approx(-28.79929)
    assert coulomb_pair(2, 4, 1.0, 1.0) == 8.0
    with pytest.raises(ValueError):
        coulomb_pair(1, 1, 0.0)


def test_buckingham_pair_examples():
    assert buckingham_pair((1952.39, 0.33685, 19.22), 2.5) == pytest.approx(1.089, abs=1e-3)
    assert buckingham_pair((0.0, 1.0, 0.0), 3.7) == 0.0
    assert buckingham_pair((1388.77, 0.36262, 175.0), 50.0) == pytest.approx(-175 / 50**6, rel=1e-9)
    assert buckingham_pair((1388.77, 0.36262, 175.0), 50.0) == pytest.approx(-1.12e-8, rel=1e-2)
    with pytest.raises(ValueError):
        buckingham_pair((1.0, 1.0, 1.0), -1.0)


def test_lone_ion_without_interactions_is_zero():
    # charges are never zero, so switch Coulomb off instead
    s = Structure(UnitCell.cubic(5.0), (Species("A", 1, 0.5),), [0], [[0.3, 0.3, 0.3]])
    ff = ForceField({}, coulomb_constant=0.0)
    for k in (1, 2, 5):
        assert depth_energy(s, ff, k).total == 0.0


def test_two_ion_toy_against_brute_force():
    sp = (Species("P", 1, 0.1), Species("M", -1, 0.1))
    s = Structure(UnitCell.cubic(4.0), sp, [0, 1], [[0, 0, 0], [0.5, 0.5, 0.5]])
    ff = ForceField({}, coulomb_constant=1.0)
    lat = np.diag([4.0] * 3)
    expect = 0.0
    for i, j, qi, qj in [(0, 0, 1, 1), (0, 1, 1, -1), (1, 0, -1, 1), (1, 1, -1, -1)]:
        for o in np.ndindex(3, 3, 3):
            o = np.array(o) - 1
            if i == j and not o.any():
                continue
            expect += qi * qj / np.linalg.norm(lat @ (s.frac[j] + o - s.frac[i]))
    assert depth_energy(s, ff, 1).total == pytest.approx(expect, rel=1e-13)


def _random_instance(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    k = int(rng.integers(1, 3))
    sp = (Species("Sr", 2, 0.1), Species("Ti", 4, 0.1), Species("O", -2, 0.1))
    ff = ForceField(
        {("O", "O"): (1388.77, 0.36262, 175.0), ("Sr", "O"): (1952.39, 0.33685, 19.22), ("Ti", "O"): (4590.7279, 0.261, 0.0)}
    )
    cell = UnitCell(tuple(rng.uniform(3.0, 6.0, 3)), tuple(rng.uniform(70, 110, 3)))
    while True:
        s = Structure(cell, sp, rng.integers(0, 3, n), rng.random((n, 3)))
        if n == 1 or (np.linalg.norm(s.cartesian[:, None] - s.cartesian[None], axis=-1) + np.eye(n) * 9).min() > 0.8:
            return s, ff, k


@given(st.integers(0, 2**32 - 1))
def test_matches_triple_loop_oracle(seed):
    s, ff, k = _random_instance(seed)
    rep = depth_energy(s, ff, k)
    total, coul, buck = structure_energy(s, ff, k)
    assert rep.total == pytest.approx(total, rel=1e-12, abs=1e-12)
    assert rep.coulomb_part == pytest.approx(coul, rel=1e-12, abs=1e-12)
    assert rep.buckingham_part == pytest.approx(buck, rel=1e-12, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_numpy_path_matches_compiled(seed):
    s, ff, k = _random_instance(seed)
    a = depth_energy(s, ff, k)
    b = depth_energy(s, ff, k, method="numpy")
    assert a.total == pytest.approx(b.total, rel=1e-12, abs=1e-12)
    ea, ga = energy_and_gradient(s, ff, k)
    eb, gb = energy_and_gradient(s, ff, k, method="numpy")
    assert np.allclose(ga, gb, rtol=1e-10, atol=1e-10)


def test_report_invariants(ff):
    s = random_feasible(CUBIC_Z3, srtio3(3), rng=4)
    r = depth_energy(s, ff, 3)
    assert r.total == pytest.approx(r.coulomb_part + r.buckingham_part, rel=1e-12)
    assert r.per_ion * r.n == pytest.approx(r.total, rel=1e-15)
    assert (r.depth, r.n) == (3, 15)
    d = r.to_dict()
    assert set(d) == {"total", "per_ion", "depth", "coulomb_part", "buckingham_part", "n"}


def test_conventional_halves(ff, perovskite):
    full = depth_energy(perovskite, ff, 2)
    half = depth_energy(perovskite, ff, 2, conventional=True)
    assert half.total == pytest.approx(full.total / 2, rel=1e-14)


def test_coulomb_part_scales_with_constant(ff):
    s = random_feasible(CUBIC_Z3, srtio3(3), rng=9)
    a = depth_energy(s, ff, 2)
    b = depth_energy(s, ff.with_coulomb_constant(2 * ff.coulomb_constant), 2)
    assert b.coulomb_part == pytest.approx(2 * a.coulomb_part, rel=1e-12)
    assert b.buckingham_part == pytest.approx(a.buckingham_part, rel=1e-12)


def test_batch_matches_single(ff):
    rng = np.random.default_rng(3)
    structures = [random_feasible(CUBIC_Z3, srtio3(3), rng=rng) for _ in range(5)]
    batch = batch_energy(structures[0], ff, np.array([s.frac for s in structures]), 2)
    single = [depth_energy(s, ff, 2).total for s in structures]
    assert np.allclose(batch, single, rtol=1e-13)


def test_depth_must_be_positive(ff, perovskite):
    with pytest.raises(ValueError):
        depth_energy(perovskite, ff, 0)


def test_coincident_ions_are_singular(ff):
    sp = (Species("Sr", 2, 0.0), Species("O", -2, 0.0))
    s = Structure(UnitCell.cubic(4.0), sp, [0, 1], [[0.2, 0.2, 0.2], [0.2, 0.2, 0.2]])
    with pytest.raises(SingularityError):
        depth_energy(s, ff, 1)
    with pytest.raises(SingularityError):
        batch_energy(s, ff, s.frac[None], 1)


@given(st.integers(0, 10_000), st.tuples(*[st.floats(0.0, 1.0)] * 3))
def test_translation_invariance_inside_cell(seed, t):
    """Rigid shifts that keep every ion inside the cell leave the energy unchanged."""
    rng = np.random.default_rng(seed)
    s = random_feasible(CUBIC_Z3, srtio3(3), rng=rng)
    lo, hi = s.frac.min(axis=0), s.frac.max(axis=0)
    shift = -lo + np.array(t) * (1.0 - 1e-9 - (hi - lo))
    moved = s.with_frac(s.frac + shift)
    ff = _ff()
    e0 = depth_energy(s, ff, 2).total
    assert depth_energy(moved, ff, 2).total == pytest.approx(e0, rel=1e-8)


@given(st.integers(0, 10_000), st.tuples(*[st.floats(-1.0, 1.0)] * 3))
def test_minimum_image_anchor_is_translation_invariant(seed, t):
    s = random_feasible(CUBIC_Z3, srtio3(3), rng=seed)
    moved = s.with_frac(s.frac + np.array(t))
    ff = _ff()
    e0 = depth_energy(s, ff, 1, anchor="minimum_image").total
    assert depth_energy(moved, ff, 1, anchor="minimum_image").total == pytest.approx(e0, rel=1e-8)


def test_crossing_a_face_changes_the_cell_anchored_energy(ff):
    """The image block is tied to the cell, so wrapping a charged ion round is not a symmetry."""
    s = random_feasible(CUBIC_Z3, srtio3(3), rng=8)
    i = int(np.argmax(s.frac[:, 0]))
    shifted = s.with_frac(s.frac + np.array([1.0 - s.frac[i, 0] + 1e-3, 0.0, 0.0]))
    assert shifted.frac[i, 0] < 0.01
    jump = depth_energy(shifted, ff, 1).total - depth_energy(s, ff, 1).total
    assert abs(jump) > 1.0
    same = depth_energy(shifted, ff, 1, anchor="minimum_image").total
    assert same == pytest.approx(depth_energy(s, ff, 1, anchor="minimum_image").total, rel=1e-10)


def _ff():
    from depthcsp import default_forcefield

    return default_forcefield()


def test_permutation_invariance(ff):
    s = random_feasible(CUBIC_Z3, srtio3(3), rng=21)
    order = np.arange(s.n)
    oxygens = np.flatnonzero(s.site_species == 2)
    order[oxygens] = oxygens[::-1]
    permuted = s.with_frac(s.frac[order])
    # equal up to floating-point reassociation of the pair sum
    assert depth_energy(permuted, ff, 3).total == pytest.approx(depth_energy(s, ff, 3).total, rel=1e-10)


def _depth_errors(structures, ff):
    out = []
    for s in structures:
        ref = depth_energy(s, ff, 10).per_ion
        out.append([abs(depth_energy(s, ff, k).per_ion - ref) for k in range(1, 7)])
    return out


@pytest.fixture(scope="module")
def depth_errors(ff):
    rng = np.random.default_rng(2024)
    return _depth_errors([random_feasible(CUBIC_Z3, srtio3(3), rng=rng) for _ in range(100)], ff)


def test_depth_six_beats_depth_one(depth_errors):
    for diffs in depth_errors:
        assert diffs[5] < diffs[0]


@pytest.mark.xfail(
    strict=True,
    reason="the depth-k error can change sign and dip early: 2 of these 100 structures are not monotone",
)
def test_depth_error_monotone_per_structure(depth_errors):
    for diffs in depth_errors:
        assert all(b <= a for a, b in zip(diffs, diffs[1:]))


def test_gradient_of_symmetric_pair():
    sp = (Species("A", 1, 0.1), Species("B", -1, 0.1))
    s = Structure(UnitCell.cubic(20.0), sp, [0, 1], [[0.45, 0.5, 0.5], [0.55, 0.5, 0.5]])
    ff = ForceField({("A", "B"): (500.0, 0.3, 1.0)})
    g = depth_energy_gradient(s, ff, 1)
    assert np.allclose(g[0], -g[1], atol=1e-12)
    assert np.allclose(g[:, 1:], 0.0, atol=1e-12)
    assert abs(g[0, 0]) > 0


@pytest.mark.parametrize("seed", range(5))
def test_gradient_matches_finite_differences(ff, seed):
    s = random_feasible(CUBIC_Z3, srtio3(3), rng=seed)
    g = depth_energy_gradient(s, ff, 2)
    fd = finite_difference_gradient(lambda f: depth_energy(s.with_frac(f), ff, 2).total, s)
    assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(fd)


def test_gradient_for_triclinic_cell(ff):
    cell = UnitCell((5.2, 5.8, 6.1), (80, 95, 105))
    s = random_feasible(cell, srtio3(2), rng=11)
    g = depth_energy_gradient(s, ff, 1)
    fd = finite_difference_gradient(lambda f: depth_energy(s.with_frac(f), ff, 1).total, s)
    assert np.linalg.norm(g - fd) <= 1e-5 * np.linalg.norm(fd)


@pytest.mark.xfail(
    strict=True,
    reason="with the image block tied to the cell, the perovskite at its textbook sites is not a stationary point",
)
def test_perovskite_is_stationary(ff, perovskite):
    assert np.abs(depth_energy_gradient(perovskite, ff, 2)).max() < 1e-6


def test_perovskite_is_stationary_under_minimum_image_sum(ff, perovskite):
    g = depth_energy_gradient(perovskite, ff, 2, anchor="minimum_image", method="numpy")
    assert np.abs(g).max() < 1e-9


def test_ordering_examples(ff, perovskite):
    assert energy_ordering(perovskite, perovskite, ff) is Ordering.TIE
    cell = perovskite.cell
    rng = np.random.default_rng(5)
    for _ in range(20):
        s = random_feasible(cell, srtio3(), rng=rng)
        assert energy_ordering(perovskite, s, ff, 1) is Ordering.A_LOWER
        assert energy_ordering(s, perovskite, ff, 1) is Ordering.B_LOWER


def test_ordering_needs_matching_structures(ff, perovskite):
    other = random_feasible(UnitCell.cubic(6.0), srtio3(), rng=1)
    with pytest.raises(ValueError):
        energy_ordering(perovskite, other, ff)


def test_known_perovskite_totals(ff, perovskite):
    """Values produced by this implementation, frozen as a regression check."""
    expect = {1: -312.7524, 2: -315.5451, 3: -316.2599, 6: -316.7766, 10: -316.9042}
    for k, e in expect.items():
        assert depth_energy(perovskite, ff, k).total == pytest.approx(e, abs=1e-4)
    assert not math.isnan(depth_energy(perovskite, ff, 10).per_ion)
