import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from laplace_maxwell import build_structured, mesh_size, refine_marked, refine_uniform
from laplace_maxwell.mesh import CUT, OMEGA1, OMEGA2

from conftest import conformity_defects

COUNTS = {1: (8, 9), 2: (32, 25), 3: (128, 81), 4: (512, 289), 5: (2048, 1089), 6: (8192, 4225)}


@pytest.mark.parametrize("level", sorted(COUNTS))
def test_structured_counts(meshes, level):
    m = meshes[level]
    assert (m.nel, m.nno) == COUNTS[level]


@pytest.mark.parametrize("level", range(1, 7))
def test_structured_geometry(meshes, level):
    m = meshes[level]
    m.check()
    assert math.isclose(m.area.sum(), 1.0, abs_tol=1e-12)
    assert math.isclose(m.boundary_lengths.sum(), 4.0, abs_tol=1e-12)
    assert np.all(m.signed_area > 0)
    assert conformity_defects(m) == 0


def test_level_one_mesh_size(meshes):
    hmax, hk = mesh_size(meshes[1])
    assert hmax == pytest.approx(math.sqrt(2) / 2, abs=1e-15)
    assert np.allclose(hk, math.sqrt(2) / 2)


@pytest.mark.parametrize("bad", [0, 13, -1, 2.5])
def test_bad_level(bad):
    with pytest.raises(ValueError):
        build_structured(bad)


def test_newest_vertex_is_right_angle(meshes):
    # refinement edge (p1, p2) is the hypotenuse on the structured family
    m = meshes[3]
    v = m.vertices
    a, b = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
    assert np.allclose(np.einsum("ij,ij->i", a, b), 0.0)


def test_regions(meshes):
    m = meshes[2]
    counts = {r: int(np.sum(m.regions == r)) for r in (OMEGA1, OMEGA2, CUT)}
    # at l=2 the inner square is covered exactly by the middle 2x2 cells
    assert counts == {OMEGA1: 8, OMEGA2: 24, CUT: 0}
    # l=1: triangles straddle the interface; corner ones touch it at a single point
    r1 = meshes[1].regions
    assert OMEGA1 not in set(r1) and np.sum(r1 == CUT) == 6


def test_boundary_segments(meshes):
    m = meshes[3]
    lengths = {s: m.boundary_lengths[m.boundary_segments == s].sum()
               for s in np.unique(m.boundary_segments)}
    assert lengths["Gamma1"] == pytest.approx(1.0)
    assert lengths["Gamma2"] == pytest.approx(1.0)
    assert lengths["Gamma3"] == pytest.approx(2.0)


def test_uniform_refinement_matches_structured(meshes):
    fine = refine_uniform(meshes[2])
    assert (fine.nel, fine.nno) == COUNTS[3]
    assert np.allclose(np.sort(fine.area), np.sort(np.repeat(meshes[2].area / 4, 4)))
    assert mesh_size(fine)[0] == pytest.approx(mesh_size(meshes[2])[0] / 2)
    fine.check()


def test_refine_marked_empty_is_identity(meshes):
    assert refine_marked(meshes[2], set()) is meshes[2]


def test_refine_marked_out_of_range(meshes):
    with pytest.raises(ValueError):
        refine_marked(meshes[2], {32})


def test_refine_all_marked_halves_areas(meshes):
    m = meshes[2]
    once = refine_marked(m, range(m.nel))
    once.check()
    assert once.nel == 2 * m.nel
    assert np.allclose(once.area, m.area[0] / 2)
    # bisecting twice is the uniform refinement of the structured family
    twice = refine_marked(once, range(once.nel))
    assert (twice.nel, twice.nno) == COUNTS[3]


def test_single_mark_closure(meshes):
    m = meshes[2]
    fine = refine_marked(m, {13})
    fine.check()
    assert conformity_defects(fine) == 0
    assert m.nel < fine.nel < 2 * m.nel + 8
    assert math.isclose(fine.area.sum(), 1.0, abs_tol=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 31), max_size=10), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_nvb_conformity_and_angles(seed_marks, rounds, seed):
    rng = np.random.default_rng(seed)
    m = build_structured(2)
    marks = set(seed_marks)
    for _ in range(rounds):
        m = refine_marked(m, marks)
        m.check()
        assert conformity_defects(m) == 0
        assert m.min_angles().min() >= 20.0 - 1e-9
        marks = set(rng.choice(m.nel, size=max(1, m.nel // 5), replace=False).tolist())


def test_mesh_is_immutable(meshes):
    with pytest.raises(ValueError):
        meshes[1].nodes[0, 0] = 0.3
