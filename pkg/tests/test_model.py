"""Ground structure generation, overlap detection, incidence sets."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trussopt import (
    detect_overlaps,
    generate_ground_structure,
    ground_structure_from_lists,
    incidence_matrices,
)


# frozen counts: (nx, ny, spacing, max_len, include_overlaps) -> (m, d)
GENERATOR_COUNTS = [
    ((1, 1, 1000.0, 1500.0, True), (6, 4)),
    ((6, 2, 1000.0, 3000.0, True), (132, 36)),
    ((3, 7, 1000.0, 3000.0, True), (250, 48)),
    ((3, 3, 1000.0, 3000.0, True), (98, 24)),
    ((3, 2, (1000.0, 500.0), 1500.0, False), (35, 18)),
    ((3, 2, (1000.0, 500.0), 1500.0, True), (39, 18)),
]


@pytest.mark.parametrize("args,expected", GENERATOR_COUNTS)
def test_generator_counts(args, expected):
    nx, ny, spacing, max_len, inc = args
    gs = generate_ground_structure(nx, ny, spacing, max_len, include_overlaps=inc)
    assert (gs.member_count, gs.dof_count) == expected


def test_unit_cell_has_no_overlaps():
    # C(4,2) = 6 pairs on a single cell; no three nodes are collinear
    gs = generate_ground_structure(1, 1, 1000.0, 1500.0)
    assert gs.member_count == 6
    assert all(len(Lj) == 0 for Lj in gs.L)


def test_overlap_free_is_subset_of_inclusive():
    def pairs(gs):
        return {tuple(sorted(mb.endpoints)) for mb in gs.members}

    for nx, ny in [(2, 1), (2, 2), (3, 2)]:
        free = pairs(generate_ground_structure(nx, ny, 1000.0, 3000.0, False))
        full = pairs(generate_ground_structure(nx, ny, 1000.0, 3000.0, True))
        assert free < full


def test_three_collinear_nodes():
    gs = ground_structure_from_lists(
        positions=[(0.0, 0.0), (1000.0, 0.0), (2000.0, 0.0)],
        supports=[(True, True), (False, False), (False, False)],
        member_pairs=[(0, 1), (1, 2), (0, 2)],
    )
    # member 2 spans the middle node without touching it
    for j in range(gs.dof_count):
        node = gs.node_of_dof[j]
        if node == 1:
            assert gs.L[j] == frozenset({2})
            assert gs.I[j] == frozenset({0, 1})
        else:
            assert gs.L[j] == frozenset()


def test_eighteen_member_reference_structure():
    """3x3 grid with both long diagonals: the center node sees five
    incident members and two passing members, at hand-placed indices."""
    g = 1000.0
    positions = [(i * g, j * g) for i in range(3) for j in range(3)]
    # node ids: 0..2 left column (pinned), 3..5 middle, 6..8 right
    supports = [(True, True)] * 3 + [(False, False)] * 6
    member_pairs = [
        (3, 4),  # 1: below center
        (0, 3),  # 2
        (3, 6),  # 3
        (4, 5),  # 4: above center
        (1, 3),  # 5
        (2, 5),  # 6
        (5, 8),  # 7
        (6, 7),  # 8
        (7, 8),  # 9
        (3, 7),  # 10
        (5, 7),  # 11
        (1, 5),  # 12
        (1, 4),  # 13: left of center
        (4, 7),  # 14: right of center
        (3, 8),  # 15
        (0, 8),  # 16: long diagonal through center
        (2, 4),  # 17: into center
        (2, 6),  # 18: long anti-diagonal through center
    ]
    gs = ground_structure_from_lists(positions, supports, member_pairs)
    assert gs.member_count == 18
    assert gs.dof_count == 12
    center_dofs = [j for j in range(12) if gs.node_of_dof[j] == 4]
    assert len(center_dofs) == 2
    for j in center_dofs:
        assert gs.I[j] == frozenset({0, 3, 12, 13, 16})
        assert gs.L[j] == frozenset({15, 17})


def test_incidence_and_passing_sets_are_disjoint():
    for nx, ny in [(2, 1), (3, 2), (2, 2)]:
        gs = generate_ground_structure(nx, ny, 1000.0, 3000.0, True)
        for j in range(gs.dof_count):
            assert not (gs.I[j] & gs.L[j])


def test_incidence_matrices_match_sets():
    gs = generate_ground_structure(2, 2, 1000.0, 3000.0, True)
    R, V = incidence_matrices(gs)
    assert R.shape == (gs.dof_count, gs.member_count)
    assert V.shape == R.shape
    for j in range(gs.dof_count):
        assert set(np.flatnonzero(R[j])) == set(gs.I[j])
        assert set(np.flatnonzero(V[j])) == set(gs.L[j])
    assert set(np.unique(R)) <= {0.0, 1.0}
    assert set(np.unique(V)) <= {0.0, 1.0}


def test_member_counting_sums():
    # r = R x sums incident areas, v = V x sums passing areas
    rng = np.random.default_rng(7)
    gs = generate_ground_structure(3, 2, 1000.0, 3000.0, True)
    R, V = incidence_matrices(gs)
    x = rng.uniform(0.0, 700.0, gs.member_count)
    r = R @ x
    v = V @ x
    for j in range(gs.dof_count):
        assert r[j] == pytest.approx(sum(x[i] for i in gs.I[j]))
        assert v[j] == pytest.approx(sum(x[i] for i in gs.L[j]))


def test_dof_numbering_roundtrip():
    gs = generate_ground_structure(3, 2, 1000.0, 3000.0)
    seen = set()
    for node, (dx, dy) in enumerate(gs.dof_of_node):
        for axis, dj in enumerate((dx, dy)):
            if dj < 0:
                assert gs.nodes[node].support[axis]
                continue
            assert gs.node_of_dof[dj] == node
            assert gs.axis_of_dof[dj] == axis
            seen.add(int(dj))
    assert seen == set(range(gs.dof_count))


def test_member_geometry():
    gs = generate_ground_structure(2, 2, 1000.0, 3000.0)
    pos = gs.positions()
    for mb in gs.members:
        a, b = mb.endpoints
        delta = np.asarray(pos[b]) - np.asarray(pos[a])
        assert mb.length == pytest.approx(float(np.hypot(*delta)))
        assert np.hypot(*mb.direction) == pytest.approx(1.0)
        assert np.allclose(np.asarray(mb.direction) * mb.length, delta)


def test_detect_overlaps_records_cover_chains():
    # every detected passing pair must be geometrically collinear
    gs = generate_ground_structure(3, 2, 1000.0, 3000.0, True)
    L, records = detect_overlaps(gs)
    assert L == gs.L
    pos = gs.positions()
    for j in range(gs.dof_count):
        xj = np.asarray(pos[gs.node_of_dof[j]])
        for i in gs.L[j]:
            a, b = gs.members[i].endpoints
            pa, pb = np.asarray(pos[a]), np.asarray(pos[b])
            t = np.dot(xj - pa, pb - pa) / np.dot(pb - pa, pb - pa)
            assert 0.0 < t < 1.0
            perp = xj - (pa + t * (pb - pa))
            assert np.hypot(*perp) <= 1e-6 * gs.members[i].length


@settings(max_examples=25, deadline=None)
@given(
    nx=st.integers(min_value=1, max_value=4),
    ny=st.integers(min_value=1, max_value=3),
)
def test_generated_structures_are_well_formed(nx, ny):
    gs = generate_ground_structure(nx, ny, 1000.0, 2500.0, True)
    assert gs.dof_count == 2 * (nx + 1) * (ny + 1) - 2 * (ny + 1)
    assert gs.member_count == len(gs.members)
    ids = {mb.id for mb in gs.members}
    assert ids == set(range(gs.member_count))
    endpoint_pairs = {tuple(sorted(mb.endpoints)) for mb in gs.members}
    assert len(endpoint_pairs) == gs.member_count  # no duplicate members
    for mb in gs.members:
        assert 0.0 < mb.length <= 2500.0 * (1.0 + 1e-12)
