import numpy as np
import pytest

from trussopt import (
    DesignBounds,
    LoadUncertaintyModel,
    generate_ground_structure,
    ground_structure_from_lists,
)


@pytest.fixture
def single_bar():
    """One horizontal bar, left node pinned: 2 free dofs, K singular in y."""
    gs = ground_structure_from_lists(
        positions=[(0.0, 0.0), (1000.0, 0.0)],
        supports=[(True, True), (False, False)],
        member_pairs=[(0, 1)],
    )
    bounds = DesignBounds(x_lower=0.0, x_upper=700.0, volume_bound=1e6)
    return gs, bounds


@pytest.fixture
def two_bar_triangle():
    # two non-parallel bars meeting at the only free node, so K is
    # nonsingular whenever both areas are positive
    gs = ground_structure_from_lists(
        positions=[(0.0, 0.0), (0.0, 1000.0), (1000.0, 0.0)],
        supports=[(True, True), (True, True), (False, False)],
        member_pairs=[(0, 2), (1, 2)],
    )
    bounds = DesignBounds(x_lower=0.0, x_upper=700.0, volume_bound=1e6)
    return gs, bounds


@pytest.fixture
def small_grid():
    return generate_ground_structure(2, 1, 1000.0, 3000.0, include_overlaps=True)


def load_at(gs, xy, fy=-1e5, fx=0.0):
    """Point load (N) at the node with coordinates xy; other dofs zero."""
    pos = gs.positions()
    hits = [
        i
        for i, p in enumerate(pos)
        if abs(p[0] - xy[0]) < 1e-9 and abs(p[1] - xy[1]) < 1e-9
    ]
    assert len(hits) == 1, f"no unique node at {xy}"
    p = np.zeros(gs.dof_count)
    dx, dy = gs.dof_of_node[hits[0]]
    if dx >= 0:
        p[dx] = fx
    if dy >= 0:
        p[dy] = fy
    return p


def model_for(gs, xy, alpha_frac=0.75):
    p = load_at(gs, xy)
    return LoadUncertaintyModel.build(p, alpha_frac * 1e5), p


def build_instance(
    nx,
    ny,
    load_xy,
    volume_bound,
    spacing=1000.0,
    max_len=3000.0,
    alpha_frac=0.75,
    young_modulus=200000.0,
    x_lower=0.0,
    x_upper=np.inf,
    include_overlaps=True,
):
    """Grid instance with a downward 100 kN load at load_xy.

    The published benchmark values correspond to E = 200 GPa, hence the
    default here; DesignBounds itself defaults to 20 GPa.
    """
    gs = generate_ground_structure(
        nx, ny, spacing, max_len, include_overlaps=include_overlaps
    )
    p = load_at(gs, load_xy)
    model = LoadUncertaintyModel.build(p, alpha_frac * 1e5)
    bounds = DesignBounds(
        x_lower=x_lower,
        x_upper=x_upper,
        volume_bound=volume_bound,
        young_modulus=young_modulus,
    )
    return gs, model, bounds
