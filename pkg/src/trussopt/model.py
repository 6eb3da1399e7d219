"""Ground structures on rectangular grids.

Builds the candidate-member sets that the optimization formulations work
on, together with the combinatorial index sets they need: for every
degree of freedom j, the incident members I(j) and the overlapping
members L(j) (members whose straight segment passes through the dof's
node without terminating there), plus the corresponding 0/1 incidence
matrices R and V.

Units are millimeters throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

# A node lies on a segment if its perpendicular distance to the segment
# line is below COLLINEAR_RTOL times the reference length and its
# projection parameter is strictly inside (PROJ_EPS, 1 - PROJ_EPS).
COLLINEAR_RTOL = 1e-6
PROJ_EPS = 1e-9


@dataclass(frozen=True)
class Node:
    """Grid node: position in mm, per-axis support flags (True = fixed)."""

    id: int
    position: tuple[float, float]
    support: tuple[bool, bool] = (False, False)

    @property
    def is_pinned(self) -> bool:
        return self.support[0] and self.support[1]


@dataclass(frozen=True)
class Member:
    """Candidate member: ordered endpoint node ids, length, unit direction."""

    id: int
    endpoints: tuple[int, int]
    length: float
    direction: tuple[float, float]


@dataclass
class GroundStructure:
    """Nodes, members and all index sets the formulations consume.

    ``dof_of_node[n, a]`` maps node n / axis a to a global dof index or
    -1 when that axis is supported.  Dof numbering is node-major, x-axis
    before y-axis, free dofs only.  ``I[j]`` / ``L[j]`` are per-dof
    member-id sets; ``R`` / ``V`` the matching d-by-m 0/1 matrices.
    """

    nodes: list[Node]
    members: list[Member]
    dof_count: int
    dof_of_node: np.ndarray  # (n_nodes, 2) int, -1 on supported axes
    node_of_dof: np.ndarray  # (d,) int
    axis_of_dof: np.ndarray  # (d,) int, 0 = x, 1 = y
    I: list[frozenset[int]] = field(default_factory=list)
    L: list[frozenset[int]] = field(default_factory=list)
    R: np.ndarray | None = None
    V: np.ndarray | None = None
    overlap_records: list[tuple[int, tuple[int, ...]]] = field(default_factory=list)

    @property
    def member_count(self) -> int:
        return len(self.members)

    def member_lengths(self) -> np.ndarray:
        return np.array([mb.length for mb in self.members])

    def positions(self) -> np.ndarray:
        return np.array([nd.position for nd in self.nodes])


def _unit(vec: np.ndarray) -> tuple[float, float]:
    nrm = float(np.hypot(vec[0], vec[1]))
    return (vec[0] / nrm, vec[1] / nrm)


def _build_dof_maps(nodes: list[Node]) -> tuple[int, np.ndarray, np.ndarray, np.ndarray]:
    dof_of_node = -np.ones((len(nodes), 2), dtype=int)
    node_of_dof: list[int] = []
    axis_of_dof: list[int] = []
    j = 0
    for nd in nodes:
        for axis in (0, 1):
            if not nd.support[axis]:
                dof_of_node[nd.id, axis] = j
                node_of_dof.append(nd.id)
                axis_of_dof.append(axis)
                j += 1
    return j, dof_of_node, np.array(node_of_dof, dtype=int), np.array(axis_of_dof, dtype=int)


def _collinear_interior_nodes(
    gs_positions: np.ndarray, a: int, b: int, tol_ref: float
) -> list[tuple[float, int]]:
    """Nodes strictly inside segment (a, b), as (projection parameter, node id)."""
    pa = gs_positions[a]
    ab = gs_positions[b] - pa
    len2 = float(ab @ ab)
    hits: list[tuple[float, int]] = []
    for n in range(gs_positions.shape[0]):
        if n == a or n == b:
            continue
        ap = gs_positions[n] - pa
        t = float(ap @ ab) / len2
        if not (PROJ_EPS < t < 1.0 - PROJ_EPS):
            continue
        # perpendicular distance via the 2-D cross product
        dist = abs(ap[0] * ab[1] - ap[1] * ab[0]) / math.sqrt(len2)
        if dist <= COLLINEAR_RTOL * tol_ref:
            hits.append((t, n))
    hits.sort()
    return hits


def _finalize(gs: GroundStructure, tol_ref: float) -> GroundStructure:
    """Populate I, L, R, V and the overlap records on a node/member skeleton."""
    L_sets, records = detect_overlaps(gs, tol_ref=tol_ref)
    I_sets: list[set[int]] = [set() for _ in range(gs.dof_count)]
    for mb in gs.members:
        for n in mb.endpoints:
            for axis in (0, 1):
                j = gs.dof_of_node[n, axis]
                if j >= 0:
                    I_sets[j].add(mb.id)
    gs.I = [frozenset(s) for s in I_sets]
    gs.L = L_sets
    gs.overlap_records = records
    gs.R, gs.V = incidence_matrices(gs)
    for j in range(gs.dof_count):
        if gs.I[j] & gs.L[j]:
            raise ValueError(f"dof {j}: I(j) and L(j) intersect")
    return gs


def detect_overlaps(
    gs: GroundStructure, tol_ref: float | None = None
) -> tuple[list[frozenset[int]], list[tuple[int, tuple[int, ...]]]]:
    """Per-dof overlap sets L(j) plus (member, covered chain) records.

    A member i belongs to L(j) when the dof's node lies on the open
    segment of i (within tolerance) and is not one of its endpoints.
    Each record pairs an overlapping member with the ids of the shorter
    collinear members that tile its segment between consecutive covered
    nodes, where such members exist in the structure.
    """
    pos = gs.positions()
    if tol_ref is None:
        tol_ref = _reference_length(pos)
    pair_to_member = {tuple(sorted(mb.endpoints)): mb.id for mb in gs.members}
    L_sets: list[set[int]] = [set() for _ in range(gs.dof_count)]
    records: list[tuple[int, tuple[int, ...]]] = []
    for mb in gs.members:
        a, b = mb.endpoints
        interior = _collinear_interior_nodes(pos, a, b, tol_ref)
        if not interior:
            continue
        for _, n in interior:
            for axis in (0, 1):
                j = gs.dof_of_node[n, axis]
                if j >= 0:
                    L_sets[j].add(mb.id)
        stops = [a] + [n for _, n in interior] + [b]
        chain = tuple(
            pair_to_member[key]
            for u, v in itertools.pairwise(stops)
            if (key := tuple(sorted((u, v)))) in pair_to_member
        )
        records.append((mb.id, chain))
    return [frozenset(s) for s in L_sets], records


def incidence_matrices(gs: GroundStructure) -> tuple[np.ndarray, np.ndarray]:
    """R[j, i] = 1 iff i in I(j); V[j, i] = 1 iff i in L(j)."""
    d, m = gs.dof_count, len(gs.members)
    R = np.zeros((d, m))
    V = np.zeros((d, m))
    for j in range(d):
        for i in gs.I[j]:
            R[j, i] = 1.0
        for i in gs.L[j]:
            V[j, i] = 1.0
    return R, V


def _reference_length(pos: np.ndarray) -> float:
    # smallest internode distance; grids make this the grid spacing
    best = math.inf
    for a in range(pos.shape[0]):
        d2 = np.sum((pos[a + 1 :] - pos[a]) ** 2, axis=1)
        if d2.size:
            best = min(best, float(np.min(d2)))
    return math.sqrt(best)


def generate_ground_structure(
    nx: int,
    ny: int,
    grid_spacing: float | tuple[float, float],
    max_member_length: float,
    include_overlaps: bool = True,
) -> GroundStructure:
    """All-pairs ground structure on an (nx+1) x (ny+1) grid.

    Every node pair with distance <= max_member_length becomes a
    candidate member; the leftmost column is pin-supported.  With
    include_overlaps=False, members whose open segment passes through a
    grid node are dropped instead of retained.

    grid_spacing may be a scalar or an (sx, sy) pair.
    """
    if nx < 1 or ny < 1:
        raise ValueError("grid must have nx >= 1 and ny >= 1")
    if isinstance(grid_spacing, (int, float)):
        sx = sy = float(grid_spacing)
    else:
        sx, sy = (float(v) for v in grid_spacing)
    if sx <= 0 or sy <= 0:
        raise ValueError("grid_spacing must be positive")
    if max_member_length < min(sx, sy):
        raise ValueError("max_member_length admits no members on this grid")

    nodes = []
    for ix in range(nx + 1):
        for iy in range(ny + 1):
            nid = ix * (ny + 1) + iy
            pinned = ix == 0
            nodes.append(
                Node(id=nid, position=(ix * sx, iy * sy), support=(pinned, pinned))
            )
    pos = np.array([nd.position for nd in nodes])

    pairs = []
    for a, b in itertools.combinations(range(len(nodes)), 2):
        if np.hypot(*(pos[b] - pos[a])) <= max_member_length * (1 + 1e-12):
            pairs.append((a, b))

    tol_ref = min(sx, sy)
    if not include_overlaps:
        pairs = [
            (a, b)
            for a, b in pairs
            if not _collinear_interior_nodes(pos, a, b, tol_ref)
        ]

    members = []
    for mid, (a, b) in enumerate(pairs):
        vec = pos[b] - pos[a]
        members.append(
            Member(
                id=mid,
                endpoints=(a, b),
                length=float(np.hypot(*vec)),
                direction=_unit(vec),
            )
        )

    d, dof_of_node, node_of_dof, axis_of_dof = _build_dof_maps(nodes)
    gs = GroundStructure(
        nodes=nodes,
        members=members,
        dof_count=d,
        dof_of_node=dof_of_node,
        node_of_dof=node_of_dof,
        axis_of_dof=axis_of_dof,
    )
    return _finalize(gs, tol_ref)


def ground_structure_from_lists(
    positions: list[tuple[float, float]],
    supports: list[tuple[bool, bool]],
    member_pairs: list[tuple[int, int]],
) -> GroundStructure:
    """Explicit node/member input path, used for the small fixture structures."""
    if len(positions) != len(supports):
        raise ValueError("positions and supports length mismatch")
    seen = set()
    for p in positions:
        key = (round(p[0], 9), round(p[1], 9))
        if key in seen:
            raise ValueError(f"duplicate node position {p}")
        seen.add(key)
    nodes = [
        Node(id=i, position=(float(p[0]), float(p[1])), support=(bool(s[0]), bool(s[1])))
        for i, (p, s) in enumerate(zip(positions, supports))
    ]
    pos = np.array([nd.position for nd in nodes])
    seen_pairs = set()
    members = []
    for mid, (a, b) in enumerate(member_pairs):
        key = tuple(sorted((a, b)))
        if key in seen_pairs:
            raise ValueError(f"duplicate member {key}")
        if a == b:
            raise ValueError(f"degenerate member {a}-{b}")
        seen_pairs.add(key)
        vec = pos[b] - pos[a]
        length = float(np.hypot(*vec))
        members.append(
            Member(id=mid, endpoints=(int(a), int(b)), length=length, direction=_unit(vec))
        )
    d, dof_of_node, node_of_dof, axis_of_dof = _build_dof_maps(nodes)
    gs = GroundStructure(
        nodes=nodes,
        members=members,
        dof_count=d,
        dof_of_node=dof_of_node,
        node_of_dof=node_of_dof,
        axis_of_dof=axis_of_dof,
    )
    return _finalize(gs, _reference_length(pos))
