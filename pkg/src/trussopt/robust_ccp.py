"""Penalty convex-concave procedure for robust topology design.

The robust problem couples member areas x, node activations s and
lower-bound slacks z through bilinear complementarity terms: a member
needs both endpoint nodes active, an active node excludes members
running through it, and an area is either zero or at least the lower
bound.  All of these collapse into one nonnegative residual

    phi(x, z, s) = 4 (x'z + (1 - s)'(Rx) + s'(Vx))

which vanishes exactly on the valid designs (R and V are the
endpoint/passthrough incidence matrices).  phi is a difference of
convex squared norms, so each outer iteration minimizes

    w + rho * [convex part - linearization of the concave part]

over the convex relaxation (worst-case LMI, volume budget, boxes and
valid cuts), then grows rho geometrically until the residual clears.
Subproblems run on areas normalized by the upper bound so the penalty
Hessian and the cut rows stay O(1) regardless of the area scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .model import GroundStructure, incidence_matrices
from .mechanics import (
    NMM_PER_JOULE,
    DesignBounds,
    LoadUncertaintyModel,
    geometry_matrix,
    worst_case_compliance,
)
from .conic import (
    INFEASIBLE,
    MAX_ITERATIONS,
    NUMERICAL_FAILURE,
    OPTIMAL,
    UNBOUNDED,
    ComplianceBlock,
    ConicProblem,
    ConicSolution,
    ToleranceSet,
    solve,
    solve_nominal,
)

__all__ = [
    "CcpParams",
    "CcpState",
    "FeasibleSet",
    "RoundedDesign",
    "TrussSolution",
    "build_subproblem",
    "ccp_solve",
    "initial_point",
    "nodes_from_design",
    "penalty_majorant",
    "penalty_residual",
    "round_and_postprocess",
    "solve_fixed_s",
]


@dataclass(frozen=True)
class CcpParams:
    """Outer-loop controls.

    phi_tol is the raw-unit residual target; None picks 0.01 per
    member pair (2m * 1e-2 total).  step_tol acts on the 2-norm of
    consecutive raw area vectors in mm^2.  penalty selects the weight
    of the area pair x.z against the node pairs in the subproblem:
    "scaled" and "raw" weigh the residual on normalized and raw areas
    respectively, "balanced" sits between them (x.z heavier by xu than
    in "scaled").  All three linearize the same function; they differ
    only in when the complementarity pressure becomes material along
    the rho ramp.
    """

    rho_init: float = 1e-2
    rho_growth: float = 1.5
    rho_max: float = 1e6
    phi_tol: float | None = None
    step_tol: float = 1e-2
    max_outer: int = 100
    penalty: str = "scaled"
    tol: ToleranceSet = field(default_factory=ToleranceSet)


@dataclass
class CcpState:
    """One outer iterate, raw units (areas mm^2, compliance J)."""

    k: int
    x: np.ndarray
    z: np.ndarray
    s: np.ndarray
    w: float
    rho: float
    phi: float
    phi_scaled: float
    step: float
    solver_status: str = "initial"
    solver_iterations: int = 0


@dataclass
class RoundedDesign:
    """Binary design recovered from a fractional iterate."""

    x: np.ndarray
    t: np.ndarray
    s: np.ndarray
    worst_case: float
    conflicts: list[tuple[int, int]]
    status: str


@dataclass
class TrussSolution:
    """ccp_solve outcome: the rounded design plus the relaxed trace."""

    x: np.ndarray
    t: np.ndarray
    s: np.ndarray
    worst_case: float
    status: str
    iterations: int
    conflicts: list[tuple[int, int]]
    x_relaxed: np.ndarray
    w_relaxed: float
    history: list[CcpState]


class FeasibleSet:
    """Variable layout, cut rows and LMI shared by all subproblems.

    Columns: normalized areas x/xu in [0,1]^m, then (when xl > 0) the
    normalized slacks z/xu in [0, xl/xu]^m, then the activations of
    the unloaded dofs in [0,1], then the worst-case compliance w in J.
    Loaded dofs are forced active and enter the LMI as constants.
    """

    def __init__(
        self,
        gs: GroundStructure,
        model: LoadUncertaintyModel,
        bounds: DesignBounds,
    ):
        if not np.isfinite(bounds.x_upper) or bounds.x_upper <= 0:
            raise ValueError("penalty subproblems need a finite area upper bound")
        self.gs = gs
        self.model = model
        self.bounds = bounds
        m = len(gs.members)
        d = gs.dof_count
        self.m, self.d = m, d
        self.xu = float(bounds.x_upper)
        self.xl = float(bounds.x_lower)
        self.has_z = self.xl > 0
        self.lengths = gs.member_lengths()

        R, V = incidence_matrices(gs)
        self.R = sp.csr_matrix(R)
        self.V = sp.csr_matrix(V)
        self.fixed_dofs = np.array(sorted(model.loaded_dofs), dtype=int)
        mask = np.ones(d, dtype=bool)
        mask[self.fixed_dofs] = False
        self.free_dofs = np.flatnonzero(mask)

        mz = m if self.has_z else 0
        ns = len(self.free_dofs)
        self.x_vars = np.arange(m)
        self.z_vars = np.arange(m, m + mz)
        self.s_vars = np.arange(m + mz, m + mz + ns)
        self.w_var = m + mz + ns
        self.n = self.w_var + 1
        # dof -> activation column, -1 for the forced-active ones
        self.s_var_of_dof = np.full(d, -1, dtype=int)
        self.s_var_of_dof[self.free_dofs] = self.s_vars

        self.lb = np.zeros(self.n)
        self.lb[self.w_var] = -np.inf
        self.ub = np.ones(self.n)
        if self.has_z:
            self.ub[self.z_vars] = self.xl / self.xu
        self.ub[self.w_var] = np.inf

        self.G, self.h = self._cut_rows()
        self.block = self._lmi_block()

    def _cut_rows(self) -> tuple[sp.csr_matrix, np.ndarray]:
        gs = self.gs
        ri: list[int] = []
        ci: list[int] = []
        vals: list[float] = []
        rhs: list[float] = []
        row = 0

        # volume budget on normalized areas
        ri.extend([row] * self.m)
        ci.extend(self.x_vars)
        vals.extend(self.lengths * self.xu / self.bounds.volume_bound)
        rhs.append(1.0)
        row += 1

        if self.has_z:
            frac = self.xl / self.xu
            for i in range(self.m):
                # the slack must lift a closed member back to the lower bound
                ri += [row, row]
                ci += [self.x_vars[i], self.z_vars[i]]
                vals += [-1.0, -1.0]
                rhs.append(-frac)
                row += 1
                # and it dies once the member clears the lower bound
                ri += [row, row]
                ci += [self.x_vars[i], self.z_vars[i]]
                vals += [frac, 1.0]
                rhs.append(frac)
                row += 1

        # one row per member-node pair, averaging the node's activation
        # dofs: tighter than the aggregated big-M rows (a single member
        # at full size forces its endpoints fully on) and free of the
        # twin-row degeneracy that per-dof rows would create
        for nno in range(len(gs.nodes)):
            dofs = [gs.dof_of_node[nno, a] for a in (0, 1) if gs.dof_of_node[nno, a] >= 0]
            if not dofs:
                continue
            svs = [self.s_var_of_dof[j] for j in dofs if self.s_var_of_dof[j] >= 0]
            inc = sorted(gs.I[dofs[0]])
            through = sorted(gs.L[dofs[0]])
            if svs:
                share = 1.0 / len(svs)
                for i in inc:
                    # a member switches its endpoint nodes fully on
                    ri += [row] * (1 + len(svs))
                    ci += [i] + svs
                    vals += [1.0] + [-share] * len(svs)
                    rhs.append(0.0)
                    row += 1
            if len(svs) < len(dofs) or not svs:
                # node carries a load component: passthrough is banned
                if through:
                    ri.extend([row] * len(through))
                    ci.extend(through)
                    vals.extend([1.0] * len(through))
                    rhs.append(0.0)
                    row += 1
            else:
                for i in through:
                    # an active node shuts the members running through it
                    ri += [row] * (1 + len(svs))
                    ci += [i] + svs
                    vals += [1.0] + [share] * len(svs)
                    rhs.append(1.0)
                    row += 1

        G = sp.csr_matrix(
            (np.array(vals), (np.array(ri), np.array(ci))), shape=(row, self.n)
        )
        return G, np.array(rhs)

    def _lmi_block(self) -> ComplianceBlock:
        gs, bounds, model = self.gs, self.bounds, self.model
        B = geometry_matrix(gs)
        kappa = bounds.young_modulus / (self.lengths * NMM_PER_JOULE)
        btil = B * np.sqrt(kappa * self.xu)
        Q_kn = model.Q / NMM_PER_JOULE
        P_fixed = np.zeros((self.d, self.d))
        P_fixed[self.fixed_dofs] = Q_kn[self.fixed_dofs]
        return ComplianceBlock(
            c=self.d,
            d=self.d,
            w_var=self.w_var,
            x_vars=self.x_vars,
            btil=btil,
            s_vars=self.s_vars,
            s_rows=self.free_dofs,
            q_rows=Q_kn[self.free_dofs],
            P_fixed=P_fixed,
        )

    def embed(self, x: np.ndarray, z: np.ndarray, s: np.ndarray, w: float) -> np.ndarray:
        v = np.zeros(self.n)
        v[self.x_vars] = x / self.xu
        if self.has_z:
            v[self.z_vars] = z / self.xu
        v[self.s_vars] = s[self.free_dofs]
        v[self.w_var] = w
        return v

    def point(self, v: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
        x = v[self.x_vars] * self.xu
        z = v[self.z_vars] * self.xu if self.has_z else np.zeros(self.m)
        s = np.ones(self.d)
        s[self.free_dofs] = v[self.s_vars]
        return x, z, s, float(v[self.w_var])


def penalty_residual(
    fs: FeasibleSet, x: np.ndarray, z: np.ndarray, s: np.ndarray
) -> tuple[float, float]:
    """(raw, normalized) complementarity residual at a raw-unit point."""
    r = fs.R @ x
    v = fs.V @ x
    sr = float((1.0 - s) @ r)
    sv = float(s @ v)
    raw = 4.0 * (float(x @ z) + sr + sv)
    scaled = 4.0 * (float(x @ z) / fs.xu**2 + (sr + sv) / fs.xu)
    return raw, scaled


def _mode_terms(fs: FeasibleSet, penalty: str) -> tuple[float, float]:
    # (a, kap) multiply the node-pair and area-pair groups after the
    # x/xu normalization: "raw" undoes it entirely, "scaled" keeps it,
    # "balanced" keeps the node groups scaled but divides the area
    # pair by xu only, so its pressure arrives while the node set is
    # still plastic instead of two orders of magnitude later
    if penalty == "scaled":
        return 1.0, 1.0
    if penalty == "balanced":
        return 1.0, fs.xu
    if penalty == "raw":
        return fs.xu, fs.xu * fs.xu
    raise ValueError(f"unknown penalty mode {penalty!r}")


def penalty_majorant(
    fs: FeasibleSet,
    anchor: CcpState,
    x: np.ndarray,
    z: np.ndarray,
    s: np.ndarray,
    penalty: str = "scaled",
) -> float:
    """Convex upper model of the residual, tight at the anchor.

    Splits phi = C - D with both parts sums of squares and replaces D
    by its tangent at the anchor.  "scaled" majorizes the normalized
    residual, "raw" the raw one, "balanced" the normalized residual
    with the area pair boosted by xu.
    """
    a, kap = _mode_terms(fs, penalty)

    def pieces(xr, zr, sv):
        xn = xr / fs.xu
        zn = zr / fs.xu
        return xn, zn, fs.R @ xn * a, fs.V @ xn * a

    xn, zn, rn, vn = pieces(x, z, s)
    xa, za, ra, va = pieces(anchor.x, anchor.z, anchor.s)
    sa = anchor.s

    conv = float((1.0 - s + rn) @ (1.0 - s + rn) + (s + vn) @ (s + vn))
    if fs.has_z:
        conv += kap * float((xn + zn) @ (xn + zn))
    b2 = (1.0 - sa) - ra
    b3 = sa - va
    d_anchor = float(b2 @ b2 + b3 @ b3)
    gx = -2.0 * a * (fs.R.T @ b2) - 2.0 * a * (fs.V.T @ b3)
    gz = np.zeros(fs.m)
    if fs.has_z:
        d_anchor += kap * float((xa - za) @ (xa - za))
        gx += 2.0 * kap * (xa - za)
        gz = -2.0 * kap * (xa - za)
    gs_ = -2.0 * b2 + 2.0 * b3
    lin = float(gx @ (xn - xa) + gz @ (zn - za) + gs_ @ (s - sa))
    return conv - d_anchor - lin


def build_subproblem(
    fs: FeasibleSet, anchor: CcpState, rho: float, penalty: str = "scaled"
) -> tuple[ConicProblem, float]:
    """Convex subproblem at the anchor; min w + rho * majorant.

    Returns (problem, constant) with problem.objective(v) + constant
    equal to v_w + rho * penalty_majorant(...) at the point v encodes,
    so the constant carries the terms dropped from the objective.
    """
    a, kap = _mode_terms(fs, penalty)
    m, d, n = fs.m, fs.d, fs.n
    free = fs.free_dofs
    xa = anchor.x / fs.xu
    za = anchor.z / fs.xu
    sa = anchor.s
    ra = a * (fs.R @ xa)
    va = a * (fs.V @ xa)
    b2 = (1.0 - sa) - ra
    b3 = sa - va
    e_free = np.zeros(d)
    e_free[free] = 1.0
    e_fix = 1.0 - e_free

    q = np.zeros(n)
    q[fs.w_var] = 1.0
    qx = a * (fs.R.T @ (e_free + b2)) + a * (fs.V.T @ (e_fix + b3))
    if fs.has_z:
        qx -= kap * (xa - za)
        q[fs.z_vars] = 2.0 * rho * kap * (xa - za)
    q[fs.x_vars] = 2.0 * rho * qx
    q[fs.s_vars] = 2.0 * rho * (b2[free] - b3[free] - 1.0)

    Rm = a * fs.R
    Vm = a * fs.V
    H_xx = (Rm.T @ Rm + Vm.T @ Vm).tocoo()
    ri = list(H_xx.row)
    ci = list(H_xx.col)
    vals = list(H_xx.data)
    if fs.has_z:
        for i in range(m):
            xi, zi = fs.x_vars[i], fs.z_vars[i]
            ri += [xi, xi, zi, zi]
            ci += [xi, zi, xi, zi]
            vals += [kap, kap, kap, kap]
    W = (Vm - Rm).tocsr()[free]
    Wc = W.tocoo()
    for r_loc, c_loc, val in zip(Wc.row, Wc.col, Wc.data):
        sv = fs.s_vars[r_loc]
        ri += [sv, c_loc]
        ci += [c_loc, sv]
        vals += [val, val]
    ri.extend(fs.s_vars)
    ci.extend(fs.s_vars)
    vals.extend([2.0] * len(fs.s_vars))
    H = rho * sp.csr_matrix(
        (np.array(vals), (np.array(ri), np.array(ci))), shape=(n, n)
    )

    problem = ConicProblem(
        n=n,
        q=q,
        H=H,
        G=fs.G,
        h=fs.h,
        lb=fs.lb.copy(),
        ub=fs.ub.copy(),
        blocks=[fs.block],
    )
    v_anchor = fs.embed(anchor.x, anchor.z, anchor.s, 0.0)
    maj_anchor = penalty_majorant(fs, anchor, anchor.x, anchor.z, anchor.s, penalty)
    constant = rho * maj_anchor - problem.objective(v_anchor)
    return problem, constant


def initial_point(fs: FeasibleSet, tol: ToleranceSet | None = None) -> CcpState:
    """Nominal optimum with half-open activations, slacks at zero."""
    x0, _ = solve_nominal(fs.gs, fs.model, fs.bounds, tol)
    x0 = np.minimum(x0, fs.xu)
    z0 = np.zeros(fs.m)
    s0 = np.full(fs.d, 0.5)
    s0[fs.fixed_dofs] = 1.0
    w0 = worst_case_compliance(fs.gs, fs.bounds, x0, s0, fs.model)
    phi_raw, phi_scaled = penalty_residual(fs, x0, z0, s0)
    return CcpState(
        k=0, x=x0, z=z0, s=s0, w=w0, rho=0.0,
        phi=phi_raw, phi_scaled=phi_scaled, step=np.inf,
    )


def _snap_anchor(fs: FeasibleSet, state: CcpState) -> CcpState | None:
    """Re-anchor at the design the current iterate is crawling toward.

    Areas are thresholded and pruned exactly as in the rounding, the
    dropped ones zeroed with their slack at the complementarity value,
    and emptied dofs switched off.  Returns None when nothing drops.
    """
    if fs.has_z:
        t = state.x >= 0.5 * fs.xl
    else:
        t = state.x > 1e-6 * fs.xu
    t = _prune_underbraced(fs.gs, state.x, t, fs.fixed_dofs)
    drop = ~t & (state.x > 0.0)
    if not drop.any():
        return None
    x = state.x.copy()
    z = state.z.copy()
    s = state.s.copy()
    x[drop] = 0.0
    if fs.has_z:
        z[drop] = fs.xl
    incident = np.asarray(fs.R @ x).ravel()
    for j in fs.free_dofs:
        if incident[j] <= 1e-9:
            s[j] = 0.0
    phi_raw, phi_scaled = penalty_residual(fs, x, z, s)
    return CcpState(
        state.k, x, z, s, state.w, state.rho, phi_raw, phi_scaled,
        state.step, "snapped", state.solver_iterations,
    )


def ccp_solve(
    gs: GroundStructure,
    model: LoadUncertaintyModel,
    bounds: DesignBounds,
    params: CcpParams | None = None,
    initial: CcpState | None = None,
    callback=None,
) -> TrussSolution:
    """Run the penalty loop and round the final iterate.

    Terminates when the raw residual drops below phi_tol, when the
    area step stalls below step_tol, or after max_outer rounds; the
    returned status names which.  The step test only arms once the
    residual has fallen below half its initial value: with a
    deterministic subproblem solver, consecutive early iterates agree
    to solver precision while the penalty is still inert, and stopping
    there would freeze the initial topology.  Subproblems that merely
    hit the iteration cap still yield usable iterates and the loop
    proceeds; infeasible or failed subproblems abort.

    When the residual plateaus, sub-threshold areas decay only
    geometrically (the majorant is quadratic around the anchor), so
    the anchor is snapped: fringe areas are zeroed, their slack set to
    the complementarity value, and emptied dofs switched off.  The
    feasible set is untouched and the next subproblem revives anything
    that actually carries load, so this only re-anchors the
    linearization where the crawl was headed anyway.
    """
    params = params or CcpParams()
    fs = FeasibleSet(gs, model, bounds)
    phi_tol = params.phi_tol if params.phi_tol is not None else 2.0 * fs.m * 1e-2
    state = initial if initial is not None else initial_point(fs, params.tol)
    history = [state]
    phi_arm = 0.5 * state.phi
    rho = params.rho_init
    status = "max_outer"
    snaps = 0
    for k in range(1, params.max_outer + 1):
        problem, _ = build_subproblem(fs, state, rho, params.penalty)
        sol = solve(problem, params.tol)
        if sol.status in (INFEASIBLE, UNBOUNDED, NUMERICAL_FAILURE):
            status = f"subproblem_{sol.status}"
            break
        x, z, s, w = fs.point(sol.v)
        phi_raw, phi_scaled = penalty_residual(fs, x, z, s)
        step = float(np.linalg.norm(x - state.x))
        state = CcpState(
            k, x, z, s, w, rho, phi_raw, phi_scaled, step,
            sol.status, sol.iterations,
        )
        history.append(state)
        if callback is not None:
            callback(state)
        if phi_raw <= phi_tol:
            status = "residual_converged"
            break
        if step <= params.step_tol and phi_raw <= phi_arm:
            status = "step_converged"
            break
        plateaued = (
            len(history) > 5
            and phi_raw <= phi_arm
            and phi_raw > 0.95 * history[-6].phi
        )
        if plateaued and snaps < 3:
            snapped = _snap_anchor(fs, state)
            if snapped is not None:
                state = snapped
                snaps += 1
        rho = min(rho * params.rho_growth, params.rho_max)
    final = history[-1]
    rounded = round_and_postprocess(fs, final, params.tol)
    return TrussSolution(
        x=rounded.x,
        t=rounded.t,
        s=rounded.s,
        worst_case=rounded.worst_case,
        status=status,
        iterations=final.k,
        conflicts=rounded.conflicts,
        x_relaxed=final.x,
        w_relaxed=final.w,
        history=history,
    )


def _prune_underbraced(
    gs: GroundStructure, x: np.ndarray, t: np.ndarray, loaded: np.ndarray
) -> np.ndarray:
    """Drop members whose endpoint node cannot brace its uncertainty.

    An active unloaded node whose kept members span fewer than two
    directions leaves a load direction with zero stiffness, so the
    worst case is infinite no matter the areas.  Removing the thinnest
    member there (to fixpoint) releases the node instead.  Loaded
    nodes are never touched: if they end up underbraced the design is
    genuinely worthless and the refinement will say so.
    """
    pos = gs.positions()
    loaded_nodes = {gs.node_of_dof[j] for j in loaded}
    t = t.copy()
    changed = True
    while changed:
        changed = False
        for n in range(len(pos)):
            dofs = [gs.dof_of_node[n, a] for a in (0, 1) if gs.dof_of_node[n, a] >= 0]
            if not dofs or n in loaded_nodes:
                continue
            inc = sorted({i for j in dofs for i in gs.I[j] if t[i]})
            if not inc:
                continue
            dirs = []
            for i in inc:
                a, b = gs.members[i].endpoints
                u = pos[b] - pos[a]
                dirs.append(u / np.linalg.norm(u))
            if np.linalg.matrix_rank(np.array(dirs), tol=1e-9) < 2:
                weakest = min(inc, key=lambda i: x[i])
                t[weakest] = False
                changed = True
    return t


def round_and_postprocess(
    fs: FeasibleSet, state: CcpState, tol: ToleranceSet | None = None
) -> RoundedDesign:
    """Threshold the iterate to a binary design and re-optimize areas.

    Members keep their place when the area clears half the lower bound
    (or a relative sliver when there is none); nodes follow the kept
    members, loaded nodes stay.  Members that would leave a node
    underbraced are pruned.  Areas are then re-optimized over the
    fixed topology.  Conflicts lists (dof, member) pairs where a kept
    member still runs through an active node.
    """
    gs, bounds, model = fs.gs, fs.bounds, fs.model
    if fs.xl > 0:
        t = state.x >= 0.5 * fs.xl
    else:
        t = state.x > 1e-6 * fs.xu
    t = _prune_underbraced(gs, state.x, t, fs.fixed_dofs)
    s_bar = np.zeros(fs.d)
    s_bar[fs.fixed_dofs] = 1.0
    for j in fs.free_dofs:
        if any(t[i] for i in gs.I[j]):
            s_bar[j] = 1.0
    conflicts = [
        (int(j), int(i))
        for j in range(fs.d)
        if s_bar[j] == 1.0
        for i in sorted(gs.L[j])
        if t[i]
    ]
    active = np.flatnonzero(t)
    if len(active) == 0:
        return RoundedDesign(
            x=np.zeros(fs.m), t=t, s=s_bar, worst_case=np.inf,
            conflicts=conflicts, status="empty",
        )

    na = len(active)
    n = na + 1
    q = np.zeros(n)
    q[na] = 1.0
    G = sp.csr_matrix(
        (fs.lengths[active] * fs.xu / bounds.volume_bound, (np.zeros(na, int), np.arange(na))),
        shape=(1, n),
    )
    lb = np.zeros(n)
    lb[:na] = fs.xl / fs.xu
    lb[na] = -np.inf
    ub = np.full(n, np.inf)
    ub[:na] = 1.0
    Q_kn = model.Q / NMM_PER_JOULE
    block = ComplianceBlock(
        c=fs.d,
        d=fs.d,
        w_var=na,
        x_vars=np.arange(na),
        btil=fs.block.btil[:, active],
        s_vars=np.zeros(0, dtype=int),
        s_rows=np.zeros(0, dtype=int),
        q_rows=np.zeros((0, fs.d)),
        P_fixed=s_bar[:, None] * Q_kn,
    )
    problem = ConicProblem(n=n, q=q, G=G, h=np.array([1.0]), lb=lb, ub=ub, blocks=[block])
    sol = solve(problem, tol)
    if sol.status in (OPTIMAL, MAX_ITERATIONS):
        x_ref = np.zeros(fs.m)
        x_ref[active] = sol.v[:na] * fs.xu
        w_ref = float(sol.v[na])
        status = "refined" if sol.status == OPTIMAL else "refined_loose"
    else:
        # fall back to the masked iterate, priced by the exact oracle
        x_ref = np.where(t, np.maximum(state.x, fs.xl), 0.0)
        w_ref = worst_case_compliance(gs, bounds, x_ref, s_bar, model)
        status = f"refine_{sol.status}"
    return RoundedDesign(
        x=x_ref, t=t, s=s_bar, worst_case=w_ref, conflicts=conflicts, status=status
    )


def nodes_from_design(
    gs: GroundStructure,
    model: LoadUncertaintyModel,
    x: np.ndarray,
    rel_tol: float = 1e-6,
) -> np.ndarray:
    """Activation vector of the nodes a design actually touches."""
    ref = float(np.max(np.abs(x))) if len(x) else 1.0
    s_bar = np.zeros(gs.dof_count)
    for j in range(gs.dof_count):
        if sum(x[i] for i in gs.I[j]) > rel_tol * ref:
            s_bar[j] = 1.0
    s_bar[list(model.loaded_dofs)] = 1.0
    return s_bar


def solve_fixed_s(
    gs: GroundStructure,
    model: LoadUncertaintyModel,
    bounds: DesignBounds,
    s_bar: np.ndarray,
    members: np.ndarray | None = None,
    tol: ToleranceSet | None = None,
) -> tuple[np.ndarray, float]:
    """Best worst-case compliance with the activation pattern frozen.

    Minimizes w over nonnegative areas within the volume budget, the
    uncertainty ellipsoid masked by the given s_bar.  No lower or
    upper area bounds and no binaries: this prices a fixed node set,
    e.g. the one the nominal design uses.  members optionally narrows
    the allowed columns.
    """
    if members is None:
        members = np.arange(len(gs.members))
    members = np.asarray(members, dtype=int)
    na = len(members)
    n = na + 1
    q = np.zeros(n)
    q[na] = 1.0
    lengths = gs.member_lengths()
    G = sp.csr_matrix(
        (lengths[members] / bounds.volume_bound, (np.zeros(na, int), np.arange(na))),
        shape=(1, n),
    )
    lb = np.zeros(n)
    lb[na] = -np.inf
    B = geometry_matrix(gs)
    kappa = bounds.young_modulus / (lengths[members] * NMM_PER_JOULE)
    btil = B[:, members] * np.sqrt(kappa)
    d = gs.dof_count
    block = ComplianceBlock(
        c=d,
        d=d,
        w_var=na,
        x_vars=np.arange(na),
        btil=btil,
        s_vars=np.zeros(0, dtype=int),
        s_rows=np.zeros(0, dtype=int),
        q_rows=np.zeros((0, d)),
        P_fixed=np.asarray(s_bar, dtype=float)[:, None] * (model.Q / NMM_PER_JOULE),
    )
    problem = ConicProblem(n=n, q=q, G=G, h=np.array([1.0]), lb=lb, blocks=[block])
    sol = solve(problem, tol)
    if sol.status not in (OPTIMAL,):
        raise RuntimeError(f"fixed-node solve failed: {sol.status}")
    x = np.zeros(len(gs.members))
    x[members] = sol.v[:na]
    return x, float(sol.v[na])
