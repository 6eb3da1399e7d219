"""Dense primal-dual interior-point solver for the subproblem class.

Every optimization problem in this package has the same shape:

    minimize    q'v + v'Hv            (H symmetric PSD, possibly zero)
    subject to  A v  = b              (optional equalities)
                G v <= h              (optional inequality rows)
                lb <= v <= ub         (entrywise, +-inf allowed)
                C_l + sum_i v_i F_li  is PSD   for each block l

The solver is an infeasible-start Mehrotra predictor-corrector method.
Inequality rows and bounds carry scalar slacks, PSD blocks carry matrix
slacks with an HKM-style linearization of S Y = sigma mu I; all slack
residuals are driven to zero simultaneously, so no feasible starting
point is needed.  The quadratic objective enters the KKT system
directly.  A common primal-dual step length keeps the Newton
cancellation exact in the presence of H.

Blocks supply their own Schur-complement contribution B[i,j] =
tr(F_i S^-1 F_j Y).  A generic dense block works for anything; the
compliance block implements the structured formulas for the robustness
LMI [[w I, (diag(s) Q)'],[diag(s) Q, K(x)]] so large instances stay
O(d^2 m + d m^2) per iteration instead of O(n^2 d^2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .mechanics import (
    DesignBounds,
    LoadUncertaintyModel,
    NMM_PER_JOULE,
    geometry_matrix,
)
from .model import GroundStructure

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
MAX_ITERATIONS = "max_iterations"
NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class ToleranceSet:
    feas: float = 1e-8
    gap: float = 1e-8
    max_iter: int = 200


class GenericPsdBlock:
    """PSD block C + sum_i v_i F_i with explicit dense coefficient matrices."""

    def __init__(self, size: int, C: np.ndarray | None, coeffs: dict[int, np.ndarray]):
        self.size = size
        self.C = np.zeros((size, size)) if C is None else np.asarray(C, dtype=float)
        self.idx = np.array(sorted(coeffs), dtype=int)
        self.F = [0.5 * (np.asarray(coeffs[i], dtype=float) + np.asarray(coeffs[i]).T) for i in self.idx]
        if self.C.shape != (size, size):
            raise ValueError("constant term has wrong shape")
        for F in self.F:
            if F.shape != (size, size):
                raise ValueError("coefficient has wrong shape")

    def variables(self) -> np.ndarray:
        return self.idx

    def lin(self, dv: np.ndarray) -> np.ndarray:
        W = np.zeros((self.size, self.size))
        for i, F in zip(self.idx, self.F):
            W += dv[i] * F
        return W

    def matrix(self, v: np.ndarray) -> np.ndarray:
        return self.C + self.lin(v)

    def adjoint(self, M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        vals = np.array([float(np.sum(F * M)) for F in self.F])
        return self.idx, vals

    def schur(self, T: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        k = len(self.F)
        B = np.empty((k, k))
        TFY = [T @ F @ Y for F in self.F]
        for a in range(k):
            Fa = self.F[a]
            for b in range(k):
                B[a, b] = float(np.sum(Fa * TFY[b].T))
        return self.idx, B


class ComplianceBlock:
    """Structured robustness-LMI block [[w I_c, P'], [P, K]].

    P = P_fixed + sum_a v_{s_a} e_{row_a} q_a' (d x c) and
    K = K0 + sum_i v_{x_i} btil_i btil_i' where the btil columns already
    absorb the axial stiffness factors.  c is the number of load
    columns: 1 for the nominal problem, d for the robust one.
    """

    def __init__(
        self,
        c: int,
        d: int,
        w_var: int,
        x_vars: np.ndarray,
        btil: np.ndarray,
        s_vars: np.ndarray,
        s_rows: np.ndarray,
        q_rows: np.ndarray,
        P_fixed: np.ndarray,
        K0: np.ndarray | None = None,
    ):
        self.c = c
        self.d = d
        self.size = c + d
        self.w_var = int(w_var)
        self.x_vars = np.asarray(x_vars, dtype=int)
        self.btil = np.asarray(btil, dtype=float)
        self.s_vars = np.asarray(s_vars, dtype=int)
        self.s_rows = np.asarray(s_rows, dtype=int)
        self.q_rows = np.asarray(q_rows, dtype=float).reshape(len(self.s_vars), c)
        self.P_fixed = np.asarray(P_fixed, dtype=float)
        self.K0 = np.zeros((d, d)) if K0 is None else np.asarray(K0, dtype=float)
        if self.btil.shape != (d, len(self.x_vars)):
            raise ValueError("btil has wrong shape")
        if self.P_fixed.shape != (d, c):
            raise ValueError("P_fixed has wrong shape")
        self._idx = np.concatenate(
            [[self.w_var], self.x_vars, self.s_vars]
        ).astype(int)

    def variables(self) -> np.ndarray:
        return self._idx

    def _assemble(self, w: float, x: np.ndarray, s: np.ndarray, constant: bool) -> np.ndarray:
        c, d = self.c, self.d
        W = np.zeros((self.size, self.size))
        W[:c, :c] = w * np.eye(c)
        P = (self.P_fixed if constant else np.zeros((d, c))).copy()
        if len(self.s_vars):
            P[self.s_rows] += s[:, None] * self.q_rows
        K = (self.btil * x) @ self.btil.T
        if constant:
            K = K + self.K0
        W[:c, c:] = P.T
        W[c:, :c] = P
        W[c:, c:] = 0.5 * (K + K.T)
        return W

    def lin(self, dv: np.ndarray) -> np.ndarray:
        return self._assemble(
            dv[self.w_var], dv[self.x_vars], dv[self.s_vars], constant=False
        )

    def matrix(self, v: np.ndarray) -> np.ndarray:
        return self._assemble(v[self.w_var], v[self.x_vars], v[self.s_vars], constant=True)

    def adjoint(self, M: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = self.c
        M11 = M[:c, :c]
        M12 = M[:c, c:]
        M22 = M[c:, c:]
        w_val = float(np.trace(M11))
        x_vals = np.sum(self.btil * (M22 @ self.btil), axis=0)
        if len(self.s_vars):
            Z = self.q_rows @ M12  # (ks, d)
            s_vals = 2.0 * Z[np.arange(len(self.s_vars)), self.s_rows]
        else:
            s_vals = np.zeros(0)
        return self._idx, np.concatenate([[w_val], x_vals, s_vals])

    def schur(self, T: np.ndarray, Y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        c = self.c
        rows = self.s_rows
        T11, T12, T22 = T[:c, :c], T[:c, c:], T[c:, c:]
        Y11, Y12, Y22 = Y[:c, :c], Y[:c, c:], Y[c:, c:]
        TB = T22 @ self.btil  # (d, mx)
        YB = Y22 @ self.btil
        P1 = T12 @ self.btil  # (c, mx)
        P2 = Y12 @ self.btil
        B_ww = float(np.sum(T11 * Y11))
        B_wx = np.sum(P1 * P2, axis=0)  # equals both tr-orders
        B_xx = (self.btil.T @ TB) * (self.btil.T @ YB)

        ks = len(self.s_vars)
        mx = len(self.x_vars)
        n_loc = 1 + mx + ks
        B = np.empty((n_loc, n_loc))
        B[0, 0] = B_ww
        B[0, 1 : 1 + mx] = B_wx
        B[1 : 1 + mx, 0] = B_wx
        B[1 : 1 + mx, 1 : 1 + mx] = B_xx

        if ks:
            q = self.q_rows  # (ks, c)
            ar = np.arange(ks)
            # w-s couplings
            e1 = (q @ (Y11 @ T12))[ar, rows]
            e2 = (Y12.T @ (T11 @ q.T))[rows, ar]
            B_ws = e1 + e2
            f1 = (q @ (T11 @ Y12))[ar, rows]
            f2 = (T12.T @ (Y11 @ q.T))[rows, ar]
            B_sw = f1 + f2
            # s-x couplings (symmetric in the trace pairing)
            B_sx = TB[rows, :] * (q @ P2) + (q @ P1) * YB[rows, :]
            # s-s
            QT12 = q @ T12  # (ks, d)
            QY12 = q @ Y12
            G1 = (T12.T @ q.T)[rows, :]  # e_row' T21 q_b
            H1 = (Y12.T @ q.T)[rows, :]
            B_ss = (
                T22[np.ix_(rows, rows)] * (q @ Y11 @ q.T)
                + G1 * H1.T
                + QT12[:, rows] * QY12[:, rows].T
                + (q @ T11 @ q.T) * Y22[np.ix_(rows, rows)]
            )
            B[0, 1 + mx :] = B_ws
            B[1 + mx :, 0] = B_sw
            B[1 : 1 + mx, 1 + mx :] = B_sx.T
            B[1 + mx :, 1 : 1 + mx] = B_sx
            B[1 + mx :, 1 + mx :] = B_ss
        return self._idx, B


@dataclass
class ConicProblem:
    """See module docstring for the problem shape."""

    n: int
    q: np.ndarray
    H: sp.spmatrix | np.ndarray | None = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    G: sp.spmatrix | None = None
    h: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    blocks: list = field(default_factory=list)

    def __post_init__(self) -> None:
        self.q = np.asarray(self.q, dtype=float)
        if self.q.shape != (self.n,):
            raise ValueError("q has wrong length")
        if self.lb is None:
            self.lb = np.full(self.n, -np.inf)
        if self.ub is None:
            self.ub = np.full(self.n, np.inf)
        self.lb = np.asarray(self.lb, dtype=float)
        self.ub = np.asarray(self.ub, dtype=float)
        if self.A is not None:
            self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
            self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if self.G is not None and not sp.issparse(self.G):
            self.G = sp.csr_matrix(np.atleast_2d(self.G))
        if self.h is not None:
            self.h = np.atleast_1d(np.asarray(self.h, dtype=float))

    def objective(self, v: np.ndarray) -> float:
        val = float(self.q @ v)
        if self.H is not None:
            val += float(v @ (self.H @ v))
        return val


@dataclass
class ConicSolution:
    """Solver outcome.

    status "optimal" certifies the primal residual and relative gap at
    tolerance.  On dual-degenerate instances (nonstrict complementarity
    is the norm for truss topology optima) the dual residual can floor
    a few orders above tol.feas; such runs are still reported optimal
    once the floor is detected, capped at 1e4 * tol.feas, with the true
    residuals stored here.  The cap is waived when the gap and the
    complementarity are both closed and the step sizes have collapsed:
    nothing can move anymore, only the dual certificate stays loose.
    """

    status: str
    v: np.ndarray
    objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int

    def dual_bound(self, scale: float = 1.0) -> float:
        # lower bound on the optimum; the dual-residual term covers
        # stalled-dual exits where the multipliers are mildly infeasible
        return self.objective - self.gap - self.dual_residual * scale - abs(self.objective) * 1e-9


def _chol_psd_step(Wmat: np.ndarray, dW: np.ndarray) -> float:
    """Largest alpha with Wmat + alpha dW staying PSD (inf if unconstrained)."""
    try:
        Lw = np.linalg.cholesky(Wmat)
        Z = sla.solve_triangular(Lw, dW, lower=True)
        Z = sla.solve_triangular(Lw, Z.T, lower=True).T
    except np.linalg.LinAlgError:
        # near-singular iterate: floor the spectrum and use the
        # congruent pencil instead
        lam, V = np.linalg.eigh(Wmat)
        lam = np.maximum(lam, 1e-14 * max(float(lam[-1]), 1.0))
        U = V.T @ dW @ V
        Z = U / np.sqrt(lam)[:, None] / np.sqrt(lam)[None, :]
    lam_min = float(np.linalg.eigvalsh(0.5 * (Z + Z.T))[0])
    if lam_min >= 0:
        return np.inf
    return -1.0 / lam_min


def _chol_or_repair(S: np.ndarray) -> np.ndarray | None:
    """Cholesky factor of S, repairing a numerically semidefinite iterate."""
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        lam, V = np.linalg.eigh(S)
        floor = 1e-13 * max(float(lam[-1]), 1.0)
        if lam[-1] <= 0 or not np.all(np.isfinite(lam)):
            return None
        S[:] = (V * np.maximum(lam, floor)) @ V.T
        S[:] = 0.5 * (S + S.T)
        try:
            return np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            return None


def _vec_step(x: np.ndarray, dx: np.ndarray) -> float:
    neg = dx < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / dx[neg]))


class _StepFailure(Exception):
    """Search direction rendered non-finite by vanished slacks."""


# diagnostic stash of the last solve's terminal cone state; not public API
_final_state: dict | None = None


def solve(
    problem: ConicProblem,
    tol: ToleranceSet | None = None,
    on_iteration=None,
) -> ConicSolution:
    """Run the interior-point method; see ConicSolution for the certificate.

    on_iteration, if given, is called with a small dict of convergence
    measures once per iteration (used by the CLI trace output).
    """
    tol = tol or ToleranceSet()
    n = problem.n
    q_raw = problem.q
    H_raw = problem.H

    # objective scaling keeps the dual iterates O(1) across the huge
    # penalty-parameter range the CCP sweeps through
    omega = max(1.0, float(np.max(np.abs(q_raw))) if n else 1.0)
    if H_raw is not None:
        Hmax = abs(H_raw).max()
        omega = max(omega, float(Hmax))
    q = q_raw / omega
    H = None
    if H_raw is not None:
        H = sp.csr_matrix(H_raw) / omega

    A, b = problem.A, problem.b
    mE = 0 if A is None else A.shape[0]
    G, h = problem.G, problem.h
    mI = 0 if G is None else G.shape[0]
    lb, ub = problem.lb, problem.ub
    Lm = np.isfinite(lb)
    Um = np.isfinite(ub)
    blocks = problem.blocks
    nu = mI + int(np.sum(Lm)) + int(np.sum(Um)) + sum(bl.size for bl in blocks)
    if nu == 0:
        raise ValueError("problem has no inequalities, bounds, or blocks")

    # starting point
    v = np.zeros(n)
    both = Lm & Um
    v[both] = 0.5 * (lb[both] + ub[both])
    only_l = Lm & ~Um
    v[only_l] = lb[only_l] + 1.0
    only_u = Um & ~Lm
    v[only_u] = ub[only_u] - 1.0

    slv = np.maximum(1.0, (v - lb)[Lm])
    zl = np.ones(int(np.sum(Lm)))
    suv = np.maximum(1.0, (ub - v)[Um])
    zu = np.ones(int(np.sum(Um)))
    if mI:
        gap0 = h - G @ v
        g = np.where(gap0 >= 1.0, gap0, 1.0)
        lam = np.ones(mI)
    else:
        g = np.zeros(0)
        lam = np.zeros(0)
    y = np.zeros(mE)
    S_list, Y_list = [], []
    for bl in blocks:
        W0 = bl.matrix(v)
        W0 = 0.5 * (W0 + W0.T)
        lam_min = float(np.linalg.eigvalsh(W0)[0]) if bl.size else 0.0
        shift = 1.0 + max(0.0, -1.5 * lam_min)
        S_list.append(W0 + shift * np.eye(bl.size))
        Y_list.append(np.eye(bl.size))

    GT = G.T.tocsr() if mI else None
    q_norm = 1.0 + float(np.max(np.abs(q))) if n else 1.0
    b_norm = 1.0 + (float(np.max(np.abs(b))) if mE else 0.0)
    h_norm = 1.0 + (float(np.max(np.abs(h))) if mI else 0.0)
    lb_norm = 1.0 + (float(np.max(np.abs(lb[Lm]))) if np.any(Lm) else 0.0)
    ub_norm = 1.0 + (float(np.max(np.abs(ub[Um]))) if np.any(Um) else 0.0)
    C_norms = [1.0 + float(np.linalg.norm(bl.C if hasattr(bl, "C") else bl.matrix(np.zeros(n)))) for bl in blocks]

    def residuals():
        rd = q.copy()
        if H is not None:
            rd += 2.0 * (H @ v)
        if mE:
            rd += A.T @ y
        if mI:
            rd += GT @ lam
        rd[Lm] -= zl
        rd[Um] += zu
        S_mats = []
        for bl, Y in zip(blocks, Y_list):
            idx, vals = bl.adjoint(Y)
            rd[idx] -= vals
            S_mats.append(bl.matrix(v))
        rE = (A @ v - b) if mE else np.zeros(0)
        rI = (G @ v + g - h) if mI else np.zeros(0)
        rLv = (v - lb)[Lm] - slv
        rUv = (ub - v)[Um] - suv
        rS = [0.5 * (Sm + Sm.T) - S for Sm, S in zip(S_mats, S_list)]
        return rd, rE, rI, rLv, rUv, rS

    mu0 = None
    pres_hist: list[float] = []
    dres_hist: list[float] = []
    tiny_steps = 0
    center_next = False
    last_step: dict[str, float] = {}

    def breakdown_status() -> str:
        # overflow on vanished slacks: an infeasible problem drives the
        # complementarity to zero while the primal residual stays put
        if mu0 is not None and pres > 1e2 * tol.feas and mu < 1e-6 * mu0:
            return INFEASIBLE
        return NUMERICAL_FAILURE
    stall_streak = 0
    hard_stall = 0
    best_score = np.inf
    best_state = None
    it = 0
    status = MAX_ITERATIONS
    dual_stall_cap = 1e4 * tol.feas

    def snapshot():
        return (
            v.copy(), y.copy(), lam.copy(), g.copy(), slv.copy(), zl.copy(),
            suv.copy(), zu.copy(), [S.copy() for S in S_list],
            [Y.copy() for Y in Y_list],
        )

    for it in range(1, tol.max_iter + 1):
        rd, rE, rI, rLv, rUv, rS = residuals()
        comp = float(g @ lam) + float(slv @ zl) + float(suv @ zu)
        comp += sum(float(np.sum(S * Y)) for S, Y in zip(S_list, Y_list))
        mu = comp / nu
        if mu0 is None:
            mu0 = mu

        obj = float(q @ v) + (float(v @ (H @ v)) if H is not None else 0.0)
        pres_terms = [
            (float(np.max(np.abs(rE))) / b_norm) if mE else 0.0,
            (float(np.max(np.abs(rI))) / h_norm) if mI else 0.0,
            (float(np.max(np.abs(rLv))) / lb_norm) if rLv.size else 0.0,
            (float(np.max(np.abs(rUv))) / ub_norm) if rUv.size else 0.0,
        ]
        for rSm, cn in zip(rS, C_norms):
            pres_terms.append(float(np.linalg.norm(rSm)) / cn)
        pres = max(pres_terms) if pres_terms else 0.0
        grad_norm = q_norm + (float(np.max(np.abs(2.0 * (H @ v)))) if H is not None else 0.0)
        dres = float(np.max(np.abs(rd))) / grad_norm if n else 0.0
        relgap = comp / (1.0 + abs(obj))
        pres_hist.append(pres)
        dres_hist.append(dres)
        if on_iteration is not None:
            info = {"iter": it, "obj": obj * omega, "pres": pres, "dres": dres,
                    "relgap": relgap, "mu": mu}
            info.update(last_step)
            on_iteration(info)

        if not np.isfinite(mu) or not np.isfinite(pres) or not np.isfinite(dres):
            status = NUMERICAL_FAILURE
            break
        score = max(pres, dres, relgap)
        if score < best_score:
            best_score = score
            best_state = snapshot()
            best_measures = (pres, dres, relgap)
        if pres <= tol.feas and dres <= tol.feas and relgap <= tol.gap:
            status = OPTIMAL
            break
        # dual-degenerate stall: primal certificate holds, dual residual
        # has stopped improving a little above tolerance
        if pres <= tol.feas and relgap <= tol.gap and dres <= dual_stall_cap:
            stall_streak += 1
            if stall_streak >= 8 and dres > 0.6 * dres_hist[-8]:
                status = OPTIMAL
                break
        else:
            stall_streak = 0
        # hard dual stall: primal residual, gap and complementarity all
        # closed while the steps have collapsed, so the dual residual
        # floor is genuine (strict complementarity fails) and further
        # sweeps only burn time; keep the iterate, residuals tell all
        if (
            pres <= tol.feas
            and abs(relgap) <= tol.gap
            and last_step
            and max(last_step["alpha_p"], last_step["alpha_d"]) < 0.05
        ):
            hard_stall += 1
            if hard_stall >= 12 and dres > 0.6 * dres_hist[-12]:
                status = OPTIMAL
                break
        else:
            hard_stall = 0
        # runaway detection: restore the best iterate seen so far
        if best_score < 1e-6 and score > max(1e3 * best_score, 1e-3):
            (v, y, lam, g, slv, zl, suv, zu, S_list, Y_list) = best_state
            bp, bd, brg = best_measures
            status = (
                OPTIMAL
                if bp <= tol.feas and brg <= tol.gap and bd <= dual_stall_cap
                else MAX_ITERATIONS
            )
            break
        if obj < -1e12 and pres <= math.sqrt(tol.feas):
            status = UNBOUNDED
            break
        if (
            it > 25
            and mu < 1e-10 * mu0
            and pres > max(1e-6, 1e2 * tol.feas)
            and pres > 0.5 * pres_hist[-20]
        ):
            status = INFEASIBLE
            break

        # factor the matrix slacks (repairing semidefinite drift in place)
        T_list = []
        fail = False
        for S in S_list:
            LS = _chol_or_repair(S)
            if LS is None:
                fail = True
                break
            Li = sla.solve_triangular(LS, np.eye(S.shape[0]), lower=True)
            T_list.append(Li.T @ Li)
        if fail:
            status = NUMERICAL_FAILURE
            break

        # Schur matrix M = 2H + bound terms + G' Dg G + block terms
        M = np.zeros((n, n))
        if H is not None:
            M += 2.0 * H.toarray()
        with np.errstate(over="ignore", invalid="ignore"):
            dl = zl / slv
            du = zu / suv
        if not (np.all(np.isfinite(dl)) and np.all(np.isfinite(du))):
            status = breakdown_status()
            break
        M[np.ix_(np.where(Lm)[0], np.where(Lm)[0])] += np.diag(dl)
        M[np.ix_(np.where(Um)[0], np.where(Um)[0])] += np.diag(du)
        if mI:
            dg = lam / g
            if not np.all(np.isfinite(dg)):
                status = breakdown_status()
                break
            M += (GT @ sp.diags(dg) @ G).toarray()
        Bacc = np.zeros((n, n))
        for bl, T, Y in zip(blocks, T_list, Y_list):
            idx, Bl = bl.schur(T, Y)
            Bacc[np.ix_(idx, idx)] += Bl
        M += 0.5 * (Bacc + Bacc.T)

        base_reg = 1e-12 * (1.0 + float(np.max(np.diag(M))) if n else 1.0)
        chol = None
        reg = base_reg
        for _ in range(6):
            Mreg = M + reg * np.eye(n)
            try:
                chol = sla.cho_factor(Mreg, lower=True)
                break
            except np.linalg.LinAlgError:
                reg *= 100.0
        if chol is None:
            status = NUMERICAL_FAILURE
            break

        if mE:
            MinvAT = sla.cho_solve(chol, A.T)
            AMA = A @ MinvAT
            try:
                chol_E = sla.cho_factor(AMA, lower=True)
            except np.linalg.LinAlgError:
                status = NUMERICAL_FAILURE
                break

        def kkt_solve(rhs: np.ndarray, rE_: np.ndarray):
            # returns (dv, dy) solving [M A'; A 0] [dv; dy] = [rhs; -rE_]
            if not mE:
                dv = sla.cho_solve(chol, rhs)
                dv += sla.cho_solve(chol, rhs - Mreg @ dv)
                return dv, np.zeros(0)
            t1 = sla.cho_solve(chol, rhs)
            dy = sla.cho_solve(chol_E, A @ t1 + rE_)
            dv = t1 - MinvAT @ dy
            return dv, dy

        def directions(cc_g, cc_l, cc_u, RY_list):
            with np.errstate(over="ignore", invalid="ignore"):
                rhs = -rd.copy()
                if mI:
                    rhs -= GT @ (cc_g / g + dg * rI)
                tmp = np.zeros(n)
                tmp[Lm] = cc_l / slv - dl * rLv
                rhs += tmp
                tmp = np.zeros(n)
                tmp[Um] = cc_u / suv + du * rUv
                rhs -= tmp
            for bl, RY in zip(blocks, RY_list):
                idx, vals = bl.adjoint(0.5 * (RY + RY.T))
                rhs[idx] += vals
            if not np.all(np.isfinite(rhs)):
                raise _StepFailure
            dv, dy = kkt_solve(rhs, rE)
            dgv = (-rI - G @ dv) if mI else np.zeros(0)
            dlam = (cc_g / g + dg * rI + dg * (G @ dv)) if mI else np.zeros(0)
            dsl = dv[Lm] + rLv
            dzl = cc_l / slv - dl * rLv - dl * dv[Lm]
            dsu = rUv - dv[Um]
            dzu = cc_u / suv + du * rUv + du * dv[Um]
            dS_list, dY_list = [], []
            for bl, T, Y, RY, rSm in zip(blocks, T_list, Y_list, RY_list, rS):
                lin_dv = bl.lin(dv)
                # rS is already folded into RY; only the variable part
                # of dS enters the dY recovery
                dY = RY - T @ lin_dv @ Y
                dY = 0.5 * (dY + dY.T)
                dS = lin_dv + rSm
                dS_list.append(0.5 * (dS + dS.T))
                dY_list.append(dY)
            return dv, dy, dgv, dlam, dsl, dzl, dsu, dzu, dS_list, dY_list

        def step_length(dgv, dlam, dsl, dzl, dsu, dzu, dS_list, dY_list, tau):
            ap = min(_vec_step(g, dgv), _vec_step(slv, dsl), _vec_step(suv, dsu))
            ad = min(_vec_step(lam, dlam), _vec_step(zl, dzl), _vec_step(zu, dzu))
            for S, dS in zip(S_list, dS_list):
                ap = min(ap, _chol_psd_step(S, dS))
            for Y, dY in zip(Y_list, dY_list):
                ad = min(ad, _chol_psd_step(Y, dY))
            return min(1.0, tau * ap), min(1.0, tau * ad)

        did_center = center_next
        if center_next:
            # the previous step was blocked almost immediately, which means
            # the iterate has drifted far from the central path; take one
            # pure centering step (sigma = 1, no second-order term) to
            # restore proximity before attempting further progress
            center_next = False
            sigma = 1.0
            alpha_aff = 0.0
            cc_g = sigma * mu - lam * g
            cc_l = sigma * mu - zl * slv
            cc_u = sigma * mu - zu * suv
            RY_list = [
                T @ (sigma * mu * np.eye(Y.shape[0])) - Y - T @ rSm @ Y
                for T, Y, rSm in zip(T_list, Y_list, rS)
            ]
        else:
            # predictor
            RY_aff = [
                -Y - T @ rSm @ Y for T, Y, rSm in zip(T_list, Y_list, rS)
            ]
            try:
                aff = directions(-lam * g, -zl * slv, -zu * suv, RY_aff)
            except (_StepFailure, ValueError, np.linalg.LinAlgError):
                status = breakdown_status()
                break
            ap_a, ad_a = step_length(*aff[2:], tau=1.0)
            alpha_aff = min(ap_a, ad_a)
            comp_aff = float((g + alpha_aff * aff[2]) @ (lam + alpha_aff * aff[3]))
            comp_aff += float((slv + alpha_aff * aff[4]) @ (zl + alpha_aff * aff[5]))
            comp_aff += float((suv + alpha_aff * aff[6]) @ (zu + alpha_aff * aff[7]))
            for S, dS, Y, dY in zip(S_list, aff[8], Y_list, aff[9]):
                comp_aff += float(np.sum((S + alpha_aff * dS) * (Y + alpha_aff * dY)))
            mu_aff = max(comp_aff, 0.0) / nu
            sigma = min(0.999, max(1e-8, (mu_aff / mu) ** 3))

            # corrector
            cc_g = sigma * mu - lam * g - aff[3] * aff[2]
            cc_l = sigma * mu - zl * slv - aff[5] * aff[4]
            cc_u = sigma * mu - zu * suv - aff[7] * aff[6]
            RY_list = []
            for T, Y, rSm, dSa, dYa in zip(T_list, Y_list, rS, aff[8], aff[9]):
                RY = T @ (sigma * mu * np.eye(Y.shape[0]) - dSa @ dYa) - Y - T @ rSm @ Y
                RY_list.append(RY)
        try:
            dirs = directions(cc_g, cc_l, cc_u, RY_list)
        except (_StepFailure, ValueError, np.linalg.LinAlgError):
            status = breakdown_status()
            break
        tau = 0.99 if relgap > 1e-4 else 0.998
        ap, ad = step_length(*dirs[2:], tau=tau)
        if H is None:
            # pure conic problem: primal and dual residuals decouple,
            # so independent step lengths are exact
            alpha_p, alpha_d = ap, ad
        else:
            alpha_p = alpha_d = min(ap, ad)
        if max(alpha_p, alpha_d) < 1e-11:
            tiny_steps += 1
            if tiny_steps >= 3:
                status = NUMERICAL_FAILURE
                break
        else:
            tiny_steps = 0

        dv, dy, dgv, dlam, dsl, dzl, dsu, dzu, dS_list, dY_list = dirs

        def comp_at(ap_: float, ad_: float) -> float:
            c = float((g + ap_ * dgv) @ (lam + ad_ * dlam))
            c += float((slv + ap_ * dsl) @ (zl + ad_ * dzl))
            c += float((suv + ap_ * dsu) @ (zu + ad_ * dzu))
            for S, dS, Y, dY in zip(S_list, dS_list, Y_list, dY_list):
                c += float(np.sum((S + ap_ * dS) * (Y + ad_ * dY)))
            return c

        # damp steps that would blow up complementarity
        for _ in range(6):
            if comp_at(alpha_p, alpha_d) <= 10.0 * comp + 1e-12:
                break
            alpha_p *= 0.5
            alpha_d *= 0.5
        v = v + alpha_p * dv
        y = y + alpha_d * dy
        if mI:
            g = g + alpha_p * dgv
            lam = lam + alpha_d * dlam
        slv = slv + alpha_p * dsl
        zl = zl + alpha_d * dzl
        suv = suv + alpha_p * dsu
        zu = zu + alpha_d * dzu
        S_list = [S + alpha_p * dS for S, dS in zip(S_list, dS_list)]
        Y_list = [Y + alpha_d * dY for Y, dY in zip(Y_list, dY_list)]
        if not did_center and min(alpha_p, alpha_d) < 0.05 and pres < 1e-12:
            center_next = True
        last_step = {"sigma": sigma, "alpha_aff": alpha_aff,
                     "alpha_p": alpha_p, "alpha_d": alpha_d,
                     "center": float(did_center)}

    if status in (MAX_ITERATIONS, NUMERICAL_FAILURE) and best_state is not None:
        (v, y, lam, g, slv, zl, suv, zu, S_list, Y_list) = best_state
        bp, bd, brg = best_measures
        if bp <= tol.feas and brg <= tol.gap and bd <= dual_stall_cap:
            status = OPTIMAL

    rd, rE, rI, rLv, rUv, rS = residuals()
    comp = float(g @ lam) + float(slv @ zl) + float(suv @ zu)
    comp += sum(float(np.sum(S * Y)) for S, Y in zip(S_list, Y_list))
    obj_raw = problem.objective(v)
    global _final_state
    _final_state = {"S": S_list, "Y": Y_list, "mu": comp / nu, "zl": zl,
                    "slv": slv, "lam": lam, "g": g}
    pres_terms = [
        (float(np.max(np.abs(rE))) / b_norm) if mE else 0.0,
        (float(np.max(np.abs(rI))) / h_norm) if mI else 0.0,
        (float(np.max(np.abs(rLv))) / lb_norm) if rLv.size else 0.0,
        (float(np.max(np.abs(rUv))) / ub_norm) if rUv.size else 0.0,
    ] + [float(np.linalg.norm(rSm)) / cn for rSm, cn in zip(rS, C_norms)]
    grad_norm = q_norm + (float(np.max(np.abs(2.0 * (H @ v)))) if H is not None else 0.0)
    return ConicSolution(
        status=status,
        v=v,
        objective=obj_raw,
        primal_residual=max(pres_terms) if pres_terms else 0.0,
        dual_residual=(float(np.max(np.abs(rd))) / grad_norm) if n else 0.0,
        gap=comp * omega,
        iterations=it,
    )


def dump_problem(problem: ConicProblem, path: str) -> None:
    """Plain-text dump, one line per nonzero, for external cross-checks.

    Format (whitespace-separated):
        problem <n>
        q <i> <value>
        H <i> <j> <value>            (only upper triangle)
        A <row> <i> <value> / b <row> <value>
        G <row> <i> <value> / h <row> <value>
        lb <i> <value> / ub <i> <value>     (finite entries only)
        block <l> <size>
        C <l> <i> <j> <value>        (upper triangle)
        F <l> <var> <i> <j> <value>  (upper triangle)
    """
    lines = [f"problem {problem.n}"]
    for i, val in enumerate(problem.q):
        if val != 0.0:
            lines.append(f"q {i} {val!r}")
    if problem.H is not None:
        Hc = sp.coo_matrix(problem.H)
        for r, c_, val in zip(Hc.row, Hc.col, Hc.data):
            if r <= c_ and val != 0.0:
                lines.append(f"H {r} {c_} {val!r}")
    if problem.A is not None:
        for r in range(problem.A.shape[0]):
            for i in np.nonzero(problem.A[r])[0]:
                lines.append(f"A {r} {i} {problem.A[r, i]!r}")
            lines.append(f"b {r} {problem.b[r]!r}")
    if problem.G is not None:
        Gc = problem.G.tocoo()
        for r, c_, val in zip(Gc.row, Gc.col, Gc.data):
            if val != 0.0:
                lines.append(f"G {r} {c_} {val!r}")
        for r, val in enumerate(problem.h):
            lines.append(f"h {r} {val!r}")
    for i in range(problem.n):
        if np.isfinite(problem.lb[i]):
            lines.append(f"lb {i} {problem.lb[i]!r}")
        if np.isfinite(problem.ub[i]):
            lines.append(f"ub {i} {problem.ub[i]!r}")
    for l, bl in enumerate(problem.blocks):
        lines.append(f"block {l} {bl.size}")
        C = bl.matrix(np.zeros(problem.n))
        for i in range(bl.size):
            for j in range(i, bl.size):
                if C[i, j] != 0.0:
                    lines.append(f"C {l} {i} {j} {C[i, j]!r}")
        for var in bl.variables():
            e = np.zeros(problem.n)
            e[var] = 1.0
            F = bl.lin(e)
            for i in range(bl.size):
                for j in range(i, bl.size):
                    if F[i, j] != 0.0:
                        lines.append(f"F {l} {var} {i} {j} {F[i, j]!r}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def nominal_lmi_block(
    gs: GroundStructure,
    model: LoadUncertaintyModel,
    bounds: DesignBounds,
    x_vars: np.ndarray,
    w_var: int,
    members: np.ndarray | None = None,
) -> ComplianceBlock:
    """Single-load-column block [[w, p~'],[p~, K(x)]] in kN/mm units."""
    B = geometry_matrix(gs)
    lengths = gs.member_lengths()
    if members is None:
        members = np.arange(len(gs.members))
    kappa = bounds.young_modulus / (lengths[members] * NMM_PER_JOULE)
    btil = B[:, members] * np.sqrt(kappa)
    d = gs.dof_count
    P_fixed = (model.nominal / NMM_PER_JOULE).reshape(d, 1)
    return ComplianceBlock(
        c=1,
        d=d,
        w_var=w_var,
        x_vars=x_vars,
        btil=btil,
        s_vars=np.zeros(0, dtype=int),
        s_rows=np.zeros(0, dtype=int),
        q_rows=np.zeros((0, 1)),
        P_fixed=P_fixed,
    )


def solve_nominal(
    gs: GroundStructure,
    model: LoadUncertaintyModel,
    bounds: DesignBounds,
    tol: ToleranceSet | None = None,
) -> tuple[np.ndarray, float]:
    """Nominal compliance minimization: min w s.t. the single-load LMI,
    x >= 0 and the volume budget.  No cross-section upper bounds or
    binaries; this is the initial-point problem of the CCP run.
    """
    m = len(gs.members)
    n = m + 1
    x_vars = np.arange(m)
    w_var = m
    q = np.zeros(n)
    q[w_var] = 1.0
    lengths = gs.member_lengths()
    G = sp.csr_matrix((lengths / bounds.volume_bound).reshape(1, m), shape=(1, n))
    h = np.array([1.0])
    lb = np.full(n, -np.inf)
    lb[x_vars] = 0.0
    block = nominal_lmi_block(gs, model, bounds, x_vars, w_var)
    problem = ConicProblem(n=n, q=q, G=G, h=h, lb=lb, blocks=[block])
    sol = solve(problem, tol)
    if sol.status not in (OPTIMAL,):
        raise RuntimeError(f"nominal solve failed: {sol.status}")
    return sol.v[x_vars].copy(), float(sol.v[w_var])
