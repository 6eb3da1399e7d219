"""Truss linear elasticity and the load-uncertainty machinery.

Stiffness assembly and compliance follow standard small-deformation
linear truss theory: K(x) = sum_i x_i (E / c_i) b_i b_i^T with b_i the
global direction vector of member i.  The uncertainty model places an
ellipsoid of loads on the existing nodes: P(s) = { diag(s) Q e : |e| <= 1 }
where column 1 of Q is the nominal load and the remaining columns are
alpha times an orthonormal basis of its orthogonal complement.

Unit convention: lengths mm, areas mm^2, forces N, E in N/mm^2.
Compliance values are returned in joules (N mm / 1000).  The LMI block
is assembled in kN/mm units so that the w entry carries joules directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import GroundStructure

# eigenvalues below RANK_RTOL * lambda_max count as zero in pseudo-inverses
RANK_RTOL = 1e-12
# p is in range(K) iff ||(I - K K^+) p|| <= RANGE_RTOL ||p||
RANGE_RTOL = 1e-8

NMM_PER_JOULE = 1000.0


@dataclass(frozen=True)
class DesignBounds:
    """Cross-section bounds (mm^2), volume bound (mm^3), Young modulus (N/mm^2)."""

    x_lower: float
    x_upper: float
    volume_bound: float
    young_modulus: float = 20000.0

    def __post_init__(self) -> None:
        if not (0 <= self.x_lower <= self.x_upper):
            raise ValueError("need 0 <= x_lower <= x_upper")
        if self.volume_bound <= 0 or self.young_modulus <= 0:
            raise ValueError("volume bound and Young modulus must be positive")


@dataclass(frozen=True)
class LoadUncertaintyModel:
    """Nominal load p_tilde (N), magnitude alpha (N), matrix Q, loaded dofs J_f."""

    nominal: np.ndarray
    alpha: float
    Q: np.ndarray
    loaded_dofs: frozenset[int]

    @staticmethod
    def build(nominal: np.ndarray, alpha: float) -> "LoadUncertaintyModel":
        nominal = np.asarray(nominal, dtype=float)
        Q = uncertainty_matrix(nominal, alpha)
        J_f = frozenset(int(j) for j in np.nonzero(nominal)[0])
        if not J_f:
            raise ValueError("nominal load is zero")
        return LoadUncertaintyModel(nominal=nominal, alpha=float(alpha), Q=Q, loaded_dofs=J_f)


def geometry_matrix(gs: GroundStructure) -> np.ndarray:
    """d x m matrix of member direction vectors scattered to free dofs.

    Column i holds the direction cosines of member i at its two endpoint
    nodes with opposite signs; supported axes are dropped.
    """
    B = np.zeros((gs.dof_count, len(gs.members)))
    for mb in gs.members:
        a, b = mb.endpoints
        cx, cy = mb.direction
        for axis, c in ((0, cx), (1, cy)):
            ja = gs.dof_of_node[a, axis]
            jb = gs.dof_of_node[b, axis]
            if ja >= 0:
                B[ja, mb.id] = -c
            if jb >= 0:
                B[jb, mb.id] = c
    return B


def assemble_stiffness(
    gs: GroundStructure, bounds: DesignBounds, x: np.ndarray
) -> np.ndarray:
    """Global stiffness K(x) in N/mm on the free dofs."""
    x = np.asarray(x, dtype=float)
    if x.shape != (len(gs.members),):
        raise ValueError("x has wrong length")
    B = geometry_matrix(gs)
    k_axial = bounds.young_modulus * x / gs.member_lengths()
    K = (B * k_axial) @ B.T
    return 0.5 * (K + K.T)


def _pinv_and_range(K: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Eigendecomposition-based pseudo-inverse with an explicit rank cut."""
    lam, U = np.linalg.eigh(K)
    lam_max = float(lam[-1]) if lam.size else 0.0
    cut = RANK_RTOL * max(lam_max, 0.0)
    keep = lam > cut
    inv = np.zeros_like(lam)
    inv[keep] = 1.0 / lam[keep]
    K_pinv = (U * inv) @ U.T
    # projector onto range(K)
    proj = (U * keep.astype(float)) @ U.T
    return K_pinv, proj, lam_max


def compliance(
    gs: GroundStructure, bounds: DesignBounds, x: np.ndarray, p: np.ndarray
) -> float:
    """Compliance p^T K(x)^+ p in joules; +inf when p is not in range(K)."""
    p = np.asarray(p, dtype=float)
    K = assemble_stiffness(gs, bounds, x)
    K_pinv, proj, _ = _pinv_and_range(K)
    p_norm = float(np.linalg.norm(p))
    if p_norm == 0.0:
        return 0.0
    if float(np.linalg.norm(p - proj @ p)) > RANGE_RTOL * p_norm:
        return math.inf
    return float(p @ K_pinv @ p) / NMM_PER_JOULE


def uncertainty_matrix(p_tilde: np.ndarray, alpha: float) -> np.ndarray:
    """Q = [p_tilde | alpha q_1 | ... | alpha q_{d-1}].

    The orthonormal complement basis q_1..q_{d-1} comes from the
    Householder reflection mapping p_tilde/|p_tilde| onto the first
    canonical vector, which makes the construction deterministic.
    """
    p_tilde = np.asarray(p_tilde, dtype=float)
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    d = p_tilde.shape[0]
    nrm = float(np.linalg.norm(p_tilde))
    if nrm == 0.0:
        raise ValueError("nominal load is zero")
    u = p_tilde / nrm
    e1 = np.zeros(d)
    e1[0] = 1.0
    w = u - e1
    H = np.eye(d)
    wn = float(w @ w)
    if wn > 1e-32:
        H -= 2.0 * np.outer(w, w) / wn
    # H maps e1 -> u, so columns 2..d of H span the complement of p_tilde
    Q = alpha * H
    Q[:, 0] = p_tilde
    return Q


def masked_load_matrix(model: LoadUncertaintyModel, s: np.ndarray) -> np.ndarray:
    return s[:, None] * model.Q


def worst_case_compliance(
    gs: GroundStructure,
    bounds: DesignBounds,
    x: np.ndarray,
    s: np.ndarray,
    model: LoadUncertaintyModel,
) -> float:
    """max over P(s) of the compliance, in joules; +inf when unsupported.

    Accepts fractional s in [0, 1]; the binary-s contract lives in
    worst_case_compliance_oracle.
    """
    s = np.asarray(s, dtype=float)
    K = assemble_stiffness(gs, bounds, x)
    K_pinv, proj, lam_max = _pinv_and_range(K)
    Qs = masked_load_matrix(model, s)
    col_norms = np.linalg.norm(Qs, axis=0)
    resid = np.linalg.norm(Qs - proj @ Qs, axis=0)
    live = col_norms > 0
    if np.any(resid[live] > RANGE_RTOL * col_norms[live]):
        return math.inf
    G = Qs.T @ K_pinv @ Qs
    G = 0.5 * (G + G.T)
    return float(np.linalg.eigvalsh(G)[-1]) / NMM_PER_JOULE


def worst_case_compliance_oracle(
    gs: GroundStructure,
    bounds: DesignBounds,
    x: np.ndarray,
    s: np.ndarray,
    model: LoadUncertaintyModel,
) -> float:
    """Eigenvalue oracle lambda_max((diag(s) Q)^T K^+ (diag(s) Q)) in joules.

    s must be binary with s_j = 1 on every loaded dof.  Returns +inf
    when some masked load column leaves range(K(x)), which is exactly
    the unstable-design (chain) case.
    """
    s = np.asarray(s, dtype=float)
    if s.shape != (gs.dof_count,):
        raise ValueError("s has wrong length")
    if np.any((np.abs(s) > 1e-9) & (np.abs(s - 1.0) > 1e-9)):
        raise ValueError("s must be binary")
    s = np.round(s)
    if any(s[j] != 1.0 for j in model.loaded_dofs):
        raise ValueError("s must be 1 on every loaded dof")
    x = np.asarray(x, dtype=float)
    if np.any(x < -1e-12):
        raise ValueError("x must be nonnegative")
    return worst_case_compliance(gs, bounds, x, s, model)


def robustness_lmi_block(
    gs: GroundStructure,
    bounds: DesignBounds,
    model: LoadUncertaintyModel,
    x: np.ndarray,
    s: np.ndarray,
    w: float,
) -> np.ndarray:
    """The 2d x 2d block [[w I, (diag(s) Q)^T], [diag(s) Q, K(x)]].

    Affine in (x, s, w); positive semidefiniteness is equivalent to w
    bounding the worst-case compliance over P(s) from above.  Assembled
    in kN/mm units so the w entries carry joules directly.
    """
    return lmi_block_for(gs, bounds, model)(
        np.asarray(x, dtype=float), np.asarray(s, dtype=float), float(w)
    )


def lmi_block_for(
    gs: GroundStructure, bounds: DesignBounds, model: LoadUncertaintyModel
):
    """Closure form of robustness_lmi_block for repeated evaluation."""
    B = geometry_matrix(gs)
    k_axial_unit = bounds.young_modulus / gs.member_lengths() / NMM_PER_JOULE
    Q_kn = model.Q / NMM_PER_JOULE
    d = gs.dof_count

    def block(x: np.ndarray, s: np.ndarray, w: float) -> np.ndarray:
        Qs = s[:, None] * Q_kn
        K = (B * (k_axial_unit * x)) @ B.T
        W = np.zeros((2 * d, 2 * d))
        W[:d, :d] = w * np.eye(d)
        W[:d, d:] = Qs.T
        W[d:, :d] = Qs
        W[d:, d:] = 0.5 * (K + K.T)
        return W

    return block


def worst_case_compliance_bisection(
    gs: GroundStructure,
    bounds: DesignBounds,
    x: np.ndarray,
    s: np.ndarray,
    model: LoadUncertaintyModel,
    rel_tol: float = 1e-9,
    w_cap: float = 1e12,
) -> float:
    """Independent route: bisection on w over the robustness LMI.

    Brackets upward by doubling from 1 J; if the block is not PSD even
    at w_cap the design is declared unstable (+inf).  Used to cross-check
    the eigenvalue oracle.
    """
    block = lmi_block_for(gs, bounds, model)
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)

    def is_psd(w: float) -> bool:
        W = block(x, s, w)
        lam_min = float(np.linalg.eigvalsh(W)[0])
        # only allow for the backward error of eigvalsh itself; a looser
        # band would bias the bracket below the true threshold
        return lam_min >= -1e-13 * max(1.0, float(np.linalg.norm(W)))

    hi = 1.0
    while not is_psd(hi):
        hi *= 2.0
        if hi > w_cap:
            return math.inf
    lo = 0.0
    while hi - lo > rel_tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if is_psd(mid):
            hi = mid
        else:
            lo = mid
    return hi
