"""Semidefinite relaxation of the orthonormal quadratic-sum problem.

The relaxation replaces each u_i u_i' by a PSD block X_i with unit trace and
couples the blocks through sum_i X_i <= I. Its dual carries (Y, Z_i, nu_i)
with Y = M_i + Z_i - nu_i I blockwise. This module solves both, checks the
five KKT residuals, extracts orthonormal candidates from the primal blocks,
and supports the lifted variant with linear terms.

Sign convention: the solver minimizes the negated objective; reports expose
the minimization optimum p* and the maximized value -p*.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import (
    ProblemInstance,
    StiefelPoint,
    eigh_desc,
    procrustes_project,
    rop_error,
    spectral_norm,
    sym,
    top_eigenpairs,
)
from .ipm import FantopeOps, smat, solve_ipm, svec
from .stiefel import SolverConfig

STATUS_OPTIMAL = "Optimal"
STATUS_INFEASIBLE = "Infeasible"
STATUS_NUMERICAL_FAILURE = "NumericalFailure"

GAP_TOL = 1e-7
KKT_TOL = 1e-6
RANK_TOL = 1e-7


@dataclass(frozen=True)
class SdpPrimalSolution:
    """Primal blocks X_i and the minimization optimum p*."""

    x_blocks: tuple
    objective: float

    @property
    def value(self) -> float:
        # the maximized quadratic-sum value
        return -self.objective


@dataclass(frozen=True)
class SdpDualSolution:
    y: np.ndarray
    z_blocks: tuple
    nu: np.ndarray
    objective: float


@dataclass(frozen=True)
class KktResiduals:
    """The five stationarity residuals, all reported as nonnegative reals.

    primal: block PSD-ness, unit traces, and the sum bound.
    dual_eq: Y - M_i - Z_i + nu_i I blockwise, plus PSD-ness of Y.
    slack_comp: <I - sum X_i, Y>.
    block_comp: max_i <Z_i, X_i>.
    dual_cone: PSD-ness of the Z_i.
    """

    primal: float
    dual_eq: float
    slack_comp: float
    block_comp: float
    dual_cone: float

    @property
    def max_residual(self) -> float:
        return max(self.primal, self.dual_eq, self.slack_comp,
                   self.block_comp, self.dual_cone)

    def as_dict(self) -> dict:
        return {
            "primal": self.primal,
            "dual_eq": self.dual_eq,
            "slack_comp": self.slack_comp,
            "block_comp": self.block_comp,
            "dual_cone": self.dual_cone,
        }


@dataclass(frozen=True)
class SolveReport:
    status: str
    primal: SdpPrimalSolution
    dual: SdpDualSolution
    gap: float
    kkt_residuals: KktResiduals
    iterations: int
    wall_time: float
    rop_err: float
    meta: dict = field(default_factory=dict)

    @property
    def value(self) -> float:
        return self.primal.value


@dataclass(frozen=True)
class LiftedInstance:
    """Base instance augmented with one linear term per block.

    lifted_mats carry half the linear vector in the corner so that
    <lifted_mats[i], [[X, u],[u', 1]]> = tr(M_i X) + c_i'u.
    """

    base: ProblemInstance
    linear: tuple
    lifted_mats: tuple

    @property
    def d(self) -> int:
        return self.base.d

    @property
    def k(self) -> int:
        return self.base.k


def _blocks_of(primal):
    if isinstance(primal, SolveReport):
        return list(primal.primal.x_blocks)
    if isinstance(primal, SdpPrimalSolution):
        return list(primal.x_blocks)
    return [np.asarray(b, dtype=float) for b in primal]


def check_kkt(c: ProblemInstance, primal, dual: SdpDualSolution) -> KktResiduals:
    """Residuals of the five optimality conditions for a primal/dual pair."""
    x_blocks = _blocks_of(primal)
    mats = c.mats
    d = c.d
    y = dual.y
    eye = np.eye(d)

    xsum = np.zeros((d, d))
    res_primal = 0.0
    for x in x_blocks:
        w = np.linalg.eigvalsh(sym(x))
        res_primal = max(res_primal, max(0.0, -w[0]), abs(np.trace(x) - 1.0))
        xsum += x
    res_primal = max(res_primal,
                     max(0.0, float(np.linalg.eigvalsh(sym(xsum))[-1]) - 1.0))

    res_dual_eq = max(0.0, -float(np.linalg.eigvalsh(sym(y))[0]))
    res_block = 0.0
    res_cone = 0.0
    for i, (m, z, x) in enumerate(zip(mats, dual.z_blocks, x_blocks)):
        res_dual_eq = max(res_dual_eq,
                          float(np.linalg.norm(y - m - z + dual.nu[i] * eye)))
        res_block = max(res_block, abs(float(np.sum(z * x))))
        res_cone = max(res_cone, max(0.0, -float(np.linalg.eigvalsh(sym(z))[0])))

    res_slack = abs(float(np.sum((eye - xsum) * y)))
    return KktResiduals(res_primal, res_dual_eq, res_slack, res_block, res_cone)


def _fantope_start(ops: FantopeOps):
    d, k = ops.d, ops.k
    x = []
    for _ in range(k):
        m = np.eye(ops.D) / d
        if ops.corner:
            m[-1, -1] = 1.0
        x.append(m)
    if ops.has_slack:
        x.append((1.0 - k / d) * np.eye(d))
    z = [np.eye(n) for n in ops.block_sizes]
    y = np.zeros(ops.m)
    y[:k] = -1.0
    y[ops.off:] = svec(-np.eye(d))
    return x, y, z


def _normalize_for_solve(mats):
    """Uniform PSD shift plus a global spectral-norm scale.

    Returns (scaled mats, shift, scale); the shift preserves commutators and
    only translates the objective, the scale conditions the solver.
    """
    minlam = min(float(np.linalg.eigvalsh(m)[0]) for m in mats)
    shift = -minlam if minlam < -1e-12 else 0.0
    if shift > 0.0:
        eye = np.eye(mats[0].shape[0])
        mats = [m + shift * eye for m in mats]
    scale = max(spectral_norm(m) for m in mats)
    if scale <= 1e-300:
        scale = 1.0
    if abs(scale - 1.0) > 1e-12:
        mats = [m / scale for m in mats]
    return mats, shift, scale


def _recover_coupling_dual(ops, res, scale):
    """Input-unit (Y, Z_i, nu) from the solver's internal variables."""
    k = ops.k
    if ops.has_slack:
        y_mat = sym(res.z_blocks[-1]) * scale
        nu = -res.y[:k] * scale
    else:
        # sum X_i = I exactly: shift the equality multiplier into the cone
        y_raw = -smat(res.y[ops.off:], ops.d)
        c = max(0.0, -float(np.linalg.eigvalsh(sym(y_raw))[0]))
        y_mat = sym(y_raw + c * np.eye(ops.d)) * scale
        nu = (-res.y[:k] - c) * scale
    z_blocks = [sym(z) * scale for z in res.z_blocks[:k]]
    return y_mat, z_blocks, nu


def _status_from(res, gap, kkt_max, p, dd, cfg):
    reasons = []
    if res.status != "optimal":
        reasons.append("solver did not converge")
    if gap > cfg.gap_tol * (1.0 + abs(p) + abs(dd)):
        reasons.append("duality gap above tolerance")
    if kkt_max > cfg.kkt_tol:
        reasons.append("KKT residual above tolerance")
    if reasons:
        return STATUS_NUMERICAL_FAILURE, "; ".join(reasons)
    return STATUS_OPTIMAL, ""


def solve_sdp(c: ProblemInstance, cfg: SolverConfig | None = None) -> SolveReport:
    """Solve the relaxation and self-verify the reported optimality.

    Inputs need not be normalized or PSD: a uniform eigenvalue shift and a
    global scale are applied internally and mapped back, with both recorded
    in the report meta. A report is never labeled Optimal unless the duality
    gap and all five KKT residuals pass the configured tolerances.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    mats_s, shift, scale = _normalize_for_solve(list(c.mats))
    ops = FantopeOps(mats_s, c.d, include_slack=c.k < c.d)
    x0, y0, z0 = _fantope_start(ops)
    res = solve_ipm(ops, x0, y0, z0, tol=cfg.sdp_tol,
                    max_iters=cfg.sdp_max_iters, step_frac=cfg.step_frac)

    x_blocks = tuple(sym(x) for x in res.x_blocks[:c.k])
    y_mat, z_blocks, nu = _recover_coupling_dual(ops, res, scale)
    nu = nu - shift

    p = -sum(float(np.sum(m * x)) for m, x in zip(c.mats, x_blocks))
    dd = -(float(np.trace(y_mat)) + float(np.sum(nu)))
    gap = abs(p - dd)

    dual = SdpDualSolution(y=y_mat, z_blocks=tuple(z_blocks),
                           nu=np.asarray(nu, dtype=float), objective=dd)
    kkt = check_kkt(c, x_blocks, dual)
    status, reason = _status_from(res, gap, kkt.max_residual, p, dd, cfg)

    return SolveReport(
        status=status,
        primal=SdpPrimalSolution(x_blocks=x_blocks, objective=p),
        dual=dual,
        gap=gap,
        kkt_residuals=kkt,
        iterations=res.iterations,
        wall_time=time.perf_counter() - t0,
        rop_err=rop_error(x_blocks),
        meta={
            "psd_shift": shift,
            "scale": scale,
            "ipm": {"pinf": res.pinf, "dinf": res.dinf,
                    "relgap": res.relgap, "status": res.status},
            "reason": reason,
        },
    )


def _polar_any(m: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(m, full_matrices=False)
    return u @ vt


def extract_candidate(primal, tie_gap: float = 1e-8):
    """Orthonormal candidate from the top eigenvector of each block.

    Returns (point, rop_err, tie_flags). Ties in a block's top eigenvalue
    are flagged, never fatal; the candidate is always produced (falling back
    to a bare polar factor if the stacked eigenvectors lose rank)."""
    blocks = _blocks_of(primal)
    vecs, ties = top_eigenpairs(blocks, tie_gap=tie_gap)
    try:
        point = procrustes_project(vecs)
    except ValueError:
        point = StiefelPoint(_polar_any(vecs))
    return point, rop_error(blocks), ties


def dual_rank_profile(dual: SdpDualSolution, rank_tol: float = RANK_TOL) -> np.ndarray:
    """Numerical rank of each Z_i: eigenvalues above rank_tol * ||Z_i||."""
    ranks = []
    for z in dual.z_blocks:
        nrm = spectral_norm(z)
        if nrm <= 0.0:
            ranks.append(0)
            continue
        w = np.linalg.eigvalsh(sym(z))
        ranks.append(int(np.sum(w > rank_tol * nrm)))
    return np.asarray(ranks, dtype=int)


def build_lifted(c: ProblemInstance, linear) -> LiftedInstance:
    """Augment each block with a linear term c_i'u_i via a (d+1) bordering."""
    linear = [np.asarray(v, dtype=float).reshape(-1) for v in linear]
    if len(linear) != c.k or any(v.shape[0] != c.d for v in linear):
        raise ValueError("need one length-d linear vector per block")
    lifted = []
    for m, v in zip(c.mats, linear):
        t = np.zeros((c.d + 1, c.d + 1))
        t[:c.d, :c.d] = m
        t[:c.d, -1] = 0.5 * v
        t[-1, :c.d] = 0.5 * v
        lifted.append(t)
    return LiftedInstance(base=c, linear=tuple(linear), lifted_mats=tuple(lifted))


def _lifted_kkt(l: LiftedInstance, xt, y_mat, zt, nu, xi) -> KktResiduals:
    d, k = l.d, l.k
    eye = np.eye(d)
    ecorner = np.zeros((d + 1, d + 1))
    ecorner[-1, -1] = 1.0
    embed_eye = np.zeros((d + 1, d + 1))
    embed_eye[:d, :d] = eye

    crops = [x[:d, :d] for x in xt]
    xsum = sum(crops)
    res_primal = 0.0
    for x in xt:
        w = np.linalg.eigvalsh(sym(x))
        res_primal = max(res_primal, max(0.0, -w[0]),
                         abs(np.trace(x[:d, :d]) - 1.0), abs(x[-1, -1] - 1.0))
    res_primal = max(res_primal,
                     max(0.0, float(np.linalg.eigvalsh(sym(xsum))[-1]) - 1.0))

    embed_y = np.zeros((d + 1, d + 1))
    embed_y[:d, :d] = y_mat
    res_dual_eq = max(0.0, -float(np.linalg.eigvalsh(sym(y_mat))[0]))
    res_block = 0.0
    res_cone = 0.0
    for i in range(k):
        r = embed_y - l.lifted_mats[i] - zt[i] + nu[i] * embed_eye + xi[i] * ecorner
        res_dual_eq = max(res_dual_eq, float(np.linalg.norm(r)))
        res_block = max(res_block, abs(float(np.sum(zt[i] * xt[i]))))
        res_cone = max(res_cone,
                       max(0.0, -float(np.linalg.eigvalsh(sym(zt[i]))[0])))
    res_slack = abs(float(np.sum((eye - xsum) * y_mat)))
    return KktResiduals(res_primal, res_dual_eq, res_slack, res_block, res_cone)


def solve_lifted(l: LiftedInstance, cfg: SolverConfig | None = None) -> SolveReport:
    """Solve the linear-term relaxation.

    The report holds the (d+1) lifted blocks; meta carries the corner
    multipliers, the cropped dual blocks (which satisfy the base dual
    equation exactly), and the stacked candidate columns u_i read off the
    last column of each block. rop_err is computed on the cropped blocks.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    d, k = l.d, l.k
    scale = max(max(spectral_norm(m) for m in l.lifted_mats), 1e-300)
    if scale <= 1e-300:
        scale = 1.0
    mats_s = [m / scale for m in l.lifted_mats]
    ops = FantopeOps(mats_s, d, include_slack=k < d)
    x0, y0, z0 = _fantope_start(ops)
    res = solve_ipm(ops, x0, y0, z0, tol=cfg.sdp_tol,
                    max_iters=cfg.sdp_max_iters, step_frac=cfg.step_frac)

    xt = tuple(sym(x) for x in res.x_blocks[:k])
    y_mat, zt, nu = _recover_coupling_dual(ops, res, scale)
    xi = -res.y[k:2 * k] * scale

    p = -sum(float(np.sum(m * x)) for m, x in zip(l.lifted_mats, xt))
    dd = -(float(np.trace(y_mat)) + float(np.sum(nu)) + float(np.sum(xi)))
    gap = abs(p - dd)

    kkt = _lifted_kkt(l, xt, y_mat, zt, nu, xi)
    status, reason = _status_from(res, gap, kkt.max_residual, p, dd, cfg)
    crops = tuple(x[:d, :d] for x in xt)
    u_stack = np.column_stack([x[:d, -1] for x in xt])

    dual = SdpDualSolution(y=y_mat, z_blocks=tuple(zt),
                           nu=np.asarray(nu, dtype=float), objective=dd)
    return SolveReport(
        status=status,
        primal=SdpPrimalSolution(x_blocks=xt, objective=p),
        dual=dual,
        gap=gap,
        kkt_residuals=kkt,
        iterations=res.iterations,
        wall_time=time.perf_counter() - t0,
        rop_err=rop_error(crops),
        meta={
            "scale": scale,
            "corner_duals": xi,
            "cropped_z": tuple(z[:d, :d] for z in zt),
            "cropped_x": crops,
            "u_stack": u_stack,
            "ipm": {"pinf": res.pinf, "dinf": res.dinf,
                    "relgap": res.relgap, "status": res.status},
            "reason": reason,
        },
    )
