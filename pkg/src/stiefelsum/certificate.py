"""Dual certificate of global optimality for stationary points.

Given a stationary U with multiplier matrix L = sum_i U' M_i U E_i, the
point is a global maximizer whenever some nu >= 0 makes every matrix

    U (L - D_nu) U' + nu_i I - M_i   (one per block)   and   L - D_nu

positive semidefinite. Feasibility is decided by maximizing the least
eigenvalue margin t over (nu, t) with a small interior-point solve; a
certified result is re-verified by building the induced primal/dual pair
and checking all optimality residuals, so a CertifiedGlobal verdict is
never returned unverified. Infeasibility of the system is NOT a proof of
suboptimality; that asymmetry is deliberate.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ProblemInstance, StiefelPoint, sym
from .ipm import DenseOps, solve_ipm
from .sdp import KktResiduals, SdpDualSolution, check_kkt
from .stiefel import LambdaMatrix, lambda_matrix, objective, riemannian_gradient

STATUS_CERTIFIED = "CertifiedGlobal"
STATUS_INCONCLUSIVE = "Inconclusive"

CLASS_NOT_TIGHT = "SdpNotTight"
CLASS_SUBOPTIMAL = "SuboptimalStationary"
CLASS_UNKNOWN = "Unknown"

CERT_TOL = 1e-7

# stationarity gate: one order looser than the ascent solver's grad_tol
_PRECONDITION_TOL = 1e-6


class CertificateNumericalError(RuntimeError):
    """The feasibility solve stalled; no verdict available."""


@dataclass(frozen=True)
class CertificateProblem:
    u_bar: StiefelPoint
    lam: LambdaMatrix
    instance: ProblemInstance
    lmi_constants: tuple  # k blocks U L U' - M_i, then L itself


@dataclass(frozen=True)
class CertificateResult:
    status: str
    nu_witness: np.ndarray | None
    classification: str | None
    min_eig_slacks: np.ndarray
    t_star: float
    precondition_weak: bool
    kkt_residuals: KktResiduals | None
    problem: CertificateProblem
    meta: dict = field(default_factory=dict)


def _lmi_slacks(c: ProblemInstance, u: np.ndarray, lam_s: np.ndarray,
                nu: np.ndarray) -> np.ndarray:
    """Least eigenvalue of each certificate matrix at the given nu."""
    core_mat = u @ (lam_s - np.diag(nu)) @ u.T
    eye = np.eye(c.d)
    out = [float(np.linalg.eigvalsh(sym(core_mat + nu[i] * eye - c.mats[i]))[0])
           for i in range(c.k)]
    out.append(float(np.linalg.eigvalsh(sym(lam_s - np.diag(nu)))[0]))
    return np.asarray(out)


def _feasibility_ops(c: ProblemInstance, u: np.ndarray, lam_s: np.ndarray,
                     scale: float) -> DenseOps:
    """Margin program: maximize t s.t. each LMI >= t I, nu >= 0.

    Encoded so the internal dual vector is (nu_1..nu_k, t): k blocks of
    size d, one of size k, and k scalar blocks carrying nu_i >= 0."""
    d, k = c.d, c.k
    eye = np.eye(d)
    sizes = [d] * k + [k] + [1] * k
    core_mat = u @ lam_s @ u.T
    cmats = [(core_mat - c.mats[j]) / scale for j in range(k)]
    cmats.append(lam_s / scale)
    cmats.extend(np.zeros((1, 1)) for _ in range(k))

    outer = [np.outer(u[:, p], u[:, p]) for p in range(k)]
    amats = []
    for p in range(k):
        row = [outer[p] - (eye if j == p else 0.0) for j in range(k)]
        ek = np.zeros((k, k))
        ek[p, p] = 1.0
        row.append(ek)
        row.extend(np.array([[-1.0]]) if i == p else None for i in range(k))
        amats.append(row)
    trow = [eye] * k + [np.eye(k)] + [None] * k
    amats.append(trow)

    b = np.zeros(k + 1)
    b[k] = 1.0
    return DenseOps(sizes, amats, b, cmats)


def _feasibility_start(ops: DenseOps, k: int):
    """Dual-feasible warm start: nu = 1, t below every block's least eig."""
    y0 = np.ones(k + 1)
    slack = [ops.C[j] - a for j, a in enumerate(ops.apply_AT(np.append(np.ones(k), 0.0)))]
    t0 = min(float(np.linalg.eigvalsh(sym(s))[0]) for s in slack[:k + 1]) - 1.0
    y0[k] = t0
    aty = ops.apply_AT(y0)
    z0 = [sym(ops.C[j] - aty[j]) for j in range(len(ops.block_sizes))]
    rho = 1.0 / sum(ops.block_sizes)
    x0 = [rho * np.eye(n) for n in ops.block_sizes]
    return x0, y0, z0


def certify(c: ProblemInstance, u_bar: StiefelPoint,
            tol: float = CERT_TOL) -> CertificateResult:
    """Decide the certificate system at a (near-)stationary point.

    The verdict is computed from freshly evaluated eigenvalue slacks at the
    recovered witness, and a CertifiedGlobal result additionally passes the
    induced primal/dual optimality check within 1e-6. Weak stationarity of
    u_bar does not abort the computation; it only flags the result.
    """
    if not isinstance(u_bar, StiefelPoint):
        u_bar = StiefelPoint(np.asarray(u_bar, dtype=float))
    u = u_bar.cols
    if u.shape != (c.d, c.k):
        raise ValueError("candidate shape does not match the instance")
    lam = lambda_matrix(c, u_bar)
    lam_s = sym(lam.matrix)
    rg = float(np.linalg.norm(riemannian_gradient(c, u)))
    weak = lam.symmetry_residual > _PRECONDITION_TOL or rg > _PRECONDITION_TOL
    problem = CertificateProblem(
        u_bar=u_bar, lam=lam, instance=c,
        lmi_constants=tuple([u @ lam_s @ u.T - m for m in c.mats] + [lam_s]),
    )
    meta = {"grad_norm": rg, "symmetry_residual": lam.symmetry_residual}

    # necessary condition: L - D_nu >= 0 with nu >= 0 forces L >= 0
    lam_min = float(np.linalg.eigvalsh(lam_s)[0])
    if lam_min < -_PRECONDITION_TOL:
        slacks = _lmi_slacks(c, u, lam_s, np.zeros(c.k))
        meta["gate"] = "multiplier matrix indefinite"
        return CertificateResult(
            status=STATUS_INCONCLUSIVE, nu_witness=None, classification=None,
            min_eig_slacks=slacks, t_star=lam_min, precondition_weak=weak,
            kkt_residuals=None, problem=problem, meta=meta)

    scale = max(max(float(np.linalg.norm(m, 2)) for m in c.mats),
                float(np.linalg.norm(lam_s, 2)), 1.0)
    ops = _feasibility_ops(c, u, lam_s, scale)
    x0, y0, z0 = _feasibility_start(ops, c.k)
    res = solve_ipm(ops, x0, y0, z0, tol=1e-9, max_iters=100)
    if res.status != "optimal":
        raise CertificateNumericalError(
            "feasibility solve stalled (pinf=%.2e dinf=%.2e gap=%.2e)"
            % (res.pinf, res.dinf, res.relgap))

    nu = np.clip(res.y[:c.k] * scale, 0.0, None)
    t_star = float(res.y[c.k]) * scale
    slacks = _lmi_slacks(c, u, lam_s, nu)
    meta["ipm_iterations"] = res.iterations

    if min(float(slacks.min()), t_star) < -tol:
        return CertificateResult(
            status=STATUS_INCONCLUSIVE, nu_witness=None, classification=None,
            min_eig_slacks=slacks, t_star=t_star, precondition_weak=weak,
            kkt_residuals=None, problem=problem, meta=meta)

    # rebuild the induced optimal pair and verify before claiming anything
    y_mat = sym(u @ (lam_s - np.diag(nu)) @ u.T)
    z_blocks = tuple(sym(y_mat + nu[i] * np.eye(c.d) - c.mats[i])
                     for i in range(c.k))
    x_blocks = [np.outer(u[:, i], u[:, i]) for i in range(c.k)]
    dual = SdpDualSolution(y=y_mat, z_blocks=z_blocks, nu=nu,
                           objective=-(float(np.trace(y_mat)) + float(np.sum(nu))))
    kkt = check_kkt(c, x_blocks, dual)
    if kkt.max_residual > 1e-6:
        meta["gate"] = "constructed pair failed verification"
        return CertificateResult(
            status=STATUS_INCONCLUSIVE, nu_witness=None, classification=None,
            min_eig_slacks=slacks, t_star=t_star, precondition_weak=weak,
            kkt_residuals=kkt, problem=problem, meta=meta)

    return CertificateResult(
        status=STATUS_CERTIFIED, nu_witness=nu, classification=None,
        min_eig_slacks=slacks, t_star=t_star, precondition_weak=weak,
        kkt_residuals=kkt, problem=problem, meta=meta)


def classify_inconclusive(c: ProblemInstance, u_bar: StiefelPoint,
                          sdp_report=None) -> str:
    """Attribute an inconclusive certificate when a relaxation solve exists.

    A loose relaxation explains it directly; a tight relaxation whose value
    strictly exceeds the candidate's objective means the candidate is a
    suboptimal stationary point; anything else stays Unknown."""
    if sdp_report is None:
        return CLASS_UNKNOWN
    if sdp_report.rop_err > 1e-5:
        return CLASS_NOT_TIGHT
    if objective(c, u_bar) < sdp_report.value - 1e-5:
        return CLASS_SUBOPTIMAL
    return CLASS_UNKNOWN


def certificate_flops_estimate(d: int, k: int):
    """Cost-model flop counts: certificate solve vs full relaxation dual.

    Both share the sqrt(kd) iteration factor; per-iteration costs are
    k^2 d^3 versus k d^6, so the ratio is d^3 / k."""
    iters = np.sqrt(k * d)
    cert = iters * k ** 2 * d ** 3
    full = iters * k * d ** 6
    return cert, full, full / cert
