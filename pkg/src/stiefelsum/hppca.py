"""Heteroscedastic PPCA subproblem: model, sampling, instance construction.

The planted model draws n_l samples per noise group, y = U Theta z + eta
with eta ~ N(0, v_l I). The subspace likelihood in U collapses to a sum of
Brockett terms with blocks M_i = sum_l w_li A_l, A_l = (1/v_l) Y_l Y_l^T
and SNR weights w_li = lambda_i / (lambda_i + v_l). Also provides the
population (expected) blocks, the pooled sample matrix, and closed-form
diagnostics bounding how far each block sits from the pooled matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import ProblemInstance, StiefelPoint


@dataclass(frozen=True)
class HppcaModel:
    d: int
    k: int
    u_true: StiefelPoint
    lambdas: np.ndarray  # k squared amplitudes, distinct
    variances: np.ndarray  # L group noise variances
    group_sizes: np.ndarray  # L sample counts
    seed: int = 0

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        var = np.asarray(self.variances, dtype=float)
        sizes = np.asarray(self.group_sizes, dtype=int)
        object.__setattr__(self, "lambdas", lam)
        object.__setattr__(self, "variances", var)
        object.__setattr__(self, "group_sizes", sizes)
        if self.u_true.cols.shape != (self.d, self.k):
            raise ValueError("u_true shape does not match (d, k)")
        if lam.shape != (self.k,) or np.any(lam <= 0.0):
            raise ValueError("need k positive amplitudes")
        if len(np.unique(lam)) != self.k:
            raise ValueError("amplitudes must be distinct")
        if var.ndim != 1 or var.size == 0 or np.any(var <= 0.0):
            raise ValueError("need positive group variances")
        if sizes.shape != var.shape or np.any(sizes < 1):
            raise ValueError("need one positive size per group")

    @property
    def n_groups(self) -> int:
        return self.variances.size

    @property
    def n_total(self) -> int:
        return int(self.group_sizes.sum())


@dataclass(frozen=True)
class HppcaSample:
    groups: tuple  # L arrays, each d x n_l

    @property
    def n_total(self) -> int:
        return sum(g.shape[1] for g in self.groups)


@dataclass(frozen=True)
class HppcaStats:
    sigma_bar: np.ndarray  # spectral norm of each expected block
    xi_bar: np.ndarray  # trace of each expected block
    snr_bounds: np.ndarray  # deterministic relative-distance bound per i
    concentration_bounds: np.ndarray
    combined: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "combined",
            np.minimum(self.snr_bounds, self.concentration_bounds))


def _group_rngs(model: HppcaModel):
    # child 0 reserved for drawing u_true when a model file omits it
    children = np.random.SeedSequence(model.seed).spawn(model.n_groups + 1)
    return [np.random.default_rng(s) for s in children[1:]]


def make_model(d, k, lambdas, variances, group_sizes, seed=0,
               u_true=None) -> HppcaModel:
    if u_true is None:
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        from .stiefel import random_stiefel
        u_true = random_stiefel(d, k, rng)
    elif not isinstance(u_true, StiefelPoint):
        u_true = StiefelPoint(np.asarray(u_true, dtype=float))
    return HppcaModel(d=int(d), k=int(k), u_true=u_true,
                      lambdas=lambdas, variances=variances,
                      group_sizes=group_sizes, seed=int(seed))


def sample(model: HppcaModel) -> HppcaSample:
    """Draw every group's samples; repeated calls are identical."""
    theta = np.sqrt(model.lambdas)
    u = model.u_true.cols
    groups = []
    for rng, v, nl in zip(_group_rngs(model), model.variances,
                          model.group_sizes):
        z = rng.standard_normal((model.k, int(nl)))
        eta = rng.standard_normal((model.d, int(nl))) * np.sqrt(v)
        groups.append(u @ (theta[:, None] * z) + eta)
    return HppcaSample(groups=tuple(groups))


def _weights(model: HppcaModel) -> np.ndarray:
    # w[l, i] = lambda_i / (lambda_i + v_l)
    lam = model.lambdas[None, :]
    return lam / (lam + model.variances[:, None])


def group_matrices(model: HppcaModel, s: HppcaSample):
    """A_l = (1/v_l) Y_l Y_l^T."""
    return [y @ y.T / v for y, v in zip(s.groups, model.variances)]


def build_instance(model: HppcaModel, s: HppcaSample) -> ProblemInstance:
    """Unscaled blocks M_i = sum_l w_li A_l; callers normalize for solving."""
    w = _weights(model)
    amats = group_matrices(model, s)
    mats = tuple(
        sum(w[l, i] * amats[l] for l in range(model.n_groups))
        for i in range(model.k)
    )
    return ProblemInstance(mats=mats, meta={
        "family": "hppca", "n": s.n_total,
    })


def pooled_matrix(model: HppcaModel, s: HppcaSample) -> np.ndarray:
    """(1/n) sum_l A_l, the unweighted average the blocks concentrate on."""
    amats = group_matrices(model, s)
    return sum(amats) / s.n_total


def expected_instance(model: HppcaModel) -> ProblemInstance:
    """Population blocks at the 1/n scale; they share the (U, U-perp) basis
    so the tuple commutes exactly."""
    u = model.u_true.cols
    core = u @ np.diag(model.lambdas) @ u.T
    eye = np.eye(model.d)
    w = _weights(model)
    frac = model.group_sizes / model.n_total
    mats = tuple(
        sum(w[l, i] * frac[l] * (core / model.variances[l] + eye)
            for l in range(model.n_groups))
        for i in range(model.k)
    )
    return ProblemInstance(mats=mats, meta={"family": "hppca-expected"})


def snr_distance_bounds(model: HppcaModel) -> np.ndarray:
    """Per-block bound on ||M_i/n - pooled||_2 / ||pooled||_2.

    Deterministic: 1 - w_li = 1/(lambda_i/v_l + 1) and the pooled matrix
    dominates each group term in spectral norm, so the weighted deviation
    is at most the sum of the complements. Holds on every draw."""
    lam = model.lambdas[None, :]
    return np.sum(1.0 / (lam / model.variances[:, None] + 1.0), axis=0)


def hppca_stats(model: HppcaModel, c_const: float = 1.0,
                t: float = 1.0) -> HppcaStats:
    if c_const <= 0.0 or t <= 0.0:
        raise ValueError("c_const and t must be positive")
    w = _weights(model)
    frac = model.group_sizes / model.n_total
    lam_max = float(model.lambdas.max())
    lam_sum = float(model.lambdas.sum())
    v = model.variances
    sigma_bar = np.array([
        float(np.sum(w[:, i] * frac * (lam_max / v + 1.0)))
        for i in range(model.k)
    ])
    xi_bar = np.array([
        float(np.sum(w[:, i] * frac * (lam_sum / v + model.d)))
        for i in range(model.k)
    ])
    n = model.n_total
    r_tilde = xi_bar / sigma_bar
    load = (r_tilde * np.log(model.d) + t) / n
    conc = c_const * (sigma_bar / sigma_bar.max()) * np.maximum(
        np.sqrt(load), load * np.log(n))
    return HppcaStats(
        sigma_bar=sigma_bar,
        xi_bar=xi_bar,
        snr_bounds=snr_distance_bounds(model),
        concentration_bounds=conc,
    )


def save_model(model: HppcaModel, path):
    doc = {
        "d": model.d,
        "k": model.k,
        "lambdas": model.lambdas.tolist(),
        "variances": model.variances.tolist(),
        "group_sizes": model.group_sizes.tolist(),
        "seed": model.seed,
        "u_true": model.u_true.cols.ravel().tolist(),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)


def load_model(path) -> HppcaModel:
    with open(path) as fh:
        doc = json.load(fh)
    u = doc.get("u_true")
    if u is not None:
        u = np.asarray(u, dtype=float).reshape(doc["d"], doc["k"])
    return make_model(doc["d"], doc["k"], doc["lambdas"], doc["variances"],
                      doc["group_sizes"], doc.get("seed", 0), u_true=u)
