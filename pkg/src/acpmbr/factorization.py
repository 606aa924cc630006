"""Low-rank completion of partially observed score matrices.

``als_fit`` minimises the regularised matrix-factorisation objective

    sum_{(i,j) observed} (O_ij - u_i.v_j)^2 + lam * (sum ||u_i||^2 + sum ||v_j||^2)

by alternating exact least-squares solves.  ``ac_als_fit`` couples two such
problems (target and distilled score matrices) with an agreement penalty
``gamma * (sum ||u_i - u'_i||^2 + sum ||v_j - v'_j||^2)`` and alternates over
four factor blocks, distilled side first.

Within one block every vector's update depends only on the other blocks, so
a whole block is solved at once with a stacked d x d system per vector; this
is the same result as updating the vectors one at a time in index order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .sampling import PartialScoreMatrix, derive_seed, make_rng

_logger = logging.getLogger(__name__)

# update stages reported to the fit callbacks, in execution order
STAGES_ALS = ("u", "v")
STAGES_AC = ("u_distilled", "u", "v_distilled", "v")


@dataclass(eq=False)
class FactorPair:
    """Factors U (d x N) and V (d x M); the completion is U.T @ V."""

    U: np.ndarray
    V: np.ndarray

    def __post_init__(self) -> None:
        self.U = np.asarray(self.U, dtype=float)
        self.V = np.asarray(self.V, dtype=float)
        if self.U.ndim != 2 or self.V.ndim != 2 or self.U.shape[0] != self.V.shape[0]:
            raise ValueError(f"incompatible factor shapes {self.U.shape} and {self.V.shape}")
        if self.U.shape[0] < 1:
            raise ValueError("rank must be at least 1")

    @property
    def rank(self) -> int:
        return self.U.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.U.shape[1], self.V.shape[1]

    def copy(self) -> FactorPair:
        return FactorPair(self.U.copy(), self.V.copy())


@dataclass
class FactorizerConfig:
    rank: int = 8
    lam: float = 0.1
    gamma: float = 0.0
    max_iters: int = 30
    tol: float = 1e-4
    seed: int = 0
    init_scale: float = 0.1
    # independent starts; the fit with the lowest final objective is kept
    restarts: int = 1

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.lam < 0 or self.gamma < 0:
            raise ValueError("lam and gamma must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not self.init_scale > 0:
            raise ValueError("init_scale must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")

    def with_(self, **changes) -> FactorizerConfig:
        return replace(self, **changes)


@dataclass
class FitReport:
    iterations_run: int = 0
    loss_trace: list[float] = field(default_factory=list)
    converged: bool = False
    initial_loss: float = float("nan")

    @property
    def final_loss(self) -> float:
        return self.loss_trace[-1] if self.loss_trace else self.initial_loss


# ---------------------------------------------------------------------------
# objectives


def _check_dims(F: FactorPair, P: PartialScoreMatrix) -> None:
    if F.shape != P.shape:
        raise ValueError(f"factor shape {F.shape} does not match matrix shape {P.shape}")


def loss_mf(F: FactorPair, P: PartialScoreMatrix, lam: float) -> float:
    _check_dims(F, P)
    resid = np.where(P.observed, P.filled() - F.U.T @ F.V, 0.0)
    return float(np.sum(resid**2) + lam * (np.sum(F.U**2) + np.sum(F.V**2)))


def loss_ac(F: FactorPair, Fp: FactorPair) -> float:
    if F.U.shape != Fp.U.shape or F.V.shape != Fp.V.shape:
        raise ValueError(f"factor pairs differ in shape: {F.U.shape}/{F.V.shape} vs {Fp.U.shape}/{Fp.V.shape}")
    return float(np.sum((F.U - Fp.U) ** 2) + np.sum((F.V - Fp.V) ** 2))


def total_loss(
    F: FactorPair,
    Fp: FactorPair,
    P_target: PartialScoreMatrix,
    P_distilled: PartialScoreMatrix,
    lam: float,
    gamma: float,
) -> float:
    return loss_mf(F, P_target, lam) + loss_mf(Fp, P_distilled, lam) + gamma * loss_ac(F, Fp)


def complete(F: FactorPair) -> np.ndarray:
    return F.U.T @ F.V


# ---------------------------------------------------------------------------
# block solves


def solve_block(
    other: np.ndarray,
    values: np.ndarray,
    mask: np.ndarray,
    reg: float,
    prior: np.ndarray | None = None,
    gamma: float = 0.0,
) -> np.ndarray:
    """Exact minimiser of one factor block with ``other`` held fixed.

    For each row k of ``mask`` (K x L) solves

        (sum_{l observed} o_l o_l^T + reg I) x_k = sum_{l observed} values_kl o_l + gamma prior_k

    where o_l are the columns of ``other`` (d x L).  Returns the d x K block.
    ``values`` must be zero wherever ``mask`` is false.  With ``reg == 0``
    each system is solved in the minimum-norm least-squares sense.
    """
    d, L = other.shape
    weights = mask.astype(float)
    outer = (other[:, None, :] * other[None, :, :]).reshape(d * d, L)
    grams = (weights @ outer.T).reshape(-1, d, d)
    rhs = values @ other.T
    if gamma:
        rhs = rhs + gamma * prior.T
    if reg > 0:
        grams = grams + reg * np.eye(d)
        return np.linalg.solve(grams, rhs[..., None])[..., 0].T
    out = np.empty((d, len(rhs)))
    for k in range(len(rhs)):
        out[:, k] = np.linalg.lstsq(grams[k], rhs[k], rcond=None)[0]
    return out


def _init_factors(seed: int, n_rows: int, n_cols: int, rank: int, scale: float, n_pairs: int) -> list[FactorPair]:
    # stream 2k -> U of pair k, stream 2k+1 -> V of pair k
    streams = np.random.SeedSequence(seed).spawn(2 * n_pairs)
    pairs = []
    for k in range(n_pairs):
        U = make_rng(streams[2 * k]).uniform(-scale, scale, size=(rank, n_rows))
        V = make_rng(streams[2 * k + 1]).uniform(-scale, scale, size=(rank, n_cols))
        pairs.append(FactorPair(U, V))
    return pairs


def init_factors(cfg: FactorizerConfig, n_rows: int, n_cols: int) -> tuple[FactorPair, FactorPair]:
    """Initial (target, distilled) factors drawn from four independent streams."""
    target, distilled = _init_factors(cfg.seed, n_rows, n_cols, cfg.rank, cfg.init_scale, 2)
    return target, distilled


def _restart_seed(cfg: FactorizerConfig, k: int) -> int:
    return cfg.seed if k == 0 else derive_seed(cfg.seed, k)


def _best_of(fits, final_loss):
    best = None
    for fit in fits:
        if best is None or final_loss(fit) < final_loss(best):
            best = fit
    return best


def _require_coverage(P: PartialScoreMatrix, what: str) -> None:
    obs = P.observed
    if not (obs.any(axis=1).all() and obs.any(axis=0).all()):
        raise ValueError(f"{what}: zero regularisation needs every row and column observed")


Callback = Callable[[str, FactorPair, "FactorPair | None"], None]


def als_fit(
    P: PartialScoreMatrix,
    cfg: FactorizerConfig,
    init: FactorPair | None = None,
    callback: Callback | None = None,
) -> tuple[FactorPair, FitReport]:
    """Plain ALS on one partial matrix.  ``cfg.gamma`` is ignored.

    With ``cfg.restarts > 1`` (and no explicit ``init``) the fit is repeated
    from independent initialisations and the lowest final loss wins.
    """
    if init is None and cfg.restarts > 1:
        fits = (_als_single(P, cfg.with_(seed=_restart_seed(cfg, k), restarts=1), None, callback) for k in range(cfg.restarts))
        return _best_of(fits, lambda fit: fit[1].final_loss)
    return _als_single(P, cfg, init, callback)


def _als_single(P, cfg, init, callback):
    if P.mask.size < 1:
        raise ValueError("no observed entries")
    if cfg.lam == 0:
        _require_coverage(P, "als_fit")
    N, M = P.shape
    F = init.copy() if init is not None else init_factors(cfg, N, M)[0]
    _check_dims(F, P)
    values = P.filled()
    obs = P.observed
    report = FitReport(initial_loss=loss_mf(F, P, cfg.lam))
    prev = report.initial_loss
    for _ in range(cfg.max_iters):
        F.U = solve_block(F.V, values, obs, cfg.lam)
        if callback:
            callback("u", F, None)
        F.V = solve_block(F.U, values.T, obs.T, cfg.lam)
        if callback:
            callback("v", F, None)
        cur = loss_mf(F, P, cfg.lam)
        report.loss_trace.append(cur)
        report.iterations_run += 1
        if abs(prev - cur) < cfg.tol:
            report.converged = True
            break
        prev = cur
    _logger.debug("als_fit: %d sweeps, loss %.6g", report.iterations_run, report.final_loss)
    return F, report


def ac_als_fit(
    P_target: PartialScoreMatrix,
    P_distilled: PartialScoreMatrix,
    cfg: FactorizerConfig,
    init: tuple[FactorPair, FactorPair] | None = None,
    callback: Callback | None = None,
) -> tuple[FactorPair, FactorPair, FitReport]:
    """Agreement-constrained ALS.

    Returns the target factors, the distilled factors and a report whose
    loss trace holds the combined objective after each sweep.  Restarts work
    as in :func:`als_fit`, selected on the combined objective.
    """
    if init is None and cfg.restarts > 1:
        fits = (
            _ac_single(P_target, P_distilled, cfg.with_(seed=_restart_seed(cfg, k), restarts=1), None, callback)
            for k in range(cfg.restarts)
        )
        return _best_of(fits, lambda fit: fit[2].final_loss)
    return _ac_single(P_target, P_distilled, cfg, init, callback)


def _ac_single(P_target, P_distilled, cfg, init, callback):
    if P_target.shape != P_distilled.shape:
        raise ValueError(f"target {P_target.shape} and distilled {P_distilled.shape} shapes differ")
    if P_target.mask.size < 1 or P_distilled.mask.size < 1:
        raise ValueError("no observed entries")
    lam, gamma = cfg.lam, cfg.gamma
    reg = lam + gamma
    if reg == 0:
        _require_coverage(P_target, "ac_als_fit")
        _require_coverage(P_distilled, "ac_als_fit")
    N, M = P_target.shape
    if init is not None:
        F, Fp = init[0].copy(), init[1].copy()
    else:
        F, Fp = init_factors(cfg, N, M)
    _check_dims(F, P_target)
    _check_dims(Fp, P_distilled)

    tv, tm = P_target.filled(), P_target.observed
    dv, dm = P_distilled.filled(), P_distilled.observed

    def objective() -> float:
        return total_loss(F, Fp, P_target, P_distilled, lam, gamma)

    report = FitReport(initial_loss=objective())
    prev = report.initial_loss
    for _ in range(cfg.max_iters):
        Fp.U = solve_block(Fp.V, dv, dm, reg, F.U, gamma)
        if callback:
            callback("u_distilled", F, Fp)
        F.U = solve_block(F.V, tv, tm, reg, Fp.U, gamma)
        if callback:
            callback("u", F, Fp)
        Fp.V = solve_block(Fp.U, dv.T, dm.T, reg, F.V, gamma)
        if callback:
            callback("v_distilled", F, Fp)
        F.V = solve_block(F.U, tv.T, tm.T, reg, Fp.V, gamma)
        if callback:
            callback("v", F, Fp)
        cur = objective()
        report.loss_trace.append(cur)
        report.iterations_run += 1
        if abs(prev - cur) < cfg.tol:
            report.converged = True
            break
        prev = cur
    _logger.debug("ac_als_fit: %d sweeps, loss %.6g", report.iterations_run, report.final_loss)
    return F, Fp, report
