"""Completion error, cost accounting, gamma tuning and paired bootstrap."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .factorization import FactorizerConfig, ac_als_fit, als_fit, complete
from .sampling import PartialScoreMatrix, derive_seed, make_rng, sample_mask
from .synth import SynthSpec, gen_pair

SWEEP_COLUMNS = ("gamma", "r", "r_prime", "seed", "mse")
BENCH_COLUMNS = ("method", "r", "r_prime", "gamma", "seed", "mse", "cost")
REFERENCE_CANDIDATES = 1024


def mse(completed: np.ndarray, truth: np.ndarray) -> float:
    completed = np.asarray(completed, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if completed.shape != truth.shape:
        raise ValueError(f"shape mismatch: {completed.shape} vs {truth.shape}")
    return float(np.mean((completed - truth) ** 2))


@dataclass(frozen=True)
class CostModel:
    """Parameter counts in millions; per-call cost is taken proportional to them."""

    target_params: float
    distilled_params: float = 1.0

    def __post_init__(self) -> None:
        if not (self.target_params > 0 and self.distilled_params > 0):
            raise ValueError("parameter counts must be positive")


def cost_pmbr(model: CostModel, r: int) -> float:
    if r < 1:
        raise ValueError("reduction rate must be >= 1")
    return model.target_params / r


def cost_ac_pmbr(model: CostModel, r: int, r_prime: int) -> float:
    if r < 1 or r_prime < 1:
        raise ValueError("reduction rates must be >= 1")
    return model.target_params / r + model.distilled_params / r_prime


def desk_rate(rate: int, n: int, ref_n: int = REFERENCE_CANDIDATES) -> int:
    """Map a reduction rate used at ``ref_n`` candidates onto ``n`` candidates.

    Keeps the number of observed entries per row (n / r) fixed, which is
    what governs how well-posed the completion is.  Never below 1.
    """
    return max(1, (rate * n) // ref_n)


# ---------------------------------------------------------------------------
# completion harness on dense ground truth


def _stream_seeds(seed: int) -> tuple[int, int, int]:
    # target mask, distilled mask, factor init
    return derive_seed(seed, 1), derive_seed(seed, 2), derive_seed(seed, 3)


def als_completion_mse(
    truth: np.ndarray,
    r: int,
    cfg: FactorizerConfig,
    seed: int,
    coverage: bool = True,
) -> float:
    N, M = truth.shape
    mask_seed, _, init_seed = _stream_seeds(seed)
    P = PartialScoreMatrix.from_dense(truth, sample_mask(N, M, r, mask_seed, coverage))
    F, _ = als_fit(P, cfg.with_(seed=init_seed))
    return mse(complete(F), truth)


def ac_completion_mse(
    truth: np.ndarray,
    distilled: np.ndarray,
    r: int,
    r_prime: int,
    cfg: FactorizerConfig,
    seed: int,
    coverage: bool = True,
) -> float:
    N, M = truth.shape
    mask_t, mask_d, init_seed = _stream_seeds(seed)
    P_t = PartialScoreMatrix.from_dense(truth, sample_mask(N, M, r, mask_t, coverage))
    P_d = PartialScoreMatrix.from_dense(distilled, sample_mask(N, M, r_prime, mask_d, coverage))
    F, _, _ = ac_als_fit(P_t, P_d, cfg.with_(seed=init_seed))
    return mse(complete(F), truth)


def synthetic_instance(spec: SynthSpec, sigma_d: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """(truth, distilled) pair for harness seed ``seed``."""
    return gen_pair(replace(spec, seed=derive_seed(seed, 0)), sigma_d)


def bench(
    spec: SynthSpec,
    sigma_d: float,
    cells: Sequence[tuple[int, int, int]],
    gamma: float,
    seeds: Sequence[int],
    cfg: FactorizerConfig,
    cost_model: CostModel,
    coverage: bool = True,
) -> list[dict]:
    """ALS vs AC-ALS completion error on synthetic pairs.

    Each cell is ``(r_als, r_target, r_distilled)``: plain ALS observes
    1/r_als of the truth, AC-ALS observes 1/r_target of the truth and
    1/r_distilled of the distilled matrix.  One row per method, cell and seed.
    """
    rows = []
    for seed in seeds:
        truth, distilled = synthetic_instance(spec, sigma_d, seed)
        run_seed = derive_seed(seed, 1)
        for r_als, r_t, r_d in cells:
            rows.append({
                "method": "als", "r": r_als, "r_prime": None, "gamma": None, "seed": seed,
                "mse": als_completion_mse(truth, r_als, cfg, run_seed, coverage),
                "cost": cost_pmbr(cost_model, r_als),
            })
            rows.append({
                "method": "ac-als", "r": r_t, "r_prime": r_d, "gamma": float(gamma), "seed": seed,
                "mse": ac_completion_mse(truth, distilled, r_t, r_d, cfg.with_(gamma=gamma), run_seed, coverage),
                "cost": cost_ac_pmbr(cost_model, r_t, r_d),
            })
    return rows


@dataclass
class SweepResult:
    grid: list[tuple[float, int, int]]
    mse_per_point: list[float]
    best_point: int
    rows: list[dict] = field(default_factory=list)

    @property
    def best_gamma(self) -> float:
        return self.grid[self.best_point][0]

    def to_csv(self) -> str:
        return rows_to_csv(self.rows, SWEEP_COLUMNS)


def tune_gamma(
    dev_instances: Sequence[tuple[np.ndarray, np.ndarray]],
    gamma_grid: Sequence[float],
    factor_cfg: FactorizerConfig,
    r: int,
    r_prime: int,
    seeds: Sequence[int],
    coverage: bool = True,
) -> SweepResult:
    """Pick the agreement weight with the lowest mean completion MSE.

    ``dev_instances`` are (ground truth, distilled) dense pairs.  Each grid
    point is scored on every instance and seed; ties go to the earlier point.
    """
    if not gamma_grid:
        raise ValueError("gamma grid is empty")
    if not dev_instances or not seeds:
        raise ValueError("need at least one dev instance and one seed")
    grid = [(float(g), r, r_prime) for g in gamma_grid]
    rows: list[dict] = []
    means = []
    for gamma, _, _ in grid:
        cfg = factor_cfg.with_(gamma=gamma)
        per_seed = []
        for seed in seeds:
            errs = [
                ac_completion_mse(truth, dist, r, r_prime, cfg, derive_seed(seed, k), coverage)
                for k, (truth, dist) in enumerate(dev_instances)
            ]
            per_seed.append(float(np.mean(errs)))
            rows.append({"gamma": gamma, "r": r, "r_prime": r_prime, "seed": seed, "mse": per_seed[-1]})
        means.append(float(np.mean(per_seed)))
    return SweepResult(grid, means, int(np.argmin(means)), rows)


# ---------------------------------------------------------------------------
# significance


@dataclass(frozen=True)
class BootstrapResult:
    p_value: float
    ci_a: tuple[float, float]
    ci_b: tuple[float, float]
    mean_a: float
    mean_b: float

    def __iter__(self):
        # unpacks as (p_value, ci_a, ci_b)
        return iter((self.p_value, self.ci_a, self.ci_b))


def paired_bootstrap(
    scores_a: Sequence[float],
    scores_b: Sequence[float],
    n_resamples: int = 1000,
    seed: int = 0,
) -> BootstrapResult:
    """One-sided paired bootstrap for "system b beats system a".

    Resamples sentence indices with replacement; the draw for all resamples
    is ``rng.integers(0, n, size=(n_resamples, n))`` from a PCG64 generator
    seeded with ``seed``.  The p-value is the fraction of resamples in which
    mean(b) <= mean(a).  Confidence intervals are 95% percentile intervals.
    """
    a = np.asarray(scores_a, dtype=float)
    b = np.asarray(scores_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"score lists must be 1-D and equal length, got {a.shape} and {b.shape}")
    if len(a) < 2:
        raise ValueError("need at least two sentences")
    if n_resamples < 100:
        raise ValueError("n_resamples must be at least 100")
    idx = make_rng(seed).integers(0, len(a), size=(n_resamples, len(a)))
    means_a = a[idx].mean(axis=1)
    means_b = b[idx].mean(axis=1)
    p = float(np.mean(means_b <= means_a))
    ci_a = tuple(float(x) for x in np.percentile(means_a, [2.5, 97.5]))
    ci_b = tuple(float(x) for x in np.percentile(means_b, [2.5, 97.5]))
    return BootstrapResult(p, ci_a, ci_b, float(a.mean()), float(b.mean()))


def rows_to_csv(rows: Iterable[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: _fmt(row.get(k, "")) for k in columns})
    return buf.getvalue()


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else str(value)
