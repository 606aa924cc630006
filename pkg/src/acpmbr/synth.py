"""Synthetic ground-truth score matrices and correlated "distilled" copies."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .sampling import derive_seed, make_rng


@dataclass(frozen=True)
class SynthSpec:
    n_rows: int = 64
    n_cols: int = 64
    true_rank: int = 8
    noise_sigma: float = 0.0
    correlation: float = 0.9
    value_range: tuple[float, float] = (0.0, 1.0)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_rows < 1 or self.n_cols < 1:
            raise ValueError("matrix dimensions must be positive")
        if not 1 <= self.true_rank <= min(self.n_rows, self.n_cols):
            raise ValueError(f"true_rank {self.true_rank} outside [1, min(N, M)]")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        if not 0.0 <= self.correlation <= 1.0:
            raise ValueError("correlation must lie in [0, 1]")
        lo, hi = self.value_range
        if not lo < hi:
            raise ValueError("value_range needs lo < hi")


def rescale(X: np.ndarray, value_range: tuple[float, float]) -> np.ndarray:
    lo, hi = value_range
    span = X.max() - X.min()
    if span == 0:
        return np.full_like(X, (lo + hi) / 2.0)
    return lo + (X - X.min()) * ((hi - lo) / span)


def gen_ground_truth(spec: SynthSpec) -> np.ndarray:
    """X = A.T @ B + noise, affinely mapped onto ``spec.value_range``."""
    rng = make_rng(derive_seed(spec.seed, 0))
    A = rng.standard_normal((spec.true_rank, spec.n_rows))
    B = rng.standard_normal((spec.true_rank, spec.n_cols))
    X = A.T @ B
    if spec.noise_sigma > 0:
        X = X + spec.noise_sigma * rng.standard_normal(X.shape)
    return rescale(X, spec.value_range)


def gen_distilled(
    base: np.ndarray,
    rho: float,
    sigma_d: float,
    seed: int,
    spec: SynthSpec | None = None,
) -> np.ndarray:
    """rho * base + (1 - rho) * Z + noise, with Z an independent ground truth.

    Z is drawn by :func:`gen_ground_truth` with the shape of ``base`` and the
    rank/range/noise of ``spec`` (defaults to ``SynthSpec`` defaults, rank
    clipped to the matrix size).  The output is not rescaled.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError("rho must lie in [0, 1]")
    base = np.asarray(base, dtype=float)
    N, M = base.shape
    if spec is None:
        spec = SynthSpec(n_rows=N, n_cols=M, true_rank=min(SynthSpec.true_rank, N, M))
    other = replace(spec, n_rows=N, n_cols=M, seed=derive_seed(seed, 1))
    out = rho * base
    if rho < 1.0:
        out = out + (1.0 - rho) * gen_ground_truth(other)
    if sigma_d > 0:
        out = out + sigma_d * make_rng(derive_seed(seed, 2)).standard_normal(base.shape)
    return out


def gen_pair(spec: SynthSpec, sigma_d: float) -> tuple[np.ndarray, np.ndarray]:
    """Ground truth and its distilled counterpart from one spec seed."""
    truth = gen_ground_truth(spec)
    distilled = gen_distilled(truth, spec.correlation, sigma_d, derive_seed(spec.seed, 100), spec)
    return truth, distilled
