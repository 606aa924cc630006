"""Observation masks and partially observed score matrices."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .metrics import Metric


def derive_seed(*keys: int) -> int:
    """Derive a 64-bit seed from a tuple of non-negative integer keys.

    All randomness in the package goes through ``np.random.PCG64`` seeded
    either directly or through this function, so streams for different
    purposes (instance, mask, init) are independent and reproducible.
    """
    # SeedSequence ignores trailing zero words, so (1, 2) and (1, 2, 0) would
    # collide without the length prefix
    entropy = [len(keys), *(int(k) for k in keys)]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass(frozen=True, eq=False)
class ObservationMask:
    n_rows: int
    n_cols: int
    observed: np.ndarray  # bool, shape (n_rows, n_cols)
    reduction_rate: int = 1
    seed: int = 0

    @property
    def size(self) -> int:
        return int(self.observed.sum())

    def indices(self) -> np.ndarray:
        """Observed (i, j) pairs sorted row-major, shape (K, 2)."""
        return np.argwhere(self.observed)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ObservationMask):
            return NotImplemented
        return (self.n_rows, self.n_cols) == (other.n_rows, other.n_cols) and np.array_equal(
            self.observed, other.observed
        )

    @classmethod
    def full(cls, n_rows: int, n_cols: int) -> ObservationMask:
        return cls(n_rows, n_cols, np.ones((n_rows, n_cols), dtype=bool), 1, 0)

    @classmethod
    def from_indices(cls, n_rows: int, n_cols: int, pairs) -> ObservationMask:
        observed = np.zeros((n_rows, n_cols), dtype=bool)
        pairs = np.asarray(pairs, dtype=int).reshape(-1, 2)
        if len(pairs):
            if pairs.min() < 0 or pairs[:, 0].max() >= n_rows or pairs[:, 1].max() >= n_cols:
                raise ValueError("observed index out of bounds")
            observed[pairs[:, 0], pairs[:, 1]] = True
            if observed.sum() != len(pairs):
                raise ValueError("duplicate observed index")
        return cls(n_rows, n_cols, observed, 1, 0)


def observation_budget(n_rows: int, n_cols: int, r: int) -> int:
    return (n_rows * n_cols) // r


def sample_mask(n_rows: int, n_cols: int, r: int, seed: int, coverage: bool = True) -> ObservationMask:
    """Sample floor(N*M/r) distinct cells.

    With ``coverage`` the first max(N, M) cells (or the whole budget if
    smaller) are laid out along two random permutations so that no row or
    column is observed twice before every row and column is observed once;
    the rest are drawn uniformly without replacement from the remaining
    cells.  Without ``coverage`` the whole budget is uniform.
    """
    if n_rows < 1 or n_cols < 1 or r < 1:
        raise ValueError(f"invalid mask request: N={n_rows}, M={n_cols}, r={r}")
    budget = observation_budget(n_rows, n_cols, r)
    if budget < 1:
        raise ValueError(f"budget floor({n_rows}*{n_cols}/{r}) is zero")
    total = n_rows * n_cols
    rng = make_rng(seed)
    flat = np.zeros(total, dtype=bool)
    if budget == total:
        flat[:] = True
    elif coverage:
        rows = rng.permutation(n_rows)
        cols = rng.permutation(n_cols)
        k = np.arange(min(budget, max(n_rows, n_cols)))
        first = rows[k % n_rows] * n_cols + cols[k % n_cols]
        flat[first] = True
        rest = budget - len(first)
        if rest:
            pool = np.flatnonzero(~flat)
            flat[rng.choice(pool, size=rest, replace=False)] = True
    else:
        flat[rng.choice(total, size=budget, replace=False)] = True
    return ObservationMask(n_rows, n_cols, flat.reshape(n_rows, n_cols), r, seed)


@dataclass(eq=False)
class PartialScoreMatrix:
    """Score matrix known only on ``mask``; unobserved entries hold NaN."""

    values: np.ndarray
    mask: ObservationMask
    scoring_calls: int = 0

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.mask.n_rows, self.mask.n_cols):
            raise ValueError(f"values shape {self.values.shape} does not match mask")
        if not np.all(np.isfinite(self.values[self.mask.observed])):
            raise ValueError("observed scores must be finite")
        self.values = np.where(self.mask.observed, self.values, np.nan)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def observed(self) -> np.ndarray:
        return self.mask.observed

    def filled(self, fill: float = 0.0) -> np.ndarray:
        return np.where(self.mask.observed, self.values, fill)

    @classmethod
    def from_dense(cls, dense: np.ndarray, mask: ObservationMask) -> PartialScoreMatrix:
        return cls(np.where(mask.observed, dense, np.nan), mask)


def observe(
    candidates: Sequence[str],
    pseudo_refs: Sequence[str],
    mask: ObservationMask,
    metric: Metric,
) -> PartialScoreMatrix:
    """Score exactly the masked (candidate, pseudo-reference) cells."""
    if len(candidates) != mask.n_rows or len(pseudo_refs) != mask.n_cols:
        raise ValueError(
            f"mask is {mask.n_rows}x{mask.n_cols} but got "
            f"{len(candidates)} candidates and {len(pseudo_refs)} pseudo-references"
        )
    cells = mask.indices()
    values = np.full((mask.n_rows, mask.n_cols), np.nan)
    if len(cells):
        scores = metric.score_batch([(candidates[i], pseudo_refs[j]) for i, j in cells])
        values[cells[:, 0], cells[:, 1]] = scores
    return PartialScoreMatrix(values, mask, scoring_calls=len(cells))
