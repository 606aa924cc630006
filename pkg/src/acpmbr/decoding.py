"""Candidate selection: MBR, PMBR, AC-PMBR, MAP and reference oracle."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .factorization import FactorizerConfig, ac_als_fit, als_fit, complete
from .metrics import Metric
from .sampling import ObservationMask, observe, sample_mask

STRATEGIES = ("map", "mbr", "pmbr", "ac-pmbr", "oracle")


@dataclass
class CandidateSet:
    source: str
    candidates: list[str]
    pseudo_refs: list[str] | None = None
    model_scores: list[float] | None = None
    reference: str | None = None

    def __post_init__(self) -> None:
        if not self.candidates:
            raise ValueError("candidate set is empty")
        if self.pseudo_refs is None:
            # candidates double as pseudo-references
            self.pseudo_refs = list(self.candidates)
        if not self.pseudo_refs:
            raise ValueError("pseudo-reference set is empty")
        if self.model_scores is not None and len(self.model_scores) != len(self.candidates):
            raise ValueError(
                f"{len(self.model_scores)} model scores for {len(self.candidates)} candidates"
            )

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.candidates), len(self.pseudo_refs)


@dataclass
class Selection:
    index: int
    expected_utilities: list[float]
    strategy: str
    metric_calls_target: int = 0
    metric_calls_distilled: int = 0
    completed: np.ndarray | None = field(default=None, repr=False)


def _first_argmax(values: np.ndarray) -> int:
    # np.argmax already returns the first maximum
    return int(np.argmax(values))


def select_from_matrix(matrix: np.ndarray, strategy: str = "matrix") -> Selection:
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or 0 in matrix.shape:
        raise ValueError(f"expected a non-empty 2-D matrix, got shape {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise ValueError("score matrix contains non-finite values")
    utilities = matrix.mean(axis=1)
    return Selection(_first_argmax(utilities), utilities.tolist(), strategy)


def decode_mbr(cs: CandidateSet, metric: Metric) -> Selection:
    N, M = cs.shape
    P = observe(cs.candidates, cs.pseudo_refs, ObservationMask.full(N, M), metric)
    sel = select_from_matrix(P.values, "mbr")
    sel.metric_calls_target = P.scoring_calls
    return sel


def decode_pmbr(
    cs: CandidateSet,
    metric: Metric,
    r: int,
    factor_cfg: FactorizerConfig,
    mask_seed: int,
    coverage: bool = True,
) -> Selection:
    N, M = cs.shape
    mask = sample_mask(N, M, r, mask_seed, coverage)
    P = observe(cs.candidates, cs.pseudo_refs, mask, metric)
    F, _ = als_fit(P, factor_cfg)
    completed = complete(F)
    sel = select_from_matrix(completed, "pmbr")
    sel.metric_calls_target = P.scoring_calls
    sel.completed = completed
    return sel


def decode_ac_pmbr(
    cs: CandidateSet,
    metric_target: Metric,
    metric_distilled: Metric,
    r: int,
    r_prime: int,
    factor_cfg: FactorizerConfig,
    seeds: Sequence[int],
    coverage: bool = True,
) -> Selection:
    """``seeds`` holds the (target, distilled) mask seeds."""
    N, M = cs.shape
    seed_t, seed_d = seeds
    P_t = observe(cs.candidates, cs.pseudo_refs, sample_mask(N, M, r, seed_t, coverage), metric_target)
    P_d = observe(cs.candidates, cs.pseudo_refs, sample_mask(N, M, r_prime, seed_d, coverage), metric_distilled)
    F, _, _ = ac_als_fit(P_t, P_d, factor_cfg)
    completed = complete(F)
    sel = select_from_matrix(completed, "ac-pmbr")
    sel.metric_calls_target = P_t.scoring_calls
    sel.metric_calls_distilled = P_d.scoring_calls
    sel.completed = completed
    return sel


def select_map(cs: CandidateSet) -> Selection:
    if cs.model_scores is None:
        raise ValueError("MAP selection needs model_scores")
    scores = np.asarray(cs.model_scores, dtype=float)
    return Selection(_first_argmax(scores), scores.tolist(), "map")


def select_oracle(cs: CandidateSet, metric: Metric) -> Selection:
    if cs.reference is None:
        raise ValueError("oracle selection needs a reference")
    scores = np.asarray(metric.score_batch([(c, cs.reference) for c in cs.candidates]))
    return Selection(_first_argmax(scores), scores.tolist(), "oracle", metric_calls_target=len(cs.candidates))
