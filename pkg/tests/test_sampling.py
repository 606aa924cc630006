import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acpmbr.metrics import ChrF, chrf_score
from acpmbr.sampling import (
    ObservationMask,
    PartialScoreMatrix,
    derive_seed,
    observation_budget,
    observe,
    sample_mask,
)

TOY = ["the cat sat", "a cat sat down", "the cat is sitting", "dogs run fast"]
# chrF of TOY[i] against TOY[j], computed with sacrebleu 2.6.0
TOY_TABLE = [
    [100.0, 40.491474889359665, 31.791506199941693, 4.716981132075471],
    [47.37327615116464, 100.0, 10.93419074478475, 10.757575757575756],
    [45.92902108474032, 13.262698328186563, 100.0, 8.47457627118644],
    [5.319148936170213, 10.757575757575756, 7.042253521126759, 100.0],
]


class CountingChrF(ChrF):
    calls = 0

    def score_batch(self, pairs):
        self.calls += len(pairs)
        return super().score_batch(pairs)


def test_full_observation():
    for seed in range(5):
        assert sample_mask(4, 4, 1, seed).observed.all()


def test_large_scale_budget():
    mask = sample_mask(1024, 1024, 32, 0)
    assert mask.size == 32768
    assert observation_budget(1024, 1024, 16) == 65536


def test_determinism():
    assert sample_mask(8, 8, 4, 7) == sample_mask(8, 8, 4, 7)
    assert sample_mask(8, 8, 4, 7) != sample_mask(8, 8, 4, 8)


def test_zero_budget_rejected():
    with pytest.raises(ValueError):
        sample_mask(2, 2, 5, 0)


def test_derive_seed_distinguishes_keys():
    assert derive_seed(1, 2) == derive_seed(1, 2)
    assert len({derive_seed(1, 2), derive_seed(2, 1), derive_seed(1, 2, 0)}) == 3


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 30), st.integers(1, 30), st.integers(1, 12), st.integers(0, 2**32), st.booleans())
def test_mask_invariants(n, m, r, seed, coverage):
    if n * m < r:
        return
    mask = sample_mask(n, m, r, seed, coverage)
    assert mask.size == (n * m) // r
    idx = mask.indices()
    assert len({tuple(p) for p in idx.tolist()}) == len(idx)
    assert ((idx >= 0) & (idx < [n, m])).all()
    if coverage and mask.size >= max(n, m):
        assert mask.observed.any(axis=1).all()
        assert mask.observed.any(axis=0).all()


def test_from_indices():
    mask = ObservationMask.from_indices(3, 3, [(0, 0), (2, 1)])
    assert mask.size == 2
    with pytest.raises(ValueError):
        ObservationMask.from_indices(3, 3, [(0, 0), (0, 0)])
    with pytest.raises(ValueError):
        ObservationMask.from_indices(3, 3, [(3, 0)])


def test_observe_full_two_by_two():
    cands = TOY[:2]
    P = observe(cands, cands, ObservationMask.full(2, 2), ChrF())
    direct = [[chrf_score(h, r) for r in cands] for h in cands]
    assert np.array_equal(P.values, direct)


def test_observe_counts_calls():
    metric = CountingChrF()
    mask = ObservationMask.from_indices(4, 4, [(0, 1), (2, 2), (3, 0)])
    P = observe(TOY, TOY, mask, metric)
    assert P.scoring_calls == metric.calls == 3
    assert np.isnan(P.values).sum() == 13


def test_observe_matches_per_cell_table():
    mask = sample_mask(4, 4, 2, 11)
    P = observe(TOY, TOY, mask, ChrF())
    assert P.scoring_calls == 8
    table = np.array(TOY_TABLE)
    np.testing.assert_allclose(P.values[mask.observed], table[mask.observed], atol=1e-9)
    assert np.isnan(P.values[~mask.observed]).all()


def test_partial_matrix_validation():
    mask = ObservationMask.from_indices(2, 2, [(0, 0)])
    with pytest.raises(ValueError):
        PartialScoreMatrix(np.array([[np.inf, 0.0], [0.0, 0.0]]), mask)
    P = PartialScoreMatrix(np.ones((2, 2)), mask)
    assert np.isnan(P.values[1, 1])
    assert P.filled().sum() == 1.0
