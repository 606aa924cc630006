import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acpmbr.factorization import (
    STAGES_AC,
    FactorizerConfig,
    FactorPair,
    ac_als_fit,
    als_fit,
    complete,
    init_factors,
    loss_ac,
    loss_mf,
    solve_block,
    total_loss,
)
from instances import coupled_instance, exact_mask, low_rank, partial, random_mask
from oracles import (
    coupled_objective,
    fd_gradient,
    minimise_single,
    naive_loss_ac,
    naive_loss_mf,
    naive_product,
    naive_total,
)


def rand_pair(rng, d, n, m):
    return FactorPair(rng.normal(size=(d, n)), rng.normal(size=(d, m)))


# ---------------------------------------------------------------------------
# objectives


def test_loss_mf_zero_factors():
    observed = np.array([[True, False], [False, True]])
    P = partial(np.array([[3.0, 0.0], [0.0, 4.0]]), observed)
    F = FactorPair(np.zeros((2, 2)), np.zeros((2, 2)))
    for lam in (0.0, 0.7, 5.0):
        assert loss_mf(F, P, lam) == 25.0


def test_loss_mf_perfect_fit():
    rng = np.random.default_rng(0)
    F = rand_pair(rng, 2, 3, 3)
    P = partial(complete(F), random_mask(rng, 3, 3, 0.6))
    assert loss_mf(F, P, 0.0) == pytest.approx(0.0, abs=1e-24)


def test_loss_ac_examples():
    rng = np.random.default_rng(1)
    F = rand_pair(rng, 3, 4, 5)
    assert loss_ac(F, F.copy()) == 0.0
    G = F.copy()
    G.U[1, 2] += 1.0
    assert loss_ac(F, G) == pytest.approx(1.0)


@pytest.mark.parametrize("seed", range(5))
def test_objectives_match_naive(seed):
    rng = np.random.default_rng(seed)
    d, n, m = 2, 3, 3
    F, Fp = rand_pair(rng, d, n, m), rand_pair(rng, d, n, m)
    tv, dv = rng.normal(size=(n, m)), rng.normal(size=(n, m))
    tm, dm = random_mask(rng, n, m, 0.5), random_mask(rng, n, m, 0.5)
    Pt, Pd = partial(tv, tm), partial(dv, dm)
    lam, gamma = rng.random(), 2 * rng.random()
    assert loss_mf(F, Pt, lam) == pytest.approx(naive_loss_mf(F.U, F.V, tv, tm, lam), rel=1e-12)
    assert loss_ac(F, Fp) == pytest.approx(naive_loss_ac(F.U, F.V, Fp.U, Fp.V), rel=1e-12)
    expected = naive_total(F.U, F.V, Fp.U, Fp.V, tv, tm, dv, dm, lam, gamma)
    assert total_loss(F, Fp, Pt, Pd, lam, gamma) == pytest.approx(expected, rel=1e-12)


def test_total_loss_special_cases():
    rng = np.random.default_rng(2)
    Pt, Pd = coupled_instance(rng, 4, 4)
    F, Fp = rand_pair(rng, 2, 4, 4), rand_pair(rng, 2, 4, 4)
    assert total_loss(F, Fp, Pt, Pd, 0.3, 0.0) == pytest.approx(loss_mf(F, Pt, 0.3) + loss_mf(Fp, Pd, 0.3))
    Z = FactorPair(np.zeros((2, 4)), np.zeros((2, 4)))
    expected = np.nansum(Pt.values**2) + np.nansum(Pd.values**2)
    assert total_loss(Z, Z.copy(), Pt, Pd, 0.3, 1.0) == pytest.approx(expected)


def test_complete():
    F = FactorPair(np.array([[1.0, 1.0]]), np.array([[2.0, 2.0, 2.0]]))
    assert np.array_equal(complete(F), np.full((2, 3), 2.0))
    rng = np.random.default_rng(3)
    G = rand_pair(rng, 3, 4, 5)
    np.testing.assert_allclose(complete(G), naive_product(G.U, G.V), rtol=1e-12)


def test_shape_errors():
    with pytest.raises(ValueError):
        FactorPair(np.zeros((2, 3)), np.zeros((3, 3)))
    rng = np.random.default_rng(4)
    with pytest.raises(ValueError):
        loss_ac(rand_pair(rng, 2, 3, 3), rand_pair(rng, 2, 3, 4))
    with pytest.raises(ValueError):
        loss_mf(rand_pair(rng, 2, 3, 3), partial(np.zeros((4, 4)), np.ones((4, 4), bool)), 0.1)


# ---------------------------------------------------------------------------
# configuration and block solves


def test_default_config():
    cfg = FactorizerConfig()
    assert (cfg.rank, cfg.lam, cfg.max_iters, cfg.tol) == (8, 0.1, 30, 1e-4)
    assert FactorizerConfig(gamma=0.1).gamma == 0.1
    assert FactorizerConfig(gamma=1.0).gamma == 1.0


@pytest.mark.parametrize("bad", [dict(rank=0), dict(lam=-1), dict(gamma=-0.1), dict(max_iters=0), dict(tol=0), dict(restarts=0)])
def test_config_validation(bad):
    with pytest.raises(ValueError):
        FactorizerConfig(**bad)


def test_solve_block_matches_per_vector_solves():
    rng = np.random.default_rng(5)
    d, K, L = 3, 6, 7
    other = rng.normal(size=(d, L))
    mask = random_mask(rng, K, L, 0.5)
    values = np.where(mask, rng.normal(size=(K, L)), 0.0)
    prior = rng.normal(size=(d, K))
    got = solve_block(other, values, mask, 0.4, prior, 0.25)
    for k in range(K):
        cols = other[:, mask[k]]
        A = cols @ cols.T + 0.4 * np.eye(d)
        b = cols @ values[k, mask[k]] + 0.25 * prior[:, k]
        np.testing.assert_allclose(got[:, k], np.linalg.solve(A, b), rtol=1e-10, atol=1e-12)


def test_solve_block_min_norm_when_unregularised():
    other = np.array([[1.0, 0.0], [0.0, 0.0]])
    mask = np.array([[True, True]])
    values = np.array([[2.0, 5.0]])
    np.testing.assert_allclose(solve_block(other, values, mask, 0.0), [[2.0], [0.0]])


def test_empty_row_shrinks_to_partner():
    other = np.eye(2)
    mask = np.zeros((1, 2), bool)
    prior = np.array([[4.0], [-2.0]])
    got = solve_block(other, np.zeros((1, 2)), mask, 0.5, prior, 0.25)
    np.testing.assert_allclose(got, 0.25 / 0.5 * prior)


def test_init_streams():
    cfg = FactorizerConfig(rank=3, seed=9)
    t1, d1 = init_factors(cfg, 4, 5)
    t2, d2 = init_factors(cfg, 4, 5)
    assert np.array_equal(t1.U, t2.U) and np.array_equal(d1.V, d2.V)
    assert not np.array_equal(t1.U, d1.U)
    for F in (t1, d1):
        assert np.abs(F.U).max() <= cfg.init_scale and np.abs(F.V).max() <= cfg.init_scale


# ---------------------------------------------------------------------------
# fits


def test_exact_recovery_full_observation():
    rng = np.random.default_rng(6)
    X = low_rank(rng, 4, 4, 2)
    P = partial(X, np.ones((4, 4), bool))
    F, _ = als_fit(P, FactorizerConfig(rank=2, lam=1e-6, max_iters=5000, tol=1e-14))
    assert np.mean((complete(F) - X) ** 2) < 1e-8


def test_als_matches_gradient_oracle():
    rng = np.random.default_rng(7)
    X = low_rank(rng, 4, 4, 2)
    observed = exact_mask(rng, 4, 4, 8)
    P = partial(X, observed)
    cfg = FactorizerConfig(rank=2, lam=0.1, max_iters=20000, tol=1e-15, restarts=10)
    _, report = als_fit(P, cfg)
    best = minimise_single(X, observed, 0.1, 2)
    assert abs(report.final_loss - best) <= 1e-6 * abs(best)


def test_stages_and_stationarity_after_each_block():
    rng = np.random.default_rng(8)
    Pt, Pd = coupled_instance(rng, 5, 4, frac=0.6)
    lam, gamma = 0.3, 0.7
    stages = []

    def objective(F, Fp):
        return coupled_objective(F.U, F.V, Fp.U, Fp.V, Pt.filled(), Pt.observed, Pd.filled(), Pd.observed, lam, gamma)

    def check(stage, F, Fp):
        stages.append(stage)
        owner, name = {"u_distilled": (Fp, "U"), "u": (F, "U"), "v_distilled": (Fp, "V"), "v": (F, "V")}[stage]
        current = getattr(owner, name)

        def f(x):
            setattr(owner, name, x.reshape(current.shape))
            try:
                return objective(F, Fp)
            finally:
                setattr(owner, name, current)

        g = fd_gradient(f, current.ravel())
        assert np.linalg.norm(g) <= 1e-4 * (1 + abs(objective(F, Fp)))

    ac_als_fit(Pt, Pd, FactorizerConfig(rank=2, lam=lam, gamma=gamma, max_iters=3, tol=1e-12), callback=check)
    assert stages == list(STAGES_AC) * 3


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 7), st.integers(2, 7), st.integers(1, 3), st.floats(0.05, 1.0), st.floats(0.0, 2.0), st.integers(0, 10**6))
def test_monotone_descent(n, m, d, lam, gamma, seed):
    rng = np.random.default_rng(seed)
    Pt, Pd = coupled_instance(rng, n, m, rank=min(2, n, m), frac=0.5)
    cfg = FactorizerConfig(rank=d, lam=lam, gamma=gamma, max_iters=25, tol=1e-12, seed=seed)
    for trace in (als_fit(Pt, cfg)[1], ac_als_fit(Pt, Pd, cfg)[2]):
        seq = [trace.initial_loss, *trace.loss_trace]
        for a, b in zip(seq, seq[1:]):
            assert b <= a + 1e-9 * abs(a)


def test_gamma_zero_degeneracy():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        Pt, Pd = coupled_instance(rng, 6, 5, frac=0.6)
        cfg = FactorizerConfig(rank=2, lam=0.1, gamma=0.0, max_iters=30, tol=1e-300, seed=seed)
        F_als, _ = als_fit(Pt, cfg)
        F_ac, _, _ = ac_als_fit(Pt, Pd, cfg)
        assert np.array_equal(F_als.U, F_ac.U) and np.array_equal(F_als.V, F_ac.V)


def test_large_gamma_pulls_factors_together():
    rng = np.random.default_rng(10)
    Pt, Pd = coupled_instance(rng, 6, 6, frac=0.5, agreement=0.5)
    gaps = []
    for gamma in (1.0, 10.0, 100.0, 1000.0):
        cfg = FactorizerConfig(rank=2, lam=0.1, gamma=gamma, max_iters=2000, tol=1e-12)
        F, Fp, _ = ac_als_fit(Pt, Pd, cfg)
        gaps.append(loss_ac(F, Fp))
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))


def test_determinism():
    rng = np.random.default_rng(11)
    Pt, Pd = coupled_instance(rng, 6, 6)
    cfg = FactorizerConfig(rank=3, gamma=0.4, seed=5)
    a = ac_als_fit(Pt, Pd, cfg)
    b = ac_als_fit(Pt, Pd, cfg)
    for x, y in zip(a[:2], b[:2]):
        assert np.array_equal(x.U, y.U) and np.array_equal(x.V, y.V)
    assert a[2].loss_trace == b[2].loss_trace


def test_swap_symmetry():
    # the distilled side is updated first, so swapping roles changes the
    # iterate path; at convergence both reach the same stationary value
    rng = np.random.default_rng(12)
    Pt, Pd = coupled_instance(rng, 5, 5, frac=0.7, agreement=0.9)
    cfg = FactorizerConfig(rank=2, lam=0.1, gamma=0.5, max_iters=20000, tol=1e-15)
    F0, Fp0 = init_factors(cfg, 5, 5)
    F, Fp, rep = ac_als_fit(Pt, Pd, cfg, init=(F0, Fp0))
    G, Gp, rep_swapped = ac_als_fit(Pd, Pt, cfg, init=(Fp0, F0))
    assert rep_swapped.final_loss == pytest.approx(rep.final_loss, rel=1e-6)
    np.testing.assert_allclose(complete(Gp), complete(F), atol=1e-4)
    np.testing.assert_allclose(complete(G), complete(Fp), atol=1e-4)


def test_restarts_keep_the_best_run():
    rng = np.random.default_rng(13)
    Pt, Pd = coupled_instance(rng, 5, 5)
    cfg = FactorizerConfig(rank=2, gamma=0.5, max_iters=200, tol=1e-12)
    single = ac_als_fit(Pt, Pd, cfg)[2].final_loss
    multi = ac_als_fit(Pt, Pd, cfg.with_(restarts=5))[2].final_loss
    assert multi <= single


def test_unregularised_needs_coverage():
    observed = np.ones((3, 3), bool)
    observed[2] = False
    P = partial(np.ones((3, 3)), observed)
    with pytest.raises(ValueError):
        als_fit(P, FactorizerConfig(rank=1, lam=0.0))
    full = partial(np.ones((3, 3)), np.ones((3, 3), bool))
    F, _ = als_fit(full, FactorizerConfig(rank=1, lam=0.0, max_iters=200, tol=1e-14))
    np.testing.assert_allclose(complete(F), 1.0, atol=1e-8)


def test_report_fields():
    rng = np.random.default_rng(14)
    Pt, _ = coupled_instance(rng, 5, 5)
    _, rep = als_fit(Pt, FactorizerConfig(rank=2, max_iters=3, tol=1e-15))
    assert rep.iterations_run == len(rep.loss_trace) == 3
    assert not rep.converged
    _, rep = als_fit(Pt, FactorizerConfig(rank=2, max_iters=5000, tol=1e-6))
    assert rep.converged and rep.iterations_run < 5000
