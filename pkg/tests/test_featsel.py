import itertools
import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from gasalpha.errors import DegenerateTargetError, SelectionFailure
from gasalpha.featsel import (
    BorutaConfig, SelectionConfig, anova_f_scores, boruta, chi_square_scores, fit_standardizer, pearson_prune,
    select_percentile, select_pipeline, shapley_importance, shapley_values, vif_prune, vif_scores,
)
from gasalpha.table import FeatureTable


def table_of(**cols):
    n = len(next(iter(cols.values())))
    return FeatureTable(np.datetime64("2020-01-01") + np.arange(n), {k: np.asarray(v, float) for k, v in cols.items()})


# ---- standardizer --------------------------------------------------------------------


def test_standardizer_arithmetic():
    t = table_of(x=[1.0, 3.0, 5.0])
    s = fit_standardizer(t, slice(0, 2))
    assert s.mean[0] == 2.0 and s.std[0] == 1.0
    assert s.apply(t)["x"].tolist() == [-1.0, 1.0, 3.0]


def test_standardized_train_block_has_zero_mean():
    rng = np.random.default_rng(0)
    t = table_of(a=rng.normal(5, 2, 50), b=rng.exponential(3, 50))
    s = fit_standardizer(t, slice(0, 30))
    z = s.apply(t, slice(0, 30))
    for n in z.names:
        assert abs(z[n].mean()) < 1e-12


def test_standardizer_ignores_test_rows():
    rng = np.random.default_rng(1)
    x = rng.normal(size=40)
    a = fit_standardizer(table_of(x=x), slice(0, 30))
    y = x.copy()
    y[30:] = 1e9
    b = fit_standardizer(table_of(x=y), slice(0, 30))
    assert a.mean == b.mean and a.std == b.std


def test_constant_column_warns():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        s = fit_standardizer(table_of(x=[2.0, 2.0, 2.0]))
    assert s.constant[0] and rec


# ---- ANOVA -------------------------------------------------------------------------


def test_anova_hand_value():
    x = np.array([0.0, 2.0, 3.0, 5.0, 3.0, 5.0])
    y = np.array([0, 0, 1, 1, 1, 1])
    # group means 1 and 4, grand mean 3: SSB = 2*4 + 4*1 = 12, SSW = 2 + 4 = 6, F = 12 / (6/4)
    assert anova_f_scores(x[:, None], y)[0] == pytest.approx(8.0, abs=1e-9)


def test_anova_degenerate_columns():
    y = np.array([0, 0, 0, 1, 1, 1])
    same = np.array([1.0, 2.0, 3.0, 1.0, 2.0, 3.0])
    f = anova_f_scores(np.column_stack([same, y.astype(float)]), y)
    assert f[0] == 0.0 and f[1] == np.inf


@given(st.integers(0, 10_000), st.integers(6, 60))
def test_anova_matches_scipy(seed, n):
    rng = np.random.default_rng(seed)
    y = np.array([0, 1] * (n // 2))
    X = rng.normal(size=(len(y), 3)) + y[:, None] * rng.normal(size=3)
    ours = anova_f_scores(X, y)
    ref = [stats.f_oneway(X[y == 0, j], X[y == 1, j]).statistic for j in range(3)]
    assert np.allclose(ours, ref, rtol=1e-9)
    assert np.all(ours >= 0)


def test_anova_single_class():
    with pytest.raises(DegenerateTargetError):
        anova_f_scores(np.ones((4, 1)), np.zeros(4))


def test_select_percentile():
    assert select_percentile(np.array([1.0, 5.0, 3.0, 4.0]), 50).tolist() == [1, 3]
    assert select_percentile(np.array([1.0, 2.0]), 10).tolist() == [1]


# ---- Pearson -----------------------------------------------------------------------


def test_pearson_duplicates_and_orthogonal():
    rng = np.random.default_rng(0)
    a = rng.normal(size=100)
    assert pearson_prune(np.column_stack([a, a, -a])).tolist() == [0]
    ortho = np.column_stack([np.sin(np.arange(64) * 2 * np.pi * k / 64) for k in (1, 2, 3)])
    assert pearson_prune(ortho, 0.1).tolist() == [0, 1, 2]


def test_pearson_four_columns_one_pair():
    rng = np.random.default_rng(5)
    base = rng.normal(size=(400, 3))
    b, c, d = base.T
    a_ = 0.95 * b + math.sqrt(1 - 0.95**2) * rng.normal(size=400)
    X = np.column_stack([a_, b, c, d])
    C = np.abs(np.corrcoef(X.T))
    assert C[0, 1] > 0.9 and np.all(C[np.triu_indices(4, 1)][1:] < 0.9)
    assert len(pearson_prune(X, 0.9)) == 3


# ---- chi-square -------------------------------------------------------------------


def test_chi2_column_equals_label():
    y = np.array([0, 1] * 10)
    assert chi_square_scores(y[:, None].astype(float), y, bins=2)[0] == pytest.approx(20.0, abs=1e-12)


def test_chi2_independent_column():
    y = np.array([0, 0, 1, 1] * 5)
    x = np.array([0.0, 1.0, 0.0, 1.0] * 5)
    assert chi_square_scores(x[:, None], y, bins=2)[0] == pytest.approx(0.0, abs=1e-12)


@given(st.integers(0, 10_000))
def test_chi2_permutation_invariant_and_matches_contingency(seed):
    rng = np.random.default_rng(seed)
    y = np.array([0, 1] * 25)
    X = rng.normal(size=(50, 2)) + y[:, None]
    p = rng.permutation(50)
    a, b = chi_square_scores(X, y, 5), chi_square_scores(X[p], y[p], 5)
    assert np.allclose(a, b, rtol=0, atol=1e-9) and np.all(a >= 0)
    edges = np.quantile(X[:, 0], [0.2, 0.4, 0.6, 0.8])
    codes = np.searchsorted(edges, X[:, 0], side="right")
    tab = np.array([[np.sum((codes == k) & (y == c)) for c in (0, 1)] for k in range(5)])
    tab = tab[tab.sum(axis=1) > 0]
    ref = stats.chi2_contingency(tab, correction=False).statistic
    assert a[0] == pytest.approx(ref, rel=1e-9)


# ---- VIF ---------------------------------------------------------------------------


def ols_vif(X):
    """Normal-equations oracle: regress each column on the rest plus an intercept."""
    out = []
    for j in range(X.shape[1]):
        A = np.column_stack([np.ones(len(X)), np.delete(X, j, axis=1)])
        t = X[:, j]
        beta = np.linalg.solve(A.T @ A, A.T @ t)
        r = t - A @ beta
        r2 = 1 - (r @ r) / ((t - t.mean()) @ (t - t.mean()))
        out.append(1 / (1 - r2))
    return np.array(out)


def test_vif_near_collinear_matches_oracle():
    rng = np.random.default_rng(11)
    x1, x2 = rng.normal(size=200), rng.normal(size=200)
    X = np.column_stack([x1, x2, x1 + x2 + 0.1 * rng.normal(size=200)])
    assert np.allclose(vif_scores(X), ols_vif(X), rtol=1e-6, atol=0)


def test_vif_orthogonal_and_duplicate():
    t = np.arange(64) * 2 * np.pi / 64
    ortho = np.column_stack([np.sin(t), np.cos(t), np.sin(2 * t)])
    assert np.allclose(vif_scores(ortho), 1.0, atol=1e-9)
    rng = np.random.default_rng(2)
    a, b = rng.normal(size=50), rng.normal(size=50)
    v = vif_scores(np.column_stack([a, b, a]))
    assert v[0] == np.inf and v[2] == np.inf


@given(st.integers(0, 10_000), st.floats(0.01, 100.0))
def test_vif_at_least_one_and_scale_invariant(seed, scale):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(40, 4))
    X[:, 3] += 0.5 * X[:, 0]
    v = vif_scores(X)
    Y = X.copy()
    Y[:, 1] *= scale
    assert np.all(v >= 1) and np.allclose(v, vif_scores(Y), rtol=1e-7)


def test_vif_prune_removes_dependency():
    rng = np.random.default_rng(3)
    a, b, c = rng.normal(size=(3, 120))
    X = np.column_stack([a, b, a + b, c])
    kept, scores = vif_prune(X, 5.0)
    assert len(kept) == 3 and np.all(vif_scores(X[:, kept]) < 5.0)


# ---- Boruta ------------------------------------------------------------------------


def test_boruta_label_column_confirmed():
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 200)
    X = np.column_stack([y + 0.0, rng.normal(size=(200, 3))])
    res = boruta(X, y, BorutaConfig(n_estimators=20, seed=1))
    assert res.decision[0] == "confirmed" and res.hits[0] == 20


def test_boruta_needs_20_iterations():
    from gasalpha.errors import ConfigurationError

    with pytest.raises(ConfigurationError):
        boruta(np.zeros((10, 2)), np.arange(10) % 2, BorutaConfig(max_iter=5))


# ---- Shapley ------------------------------------------------------------------------


def shapley_by_orderings(f, x, bg):
    """Average marginal contribution over all d! orderings."""
    d = len(x)
    phi = np.zeros(d)

    def v(S):
        A = bg.copy()
        A[:, list(S)] = x[list(S)]
        return f(A).mean()

    perms = list(itertools.permutations(range(d)))
    for order in perms:
        S = []
        for j in order:
            before = v(S)
            S.append(j)
            phi[j] += v(S) - before
    return phi / len(perms)


def toy_model(A):
    return np.tanh(A[:, 0] * A[:, 1]) + 0.5 * A[:, 2] ** 2 - A[:, 3]


def test_shapley_exact_matches_orderings():
    rng = np.random.default_rng(4)
    bg = rng.normal(size=(5, 4))
    X = rng.normal(size=(3, 4))
    got = shapley_values(toy_model, X, bg, method="exact")
    for i in range(3):
        assert np.allclose(got[i], shapley_by_orderings(toy_model, X[i], bg), atol=1e-12)


def test_shapley_null_player_and_efficiency():
    rng = np.random.default_rng(6)
    bg = rng.normal(size=(7, 5))
    X = rng.normal(size=(4, 5))
    phi = shapley_values(toy_model, X, bg, method="exact")
    assert np.all(phi[:, 4] == 0.0)
    assert np.allclose(phi.sum(axis=1), toy_model(X) - toy_model(bg).mean(), atol=1e-9)


def test_shapley_sampling_is_seeded():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(2, 4))
    a = shapley_values(toy_model, X, np.zeros(4), n_samples=30, seed=3, method="sample")
    b = shapley_values(toy_model, X, np.zeros(4), n_samples=30, seed=3, method="sample")
    assert np.array_equal(a, b)
    assert np.allclose(a.sum(axis=1), toy_model(X) - toy_model(np.zeros((1, 4))), atol=1e-12)


def test_shapley_importance_median_background():
    X = np.random.default_rng(9).normal(size=(20, 3))
    imp = shapley_importance(lambda A: 2 * A[:, 0], X)
    assert imp[1] == imp[2] == 0.0
    assert imp[0] == pytest.approx(np.mean(np.abs(2 * (X[:, 0] - np.median(X[:, 0])))))


# ---- pipeline ------------------------------------------------------------------------


def planted_table(n=300, seed=0):
    rng = np.random.default_rng(seed)
    cols = {f"x{j}": rng.normal(size=n) for j in range(6)}
    y = (cols["x0"] + cols["x1"] > 0).astype(int)
    return table_of(**cols), y


FAST = SelectionConfig(boruta=BorutaConfig(n_estimators=20), shapley_rows=40, shapley_samples=10, shapley_trees=20)


def test_pipeline_keeps_signal_and_drops_duplicates():
    t, y = planted_table()
    t.add("x0_copy", t["x0"] * 2.0 + 1.0)
    report, reduced = select_pipeline(t, y, slice(0, 240), FAST)
    assert "x0" in report.selected or "x0_copy" in report.selected
    assert not {"x0", "x0_copy"} <= set(report.selected)
    assert "x1" in report.selected and reduced.names == report.selected
    assert len(reduced) == len(t)


def test_pipeline_top_k_not_binding():
    t, y = planted_table()
    cfg = SelectionConfig(stages=("anova", "shapley"), anova_percentile=50, top_k=100, shapley_rows=30,
                          shapley_samples=5, shapley_trees=10)
    report, _ = select_pipeline(t, y, slice(0, 240), cfg)
    assert len(report.selected) == 3


def test_pipeline_ignores_rows_outside_training():
    t, y = planted_table(seed=4)
    a, _ = select_pipeline(t, y, slice(0, 200), FAST)
    t2 = t.rows(slice(None))
    for name in t2.names:
        t2.columns[name] = t2[name].copy()
        t2.columns[name][200:] = np.random.default_rng(1).normal(size=100) * 50
    y2 = y.copy()
    y2[200:] = 1 - y2[200:]
    b, _ = select_pipeline(t2, y2, slice(0, 200), FAST)
    assert a.to_dict() == b.to_dict()


def test_pipeline_failure_when_nothing_survives():
    rng = np.random.default_rng(0)
    t = table_of(a=rng.normal(size=200), b=rng.normal(size=200))
    y = rng.integers(0, 2, 200)
    with pytest.raises(SelectionFailure):
        select_pipeline(t, y, slice(None), SelectionConfig(stages=("boruta",), boruta=BorutaConfig(n_estimators=10)))
