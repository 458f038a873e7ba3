import math

import numpy as np
import pandas as pd
import pytest

from dspike.core import EnsembleData, UndefinedStatisticError
from dspike.sampler import Trace
from dspike.summaries import (
    best_individual_group,
    credible_ball,
    diagnostics_frame,
    group_diagnostics,
    inclusion_frequencies,
    mean_pairwise_bias_correlation,
    posterior_mean,
    selected_group,
    selection_counts,
    summarize_posterior,
    write_summary_csv,
)


def _trace(beta, gamma=None):
    beta = np.asarray(beta, dtype=float)
    T = beta.shape[0]
    if gamma is None:
        gamma = np.ones_like(beta, dtype=np.int8)
    return Trace(beta, np.asarray(gamma, dtype=np.int8), np.ones(T),
                 np.zeros(T, dtype=np.int8), np.ones(T, dtype=bool), seed=0)


def test_posterior_mean_simple():
    constant = _trace(np.tile([0.2, 0.3, 0.5], (10, 1)))
    assert np.allclose(posterior_mean(constant, 0).values, [0.2, 0.3, 0.5])

    two = _trace([[1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(posterior_mean(two, 0).values, [0.5, 0.5])

    # burn-in drops the leading draws
    skewed = _trace([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert np.allclose(posterior_mean(skewed, 2).values, [0.0, 1.0])


def test_empty_window_is_signalled():
    trace = _trace([[0.5, 0.5]] * 3)
    with pytest.raises(UndefinedStatisticError):
        posterior_mean(trace, 3)
    with pytest.raises(UndefinedStatisticError):
        inclusion_frequencies(trace, 5)


def test_credible_ball_radius():
    constant = _trace(np.tile([0.25, 0.75], (5, 1)))
    _, radius = credible_ball(constant, 0, 0.9)
    assert radius == 0.0

    rng = np.random.default_rng(4)
    trace = _trace(rng.dirichlet([1.0, 2.0, 3.0], size=500))
    center, top = credible_ball(trace, 0, 1.0)
    dist = np.abs(trace.beta_samples - center.values).sum(axis=1)
    assert top == pytest.approx(dist.max())

    radii = [credible_ball(trace, 0, level)[1] for level in (0.5, 0.8, 0.9, 0.95, 1.0)]
    assert radii == sorted(radii)

    with pytest.raises(ValueError):
        credible_ball(trace, 0, 0.0)


def test_inclusion_frequencies_match_recount():
    rng = np.random.default_rng(9)
    gamma = rng.integers(0, 2, size=(200, 6))
    trace = _trace(np.full((200, 6), 1 / 6), gamma)
    freq = inclusion_frequencies(trace, 50)
    assert np.array_equal(freq, gamma[50:].sum(axis=0) / 150)

    assert np.all(inclusion_frequencies(_trace(np.full((4, 3), 1 / 3)), 0) == 1)
    zeros = _trace(np.full((4, 3), 1 / 3), np.zeros((4, 3)))
    assert np.all(inclusion_frequencies(zeros, 0) == 0)


def test_selected_group_is_strict():
    freq = [1.0, 0.2, 0.21, 0.0]
    assert selected_group(freq, 1.0) == ()
    assert selected_group(freq, 0.2) == (0, 2)
    assert selected_group(freq, 0.0) == (0, 1, 2)
    with pytest.raises(ValueError):
        selected_group(freq, 1.5)

    counts = selection_counts(freq)
    assert counts == {"above_0.2": 2, "above_0.05": 3, "never": 1}


def test_summarize_and_write(tmp_path):
    trace = _trace(np.tile([0.1, 0.9], (20, 1)))
    summary = summarize_posterior(trace, 5, level=0.9)
    assert summary.credible_radius_l1 == 0.0
    assert summary.sigma_inv2_mean == 1.0
    path = write_summary_csv(summary, tmp_path / "summary.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["index", "mean", "incl_freq", "radius", "level"]
    assert frame["index"].tolist() == [1, 2]
    assert frame["level"].iloc[0] == 0.9


def test_identical_columns_correlate_perfectly(rng):
    y = rng.normal(size=50)
    col = y + rng.normal(size=50)
    data = EnsembleData(np.column_stack([col, col, rng.normal(size=50)]), y)
    assert mean_pairwise_bias_correlation(data, [0, 1]) == pytest.approx(1.0)


def test_independent_biases_have_near_zero_correlation(rng):
    n = 10_000
    y = rng.normal(size=n)
    X = y[:, None] + rng.normal(size=(n, 4))
    data = EnsembleData(X, y)
    corr = mean_pairwise_bias_correlation(data, range(4))
    # each pairwise estimate has sd about 1/sqrt(n); six pairs are averaged
    assert abs(corr) < 3 / math.sqrt(n)


def test_group_diagnostics_values_and_errors(rng):
    y = np.array([1.0, 2.0, 3.0, 4.0])
    X = np.column_stack([y + 1.0, y + np.array([0.5, -0.5, 0.5, -0.5]), 2 * y])
    data = EnsembleData(X, y)

    diag = group_diagnostics(data, [0, 1], require_correlation=False)
    assert np.allclose(diag.per_column_bias, [1.0, 0.0])
    assert diag.per_column_variance[0] == pytest.approx(0.0)
    assert diag.mean_pairwise_bias_correlation is None

    pred = group_diagnostics(data, [2, 1], variance_of="prediction")
    assert pred.per_column_variance[0] == pytest.approx(np.var(2 * y, ddof=1))

    with pytest.raises(UndefinedStatisticError):
        group_diagnostics(data, [1])
    with pytest.raises(UndefinedStatisticError):
        group_diagnostics(data, [])
    with pytest.raises(ValueError):
        group_diagnostics(data, [1, 2], variance_of="spread")

    single = group_diagnostics(data, [2], require_correlation=False)
    assert single.mean_pairwise_bias_correlation is None


def test_group_diagnostics_permutation(rng):
    y = rng.normal(size=40)
    X = y[:, None] + rng.normal(size=(40, 5)) * np.array([0.5, 1.0, 1.5, 2.0, 2.5])
    data = EnsembleData(X, y)
    a = group_diagnostics(data, [0, 2, 4])
    b = group_diagnostics(data, [4, 0, 2])
    assert np.allclose(b.per_column_bias, a.per_column_bias[[2, 0, 1]])
    assert np.allclose(b.per_column_variance, a.per_column_variance[[2, 0, 1]])
    assert b.mean_pairwise_bias_correlation == pytest.approx(a.mean_pairwise_bias_correlation)


def test_best_individual_group_and_frame(perfect_panel):
    assert best_individual_group(perfect_panel, 1) == (0,)
    with pytest.raises(ValueError):
        best_individual_group(perfect_panel, 0)

    diag = group_diagnostics(perfect_panel, [1, 2])
    frame = diagnostics_frame({"selected": diag})
    assert frame["column"].tolist() == [2, 3]
    assert set(frame["group"]) == {"selected"}
