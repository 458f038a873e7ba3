import math

import numpy as np
import pytest
from scipy import stats

from dspike.core import DimensionError, DoubleSpikePrior, EnsembleData, log_likelihood
from dspike.sampler import (
    STAY,
    BalanceMode,
    ChainState,
    FixedSigma,
    InitMode,
    MoveKind,
    MoveTag,
    SamplerConfig,
    Trace,
    UnknownSigma,
    acceptance_log_ratio,
    gibbs_update_sigma,
    init_chain,
    proposal_log_correction,
    propose_move,
    run_chain,
    run_symmetric_dirichlet_chain,
    sample_sigma_inv2,
)
from dspike.simulate import ScenarioSpec, generate_scenario, trace_l1_error
from dspike.summaries import inclusion_frequencies, posterior_mean
from dspike.utils import derive_seed

PRIOR = DoubleSpikePrior(rho1=3.0, rho2=1.0, theta=0.4)


def _state(gamma, beta, sigma_inv2=1.0):
    gamma = np.asarray(gamma, dtype=np.int8)
    beta = np.asarray(beta, dtype=float)
    return ChainState(gamma, np.log(beta), beta, sigma_inv2)


def test_config_validation_and_defaults():
    cfg = SamplerConfig(PRIOR, niter=10)
    assert cfg.sigma_mode == UnknownSigma(PRIOR.a1, PRIOR.a2)
    assert cfg.balance_mode is BalanceMode.PAPER_EXACT
    with pytest.raises(ValueError):
        SamplerConfig(PRIOR, niter=10, burn_in=10)
    with pytest.raises(ValueError):
        SamplerConfig(PRIOR, niter=0)
    with pytest.raises(ValueError):
        FixedSigma(0.0)
    snap = cfg.snapshot()
    assert snap["rho1"] == 3.0 and snap["balance_mode"] == "paper"
    assert cfg.init_mode is InitMode.PRIOR and snap["init_mode"] == "prior"


def test_init_chain(rng):
    state = init_chain(SamplerConfig(PRIOR, 10, sigma_mode=FixedSigma(1.0)), 5, rng)
    assert state.sigma_inv2 == 1.0
    assert np.allclose(state.A / state.A.sum(), state.beta, atol=1e-12)

    state = init_chain(SamplerConfig(PRIOR, 10), 5, rng)
    assert state.sigma_inv2 == pytest.approx(1.0)  # a1 / a2 with a1 = a2 = 0.01

    K = 40
    prior = DoubleSpikePrior.from_exponents(K, 1.5, 1.0)
    sizes = [init_chain(SamplerConfig(prior, 10), K, rng).size for _ in range(5000)]
    assert abs(np.mean(sizes) - 1.0) < 3 * np.std(sizes, ddof=1) / math.sqrt(len(sizes))

    full = init_chain(SamplerConfig(prior, 10, init_mode=InitMode.FULL), K, rng)
    assert full.size == K
    assert np.allclose(full.beta, 1 / K, atol=0.01)


def test_infeasible_moves_degrade_to_stay(rng):
    full = _state([1, 1, 1], [0.2, 0.3, 0.5])
    for _ in range(200):
        proposal = propose_move(full, PRIOR, rng)
        if proposal.drawn is MoveTag.ADD:
            assert proposal.move == STAY
            assert np.array_equal(proposal.gamma, full.gamma)

    empty = _state([0, 0, 0], [0.2, 0.3, 0.5])
    for _ in range(200):
        proposal = propose_move(empty, PRIOR, rng)
        if proposal.drawn in (MoveTag.DELETE, MoveTag.SWAP):
            assert proposal.move.tag is MoveTag.STAY


def test_swap_moves_both_endpoints(rng):
    state = _state([1, 0, 0, 0], [0.7, 0.1, 0.1, 0.1])
    seen = 0
    for _ in range(400):
        proposal = propose_move(state, PRIOR, rng)
        if proposal.move.tag is MoveTag.SWAP:
            seen += 1
            assert proposal.gamma[0] == 0
            assert proposal.gamma.sum() == 1
            j1, j2 = proposal.move.indices
            assert j2 == 0 and proposal.gamma[j1] == 1
        # every coordinate of A is redrawn, including on Stay
        assert not np.allclose(proposal.log_A, state.log_A)
        assert abs(proposal.beta.sum() - 1.0) < 1e-12
    assert seen > 0


def test_move_kinds_are_uniform(rng):
    state = _state([1, 0, 1, 0, 0], np.full(5, 0.2))
    n = 40_000
    counts = np.zeros(4)
    for _ in range(n):
        counts[propose_move(state, PRIOR, rng).move.tag] += 1
    se = math.sqrt(0.25 * 0.75 / n)
    assert np.all(np.abs(counts / n - 0.25) < 3 * se)


def test_acceptance_ratio_simple_cases():
    data = EnsembleData([[1.0, 2.0], [2.0, 1.0]], [1.5, 1.5])
    beta = np.array([0.5, 0.5])
    state = _state([1, 0], beta, sigma_inv2=2.0)

    value = acceptance_log_ratio(state, (np.array([1, 0]), beta), STAY, 0.3, data)
    assert value == 0.0

    # equal residuals for any beta: data y equals the row means
    add = MoveKind(MoveTag.ADD, (1,))
    value = acceptance_log_ratio(state, (np.array([1, 1]), beta), add, 0.3, data)
    assert value == pytest.approx(math.log(0.3 / 0.7))

    with pytest.raises(DimensionError):
        acceptance_log_ratio(state, (np.array([1, 1, 0]), np.full(3, 1 / 3)), add, 0.3, data)


def test_acceptance_ratio_matches_direct_evaluation():
    X = np.array([[1.0, -0.5, 2.0], [0.3, 1.2, -1.0]])
    data = EnsembleData(X, [0.8, 0.1])
    theta = 0.3
    sigma_inv2 = 1.7
    beta = np.array([0.2, 0.5, 0.3])
    beta_c = np.array([0.1, 0.3, 0.6])
    gamma = np.array([1, 1, 0])
    gamma_c = np.array([1, 1, 1])
    state = _state(gamma, beta, sigma_inv2)
    add = MoveKind(MoveTag.ADD, (2,))

    def log_prior_gamma(g):
        s = int(g.sum())
        return s * math.log(theta) + (3 - s) * math.log(1 - theta)

    direct = (log_prior_gamma(gamma_c) - log_prior_gamma(gamma)
              + log_likelihood(beta_c, sigma_inv2, data) - log_likelihood(beta, sigma_inv2, data))
    plain = acceptance_log_ratio(state, (gamma_c, beta_c), add, theta, data)
    assert plain == pytest.approx(direct, abs=1e-12)

    # forward Add picks the single inactive index (prob 1); reverse Delete picks 1 of 3
    forward = math.log(0.25 * 1.0)
    reverse = math.log(0.25 / 3)
    exact = acceptance_log_ratio(state, (gamma_c, beta_c), add, theta, data, BalanceMode.EXACT_BALANCE)
    assert exact == pytest.approx(direct + reverse - forward, abs=1e-12)


def test_proposal_correction_is_reversible():
    K = 7
    for s in range(K):
        add = proposal_log_correction(MoveKind(MoveTag.ADD, (0,)), s, K)
        delete = proposal_log_correction(MoveKind(MoveTag.DELETE, (0,)), s + 1, K)
        assert add + delete == pytest.approx(0.0, abs=1e-12)
    assert proposal_log_correction(MoveKind(MoveTag.SWAP, (0, 1)), 3, K) == 0.0
    assert proposal_log_correction(STAY, 3, K) == 0.0


def test_sigma_update_distribution(rng):
    a1 = a2 = 0.01
    draws = np.array([sample_sigma_inv2(2.0, 4, a1, a2, rng) for _ in range(20_000)])
    mean = (a1 + 2) / (a2 + 1)
    se = draws.std(ddof=1) / math.sqrt(draws.size)
    assert abs(draws.mean() - mean) < 3 * se

    X = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    data = EnsembleData(X, [0.2, 0.9, 1.4])
    state = _state([1, 0], [0.4, 0.6])
    rss = data.rss(state.beta)
    draws = [gibbs_update_sigma(state, data, a1, a2, rng) for _ in range(10_000)]
    law = stats.gamma(a=a1 + 1.5, scale=1 / (a2 + rss / 2))
    assert stats.kstest(draws, law.cdf).pvalue > 1e-3


def test_sigma_update_without_data_draws_from_prior(rng):
    draws = np.array([sample_sigma_inv2(0.0, 0, 2.0, 4.0, rng) for _ in range(20_000)])
    assert draws.mean() == pytest.approx(0.5, rel=0.03)


def test_run_chain_is_reproducible(tiny_data):
    cfg = SamplerConfig(PRIOR, niter=500, burn_in=100, seed=11)
    a = run_chain(cfg, tiny_data)
    b = run_chain(cfg, tiny_data)
    assert np.array_equal(a.beta_samples, b.beta_samples)
    assert np.array_equal(a.gamma_samples, b.gamma_samples)
    assert np.array_equal(a.sigma_inv2_samples, b.sigma_inv2_samples)
    assert len(a) == 500
    c = run_chain(SamplerConfig(PRIOR, niter=500, burn_in=100, seed=12), tiny_data)
    assert not np.array_equal(a.beta_samples, c.beta_samples)


def test_run_chain_trace_invariants(tiny_data):
    trace = run_chain(SamplerConfig(PRIOR, niter=800, burn_in=200, seed=1), tiny_data)
    assert np.allclose(trace.beta_samples.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(trace.beta_samples >= 0)
    assert np.all(trace.sigma_inv2_samples > 0)
    assert np.array_equal(trace.active_set_sizes(), trace.gamma_samples.sum(axis=1))
    assert 0 < trace.acceptance_rate(200) <= 1
    assert set(trace.acceptance_by_move()) <= {"add", "delete", "swap", "stay"}
    tags, accepted = zip(*trace.move_log)
    assert all(isinstance(t, MoveTag) for t in tags)
    assert trace.weight_vector(0).K == 3


def test_degenerate_data_runs_to_completion():
    data = EnsembleData(np.ones((10, 3)), np.ones(10))
    trace = run_chain(SamplerConfig(PRIOR, 300, sigma_mode=FixedSigma(1.0), seed=2), data)
    assert np.allclose(trace.beta_samples.sum(axis=1), 1.0)
    # residuals are zero for every beta, so only the prior odds on |gamma| matter
    assert trace.accepted[trace.move_tags == MoveTag.STAY].all()


def test_trace_frame_and_csv(tiny_data, tmp_path):
    trace = run_chain(SamplerConfig(PRIOR, niter=50, seed=3), tiny_data)
    frame = trace.to_frame()
    assert list(frame.columns) == ["iter", "accepted", "move_kind", "sigma_inv2",
                                   "beta_1", "beta_2", "beta_3"]
    assert frame["iter"].tolist() == list(range(1, 51))
    path = tmp_path / "out" / "trace.csv"
    trace.write_csv(path)
    first = path.read_bytes()
    run_chain(SamplerConfig(PRIOR, niter=50, seed=3), tiny_data).write_csv(path)
    assert path.read_bytes() == first


def test_trace_length_check():
    with pytest.raises(DimensionError):
        Trace(np.zeros((3, 2)), np.zeros((2, 2)), np.zeros(3), np.zeros(3), np.zeros(3), 0)


def test_symmetric_chain_flat_likelihood_accepts_everything(tiny_data):
    trace = run_symmetric_dirichlet_chain(1.0, 500, 0, FixedSigma(1e-300), 5, tiny_data)
    assert trace.acceptance_rate() == 1.0
    assert np.all(trace.gamma_samples == 1)
    assert np.all(trace.move_tags == MoveTag.STAY)
    assert trace.config["sampler"] == "symmetric_dirichlet"


def test_balance_modes_agree_roughly(tiny_data):
    kwargs = dict(niter=30_000, burn_in=3000, sigma_mode=FixedSigma(16.0))
    plain = run_chain(SamplerConfig(PRIOR, balance_mode=BalanceMode.PAPER_EXACT, seed=4, **kwargs), tiny_data)
    exact = run_chain(SamplerConfig(PRIOR, balance_mode=BalanceMode.EXACT_BALANCE, seed=5, **kwargs), tiny_data)
    gap = np.abs(posterior_mean(plain, 3000).values - posterior_mean(exact, 3000).values)
    assert np.all(gap < 0.05)


def _structured_replication(rep=0):
    return generate_scenario(ScenarioSpec(id=1), np.random.default_rng(derive_seed(2024, rep)))


def test_full_start_reaches_the_structured_support():
    data, truth = _structured_replication()
    prior = DoubleSpikePrior.from_exponents(data.K, 1.4, 2.0)
    config = SamplerConfig(prior, 20_000, 15_000, seed=derive_seed(2024, 0, 15), init_mode=InitMode.FULL)
    trace = run_chain(config, data)
    freq = inclusion_frequencies(trace, 15_000)
    assert np.all(freq[:3] > 0.95)
    assert np.all(freq[3:] < 0.05)
    assert trace_l1_error(trace, truth, 15_000) < 0.1


def test_symmetric_chain_moves_on_structured_data():
    data, _ = _structured_replication()
    trace = run_symmetric_dirichlet_chain(1 / 40, 2000, 1000, UnknownSigma(), 7, data)
    assert trace.acceptance_rate(1000) > 0.5
    # the mass settles on the three leading columns rather than a random vertex
    assert posterior_mean(trace, 1000).values[:3].sum() > 0.6
    assert len(np.unique(trace.beta_samples[1000:, 0])) > 10
