"""Self-checks behind the ``verify`` subcommand.

Each ``check_*`` function runs one family of Monte Carlo or oracle
comparisons and returns a list of failure descriptions (empty when all
pass).  :func:`validate_all` runs them in turn, prints a short report and
returns whether everything passed.
"""

from __future__ import annotations

import itertools
import logging
from typing import Callable, List

import numpy as np
from scipy import stats

from .core import DoubleSpikePrior, EnsembleData, sample_double_spike_prior
from .oracle import (
    QuadratureSpec,
    dirichlet_moment_oracle,
    double_spike_moment_oracle,
    exact_posterior_tiny,
    proposition1_check,
    second_largest_check,
    two_component_event_probability,
)
from .sampler import (
    BalanceMode,
    FixedSigma,
    SamplerConfig,
    run_chain,
    run_symmetric_dirichlet_chain,
    sample_sigma_inv2,
)
from .summaries import posterior_mean

logger = logging.getLogger(__name__)

PROPOSITION_ALPHAS = (0.05, 0.1, 0.5, 1.0)
PROPOSITION_KS = (3, 5, 10, 40)
PROPOSITION_TS = (0.3, 0.5, 0.7)

TINY_TRUTH = (0.5, 0.3, 0.2)
TINY_SIGMA_INV2 = 16.0
TINY_PRIOR = DoubleSpikePrior(rho1=3.0, rho2=1.0, theta=0.4)
TINY_SYMMETRIC_RHO = 1.5
KS_SIGNIFICANCE = 1e-3


def tiny_posterior_fixture(seed: int = 0, n: int = 20) -> EnsembleData:
    """K = 3 panel with standard normal design and noise precision 16."""
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, len(TINY_TRUTH)))
    y = X @ np.asarray(TINY_TRUTH) + rng.normal(0.0, TINY_SIGMA_INV2 ** -0.5, size=n)
    return EnsembleData(X, y)


def check_proposition1(n_samples: int, rng: np.random.Generator) -> List[str]:
    """The order-statistic bound over the full (alpha, K, t) grid, plus exact K = 2 values."""
    failures = []
    for alpha, K, t in itertools.product(PROPOSITION_ALPHAS, PROPOSITION_KS, PROPOSITION_TS):
        res = proposition1_check(alpha, K, t, n_samples, rng)
        if not res.passed:
            failures.append(f"alpha={alpha} K={K} t={t}: estimate {res.estimate:.4f} "
                            f"< bound {res.bound:.4f} (se {res.mc_se:.4f})")
    for alpha, t in itertools.product((0.1, 1.0), PROPOSITION_TS):
        res = proposition1_check(alpha, 2, t, n_samples, rng)
        exact = two_component_event_probability(alpha, t)
        if abs(res.estimate - exact) > 4 * res.mc_se + 1e-12:
            failures.append(f"K=2 alpha={alpha} t={t}: estimate {res.estimate:.4f} "
                            f"vs exact {exact:.4f}")
    return failures


def check_second_largest(n_samples: int, rng: np.random.Generator) -> List[str]:
    failures = []
    for alpha, K in itertools.product((0.01, 0.05), (5, 10, 40)):
        res = second_largest_check(alpha, K, n_samples, rng)
        if not res.passed:
            failures.append(f"alpha={alpha} K={K}: estimate {res.estimate:.4f} "
                            f"< bound {res.bound:.4f}")
    return failures


def _moment_failures(label: str, draws: np.ndarray, mean: np.ndarray, z: float) -> List[str]:
    se = draws.std(axis=0, ddof=1) / np.sqrt(draws.shape[0])
    gap = np.abs(draws.mean(axis=0) - mean)
    bad = np.flatnonzero(gap > z * se)
    return [f"{label}: coordinate {i} mean {draws[:, i].mean():.5f} vs {mean[i]:.5f} "
            f"(se {se[i]:.5f})" for i in bad]


def check_prior_moments(n_samples: int, rng: np.random.Generator, z: float = 3.0) -> List[str]:
    """Sample means of prior draws against the enumerated mixture of Dirichlet means."""
    failures = []
    cases = [
        (DoubleSpikePrior(rho1=5.0, rho2=0.5, theta=0.3), 4),
        (DoubleSpikePrior(rho1=20.0, rho2=0.05, theta=0.5), 6),
        (DoubleSpikePrior(rho1=2.0, rho2=2.0, theta=0.5, validate=False), 3),
    ]
    for prior, K in cases:
        draws = np.array([sample_double_spike_prior(prior, K, rng).beta.values
                          for _ in range(n_samples)])
        mean, _ = double_spike_moment_oracle(prior, K)
        failures += _moment_failures(f"double spike rho1={prior.rho1} rho2={prior.rho2} K={K}",
                                     draws, mean, z)
    # equal concentrations reduce to a single Dirichlet
    flat = DoubleSpikePrior(rho1=2.0, rho2=2.0, theta=0.5, validate=False)
    mix_mean, mix_var = double_spike_moment_oracle(flat, 3)
    dir_mean, dir_var = dirichlet_moment_oracle([2.0, 2.0, 2.0])
    if not (np.allclose(mix_mean, dir_mean, atol=1e-12) and np.allclose(mix_var, dir_var, atol=1e-12)):
        failures.append("mixture moments with rho1 == rho2 differ from the Dirichlet moments")
    return failures


def check_sigma_update(n_draws: int, rng: np.random.Generator) -> List[str]:
    """Conjugate precision draws against their Gamma law with a KS test."""
    data = tiny_posterior_fixture(seed=int(rng.integers(2 ** 31)))
    rss = data.rss(np.asarray(TINY_TRUTH))
    a1 = a2 = 0.01
    draws = np.array([sample_sigma_inv2(rss, data.n, a1, a2, rng) for _ in range(n_draws)])
    law = stats.gamma(a=a1 + data.n / 2, scale=1.0 / (a2 + rss / 2))
    result = stats.kstest(draws, law.cdf)
    if result.pvalue < KS_SIGNIFICANCE:
        return [f"sigma_inv2 draws rejected by KS test (p={result.pvalue:.2e})"]
    return []


def check_tiny_posterior(niter: int, seed: int, tolerance: float = 0.02,
                         grid_points: int = 400) -> List[str]:
    """ADSS and symmetric Dirichlet posterior means against quadrature on K = 3."""
    data = tiny_posterior_fixture(seed)
    burn_in = niter // 10
    failures = []

    config = SamplerConfig(TINY_PRIOR, niter, burn_in, BalanceMode.EXACT_BALANCE,
                           FixedSigma(TINY_SIGMA_INV2), seed)
    got = posterior_mean(run_chain(config, data), burn_in).values
    want = exact_posterior_tiny(data, QuadratureSpec(3, grid_points, TINY_PRIOR), TINY_SIGMA_INV2).values
    if np.max(np.abs(got - want)) > tolerance:
        failures.append(f"ADSS mean {np.round(got, 4)} vs quadrature {np.round(want, 4)}")

    trace = run_symmetric_dirichlet_chain(TINY_SYMMETRIC_RHO, niter, burn_in,
                                          FixedSigma(TINY_SIGMA_INV2), seed + 1, data)
    got = posterior_mean(trace, burn_in).values
    want = exact_posterior_tiny(data, QuadratureSpec(3, grid_points, TINY_SYMMETRIC_RHO),
                                TINY_SIGMA_INV2).values
    if np.max(np.abs(got - want)) > tolerance:
        failures.append(f"symmetric Dirichlet mean {np.round(got, 4)} vs quadrature {np.round(want, 4)}")
    return failures


def validate_all(quick: bool = False, seed: int = 0) -> bool:
    """Run every check, print a report and return whether all of them passed."""
    rng = np.random.default_rng(seed)
    mc = 10_000 if quick else 100_000
    checks: list[tuple[str, Callable[[], List[str]]]] = [
        ("Order-statistic bound", lambda: check_proposition1(mc, rng)),
        ("Second-largest weight bound", lambda: check_second_largest(mc, rng)),
        ("Prior sampling moments", lambda: check_prior_moments(mc // 5 if quick else mc, rng)),
        ("Noise precision update", lambda: check_sigma_update(10_000, rng)),
        ("Tiny-K posterior agreement",
         lambda: check_tiny_posterior(40_000 if quick else 200_000, seed,
                                      tolerance=0.04 if quick else 0.02)),
    ]
    failed = 0
    for name, check in checks:
        print(f"\n{name}:")
        failures = check()
        if failures:
            failed += 1
            for line in failures:
                print(f"  FAIL {line}")
        else:
            print("  OK")
        logger.debug("%s: %d failures", name, len(failures))

    print("\nVERIFY SUMMARY")
    print(f"Checks run: {len(checks)}; failed: {failed}")
    return failed == 0
