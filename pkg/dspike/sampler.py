"""Add/Delete/Swap/Stay Metropolis-Hastings sampler and the symmetric Dirichlet chain.

The ADSS chain walks over inclusion vectors with one of four moves drawn
uniformly, refreshes every latent Gamma variate from its conditional prior
given the candidate inclusion vector, and accepts with a ratio that only
involves the prior odds on |gamma| and the likelihood (the conditional
prior on beta cancels against the proposal).  The noise precision is
updated by its conjugate Gamma conditional.

Everything random flows through one ``numpy.random.Generator`` seeded from
``SamplerConfig.seed``, so a chain is reproducible bit for bit.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, NamedTuple, Optional, Union

import numpy as np
import pandas as pd

from . import helpers
from .core import (
    DimensionError,
    DoubleSpikePrior,
    EnsembleData,
    InclusionVector,
    NumericGuardError,
    WeightVector,
    log_gamma_variates,
    normalize_log_weights,
    sample_conditional_weights,
)

logger = logging.getLogger(__name__)


class MoveTag(enum.IntEnum):
    ADD = 0
    DELETE = 1
    SWAP = 2
    STAY = 3


class BalanceMode(enum.Enum):
    """``PAPER_EXACT`` uses the acceptance ratio without the proposal
    correction for Add/Delete; ``EXACT_BALANCE`` includes it."""

    PAPER_EXACT = "paper"
    EXACT_BALANCE = "exact"


class InitMode(enum.Enum):
    """Starting inclusion vector: ``PRIOR`` draws it from ``Bern(theta)``;
    ``FULL`` starts with every coordinate active."""

    PRIOR = "prior"
    FULL = "full"


@dataclass(frozen=True)
class UnknownSigma:
    """Noise precision with a ``Gamma(a1, a2)`` prior, updated every iteration."""

    a1: float = 0.01
    a2: float = 0.01

    def __post_init__(self) -> None:
        if self.a1 <= 0 or self.a2 <= 0:
            raise ValueError("a1 and a2 must be positive")


@dataclass(frozen=True)
class FixedSigma:
    """Noise precision held at ``value`` for the whole run."""

    value: float = 1.0

    def __post_init__(self) -> None:
        if self.value <= 0:
            raise ValueError("fixed sigma_inv2 must be positive")


SigmaMode = Union[UnknownSigma, FixedSigma]


@dataclass(frozen=True)
class MoveKind:
    tag: MoveTag
    indices: tuple[int, ...] = ()


STAY = MoveKind(MoveTag.STAY)


@dataclass(eq=False)
class ChainState:
    """Current ``(gamma, A, beta, sigma^-2)`` of one chain.

    The latent Gamma variates are held as logs because draws with a tiny
    shape underflow as floats.
    """

    gamma: np.ndarray
    log_A: np.ndarray
    beta: np.ndarray
    sigma_inv2: float

    @property
    def A(self) -> np.ndarray:
        return np.exp(self.log_A)

    @property
    def size(self) -> int:
        return int(self.gamma.sum())

    def weights(self) -> WeightVector:
        return WeightVector(self.beta)

    def inclusion(self) -> InclusionVector:
        return InclusionVector(self.gamma)


class Proposal(NamedTuple):
    move: MoveKind
    drawn: MoveTag
    gamma: np.ndarray
    log_A: np.ndarray
    beta: np.ndarray


@dataclass(frozen=True)
class SamplerConfig:
    prior: DoubleSpikePrior
    niter: int
    burn_in: int = 0
    balance_mode: BalanceMode = BalanceMode.PAPER_EXACT
    sigma_mode: Optional[SigmaMode] = None
    seed: int = 0
    init_mode: InitMode = InitMode.PRIOR

    def __post_init__(self) -> None:
        if self.niter < 1:
            raise ValueError("niter must be at least 1")
        if not (0 <= self.burn_in < self.niter):
            raise ValueError(f"need 0 <= burn_in < niter, got burn_in={self.burn_in}, niter={self.niter}")
        if self.sigma_mode is None:
            object.__setattr__(self, "sigma_mode", UnknownSigma(self.prior.a1, self.prior.a2))

    def snapshot(self) -> dict[str, Any]:
        """Flat description of the configuration, recorded in every trace."""
        sigma = self.sigma_mode
        return {
            "sampler": "adss",
            "rho1": self.prior.rho1,
            "rho2": self.prior.rho2,
            "theta": self.prior.theta,
            "niter": self.niter,
            "burn_in": self.burn_in,
            "balance_mode": self.balance_mode.value,
            "init_mode": self.init_mode.value,
            "sigma_mode": type(sigma).__name__,
            **{f"sigma_{k}": v for k, v in asdict(sigma).items()},
            "seed": self.seed,
        }


@dataclass(eq=False)
class Trace:
    """Samples of one chain, one row per iteration after initialisation."""

    beta_samples: np.ndarray
    gamma_samples: np.ndarray
    sigma_inv2_samples: np.ndarray
    move_tags: np.ndarray
    accepted: np.ndarray
    seed: int
    config: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        lengths = {len(self.beta_samples), len(self.gamma_samples), len(self.sigma_inv2_samples),
                   len(self.move_tags), len(self.accepted)}
        if len(lengths) != 1:
            raise DimensionError(f"trace arrays disagree in length: {sorted(lengths)}")

    def __len__(self) -> int:
        return int(len(self.beta_samples))

    @property
    def K(self) -> int:
        return int(self.beta_samples.shape[1])

    def weight_vector(self, t: int) -> WeightVector:
        return WeightVector(self.beta_samples[t])

    @property
    def move_log(self) -> list[tuple[MoveTag, bool]]:
        return [(MoveTag(int(m)), bool(a)) for m, a in zip(self.move_tags, self.accepted)]

    def active_set_sizes(self, burn_in: int = 0) -> np.ndarray:
        return self.gamma_samples[burn_in:].sum(axis=1)

    def acceptance_rate(self, burn_in: int = 0) -> float:
        window = self.accepted[burn_in:]
        return float(window.mean()) if window.size else float("nan")

    def acceptance_by_move(self, burn_in: int = 0) -> dict[str, float]:
        out = {}
        tags = self.move_tags[burn_in:]
        acc = self.accepted[burn_in:]
        for tag in MoveTag:
            mask = tags == tag
            if mask.any():
                out[tag.name.lower()] = float(acc[mask].mean())
        return out

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({
            "iter": np.arange(1, len(self) + 1),
            "accepted": self.accepted.astype(int),
            "move_kind": [MoveTag(int(m)).name.lower() for m in self.move_tags],
            "sigma_inv2": self.sigma_inv2_samples,
        })
        betas = pd.DataFrame(self.beta_samples,
                             columns=[f"beta_{j + 1}" for j in range(self.K)])
        return pd.concat([frame, betas], axis=1)

    def write_csv(self, path: Path | str) -> None:
        helpers.write_frame(self.to_frame(), path)


# ---------------------------------------------------------------------------
# chain steps
# ---------------------------------------------------------------------------


def init_chain(config: SamplerConfig, K: int, rng: np.random.Generator) -> ChainState:
    """Draw the starting state: gamma per ``config.init_mode``, then A given gamma.

    A start with few active coordinates can leave a chain parked on a
    near-vertex beta that no single Add improves; ``InitMode.FULL`` walks
    down from the equal split instead.
    """
    if K < 2:
        raise ValueError(f"K must be at least 2, got {K}")
    prior = config.prior
    if config.init_mode is InitMode.FULL:
        gamma = np.ones(K, dtype=np.int8)
    else:
        gamma = (rng.random(K) < prior.theta).astype(np.int8)
    log_a, beta = sample_conditional_weights(gamma, prior, rng)
    sigma = config.sigma_mode
    if isinstance(sigma, FixedSigma):
        sigma_inv2 = sigma.value
    else:
        sigma_inv2 = sigma.a1 / sigma.a2
    return ChainState(gamma, log_a, beta, float(sigma_inv2))


def propose_move(state: ChainState, prior: DoubleSpikePrior, rng: np.random.Generator) -> Proposal:
    """Draw a move kind uniformly, build the candidate gamma and refresh all of A.

    Infeasible kinds (Add with every coordinate active, Delete or Swap with
    none active) become Stay.
    """
    drawn = MoveTag(int(rng.integers(4)))
    inactive = np.flatnonzero(state.gamma == 0)
    active = np.flatnonzero(state.gamma == 1)
    gamma = state.gamma.copy()
    move = STAY
    if drawn is MoveTag.ADD and inactive.size:
        j = int(inactive[rng.integers(inactive.size)])
        gamma[j] = 1
        move = MoveKind(MoveTag.ADD, (j,))
    elif drawn is MoveTag.DELETE and active.size:
        j = int(active[rng.integers(active.size)])
        gamma[j] = 0
        move = MoveKind(MoveTag.DELETE, (j,))
    elif drawn is MoveTag.SWAP and active.size and inactive.size:
        j1 = int(inactive[rng.integers(inactive.size)])
        j2 = int(active[rng.integers(active.size)])
        gamma[j1] = 1
        gamma[j2] = 0
        move = MoveKind(MoveTag.SWAP, (j1, j2))
    log_a, beta = sample_conditional_weights(gamma, prior, rng)
    return Proposal(move, drawn, gamma, log_a, beta)


def proposal_log_correction(move: MoveKind, size: int, K: int) -> float:
    """``log q(gamma | gamma~) - log q(gamma~ | gamma)`` for a move from ``|gamma| = size``.

    The 1/4 for the move kind cancels between directions; Swap and Stay are
    symmetric.
    """
    if move.tag is MoveTag.ADD:
        # forward: 1/(K - size) inactive picks; reverse Delete: 1/(size + 1)
        return math.log(K - size) - math.log(size + 1)
    if move.tag is MoveTag.DELETE:
        # forward: 1/size active picks; reverse Add: 1/(K - size + 1)
        return math.log(size) - math.log(K - size + 1)
    return 0.0


def _log_ratio(size_change: int, rss_current: float, rss_candidate: float,
               sigma_inv2: float, theta: float) -> float:
    log_odds = math.log(theta) - math.log1p(-theta)
    return size_change * log_odds + 0.5 * sigma_inv2 * (rss_current - rss_candidate)


def acceptance_log_ratio(state: ChainState, candidate: tuple[np.ndarray, np.ndarray],
                         move: MoveKind, theta: float, data: EnsembleData,
                         balance_mode: BalanceMode = BalanceMode.PAPER_EXACT) -> float:
    """Log Metropolis-Hastings ratio for moving to ``candidate = (gamma~, beta~)``."""
    gamma_c, beta_c = candidate
    if len(gamma_c) != data.K or len(beta_c) != data.K or len(state.beta) != data.K:
        raise DimensionError("state, candidate and data disagree on K")
    size = state.size
    value = _log_ratio(int(np.sum(gamma_c)) - size, data.rss(state.beta), data.rss(beta_c),
                       state.sigma_inv2, theta)
    if balance_mode is BalanceMode.EXACT_BALANCE:
        value += proposal_log_correction(move, size, data.K)
    return value


def sample_sigma_inv2(rss: float, n: int, a1: float, a2: float, rng: np.random.Generator) -> float:
    """Draw from ``Gamma(a1 + n/2, rate = a2 + rss/2)``."""
    return float(rng.gamma(a1 + 0.5 * n, 1.0 / (a2 + 0.5 * rss)))


def gibbs_update_sigma(state: ChainState, data: EnsembleData, a1: float, a2: float,
                       rng: np.random.Generator) -> float:
    """Conjugate update of the noise precision given the current weights."""
    return sample_sigma_inv2(data.rss(state.beta), data.n, a1, a2, rng)


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


class _TraceBuffer:
    def __init__(self, niter: int, K: int):
        self.beta = np.empty((niter, K))
        self.gamma = np.empty((niter, K), dtype=np.int8)
        self.sigma = np.empty(niter)
        self.moves = np.empty(niter, dtype=np.int8)
        self.accepted = np.empty(niter, dtype=bool)

    def record(self, t: int, state: ChainState, move: MoveTag, accepted: bool) -> None:
        self.beta[t] = state.beta
        self.gamma[t] = state.gamma
        self.sigma[t] = state.sigma_inv2
        self.moves[t] = move
        self.accepted[t] = accepted

    def finish(self, seed: int, config: dict[str, Any]) -> Trace:
        return Trace(self.beta, self.gamma, self.sigma, self.moves, self.accepted, seed, config)


def _accept(log_ratio: float, rng: np.random.Generator) -> bool:
    return rng.random() < math.exp(min(0.0, log_ratio))


def run_chain(config: SamplerConfig, data: EnsembleData) -> Trace:
    """Run the ADSS sampler for ``config.niter`` iterations."""
    rng = np.random.default_rng(config.seed)
    K = data.K
    prior = config.prior
    sigma_mode = config.sigma_mode
    exact = config.balance_mode is BalanceMode.EXACT_BALANCE
    state = init_chain(config, K, rng)
    rss = data.rss(state.beta)
    buf = _TraceBuffer(config.niter, K)

    for t in range(config.niter):
        proposal = propose_move(state, prior, rng)
        rss_c = data.rss(proposal.beta)
        size = state.size
        log_ratio = _log_ratio(int(proposal.gamma.sum()) - size, rss, rss_c,
                               state.sigma_inv2, prior.theta)
        if exact:
            log_ratio += proposal_log_correction(proposal.move, size, K)
        accepted = _accept(log_ratio, rng)
        if accepted:
            state.gamma, state.log_A, state.beta = proposal.gamma, proposal.log_A, proposal.beta
            rss = rss_c
        if isinstance(sigma_mode, UnknownSigma):
            state.sigma_inv2 = sample_sigma_inv2(rss, data.n, sigma_mode.a1, sigma_mode.a2, rng)
        if not math.isfinite(state.sigma_inv2) or state.sigma_inv2 <= 0:
            raise NumericGuardError(f"sigma_inv2 became {state.sigma_inv2!r} at iteration {t + 1}")
        buf.record(t, state, proposal.move.tag, accepted)

    trace = buf.finish(config.seed, config.snapshot())
    logger.info("adss chain: K=%d niter=%d acceptance=%.3f (post burn-in %.3f)",
                K, config.niter, trace.acceptance_rate(), trace.acceptance_rate(config.burn_in))
    return trace


def run_symmetric_dirichlet_chain(rho: float, niter: int, burn_in: int,
                                  sigma_mode: SigmaMode, seed: int,
                                  data: EnsembleData) -> Trace:
    """Metropolis-within-Gibbs under a symmetric ``Dir(rho)`` prior.

    Each iteration sweeps the latent Gamma variates in index order.  The
    candidate for ``A_j`` is a fresh ``Gamma(rho, 1)`` draw with the other
    coordinates held, so the acceptance ratio is the likelihood ratio alone.
    An iteration counts as accepted when any coordinate moved.  Every
    coordinate is recorded as active and every move as Stay.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    if not (0 <= burn_in < niter):
        raise ValueError(f"need 0 <= burn_in < niter, got burn_in={burn_in}, niter={niter}")
    rng = np.random.default_rng(seed)
    K = data.K
    shapes = np.full(K, float(rho))
    ones = np.ones(K, dtype=np.int8)

    log_a = log_gamma_variates(shapes, rng)
    state = ChainState(ones, log_a, normalize_log_weights(log_a),
                       sigma_mode.value if isinstance(sigma_mode, FixedSigma)
                       else sigma_mode.a1 / sigma_mode.a2)
    rss = data.rss(state.beta)
    buf = _TraceBuffer(niter, K)

    for t in range(niter):
        candidates = log_gamma_variates(shapes, rng)
        uniforms = rng.random(K)
        moved = False
        for j in range(K):
            held = log_a[j]
            log_a[j] = candidates[j]
            beta_c = normalize_log_weights(log_a)
            rss_c = data.rss(beta_c)
            if uniforms[j] < math.exp(min(0.0, 0.5 * state.sigma_inv2 * (rss - rss_c))):
                state.beta, rss = beta_c, rss_c
                moved = True
            else:
                log_a[j] = held
        state.log_A = log_a
        if isinstance(sigma_mode, UnknownSigma):
            state.sigma_inv2 = sample_sigma_inv2(rss, data.n, sigma_mode.a1, sigma_mode.a2, rng)
        buf.record(t, state, MoveTag.STAY, moved)

    config = {
        "sampler": "symmetric_dirichlet",
        "rho": float(rho),
        "niter": niter,
        "burn_in": burn_in,
        "sigma_mode": type(sigma_mode).__name__,
        **{f"sigma_{k}": v for k, v in asdict(sigma_mode).items()},
        "seed": seed,
    }
    trace = buf.finish(seed, config)
    logger.info("symmetric dirichlet chain: K=%d niter=%d acceptance=%.3f",
                K, niter, trace.acceptance_rate())
    return trace
