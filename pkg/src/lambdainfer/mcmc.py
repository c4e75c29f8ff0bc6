"""Pseudo-marginal Metropolis-Hastings over mixture parameters.

The chain walks the stick-breaking mixture's coordinate box with a
truncated Gaussian random walk; the likelihood enters through an unbiased
estimator, so the invariant law is the exact posterior (the "exact"
variant). The "noisy" variant re-estimates the current state's likelihood
every iteration, trading exactness for fewer sticking spells. Delayed
acceptance ("da-*") screens proposals with a cheap deterministic surrogate
first and cancels the surrogate again in the second stage, leaving the
invariant law untouched.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri

from .exceptions import DomainError
from .genealogy import TimeSeriesData
from .likelihood import estimate_likelihood, exact_likelihood, surrogate_estimate
from .moments import MomentSequence
from .mutation import MutationModel
from .prior import (
    PriorParams,
    PriorSpec,
    from_chain_vector,
    log_prior_density_chain,
    params_to_moments,
    sample_prior,
    to_chain_vector,
)
from .util import as_seed_sequence

VARIANTS = ("exact", "noisy", "da-exact", "da-noisy")


@dataclass
class ChainConfig:
    data: TimeSeriesData
    model: MutationModel
    prior: PriorSpec = field(default_factory=PriorSpec)
    variant: str = "exact"
    steps: int = 1000
    scale: float = 0.0025  # proposal variance per coordinate
    particles: int = 100
    surrogate_particles: int = 5
    seed: int = 0
    thin: int = 1
    n_moments: int | None = None  # moment read-out order; default: data size
    exact_likelihood: bool = False  # plain MH with the exact single-time likelihood
    threads: int = 1
    max_init_tries: int = 200

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise DomainError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.steps < 1:
            raise DomainError("need at least one step")
        if self.scale <= 0:
            raise DomainError("proposal scale must be positive")
        if self.exact_likelihood and self.variant != "exact":
            raise DomainError("the exact-likelihood harness only supports variant='exact'")

    @property
    def moment_order(self) -> int:
        return self.n_moments if self.n_moments is not None else max(self.data.total_size, 3)


def propose_position(position: np.ndarray, scale: float, prior: PriorSpec, rng):
    """Truncated Gaussian random walk on the chain's coordinate box.

    Returns the new position and log K(y -> x) - log K(x -> y), which
    reduces to the log-ratio of the one-dimensional truncation normalizers
    (the Gaussian factors cancel by symmetry). Stick coordinates move in
    their uniform CDF chart; see the prior module.
    """
    lo, hi = prior.box()
    x = position
    std = math.sqrt(scale)
    a = ndtr((lo - x) / std)
    b = ndtr((hi - x) / std)
    u = a + (b - a) * rng.random(len(x))
    y = x + std * ndtri(u)
    np.clip(y, lo, hi, out=y)
    za = ndtr((lo - y) / std)
    zb = ndtr((hi - y) / std)
    log_ratio = float(np.sum(np.log(b - a)) - np.sum(np.log(zb - za)))
    return y, log_ratio


def propose(params: PriorParams, scale: float, prior: PriorSpec, rng) -> tuple[PriorParams, float]:
    """Random-walk proposal expressed on mixture parameters."""
    y, log_ratio = propose_position(to_chain_vector(prior, params), scale, prior, rng)
    return from_chain_vector(prior, y), log_ratio


@dataclass
class ChainState:
    position: np.ndarray  # chain coordinates (sticks in their CDF chart)
    params: PriorParams
    moments: MomentSequence
    log_prior: float  # density w.r.t. the chain coordinates
    log_like: float
    log_surrogate: float | None = None


@dataclass
class StepRecord:
    accepted: bool
    stage1_accepted: bool
    full_evaluations: int
    wall_ms: float


@dataclass
class ChainResult:
    config: ChainConfig
    params: np.ndarray  # (steps + 1, dim)
    moments: np.ndarray  # (steps + 1, order - 2)
    log_estimate: np.ndarray
    accepted: np.ndarray
    stage1_accepted: np.ndarray
    wall_ms: np.ndarray
    full_evaluations: int

    @property
    def steps(self) -> int:
        return len(self.accepted) - 1

    @property
    def acceptance_rate(self) -> float:
        return float(self.accepted[1:].mean())

    @property
    def stage1_rate(self) -> float:
        return float(self.stage1_accepted[1:].mean())

    @property
    def stage2_rate(self) -> float:
        s1 = int(self.stage1_accepted[1:].sum())
        return float(self.accepted[1:].sum() / s1) if s1 else 0.0

    def trace(self, k: int = 3, burn: int = 0, thin: int = 1) -> np.ndarray:
        """Moment trace lambda_k, optionally burned and thinned."""
        col = k - 3
        if not 0 <= col < self.moments.shape[1]:
            raise DomainError(f"lambda_{k} was not recorded")
        return self.moments[burn::thin, col]

    def parameter_names(self) -> list[str]:
        t = self.config.prior.truncation
        return (
            [f"r{i+1}" for i in range(t)]
            + [f"sigma{i+1}" for i in range(t)]
            + [f"v{i+1}" for i in range(t - 1)]
        )


class _Driver:
    """Owns the RNG streams and likelihood plumbing of one chain."""

    def __init__(self, config: ChainConfig):
        self.cfg = config
        root = as_seed_sequence(config.seed)
        init_ss, walk_ss, like_ss = root.spawn(3)
        self.init_rng = np.random.default_rng(init_ss)
        self.walk_rng = np.random.default_rng(walk_ss)
        self._like_parent = like_ss
        if config.exact_likelihood and len(config.data.batches) != 1:
            raise DomainError("exact-likelihood chains need single-time data")

    def log_likelihood(self, params: PriorParams) -> float:
        cfg = self.cfg
        measure = params.measure(cfg.prior.eta)
        if cfg.exact_likelihood:
            value = exact_likelihood(measure, cfg.data.counts_at(0), cfg.model)
            return math.log(value) if value > 0 else -math.inf
        est = estimate_likelihood(
            measure,
            cfg.data,
            cfg.model,
            cfg.particles,
            self._like_parent.spawn(1)[0],
            threads=cfg.threads,
        )
        return est.log_value

    def log_surrogate(self, params: PriorParams) -> float:
        cfg = self.cfg
        est = surrogate_estimate(
            params.measure(cfg.prior.eta), cfg.data, cfg.model, cfg.surrogate_particles
        )
        return est.log_value

    def make_state(self, position: np.ndarray, with_surrogate: bool) -> ChainState:
        cfg = self.cfg
        params = from_chain_vector(cfg.prior, position)
        state = ChainState(
            position=position,
            params=params,
            moments=params_to_moments(cfg.prior, params, cfg.moment_order),
            log_prior=log_prior_density_chain(cfg.prior, position),
            log_like=self.log_likelihood(params),
        )
        if with_surrogate:
            state.log_surrogate = self.log_surrogate(params)
        return state

    def initial_state(self) -> ChainState:
        cfg = self.cfg
        needs_surrogate = cfg.variant.startswith("da-")
        for _ in range(cfg.max_init_tries):
            params = sample_prior(cfg.prior, self.init_rng)
            state = self.make_state(to_chain_vector(cfg.prior, params), needs_surrogate)
            if math.isfinite(state.log_like):
                return state
        raise DomainError(
            f"no initial state with positive likelihood in {cfg.max_init_tries} prior draws"
        )


def _accept(log_alpha: float, rng) -> bool:
    return log_alpha >= 0.0 or math.log(rng.random()) < log_alpha


def pm_step(state: ChainState, driver: _Driver) -> tuple[ChainState, StepRecord]:
    """One pseudo-marginal iteration (exact or noisy flavour)."""
    cfg = driver.cfg
    t0 = time.perf_counter()
    proposal, log_kernel_ratio = propose_position(
        state.position, cfg.scale, cfg.prior, driver.walk_rng
    )
    log_prior_prop = log_prior_density_chain(cfg.prior, proposal)
    evals = 0
    if not math.isfinite(log_prior_prop):
        wall = (time.perf_counter() - t0) * 1e3
        return state, StepRecord(False, False, evals, wall)
    log_like_cur = state.log_like
    if cfg.variant == "noisy" and not cfg.exact_likelihood:
        log_like_cur = driver.log_likelihood(state.params)
        evals += 1
    prop_state = driver.make_state(proposal, with_surrogate=False)
    evals += 1
    log_alpha = (
        log_kernel_ratio
        + prop_state.log_like
        + prop_state.log_prior
        - log_like_cur
        - state.log_prior
    )
    if _accept(log_alpha, driver.walk_rng):
        out, accepted = prop_state, True
    else:
        out, accepted = state, False
        if cfg.variant == "noisy" and not cfg.exact_likelihood:
            out = ChainState(
                state.position,
                state.params,
                state.moments,
                state.log_prior,
                log_like_cur,
                state.log_surrogate,
            )
    wall = (time.perf_counter() - t0) * 1e3
    return out, StepRecord(accepted, accepted, evals, wall)


def da_step(state: ChainState, driver: _Driver) -> tuple[ChainState, StepRecord]:
    """Two-stage iteration: surrogate screen, then the exact correction.

    Stage 1 accepts with the usual ratio computed from the deterministic
    surrogate; only survivors get full estimates, and stage 2's ratio
    divides the surrogate back out, so the invariant law equals the
    single-stage chain's.
    """
    cfg = driver.cfg
    t0 = time.perf_counter()
    proposal, log_kernel_ratio = propose_position(
        state.position, cfg.scale, cfg.prior, driver.walk_rng
    )
    log_prior_prop = log_prior_density_chain(cfg.prior, proposal)
    evals = 0
    if not math.isfinite(log_prior_prop):
        wall = (time.perf_counter() - t0) * 1e3
        return state, StepRecord(False, False, evals, wall)
    log_sur_prop = driver.log_surrogate(from_chain_vector(cfg.prior, proposal))
    log_alpha1 = (
        log_kernel_ratio
        + log_sur_prop
        + log_prior_prop
        - state.log_surrogate
        - state.log_prior
    )
    if not _accept(log_alpha1, driver.walk_rng):
        wall = (time.perf_counter() - t0) * 1e3
        return state, StepRecord(False, False, evals, wall)

    log_like_cur = state.log_like
    if cfg.variant == "da-noisy":
        log_like_cur = driver.log_likelihood(state.params)
        evals += 1
    prop_state = driver.make_state(proposal, with_surrogate=False)
    prop_state.log_surrogate = log_sur_prop
    evals += 1
    log_alpha2 = (prop_state.log_like + state.log_surrogate) - (log_like_cur + log_sur_prop)
    if _accept(log_alpha2, driver.walk_rng):
        out, accepted = prop_state, True
    else:
        out, accepted = state, False
        if cfg.variant == "da-noisy":
            out = ChainState(
                state.position,
                state.params,
                state.moments,
                state.log_prior,
                log_like_cur,
                state.log_surrogate,
            )
    wall = (time.perf_counter() - t0) * 1e3
    return out, StepRecord(accepted, True, evals, wall)


def run_chain(config: ChainConfig) -> ChainResult:
    """Run one chain from a prior draw, recording every state."""
    driver = _Driver(config)
    state = driver.initial_state()
    dim = config.prior.dim
    order = config.moment_order
    rows = config.steps + 1
    params = np.empty((rows, dim))
    moments = np.empty((rows, order - 2))
    log_est = np.empty(rows)
    accepted = np.zeros(rows, dtype=bool)
    stage1 = np.zeros(rows, dtype=bool)
    wall = np.zeros(rows)
    step_fn = da_step if config.variant.startswith("da-") else pm_step
    total_evals = 0

    def record(i, st, rec=None):
        params[i] = st.params.as_vector()
        moments[i] = st.moments.values
        log_est[i] = st.log_like
        if rec is not None:
            accepted[i] = rec.accepted
            stage1[i] = rec.stage1_accepted
            wall[i] = rec.wall_ms

    record(0, state)
    for i in range(1, rows):
        state, rec = step_fn(state, driver)
        total_evals += rec.full_evaluations
        record(i, state, rec)
    return ChainResult(
        config=config,
        params=params,
        moments=moments,
        log_estimate=log_est,
        accepted=accepted,
        stage1_accepted=stage1,
        wall_ms=wall,
        full_evaluations=total_evals,
    )


def credible_interval(trace, level: float, thin: int = 1) -> tuple[float, float]:
    """Central empirical interval of the (optionally thinned) trace."""
    if not 0 < level < 1:
        raise DomainError(f"level must lie in (0,1), got {level}")
    arr = np.asarray(trace, dtype=float)[::thin]
    if arr.size == 0:
        raise DomainError("empty trace")
    lo = float(np.quantile(arr, (1 - level) / 2))
    hi = float(np.quantile(arr, (1 + level) / 2))
    return lo, hi
