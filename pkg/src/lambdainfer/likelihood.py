"""Sampling-probability machinery: exact recursion, Monte Carlo estimator,
deterministic surrogate, and particle-count tuning.

The exact route solves the closed linear system satisfied by single-time
type-frequency probabilities, level by level in the sample size. The Monte
Carlo route simulates bare genealogy topologies and integrates the mutation
process along each tree exactly (leafward dynamic programming), which keeps
the estimator unbiased and nonnegative - the two properties pseudo-marginal
correctness actually needs.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from itertools import combinations_with_replacement

import numpy as np
from scipy.special import gammaln, logsumexp

from . import _fastpath as fp
from .exceptions import CapacityError, DomainError
from .genealogy import (
    MergerEngine,
    SamplingSchedule,
    TimeSeriesData,
    _AtomSource,
    _KernelSource,
    _KingmanSource,
    _simulate_topology,
    make_engine,
)
from .measures import LambdaMeasure, polynomial_moment
from .moments import MomentSequence, is_completely_monotonic, polynomial_moment_from_sequence
from .mutation import BinaryLociModel, MutationModel
from .util import as_seed_sequence, stable_hash_floats

try:  # compiled peeling kernels; numpy fallbacks below cover their absence
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

EXACT_CONFIG_GUARD = 10**6


@dataclass(frozen=True)
class LikelihoodEstimate:
    """Monte Carlo likelihood value with its sampling diagnostics."""

    value: float
    log_value: float
    particles: int
    log_variance: float  # delta-method variance of log(value)
    seed: int | None
    is_zero: bool = False


# --------------------------------------------------------------------------
# Exact single-time likelihood
# --------------------------------------------------------------------------


def _configs_of_size(d: int, s: int):
    """All type-count vectors over d types summing to s (lexicographic)."""
    for bars in combinations_with_replacement(range(d), s):
        cfg = [0] * d
        for b in bars:
            cfg[b] += 1
        yield tuple(cfg)


def _rates_by_level(measure_or_moments, n: int):
    """lambda_{s,k} for 2 <= k <= s <= n from either input form."""
    if isinstance(measure_or_moments, LambdaMeasure):
        src = measure_or_moments
        return {
            s: np.array([polynomial_moment(src, s, k) for k in range(2, s + 1)])
            for s in range(2, n + 1)
        }
    if isinstance(measure_or_moments, MomentSequence):
        seq = measure_or_moments
        if seq.n < n:
            raise DomainError(f"need moments up to order {n}, sequence has {seq.n}")
        report = is_completely_monotonic(seq)
        if not report.ok:
            raise DomainError(
                f"moment sequence is not completely monotonic: {report.violations[:3]}"
            )
        return {
            s: np.array(
                [polynomial_moment_from_sequence(seq, s, k) for k in range(2, s + 1)]
            )
            for s in range(2, n + 1)
        }
    raise DomainError(
        f"expected LambdaMeasure or MomentSequence, got {type(measure_or_moments).__name__}"
    )


def _counts_to_vector(counts, model: MutationModel) -> np.ndarray:
    if isinstance(counts, dict):
        vec = np.zeros(model.d, dtype=int)
        for label, c in counts.items():
            vec[model.index(str(label))] += int(c)
    else:
        vec = np.asarray(counts, dtype=int)
        if vec.shape != (model.d,):
            raise DomainError(f"count vector must have length d={model.d}")
    if np.any(vec < 0) or vec.sum() < 1:
        raise DomainError("counts must be nonnegative with at least one sample")
    return vec


def exact_likelihood(measure_or_moments, counts, model: MutationModel) -> float:
    """Probability of observing the given single-time type frequencies.

    Solves the first-backward-event balance equations: with s lineages, the
    next event backwards is a mutation (rate s*theta) or a k-merger (rate
    C(s,k) lambda_{s,k}); conditioning on it couples configurations of equal
    size through mutation and pulls in smaller sizes through mergers. Levels
    are solved in increasing size, each a strictly diagonally dominant linear
    system.
    """
    vec = _counts_to_vector(counts, model)
    n = int(vec.sum())
    d = model.d
    total_configs = sum(math.comb(s + d - 1, d - 1) for s in range(1, n + 1))
    if total_configs > EXACT_CONFIG_GUARD:
        raise CapacityError(
            f"{total_configs} configurations exceed the {EXACT_CONFIG_GUARD} guard"
        )
    lam = _rates_by_level(measure_or_moments, n)
    theta = model.theta
    mmat = model.matrix
    m0 = model.stationary

    levels: list[dict[tuple, float]] = [None, {}]  # type: ignore[list-item]
    for i in range(d):
        e = tuple(1 if j == i else 0 for j in range(d))
        levels[1][e] = float(m0[i])

    for s in range(2, n + 1):
        configs = list(_configs_of_size(d, s))
        index = {cfg: i for i, cfg in enumerate(configs)}
        size = len(configs)
        ks = np.arange(2, s + 1)
        merger_rates = np.array(
            [math.comb(s, int(k)) for k in ks], dtype=float
        ) * lam[s]
        r_s = float(merger_rates.sum())
        a = np.zeros((size, size))
        b = np.zeros(size)
        for cfg, row in index.items():
            a[row, row] += s * theta + r_s
            for i in range(d):
                if cfg[i] < 1:
                    continue
                # mutation: observed lineage of type i was type j just before
                for j in range(d):
                    prev = list(cfg)
                    prev[i] -= 1
                    prev[j] += 1
                    coeff = theta * (cfg[j] + 1 - (i == j)) * mmat[j, i]
                    a[row, index[tuple(prev)]] -= coeff
                # mergers of k lineages of type i
                for k in range(2, cfg[i] + 1):
                    prev = list(cfg)
                    prev[i] -= k - 1
                    b[row] += (
                        merger_rates[k - 2]
                        * (cfg[i] - k + 1)
                        / (s - k + 1)
                        * levels[s - k + 1][tuple(prev)]
                    )
        sol = np.linalg.solve(a, b)
        levels.append({cfg: float(sol[index[cfg]]) for cfg in configs})

    return levels[n][tuple(vec)]


# --------------------------------------------------------------------------
# Monte Carlo estimator
# --------------------------------------------------------------------------


def _leaf_assignment(data: TimeSeriesData, model: MutationModel) -> np.ndarray:
    """Canonical typed labelling: batch by batch, haplotypes in sorted order."""
    types = []
    for _, counts in data.batches:
        for hap, c in counts:
            types.extend([model.index(hap)] * c)
    return np.asarray(types, dtype=int)


def _log_multinomial_factor(data: TimeSeriesData) -> float:
    """log of the number of leaf labellings consistent with the counts."""
    total = 0.0
    for _, counts in data.batches:
        n_i = sum(c for _, c in counts)
        total += gammaln(n_i + 1) - sum(gammaln(c + 1) for _, c in counts)
    return float(total)


def _peel_binary_loci(g, model: BinaryLociModel, leaf_types: np.ndarray) -> float:
    """log P(leaf types | tree), factorized over loci."""
    n_nodes = len(g.times)
    loci = model.loci
    partial = [None] * n_nodes  # (loci, 2) conditional likelihoods, rescaled
    logscale = np.zeros((n_nodes, loci))
    for node in range(n_nodes):
        kids = g.children[node]
        if not kids:
            state = np.zeros((loci, 2))
            bits = model.bits(int(leaf_types[node]))
            state[np.arange(loci), bits] = 1.0
            partial[node] = state
            continue
        acc = np.ones((loci, 2))
        scale = np.zeros(loci)
        for c in kids:
            ps, pd = model.locus_transition(g.times[node] - g.times[c])
            child = partial[c]
            acc = acc * (ps * child + pd * child[:, ::-1])
            scale += logscale[c]
        mx = acc.max(axis=1)
        if np.any(mx <= 0.0):
            return -math.inf
        acc /= mx[:, None]
        partial[node] = acc
        logscale[node] = scale + np.log(mx)
    root = n_nodes - 1
    per_locus = 0.5 * partial[root].sum(axis=1)
    return float(np.sum(np.log(per_locus) + logscale[root]))


def _peel_general(g, model: MutationModel, leaf_types: np.ndarray) -> float:
    n_nodes = len(g.times)
    partial = [None] * n_nodes
    logscale = np.zeros(n_nodes)
    for node in range(n_nodes):
        kids = g.children[node]
        if not kids:
            state = np.zeros(model.d)
            state[int(leaf_types[node])] = 1.0
            partial[node] = state
            continue
        acc = np.ones(model.d)
        scale = 0.0
        for c in kids:
            trans = model.transition(g.times[node] - g.times[c])
            acc = acc * (trans @ partial[c])
            scale += logscale[c]
        mx = acc.max()
        if mx <= 0.0:
            return -math.inf
        partial[node] = acc / mx
        logscale[node] = scale + math.log(mx)
    root = n_nodes - 1
    val = float(model.stationary @ partial[root])
    if val <= 0.0:
        return -math.inf
    return math.log(val) + float(logscale[root])


if HAVE_NUMBA:

    @njit(cache=True)
    def _loci_kernel(times, child_flat, child_off, leaf_bits, rate2):  # pragma: no cover
        n_nodes = times.shape[0]
        n_leaves = leaf_bits.shape[0]
        loci = leaf_bits.shape[1]
        state = np.empty((n_nodes, loci, 2))
        logscale = np.zeros(n_nodes)
        for node in range(n_nodes):
            lo, hi = child_off[node], child_off[node + 1]
            if lo == hi:
                for l in range(loci):
                    b = leaf_bits[node, l]
                    state[node, l, b] = 1.0
                    state[node, l, 1 - b] = 0.0
                continue
            for l in range(loci):
                state[node, l, 0] = 1.0
                state[node, l, 1] = 1.0
            sc = 0.0
            for ci in range(lo, hi):
                c = child_flat[ci]
                decay = math.exp(-rate2 * (times[node] - times[c]))
                ps = 0.5 * (1.0 + decay)
                pd = 0.5 * (1.0 - decay)
                sc += logscale[c]
                for l in range(loci):
                    a0 = state[c, l, 0]
                    a1 = state[c, l, 1]
                    state[node, l, 0] *= ps * a0 + pd * a1
                    state[node, l, 1] *= ps * a1 + pd * a0
            for l in range(loci):
                m = state[node, l, 0]
                if state[node, l, 1] > m:
                    m = state[node, l, 1]
                if m <= 0.0:
                    return -math.inf
                state[node, l, 0] /= m
                state[node, l, 1] /= m
                sc += math.log(m)
            logscale[node] = sc
        root = n_nodes - 1
        total = logscale[root]
        for l in range(loci):
            total += math.log(0.5 * (state[root, l, 0] + state[root, l, 1]))
        return total

    @njit(cache=True)
    def _general_kernel(
        times, child_flat, child_off, leaf_types, vals, vecs, inv, theta, stationary
    ):  # pragma: no cover
        n_nodes = times.shape[0]
        d = vals.shape[0]
        state = np.zeros((n_nodes, d))
        logscale = np.zeros(n_nodes)
        tmp = np.empty(d)
        for node in range(n_nodes):
            lo, hi = child_off[node], child_off[node + 1]
            if lo == hi:
                state[node, leaf_types[node]] = 1.0
                continue
            for i in range(d):
                state[node, i] = 1.0
            sc = 0.0
            for ci in range(lo, hi):
                c = child_flat[ci]
                t = times[node] - times[c]
                sc += logscale[c]
                for i in range(d):
                    acc = 0.0
                    for j in range(d):
                        acc += inv[i, j] * state[c, j]
                    tmp[i] = acc * math.exp(theta * t * vals[i])
                for i in range(d):
                    acc = 0.0
                    for j in range(d):
                        acc += vecs[i, j] * tmp[j]
                    if acc < 0.0:
                        acc = 0.0
                    state[node, i] *= acc
            m = 0.0
            for i in range(d):
                if state[node, i] > m:
                    m = state[node, i]
            if m <= 0.0:
                return -math.inf
            for i in range(d):
                state[node, i] /= m
            logscale[node] = sc + math.log(m)
        root = n_nodes - 1
        val = 0.0
        for i in range(d):
            val += stationary[i] * state[root, i]
        if val <= 0.0:
            return -math.inf
        return math.log(val) + logscale[root]


class _PeelContext:
    """Per-call peeling setup shared by all particles."""

    def __init__(self, model: MutationModel, leaf_types: np.ndarray):
        self.model = model
        self.leaf_types = leaf_types
        self.kind = "numpy"
        if isinstance(model, BinaryLociModel):
            shifts = np.arange(model.loci - 1, -1, -1)
            self.leaf_bits = ((leaf_types[:, None] >> shifts) & 1).astype(np.int8)
            self.rate2 = 2.0 * model.theta / model.loci
            if HAVE_NUMBA:
                self.kind = "loci"
        elif HAVE_NUMBA:
            vals, vecs, inv = model._generator_eig
            if np.max(np.abs(vals.imag)) < 1e-12 and np.max(np.abs(vecs.imag)) < 1e-12:
                self.vals = np.ascontiguousarray(vals.real)
                self.vecs = np.ascontiguousarray(vecs.real)
                self.inv = np.ascontiguousarray(inv.real)
                self.kind = "general"

    def __call__(self, g) -> float:
        if self.kind == "numpy":
            if isinstance(self.model, BinaryLociModel):
                return _peel_binary_loci(g, self.model, self.leaf_types)
            return _peel_general(g, self.model, self.leaf_types)
        n_nodes = len(g.times)
        child_off = np.zeros(n_nodes + 1, dtype=np.int64)
        for node, kids in enumerate(g.children):
            child_off[node + 1] = child_off[node] + len(kids)
        child_flat = np.fromiter(
            (c for kids in g.children for c in kids), dtype=np.int64, count=child_off[-1]
        )
        if self.kind == "loci":
            return float(
                _loci_kernel(g.times, child_flat, child_off, self.leaf_bits, self.rate2)
            )
        return float(
            _general_kernel(
                g.times,
                child_flat,
                child_off,
                self.leaf_types.astype(np.int64),
                self.vals,
                self.vecs,
                self.inv,
                self.model.theta,
                np.asarray(self.model.stationary),
            )
        )


def _peel(g, model: MutationModel, leaf_types: np.ndarray) -> float:
    return _PeelContext(model, leaf_types)(g)


def _fast_tables(measure: LambdaMeasure, schedule: SamplingSchedule):
    """Event-rate tables for the compiled particle loop, or None if the
    measure has components the compiled path does not cover."""
    if not fp.HAVE_FAST or measure.betas:
        return None
    engine = make_engine(measure)
    kinds, params = [], []
    for s in engine.sources:
        if isinstance(s, _KingmanSource):
            kinds.append(fp.KIND_KINGMAN)
            params.append((0.0, 0.0, 0.0))
        elif isinstance(s, _AtomSource):
            kinds.append(fp.KIND_ATOM)
            params.append((s.loc, 0.0, 0.0))
        elif isinstance(s, _KernelSource):
            kinds.append(fp.KIND_KERNEL)
            params.append((s.loc, s.sigma, s.envelope_at))
        else:
            return None
    if not kinds:
        return None
    n_total = schedule.total_size
    rates = np.zeros((n_total + 1, len(kinds)))
    for p in range(2, n_total + 1):
        rates[p] = engine.rates(p)
    t_last = schedule.times[-1]
    insert_b = np.array([t_last - t for t, _ in schedule.entries])
    sizes = np.array(schedule.sizes, dtype=np.int64)
    return rates, np.array(kinds, dtype=np.int64), np.array(params), insert_b, sizes, measure.eta


def _particle_logs_fast(tables, peel: "_PeelContext", model, seeds) -> np.ndarray | None:
    rates, kinds, params, insert_b, sizes, eta = tables
    seeds = (seeds % (2**32)).astype(np.int64)
    if peel.kind == "loci":
        logs = fp._particles_loci(
            seeds, insert_b, sizes, rates, kinds, params, eta, peel.leaf_bits, peel.rate2
        )
    elif peel.kind == "general":
        logs = fp._particles_general(
            seeds, insert_b, sizes, rates, kinds, params, eta,
            peel.leaf_types.astype(np.int64), peel.vals, peel.vecs, peel.inv,
            model.theta, np.asarray(model.stationary, dtype=float),
        )
    else:
        return None
    if np.any(np.isnan(logs)):
        raise DomainError("merger rate vanished before reaching a common ancestor")
    return logs


def _particle_logs(measure_or_moments, schedule, model, leaf_types, seeds) -> np.ndarray:
    """Per-particle log tree-likelihoods; ``seeds`` is one integer per particle."""
    peel = _PeelContext(model, leaf_types)
    if isinstance(measure_or_moments, LambdaMeasure):
        tables = _fast_tables(measure_or_moments, schedule)
        if tables is not None:
            logs = _particle_logs_fast(tables, peel, model, seeds)
            if logs is not None:
                return logs
    engine = make_engine(measure_or_moments)
    logs = np.empty(len(seeds))
    for i, s in enumerate(seeds):
        rng = np.random.default_rng(int(s))
        g = _simulate_topology(engine, schedule, rng)
        logs[i] = peel(g)
    return logs


def _particle_chunk_worker(args):
    method, measure_or_moments, data, schedule, model, leaf_types, seeds = args
    if method == "sis":
        return _sis_logs(measure_or_moments, data, model, np.asarray(seeds))
    return _particle_logs(measure_or_moments, schedule, model, leaf_types, np.asarray(seeds))


def estimate_likelihood(
    measure_or_moments,
    data: TimeSeriesData,
    model: MutationModel,
    particles: int,
    seed,
    threads: int = 1,
    method: str = "topology",
) -> LikelihoodEstimate:
    """Unbiased Monte Carlo estimate of the time-series likelihood.

    ``method="topology"``: each particle draws a bare serial genealogy and
    evaluates the exact probability of the observed typed counts given that
    tree; the mean over particles times the per-batch labelling count is
    unbiased for the likelihood.

    ``method="sis"``: each particle walks the typed ancestral process
    backwards guided by the balance equations (mergers within a type only),
    so no path is wasted on type-incompatible trees; unbiased for the same
    likelihood, with far lower variance on data whose type partition random
    topologies rarely reproduce.

    A zero value is a legal (flagged) return, not an error. Particle seeds
    are split from the master seed, and the reduction runs in particle
    order, so results do not depend on the worker count.
    """
    if particles < 1:
        raise DomainError("need at least one particle")
    if method not in ("topology", "sis"):
        raise DomainError(f"unknown estimator method {method!r}")
    schedule = data.schedule()
    leaf_types = _leaf_assignment(data, model)
    # one independent integer seed per particle index, worker-count independent
    seeds = as_seed_sequence(seed).generate_state(particles, dtype=np.uint64)
    if threads > 1 and particles >= 2 * threads:
        chunks = np.array_split(seeds, threads)
        payload = [
            (method, measure_or_moments, data, schedule, model, leaf_types, chunk)
            for chunk in chunks
            if len(chunk)
        ]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(_particle_chunk_worker, payload))
        logs = np.concatenate(parts)
    elif method == "sis":
        logs = _sis_logs(measure_or_moments, data, model, seeds)
    else:
        logs = _particle_logs(measure_or_moments, schedule, model, leaf_types, seeds)

    log_mult = _log_multinomial_factor(data)
    finite = np.isfinite(logs)
    if not finite.any():
        return LikelihoodEstimate(0.0, -math.inf, particles, math.inf, _seed_label(seed), True)
    log_mean = float(logsumexp(logs[finite]) - math.log(particles))
    log_value = log_mean + log_mult
    # delta method on the particle mean, computed on shifted linear values
    shift = logs[finite].max()
    w = np.zeros(particles)
    w[finite] = np.exp(logs[finite] - shift)
    mean_w = w.mean()
    var_w = w.var(ddof=1) if particles > 1 else 0.0
    log_variance = float(var_w / (particles * mean_w**2))
    return LikelihoodEstimate(
        math.exp(log_value), log_value, particles, log_variance, _seed_label(seed), False
    )


def _seed_label(seed) -> int | None:
    if isinstance(seed, (int, np.integer)):
        return int(seed)
    if isinstance(seed, np.random.SeedSequence) and isinstance(seed.entropy, int):
        return seed.entropy
    return None


# --------------------------------------------------------------------------
# Sequential importance sampling on typed ancestral configurations
# --------------------------------------------------------------------------
#
# The bare-topology estimator integrates mutations exactly but proposes
# trees blind to the observed types, so its weights collapse whenever the
# data's type partition is unlikely under random topologies. The sampler
# below walks the typed ancestral process backwards instead, proposing only
# events the first-event balance decomposition allows for the current typed
# lineages - mergers of same-type subsets (mass lambda_{s,k} per subset)
# and backward mutations (mass theta * M[j, i] per lineage) - and absorbs
# the compatible-mass fraction of the total event rate into the weight.
# Every path carries positive weight, which is what keeps the variance
# usable at data/measure combinations the blind estimator cannot handle.
# The walk is over labelled lineages, so the estimator targets the labelled
# likelihood; the per-batch multinomial factor converts to counts.

MUTATION_TILT = 0.5  # proposal-only pull of backward mutations toward occupied types


def _sis_particle_log(engine, model: MutationModel, batches, rng) -> float:
    """One importance-sampling path; returns its log weight.

    ``batches``: [(backward_time, {type: count}), ...] in increasing
    backward time, first entry at 0.
    """
    theta = model.theta
    config: dict[int, int] = dict(batches[0][1])
    s = sum(config.values())
    pending = batches[1:]
    pi = 0
    b = 0.0
    logw = 0.0
    stationary = model.stationary

    while True:
        if s == 1 and pi >= len(pending):
            only_type = next(iter(config))
            return logw + math.log(float(stationary[only_type]))
        lam_total = s * theta + engine.total_rate(s)
        if lam_total <= 0.0:
            if pi < len(pending):
                bt, counts = pending[pi]
                for t, c in counts.items():
                    config[t] = config.get(t, 0) + c
                s += sum(counts.values())
                b = bt
                pi += 1
                continue
            return -math.inf
        dt = rng.exponential(1.0 / lam_total)
        if pi < len(pending) and pending[pi][0] <= b + dt:
            bt, counts = pending[pi]
            for t, c in counts.items():
                config[t] = config.get(t, 0) + c
            s += sum(counts.values())
            b = bt
            pi += 1
            continue
        b += dt

        # compatible first events for the current typed lineages; proposal
        # tilts backward mutations toward occupied types (the weight divides
        # the tilt back out, so the estimand is untouched)
        moves = []
        masses = []
        pmasses = []
        if s >= 2:
            lam_vec = engine.lam_vector(s)
            for i, ni in config.items():
                if ni < 2:
                    continue
                for k in range(2, ni + 1):
                    mass = lam_vec[k - 2] * math.comb(ni, k)
                    if mass > 0.0:
                        moves.append((0, i, k))
                        masses.append(mass)
                        pmasses.append(mass)
        if theta > 0.0:
            for i in list(config):
                ni = config[i]
                for j, mji in model.in_edges(i):
                    mass = theta * ni * mji
                    if mass > 0.0:
                        moves.append((1, i, j))
                        masses.append(mass)
                        pmasses.append(mass * (config.get(j, 0) + MUTATION_TILT))
        if not masses:
            return -math.inf
        pmasses = np.asarray(pmasses)
        total_p = float(pmasses.sum())
        cum = np.cumsum(pmasses)
        idx = int(np.searchsorted(cum, rng.random() * total_p, side="right"))
        idx = min(idx, len(moves) - 1)
        kind, i, arg = moves[idx]
        logw += (
            math.log(masses[idx]) + math.log(total_p) - math.log(pmasses[idx]) - math.log(lam_total)
        )
        if kind == 0:  # k lineages of type i merge
            k = arg
            config[i] -= k - 1
            s -= k - 1
        else:  # observed type i arose by mutation from type arg
            j = arg
            config[i] -= 1
            if config[i] == 0:
                del config[i]
            config[j] = config.get(j, 0) + 1


def _sis_logs(measure_or_moments, data: TimeSeriesData, model, seeds) -> np.ndarray:
    engine = make_engine(measure_or_moments)
    t_last = data.times[-1]
    batches = [
        (t_last - t, {model.index(h): c for h, c in counts})
        for t, counts in reversed(data.batches)
    ]
    logs = np.empty(len(seeds))
    for i, s in enumerate(seeds):
        rng = np.random.default_rng(int(s))
        logs[i] = _sis_particle_log(engine, model, batches, rng)
    return logs


# --------------------------------------------------------------------------
# Deterministic surrogate and particle tuning
# --------------------------------------------------------------------------

SURROGATE_PARTICLES = 5


def surrogate_estimate(
    measure_or_moments, data: TimeSeriesData, model: MutationModel, particles: int = SURROGATE_PARTICLES
) -> LikelihoodEstimate:
    """Cheap deterministic stand-in for the likelihood.

    A small fixed-particle estimate whose seed is a hash of the moment
    sequence of the input, so identical states always produce identical
    values; any deterministic bias cancels in a two-stage acceptance step.
    """
    if isinstance(measure_or_moments, MomentSequence):
        key = measure_or_moments.values
    else:
        n = max(3, min(data.total_size, 40))
        key = MomentSequence.from_measure(measure_or_moments, n).values
    seed = stable_hash_floats(key)
    return estimate_likelihood(measure_or_moments, data, model, particles, seed)


def surrogate_likelihood(
    measure_or_moments, data: TimeSeriesData, model: MutationModel, particles: int = SURROGATE_PARTICLES
) -> float:
    return surrogate_estimate(measure_or_moments, data, model, particles).value


def tune_particles(
    measure_or_moments,
    data: TimeSeriesData,
    model: MutationModel,
    target_variance: float = 1.44,
    seed=0,
    repeats: int = 50,
    cap: int = 10**5,
) -> int:
    """Double the particle count until the log-estimate variance over
    ``repeats`` replications drops to the target."""
    if target_variance <= 0:
        raise DomainError("target variance must be positive")
    root = as_seed_sequence(seed)
    particles = 1
    while particles <= cap:
        reps = root.spawn(repeats)
        logs = []
        any_zero = False
        for ss in reps:
            est = estimate_likelihood(measure_or_moments, data, model, particles, ss)
            if est.is_zero:
                any_zero = True
                break
            logs.append(est.log_value)
        if not any_zero:
            var = float(np.var(logs, ddof=1))
            if var <= target_variance:
                return particles
        particles *= 2
    raise CapacityError(f"particle tuning exceeded the cap of {cap}")
