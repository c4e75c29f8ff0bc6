"""Serial coalescent simulation with multiple mergers and mutation.

The ancestral process runs backwards from the most recent sampling time;
earlier batches join as fresh blocks when the backward clock crosses their
sampling time. With p active blocks, any k of them merge at the rate set
by the measure's polynomial moments. Events are generated source by
source:

* the atom at 0 races pairwise exponential clocks,
* finite atoms and density components fire at their effective (non-silent)
  merger rate, with the participant count drawn as Binomial(p, r)
  conditioned on >= 2 - the paintbox step conditioned on visibility.

This realizes every merger rate exactly while never generating the silent
jumps that dominate raw jump intensities when the density reaches down to
small impact values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import betainc, betaln, gammaln, ndtr, ndtri

from .exceptions import CapacityError, DataFormatError, DomainError
from .measures import LambdaMeasure, _leggauss
from .moments import MomentSequence, difference_table
from .mutation import MutationModel
from .util import rng_from

MOMENT_INPUT_MAX_SIZE = 30  # binomial transforms degrade beyond this (see engine)

_LOGFACT = gammaln(np.arange(1, 2049, dtype=float))  # log k! for k = 0..2047


def _log_binom(p: int, ks: np.ndarray) -> np.ndarray:
    return _LOGFACT[p] - _LOGFACT[ks] - _LOGFACT[p - ks]


@dataclass(frozen=True)
class SamplingSchedule:
    """Ordered (time, sample size) pairs; first time must be 0."""

    entries: tuple[tuple[float, int], ...]

    def __post_init__(self):
        if not self.entries:
            raise DomainError("schedule must contain at least one batch")
        entries = tuple((float(t), int(s)) for t, s in self.entries)
        object.__setattr__(self, "entries", entries)
        if entries[0][0] != 0.0:
            raise DomainError("first sampling time must be 0")
        times = [t for t, _ in entries]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DomainError("sampling times must be strictly increasing")
        if any(s < 1 for _, s in entries):
            raise DomainError("sample sizes must be >= 1")

    @property
    def times(self) -> tuple[float, ...]:
        return tuple(t for t, _ in self.entries)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(s for _, s in self.entries)

    @property
    def total_size(self) -> int:
        return sum(self.sizes)


@dataclass(frozen=True)
class TimeSeriesData:
    """Haplotype counts at each sampling time, sorted for determinism."""

    batches: tuple[tuple[float, tuple[tuple[str, int], ...]], ...]

    def __post_init__(self):
        norm = []
        for t, counts in self.batches:
            items = tuple(sorted((str(h), int(c)) for h, c in dict(counts).items()))
            if any(c <= 0 for _, c in items):
                raise DataFormatError("haplotype counts must be positive")
            if not items:
                raise DataFormatError("each batch needs at least one haplotype")
            norm.append((float(t), items))
        times = [t for t, _ in norm]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DataFormatError("batch times must be strictly increasing")
        object.__setattr__(self, "batches", tuple(norm))

    @property
    def times(self) -> tuple[float, ...]:
        return tuple(t for t, _ in self.batches)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(sum(c for _, c in counts) for _, counts in self.batches)

    @property
    def total_size(self) -> int:
        return sum(self.sizes)

    def counts_at(self, i: int) -> dict[str, int]:
        return dict(self.batches[i][1])

    def schedule(self) -> SamplingSchedule:
        return SamplingSchedule(tuple(zip(self.times, self.sizes)))

    @classmethod
    def single_batch(cls, counts, time: float = 0.0) -> "TimeSeriesData":
        return cls(((time, tuple(dict(counts).items())),))


# --------------------------------------------------------------------------
# Merger engines: block-count -> total rate and merger-size sampling
# --------------------------------------------------------------------------


def _visible_fraction(p: int, r) -> np.ndarray:
    """g_p(r) = P(Binomial(p, r) >= 2) / r^2; decreasing, bounded by C(p,2)."""
    r = np.asarray(r, dtype=float)
    return betainc(2.0, p - 1.0, r) / r**2


def _conditioned_binomial(p: int, r: float, rng: np.random.Generator) -> int:
    """Binomial(p, r) conditioned on >= 2 participants."""
    if r >= 1.0 - 1e-15:
        return p
    ks = np.arange(2, p + 1)
    logpmf = _log_binom(p, ks) + ks * math.log(r) + (p - ks) * math.log1p(-r)
    pmf = np.exp(logpmf - logpmf.max())
    cum = np.cumsum(pmf)
    return 2 + int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))


class _KernelSource:
    """Truncated-normal density component of the measure."""

    def __init__(self, kernel, eta: float):
        self.loc, self.sigma, self.weight = kernel.loc, kernel.sigma, kernel.weight
        self.lo = eta
        self.cdf_lo = ndtr((eta - self.loc) / self.sigma)
        self.cdf_hi = ndtr((1.0 - self.loc) / self.sigma)
        # all floating-point-reachable proposals lie above loc - 40 sigma
        self.envelope_at = max(eta, self.loc - 40.0 * self.sigma)
        # quadrature grid over the kernel's effective support
        wlo = max(eta, self.loc - 9.0 * self.sigma)
        whi = min(1.0, self.loc + 9.0 * self.sigma)
        x, w = _leggauss(64)
        self.grid = 0.5 * (whi - wlo) * x + 0.5 * (whi + wlo)
        z = self.cdf_hi - self.cdf_lo
        pdf = np.exp(-0.5 * ((self.grid - self.loc) / self.sigma) ** 2) / (
            self.sigma * math.sqrt(2 * math.pi) * z
        )
        self.quad_w = 0.5 * (whi - wlo) * w * pdf

    def rate(self, p: int) -> float:
        return self.weight * float(self.quad_w @ _visible_fraction(p, self.grid))

    def lam_vector(self, p: int) -> np.ndarray:
        ks = np.arange(2, p + 1)
        powers = self.grid[None, :] ** (ks[:, None] - 2) * (1.0 - self.grid[None, :]) ** (
            p - ks[:, None]
        )
        return self.weight * powers @ self.quad_w

    def sample_k(self, p: int, rng: np.random.Generator) -> int:
        envelope = float(_visible_fraction(p, self.envelope_at))
        span = self.cdf_hi - self.cdf_lo
        while True:
            u = self.cdf_lo + span * rng.random(64)
            r = self.loc + self.sigma * ndtri(u)
            np.clip(r, self.lo, 1.0, out=r)
            accept = rng.random(64) * envelope <= _visible_fraction(p, r)
            hits = np.nonzero(accept)[0]
            if hits.size:
                return _conditioned_binomial(p, float(r[hits[0]]), rng)


class _BetaSource:
    """Beta(a,b) density component; merger-size law in closed form."""

    def __init__(self, comp):
        self.a, self.b, self.weight = comp.a, comp.b, comp.weight
        self._cache: dict[int, tuple[float, np.ndarray]] = {}

    def _table(self, p: int):
        if p not in self._cache:
            ks = np.arange(2, p + 1)
            logterm = (
                _log_binom(p, ks)
                + betaln(self.a + ks - 2, self.b + p - ks)
                - betaln(self.a, self.b)
            )
            terms = np.exp(logterm)
            self._cache[p] = (float(terms.sum()), np.cumsum(terms / terms.sum()))
        return self._cache[p]

    def rate(self, p: int) -> float:
        return self.weight * self._table(p)[0]

    def sample_k(self, p: int, rng: np.random.Generator) -> int:
        _, cum = self._table(p)
        return 2 + int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))

    def lam_vector(self, p: int) -> np.ndarray:
        ks = np.arange(2, p + 1)
        return self.weight * np.exp(
            betaln(self.a + ks - 2, self.b + p - ks) - betaln(self.a, self.b)
        )


class _AtomSource:
    def __init__(self, loc: float, weight: float):
        self.loc, self.weight = loc, weight

    def rate(self, p: int) -> float:
        return self.weight * float(_visible_fraction(p, self.loc))

    def sample_k(self, p: int, rng: np.random.Generator) -> int:
        return _conditioned_binomial(p, self.loc, rng)

    def lam_vector(self, p: int) -> np.ndarray:
        ks = np.arange(2, p + 1)
        return self.weight * self.loc ** (ks - 2) * (1.0 - self.loc) ** (p - ks)


class _KingmanSource:
    def __init__(self, mass: float):
        self.mass = mass

    def rate(self, p: int) -> float:
        return self.mass * p * (p - 1) / 2.0

    def sample_k(self, p: int, rng: np.random.Generator) -> int:
        return 2

    def lam_vector(self, p: int) -> np.ndarray:
        out = np.zeros(p - 1)
        out[0] = self.mass
        return out


class MergerEngine:
    """Total merger rate per block count plus merger-size sampling."""

    def __init__(self, sources):
        self.sources = sources
        self._rates: dict[int, np.ndarray] = {}
        self._lam_vectors: dict[int, np.ndarray] = {}

    @classmethod
    def from_measure(cls, measure: LambdaMeasure) -> "MergerEngine":
        sources = []
        if measure.kingman_mass > 0:
            sources.append(_KingmanSource(measure.kingman_mass))
        for loc, w in measure.atoms:
            if w > 0:
                sources.append(_AtomSource(loc, w))
        for comp in measure.betas:
            if comp.weight > 0:
                sources.append(_BetaSource(comp))
        for ker in measure.kernels:
            if ker.weight > 0:
                sources.append(_KernelSource(ker, measure.eta))
        return cls(sources)

    @classmethod
    def from_sequence(cls, seq: MomentSequence) -> "MergerEngine":
        if seq.n > MOMENT_INPUT_MAX_SIZE:
            raise CapacityError(
                f"moment-sequence simulation limited to order {MOMENT_INPUT_MAX_SIZE}; "
                f"got {seq.n} (binomial transforms are unstable beyond that; "
                "pass the measure instead)"
            )
        return _SequenceEngine(seq)

    def rates(self, p: int) -> np.ndarray:
        if p not in self._rates:
            self._rates[p] = np.cumsum([s.rate(p) for s in self.sources])
        return self._rates[p]

    def total_rate(self, p: int) -> float:
        if p < 2:
            return 0.0
        return float(self.rates(p)[-1])

    def sample_k(self, p: int, rng: np.random.Generator) -> int:
        cum = self.rates(p)
        idx = int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))
        return self.sources[min(idx, len(self.sources) - 1)].sample_k(p, rng)

    def lam_vector(self, p: int) -> np.ndarray:
        """Merger rate factors lambda_{p,k} for k = 2..p."""
        if p not in self._lam_vectors:
            acc = np.zeros(p - 1)
            for s in self.sources:
                acc += s.lam_vector(p)
            self._lam_vectors[p] = acc
        return self._lam_vectors[p]


class _SequenceEngine(MergerEngine):
    """Merger-size laws straight from a truncated moment sequence."""

    def __init__(self, seq: MomentSequence):
        super().__init__(sources=())
        self.seq = seq
        table = difference_table(seq)
        self._cache: dict[int, tuple[float, np.ndarray]] = {}
        for p in range(2, seq.n + 1):
            ks = np.arange(2, p + 1)
            lam = np.array([max(table[p - k][k - 2], 0.0) for k in ks])
            self._lam_vectors[p] = lam
            terms = np.exp(_log_binom(p, ks)) * lam
            total = float(terms.sum())
            self._cache[p] = (total, np.cumsum(terms))

    def total_rate(self, p: int) -> float:
        if p < 2:
            return 0.0
        if p > self.seq.n:
            raise DomainError(f"sequence of order {self.seq.n} cannot drive {p} blocks")
        return self._cache[p][0]

    def sample_k(self, p: int, rng: np.random.Generator) -> int:
        total, cum = self._cache[p]
        if total <= 0:
            raise DomainError("no merger possible under a zero rate")
        return 2 + int(np.searchsorted(cum, rng.random() * cum[-1], side="right"))

    def lam_vector(self, p: int) -> np.ndarray:
        if p > self.seq.n:
            raise DomainError(f"sequence of order {self.seq.n} cannot drive {p} blocks")
        return self._lam_vectors[p]


def make_engine(measure_or_moments) -> MergerEngine:
    if isinstance(measure_or_moments, LambdaMeasure):
        return MergerEngine.from_measure(measure_or_moments)
    if isinstance(measure_or_moments, MomentSequence):
        return MergerEngine.from_sequence(measure_or_moments)
    raise DomainError(
        f"expected LambdaMeasure or MomentSequence, got {type(measure_or_moments).__name__}"
    )


# --------------------------------------------------------------------------
# Genealogies
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class GenealogyEvent:
    time: float  # backward time: 0 at the latest sampling time
    kind: str  # "leaves" | "merge" | "mutation"
    detail: tuple


@dataclass
class Genealogy:
    """Coalescent tree over serially sampled leaves.

    Node ids: leaves come first in schedule order (batch 0 first), merger
    nodes follow in creation order; the last node is the MRCA. Times are
    backward: 0 at the latest sampling time, increasing into the past.
    """

    schedule: SamplingSchedule
    times: np.ndarray
    parent: np.ndarray
    children: list[tuple[int, ...]]
    leaf_batch: np.ndarray
    events: list[GenealogyEvent] = field(default_factory=list)
    leaf_types: np.ndarray | None = None
    root_type: int | None = None

    @property
    def n_leaves(self) -> int:
        return len(self.leaf_batch)

    @property
    def root(self) -> int:
        return len(self.times) - 1

    def leaves_of_batch(self, i: int) -> np.ndarray:
        return np.nonzero(self.leaf_batch == i)[0]

    def branch_length(self, node: int) -> float:
        return float(self.times[self.parent[node]] - self.times[node])

    @cached_property
    def block_membership(self) -> dict[int, frozenset[int]]:
        """Descendant leaf set of every node."""
        out: dict[int, frozenset[int]] = {}
        for node in range(len(self.times)):
            if not self.children[node]:
                out[node] = frozenset((node,))
            else:
                acc: set[int] = set()
                for c in self.children[node]:
                    acc |= out[c]
                out[node] = frozenset(acc)
        return out

    def blocks_at(self, backward_time: float) -> int:
        """Number of ancestral blocks just after ``backward_time`` (between events)."""
        active = 0
        for node in range(len(self.times)):
            born = self.times[node]
            died = self.times[self.parent[node]] if self.parent[node] >= 0 else math.inf
            if born <= backward_time < died:
                active += 1
        return active


def _simulate_topology(engine: MergerEngine, schedule: SamplingSchedule, rng) -> Genealogy:
    t_last = schedule.times[-1]
    n_total = schedule.total_size
    # leaf ids in schedule order; batches activate at backward time t_last - t_i
    leaf_batch = np.repeat(np.arange(len(schedule.entries)), schedule.sizes)
    insertions = []  # (backward_time, batch_index, leaf ids)
    start = 0
    for i, (t, size) in enumerate(schedule.entries):
        insertions.append((t_last - t, i, list(range(start, start + size))))
        start += size
    insertions.sort(key=lambda item: item[0])

    times = [0.0] * n_total
    parent = []
    children: list[tuple[int, ...]] = [()] * n_total
    events: list[GenealogyEvent] = []
    active: list[int] = []
    b = 0.0
    next_id = n_total
    pending = insertions
    pi = 0

    def insert_due(limit: float):
        nonlocal pi, b
        while pi < len(pending) and pending[pi][0] <= limit:
            bt, batch, ids = pending[pi]
            for lid in ids:
                times[lid] = bt
            active.extend(ids)
            events.append(GenealogyEvent(bt, "leaves", (batch,)))
            b = max(b, bt)
            pi += 1

    insert_due(0.0)
    while True:
        p = len(active)
        if p <= 1 and pi >= len(pending):
            break
        rate = engine.total_rate(p)
        if rate <= 0.0:
            if pi < len(pending):
                insert_due(pending[pi][0])
                continue
            raise DomainError("merger rate vanished before reaching a common ancestor")
        dt = rng.exponential(1.0 / rate)
        if pi < len(pending) and pending[pi][0] <= b + dt:
            insert_due(pending[pi][0])
            continue
        b += dt
        k = engine.sample_k(p, rng)
        picked = rng.choice(p, size=k, replace=False)
        merged = sorted(active[i] for i in picked)
        for i in sorted(picked, reverse=True):
            active[i] = active[-1]
            active.pop()
        times.append(b)
        children.append(tuple(merged))
        active.append(next_id)
        events.append(GenealogyEvent(b, "merge", (next_id, tuple(merged))))
        next_id += 1

    parent = np.full(next_id, -1, dtype=int)
    for node, kids in enumerate(children):
        for c in kids:
            parent[c] = node
    return Genealogy(
        schedule=schedule,
        times=np.asarray(times),
        parent=parent,
        children=children,
        leaf_batch=leaf_batch,
        events=events,
    )


def _assign_types(g: Genealogy, model: MutationModel, rng) -> None:
    root = g.root
    types = np.empty(len(g.times), dtype=int)
    types[root] = model.sample_stationary(rng)
    mutation_events = []
    # walk rootward -> leafward so parental types exist before children
    stack = [root]
    while stack:
        node = stack.pop()
        for child in g.children[node]:
            length = g.times[node] - g.times[child]
            current = types[node]
            n_marks = rng.poisson(model.theta * length)
            if n_marks:
                positions = np.sort(rng.uniform(g.times[child], g.times[node], n_marks))[::-1]
                for pos in positions:
                    new = model.mutate(current, rng)
                    mutation_events.append(
                        GenealogyEvent(float(pos), "mutation", (child, int(current), int(new)))
                    )
                    current = new
            types[child] = current
            stack.append(child)
    g.leaf_types = types[: g.n_leaves]
    g.root_type = int(types[root])
    g.events.extend(mutation_events)
    g.events.sort(key=lambda e: e.time)


def simulate_serial_coalescent(
    measure_or_moments,
    model: MutationModel,
    schedule: SamplingSchedule,
    seed,
    typed: bool = True,
) -> Genealogy:
    """Simulate the ancestral tree of a serial sample and, optionally, the
    mutation process along it (``typed=False`` leaves the tree bare)."""
    rng = rng_from(seed)
    engine = make_engine(measure_or_moments)
    g = _simulate_topology(engine, schedule, rng)
    if typed:
        _assign_types(g, model, rng)
    return g


def genealogy_to_data(g: Genealogy, schedule: SamplingSchedule, model: MutationModel) -> TimeSeriesData:
    """Read typed leaves into per-time haplotype counts."""
    if g.schedule != schedule:
        raise DataFormatError("genealogy was generated under a different schedule")
    if g.leaf_types is None:
        raise DataFormatError("genealogy carries no types; simulate with typed=True")
    if len(g.leaf_batch) != schedule.total_size:
        raise DataFormatError("genealogy leaves do not match the schedule")
    batches = []
    for i, (t, size) in enumerate(schedule.entries):
        leaves = g.leaves_of_batch(i)
        if len(leaves) != size:
            raise DataFormatError(f"batch {i} has {len(leaves)} leaves, expected {size}")
        counts: dict[str, int] = {}
        for leaf in leaves:
            lab = model.label(int(g.leaf_types[leaf]))
            counts[lab] = counts.get(lab, 0) + 1
        batches.append((t, tuple(sorted(counts.items()))))
    return TimeSeriesData(tuple(batches))


def simulate_dataset(
    measure_or_moments, model: MutationModel, schedule: SamplingSchedule, seed
) -> TimeSeriesData:
    """End-to-end synthetic dataset; deterministic given the seed."""
    g = simulate_serial_coalescent(measure_or_moments, model, schedule, seed, typed=True)
    return genealogy_to_data(g, schedule, model)
