"""Truncated moment sequences and everything computed from them alone.

A sequence (lambda_3, ..., lambda_n) parametrises the class of measures on
[0,1] sharing those leading moments (with lambda_2 = 1 fixed as the total
mass). This module checks membership in the moment body (complete
monotonicity), builds orthogonal-polynomial recurrences and Gauss rules
from raw moments, derives the sharp cumulative-mass envelope at the Gauss
nodes, and constructs the mutually singular interlaced pair showing the
moment class never shrinks to a point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .exceptions import DomainError
from .measures import LambdaMeasure, moment

DEGENERACY_PIVOT = 1e-12


@dataclass(frozen=True)
class MomentSequence:
    """Ordered moments (lambda_3, ..., lambda_n); implied size n = len + 2."""

    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) == 0:
            raise DomainError("moment sequence must contain at least lambda_3")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @classmethod
    def from_measure(cls, measure: LambdaMeasure, n: int) -> "MomentSequence":
        if n < 3:
            raise DomainError(f"need n >= 3, got {n}")
        return cls(tuple(moment(measure, k) for k in range(3, n + 1)))

    @property
    def n(self) -> int:
        return len(self.values) + 2

    def lam(self, k: int) -> float:
        """lambda_k with the convention lambda_2 = 1."""
        if k == 2:
            return 1.0
        if not 3 <= k <= self.n:
            raise DomainError(f"lambda_{k} not covered by a sequence of order {self.n}")
        return self.values[k - 3]

    def with_mass(self) -> np.ndarray:
        """Raw moment vector (m_0, ..., m_{n-2}) = (1, lambda_3, ..., lambda_n)."""
        return np.concatenate(([1.0], self.values))


def difference_table(seq: MomentSequence) -> list[np.ndarray]:
    """Iterated backward differences of (lambda_2, lambda_3, ...).

    Row j holds lambda_{k+j, k} for k = 2..n-j: the polynomial moments
    obtained from the alternating binomial transform, computed stably as
    repeated differences.
    """
    rows = [np.concatenate(([1.0], np.asarray(seq.values)))]
    while len(rows[-1]) > 1:
        prev = rows[-1]
        rows.append(prev[:-1] - prev[1:])
    return rows


def polynomial_moment_from_sequence(seq: MomentSequence, p: int, k: int) -> float:
    """lambda_{p,k} via the binomial transform of the monomial moments."""
    if k < 2 or k > p:
        raise DomainError(f"need 2 <= k <= p, got k={k}, p={p}")
    if p > seq.n:
        raise DomainError(f"lambda_{{{p},{k}}} needs moments up to order {p}, have {seq.n}")
    return float(difference_table(seq)[p - k][k - 2])


@dataclass(frozen=True)
class MonotonicityReport:
    ok: bool
    violations: tuple[tuple[int, int, float], ...]  # (m, k, lambda_{m,k})


def is_completely_monotonic(seq: MomentSequence, tol: float = 1e-12) -> MonotonicityReport:
    """Check every binomial transform lambda_{m,k} >= -tol, 2 <= k <= m <= n.

    The tolerance absorbs rounding; violations are reported with their values.
    """
    violations = []
    for j, row in enumerate(difference_table(seq)):
        for idx, val in enumerate(row):
            if val < -tol:
                k = idx + 2
                violations.append((k + j, k, float(val)))
    violations.sort()
    return MonotonicityReport(not violations, tuple(violations))


# --------------------------------------------------------------------------
# Orthogonal polynomials and Gauss rules from raw moments
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class OrthoRecurrence:
    """Three-term recurrence of the orthonormal family for the moment class.

    ``alpha[k]`` and ``beta[k]`` follow the Jacobi-matrix convention:
    beta[0] is the total mass and sqrt(beta[k]) (k >= 1) the off-diagonal
    entries. ``order`` is the largest usable Gauss order; ``degenerate``
    flags that the requested order exceeded the rank of the moment data
    (measure supported on fewer points).
    """

    alpha: tuple[float, ...]
    beta: tuple[float, ...]
    order: int
    degenerate: bool

    def evaluate(self, x) -> np.ndarray:
        """Orthonormal polynomial values phi_0..phi_order at x, stacked."""
        x = np.asarray(x, dtype=float)
        phis = [np.full_like(x, 1.0 / np.sqrt(self.beta[0]))]
        prev = np.zeros_like(x)
        for k in range(self.order):
            b_next = np.sqrt(self.beta[k + 1]) if k + 1 < len(self.beta) else None
            if b_next is None:
                break
            cur = phis[-1]
            nxt = ((x - self.alpha[k]) * cur - (np.sqrt(self.beta[k]) if k > 0 else 0.0) * prev) / b_next
            prev = cur
            phis.append(nxt)
        return np.stack(phis)


def _hankel_cholesky(moments: np.ndarray, size: int):
    """Partial Cholesky H = R^T R of the moment Hankel matrix.

    Returns (R, rank) where rank is the number of successful pivots; column
    ``rank`` keeps its above-diagonal entries so the recurrence extends to
    the maximal valid order.
    """
    r = np.zeros((size, size))
    rank = size
    for j in range(size):
        for i in range(j + 1):
            s = moments[i + j] - float(r[:i, i] @ r[:i, j])
            if i == j:
                if s <= DEGENERACY_PIVOT:
                    return r, j
                r[j, j] = np.sqrt(s)
            else:
                r[i, j] = s / r[i, i]
    return r, rank


def recurrence_coefficients(seq: MomentSequence, order: int | None = None) -> OrthoRecurrence:
    """Recurrence coefficients from raw moments via Hankel-Cholesky.

    The target order defaults to floor((n - 3) / 2), the largest order the
    sequence determines. Depends only on the sequence, hence constant on
    the moment class.
    """
    m_target = (seq.n - 3) // 2 if order is None else order
    if m_target < 1:
        raise DomainError(
            f"sequence of order {seq.n} determines no quadrature rule (need n >= 5)"
        )
    moments = seq.with_mass()
    if 2 * m_target > len(moments) - 1:
        raise DomainError(f"order {m_target} needs moments up to {2 * m_target + 2}")
    r, rank = _hankel_cholesky(moments, m_target + 1)
    m_eff = min(m_target, rank)
    degenerate = rank < m_target + 1
    if m_eff < 1:
        raise DomainError("moment sequence has no mass")
    alpha = np.empty(m_eff)
    beta = np.empty(m_eff)
    beta[0] = moments[0]
    for k in range(m_eff):
        left = r[k - 1, k] / r[k - 1, k - 1] if k > 0 else 0.0
        alpha[k] = r[k, k + 1] / r[k, k] - left
        if k > 0:
            beta[k] = (r[k, k] / r[k - 1, k - 1]) ** 2
    return OrthoRecurrence(tuple(alpha), tuple(beta), m_eff, degenerate)


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss rule: nodes in [0,1] and positive weights summing to the mass."""

    nodes: tuple[float, ...]
    weights: tuple[float, ...]
    degenerate: bool = False

    def __post_init__(self):
        if any(w < -1e-14 for w in self.weights):
            raise DomainError("quadrature weights must be nonnegative")

    @property
    def order(self) -> int:
        return len(self.nodes)

    def integrate_monomials(self, upto: int) -> np.ndarray:
        """Moments m_0..m_upto of the discrete measure carried by the rule."""
        xs = np.asarray(self.nodes)
        ws = np.asarray(self.weights)
        return np.array([float(ws @ xs**j) for j in range(upto + 1)])


def gauss_quadrature(seq: MomentSequence, order: int | None = None) -> QuadratureRule:
    """Gauss rule of the moment class: nodes are the top orthonormal
    polynomial's zeros (symmetric tridiagonal eigenvalues), weights the
    Christoffel numbers."""
    rec = recurrence_coefficients(seq, order)
    alpha = np.asarray(rec.alpha)
    offdiag = np.sqrt(np.asarray(rec.beta[1:]))
    if rec.order == 1:
        nodes, weights = np.array([alpha[0]]), np.array([rec.beta[0]])
    else:
        vals, vecs = eigh_tridiagonal(alpha, offdiag)
        nodes = vals
        weights = rec.beta[0] * vecs[0, :] ** 2
    if np.any(nodes < -1e-9) or np.any(nodes > 1 + 1e-9):
        raise DomainError("Gauss nodes escaped [0,1]; moment data inconsistent")
    nodes = np.clip(nodes, 0.0, 1.0)
    idx = np.argsort(nodes)
    return QuadratureRule(tuple(nodes[idx]), tuple(weights[idx]), rec.degenerate)


# --------------------------------------------------------------------------
# Cumulative-mass envelope at the Gauss nodes
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CumulativeBound:
    """Sharp two-sided bound: mass([0, node]) <= cumulative <= mass([0, next_node))."""

    node: float
    cumulative: float
    next_node: float


@dataclass(frozen=True)
class IntervalCap:
    """Per-interval mass cap between consecutive nodes (node_{m+1} := 1)."""

    lo: float
    hi: float
    cap: float


@dataclass(frozen=True)
class CmsEnvelope:
    rule: QuadratureRule
    cumulative: tuple[CumulativeBound, ...]
    interval_caps: tuple[IntervalCap, ...]

    def check_measure(self, measure: LambdaMeasure, tol: float = 1e-9) -> bool:
        """Whether the measure's distribution function satisfies every bound."""
        for b in self.cumulative:
            if measure.cdf(b.node, inclusive=True) > b.cumulative + tol:
                return False
            if b.cumulative > measure.cdf(b.next_node, inclusive=False) + tol:
                return False
        return True


def cms_envelope(seq: MomentSequence, order: int | None = None) -> CmsEnvelope:
    rule = gauss_quadrature(seq, order)
    xs = list(rule.nodes) + [1.0]
    cum = np.cumsum(rule.weights)
    bounds = tuple(
        CumulativeBound(xs[j], float(cum[j]), xs[j + 1]) for j in range(rule.order)
    )
    caps = [IntervalCap(0.0, xs[0], rule.weights[0])]
    for j in range(1, rule.order):
        caps.append(IntervalCap(xs[j - 1], xs[j], rule.weights[j - 1] + rule.weights[j]))
    caps.append(IntervalCap(xs[rule.order - 1], 1.0, rule.weights[rule.order - 1]))
    return CmsEnvelope(rule, bounds, tuple(caps))


# --------------------------------------------------------------------------
# Discrete measures and the interlaced pair
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finitely supported measure on [0,1]."""

    atoms: tuple[tuple[float, float], ...]  # (location, weight)

    def __post_init__(self):
        for x, w in self.atoms:
            if not 0.0 <= x <= 1.0:
                raise DomainError(f"atom location {x} outside [0,1]")
            if w < 0:
                raise DomainError("atom weights must be nonnegative")

    @property
    def total_mass(self) -> float:
        return float(sum(w for _, w in self.atoms))

    def moment(self, k: int) -> float:
        if k < 2:
            raise DomainError(f"moment index must be >= 2, got {k}")
        if k == 2:
            return self.total_mass
        return float(sum(w * x ** (k - 2) for x, w in self.atoms))

    def expectation(self, q) -> float:
        return float(sum(w * q(x) for x, w in self.atoms))


def tv_distance(a: DiscreteMeasure, b: DiscreteMeasure) -> float:
    """Total variation distance in the mass-of-difference convention
    (disjointly supported probability measures are at distance 2)."""
    support = sorted({x for x, _ in a.atoms} | {x for x, _ in b.atoms})
    wa = {x: 0.0 for x in support}
    wb = {x: 0.0 for x in support}
    for x, w in a.atoms:
        wa[x] += w
    for x, w in b.atoms:
        wb[x] += w
    return float(sum(abs(wa[x] - wb[x]) for x in support))


def interlaced_pair(seq: MomentSequence, order: int | None = None):
    """Two mutually singular measures compatible with the envelope.

    The Gauss weights are laid into the node intervals in two alternating
    patterns (atoms at interval midpoints), so both measures have total
    mass 1 while their supports are disjoint: total variation distance 2.
    """
    rule = gauss_quadrature(seq, order)
    m = rule.order
    if m < 2:
        raise DomainError("interlacing needs a rule of order >= 2")
    edges = [0.0] + list(rule.nodes) + [1.0]  # m + 1 intervals [edges[j], edges[j+1])
    mids = [(edges[j] + edges[j + 1]) / 2 for j in range(m + 1)]
    zeta = list(rule.weights)

    x_masses = [0.0] * (m + 1)
    y_masses = [0.0] * (m + 1)
    x_masses[0] = zeta[0]  # zeta_1 alone on [0, xi_1)
    j = 2
    while j + 1 <= m:
        x_masses[j] = zeta[j - 1] + zeta[j]  # zeta_j + zeta_{j+1} on interval j
        j += 2
    if m % 2 == 0:
        x_masses[m] = zeta[m - 1]  # leftover zeta_m on [xi_m, 1]
    j = 1
    while j + 1 <= m:
        y_masses[j] = zeta[j - 1] + zeta[j]
        j += 2
    if m % 2 == 1:
        y_masses[m] = zeta[m - 1]

    def build(masses):
        return DiscreteMeasure(
            tuple((mids[j], w) for j, w in enumerate(masses) if w > 0)
        )

    return build(x_masses), build(y_masses)


def canonical_representative(seq: MomentSequence, order: int | None = None) -> LambdaMeasure:
    """Atomic in-class representative: the Gauss rule read as a measure.

    Nodes indistinguishable from 0 become the atom at 0.
    """
    rule = gauss_quadrature(seq, order)
    mass_at_zero = 0.0
    atoms = []
    for x, w in zip(rule.nodes, rule.weights):
        if x < 1e-12:
            mass_at_zero += w
        else:
            atoms.append((float(x), float(w)))
    return LambdaMeasure(kingman_mass=mass_at_zero, atoms=tuple(atoms))
