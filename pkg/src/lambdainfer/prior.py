"""Truncated stick-breaking mixture prior over merger measures.

A draw is a T-component mixture of truncated normal kernels on [eta, 1]:
locations uniform, kernel standard deviations Beta(1, 3), and weights from
stick-breaking with Beta(1, alpha0) sticks, the last weight absorbing the
residual. With T = 4 and alpha0 = 0.1 the truncation error of the full
stick-breaking construction is negligible (see truncation_error_bound).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DomainError
from .measures import DEFAULT_ETA, LambdaMeasure, TruncNormKernel
from .moments import MomentSequence
from .util import rng_from


@dataclass(frozen=True)
class PriorSpec:
    eta: float = DEFAULT_ETA
    truncation: int = 4
    alpha0: float = 0.1
    sigma_prior: tuple[float, float] = (1.0, 3.0)

    def __post_init__(self):
        if self.truncation < 1:
            raise DomainError("truncation level must be >= 1")
        if self.alpha0 <= 0:
            raise DomainError("base-measure mass must be positive")
        if not 0 < self.eta < 1:
            raise DomainError("eta must lie in (0,1)")

    @property
    def dim(self) -> int:
        """Free parameters: T locations, T sigmas, T-1 sticks."""
        return 3 * self.truncation - 1

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate-wise bounds of the parameter space."""
        t = self.truncation
        lo = np.concatenate([np.full(t, self.eta), np.zeros(t), np.zeros(t - 1)])
        hi = np.ones(3 * t - 1)
        return lo, hi


@dataclass(frozen=True)
class PriorParams:
    """One mixture: kernel locations, kernel sigmas, stick fractions."""

    locations: tuple[float, ...]
    sigmas: tuple[float, ...]
    sticks: tuple[float, ...]

    def __post_init__(self):
        if len(self.sticks) != len(self.locations) - 1 or len(self.sigmas) != len(
            self.locations
        ):
            raise DomainError("need T locations, T sigmas, and T-1 sticks")

    @property
    def weights(self) -> tuple[float, ...]:
        ws = []
        remaining = 1.0
        for v in self.sticks:
            ws.append(v * remaining)
            remaining *= 1.0 - v
        ws.append(remaining)
        return tuple(ws)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.locations, self.sigmas, self.sticks])

    @classmethod
    def from_vector(cls, vec, truncation: int = 4) -> "PriorParams":
        vec = np.asarray(vec, dtype=float)
        t = truncation
        if vec.shape != (3 * t - 1,):
            raise DomainError(f"parameter vector must have length {3 * t - 1}")
        return cls(tuple(vec[:t]), tuple(vec[t : 2 * t]), tuple(vec[2 * t :]))

    def measure(self, eta: float = DEFAULT_ETA) -> LambdaMeasure:
        kernels = tuple(
            TruncNormKernel(loc, max(sig, 1e-12), w)
            for loc, sig, w in zip(self.locations, self.sigmas, self.weights)
        )
        return LambdaMeasure(kernels=kernels, eta=eta)


def sample_prior(spec: PriorSpec, seed) -> PriorParams:
    rng = rng_from(seed)
    t = spec.truncation
    locations = spec.eta + (1.0 - spec.eta) * rng.random(t)
    sigmas = rng.beta(*spec.sigma_prior, size=t)
    sticks = rng.beta(1.0, spec.alpha0, size=t - 1)
    return PriorParams(tuple(locations), tuple(sigmas), tuple(sticks))


def log_prior_density(spec: PriorSpec, params: PriorParams) -> float:
    """Log density of the generative construction on its coordinate box.

    Measured against the stick coordinates directly, so Metropolis ratios
    over these coordinates need no Jacobian. Out-of-box points return -inf
    rather than raising. Points within 1e-15 of a stick's upper boundary are
    treated as outside: the Beta(1, alpha0) density diverges there for
    alpha0 < 1 and would otherwise inject +inf into acceptance ratios.
    """
    locs = np.asarray(params.locations)
    sigs = np.asarray(params.sigmas)
    sticks = np.asarray(params.sticks)
    if np.any(locs < spec.eta) or np.any(locs > 1.0):
        return -np.inf
    if np.any(sigs <= 0.0) or np.any(sigs > 1.0):
        return -np.inf
    if np.any(sticks < 0.0) or np.any(sticks >= 1.0 - 1e-15):
        return -np.inf
    if np.any(sigs >= 1.0 - 1e-15):
        return -np.inf
    a0 = spec.alpha0
    sa, sb = spec.sigma_prior
    from scipy.special import betaln

    out = -len(locs) * np.log(1.0 - spec.eta)
    out += np.sum(
        (sa - 1) * np.log(sigs) + (sb - 1) * np.log1p(-sigs) - betaln(sa, sb)
    )
    out += np.sum(np.log(a0) + (a0 - 1) * np.log1p(-sticks))
    return float(out)


def params_to_moments(spec: PriorSpec, params: PriorParams, n: int) -> MomentSequence:
    """Push a mixture forward to its truncated moment sequence."""
    if n < 3:
        raise DomainError(f"need n >= 3, got {n}")
    return MomentSequence.from_measure(params.measure(spec.eta), n)


# --------------------------------------------------------------------------
# Chain chart: sticks in their CDF coordinate
# --------------------------------------------------------------------------
#
# Beta(1, alpha0) with small alpha0 piles up against v = 1 (half its mass
# beyond 0.999 for alpha0 = 0.1) with an unbounded density, which freezes
# any fixed-scale random walk in v. The chain therefore moves the sticks in
# u = (1 - v)^alpha0, which the prior makes uniform on [0,1]; locations and
# sigmas keep their own coordinates.


def to_chain_vector(spec: PriorSpec, params: PriorParams) -> np.ndarray:
    t = spec.truncation
    vec = params.as_vector().copy()
    sticks = vec[2 * t :]
    vec[2 * t :] = np.power(1.0 - sticks, spec.alpha0)
    return vec


def from_chain_vector(spec: PriorSpec, vec) -> PriorParams:
    t = spec.truncation
    vec = np.asarray(vec, dtype=float).copy()
    u = np.clip(vec[2 * t :], 0.0, 1.0)
    with np.errstate(divide="ignore"):
        vec[2 * t :] = -np.expm1(np.log(u) / spec.alpha0)  # 1 - u^(1/alpha0)
    vec[2 * t :][u == 0.0] = 1.0
    return PriorParams.from_vector(vec, t)


def log_prior_density_chain(spec: PriorSpec, vec) -> float:
    """Prior log density with respect to the chain coordinates.

    Locations and stick coordinates are uniform on their boxes; only the
    sigma coordinates contribute a non-constant term.
    """
    t = spec.truncation
    vec = np.asarray(vec, dtype=float)
    locs = vec[:t]
    sigs = vec[t : 2 * t]
    u = vec[2 * t :]
    if np.any(locs < spec.eta) or np.any(locs > 1.0):
        return -np.inf
    if np.any(sigs <= 0.0) or np.any(sigs >= 1.0):
        return -np.inf
    if np.any(u < 0.0) or np.any(u > 1.0):
        return -np.inf
    sa, sb = spec.sigma_prior
    from scipy.special import betaln

    out = -t * np.log(1.0 - spec.eta)
    out += np.sum((sa - 1) * np.log(sigs) + (sb - 1) * np.log1p(-sigs) - betaln(sa, sb))
    return float(out)


def truncation_error_bound(spec: PriorSpec, data_size: int) -> float:
    """Total-variation error of truncating the stick-breaking construction
    at T atoms, for a dataset of the given size: 4 N exp(-(T-1)/alpha0)."""
    if data_size < 0:
        raise DomainError("data size must be nonnegative")
    return 4.0 * data_size * float(np.exp(-(spec.truncation - 1) / spec.alpha0))
