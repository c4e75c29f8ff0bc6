"""Finite measures on [0,1] and the merger-rate algebra built on them.

A measure here plays the role of the mixing measure of an exchangeable
coalescent: its atom at zero drives pairwise mergers, while atoms and
density on (0,1] drive multiple mergers. Moments are indexed so that
``moment(m, k)`` is the integral of ``r**(k-2)``; the index matches the
merger size whose rate the moment controls.

The density part is a mixture of closed families (truncated normal
kernels on [eta, 1] and Beta(a, b) densities) so that all moments and
merger rates have exact expressions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import betainc, betaln, gammaln, ndtr, poch

from .exceptions import DomainError, NumericalError

DEFAULT_ETA = 1e-6

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _norm_pdf(z):
    return np.exp(-0.5 * np.asarray(z) ** 2) / _SQRT_2PI


@dataclass(frozen=True)
class TruncNormKernel:
    """Normal density centred at ``loc``, truncated to [eta, 1], renormalized."""

    loc: float
    sigma: float
    weight: float

    def __post_init__(self):
        if self.sigma <= 0:
            raise DomainError(f"kernel sigma must be positive, got {self.sigma}")
        if self.weight < 0:
            raise DomainError("kernel weight must be nonnegative")


@dataclass(frozen=True)
class BetaComponent:
    """``weight`` times the Beta(a, b) probability density on (0, 1)."""

    a: float
    b: float
    weight: float

    def __post_init__(self):
        if self.a <= 0 or self.b <= 0:
            raise DomainError("beta shape parameters must be positive")
        if self.weight < 0:
            raise DomainError("beta component weight must be nonnegative")


@dataclass(frozen=True)
class LambdaMeasure:
    """Finite measure on [0,1]: atom at 0, finite atoms, mixture density.

    ``validate()`` enforces the probability normalization required by the
    simulation and inference paths; construction itself allows any finite
    measure so that non-normalized textbook families remain representable.
    """

    kingman_mass: float = 0.0
    atoms: tuple[tuple[float, float], ...] = ()
    kernels: tuple[TruncNormKernel, ...] = ()
    betas: tuple[BetaComponent, ...] = ()
    eta: float = DEFAULT_ETA

    def __post_init__(self):
        if self.kingman_mass < 0:
            raise DomainError("mass of the atom at 0 must be nonnegative")
        if not 0 < self.eta < 1:
            raise DomainError(f"eta must lie in (0,1), got {self.eta}")
        for loc, w in self.atoms:
            if not 0 < loc <= 1:
                raise DomainError(f"atom location {loc} outside (0,1]")
            if w < 0:
                raise DomainError("atom weights must be nonnegative")
        for ker in self.kernels:
            if not self.eta <= ker.loc <= 1:
                raise DomainError(f"kernel location {ker.loc} outside [eta,1]")

    @property
    def density_mass(self) -> float:
        return sum(k.weight for k in self.kernels) + sum(b.weight for b in self.betas)

    @property
    def total_mass(self) -> float:
        return self.kingman_mass + sum(w for _, w in self.atoms) + self.density_mass

    def validate(self, tol: float = 1e-12) -> None:
        """Raise unless the measure is a probability measure."""
        if abs(self.total_mass - 1.0) > tol:
            raise DomainError(
                f"total mass {self.total_mass!r} differs from 1 by more than {tol}"
            )

    def atom_at(self, x: float) -> float:
        mass = self.kingman_mass if x == 0.0 else 0.0
        for loc, w in self.atoms:
            if loc == x:
                mass += w
        return mass

    def cdf(self, x: float, inclusive: bool = True) -> float:
        """Mass of [0, x] (or [0, x) when ``inclusive`` is false)."""
        if x < 0:
            return 0.0
        total = self.kingman_mass if (x > 0 or inclusive) else 0.0
        for loc, w in self.atoms:
            if loc < x or (inclusive and loc == x):
                total += w
        for b in self.betas:
            total += b.weight * betainc(b.a, b.b, min(max(x, 0.0), 1.0))
        for k in self.kernels:
            lo, hi = self.eta, 1.0
            if x >= lo:
                z = ndtr((min(x, hi) - k.loc) / k.sigma) - ndtr((lo - k.loc) / k.sigma)
                norm = ndtr((hi - k.loc) / k.sigma) - ndtr((lo - k.loc) / k.sigma)
                total += k.weight * z / norm
        return total

    def density(self, r) -> np.ndarray:
        """Lebesgue density of the continuous part, evaluated pointwise."""
        r = np.asarray(r, dtype=float)
        out = np.zeros_like(r)
        for b in self.betas:
            inside = (r > 0) & (r < 1)
            with np.errstate(divide="ignore", invalid="ignore"):
                vals = np.exp(
                    (b.a - 1) * np.log(r, where=inside, out=np.zeros_like(r))
                    + (b.b - 1) * np.log1p(-r, where=inside, out=np.zeros_like(r))
                    - betaln(b.a, b.b)
                )
            out += np.where(inside, b.weight * vals, 0.0)
        for k in self.kernels:
            norm = ndtr((1.0 - k.loc) / k.sigma) - ndtr((self.eta - k.loc) / k.sigma)
            inside = (r >= self.eta) & (r <= 1.0)
            out += np.where(
                inside,
                k.weight * _norm_pdf((r - k.loc) / k.sigma) / (k.sigma * norm),
                0.0,
            )
        return out


# --------------------------------------------------------------------------
# Standard families
# --------------------------------------------------------------------------


def kingman() -> LambdaMeasure:
    """Point mass at 0: pairwise mergers only."""
    return LambdaMeasure(kingman_mass=1.0)


def star() -> LambdaMeasure:
    """Point mass at 1: all lineages merge at once."""
    return LambdaMeasure(atoms=((1.0, 1.0),))


def bolthausen_sznitman() -> LambdaMeasure:
    """Uniform measure on [0,1]."""
    return LambdaMeasure(betas=(BetaComponent(1.0, 1.0, 1.0),))


uniform_measure = bolthausen_sznitman


def beta_measure(a: float, b: float, weight: float = 1.0) -> LambdaMeasure:
    return LambdaMeasure(betas=(BetaComponent(a, b, weight),))


def beta_coalescent(alpha: float) -> LambdaMeasure:
    """Beta(2 - alpha, alpha) measure, alpha in (0, 2)."""
    if not 0 < alpha < 2:
        raise DomainError(f"alpha must lie in (0,2), got {alpha}")
    return beta_measure(2.0 - alpha, alpha)


def eldon_wakeley(psi: float) -> LambdaMeasure:
    """Two-atom family: mass at 0 and at psi with weights 2, psi^2 (normalized)."""
    if not 0 < psi <= 1:
        raise DomainError(f"psi must lie in (0,1], got {psi}")
    denom = 2.0 + psi**2
    return LambdaMeasure(kingman_mass=2.0 / denom, atoms=((psi, psi**2 / denom),))


def durrett_schweinsberg(c: float) -> LambdaMeasure:
    """Atom at 0 plus the linear density (1-c)/2 * r dr.

    Note: as classically written this family has total mass (1+3c)/4, not 1;
    it is kept as-is so its moments match the textbook closed form (1-c)/(2k).
    """
    if not 0 <= c <= 1:
        raise DomainError(f"c must lie in [0,1], got {c}")
    return LambdaMeasure(kingman_mass=c, betas=(BetaComponent(2.0, 1.0, (1.0 - c) / 4.0),))


def kernel_mixture(locs, sigmas, weights, eta: float = DEFAULT_ETA) -> LambdaMeasure:
    kernels = tuple(
        TruncNormKernel(float(l), float(s), float(w))
        for l, s, w in zip(locs, sigmas, weights, strict=True)
    )
    return LambdaMeasure(kernels=kernels, eta=eta)


# --------------------------------------------------------------------------
# Truncated-normal moments
# --------------------------------------------------------------------------

_LEGENDRE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _leggauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    if n not in _LEGENDRE_CACHE:
        _LEGENDRE_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _LEGENDRE_CACHE[n]


def _truncnorm_window(loc: float, sigma: float, lo: float, hi: float, width: float = 9.0):
    """Sub-interval of [lo, hi] holding all but ~1e-18 of the kernel mass."""
    return max(lo, loc - width * sigma), min(hi, loc + width * sigma)


def truncated_normal_moment(
    loc: float,
    sigma: float,
    lo: float,
    hi: float,
    order: int,
    method: str = "auto",
) -> float:
    """E[X^order] for a normal(loc, sigma^2) truncated to [lo, hi].

    The two-term error-function recurrence is the closed form, but the true
    moment is its *minimal* solution, so running it forward blows up once
    order * sigma^2 is no longer small. ``method="auto"`` therefore uses the
    recurrence only inside its stable regime and otherwise integrates by
    Gauss-Legendre over the kernel's effective support (where the integrand
    is a low-degree polynomial times an analytic density, so 96 nodes reach
    machine accuracy). ``method="quadrature"`` forces the 64-node
    cross-check rule.
    """
    if order < 0:
        raise DomainError("moment order must be nonnegative")
    if not lo < hi:
        raise DomainError("need lo < hi")
    if sigma <= 0:
        raise DomainError("sigma must be positive")
    alpha = (lo - loc) / sigma
    beta = (hi - loc) / sigma
    z = ndtr(beta) - ndtr(alpha)
    if z <= 0:
        raise DomainError("truncation interval carries no mass")
    if method == "auto":
        method = "recurrence" if max(order - 1, 0) * sigma**2 <= 0.25 else "gauss96"
    if method in ("quadrature", "gauss96"):
        nodes = 64 if method == "quadrature" else 96
        wlo, whi = _truncnorm_window(loc, sigma, lo, hi)
        x, w = _leggauss(nodes)
        r = 0.5 * (whi - wlo) * x + 0.5 * (whi + wlo)
        pdf = _norm_pdf((r - loc) / sigma) / (sigma * z)
        return float(0.5 * (whi - wlo) * np.sum(w * r**order * pdf))
    if method != "recurrence":
        raise DomainError(f"unknown method {method!r}")
    pa, pb = _norm_pdf(alpha), _norm_pdf(beta)
    m_prev, m_cur = 0.0, 1.0  # M_{-1}, M_0
    for k in range(1, order + 1):
        boundary = (hi ** (k - 1) * pb - lo ** (k - 1) * pa) / z
        m_next = loc * m_cur + (k - 1) * sigma**2 * m_prev - sigma * boundary
        m_prev, m_cur = m_cur, m_next
    return float(m_cur)


# --------------------------------------------------------------------------
# Moments and merger rates
# --------------------------------------------------------------------------


def moment(measure: LambdaMeasure, k: int) -> float:
    """k-th merger-indexed moment: integral of r**(k-2) over (0,1], plus the
    atom at 0 for k = 2 (so k = 2 returns the total mass)."""
    if k < 2:
        raise DomainError(f"moment index must be >= 2, got {k}")
    if k == 2:
        return measure.total_mass
    acc = sum(w * loc ** (k - 2) for loc, w in measure.atoms)
    for b in measure.betas:
        acc += b.weight * poch(b.a, k - 2) / poch(b.a + b.b, k - 2)
    for ker in measure.kernels:
        acc += ker.weight * truncated_normal_moment(
            ker.loc, ker.sigma, measure.eta, 1.0, k - 2
        )
    return float(acc)


def polynomial_moment(measure: LambdaMeasure, p: int, k: int) -> float:
    """Rate factor for k of p blocks merging:
    ``1{k==2} * mass_at_0 + int (1-r)^(p-k) r^(k-2) over (0,1]``."""
    if k < 2 or k > p:
        raise DomainError(f"need 2 <= k <= p, got k={k}, p={p}")
    acc = measure.kingman_mass if k == 2 else 0.0
    for loc, w in measure.atoms:
        acc += w * (1.0 - loc) ** (p - k) * loc ** (k - 2)
    for b in measure.betas:
        acc += b.weight * math.exp(betaln(b.a + k - 2, b.b + p - k) - betaln(b.a, b.b))
    for ker in measure.kernels:
        wlo, whi = _truncnorm_window(ker.loc, ker.sigma, measure.eta, 1.0)
        x, w = _leggauss(96)
        r = 0.5 * (whi - wlo) * x + 0.5 * (whi + wlo)
        norm = ndtr((1.0 - ker.loc) / ker.sigma) - ndtr((measure.eta - ker.loc) / ker.sigma)
        pdf = _norm_pdf((r - ker.loc) / ker.sigma) / (ker.sigma * norm)
        acc += (
            ker.weight
            * 0.5
            * (whi - wlo)
            * float(np.sum(w * (1.0 - r) ** (p - k) * r ** (k - 2) * pdf))
        )
    return float(acc)


def total_merger_rate(measure: LambdaMeasure, n: int) -> float:
    """Total rate at which n blocks experience some merger."""
    if n < 2:
        raise DomainError(f"need at least 2 blocks, got {n}")
    return float(
        sum(math.comb(n, k) * polynomial_moment(measure, n, k) for k in range(2, n + 1))
    )


# --------------------------------------------------------------------------
# Two-allele stationary laws and their limiting posterior
# --------------------------------------------------------------------------


def _log_density_pairwise(theta: float, x):
    """log of the Beta(theta, theta) stationary density (pairwise-merger model)."""
    logc = gammaln(2 * theta) - 2 * gammaln(theta)
    with np.errstate(divide="ignore"):
        return logc + (theta - 1) * (np.log(x) + np.log1p(-x))


def _log_density_star(theta: float, x):
    """log of the star-model stationary density (1/theta)|1-2x|^((1-theta)/theta)."""
    with np.errstate(divide="ignore"):
        return -math.log(theta) + ((1 - theta) / theta) * np.log(np.abs(1 - 2 * np.asarray(x)))


def stationary_density_two_allele(which: str, theta: float, x) -> float:
    """Stationary allele-frequency density for the symmetric two-type model.

    ``which="kingman"`` gives the Beta(theta, theta) law of the diffusion
    limit; ``which="star"`` the law under simultaneous total mergers.
    """
    if theta <= 0:
        raise DomainError(f"theta must be positive, got {theta}")
    x = np.asarray(x, dtype=float)
    if np.any((x < 0) | (x > 1)):
        raise DomainError("x must lie in [0,1]")
    if which == "kingman":
        out = np.exp(_log_density_pairwise(theta, x))
    elif which == "star":
        out = np.exp(_log_density_star(theta, x))
    else:
        raise DomainError(f"unknown density {which!r}")
    return float(out) if out.ndim == 0 else out


def _posterior_mass_at_zero(theta: float, x):
    """P(pairwise model | x) under a 50/50 prior on {pairwise, star}."""
    log0 = _log_density_pairwise(theta, x)
    log1 = _log_density_star(theta, x)
    return 1.0 / (1.0 + np.exp(np.clip(log1 - log0, -700, 700)))


def expected_limiting_posterior(theta: float, generating: str, tol: float = 1e-8) -> float:
    """Average posterior weight on the pairwise model when frequencies are
    drawn from ``generating``'s stationary law.

    Both stationary densities are symmetric about 1/2, so the integral runs
    over [0, 1/2] with the endpoint singularities absorbed into algebraic
    quadrature weights (x^a at 0 for the pairwise law, (1/2 - x)^b at 1/2
    for the star law).
    """
    if theta <= 0:
        raise DomainError(f"theta must be positive, got {theta}")
    if generating == "kingman":
        logc = gammaln(2 * theta) - 2 * gammaln(theta)

        def f(x):
            return _posterior_mass_at_zero(theta, x) * math.exp(
                logc + (theta - 1) * math.log1p(-x)
            )

        wvar = (theta - 1.0, 0.0)
    elif generating == "star":
        power = (1.0 - theta) / theta
        scale = (2.0**power) / theta

        def f(x):
            return _posterior_mass_at_zero(theta, x) * scale

        wvar = (0.0, power)
    else:
        raise DomainError(f"unknown generating model {generating!r}")

    value, abserr = integrate.quad(
        f, 0.0, 0.5, weight="alg", wvar=wvar, epsabs=tol / 4, epsrel=tol / 4, limit=200
    )
    if abserr > tol:
        raise NumericalError(
            f"quadrature reached abs. error {abserr:.3e} > requested {tol:.3e}",
            achieved=abserr,
        )
    return 2.0 * value
