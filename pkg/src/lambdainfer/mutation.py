"""Finite-alleles mutation models: transition kernels and stationary laws.

Two concrete models: an arbitrary stochastic matrix over d types, and the
multi-locus binary model where each mutation flips one uniformly chosen
locus. The latter factorizes over loci, which the likelihood machinery
exploits; its dense matrix is only materialized on request.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np

from .exceptions import DomainError


class MutationModel:
    """Shared interface: d types, total rate theta, kernel M, stationary m."""

    d: int
    theta: float

    @property
    def matrix(self) -> np.ndarray:
        raise NotImplementedError

    @property
    def stationary(self) -> np.ndarray:
        raise NotImplementedError

    def mutate(self, type_idx: int, rng: np.random.Generator) -> int:
        """One mutation step from the kernel row of ``type_idx``."""
        raise NotImplementedError

    def in_edges(self, type_idx: int) -> list[tuple[int, float]]:
        """Possible pre-mutation types: pairs (j, M[j, type_idx]) with
        positive kernel weight."""
        raise NotImplementedError

    def transition(self, t: float) -> np.ndarray:
        """exp(theta * t * (M - I)): type transition over a branch of length t."""
        raise NotImplementedError

    def label(self, type_idx: int) -> str:
        raise NotImplementedError

    def index(self, label: str) -> int:
        raise NotImplementedError

    def sample_stationary(self, rng: np.random.Generator) -> int:
        return int(rng.choice(self.d, p=self.stationary))


class GeneralMutationModel(MutationModel):
    def __init__(self, matrix, theta: float, labels: tuple[str, ...] | None = None):
        matrix = np.asarray(matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DomainError("mutation matrix must be square")
        if np.any(matrix < 0) or np.any(np.abs(matrix.sum(axis=1) - 1.0) > 1e-12):
            raise DomainError("mutation matrix rows must be probability vectors")
        if theta < 0:
            raise DomainError(f"theta must be nonnegative, got {theta}")
        self._matrix = matrix
        self.theta = float(theta)
        self.d = matrix.shape[0]
        self._labels = labels or tuple(str(i) for i in range(self.d))
        if len(self._labels) != self.d:
            raise DomainError("need one label per type")

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @cached_property
    def stationary(self) -> np.ndarray:
        # left Perron vector of M; uniqueness assumed, positivity checked
        vals, vecs = np.linalg.eig(self._matrix.T)
        idx = int(np.argmin(np.abs(vals - 1.0)))
        if abs(vals[idx] - 1.0) > 1e-8:
            raise DomainError("mutation matrix has no eigenvalue 1")
        m = np.real(vecs[:, idx])
        m = m / m.sum()
        if np.any(m <= 0):
            raise DomainError("stationary distribution must be strictly positive")
        if np.max(np.abs(m @ self._matrix - m)) > 1e-10:
            raise DomainError("stationary distribution check failed")
        return m

    @cached_property
    def _generator_eig(self):
        vals, vecs = np.linalg.eig(self._matrix - np.eye(self.d))
        return vals, vecs, np.linalg.inv(vecs)

    def transition(self, t: float) -> np.ndarray:
        vals, vecs, inv = self._generator_eig
        p = (vecs * np.exp(self.theta * t * vals)) @ inv
        p = np.real(p)
        np.clip(p, 0.0, None, out=p)
        return p / p.sum(axis=1, keepdims=True)

    def mutate(self, type_idx: int, rng: np.random.Generator) -> int:
        return int(rng.choice(self.d, p=self._matrix[type_idx]))

    def in_edges(self, type_idx: int) -> list[tuple[int, float]]:
        col = self._matrix[:, type_idx]
        return [(j, float(col[j])) for j in np.nonzero(col > 0)[0]]

    def label(self, type_idx: int) -> str:
        return self._labels[type_idx]

    def index(self, label: str) -> int:
        try:
            return self._labels.index(label)
        except ValueError:
            raise DomainError(f"unknown haplotype label {label!r}") from None


def parent_independent(d: int, theta: float) -> GeneralMutationModel:
    """Every mutation resamples the type uniformly (M_ij = 1/d)."""
    if d < 2:
        raise DomainError("need at least two types")
    return GeneralMutationModel(np.full((d, d), 1.0 / d), theta)


class BinaryLociModel(MutationModel):
    """L binary loci; a mutation flips one uniformly chosen locus.

    Types are length-L bitstrings encoded as integers (locus 0 is the
    leftmost character of the label). The flip processes at distinct loci
    are independent, each running at rate theta / L, so branch transition
    probabilities factorize per locus:

        P(same)  = (1 + exp(-2 theta t / L)) / 2
        P(differ) = (1 - exp(-2 theta t / L)) / 2
    """

    def __init__(self, loci: int, theta: float):
        if loci < 1:
            raise DomainError("need at least one locus")
        if theta < 0:
            raise DomainError(f"theta must be nonnegative, got {theta}")
        self.loci = int(loci)
        self.theta = float(theta)
        self.d = 2**self.loci

    @cached_property
    def matrix(self) -> np.ndarray:
        m = np.zeros((self.d, self.d))
        for i in range(self.d):
            for locus in range(self.loci):
                m[i, i ^ (1 << locus)] = 1.0 / self.loci
        return m

    @cached_property
    def stationary(self) -> np.ndarray:
        return np.full(self.d, 1.0 / self.d)

    def locus_transition(self, t) -> tuple[np.ndarray, np.ndarray]:
        """(P(same), P(differ)) per locus for branch length(s) t."""
        decay = np.exp(-2.0 * self.theta * np.asarray(t, dtype=float) / self.loci)
        return (1.0 + decay) / 2.0, (1.0 - decay) / 2.0

    def transition(self, t: float) -> np.ndarray:
        ps, pd = self.locus_transition(float(t))
        single = np.array([[ps, pd], [pd, ps]])
        out = np.ones((1, 1))
        for _ in range(self.loci):
            out = np.kron(out, single)
        return out

    def mutate(self, type_idx: int, rng: np.random.Generator) -> int:
        return type_idx ^ (1 << int(rng.integers(self.loci)))

    def in_edges(self, type_idx: int) -> list[tuple[int, float]]:
        return [(type_idx ^ (1 << l), 1.0 / self.loci) for l in range(self.loci)]

    def label(self, type_idx: int) -> str:
        return format(type_idx, f"0{self.loci}b")

    def index(self, label: str) -> int:
        if len(label) != self.loci or set(label) - {"0", "1"}:
            raise DomainError(f"haplotype {label!r} is not a {self.loci}-locus bitstring")
        return int(label, 2)

    def sample_stationary(self, rng: np.random.Generator) -> int:
        return int(rng.integers(self.d))

    def bits(self, type_idx: int) -> np.ndarray:
        return np.array([(type_idx >> (self.loci - 1 - i)) & 1 for i in range(self.loci)])
