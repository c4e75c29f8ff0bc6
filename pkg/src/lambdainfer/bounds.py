"""Extremizing expectation functionals over moment-constrained measures.

A credible box on selected moments translates into linear constraints
``(-1)^sign * lambda_i <= c`` on measures over [0,1]. For functionals
``F(measure) = E[q]`` the extrema over all satisfying measures are attained
on discrete measures with at most (#constraints + 1) atoms, so a linear
program over atom weights on a location grid finds them globally; a local
pass then polishes the atom locations off-grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog, minimize

from .exceptions import DomainError, InfeasibleConstraints
from .mcmc import credible_interval
from .measures import DEFAULT_ETA
from .moments import DiscreteMeasure

CONSTRAINT_TOL = 1e-9


@dataclass(frozen=True)
class MomentConstraint:
    """One linear inequality (-1)^sign * lambda_index <= bound."""

    index: int  # moment index, >= 3
    sign: int  # 0: upper bound on lambda_i; 1: lower bound (negated)
    bound: float

    def __post_init__(self):
        if self.index < 3:
            raise DomainError("moment constraints start at lambda_3")
        if self.sign not in (0, 1):
            raise DomainError("sign must be 0 or 1")

    def row(self, locations: np.ndarray) -> np.ndarray:
        """Coefficients of the constraint in the atom weights."""
        sgn = -1.0 if self.sign else 1.0
        return sgn * locations ** (self.index - 2)

    def satisfied_by(self, nu: DiscreteMeasure, tol: float = CONSTRAINT_TOL) -> bool:
        sgn = -1.0 if self.sign else 1.0
        return sgn * nu.moment(self.index) <= self.bound + tol


def constraints_from_samples(traces, level: float, indices) -> list[MomentConstraint]:
    """Two-sided box constraints from marginal credible intervals.

    ``traces`` maps moment index -> sample trace of that moment.
    """
    out = []
    for idx in indices:
        if idx not in traces:
            raise DomainError(f"no trace supplied for lambda_{idx}")
        lo, hi = credible_interval(np.asarray(traces[idx]), level)
        out.append(MomentConstraint(idx, 0, hi))
        out.append(MomentConstraint(idx, 1, -lo))
    return out


def evaluate_functional(q, nu: DiscreteMeasure) -> float:
    """E_nu[q] for a finitely supported measure."""
    return nu.expectation(q)


@dataclass(frozen=True)
class ExtremizeResult:
    value: float
    witness: DiscreteMeasure
    mode: str


def _solve_weights(q_vals, rows, bounds_vec, locations, mode):
    c = q_vals if mode == "min" else -q_vals
    res = linprog(
        c,
        A_ub=rows if rows.size else None,
        b_ub=bounds_vec if rows.size else None,
        A_eq=np.ones((1, len(locations))),
        b_eq=np.array([1.0]),
        bounds=(0.0, None),
        method="highs-ds",
        # default feasibility (1e-7) is looser than the witness contract
        options={
            "primal_feasibility_tolerance": 1e-10,
            "dual_feasibility_tolerance": 1e-10,
        },
    )
    return res


def extremize(
    q,
    constraints,
    mode: str = "min",
    grid_size: int = 1000,
    refine: bool = True,
) -> ExtremizeResult:
    """Extremize E[q] over probability measures meeting the constraints.

    Phase 1 solves the weight LP on a uniform location grid (basic optimal
    solutions carry at most #constraints + 1 atoms). Phase 2 perturbs the
    witness's atom locations, re-solving the small weight LP, until the
    improvement falls below 1e-9.
    """
    if mode not in ("min", "max"):
        raise DomainError(f"mode must be 'min' or 'max', got {mode!r}")
    if grid_size < 2:
        raise DomainError("grid needs at least two points")
    constraints = list(constraints)
    grid = np.linspace(0.0, 1.0, grid_size)
    q_vec = np.vectorize(q, otypes=[float])
    rows = np.array([c.row(grid) for c in constraints]) if constraints else np.empty((0, grid_size))
    bvec = np.array([c.bound for c in constraints])
    res = _solve_weights(q_vec(grid), rows, bvec, grid, mode)
    if res.status == 2:
        raise InfeasibleConstraints("no probability measure satisfies the constraints")
    if not res.success:
        raise InfeasibleConstraints(f"weight LP failed: {res.message}")
    locations = grid[res.x > 1e-12]
    weights = res.x[res.x > 1e-12]
    # objective value in "minimize" orientation regardless of mode
    best_val = float(res.fun)

    def solve_at(positions):
        positions = np.clip(np.atleast_1d(positions), 0.0, 1.0)
        rws = (
            np.array([c.row(positions) for c in constraints])
            if constraints
            else np.empty((0, len(positions)))
        )
        return positions, _solve_weights(q_vec(positions), rws, bvec, positions, mode)

    if refine and len(locations):

        def objective(positions):
            _, sub = solve_at(positions)
            return float(sub.fun) if sub.success else math.inf

        current = locations.copy()
        for _ in range(40):
            trial = minimize(
                objective,
                current,
                method="Nelder-Mead",
                options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 400},
            )
            if trial.success is not None and trial.fun < best_val - 1e-9:
                best_val = float(trial.fun)
                current = np.clip(trial.x, 0.0, 1.0)
            else:
                break
        positions, final = solve_at(current)
        if final.success and float(final.fun) <= best_val + 1e-12:
            locations = positions[final.x > 1e-12]
            weights = final.x[final.x > 1e-12]
            best_val = float(final.fun)

    value = best_val if mode == "min" else -best_val
    keep = np.asarray(weights) > 1e-10
    locations = np.asarray(locations)[keep]
    weights = np.asarray(weights)[keep]
    weights = weights / weights.sum()
    witness = DiscreteMeasure(
        tuple((float(x), float(w)) for x, w in zip(locations, weights))
    )
    for c in constraints:
        if not c.satisfied_by(witness):
            raise InfeasibleConstraints(
                f"witness violates {c} by more than {CONSTRAINT_TOL}"
            )
    return ExtremizeResult(value, witness, mode)


def kingman_test(trace, level: float, eta: float = DEFAULT_ETA, tol: float = 0.05) -> bool:
    """Whether pure pairwise merging is compatible with the trace.

    True when the lower end of the central credible interval on lambda_3 is
    indistinguishable from the support floor eta. The floor itself is
    unattainable for mixtures with positive spread, so ``tol`` sets the
    resolution margin above it.
    """
    lo, _ = credible_interval(trace, level)
    return lo <= max(eta, tol)
