"""Limiting minimization: obstacle problem, its dual, vorticity and critical fields.

For an applied-field ratio ``lam`` the minimizer of the limiting energy is
described by ``h_* >= psi = 1 - p / (2 lam)`` minimizing the London energy
with unit boundary data.  The vorticity is the residual
``mu_* = -div(grad h_* / p) + h_*`` and lives on the coincidence set where
``h_*`` touches ``psi``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .elliptic import DEFAULT_OMEGA, DEFAULT_TOL, SolveStats, psor_solve
from .errors import ConvergenceError, GeometryError, ParameterError
from .fields import DiscreteMeasure, energy_E_lambda, london_operator, solve_h0
from .geometry import Grid2D

log = logging.getLogger(__name__)


@dataclass
class ObstacleSolution:
    lam: float
    h_star: np.ndarray
    mu_star: DiscreteMeasure
    w1: np.ndarray
    w2: np.ndarray
    psi: np.ndarray
    coincidence_tol: float
    stats: SolveStats

    @property
    def coincidence(self) -> np.ndarray:
        return self.w1 | self.w2

    def summary(self, p=None) -> dict:
        row = {
            "lambda": float(self.lam),
            "mu_mass": self.mu_star.total_variation(),
            "w1_cells": int(self.w1.sum()),
            "w2_cells": int(self.w2.sum()),
            "iters": int(self.stats.iterations),
        }
        if p is not None:
            row["E_lambda"] = energy_E_lambda(self.mu_star.grid, p, self.lam, self.mu_star,
                                              h_mu=self.h_star)
        return row


@dataclass(frozen=True)
class CriticalLambdas:
    lambda1: float
    lambda2: float
    lambda0: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "lambda0", min(self.lambda1, self.lambda2))

    def as_dict(self) -> dict:
        return {"lambda1": self.lambda1, "lambda2": self.lambda2, "lambda0": self.lambda0}


def obstacle(p, lam):
    """Lower bound ``1 - p / (2 lam)`` for the field."""
    if not lam > 0:
        raise ParameterError("lambda must be positive")
    return 1.0 - np.asarray(p) / (2.0 * lam)


def solve_obstacle(grid: Grid2D, p, lam: float, omega: float = DEFAULT_OMEGA,
                   tol: float = DEFAULT_TOL, x0=None, max_iter=None) -> ObstacleSolution:
    """Minimize the London energy with unit boundary data above ``1 - p/(2 lam)``.

    The warm start ``x0`` (default: the vortex-free field) is projected onto
    the constraint before iterating.
    """
    p = np.asarray(p, dtype=float)
    psi = obstacle(p, lam)
    op = london_operator(grid, 1.0 / p, 1.0)
    if x0 is None:
        x0 = solve_h0(grid, p)
    h_star, stats = psor_solve(op, None, lower=psi, omega=omega, tol=tol,
                               x0=np.maximum(x0, psi), max_iter=max_iter)
    mu = DiscreteMeasure(grid, op.apply(h_star))
    ctol = 1e-6 * (1.0 + np.abs(psi).max())
    touching = h_star - psi <= ctol
    return ObstacleSolution(lam, h_star, mu, touching & grid.s1, touching & grid.s2,
                            psi, ctol, stats)


def solve_dual(grid: Grid2D, p, lam: float, omega: float = DEFAULT_OMEGA,
               tol: float = DEFAULT_TOL, x0=None, max_iter=None):
    """Minimize ``sum |grad v|^2/p + v^2 + 2v`` over zero-trace ``v`` with ``|v| <= p/(2 lam)``.

    The linear term enters the right-hand side as ``-1``.  Returns ``(v, stats)``.
    """
    p = np.asarray(p, dtype=float)
    bound = p / (2.0 * lam)
    op0 = london_operator(grid, 1.0 / p, 0.0)
    return psor_solve(op0, -np.ones(grid.n), lower=-bound, upper=bound, omega=omega,
                      tol=tol, x0=x0, max_iter=max_iter)


def interface_values(grid: Grid2D, p, h):
    """Values of ``h`` on the interface, one per face joining an S1 node to an S2 node.

    The crossing point is placed by the nodes' distances to the interface and
    the value there is the flux-continuous interpolant: for conductivities
    ``c = 1/p`` and crossing fraction ``t`` from node ``i``,
    ``h_I = (c_i (1 - t) h_i + c_j t h_j) / (c_i (1 - t) + c_j t)``.
    """
    p = np.asarray(p, dtype=float)
    h = np.asarray(h, dtype=float)
    op = london_operator(grid, 1.0 / p, 1.0)
    i, j = op.face_i, op.face_j
    inner = j >= 0
    i, j = i[inner], j[inner]
    tags = grid.tags
    cut = tags[i] != tags[j]
    i, j = i[cut], j[cut]
    d = grid.interface_distance
    t = d[i] / np.maximum(d[i] + d[j], 1e-300)
    ci, cj = 1.0 / p[i], 1.0 / p[j]
    wi, wj = ci * (1.0 - t), cj * t
    return (wi * h[i] + wj * h[j]) / (wi + wj)


def critical_lambdas(grid: Grid2D, p, h0, closure: str = "interface") -> CriticalLambdas:
    """Critical ratios ``1 / (2 max over closure(S_i) of (1 - h0)/p)``.

    ``closure="interface"`` adds the interface values of :func:`interface_values`
    to each region's nodes.  ``closure="nodes"`` instead adds the nodes of the
    other region that are 4-adjacent to it, evaluated with this region's
    pinning value; that rule is first order in ``h`` and biased low.
    """
    p = np.asarray(p)
    h0 = np.asarray(h0)
    s1, s2 = grid.s1, grid.s2
    if not s1.any() or not s2.any():
        raise GeometryError("both regions need at least one node")
    p1 = float(p[s1][0])
    p2 = float(p[s2][0])
    if closure == "interface":
        h_int = interface_values(grid, p, h0)
        vals1 = np.concatenate([h0[s1], h_int])
        vals2 = np.concatenate([h0[s2], h_int])
    elif closure == "nodes":
        vals1 = h0[s1 | (s2 & grid.neighbours(s1))]
        vals2 = h0[s2 | (s1 & grid.neighbours(s2))]
    else:
        raise ParameterError(f"unknown closure rule {closure!r}")
    m1 = np.max((1.0 - vals1) / p1)
    m2 = np.max((1.0 - vals2) / p2)
    return CriticalLambdas(float(1.0 / (2.0 * m1)), float(1.0 / (2.0 * m2)))


def interior_coincidence(grid: Grid2D, sol: ObstacleSolution, depth: int = 2) -> np.ndarray:
    """Coincidence nodes whose ``depth``-cell square neighbourhood lies in the same region's set."""
    masks = []
    for w in (sol.w1, sol.w2):
        img = grid.to_image(w.astype(float), fill=0.0) > 0
        keep = img.copy()
        for dj in range(-depth, depth + 1):
            for di in range(-depth, depth + 1):
                keep &= np.roll(np.roll(img, dj, axis=0), di, axis=1)
        masks.append(keep[grid.ij])
    return masks[0] | masks[1]


@dataclass
class SweepResult:
    rows: list
    violations: int
    nested: bool
    failed_at: float | None = None
    solutions: list = field(default_factory=list, repr=False)

    def as_dict(self) -> dict:
        return {"rows": self.rows,
                "monotonicity": {"violations": self.violations, "nested": self.nested},
                "failed_at": self.failed_at}


def sweep_lambda(grid: Grid2D, p, lambdas, omega: float = DEFAULT_OMEGA,
                 tol: float = DEFAULT_TOL, warm_start: bool = True,
                 keep_solutions: bool = False, critical: CriticalLambdas | None = None) -> SweepResult:
    """Solve the obstacle problem along an ascending list of ratios.

    Each row carries ``lambda, mu_mass, w1_cells, w2_cells, E_lambda, iters``.
    Rows within about one cell width of the threshold are flagged
    ``near_threshold`` since set detection there is resolution limited.
    A failing solve stops the sweep; completed rows are kept and
    ``failed_at`` records the offending ratio.
    """
    lambdas = [float(l) for l in lambdas]
    if any(b < a for a, b in zip(lambdas, lambdas[1:])):
        raise ParameterError("lambda list must be sorted ascending")
    p = np.asarray(p, dtype=float)
    h0 = solve_h0(grid, p)
    if critical is None:
        critical = critical_lambdas(grid, p, h0)
    rows, sols = [], []
    prev_w, prev_h = None, h0
    violations = 0
    failed_at = None
    for lam in lambdas:
        try:
            sol = solve_obstacle(grid, p, lam, omega=omega, tol=tol,
                                 x0=prev_h if warm_start else h0)
        except ConvergenceError:
            log.error("obstacle solve failed at lambda=%g", lam)
            failed_at = lam
            break
        row = sol.summary(p)
        row["near_threshold"] = bool(abs(lam / critical.lambda0 - 1.0) < 2 * grid.h)
        w = sol.coincidence
        if prev_w is not None:
            bad = int(np.sum(prev_w & ~w))
            violations += bad
            row["nesting_violations"] = bad
        rows.append(row)
        if keep_solutions:
            sols.append(sol)
        prev_w, prev_h = w, sol.h_star
    return SweepResult(rows, violations, violations == 0, failed_at, sols)


def minimality_probe(grid: Grid2D, p, lam: float, trial_measures, solution: ObstacleSolution | None = None,
                     tol: float = DEFAULT_TOL) -> dict:
    """Compare the limiting energy of ``mu_*`` with that of trial measures.

    Trials are evaluated with the same discrete functional as ``mu_*``, so
    the allowance only covers the solver tolerance; the discretization term
    is recorded as zero.
    """
    p = np.asarray(p, dtype=float)
    if solution is None:
        solution = solve_obstacle(grid, p, lam, tol=tol)
    e_star = energy_E_lambda(grid, p, lam, solution.mu_star)
    slack_solver = 10.0 * tol * max(1.0, abs(e_star))
    slack_h = 0.0
    energies = [energy_E_lambda(grid, p, lam, mu) for mu in trial_measures]
    gaps = [e - e_star for e in energies]
    violations = sum(g < -(slack_solver + slack_h) for g in gaps)
    return {"lambda": lam, "E_star": e_star, "trial_energies": energies,
            "min_gap": min(gaps) if gaps else None, "violations": int(violations),
            "slack": {"solver": slack_solver, "discretization": slack_h}}
