import numpy as np
import pytest

from mesovortex.acceptance import SQUARE_8, random_trials
from mesovortex.elliptic import complementarity_violation
from mesovortex.errors import ParameterError
from mesovortex.fields import DiscreteMeasure, energy_E_lambda, london_operator, solve_h0
from mesovortex.geometry import DomainSpec, build_grid, pinning_field
from mesovortex.obstacle import (critical_lambdas, interface_values, interior_coincidence,
                                 minimality_probe, obstacle, solve_dual, solve_obstacle,
                                 sweep_lambda)
from mesovortex.oracles import active_set_obstacle, dense_system
from mesovortex.radial import RadialParams, radial_lambdas

from conftest import disc


@pytest.fixture(scope="module")
def setup32():
    grid, p = disc(32)
    h0 = solve_h0(grid, p)
    return grid, p, h0, critical_lambdas(grid, p, h0)


def test_obstacle_bound():
    assert np.allclose(obstacle(np.array([1.0, 2.0]), 2.0), [0.75, 0.5])
    with pytest.raises(ParameterError):
        obstacle(1.0, 0.0)


def test_below_threshold_no_vortices(setup32):
    grid, p, h0, crit = setup32
    sol = solve_obstacle(grid, p, 0.9 * crit.lambda0)
    assert np.max(np.abs(sol.h_star - h0)) < 1e-7
    assert sol.mu_star.total_variation() < 1e-5
    assert not sol.coincidence.any()


def test_above_threshold_vortices(setup32):
    grid, p, h0, crit = setup32
    sol = solve_obstacle(grid, p, 1.5 * crit.lambda0)
    assert sol.mu_star.total_variation() > 0
    assert sol.coincidence.any()
    assert not np.any(sol.w1 & ~grid.s1) and not np.any(sol.w2 & ~grid.s2)
    assert np.all(sol.h_star >= sol.psi - 1e-12)
    # mu is supported on the coincidence set and satisfies the PDE elsewhere
    free = ~sol.coincidence
    assert np.max(np.abs(sol.mu_star.density[free])) < 1e-5
    assert sol.mu_star.density.min() > -1e-6


def test_complementarity_and_interior_density(setup32):
    grid, p, h0, crit = setup32
    sol = solve_obstacle(grid, p, 3.0 * crit.lambda0)
    op = london_operator(grid, 1.0 / p, 1.0)
    assert complementarity_violation(op, sol.h_star, None, lower=sol.psi) < 1e-7
    deep = interior_coincidence(grid, sol, depth=2)
    assert deep.any()
    mu = sol.mu_star.density
    # on a plateau the operator reduces to the identity
    assert np.allclose(mu[deep], sol.psi[deep], atol=1e-6)


def test_dual_gap_and_bounds(setup32):
    grid, p, h0, crit = setup32
    lam = 1.5 * crit.lambda0
    sol = solve_obstacle(grid, p, lam, tol=1e-10)
    v, _ = solve_dual(grid, p, lam, tol=1e-10)
    assert np.all(np.abs(v) <= p / (2 * lam) + 1e-14)
    assert np.max(np.abs(sol.h_star - 1.0 - v)) < 1e-8


def test_dual_small_lambda(setup32):
    grid, p, h0, crit = setup32
    v, _ = solve_dual(grid, p, 0.5 * crit.lambda0, tol=1e-11)
    assert np.max(np.abs(v - (h0 - 1.0))) < 1e-9


def test_plateau_value(setup32):
    grid, p, h0, crit = setup32
    lam = 3.0 * crit.lambda0
    sol = solve_obstacle(grid, p, lam)
    assert np.allclose(sol.h_star[sol.w1], 1 - p[sol.w1] / (2 * lam), atol=1e-6)
    assert np.allclose(sol.h_star[sol.w2], 1 - p[sol.w2] / (2 * lam), atol=1e-6)


def test_matches_enumeration_oracle():
    grid = build_grid(SQUARE_8)
    p = pinning_field(grid)
    crit = critical_lambdas(grid, p, solve_h0(grid, p))
    lam = 1.95 * crit.lambda0
    A, b = dense_system(grid, 1.0 / p, 1.0)
    x, active, tried = active_set_obstacle(A, b, obstacle(p, lam))
    sol = solve_obstacle(grid, p, lam, tol=1e-13)
    assert tried > 1 and active.any()
    assert np.max(np.abs(sol.h_star - x)) < 1e-10


def test_degenerate_threshold():
    # p = 1: lambda0 = 1 / (2 (1 - min h0)), with min h0 -> 1/I0(1)
    spec = DomainSpec(a=1.0, allow_degenerate=True, nx=129, ny=129)
    grid = build_grid(spec)
    p = pinning_field(grid)
    crit = critical_lambdas(grid, p, solve_h0(grid, p))
    assert crit.lambda1 == pytest.approx(2.380, rel=0.01)
    assert crit.lambda0 == min(crit.lambda1, crit.lambda2)


def test_critical_lambdas_vs_radial():
    grid, p = disc(256, a=0.5, R=0.6)
    crit = critical_lambdas(grid, p, solve_h0(grid, p))
    ref = radial_lambdas(RadialParams(0.6, 0.5))
    assert crit.lambda1 == pytest.approx(ref.lambda1, rel=0.02)
    assert crit.lambda2 == pytest.approx(ref.lambda2, rel=0.02)


def test_closure_options(setup32):
    grid, p, h0, _ = setup32
    new = critical_lambdas(grid, p, h0)
    old = critical_lambdas(grid, p, h0, closure="nodes")
    assert old.lambda0 <= new.lambda0
    with pytest.raises(ParameterError):
        critical_lambdas(grid, p, h0, closure="edges")


def test_interface_values_bracketed(setup32):
    grid, p, h0, _ = setup32
    vals = interface_values(grid, p, h0)
    assert len(vals) > 0
    lo, hi = h0.min(), h0.max()
    assert np.all((vals >= lo) & (vals <= hi))
    const = interface_values(grid, p, np.full(grid.n, 0.7))
    assert np.allclose(const, 0.7)


def test_threshold_separates_mass():
    grid, p = disc(64)
    crit = critical_lambdas(grid, p, solve_h0(grid, p))
    below = solve_obstacle(grid, p, 0.99 * crit.lambda0)
    above = solve_obstacle(grid, p, 1.05 * crit.lambda0)
    assert below.mu_star.total_variation() < 1e-6
    assert above.mu_star.total_variation() > 1e-3


def test_sweep_nested(setup32):
    grid, p, h0, crit = setup32
    lams = crit.lambda0 * np.linspace(0.7, 1.6, 8)
    res = sweep_lambda(grid, p, lams, critical=crit, keep_solutions=True)
    assert res.nested and res.violations == 0 and res.failed_at is None
    masses = [r["mu_mass"] for r in res.rows]
    assert all(b >= a - 1e-9 for a, b in zip(masses, masses[1:]))
    assert len(res.solutions) == len(lams)
    d = res.as_dict()
    assert set(d) == {"rows", "monotonicity", "failed_at"}


def test_sweep_rejects_unsorted(setup32):
    grid, p, _, _ = setup32
    with pytest.raises(ParameterError):
        sweep_lambda(grid, p, [2.0, 1.0])


def test_minimality(setup32):
    grid, p, h0, crit = setup32
    lam = 2.0 * crit.lambda0
    sol = solve_obstacle(grid, p, lam)
    rng = np.random.default_rng(7)
    trials = [DiscreteMeasure.zero(grid), 1.1 * sol.mu_star] + random_trials(grid, sol.mu_star, rng)
    probe = minimality_probe(grid, p, lam, trials, sol)
    assert probe["violations"] == 0
    assert probe["min_gap"] >= -probe["slack"]["solver"]
    assert probe["E_star"] == pytest.approx(energy_E_lambda(grid, p, lam, sol.mu_star))
