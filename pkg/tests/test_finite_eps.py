import math

import numpy as np
import pytest

from mesovortex.errors import ParameterError, ResolutionError
from mesovortex.fields import nearest_node
from mesovortex.finite_eps import (decay_fit, green_eps_convergence, reduced_energy, solve_ueps,
                                   splitting_gap, zero_field_energy)
from mesovortex.geometry import DomainSpec, build_grid, pinning_field

from conftest import disc


def grid_for(eps, a=0.5):
    nx = math.ceil(4 / eps) + 1
    return disc(nx, a=a)


@pytest.fixture(scope="module")
def sols():
    out = {}
    for eps in (0.1, 0.05):
        grid, p = grid_for(eps)
        out[eps] = (grid, p, solve_ueps(grid, p, eps))
    return out


def test_degenerate_constant():
    spec = DomainSpec(a=1.0, allow_degenerate=True, nx=41, ny=41)
    grid = build_grid(spec)
    p = pinning_field(grid)
    sol = solve_ueps(grid, p, 0.1)
    assert np.max(np.abs(sol.u - 1.0)) < 1e-12
    assert sol.energy == pytest.approx(0.0, abs=1e-20)
    assert sol.bounds_hold


def test_strict_bounds_and_residual(sols):
    for eps, (grid, p, sol) in sols.items():
        assert sol.bounds_hold
        assert np.all(sol.u > np.sqrt(0.5)) and np.all(sol.u < 1.0)
        assert sol.stats.residual <= 1e-10


def test_energy_scales_like_inverse_eps(sols):
    e1 = sols[0.1][2].energy
    e2 = sols[0.05][2].energy
    assert e2 / e1 == pytest.approx(2.0, rel=0.1)


def test_profile_approaches_sqrt_p(sols):
    errs = [np.sqrt(np.mean((sol.u**2 - p) ** 2)) for grid, p, sol in sols.values()]
    assert errs[1] < errs[0]


def test_minimizer_beats_sqrt_p(sols):
    grid, p, sol = sols[0.1]
    assert sol.energy <= zero_field_energy(grid, p, 0.1, np.sqrt(p))
    assert sol.energy == pytest.approx(zero_field_energy(grid, p, 0.1, sol.u))


def test_splitting_identity(sols, rng):
    grid, p, sol = sols[0.1]
    phi = 1.0 + 0.2 * rng.standard_normal(grid.n)
    f = reduced_energy(grid, sol.u, sol.epsilon, phi)
    gap = splitting_gap(grid, p, sol, phi)
    scale = max(sol.energy, abs(f), 1.0)
    assert abs(gap) <= 1e-6 * scale
    assert reduced_energy(grid, sol.u, sol.epsilon, np.ones(grid.n)) == pytest.approx(0.0, abs=1e-12)


def test_resolution_guard():
    grid, p = disc(32)
    with pytest.raises(ResolutionError):
        solve_ueps(grid, p, 0.05)
    with pytest.raises(ParameterError):
        solve_ueps(grid, p, 0.0)


def test_decay_rate_positive(sols):
    grid, p, sol = sols[0.05]
    fit = decay_fit(grid, sol, p, band=(2.0, 4.0))
    assert fit["delta_hat"] > 0
    assert fit["delta_hat"] == min(fit["sides"]["S1"]["delta"], fit["sides"]["S2"]["delta"])


def test_green_eps(sols):
    grid, p, sol = sols[0.05]
    src = [nearest_node(grid, 0.25, 0.0), nearest_node(grid, -0.7, 0.1)]
    res = green_eps_convergence(grid, sol, p, src)
    assert all(r["min_G_eps"] >= 0 for r in res["per_source"])
    assert res["symmetry_error"] < 1e-12
    assert res["sup_diff"] > 0
    with pytest.raises(ParameterError):
        green_eps_convergence(grid, sol, p, src[:1], probes=[src[0]])


def test_green_eps_converges():
    diffs = []
    for eps in (0.1, 0.05):
        grid, p = disc(81)
        sol = solve_ueps(grid, p, eps)
        src = [nearest_node(grid, 0.25, 0.0)]
        diffs.append(green_eps_convergence(grid, sol, p, src)["sup_diff"])
    assert diffs[1] < diffs[0]
