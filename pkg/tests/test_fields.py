import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import i0

from mesovortex.acceptance import SQUARE_8
from mesovortex.errors import ParameterError
from mesovortex.fields import (DiscreteMeasure, energy_E_lambda, green_column, london_operator,
                               nearest_node, primal_functional, read_field_csv, solve_h0,
                               solve_hmu, write_field_csv)
from mesovortex.geometry import DomainSpec, build_grid, pinning_field
from mesovortex.oracles import dense_system, quadrature_energy, quadrature_primal
from mesovortex.radial import RadialParams, shoot_ode

from conftest import disc


def square16():
    spec = DomainSpec(shape="rectangle", extents=(0, 1, 0, 1), inclusion_radius=0.3,
                      inclusion_center=(0.5, 0.5), a=0.5, nx=16, ny=16)
    grid = build_grid(spec)
    return grid, pinning_field(grid)


def test_h0_bessel_centre():
    exact = 1.0 / i0(1.0)
    errs = []
    for nx in (33, 65, 129):
        spec = DomainSpec(a=1.0, allow_degenerate=True, nx=nx, ny=nx)
        grid = build_grid(spec)
        h0 = solve_h0(grid, pinning_field(grid))
        centre = nearest_node(grid, 0.0, 0.0)
        errs.append(abs(h0[centre] - exact))
        r = np.hypot(grid.xs, grid.ys)
        assert np.max(np.abs(h0 - i0(r) / i0(1.0))) < 2.0 * grid.h
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 5e-3


def test_h0_bounds_and_boundary_data(disc32):
    grid, p = disc32
    h0 = solve_h0(grid, p)
    assert np.all(h0 > 0) and np.all(h0 < 1)
    op = london_operator(grid, 1.0 / p, 1.0)
    assert np.all(op.face_g[op.face_j < 0] == 1.0)


def test_h0_matches_radial_profile():
    prof = shoot_ode(RadialParams(0.5, 0.5))
    errs = []
    for nx in (32, 64, 128):
        grid, p = disc(nx)
        h0 = solve_h0(grid, p)
        ref = np.interp(np.hypot(grid.xs, grid.ys), prof.r, prof.h)
        errs.append(np.max(np.abs(h0 - ref)))
    assert errs[2] < errs[1] < errs[0]
    assert errs[2] < 3e-3


def test_h0_cg_matches_direct(disc32):
    grid, p = disc32
    assert np.max(np.abs(solve_h0(grid, p, method="cg") - solve_h0(grid, p))) < 1e-9
    with pytest.raises(ParameterError):
        solve_h0(grid, p, method="jacobi")


def test_hmu_special_cases(disc32):
    grid, p = disc32
    ones = DiscreteMeasure(grid, np.ones(grid.n))
    assert np.max(np.abs(solve_hmu(grid, p, ones) - 1.0)) < 1e-12
    zero = DiscreteMeasure.zero(grid)
    assert np.array_equal(solve_hmu(grid, p, zero), solve_h0(grid, p))


def test_point_mass_is_green_column(disc32):
    grid, p = disc32
    c = nearest_node(grid, 0.0, 0.0)
    mu = DiscreteMeasure.point_masses(grid, [c], [1.0])
    diff = solve_hmu(grid, p, mu) - solve_h0(grid, p)
    col = green_column(grid, 1.0 / p, c)
    assert np.max(np.abs(diff - col.values)) < 1e-12


def test_green_symmetry_and_sign(disc64):
    grid, p = disc64
    y1, y2 = nearest_node(grid, 0.3, 0.1), nearest_node(grid, -0.6, 0.2)
    g1 = green_column(grid, 1.0 / p, y1).values
    g2 = green_column(grid, 1.0 / p, y2).values
    assert abs(g1[y2] - g2[y1]) <= 1e-12 * abs(g1[y2])
    assert g1.min() >= 0 and g2.min() >= 0
    with pytest.raises(ParameterError):
        green_column(grid, 1.0 / p, grid.n)


def test_green_log_bound_constant_stable():
    consts = []
    for nx in (64, 128):
        grid, p = disc(nx)
        y = nearest_node(grid, 0.0, 0.0)
        g = green_column(grid, 1.0 / p, y).values
        d = np.hypot(grid.xs - grid.xs[y], grid.ys - grid.ys[y])
        far = d >= 0.2
        consts.append(np.max(g[far] / (np.abs(np.log(d[far])) + 1)))
    assert abs(consts[1] / consts[0] - 1) < 0.1


def test_linearity_and_superposition(disc32, rng):
    grid, p = disc32
    h0 = solve_h0(grid, p)
    m1 = DiscreteMeasure(grid, rng.random(grid.n))
    m2 = DiscreteMeasure(grid, rng.standard_normal(grid.n))
    lhs = solve_hmu(grid, p, m1 + m2) - h0
    rhs = (solve_hmu(grid, p, m1) - h0) + (solve_hmu(grid, p, m2) - h0)
    assert np.max(np.abs(lhs - rhs)) < 1e-12
    nodes = rng.choice(grid.n, 4, replace=False)
    w = rng.random(4)
    sparse = DiscreteMeasure.point_masses(grid, nodes, w)
    total = sum(wk * green_column(grid, 1.0 / p, k).values for k, wk in zip(nodes, w))
    assert np.max(np.abs(solve_hmu(grid, p, sparse) - h0 - total)) < 1e-12


def test_measure_masses(disc32, rng):
    grid, _ = disc32
    mu = DiscreteMeasure(grid, rng.standard_normal(grid.n))
    assert mu.mass_s1() + mu.mass_s2() == pytest.approx(mu.total_variation(), rel=1e-14)
    assert (2 * mu).total_variation() == pytest.approx(2 * mu.total_variation())
    with pytest.raises(ParameterError):
        DiscreteMeasure(grid, np.zeros(3))


def test_energy_zero_measure(disc32):
    grid, p = disc32
    h0 = solve_h0(grid, p)
    op = london_operator(grid, 1.0 / p, 1.0)
    expected = op.gradient_energy(h0) + np.sum((h0 - 1) ** 2) * grid.cell_area
    assert energy_E_lambda(grid, p, 2.0, DiscreteMeasure.zero(grid)) == pytest.approx(expected, rel=1e-14)


def test_energy_unit_density_closed_form():
    # h_mu = 1, so only (1/lam) int p remains: pi (0.25 + 2 * 0.75)
    grid = build_grid(DomainSpec(a=2.0, nx=129, ny=129))
    p = pinning_field(grid)
    e = energy_E_lambda(grid, p, 1.0, DiscreteMeasure(grid, np.ones(grid.n)))
    assert e == pytest.approx(np.pi * 1.75, abs=2 * np.pi * 2.0 * grid.h)
    area_exact = np.sum(p) * grid.cell_area
    assert e == pytest.approx(area_exact, rel=1e-12)


def test_energy_vs_quadrature_oracle(rng):
    grid, p = square16()
    A, b = dense_system(grid, 1.0 / p, 1.0)
    dens = np.zeros(grid.n)
    idx = rng.choice(grid.n, 12, replace=False)
    dens[idx] = rng.standard_normal(12) * 30
    mu = DiscreteMeasure(grid, dens)
    e = energy_E_lambda(grid, p, 1.7, mu)
    ref = quadrature_energy(grid, p, 1.7, dens, np.linalg.solve(A, b + dens))
    assert abs(e - ref) <= 1e-12 * abs(ref)


def test_primal_vs_quadrature_oracle(rng):
    grid = build_grid(SQUARE_8)
    p = pinning_field(grid)
    h = rng.standard_normal(grid.n)
    assert abs(primal_functional(grid, p, 2.5, h) - quadrature_primal(grid, p, 2.5, h)) \
        <= 1e-12 * quadrature_primal(grid, p, 2.5, h)


def test_primal_special_values(disc32, rng):
    grid, p = disc32
    lam = 1.3
    assert primal_functional(grid, p, lam, np.zeros(grid.n)) == pytest.approx(
        np.sum(p) * grid.cell_area / lam, rel=1e-14)
    # E(mu) equals the primal functional at h_mu - 1
    mu = DiscreteMeasure(grid, rng.random(grid.n) * 3)
    h_mu = solve_hmu(grid, p, mu)
    assert primal_functional(grid, p, lam, h_mu - 1.0) == pytest.approx(
        energy_E_lambda(grid, p, lam, mu, h_mu=h_mu), rel=1e-10)
    with pytest.raises(ParameterError):
        primal_functional(grid, p, lam, np.zeros(5))
    with pytest.raises(ParameterError):
        energy_E_lambda(grid, p, 0.0, mu)


@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_energy_convex_and_nonnegative(seed, t):
    grid, p = disc(16)
    r = np.random.default_rng(seed)
    m0 = DiscreteMeasure(grid, r.standard_normal(grid.n) * 5)
    m1 = DiscreteMeasure(grid, r.random(grid.n) * 5)
    mt = (1 - t) * m0 + t * m1
    e0, e1, et = (energy_E_lambda(grid, p, 2.0, m) for m in (m0, m1, mt))
    assert min(e0, e1, et) >= 0
    assert et <= (1 - t) * e0 + t * e1 + 1e-10 * max(e0, e1)


def test_csv_round_trip(tmp_path, disc32, rng):
    grid, _ = disc32
    v = rng.standard_normal(grid.n)
    path = tmp_path / "f.csv"
    write_field_csv(path, grid, v, name="test")
    assert path.read_text().splitlines()[0] == "x,y,value"
    back = read_field_csv(path, grid)
    assert np.array_equal(back, v)
    other, _ = disc(33)
    with pytest.raises(ParameterError):
        read_field_csv(path, other)
