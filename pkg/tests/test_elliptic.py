import itertools

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st

from mesovortex.acceptance import SQUARE_8
from mesovortex.elliptic import (EllipticOperator, assemble, cg_solve, complementarity_violation,
                                 direct_solve, harmonic_mean, psor_solve, quadratic_energy)
from mesovortex.errors import ConvergenceError, ParameterError
from mesovortex.geometry import DomainSpec, build_grid, pinning_field
from mesovortex.oracles import dense_system

from conftest import disc


def square(n, a=0.5):
    spec = DomainSpec(shape="rectangle", extents=(0, 1, 0, 1), inclusion_radius=0.2,
                      inclusion_center=(0.5, 0.5), a=a, nx=n, ny=n)
    grid = build_grid(spec)
    return grid, pinning_field(grid)


def test_constant_field_residual(disc32):
    grid, p = disc32
    op = assemble(grid, 1.0 / p, 1.0)
    assert np.allclose(op.apply(np.ones(grid.n)), 1.0, atol=1e-12)


def test_linear_field_exact():
    grid, _ = square(16)
    op = assemble(grid, np.ones(grid.n), lambda x, y: x)
    x, _ = direct_solve(op, grid.xs)
    assert np.max(np.abs(x - grid.xs)) < 1e-12


def test_manufactured_second_order():
    errs = []
    for n in (17, 33, 65):
        grid, _ = square(n)
        u = lambda x, y: np.sin(np.pi * x) * np.sin(np.pi * y)
        f = (2 * np.pi**2 + 1) * u(grid.xs, grid.ys)
        op = assemble(grid, np.ones(grid.n), 0.0)
        x, _ = direct_solve(op, f)
        errs.append(np.max(np.abs(x - u(grid.xs, grid.ys))))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 1.8)


def test_harmonic_face_weight(disc32):
    grid, p = disc32
    op = assemble(grid, p, 1.0)
    inner = op.face_j >= 0
    cut = inner & (grid.tags[op.face_i] != grid.tags[np.where(inner, op.face_j, 0)])
    assert cut.any()
    assert np.allclose(op.face_w[cut] * grid.hx**2, 2 * 0.5 / 1.5, rtol=1e-14)
    assert harmonic_mean(1.0, 0.25) == pytest.approx(0.4)


def test_symmetric_positive_definite(disc32):
    grid, p = disc32
    A = assemble(grid, 1.0 / p, 1.0).matrix
    assert (A != A.T).nnz == 0
    d = A.diagonal()
    off = np.asarray(abs(A).sum(axis=1)).ravel() - d
    assert np.all(d > 0) and np.all(d > off)


def test_stencil_rows(disc32):
    grid, p = disc32
    op = assemble(grid, 1.0 / p, 1.0)
    st5 = op.stencil
    A = op.matrix.toarray()
    assert np.allclose(st5[:, 0], np.diag(A))
    # off-diagonal row sums equal minus all face weights of that node, boundary ones included
    assert np.allclose(st5[:, 1:].sum(axis=1) + st5[:, 0], 1.0)


def test_matches_loop_assembly():
    grid, p = square(12)
    op = assemble(grid, 1.0 / p, 1.0)
    A, b = dense_system(grid, 1.0 / p, 1.0)
    assert np.max(np.abs(op.matrix.toarray() - A)) < 1e-9
    assert np.max(np.abs(op.lift - b)) < 1e-9


@pytest.mark.parametrize("bad", [0.0, -1.0, np.inf])
def test_rejects_bad_conductivity(disc32, bad):
    grid, _ = disc32
    c = np.ones(grid.n)
    c[3] = bad
    with pytest.raises(ParameterError):
        assemble(grid, c)


def test_cg_zero_rhs(disc32):
    grid, p = disc32
    op = assemble(grid, 1.0 / p, 0.0)
    x, stats = cg_solve(op, np.zeros(grid.n))
    assert np.all(x == 0) and stats.iterations == 0


def test_cg_consistency(disc32, rng):
    grid, p = disc32
    op = assemble(grid, 1.0 / p, 0.0)
    y = rng.standard_normal(grid.n)
    x, stats = cg_solve(op, op.apply(y), tol=1e-12)
    assert np.max(np.abs(x - y)) < 1e-9
    assert stats.residual <= 1e-12 * np.linalg.norm(op.apply(y))


def test_cg_vs_dense_lu():
    grid = build_grid(SQUARE_8)
    p = pinning_field(grid)
    op = assemble(grid, 1.0 / p, 1.0)
    A, b = dense_system(grid, 1.0 / p, 1.0)
    f = np.linspace(-1, 1, grid.n)
    x, _ = cg_solve(op, f, tol=1e-14)
    assert np.max(np.abs(x - np.linalg.solve(A, f + b))) <= 1e-10


def test_cg_cap_raises(disc32):
    grid, p = disc32
    op = assemble(grid, 1.0 / p, 1.0)
    with pytest.raises(ConvergenceError) as info:
        cg_solve(op, None, tol=1e-14, max_iter=2)
    assert info.value.stats.iterations == 2
    assert info.value.last_iterate is not None


def test_psor_unconstrained_matches_cg(disc32):
    grid, p = disc32
    op = assemble(grid, 1.0 / p, 1.0)
    x_cg, _ = cg_solve(op, None, tol=1e-12)
    x, stats = psor_solve(op, None, tol=1e-9)
    assert stats.converged
    # residual tol 1e-9 translates to a field error below 10 tol
    assert np.max(np.abs(x - x_cg)) <= 10 * 1e-9


def test_psor_fully_active(disc32):
    grid, p = disc32
    op = assemble(grid, 1.0 / p, 1.0)
    x_free, _ = direct_solve(op)
    lower = np.full(grid.n, x_free.max() + 0.1)
    x, _ = psor_solve(op, None, lower=lower)
    assert np.array_equal(x, lower)


def test_psor_bad_arguments(disc32):
    grid, p = disc32
    op = assemble(grid, 1.0 / p, 1.0)
    with pytest.raises(ParameterError):
        psor_solve(op, omega=2.0)
    with pytest.raises(ParameterError):
        psor_solve(op, lower=np.ones(grid.n), upper=np.zeros(grid.n))
    with pytest.raises(ConvergenceError):
        psor_solve(op, tol=1e-12, max_iter=3)


def _three_node_operator(diag=3.0, off=-1.0):
    A = sp.csr_matrix(np.array([[diag, off, 0.0], [off, diag, off], [0.0, off, diag]]))
    A.sort_indices()
    z = np.zeros(0)
    return EllipticOperator(None, np.ones(3), A, np.zeros(3), z.astype(int), z.astype(int), z, z, z)


def _enumerate(A, b, lo):
    best = None
    for active in itertools.product([False, True], repeat=3):
        act = np.array(active)
        x = lo.copy()
        free = ~act
        if free.any():
            x[free] = np.linalg.solve(A[np.ix_(free, free)], b[free] - A[np.ix_(free, act)] @ lo[act])
        g = A @ x - b
        if np.all(x >= lo - 1e-14) and np.all(g[act] >= -1e-14):
            best = x
    return best


@given(st.lists(st.floats(-1, 1), min_size=3, max_size=3),
       st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_psor_three_node_enumeration(b, lo):
    op = _three_node_operator()
    b, lo = np.array(b), np.array(lo)
    x, _ = psor_solve(op, b, lower=lo, tol=1e-13, max_iter=10000)
    ref = _enumerate(op.matrix.toarray(), b, lo)
    assert np.max(np.abs(x - ref)) < 1e-11


def test_maximum_principle(disc32):
    grid, p = disc32
    x, _ = direct_solve(assemble(grid, 1.0 / p, 1.0))
    assert np.all(x > 0) and np.all(x < 1)
    # Dirichlet data in [m, M] with m < 0
    g = lambda X, Y: -0.5 + X
    x, _ = direct_solve(assemble(grid, 1.0 / p, g))
    assert x.min() >= -1.5 - 1e-12 and x.max() <= 0.5 + 1e-12


def test_psor_energy_and_complementarity(disc32):
    grid, p = disc32
    op = assemble(grid, 1.0 / p, 1.0)
    lower = 1.0 - p / (2 * 6.0)
    x, stats = psor_solve(op, None, lower=lower, record_energy=True, tol=1e-10)
    hist = np.array(stats.energy_history)
    # 1e-12 slack relative to |E| (|E| ~ 3e4 here, one ulp is ~4e-12)
    assert np.all(np.diff(hist) <= 1e-12 * np.abs(hist[1:]))
    assert complementarity_violation(op, x, None, lower) <= 1e-10
    active = x <= lower
    g = op.apply(x)
    assert np.all((x - lower)[active] * g[active] <= 1e-10)
    assert quadratic_energy(op, x) == pytest.approx(hist[-1])
    assert stats.as_dict()["converged"]


def test_direct_and_cg_agree_on_disc():
    grid, p = disc(64)
    op = assemble(grid, 1.0 / p, 1.0)
    x1, _ = direct_solve(op)
    x2, _ = cg_solve(op, None, tol=1e-12)
    assert np.max(np.abs(x1 - x2)) < 1e-9
