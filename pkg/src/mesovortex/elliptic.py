"""Five-point discretization of -div(c grad u) + u and its solvers.

Rows are scaled pointwise: ``(A u)_i = sum_f w_f (u_i - u_j) + u_i`` with
``w_f = c_f / h_dir**2`` and ``c_f`` the harmonic mean of the two nodal
conductivities.  Dirichlet data is eliminated into ``lift``, so the discrete
operator acting on a field with the prescribed boundary values is
``A u - lift``.  The matrix is a symmetric M-matrix.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from numba import njit

from .errors import ConvergenceError, ParameterError
from .geometry import Grid2D

DEFAULT_OMEGA = 1.5
DEFAULT_TOL = 1e-9


@dataclass
class SolveStats:
    iterations: int
    residual: float
    omega: float | None = None
    converged: bool = True
    method: str = ""
    energy_history: list | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        d = asdict(self)
        d.pop("energy_history")
        return d


@dataclass(frozen=True, eq=False)
class EllipticOperator:
    """Assembled operator on the interior nodes of ``grid``.

    Faces are stored as flat arrays: ``face_i`` is always interior, ``face_j``
    is interior or -1 for a face to a Dirichlet node, in which case
    ``face_g`` holds the boundary value.
    """

    grid: Grid2D
    coeff: np.ndarray
    matrix: sp.csr_matrix
    lift: np.ndarray
    face_i: np.ndarray
    face_j: np.ndarray
    face_w: np.ndarray
    face_g: np.ndarray
    face_dir: np.ndarray = field(repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def apply(self, u):
        """Discrete -div(c grad u) + u for ``u`` carrying the operator's boundary data."""
        return self.matrix @ u - self.lift

    @cached_property
    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    @cached_property
    def lu(self):
        return spla.splu(self.matrix.tocsc())

    @cached_property
    def stencil(self) -> np.ndarray:
        """Per-node coefficients (centre, west, east, south, north); zero where absent."""
        st = np.zeros((self.n, 5))
        st[:, 0] = self.diagonal
        i, j, w, d = self.face_i, self.face_j, self.face_w, self.face_dir
        inner = j >= 0
        # face_dir: 0 = east neighbour of face_i, 1 = north neighbour
        st[i[d == 0], 2] = -w[d == 0]
        st[i[d == 1], 4] = -w[d == 1]
        st[j[inner & (d == 0)], 1] = -w[inner & (d == 0)]
        st[j[inner & (d == 1)], 3] = -w[inner & (d == 1)]
        west_b = ~inner & (d == 2)
        south_b = ~inner & (d == 3)
        st[i[west_b], 1] = -w[west_b]
        st[i[south_b], 3] = -w[south_b]
        return st

    def gradient_energy(self, u, boundary_value=None) -> float:
        """Quadrature of the integral of c |grad u|^2 over face differences.

        Uses the same face weights as the matrix, so the discrete
        integration-by-parts identity with ``A`` is exact.
        ``boundary_value`` overrides the stored Dirichlet data.
        """
        g = self.face_g if boundary_value is None else np.full_like(self.face_g, boundary_value)
        inner = self.face_j >= 0
        uj = np.where(inner, u[np.where(inner, self.face_j, 0)], g)
        du = u[self.face_i] - uj
        return float(self.grid.cell_area * np.sum(self.face_w * du * du))


def harmonic_mean(ci, cj):
    return 2.0 * ci * cj / (ci + cj)


def assemble(grid: Grid2D, c, dirichlet=1.0) -> EllipticOperator:
    """Assemble -div(c grad .) + I on the interior nodes of ``grid``.

    ``dirichlet`` is a constant or a callable ``g(x, y)`` evaluated at the
    boundary nodes.  A face to a boundary node uses the interior node's own
    conductivity.
    """
    c = np.asarray(c, dtype=float)
    if c.shape != (grid.n,):
        raise ParameterError(f"coefficient has shape {c.shape}, expected ({grid.n},)")
    if not np.all(c > 0) or not np.all(np.isfinite(c)):
        raise ParameterError("conductivity must be positive and finite")

    idx = grid.index
    cimg = grid.to_image(c, fill=0.0)
    X, Y = np.meshgrid(grid.x, grid.y)
    if callable(dirichlet):
        gimg = np.asarray(dirichlet(X, Y), dtype=float) * np.ones_like(X)
    else:
        gimg = np.full(X.shape, float(dirichlet))

    fi, fj, fw, fg, fd = [], [], [], [], []

    def add_faces(a_idx, b_idx, ca, cb, gb, h, direction, reverse_direction):
        a_in, b_in = a_idx >= 0, b_idx >= 0
        both = a_in & b_in
        fi.append(a_idx[both]); fj.append(b_idx[both])
        fw.append(harmonic_mean(ca[both], cb[both]) / h**2)
        fg.append(np.zeros(both.sum())); fd.append(np.full(both.sum(), direction))
        # interior -> boundary neighbour (a interior, b not)
        ab = a_in & ~b_in
        fi.append(a_idx[ab]); fj.append(np.full(ab.sum(), -1))
        fw.append(ca[ab] / h**2); fg.append(gb[1][ab]); fd.append(np.full(ab.sum(), direction))
        ba = b_in & ~a_in
        fi.append(b_idx[ba]); fj.append(np.full(ba.sum(), -1))
        fw.append(cb[ba] / h**2); fg.append(gb[0][ba]); fd.append(np.full(ba.sum(), reverse_direction))

    # x-faces: (j, i) -- (j, i+1); y-faces: (j, i) -- (j+1, i)
    add_faces(idx[:, :-1].ravel(), idx[:, 1:].ravel(), cimg[:, :-1].ravel(), cimg[:, 1:].ravel(),
              (gimg[:, :-1].ravel(), gimg[:, 1:].ravel()), grid.hx, 0, 2)
    add_faces(idx[:-1, :].ravel(), idx[1:, :].ravel(), cimg[:-1, :].ravel(), cimg[1:, :].ravel(),
              (gimg[:-1, :].ravel(), gimg[1:, :].ravel()), grid.hy, 1, 3)

    face_i = np.concatenate(fi).astype(np.int64)
    face_j = np.concatenate(fj).astype(np.int64)
    face_w = np.concatenate(fw)
    face_g = np.concatenate(fg)
    face_dir = np.concatenate(fd).astype(np.int8)

    n = grid.n
    diag = np.ones(n) + np.bincount(face_i, weights=face_w, minlength=n)
    inner = face_j >= 0
    diag += np.bincount(face_j[inner], weights=face_w[inner], minlength=n)
    lift = np.bincount(face_i[~inner], weights=(face_w * face_g)[~inner], minlength=n)
    rows = np.concatenate([np.arange(n), face_i[inner], face_j[inner]])
    cols = np.concatenate([np.arange(n), face_j[inner], face_i[inner]])
    vals = np.concatenate([diag, -face_w[inner], -face_w[inner]])
    matrix = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    matrix.sort_indices()
    return EllipticOperator(grid, c, matrix, lift, face_i, face_j, face_w, face_g, face_dir)


def _system_rhs(op, rhs):
    rhs = np.zeros(op.n) if rhs is None else np.asarray(rhs, dtype=float)
    if rhs.shape != (op.n,):
        raise ParameterError(f"rhs has shape {rhs.shape}, expected ({op.n},)")
    return rhs + op.lift


def _default_cap(grid: Grid2D) -> int:
    nx, ny = grid.shape[1], grid.shape[0]
    return 200 * (nx + ny)


def direct_solve(op: EllipticOperator, rhs=None):
    """Sparse LU solve of ``op.apply(x) = rhs`` (factorization cached on ``op``)."""
    b = _system_rhs(op, rhs)
    x = op.lu.solve(b)
    res = float(np.linalg.norm(op.matrix @ x - b))
    return x, SolveStats(iterations=1, residual=res, method="direct")


def cg_solve(op: EllipticOperator, rhs=None, tol: float = DEFAULT_TOL, x0=None,
             max_iter: int | None = None):
    """Jacobi-preconditioned conjugate gradients for ``op.apply(x) = rhs``.

    Stops when ``||A x - b||_2 <= tol * ||b||_2`` where ``b = rhs + lift`` is
    the assembled right-hand side, or ``<= tol`` when ``b = 0``.
    """
    if not tol > 0:
        raise ParameterError("tol must be positive")
    A = op.matrix
    b = _system_rhs(op, rhs)
    max_iter = _default_cap(op.grid) if max_iter is None else max_iter
    bnorm = np.linalg.norm(b)
    target = tol * bnorm if bnorm > 0 else tol

    x = np.zeros(op.n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    dinv = 1.0 / op.diagonal
    z = dinv * r
    d = z.copy()
    rz = r @ z
    rnorm = np.linalg.norm(r)
    k = 0
    while rnorm > target:
        if k >= max_iter:
            stats = SolveStats(k, float(rnorm), converged=False, method="cg")
            raise ConvergenceError(f"CG did not converge in {k} iterations", stats, x)
        Ad = A @ d
        alpha = rz / (d @ Ad)
        x += alpha * d
        r -= alpha * Ad
        z = dinv * r
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
        rnorm = np.linalg.norm(r)
        k += 1
    return x, SolveStats(k, float(rnorm), method="cg")


@njit(cache=True)
def _psor_sweeps(indptr, indices, data, diag, b, lo, hi, x, omega, tol, sweeps):
    n = x.shape[0]
    done = 0
    step = np.inf
    while done < sweeps:
        step = 0.0
        for i in range(n):
            s = b[i]
            for k in range(indptr[i], indptr[i + 1]):
                s -= data[k] * x[indices[k]]
            # s is the residual b - A x at node i before the update
            xi = x[i] + omega * s / diag[i]
            if xi < lo[i]:
                xi = lo[i]
            elif xi > hi[i]:
                xi = hi[i]
            dx = abs(xi - x[i]) * diag[i] / omega
            if dx > step:
                step = dx
            x[i] = xi
        done += 1
        if step <= tol:
            break
    return done, step


def complementarity_violation(op: EllipticOperator, x, rhs, lower=None, upper=None) -> float:
    """Largest nodewise violation of the discrete variational inequality.

    With ``g = op.apply(x) - rhs``: inactive nodes need ``|g| = 0``, nodes on
    the lower bound ``g >= 0`` and nodes on the upper bound ``g <= 0``.
    ``None`` means no bound.
    """
    g = op.matrix @ x - _system_rhs(op, rhs)
    at_lo = x <= (-np.inf if lower is None else lower)
    at_hi = x >= (np.inf if upper is None else upper)
    v = np.abs(g)
    v = np.where(at_lo, np.maximum(-g, 0.0), v)
    v = np.where(at_hi, np.maximum(g, 0.0), v)
    return float(v.max()) if v.size else 0.0


def quadratic_energy(op: EllipticOperator, x, rhs=None) -> float:
    b = _system_rhs(op, rhs)
    return float(0.5 * x @ (op.matrix @ x) - b @ x)


def psor_solve(op: EllipticOperator, rhs=None, lower=None, upper=None,
               omega: float = DEFAULT_OMEGA, tol: float = DEFAULT_TOL, x0=None,
               max_iter: int | None = None, record_energy: bool = False):
    """Projected SOR for ``lower <= x <= upper`` and the matching complementarity.

    Solves the discrete variational inequality of minimizing
    ``0.5 x.A x - b.x`` over the box, ``b = rhs + lift``.  Iteration stops
    once :func:`complementarity_violation` is at most ``tol``.  Active nodes
    sit exactly on their bound because the update is clamped.
    """
    if not 0 < omega < 2:
        raise ParameterError(f"omega must lie in (0, 2), got {omega}")
    if not tol > 0:
        raise ParameterError("tol must be positive")
    n = op.n
    lo = np.full(n, -np.inf) if lower is None else np.broadcast_to(np.asarray(lower, float), (n,)).copy()
    hi = np.full(n, np.inf) if upper is None else np.broadcast_to(np.asarray(upper, float), (n,)).copy()
    if np.any(lo > hi):
        raise ParameterError("lower bound exceeds upper bound")
    b = _system_rhs(op, rhs)
    max_iter = _default_cap(op.grid) if max_iter is None else int(max_iter)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    np.clip(x, lo, hi, out=x)
    A = op.matrix
    diag = op.diagonal
    history = [quadratic_energy(op, x, rhs)] if record_energy else None

    it = 0
    viol = np.inf
    chunk = 1 if record_energy else 50
    while it < max_iter:
        done, step = _psor_sweeps(A.indptr, A.indices, A.data, diag, b, lo, hi, x,
                                  float(omega), float(tol), min(chunk, max_iter - it))
        it += done
        if record_energy:
            history.append(quadratic_energy(op, x, rhs))
        if step <= tol:
            viol = complementarity_violation(op, x, rhs, lo, hi)
            if viol <= tol:
                return x, SolveStats(it, viol, omega, True, "psor", history)
    viol = complementarity_violation(op, x, rhs, lo, hi)
    if viol <= tol:
        return x, SolveStats(it, viol, omega, True, "psor", history)
    stats = SolveStats(it, viol, omega, False, "psor", history)
    raise ConvergenceError(f"PSOR did not converge in {it} sweeps (violation {viol:.3g})",
                           stats, x)
