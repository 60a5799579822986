"""Slow, loop-based reference implementations used for cross-validation.

Nothing here calls the vectorized assembly: matrices are built node by node
from the grid's region image, and energies are summed over neighbour pairs.
Only intended for small grids.
"""

from __future__ import annotations

import itertools

import numpy as np

from .errors import ConvergenceError, ParameterError
from .geometry import EXTERIOR


def _interior_list(grid):
    ny, nx = grid.region.shape
    nodes = [(j, i) for j in range(ny) for i in range(nx) if grid.region[j, i] != EXTERIOR]
    return nodes, {node: k for k, node in enumerate(nodes)}


def _neighbour_pairs(grid):
    """Yield ``(k, (j2, i2), h_dir)`` for every interior node ``k`` and each of its four neighbours."""
    nodes, _ = _interior_list(grid)
    steps = ((0, 1, grid.hx), (0, -1, grid.hx), (1, 0, grid.hy), (-1, 0, grid.hy))
    for k, (j, i) in enumerate(nodes):
        for dj, di, h in steps:
            yield k, (j + dj, i + di), h


def dense_system(grid, c, boundary_value=1.0):
    """Dense ``(A, b)`` for ``-div(c grad u) + u = f`` with constant Dirichlet data.

    ``A u = f + b``.  A face between two interior nodes carries the harmonic
    mean of their conductivities; a face to a boundary node carries the
    interior node's conductivity.
    """
    nodes, lookup = _interior_list(grid)
    n = len(nodes)
    c = np.asarray(c, dtype=float)
    if c.shape != (n,):
        raise ParameterError("coefficient length does not match the grid")
    A = np.eye(n)
    b = np.zeros(n)
    for k, nb, h in _neighbour_pairs(grid):
        m = lookup.get(nb)
        if m is None:
            w = c[k] / h**2
            b[k] += w * boundary_value
        else:
            w = 2.0 * c[k] * c[m] / (c[k] + c[m]) / h**2
            A[k, m] -= w
        A[k, k] += w
    return A, b


def _gradient_sum(grid, c, u, boundary_value):
    """``sum c_f (u_i - u_j)^2 hx hy / h_dir^2``, once per neighbour pair."""
    _, lookup = _interior_list(grid)
    area = grid.hx * grid.hy
    total = 0.0
    for k, nb, h in _neighbour_pairs(grid):
        m = lookup.get(nb)
        if m is None:
            total += c[k] * (u[k] - boundary_value) ** 2 * area / h**2
        elif m > k:
            cf = 2.0 * c[k] * c[m] / (c[k] + c[m])
            total += cf * (u[k] - u[m]) ** 2 * area / h**2
    return total


def quadrature_energy(grid, p, lam, density, h_field, boundary_value=1.0):
    """``(1/lam) int p |mu| + int |grad h|^2 / p + int (h - 1)^2`` by direct summation.

    ``h_field`` is the induced field of ``density`` (computed by the caller);
    boundary nodes carry ``boundary_value``.
    """
    p = np.asarray(p, dtype=float)
    area = grid.hx * grid.hy
    pin = 0.0
    l2 = 0.0
    for k in range(len(p)):
        pin += p[k] * abs(density[k]) * area
        l2 += (h_field[k] - 1.0) ** 2 * area
    return pin / lam + _gradient_sum(grid, 1.0 / p, h_field, boundary_value) + l2


def quadrature_primal(grid, p, lam, h):
    """``sum (p/lam) |A0 h + 1| + |grad h|^2 / p + h^2`` with zero boundary data.

    ``A0`` is the dense zero-Dirichlet matrix from :func:`dense_system`.
    """
    p = np.asarray(p, dtype=float)
    h = np.asarray(h, dtype=float)
    A0, _ = dense_system(grid, 1.0 / p, 0.0)
    area = grid.hx * grid.hy
    measure = A0 @ h + 1.0
    pin = sum(p[k] * abs(measure[k]) * area for k in range(len(p)))
    l2 = sum(h[k] ** 2 * area for k in range(len(p)))
    return pin / lam + _gradient_sum(grid, 1.0 / p, h, 0.0) + l2


def active_set_obstacle(A, b, psi, candidates=None, tol=1e-12, max_candidates=20):
    """Solve ``min x.A x/2 - b.x`` subject to ``x >= psi`` by trying every active set.

    ``candidates`` restricts the nodes that may be active.  For an M-matrix
    the constrained solution dominates the unconstrained one, so nodes where
    ``psi`` lies below the unconstrained solution can never be active; that
    is the default pruning.  Returns ``(x, active_mask, sets_tried)``.
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    psi = np.asarray(psi, dtype=float)
    n = len(b)
    if candidates is None:
        x_free = np.linalg.solve(A, b)
        candidates = np.flatnonzero(psi >= x_free - tol)
    candidates = np.asarray(candidates, dtype=int)
    if len(candidates) > max_candidates:
        raise ParameterError(f"{len(candidates)} candidate nodes is too many to enumerate")
    tried = 0
    found = []
    for size in range(len(candidates) + 1):
        for subset in itertools.combinations(candidates, size):
            tried += 1
            active = np.zeros(n, dtype=bool)
            active[list(subset)] = True
            free = ~active
            x = psi.copy()
            if free.any():
                rhs = b[free] - A[np.ix_(free, active)] @ psi[active]
                x[free] = np.linalg.solve(A[np.ix_(free, free)], rhs)
            mult = A @ x - b
            scale = 1.0 + np.abs(b).max()
            if np.all(x[free] >= psi[free] - tol * scale) and np.all(mult[active] >= -tol * scale):
                found.append((x, active))
    if not found:
        raise ConvergenceError("no admissible active set", {"sets_tried": tried})
    # the solution is unique; degenerate nodes (x = psi with zero multiplier)
    # may appear in several sets, all with the same x
    x, active = found[0]
    return x, active, tried
