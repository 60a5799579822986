"""London-type fields driven by the pinning term, Green columns and energies.

All fields are per-node arrays in the grid's interior ordering.  A measure is
stored as a nodal density, so a point mass of weight ``m`` at node ``k`` is
the density ``m / cell_area`` at ``k``.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .elliptic import EllipticOperator, assemble, cg_solve, direct_solve
from .errors import NumericError, ParameterError
from .geometry import Grid2D


@dataclass(frozen=True, eq=False)
class DiscreteMeasure:
    """Signed measure with nodal density; ``mu ~ density * dx``."""

    grid: Grid2D
    density: np.ndarray

    def __post_init__(self):
        if np.shape(self.density) != (self.grid.n,):
            raise ParameterError("density length does not match the grid")

    @classmethod
    def zero(cls, grid):
        return cls(grid, np.zeros(grid.n))

    @classmethod
    def point_masses(cls, grid, nodes, weights):
        dens = np.zeros(grid.n)
        np.add.at(dens, np.asarray(nodes), np.asarray(weights, dtype=float) / grid.cell_area)
        return cls(grid, dens)

    def __add__(self, other):
        return DiscreteMeasure(self.grid, self.density + other.density)

    def __mul__(self, s):
        return DiscreteMeasure(self.grid, s * self.density)

    __rmul__ = __mul__

    def total_variation(self) -> float:
        return float(np.abs(self.density).sum() * self.grid.cell_area)

    def region_mass(self, mask) -> float:
        """|mu|(region) for a per-node boolean mask."""
        return float(np.abs(self.density[mask]).sum() * self.grid.cell_area)

    def mass_s1(self) -> float:
        return self.region_mass(self.grid.s1)

    def mass_s2(self) -> float:
        return self.region_mass(self.grid.s2)


@dataclass(frozen=True, eq=False)
class GreenColumn:
    source: int
    values: np.ndarray


_OPERATORS: OrderedDict = OrderedDict()


def london_operator(grid: Grid2D, coeff, boundary_value: float) -> EllipticOperator:
    """Assembled -div(coeff grad .) + I with constant Dirichlet data (memoized)."""
    coeff = np.asarray(coeff, dtype=float)
    key = (grid.grid_hash, hashlib.sha1(coeff.tobytes()).hexdigest(), float(boundary_value))
    op = _OPERATORS.get(key)
    if op is None:
        op = assemble(grid, coeff, boundary_value)
        _OPERATORS[key] = op
        if len(_OPERATORS) > 8:
            _OPERATORS.popitem(last=False)
    return op


def _solve(op, rhs, method, tol):
    if method == "direct":
        x, _ = direct_solve(op, rhs)
    elif method == "cg":
        x, _ = cg_solve(op, rhs, tol=tol)
    else:
        raise ParameterError(f"unknown linear solver {method!r}")
    if not np.all(np.isfinite(x)):
        raise NumericError("non-finite values in solution", x)
    return x


def solve_h0(grid: Grid2D, p, method: str = "direct", tol: float = 1e-12):
    """Field with no vortices: -div(grad h / p) + h = 0, h = 1 on the boundary."""
    return _solve(london_operator(grid, 1.0 / np.asarray(p), 1.0), None, method, tol)


def solve_hmu(grid: Grid2D, p, mu: DiscreteMeasure, method: str = "direct", tol: float = 1e-12):
    """Induced field of the measure: -div(grad h / p) + h = mu, h = 1 on the boundary."""
    return _solve(london_operator(grid, 1.0 / np.asarray(p), 1.0), mu.density, method, tol)


def green_column(grid: Grid2D, coeff, y: int, method: str = "direct", tol: float = 1e-13) -> GreenColumn:
    """Column x -> G(x, y) of the Green kernel of -div(coeff grad .) + I, zero trace.

    The Dirac mass at interior node ``y`` is the density ``1 / cell_area``.
    """
    y = int(y)
    if not 0 <= y < grid.n:
        raise ParameterError(f"source {y} is not an interior node")
    rhs = np.zeros(grid.n)
    rhs[y] = 1.0 / grid.cell_area
    values = _solve(london_operator(grid, coeff, 0.0), rhs, method, tol)
    return GreenColumn(y, values)


def nearest_node(grid: Grid2D, x: float, y: float) -> int:
    return int(np.argmin((grid.xs - x) ** 2 + (grid.ys - y) ** 2))


def energy_E_lambda(grid: Grid2D, p, lam: float, mu: DiscreteMeasure, h_mu=None) -> float:
    """Limiting energy of a measure.

    ``(1/lam) sum p |mu| + sum (|grad h_mu|^2 / p + |h_mu - 1|^2)``, integrated
    with the cell area and face differences weighted as in the assembly.
    """
    if not lam > 0:
        raise ParameterError("lambda must be positive")
    p = np.asarray(p)
    if h_mu is None:
        h_mu = solve_hmu(grid, p, mu)
    op = london_operator(grid, 1.0 / p, 1.0)
    area = grid.cell_area
    pinning = np.sum(p * np.abs(mu.density)) * area / lam
    return float(pinning + op.gradient_energy(h_mu) + np.sum((h_mu - 1.0) ** 2) * area)


def primal_functional(grid: Grid2D, p, lam: float, h) -> float:
    """Functional minimized by ``h_* - 1`` over fields with zero boundary trace.

    ``sum (p/lam) |op0 h + 1| + |grad h|^2 / p + h^2`` where ``op0`` is the
    discrete operator with zero Dirichlet data; ``op0 h + 1`` is the measure
    whose induced field is ``h + 1``.
    """
    p = np.asarray(p)
    h = np.asarray(h, dtype=float)
    if h.shape != (grid.n,):
        raise ParameterError("field length does not match the grid")
    op0 = london_operator(grid, 1.0 / p, 0.0)
    area = grid.cell_area
    measure = op0.apply(h) + 1.0
    return float(np.sum(p * np.abs(measure)) * area / lam + op0.gradient_energy(h)
                 + np.sum(h * h) * area)


# ---------------------------------------------------------------- CSV I/O

def atomic_write(path, text):
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_field_csv(path, grid: Grid2D, values, name: str = "value", units: str = "dimensionless"):
    """Write ``x,y,value`` rows (row-major node order, 17 significant digits) plus a JSON sidecar."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n,):
        raise ParameterError("field length does not match the grid")
    lines = ["x,y,value"]
    lines += [f"{x:.17g},{y:.17g},{v:.17g}" for x, y, v in zip(grid.xs, grid.ys, values)]
    atomic_write(path, "\n".join(lines) + "\n")
    meta = {"name": name, "units": units, "grid_hash": grid.grid_hash, "nodes": grid.n,
            "nx": grid.shape[1], "ny": grid.shape[0]}
    atomic_write(os.fspath(path) + ".json", json.dumps(meta, indent=2) + "\n")


def read_field_csv(path, grid: Grid2D | None = None):
    """Read a field written by :func:`write_field_csv`; checks the grid hash when given."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    sidecar = os.fspath(path) + ".json"
    if grid is not None:
        if os.path.exists(sidecar):
            with open(sidecar) as fh:
                meta = json.load(fh)
            if meta.get("grid_hash") != grid.grid_hash:
                raise ParameterError("field was written on a different grid")
        if data.shape[0] != grid.n:
            raise ParameterError("row count does not match the grid")
    return data[:, 2].copy()
