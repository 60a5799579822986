"""Domain, inclusion, Cartesian grid and the piecewise-constant pinning term.

The outer domain is a disc or an axis-aligned rectangle.  The inclusion S1 is
a disc or a polygon whose closure sits strictly inside the outer domain; S2 is
the rest of the domain.  Nodes are classified by testing the node centre
against the analytic shapes, which gives a staircase approximation of both
boundaries with O(h) geometric error.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import shapely
from shapely.geometry import Polygon

from .errors import DegenerateParameterError, GeometryError, ParameterError

EXTERIOR, S1, S2 = 0, 1, 2

# relative slack used for containment ties (nodes exactly on a boundary)
_TIE = 1e-12


@dataclass(frozen=True)
class DomainSpec:
    """Geometry and material parameters of one computation.

    ``shape`` is ``"disc"`` (centred at the origin, radius ``radius``) or
    ``"rectangle"`` with ``extents = (x0, x1, y0, y1)``.  The inclusion is a
    disc (``inclusion_radius``, ``inclusion_center``) unless ``polygon`` is
    given.  ``a`` is the pinning value on S2.
    """

    shape: str = "disc"
    radius: float = 1.0
    extents: tuple = (0.0, 1.0, 0.0, 1.0)
    inclusion_radius: float = 0.5
    inclusion_center: tuple | None = None
    polygon: tuple | None = None
    a: float = 0.5
    nx: int = 64
    ny: int = 64
    allow_degenerate: bool = False

    def __post_init__(self):
        if self.shape not in ("disc", "rectangle"):
            raise ParameterError(f"unknown outer shape {self.shape!r}")
        if not self.a > 0:
            raise ParameterError(f"pinning value a must be positive, got {self.a}")
        if self.a == 1 and not self.allow_degenerate:
            raise DegenerateParameterError(
                "a = 1 gives a constant pinning term; pass allow_degenerate=True "
                "for self-tests"
            )
        if self.nx < 8 or self.ny < 8:
            raise ParameterError(f"grid must be at least 8x8, got {self.nx}x{self.ny}")
        if self.shape == "disc" and not self.radius > 0:
            raise ParameterError("outer radius must be positive")
        if self.shape == "rectangle":
            x0, x1, y0, y1 = self.extents
            if not (x1 > x0 and y1 > y0):
                raise ParameterError(f"degenerate rectangle extents {self.extents}")
        if self.polygon is None and not self.inclusion_radius > 0:
            raise ParameterError("inclusion radius must be positive")
        if self.polygon is not None and len(self.polygon) < 3:
            raise ParameterError("polygon inclusion needs at least three vertices")

    @classmethod
    def from_mapping(cls, values: dict) -> "DomainSpec":
        """Build a DomainSpec from flat config keys (strings or already-typed values)."""
        kw = {}
        for key, conv in (("shape", str), ("radius", float), ("inclusion_radius", float),
                          ("a", float), ("nx", int), ("ny", int)):
            if key in values:
                kw[key] = conv(values[key])
        if "extents" in values:
            kw["extents"] = tuple(_floats(values["extents"]))
        if "inclusion_center" in values:
            kw["inclusion_center"] = tuple(_floats(values["inclusion_center"]))
        if "polygon" in values:
            flat = _floats(values["polygon"])
            if len(flat) % 2:
                raise ParameterError("polygon needs an even number of coordinates")
            kw["polygon"] = tuple(zip(flat[::2], flat[1::2]))
        if "allow_degenerate" in values:
            v = values["allow_degenerate"]
            kw["allow_degenerate"] = v if isinstance(v, bool) else str(v).lower() in ("1", "true", "yes")
        return cls(**kw)

    @property
    def center(self) -> tuple:
        if self.inclusion_center is not None:
            return tuple(self.inclusion_center)
        if self.shape == "disc":
            return (0.0, 0.0)
        x0, x1, y0, y1 = self.extents
        return (0.5 * (x0 + x1), 0.5 * (y0 + y1))

    @property
    def bounding_box(self) -> tuple:
        if self.shape == "disc":
            r = self.radius
            return (-r, r, -r, r)
        return tuple(self.extents)

    def inclusion_polygon(self) -> Polygon | None:
        return None if self.polygon is None else Polygon(self.polygon)

    def inclusion_area(self) -> float:
        if self.polygon is not None:
            return float(self.inclusion_polygon().area)
        return float(np.pi * self.inclusion_radius**2)

    def in_domain(self, x, y):
        """Strict containment in the outer domain (boundary nodes excluded)."""
        if self.shape == "disc":
            return np.hypot(x, y) < self.radius * (1 - _TIE)
        x0, x1, y0, y1 = self.extents
        sx, sy = _TIE * (x1 - x0), _TIE * (y1 - y0)
        return (x > x0 + sx) & (x < x1 - sx) & (y > y0 + sy) & (y < y1 - sy)

    def in_inclusion(self, x, y):
        """Closed containment in S1; nodes on the interface belong to S1."""
        if self.polygon is not None:
            poly = self.inclusion_polygon()
            scale = max(np.ptp(np.asarray(self.polygon), axis=0))
            return shapely.intersects_xy(poly.buffer(_TIE * scale), x, y)
        cx, cy = self.center
        return np.hypot(x - cx, y - cy) <= self.inclusion_radius * (1 + _TIE)

    def interface_distance(self, x, y):
        """Distance from points to the inclusion boundary."""
        if self.polygon is not None:
            ring = self.inclusion_polygon().exterior
            return shapely.distance(ring, shapely.points(np.asarray(x), np.asarray(y)))
        cx, cy = self.center
        return np.abs(np.hypot(x - cx, y - cy) - self.inclusion_radius)

    def inclusion_margin(self) -> float:
        """Signed distance between the inclusion closure and the outer boundary."""
        if self.polygon is not None:
            pts = np.asarray(self.polygon, dtype=float)
            if self.shape == "disc":
                return float(self.radius - np.hypot(pts[:, 0], pts[:, 1]).max())
            x0, x1, y0, y1 = self.extents
            return float(min(pts[:, 0].min() - x0, x1 - pts[:, 0].max(),
                             pts[:, 1].min() - y0, y1 - pts[:, 1].max()))
        cx, cy = self.center
        r = self.inclusion_radius
        if self.shape == "disc":
            return float(self.radius - np.hypot(cx, cy) - r)
        x0, x1, y0, y1 = self.extents
        return float(min(cx - r - x0, x1 - cx - r, cy - r - y0, y1 - cy - r))


def _floats(value):
    if isinstance(value, str):
        return [float(v) for v in value.replace(";", ",").split(",") if v.strip()]
    return [float(v) for v in value]


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Node-centred Cartesian grid over the bounding box of the domain.

    ``region[j, i]`` tags node ``(x[i], y[j])`` as EXTERIOR, S1 or S2 and
    ``index[j, i]`` is its position among interior nodes (row-major), or -1.
    Per-node arrays of interior data (fields, measures) use that ordering.
    """

    spec: DomainSpec
    x: np.ndarray
    y: np.ndarray
    region: np.ndarray
    index: np.ndarray = field(repr=False)

    @property
    def hx(self) -> float:
        return float(self.x[1] - self.x[0])

    @property
    def hy(self) -> float:
        return float(self.y[1] - self.y[0])

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    @property
    def h(self) -> float:
        return max(self.hx, self.hy)

    @property
    def shape(self) -> tuple:
        return self.region.shape

    @cached_property
    def interior(self) -> np.ndarray:
        return self.region != EXTERIOR

    @cached_property
    def n(self) -> int:
        return int(self.interior.sum())

    @cached_property
    def ij(self) -> tuple:
        """(row, column) indices of the interior nodes in storage order."""
        return np.nonzero(self.interior)

    @cached_property
    def xs(self) -> np.ndarray:
        return self.x[self.ij[1]]

    @cached_property
    def ys(self) -> np.ndarray:
        return self.y[self.ij[0]]

    @cached_property
    def tags(self) -> np.ndarray:
        return self.region[self.ij]

    @cached_property
    def s1(self) -> np.ndarray:
        return self.tags == S1

    @cached_property
    def s2(self) -> np.ndarray:
        return self.tags == S2

    @cached_property
    def boundary(self) -> np.ndarray:
        """Exterior nodes carrying Dirichlet data (4-neighbours of the interior)."""
        inner = self.interior
        near = np.zeros_like(inner)
        near[1:, :] |= inner[:-1, :]
        near[:-1, :] |= inner[1:, :]
        near[:, 1:] |= inner[:, :-1]
        near[:, :-1] |= inner[:, 1:]
        return near & ~inner

    @cached_property
    def interface_distance(self) -> np.ndarray:
        return np.asarray(self.spec.interface_distance(self.xs, self.ys), dtype=float)

    @cached_property
    def grid_hash(self) -> str:
        digest = hashlib.sha256()
        for arr in (self.x, self.y, self.region):
            digest.update(np.ascontiguousarray(arr).tobytes())
        return digest.hexdigest()[:16]

    def neighbours(self, mask: np.ndarray) -> np.ndarray:
        """Interior nodes with a 4-neighbour in ``mask`` (a per-node boolean array)."""
        img = self.to_image(mask.astype(float), fill=0.0) > 0
        near = np.zeros_like(img)
        near[1:, :] |= img[:-1, :]
        near[:-1, :] |= img[1:, :]
        near[:, 1:] |= img[:, :-1]
        near[:, :-1] |= img[:, 1:]
        return near[self.ij]

    def to_image(self, values, fill=np.nan) -> np.ndarray:
        """Scatter per-node values into an (ny, nx) array."""
        img = np.full(self.shape, fill, dtype=float)
        img[self.ij] = values
        return img

    def from_image(self, img) -> np.ndarray:
        return np.asarray(img)[self.ij]


def build_grid(spec: DomainSpec) -> Grid2D:
    """Classify the nodes of a uniform grid over the domain's bounding box.

    Raises
    ------
    GeometryError
        if the inclusion closure is not inside the domain with a margin of two
        cells, or if fewer than four nodes span S1 in either direction.
    """
    x0, x1, y0, y1 = spec.bounding_box
    x = np.linspace(x0, x1, spec.nx)
    y = np.linspace(y0, y1, spec.ny)
    h = max(x[1] - x[0], y[1] - y[0])

    margin = spec.inclusion_margin()
    if margin <= 0:
        raise GeometryError("inclusion closure is not contained in the domain")
    if margin < 2 * h * (1 - 1e-9):
        raise GeometryError(
            f"inclusion lies {margin:.4g} from the outer boundary; need at least "
            f"two cells ({2 * h:.4g})"
        )

    X, Y = np.meshgrid(x, y)
    inside = spec.in_domain(X, Y)
    incl = spec.in_inclusion(X, Y) & inside
    region = np.where(inside, np.where(incl, S1, S2), EXTERIOR).astype(np.int8)

    across = min(incl.sum(axis=1).max(), incl.sum(axis=0).max())
    if across < 4:
        raise GeometryError(f"only {across} nodes across the inclusion; need at least 4")

    index = np.full(region.shape, -1, dtype=np.int64)
    index[inside] = np.arange(int(inside.sum()))
    for arr in (x, y, region, index):
        arr.setflags(write=False)
    return Grid2D(spec, x, y, region, index)


def pinning_field(grid: Grid2D, a: float | None = None, allow_degenerate: bool | None = None):
    """Per-node pinning term: 1 on S1 nodes and ``a`` on S2 nodes."""
    a = grid.spec.a if a is None else float(a)
    if allow_degenerate is None:
        allow_degenerate = grid.spec.allow_degenerate
    if not a > 0:
        raise ParameterError(f"pinning value a must be positive, got {a}")
    if a == 1 and not allow_degenerate:
        raise DegenerateParameterError("a = 1 without the degenerate flag")
    p = np.where(grid.s1, 1.0, a)
    p.setflags(write=False)
    return p
