"""Cartesian cell geometry for a domain and its exterior flux collar.

The domain Omega is covered by a uniform lattice of cells of side h_grid,
extended outward far enough that every exterior point within kernel range
of Omega has a cell. Sets are realized by cell centers: a cell belongs to
the interior when its center lies strictly inside the shape, and to the
collar when its center is outside with distance to the shape below the
kernel radius d. All fields produced elsewhere in the package are arrays
aligned with the interior (or collar) index lists built here.

Strip decompositions peel the interior into layers reachable from a given
collar subset in one kernel hop, two hops, and so on. Distances in the
recursion are center-to-center with a tiny inclusive tolerance, so a layer
boundary that lands exactly on a lattice offset (d an integer multiple of
h_grid) is counted into the nearer strip rather than dropped between two.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree
import scipy.sparse as sp

from .errors import ConfigurationError, UsageError

# inclusive slack, relative to d, for exact lattice ties in set distances
TIE_REL = 1e-9


# ---------------------------------------------------------------------------
# shapes

@dataclass(frozen=True)
class Interval:
    a: float
    b: float
    dim = 1

    def contains(self, pts):
        x = pts[:, 0]
        return (x > self.a) & (x < self.b)

    def exterior_distance(self, pts):
        x = pts[:, 0]
        return np.maximum.reduce([self.a - x, x - self.b, np.zeros_like(x)])

    def boundary_distance(self, pts):
        x = pts[:, 0]
        return np.minimum(np.abs(x - self.a), np.abs(x - self.b))

    def nearest_boundary(self, pts):
        x = pts[:, 0]
        za = np.abs(x - self.a) <= np.abs(x - self.b)
        return np.where(za, self.a, self.b).reshape(-1, 1)

    def bbox(self):
        return np.array([[self.a, self.b]])

    def tubular_width(self):
        return math.inf

    def spec(self):
        return {"kind": "interval", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Rectangle:
    ax: float
    bx: float
    ay: float
    by: float
    dim = 2

    def contains(self, pts):
        return ((pts[:, 0] > self.ax) & (pts[:, 0] < self.bx)
                & (pts[:, 1] > self.ay) & (pts[:, 1] < self.by))

    def _clamped(self, pts):
        cx = np.clip(pts[:, 0], self.ax, self.bx)
        cy = np.clip(pts[:, 1], self.ay, self.by)
        return np.column_stack([cx, cy])

    def exterior_distance(self, pts):
        return np.linalg.norm(pts - self._clamped(pts), axis=1)

    def boundary_distance(self, pts):
        dx = np.minimum(pts[:, 0] - self.ax, self.bx - pts[:, 0])
        dy = np.minimum(pts[:, 1] - self.ay, self.by - pts[:, 1])
        inside = self.contains(pts)
        out = self.exterior_distance(pts)
        return np.where(inside, np.minimum(dx, dy), out)

    def nearest_boundary(self, pts):
        # exterior points project onto the clamped box point (corners included,
        # which extends the tubular construction past where it is exact)
        proj = self._clamped(pts)
        inside = self.contains(pts)
        if np.any(inside):
            p = pts[inside]
            cand = np.stack([
                np.column_stack([np.full(len(p), self.ax), p[:, 1]]),
                np.column_stack([np.full(len(p), self.bx), p[:, 1]]),
                np.column_stack([p[:, 0], np.full(len(p), self.ay)]),
                np.column_stack([p[:, 0], np.full(len(p), self.by)]),
            ])
            dist = np.linalg.norm(cand - p[None, :, :], axis=2)
            proj[inside] = cand[np.argmin(dist, axis=0), np.arange(len(p))]
        return proj

    def bbox(self):
        return np.array([[self.ax, self.bx], [self.ay, self.by]])

    def tubular_width(self):
        return math.inf

    def spec(self):
        return {"kind": "rectangle", "ax": self.ax, "bx": self.bx, "ay": self.ay, "by": self.by}


@dataclass(frozen=True)
class Disk:
    radius: float
    dim = 2

    def contains(self, pts):
        return np.linalg.norm(pts, axis=1) < self.radius

    def exterior_distance(self, pts):
        return np.maximum(np.linalg.norm(pts, axis=1) - self.radius, 0.0)

    def boundary_distance(self, pts):
        return np.abs(self.radius - np.linalg.norm(pts, axis=1))

    def nearest_boundary(self, pts):
        r = np.linalg.norm(pts, axis=1)
        safe = np.where(r > 0, r, 1.0)
        return pts * (self.radius / safe)[:, None]

    def bbox(self):
        r = self.radius
        return np.array([[-r, r], [-r, r]])

    def tubular_width(self):
        return self.radius

    def spec(self):
        return {"kind": "disk", "radius": self.radius}


def shape_from_spec(spec):
    kind = spec.get("kind")
    try:
        if kind == "interval":
            s = Interval(float(spec["a"]), float(spec["b"]))
            if not s.a < s.b:
                raise ConfigurationError(f"interval needs a < b, got {s.a}, {s.b}")
            return s
        if kind == "rectangle":
            s = Rectangle(float(spec["ax"]), float(spec["bx"]), float(spec["ay"]), float(spec["by"]))
            if not (s.ax < s.bx and s.ay < s.by):
                raise ConfigurationError("rectangle needs ax < bx and ay < by")
            return s
        if kind == "disk":
            s = Disk(float(spec["radius"]))
            if not s.radius > 0:
                raise ConfigurationError("disk radius must be positive")
            return s
    except KeyError as e:
        raise ConfigurationError(f"shape spec {spec} missing key {e}") from None
    raise ConfigurationError(f"unknown shape kind {kind!r}")


# ---------------------------------------------------------------------------
# grid and cell sets

@dataclass(frozen=True)
class Grid:
    """Uniform cell lattice covering the shape plus an exterior margin >= d."""

    dim: int
    h: float
    origin: np.ndarray          # lower corner of the lattice
    npts: tuple                 # cells per axis
    centers: np.ndarray         # (n_cells, dim), C-order over the lattice

    @property
    def vol(self):
        return self.h ** self.dim

    @property
    def n_cells(self):
        return len(self.centers)

    def lattice_index(self, flat):
        return np.unravel_index(flat, self.npts)


@dataclass(frozen=True)
class DomainMask:
    shape: object
    interior: np.ndarray        # global cell indices, sorted
    pos: np.ndarray             # global index -> position in interior, or -1

    @property
    def n(self):
        return len(self.interior)

    def positions(self, cells):
        """Translate global cell indices to positions in interior fields."""
        cells = np.asarray(cells, dtype=np.int64)
        p = self.pos[cells]
        if np.any(p < 0):
            raise UsageError("cell set contains non-interior cells")
        return p


@dataclass(frozen=True)
class Collar:
    d: float
    exterior: np.ndarray        # global cell indices of the collar, sorted
    pos: np.ndarray

    @property
    def n(self):
        return len(self.exterior)


@dataclass(frozen=True)
class Geometry:
    """Grid, interior mask and collar bundled with their kernel radius."""

    grid: Grid
    mask: DomainMask
    collar: Collar
    d: float


def _positions(n_global, indices):
    pos = np.full(n_global, -1, dtype=np.int64)
    pos[indices] = np.arange(len(indices))
    return pos


def build_grid(shape, d, h_grid, allow_disconnected=False):
    """Lay the lattice, classify interior and collar cells, check connectivity.

    h_grid must not exceed d/4 so the kernel support spans several cells.
    The interior must be connected under kernel-range adjacency (centers
    closer than d with J > 0 between them); pass allow_disconnected=True
    only for deliberate negative controls.
    """
    if not (h_grid > 0) or not math.isfinite(h_grid):
        raise ConfigurationError(f"h_grid must be positive, got {h_grid}")
    if h_grid > d / 4 + 1e-12 * d:
        raise ConfigurationError(
            f"h_grid={h_grid} too coarse for kernel radius d={d}; need h_grid <= d/4")
    box = shape.bbox()
    n_ext = int(math.ceil(d / h_grid - 1e-9))
    n_core = [int(math.ceil((hi - lo) / h_grid - 1e-9)) for lo, hi in box]
    npts = tuple(nc + 2 * n_ext for nc in n_core)
    origin = np.array([lo - n_ext * h_grid for lo, hi in box])

    axes = [origin[k] + (np.arange(npts[k]) + 0.5) * h_grid for k in range(shape.dim)]
    if shape.dim == 1:
        centers = axes[0].reshape(-1, 1)
    else:
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        centers = np.column_stack([gx.ravel(), gy.ravel()])
    grid = Grid(dim=shape.dim, h=h_grid, origin=origin, npts=npts, centers=centers)

    inside = shape.contains(centers)
    interior = np.flatnonzero(inside)
    if interior.size == 0:
        raise ConfigurationError("no cell centers fall inside the shape; refine h_grid")
    dist = shape.exterior_distance(centers)
    collar_idx = np.flatnonzero(~inside & (dist > 0) & (dist < d))

    mask = DomainMask(shape=shape, interior=interior, pos=_positions(grid.n_cells, interior))
    collar = Collar(d=d, exterior=collar_idx, pos=_positions(grid.n_cells, collar_idx))

    if not allow_disconnected:
        ncomp = interior_components(grid, mask, d)
        if ncomp != 1:
            raise ConfigurationError(
                f"interior splits into {ncomp} kernel-range components; "
                "refine h_grid, enlarge d, or pass allow_disconnected=True")
    return Geometry(grid=grid, mask=mask, collar=collar, d=d)


def interior_components(grid, mask, d):
    """Number of connected components of the interior under |x-y| < d."""
    pts = grid.centers[mask.interior]
    tree = cKDTree(pts)
    pairs = tree.query_pairs(r=d * (1 - 1e-12), output_type="ndarray")
    n = len(pts)
    if n == 1:
        return 1
    data = np.ones(len(pairs))
    adj = sp.coo_matrix((data, (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    ncomp, _ = connected_components(adj, directed=False)
    return ncomp


def distance_to_set(grid, cell, target_indices):
    """Euclidean distance from one cell center to the nearest of a cell set."""
    target_indices = np.asarray(target_indices)
    if target_indices.size == 0:
        raise UsageError("distance_to_set: empty target set")
    diffs = grid.centers[target_indices] - grid.centers[cell]
    return float(np.min(np.linalg.norm(diffs, axis=1)))


# ---------------------------------------------------------------------------
# strip decomposition

@dataclass
class StripDecomposition:
    """Interior layers reachable from a collar support in 1, 2, ... kernel hops.

    strips[i] holds the global cell indices of layer i+1; omegas[i] is the
    interior remainder after removing the first i layers (omegas[0] is the
    whole interior). Layers stop when either the interior is exhausted or a
    hop reaches no new cells.
    """

    d: float
    support: np.ndarray
    strips: list = field(default_factory=list)
    omegas: list = field(default_factory=list)

    @property
    def n_strips(self):
        return len(self.strips)

    def union_of_strips(self, count=None):
        take = self.strips if count is None else self.strips[:count]
        if not take:
            return np.empty(0, dtype=np.int64)
        return np.unique(np.concatenate(take))


def strip_decomposition(geometry, support):
    """Peel the interior into kernel-range layers starting from collar cells.

    support: global indices of collar cells (where the boundary datum lives).
    Distances are center-to-center, inclusive of exact lattice ties.
    """
    grid, mask, d = geometry.grid, geometry.mask, geometry.d
    support = np.asarray(support, dtype=np.int64)
    if support.size == 0:
        raise UsageError("strip decomposition needs a nonempty collar support")
    if np.any(geometry.collar.pos[support] < 0):
        raise UsageError("strip support must consist of collar cells")
    tol = TIE_REL * d
    remaining = mask.interior.copy()
    frontier = grid.centers[support]
    dec = StripDecomposition(d=d, support=support)
    dec.omegas.append(remaining.copy())
    while remaining.size:
        tree = cKDTree(frontier)
        dist, _ = tree.query(grid.centers[remaining])
        take = dist < d + tol
        if not np.any(take):
            break
        layer = remaining[take]
        dec.strips.append(layer)
        remaining = remaining[~take]
        dec.omegas.append(remaining.copy())
        frontier = grid.centers[layer]
    return dec


# ---------------------------------------------------------------------------
# boundary chart

@dataclass(frozen=True)
class BoundaryChart:
    """Normal-fiber chart of the collar.

    For each collar cell y: the nearest boundary point z(y), the offset
    s(y) = |y - z(y)|, and the interior cell (as a position into interior
    fields) nearest to z(y). Trace extensions copy interior values along
    these fibers. For shapes with corners the projection clamps onto the
    boundary, which extends the construction beyond where the normal fiber
    map is one-to-one; for the disk it requires d below the radius.
    """

    boundary_points: np.ndarray   # (n_collar, dim)
    s: np.ndarray                 # (n_collar,)
    trace_cells: np.ndarray       # (n_collar,) positions into interior fields


def build_boundary_chart(geometry):
    grid, mask, collar = geometry.grid, geometry.mask, geometry.collar
    shape = mask.shape
    width = shape.tubular_width()
    if geometry.d >= width:
        raise ConfigurationError(
            f"kernel radius d={geometry.d} must stay below the tubular width {width} of the shape")
    ypts = grid.centers[collar.exterior]
    z = shape.nearest_boundary(ypts)
    s = np.linalg.norm(ypts - z, axis=1)
    tree = cKDTree(grid.centers[mask.interior])
    _, trace = tree.query(z)
    return BoundaryChart(boundary_points=z, s=s, trace_cells=trace.astype(np.int64))
