"""Discrete nonlocal operators on the cell grid.

Midpoint quadrature at cell centers turns the model's integrals into sparse
matrices. For interior cells x, y and collar cells z:

    W[x, y] = J(x_c - y_c) * vol(y)        coupling inside the domain
    A[x]    = sum_y W[x, y]                 kernel mass seen from x
    G[x, z] = J(x_c - z_c) * vol(z)         coupling to the collar

The diffusion generator is (L u)[x] = (W u)[x] - A[x] u[x]; the boundary
datum enters through (G g)[x]. Row and column sums of W agree because the
volumes are uniform and J is even, which is what makes L mass neutral: the
total content changes only through G. No renormalization is applied, so A
is strictly below 1 near the boundary exactly as the continuum coefficient.

The Fredholm pair rewrites the stationary problem u = K u + a * (G h) with
a = 1/A and K u = a * (W u). K is self-adjoint in the inner product
weighted by A(x) vol(x) and fixes constants.

Assembly uses KD-tree range queries; an optional FFT path evaluates W u by
embedding the interior field in the full lattice and convolving with the
kernel stencil. Operators serialize to a single .npz with a JSON header.
"""

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.signal import fftconvolve
from scipy.spatial import cKDTree

from .errors import ConfigurationError, UsageError
from .kernels import Kernel, make_kernel


def kernel_matrix(grid, kernel, rows, cols):
    """Sparse matrix of J(x_c - y_c) * vol over two cell index lists."""
    rpts = grid.centers[rows]
    cpts = grid.centers[cols]
    ctree = cKDTree(cpts)
    rtree = cKDTree(rpts)
    neighbor_lists = rtree.query_ball_tree(ctree, r=kernel.d)
    data, ri, ci = [], [], []
    for i, nbrs in enumerate(neighbor_lists):
        if not nbrs:
            continue
        nbrs = np.asarray(nbrs)
        vals = kernel.eval(rpts[i] - cpts[nbrs]) * grid.vol
        keep = vals > 0.0
        if np.any(keep):
            data.append(vals[keep])
            ci.append(nbrs[keep])
            ri.append(np.full(int(np.sum(keep)), i))
    if data:
        data = np.concatenate(data)
        ri = np.concatenate(ri)
        ci = np.concatenate(ci)
    return sp.csr_matrix((data, (ri, ci)), shape=(len(rows), len(cols)))


@dataclass
class NonlocalOperator:
    """Interior coupling W, kernel mass A, and the lattice embedding data."""

    W: sp.csr_matrix
    A: np.ndarray
    vol: float
    kernel: Kernel | None = None
    meta: dict = field(default_factory=dict)
    # lattice embedding for the FFT path (set when assembled from a geometry)
    _lattice_shape: tuple | None = None
    _interior_coords: tuple | None = None
    _stencil: np.ndarray | None = None

    @property
    def n(self):
        return len(self.A)

    @property
    def alpha_min(self):
        return float(np.min(self.A))

    def apply_W(self, u, method="sparse"):
        if method == "sparse":
            return self.W @ u
        if method == "fft":
            return self._apply_W_fft(u)
        raise UsageError(f"unknown apply method {method!r}")

    def _apply_W_fft(self, u):
        if self._stencil is None:
            raise UsageError("FFT path needs an operator assembled from a geometry")
        emb = np.zeros(self._lattice_shape)
        emb[self._interior_coords] = u
        conv = fftconvolve(emb, self._stencil, mode="same")
        return conv[self._interior_coords]


@dataclass
class FluxOperator:
    """Collar-to-interior coupling G; rows align with interior fields."""

    G: sp.csr_matrix
    vol: float

    @property
    def n_interior(self):
        return self.G.shape[0]

    @property
    def n_collar(self):
        return self.G.shape[1]


@dataclass
class FredholmPair:
    """Data of the fixed-point form u = K u + a * (G h).

    a = 1/A, K u = a * (W u), and mu_weights = A * vol is the measure in
    which K is self-adjoint. K fixes constant fields.
    """

    op: NonlocalOperator

    @property
    def a(self):
        return 1.0 / self.op.A

    @property
    def mu_weights(self):
        return self.op.A * self.op.vol

    def apply_K(self, phi):
        return (self.op.W @ phi) / self.op.A


def assemble_diffusion(geometry, kernel):
    """Build W and A over the interior cells of a geometry."""
    if kernel.dim != geometry.grid.dim:
        raise ConfigurationError(
            f"kernel dimension {kernel.dim} does not match grid dimension {geometry.grid.dim}")
    if abs(kernel.d - geometry.d) > 1e-12 * geometry.d:
        raise ConfigurationError(
            f"kernel radius {kernel.d} does not match the geometry collar radius {geometry.d}")
    grid, mask = geometry.grid, geometry.mask
    W = kernel_matrix(grid, kernel, mask.interior, mask.interior)
    A = np.asarray(W.sum(axis=1)).ravel()
    if np.min(A) <= 0.0:
        raise ConfigurationError("kernel mass A vanishes on some cell; grid too coarse for d")

    # lattice embedding for the FFT path
    lat = grid.npts
    coords = grid.lattice_index(mask.interior)
    r = int(np.ceil(kernel.d / grid.h - 1e-9))
    offs = (np.arange(2 * r + 1) - r) * grid.h
    if grid.dim == 1:
        sten_pts = offs.reshape(-1, 1)
        stencil = kernel.eval(sten_pts) * grid.vol
    else:
        gx, gy = np.meshgrid(offs, offs, indexing="ij")
        sten_pts = np.column_stack([gx.ravel(), gy.ravel()])
        stencil = (kernel.eval(sten_pts) * grid.vol).reshape(2 * r + 1, 2 * r + 1)

    return NonlocalOperator(
        W=W, A=A, vol=grid.vol, kernel=kernel,
        meta={"shape": mask.shape.spec(), "h_grid": grid.h, "d": kernel.d,
              "family": kernel.family, "dim": kernel.dim, "n_interior": len(mask.interior)},
        _lattice_shape=lat, _interior_coords=coords, _stencil=stencil)


def assemble_flux(geometry, kernel):
    """Build G mapping collar fields to interior flux densities."""
    grid, mask, collar = geometry.grid, geometry.mask, geometry.collar
    G = kernel_matrix(grid, kernel, mask.interior, collar.exterior)
    return FluxOperator(G=G, vol=grid.vol)


def assemble_collar_coupling(geometry, kernel):
    """Collar-to-collar kernel matrix, needed by the profile recursion."""
    grid, collar = geometry.grid, geometry.collar
    return kernel_matrix(grid, kernel, collar.exterior, collar.exterior)


def apply_L(op, u):
    """Diffusion generator: (W u) - A u. Mass neutral, kills constants."""
    return op.W @ u - op.A * u


def apply_flux(flux_op, g):
    """Interior flux density (G g) of a collar field g."""
    return flux_op.G @ g


def compat_residual(flux_op, h):
    """Signed total flux sum_x vol * (G h)[x].

    This is the discrete form of the double integral of J(x-y) h(y) over
    the domain and its exterior; a stationary state can only exist when it
    vanishes. The acceptance threshold elsewhere is relative to the same
    sum with |h|, which scales like the total flux magnitude.
    """
    return float(np.sum(flux_op.G @ h) * flux_op.vol)


def compat_scale(flux_op, h):
    """Total flux magnitude sum_x vol * (G |h|)[x], the residual's yardstick."""
    return float(np.sum(flux_op.G @ np.abs(h)) * flux_op.vol)


def fredholm_pair(op):
    return FredholmPair(op=op)


def apply_K(pair, phi):
    """Module-level alias for FredholmPair.apply_K."""
    return pair.apply_K(phi)


# ---------------------------------------------------------------------------
# serialization: one .npz with a JSON header string

FORMAT_TAG = "nlflux-operator-v1"


def save_operator(path, op, flux_op=None):
    header = {"format": FORMAT_TAG, "vol": op.vol, "meta": op.meta,
              "has_flux": flux_op is not None}
    if op.kernel is not None:
        header["kernel"] = {"family": op.kernel.family, "d": op.kernel.d, "dim": op.kernel.dim}
    arrays = {
        "header": np.array(json.dumps(header, sort_keys=True)),
        "W_data": op.W.data, "W_indices": op.W.indices, "W_indptr": op.W.indptr,
        "W_shape": np.array(op.W.shape), "A": op.A,
    }
    if flux_op is not None:
        arrays.update({"G_data": flux_op.G.data, "G_indices": flux_op.G.indices,
                       "G_indptr": flux_op.G.indptr, "G_shape": np.array(flux_op.G.shape)})
    np.savez(path, **arrays)


def load_operator(path):
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["header"]))
        if header.get("format") != FORMAT_TAG:
            raise UsageError(f"{path} is not a serialized operator (format tag mismatch)")
        W = sp.csr_matrix((z["W_data"], z["W_indices"], z["W_indptr"]),
                          shape=tuple(z["W_shape"]))
        kern = None
        if "kernel" in header:
            k = header["kernel"]
            kern = make_kernel(k["family"], k["d"], k["dim"])
        op = NonlocalOperator(W=W, A=z["A"].copy(), vol=header["vol"],
                              kernel=kern, meta=header.get("meta", {}))
        flux_op = None
        if header.get("has_flux"):
            G = sp.csr_matrix((z["G_data"], z["G_indices"], z["G_indptr"]),
                              shape=tuple(z["G_shape"]))
            flux_op = FluxOperator(G=G, vol=header["vol"])
    return op, flux_op


def two_cell_operator(j12=0.5, vol=0.5, j0=0.0):
    """Tiny hand-checkable instance: two cells coupled by a single weight.

    Used as an exactly solvable fixture: W is off-diagonal j12 * vol, A is
    the row sum, and every derived quantity has a closed form.
    """
    w = j12 * vol
    w0 = j0 * vol
    W = sp.csr_matrix(np.array([[w0, w], [w, w0]]))
    A = np.asarray(W.sum(axis=1)).ravel()
    return NonlocalOperator(W=W, A=A, vol=vol, meta={"fixture": "two-cell"})
