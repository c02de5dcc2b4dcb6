import numpy as np
import pytest

from nlflux.geometry import build_grid, shape_from_spec
from nlflux.kernels import make_kernel
from nlflux.operators import (apply_L, apply_flux, assemble_collar_coupling,
                              assemble_diffusion, assemble_flux,
                              compat_residual, compat_scale, fredholm_pair,
                              load_operator, save_operator, two_cell_operator)


def test_two_cell_exact_step():
    op = two_cell_operator()
    out = apply_L(op, np.array([1.0, 0.0]))
    assert np.array_equal(out, np.array([-0.25, 0.25]))
    # constants are killed exactly
    assert np.array_equal(apply_L(op, np.ones(2)), np.zeros(2))


def test_row_mass_against_overlap_length(interval_op, interval_geo):
    # A at a cell is the kernel mass the domain captures: for the uniform
    # kernel of radius 0.25 on (0, 1) that is 2 * |[x-1/4, x+1/4] cap (0,1)|,
    # up to the midpoint rule's O(h) snap at the support ends.
    x = interval_geo.grid.centers[interval_geo.mask.interior][:, 0]
    expect = 2.0 * (np.minimum(1.0, x + 0.25) - np.maximum(0.0, x - 0.25))
    h = interval_geo.grid.h
    assert np.max(np.abs(interval_op.A - expect)) <= 2.0 * h
    mid = np.argmin(np.abs(x - 0.5))
    assert interval_op.A[mid] == pytest.approx(1.0, abs=2 * h)
    assert interval_op.alpha_min == pytest.approx(0.5, abs=2 * h)


def test_W_symmetric_with_diagonal(interval_op):
    gap = np.abs(interval_op.W - interval_op.W.T)
    assert gap.max() == 0.0
    diag = interval_op.W.diagonal()
    # J(0) * vol = 2 * 0.05 for the uniform kernel
    assert np.allclose(diag, 0.1, rtol=0, atol=1e-15)


def test_support_tie_excluded(interval_op):
    # centers 0.025 and 0.275 sit at exactly the support radius apart;
    # the pair must not interact
    W = interval_op.W.toarray()
    assert W[0, 5] == 0.0
    assert W[0, 4] > 0.0


def test_row_sums_equal_A(interval_op):
    rows = np.asarray(interval_op.W.sum(axis=1)).ravel() * 1.0
    assert np.allclose(rows, interval_op.A, rtol=0, atol=1e-14)


def test_generator_is_mass_neutral(interval_op, rng):
    u = rng.standard_normal(interval_op.n)
    total = np.sum(apply_L(interval_op, u)) * interval_op.vol
    assert abs(total) <= 1e-13 * np.sum(np.abs(u))


SHAPES = [
    {"kind": "interval", "a": 0.0, "b": 1.0},
    {"kind": "rectangle", "ax": 0.0, "bx": 1.0, "ay": 0.0, "by": 0.6},
    {"kind": "disk", "radius": 1.0},
]


@pytest.mark.parametrize("spec", SHAPES, ids=[s["kind"] for s in SHAPES])
@pytest.mark.parametrize("family", ["uniform", "tent"])
def test_fft_matches_sparse(spec, family, rng):
    shape = shape_from_spec(spec)
    geo = build_grid(shape, d=0.25, h_grid=0.05)
    ker = make_kernel(family, 0.25, shape.dim)
    op = assemble_diffusion(geo, ker)
    u = rng.standard_normal(op.n)
    a = op.apply_W(u, method="sparse")
    b = op.apply_W(u, method="fft")
    scale = np.max(np.abs(a)) + 1e-30
    assert np.max(np.abs(a - b)) / scale < 1e-10


def test_fredholm_fixes_constants(interval_op):
    pair = fredholm_pair(interval_op)
    ones = np.ones(interval_op.n)
    assert np.allclose(pair.apply_K(ones), ones, rtol=0, atol=1e-14)


def test_fredholm_self_adjoint_in_weighted_product(interval_op, rng):
    pair = fredholm_pair(interval_op)
    phi = rng.standard_normal(interval_op.n)
    psi = rng.standard_normal(interval_op.n)
    mu = pair.mu_weights
    lhs = np.sum(pair.apply_K(phi) * psi * mu)
    rhs = np.sum(phi * pair.apply_K(psi) * mu)
    assert abs(lhs - rhs) <= 1e-12 * (abs(lhs) + 1.0)


def test_flux_row_alignment(interval_flux, interval_geo):
    assert interval_flux.n_interior == interval_geo.mask.interior.size
    assert interval_flux.n_collar == interval_geo.collar.exterior.size


def test_flux_of_one_sided_datum(interval_geo, interval_flux):
    # unit datum on the right collar: total inflow is the double kernel
    # integral over (0.75, 1) x (1, 1.25), which is 1/16 in closed form
    y = interval_geo.grid.centers[interval_geo.collar.exterior][:, 0]
    g = (y > 0.5).astype(float)
    res = compat_residual(interval_flux, g)
    assert res == pytest.approx(0.0625, abs=5 * interval_geo.grid.h)
    assert compat_scale(interval_flux, g) == pytest.approx(res, abs=1e-15)
    # inflow only touches cells within reach of the right collar
    inflow = apply_flux(interval_flux, g)
    x = interval_geo.grid.centers[interval_geo.mask.interior][:, 0]
    assert np.all(inflow[x < 0.75] == 0.0)
    assert np.all(inflow[x > 0.96] > 0.0)


def test_flux_of_antisymmetric_datum(interval_geo, interval_flux):
    y = interval_geo.grid.centers[interval_geo.collar.exterior][:, 0]
    g = np.where(y > 0.5, 1.0, -1.0)
    res = compat_residual(interval_flux, g)
    scale = compat_scale(interval_flux, g)
    assert abs(res) <= 1e-13 * scale


def test_collar_coupling_square(interval_geo, interval_kernel):
    C = assemble_collar_coupling(interval_geo, interval_kernel)
    m = interval_geo.collar.exterior.size
    assert C.shape == (m, m)
    gap = np.abs(C - C.T)
    assert gap.max() == 0.0
    # opposite collars are far apart, so the matrix splits in two blocks
    y = interval_geo.grid.centers[interval_geo.collar.exterior][:, 0]
    left, right = np.where(y < 0.5)[0], np.where(y > 0.5)[0]
    assert np.all(C[np.ix_(left, right)].toarray() == 0.0)


def test_save_load_round_trip(tmp_path, interval_op, interval_flux):
    path = tmp_path / "op.npz"
    save_operator(path, interval_op, interval_flux)
    op2, flux2 = load_operator(path)
    assert np.array_equal(op2.A, interval_op.A)
    assert np.array_equal(op2.W.toarray(), interval_op.W.toarray())
    assert op2.vol == interval_op.vol
    assert op2.kernel.family == "uniform"
    assert op2.kernel.d == 0.25
    assert np.array_equal(flux2.G.toarray(), interval_flux.G.toarray())


def test_load_rejects_foreign_file(tmp_path):
    path = tmp_path / "junk.npz"
    np.savez(path, header=np.array("{}"), x=np.arange(3))
    from nlflux.errors import UsageError
    with pytest.raises(UsageError):
        load_operator(path)
