import numpy as np
import pytest

from nlflux.errors import ConfigurationError
from nlflux.evolution import SolverConfig, StaticFlux, run
from nlflux.operators import fredholm_pair, two_cell_operator
from nlflux.stationary import (convergence_verify, kernel_simplicity_check,
                               solve_stationary, spectral_gap)


@pytest.fixture(scope="module")
def antisym_datum(interval_geo):
    y = interval_geo.grid.centers[interval_geo.collar.exterior][:, 0]
    return np.where(y > 0.5, 1.0, -1.0)


def test_stationary_residual(interval_op, interval_flux, antisym_datum):
    sol = solve_stationary(fredholm_pair(interval_op), interval_flux,
                           antisym_datum)
    assert sol.residual <= 1e-8
    assert abs(sol.compat_rel) <= 1e-12
    mass = interval_op.vol * float(np.sum(sol.phi))
    assert mass == pytest.approx(0.0, abs=1e-12)
    # the state inherits the datum's odd symmetry about the midpoint
    assert np.max(np.abs(sol.phi + sol.phi[::-1])) <= 1e-8


def test_stationary_mass_shift(interval_op, interval_flux, antisym_datum):
    pair = fredholm_pair(interval_op)
    s0 = solve_stationary(pair, interval_flux, antisym_datum, target_mass=0.0)
    s2 = solve_stationary(pair, interval_flux, antisym_datum, target_mass=2.0)
    shift = 2.0 / (interval_op.n * interval_op.vol)
    assert np.max(np.abs(s2.phi - s0.phi - shift)) <= 1e-10
    assert interval_op.vol * float(np.sum(s2.phi)) == pytest.approx(2.0, abs=1e-12)


def test_stationary_refuses_net_flux(interval_op, interval_flux, interval_geo):
    y = interval_geo.grid.centers[interval_geo.collar.exterior][:, 0]
    h = (y > 0.5).astype(float)
    with pytest.raises(ConfigurationError) as err:
        solve_stationary(fredholm_pair(interval_op), interval_flux, h)
    assert "net flux" in str(err.value)
    # the measured defect rides along in the message
    assert "0.05" in str(err.value)


def test_zero_datum_gives_constant(interval_op, interval_flux):
    h = np.zeros(interval_flux.n_collar)
    sol = solve_stationary(fredholm_pair(interval_op), interval_flux, h,
                           target_mass=3.0)
    c = 3.0 / (interval_op.n * interval_op.vol)
    assert np.max(np.abs(sol.phi - c)) <= 1e-10
    assert sol.residual <= 1e-10


def test_spectral_gap_two_cell():
    op = two_cell_operator()
    # S = [[0.25, -0.25], [-0.25, 0.25]] has eigenvalues 0 and 0.5
    assert spectral_gap(op) == pytest.approx(0.5, abs=1e-14)


def test_simplicity_two_cell():
    # K = W / A swaps the two cells, so its spectrum is {1, -1}
    rep = kernel_simplicity_check(fredholm_pair(two_cell_operator()))
    assert rep.lam1 == pytest.approx(1.0, abs=1e-14)
    assert rep.lam2 == pytest.approx(-1.0, abs=1e-14)
    assert rep.gap == pytest.approx(2.0, abs=1e-14)


def test_simplicity_interval(interval_op):
    rep = kernel_simplicity_check(fredholm_pair(interval_op))
    assert rep.lam1 == pytest.approx(1.0, abs=1e-12)
    assert rep.gap > 0.05


def test_convergence_verify_meets_gap(interval_op, interval_flux, antisym_datum):
    pair = fredholm_pair(interval_op)
    sol = solve_stationary(pair, interval_flux, antisym_datum)
    beta = 2.0 * spectral_gap(interval_op)
    u0 = sol.phi + np.cos(np.linspace(0.0, np.pi, interval_op.n))
    u0 -= np.mean(u0) - np.mean(sol.phi)  # align masses
    cfg = SolverConfig(scheme="rk4", dt=0.01, t_end=120.0, snapshot_stride=20)
    traj = run(interval_op, interval_flux, StaticFlux(h=antisym_datum), u0, cfg)
    rep = convergence_verify(traj, sol, beta)
    assert not rep.skipped
    assert rep.meets_beta
    assert rep.fitted_rate >= 0.95 * beta
    # the squared distance contracts like exp(-beta t): at t = 120 the
    # error sits near exp(-0.5 * beta * 120) ~ 2e-4 of its initial value
    assert rep.error_final < 1e-3 * rep.error_initial


def test_convergence_verify_skips_at_fixed_point(interval_op, interval_flux,
                                                 antisym_datum):
    sol = solve_stationary(fredholm_pair(interval_op), interval_flux,
                           antisym_datum)
    cfg = SolverConfig(scheme="rk4", dt=0.01, t_end=1.0, snapshot_stride=10)
    traj = run(interval_op, interval_flux, StaticFlux(h=antisym_datum),
               sol.phi, cfg)
    rep = convergence_verify(traj, sol, beta=2.0 * spectral_gap(interval_op))
    assert rep.skipped
    assert rep.meets_beta
