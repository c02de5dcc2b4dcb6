import numpy as np
import pytest

from nlflux.analysis import (FIT_WINDOW, blowup_set_compare,
                             blowup_set_estimate, compute_profiles,
                             lyapunov_check, nonlinear_blowup_set,
                             nonlinear_bound_check, nonlinear_rate_check,
                             nonuniqueness_probe, poincare_constant, rate_fit)
from nlflux.errors import NumericalError, UsageError
from nlflux.evolution import (BlowupEvent, SolverConfig, StaticFlux,
                              Trajectory, run)
from nlflux.geometry import build_boundary_chart, strip_decomposition
from nlflux.operators import (assemble_collar_coupling, fredholm_pair,
                              two_cell_operator)
from nlflux.stationary import solve_stationary, spectral_gap


def make_traj(times, snapshots, vol=0.05, event=None):
    times = np.asarray(times, dtype=float)
    snaps = np.asarray(snapshots, dtype=float)
    z = np.zeros(len(times))
    return Trajectory(times=times, snapshots=snaps,
                      mass=vol * snaps.sum(axis=1),
                      supnorm=np.max(np.abs(snaps), axis=1),
                      supmax=np.max(snaps, axis=1),
                      flux_integral=z, sup_flux_integral=z,
                      event=event, meta={"vol": vol})


# ---------------------------------------------------------------------------
# spectral constant

def test_poincare_two_cell():
    rep = poincare_constant(two_cell_operator(), restarts=3)
    assert rep.lambda1 == pytest.approx(0.5, abs=1e-12)
    assert rep.beta == pytest.approx(1.0, abs=1e-12)
    assert rep.method_agreement <= 1e-6


def test_poincare_routes_agree(interval_op):
    rep = poincare_constant(interval_op, restarts=4)
    assert rep.lambda1 == pytest.approx(spectral_gap(interval_op), abs=1e-12)
    assert rep.beta == pytest.approx(2.0 * rep.lambda1, abs=1e-14)
    assert rep.method_agreement <= 1e-6
    assert rep.beta_variational == pytest.approx(rep.beta, rel=1e-6)


# ---------------------------------------------------------------------------
# energy functional

def test_lyapunov_decreases(interval_op, interval_flux, interval_geo):
    y = interval_geo.grid.centers[interval_geo.collar.exterior][:, 0]
    h = np.where(y > 0.5, 1.0, -1.0)
    sol = solve_stationary(fredholm_pair(interval_op), interval_flux, h)
    u0 = sol.phi + np.sin(np.linspace(0.0, 2 * np.pi, interval_op.n))
    # the identity residual is second order in the snapshot spacing, so a
    # fine stride keeps it far below the 1e-3 |F0| gate
    cfg = SolverConfig(scheme="rk4", dt=5e-4, t_end=2.0, snapshot_stride=1)
    traj = run(interval_op, interval_flux, StaticFlux(h=h), u0, cfg)
    rep = lyapunov_check(traj, interval_op, interval_flux, h)
    assert rep.monotone_violation <= 1e-10
    assert rep.identity_residual <= 1e-3 * max(abs(rep.F0), 1e-30)
    assert rep.F[-1] < rep.F0


def test_lyapunov_flat_at_stationary(interval_op, interval_flux, interval_geo):
    y = interval_geo.grid.centers[interval_geo.collar.exterior][:, 0]
    h = np.where(y > 0.5, 1.0, -1.0)
    sol = solve_stationary(fredholm_pair(interval_op), interval_flux, h)
    cfg = SolverConfig(scheme="rk4", dt=0.01, t_end=1.0, snapshot_stride=5)
    traj = run(interval_op, interval_flux, StaticFlux(h=h), sol.phi, cfg)
    rep = lyapunov_check(traj, interval_op, interval_flux, h)
    scale = max(abs(rep.F0), 1e-30)
    assert np.max(np.abs(rep.F - rep.F0)) <= 1e-10 * scale
    assert rep.monotone_violation <= 1e-12 * scale


def test_lyapunov_zero_datum(interval_op, interval_flux, rng):
    u0 = rng.standard_normal(interval_op.n)
    cfg = SolverConfig(scheme="rk4", dt=0.01, t_end=3.0, snapshot_stride=2)
    traj = run(interval_op, interval_flux, None, u0, cfg)
    rep = lyapunov_check(traj, interval_op, interval_flux, None)
    assert rep.monotone_violation <= 1e-10
    assert np.all(rep.F >= -1e-15)
    assert rep.F[-1] < 5e-2 * rep.F0


# ---------------------------------------------------------------------------
# singularity profiles

@pytest.fixture(scope="module")
def right_setup(interval_geo, interval_kernel, interval_op, interval_flux):
    collar = interval_geo.collar.exterior
    y = interval_geo.grid.centers[collar][:, 0]
    support = collar[y > 0.5]
    strips = strip_decomposition(interval_geo, support)
    collar_op = assemble_collar_coupling(interval_geo, interval_kernel)
    h = (y > 0.5).astype(float)
    return strips, collar_op, h


def test_profiles_match_double_loop(interval_geo, interval_kernel, interval_op,
                                    interval_flux, right_setup):
    strips, collar_op, h = right_setup
    alpha = 2.3
    prof = compute_profiles(interval_op, interval_flux, collar_op, strips,
                            interval_geo.mask, h, alpha)
    assert prof.n_levels == 2

    # independent reconstruction: explicit kernel sums over cell centers
    xs = interval_geo.grid.centers[interval_geo.mask.interior][:, 0]
    ys = interval_geo.grid.centers[interval_geo.collar.exterior][:, 0]
    vol = interval_geo.grid.h

    def kermat(a, b):
        diff = (a[:, None] - b[None, :]).reshape(-1, 1)
        return interval_kernel.eval(diff).reshape(len(a), len(b)) * vol

    G = kermat(xs, ys)
    C = kermat(ys, ys)
    W = kermat(xs, xs)

    I1 = G @ h
    I1c = C @ h
    w1, w1c = I1 / (alpha - 1), I1c / (alpha - 1)
    sel = np.zeros(len(xs))
    sel[interval_geo.mask.positions(strips.union_of_strips(2))] = 1.0
    I2 = G @ w1c + W @ (w1 * sel)
    w2 = I2 / (alpha - 2)

    assert np.max(np.abs(prof.unscaled(1) - I1)) <= 1e-13
    assert np.max(np.abs(prof.scaled(1) - w1)) <= 1e-13
    assert np.max(np.abs(prof.w_collar[0] - w1c)) <= 1e-13
    assert np.max(np.abs(prof.unscaled(2) - I2)) <= 1e-13
    assert np.max(np.abs(prof.scaled(2) - w2)) <= 1e-13

    # the first profile lives on the first strip only and vanishes deeper
    # in; the strip's innermost cell sits at exactly the support radius
    # from the datum (strips include ties, the kernel excludes them), so
    # the profile vanishes there too
    first = interval_geo.mask.positions(strips.strips[0])
    deeper = np.setdiff1d(np.arange(len(xs)), first)
    assert np.all(prof.scaled(1)[deeper] == 0.0)
    w1_first = prof.scaled(1)[first]
    assert w1_first[0] == 0.0
    assert np.all(w1_first[1:] > 0.0)


def test_profiles_level_counts(interval_geo, interval_op, interval_flux,
                               right_setup):
    strips, collar_op, h = right_setup
    prof = compute_profiles(interval_op, interval_flux, collar_op, strips,
                            interval_geo.mask, h, alpha=4.5)
    assert prof.n_levels == 4
    assert len(prof.w) == 4
    # integer alpha: the last level only exists unscaled (log regime)
    prof2 = compute_profiles(interval_op, interval_flux, collar_op, strips,
                             interval_geo.mask, h, alpha=2.0)
    assert prof2.n_levels == 2
    assert len(prof2.w) == 1
    with pytest.raises(UsageError):
        prof2.scaled(2)
    with pytest.raises(UsageError):
        compute_profiles(interval_op, interval_flux, collar_op, strips,
                         interval_geo.mask, h, alpha=-1.0)


def test_profiles_count_truncates(interval_geo, interval_op, interval_flux,
                                  right_setup):
    strips, collar_op, h = right_setup
    full = compute_profiles(interval_op, interval_flux, collar_op, strips,
                            interval_geo.mask, h, alpha=4.5)
    part = compute_profiles(interval_op, interval_flux, collar_op, strips,
                            interval_geo.mask, h, alpha=4.5, count=2)
    assert part.n_levels == 2
    assert np.array_equal(part.unscaled(2), full.unscaled(2))


# ---------------------------------------------------------------------------
# rate fitting

def rem_grid(lo=2e-4, hi=0.5, n=60, T=1.0):
    rem = np.geomspace(hi, lo, n)
    return T - rem, rem


def test_rate_fit_exact_power():
    T = 1.0
    times, rem = rem_grid()
    c = np.array([2.0, 1.0, 0.5])
    snaps = c[None, :] * rem[:, None] ** (-1.3)
    traj = make_traj(times, snaps)
    fit = rate_fit(traj, np.arange(3), T, mode="power",
                   profile=c, profile_exponent=1.3)
    assert fit.exponent == pytest.approx(1.3, abs=1e-9)
    assert fit.intercept == pytest.approx(np.log(2.0), abs=1e-9)
    assert fit.r2 > 1.0 - 1e-12
    assert fit.profile_error <= 1e-12
    assert fit.n_points >= 10
    assert FIT_WINDOW[0] <= T - fit.window[1] <= T - fit.window[0] <= FIT_WINDOW[1]


def test_rate_fit_exact_log():
    T = 1.0
    times, rem = rem_grid()
    snaps = (3.0 + 0.45 * (-np.log(rem)))[:, None]
    fit = rate_fit(make_traj(times, snaps), np.array([0]), T, mode="log")
    assert fit.exponent == pytest.approx(0.45, abs=1e-10)
    assert fit.intercept == pytest.approx(3.0, abs=1e-9)


def test_rate_fit_guards():
    times, rem = rem_grid()
    snaps = rem[:, None] ** (-1.0)
    traj = make_traj(times, snaps)
    with pytest.raises(UsageError):
        rate_fit(traj, np.empty(0, dtype=np.int64), 1.0)
    with pytest.raises(UsageError):
        rate_fit(traj, np.array([0]), 1.0, mode="cubic")
    # a run that stops far short of T cannot resolve the window
    early = make_traj(times[times < 0.7], snaps[times < 0.7])
    with pytest.raises(NumericalError):
        rate_fit(early, np.array([0]), 1.0)


# ---------------------------------------------------------------------------
# blow-up sets

def test_blowup_set_estimate_synthetic():
    T = 1.0
    times, rem = rem_grid(lo=1e-3, hi=0.5, n=40)
    n = 20
    snaps = np.zeros((len(times), n))
    snaps[:, [17, 18, 19]] = rem[:, None] ** (-1.0)
    snaps[:, [5, 6]] = 0.8
    est = blowup_set_estimate(make_traj(times, snaps), T=T)
    assert np.array_equal(est, np.array([17, 18, 19]))


def test_blowup_set_estimate_needs_event():
    times, rem = rem_grid(n=20)
    traj = make_traj(times, rem[:, None] ** (-1.0))
    with pytest.raises(UsageError):
        blowup_set_estimate(traj)  # no event and no T


def test_blowup_set_compare(interval_geo, right_setup):
    strips, _, _ = right_setup
    mask = interval_geo.mask
    ref = mask.positions(strips.union_of_strips(1))
    same = blowup_set_compare(ref, strips, mask, count=1)
    assert same.sym_diff == 0
    perturbed = np.append(ref[1:], 0)
    cmp2 = blowup_set_compare(perturbed, strips, mask, count=1)
    assert cmp2.missing.size == 1
    assert cmp2.extra.size == 1
    assert cmp2.sym_diff == 2


# ---------------------------------------------------------------------------
# nonlinear flux diagnostics

def test_nonlinear_rate_synthetic_floor():
    T, p = 1.0, 2.0
    times, rem = rem_grid()
    snaps = rem[:, None] ** (-1.0)  # exactly the closed-form floor for p = 2
    ev = BlowupEvent(time_estimate=T, trigger="supnorm_threshold",
                     t_last=times[-1], sup_last=float(snaps[-1, 0]),
                     dt_last=1e-4)
    rep = nonlinear_rate_check(make_traj(times, snaps, event=ev), p)
    assert rep.expected_exponent == pytest.approx(1.0)
    assert rep.bound_constant == pytest.approx(1.0)
    assert rep.fit.exponent == pytest.approx(1.0, abs=1e-9)
    assert rep.worst_bound_ratio == pytest.approx(1.0, abs=1e-12)
    assert rep.bound_ok
    assert rep.T_band[0] <= T <= rep.T_band[1]


def test_nonlinear_rate_guards():
    times, rem = rem_grid()
    traj = make_traj(times, rem[:, None] ** (-1.0))
    with pytest.raises(UsageError):
        nonlinear_rate_check(traj, 0.5)
    with pytest.raises(NumericalError):
        nonlinear_rate_check(traj, 2.0)  # no recorded event


def test_envelope_p_half_exact():
    times = np.linspace(0.0, 3.0, 40)
    snaps = ((times + 1.0) ** 2)[:, None]
    rep = nonlinear_bound_check(make_traj(times, snaps), p=0.5, gamma0=2.0)
    assert rep.worst_ratio == pytest.approx(1.0, abs=1e-12)
    assert rep.ok
    # growth above quadratic escapes the envelope (same starting value,
    # so the envelope constant cannot absorb it)
    fast = ((times + 1.0) ** 2.3)[:, None]
    bad = nonlinear_bound_check(make_traj(times, fast), p=0.5, gamma0=2.0)
    assert not bad.ok
    assert bad.worst_ratio == pytest.approx(4.0 ** 0.3, abs=1e-12)


def test_envelope_p_one_exact():
    times = np.linspace(0.0, 2.0, 30)
    snaps = (0.7 * np.exp(1.5 * times))[:, None]
    rep = nonlinear_bound_check(make_traj(times, snaps), p=1.0, gamma0=1.5)
    assert rep.worst_ratio == pytest.approx(1.0, abs=1e-12)
    assert rep.ok
    with pytest.raises(UsageError):
        nonlinear_bound_check(make_traj(times, snaps), p=2.0, gamma0=1.0)


def test_nonlinear_set_containment(interval_geo):
    T = 1.0
    times, rem = rem_grid(lo=1e-3, hi=0.5, n=40)
    n = interval_geo.mask.interior.size
    xs = interval_geo.grid.centers[interval_geo.mask.interior][:, 0]
    snaps = np.full((len(times), n), 0.3)
    shallow = np.nonzero(xs > 0.8)[0]
    snaps[:, shallow] = rem[:, None] ** (-1.0)
    rep = nonlinear_blowup_set(make_traj(times, snaps), p=2.0,
                               geometry=interval_geo, T=T)
    assert np.array_equal(rep.cells, shallow)
    assert rep.K == 2
    assert rep.depth_limit == pytest.approx(0.5)
    assert rep.contained
    # p = 3 narrows the band to one kernel width; a mid-domain cell breaks it
    deep = int(np.argmin(np.abs(xs - 0.475)))
    snaps[:, deep] = rem ** (-1.0)
    rep2 = nonlinear_blowup_set(make_traj(times, snaps), p=3.0,
                                geometry=interval_geo, T=T)
    assert not rep2.contained
    assert rep2.max_depth == pytest.approx(0.475, abs=1e-12)


# ---------------------------------------------------------------------------
# non-uniqueness

def test_nonuniqueness_probe_interval(interval_geo, interval_op, interval_flux):
    chart = build_boundary_chart(interval_geo)
    rep = nonuniqueness_probe(interval_op, interval_flux, chart, p=0.5,
                              eps_ladder=[0.2, 0.1], geometry=interval_geo)
    assert rep.final_fields.shape == (2, interval_op.n)
    assert rep.monotone_violation <= 1e-10
    assert rep.subsolution_value == pytest.approx(0.01 * 0.0625, abs=1e-15)
    assert rep.subsolution_margin > 0.0
    assert rep.certificate_violation <= 1e-12
    assert rep.trivial_sup <= 1e-14
    depths = np.minimum(
        interval_geo.grid.centers[interval_geo.mask.interior][rep.support, 0],
        1.0 - interval_geo.grid.centers[interval_geo.mask.interior][rep.support, 0])
    assert np.all(depths < 0.5 * interval_geo.d)


def test_nonuniqueness_probe_guards(interval_geo, interval_op, interval_flux):
    chart = build_boundary_chart(interval_geo)
    with pytest.raises(UsageError):
        nonuniqueness_probe(interval_op, interval_flux, chart, p=1.5,
                            eps_ladder=[0.1], geometry=interval_geo)
    with pytest.raises(UsageError):
        nonuniqueness_probe(interval_op, interval_flux, chart, p=0.5,
                            eps_ladder=[], geometry=interval_geo)
