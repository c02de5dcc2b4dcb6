"""Acceptance battery: the quantitative checks the suite must pass.

Each criterion is a function taking a shared Fixtures cache and returning
a CriterionResult with the measured numbers in its details string. The
battery is deliberately redundant with the unit tests: it re-derives its
targets from closed forms and hand values at run time instead of trusting
frozen constants, so a regression in any module shows up here as a FAIL
line rather than a silently stale number.

run_all evaluates the criteria in order and prints one line per
criterion. Threads only prewarm the independent trajectory cache;
evaluation order and results are identical for any thread count.
"""

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .analysis import (FIT_WINDOW, blowup_set_compare, blowup_set_estimate,
                       compute_profiles, lyapunov_check, nonlinear_blowup_set,
                       nonlinear_bound_check, nonlinear_rate_check,
                       nonuniqueness_probe, poincare_constant, rate_fit)
from .config import assemble_experiment, build_collar_field
from .errors import ConfigurationError
from .evolution import (SolverConfig, StaticFlux, comparison_check,
                        mass_balance_check, picard_solve, run)
from .geometry import build_boundary_chart, build_grid, shape_from_spec
from .kernels import make_kernel
from .operators import (assemble_collar_coupling, assemble_diffusion,
                        assemble_flux, compat_residual, fredholm_pair,
                        two_cell_operator)
from .presets import get_preset
from .stationary import convergence_verify, solve_stationary


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    details: str

    def line(self):
        tag = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:02d}  {tag}  {self.title:<28s} {self.details}"


class Fixtures:
    """Lazy, thread-safe cache of assembled presets and their trajectories."""

    def __init__(self):
        self._exp = {}
        self._traj = {}
        self._prof = {}
        self._lock = threading.Lock()

    def experiment(self, name):
        with self._lock:
            ex = self._exp.get(name)
        if ex is None:
            ex = assemble_experiment(get_preset(name))
            with self._lock:
                self._exp[name] = ex
        return ex

    def trajectory(self, name):
        with self._lock:
            traj = self._traj.get(name)
        if traj is None:
            ex = self.experiment(name)
            traj = run(ex.op, ex.flux_op, ex.datum, ex.u0, ex.solver)
            with self._lock:
                self._traj[name] = traj
        return traj

    def profiles(self, name, alpha):
        key = (name, alpha)
        with self._lock:
            prof = self._prof.get(key)
        if prof is None:
            ex = self.experiment(name)
            collar_op = assemble_collar_coupling(ex.geometry, ex.kernel)
            prof = compute_profiles(ex.op, ex.flux_op, collar_op, ex.strips,
                                    ex.geometry.mask, ex.h, alpha)
            with self._lock:
                self._prof[key] = prof
        return prof

    def prewarm(self, names, threads=1):
        if threads <= 1:
            for name in names:
                self.trajectory(name)
            return
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(self.trajectory, names))


# ---------------------------------------------------------------------------
# 1. mass identity

_MASS_PRESETS = ("mass-identity", "mass-power-law", "mass-antisym",
                 "mass-disk", "mass-constant")


def criterion_1(fx):
    checks = []
    worst_flux, worst_zero = 0.0, 0.0
    for name in _MASS_PRESETS:
        res = mass_balance_check(fx.trajectory(name))
        worst_flux = max(worst_flux, res)
        checks.append((res < 1e-6, f"{name} {res:.1e}"))
        raw = get_preset(name)
        raw["datum"] = {"variant": "none"}
        ex = assemble_experiment(raw)
        res0 = mass_balance_check(run(ex.op, ex.flux_op, ex.datum, ex.u0, ex.solver))
        worst_zero = max(worst_zero, res0)
        checks.append((res0 < 1e-10, None))
    passed = all(ok for ok, _ in checks)
    details = (f"worst rel residual {worst_flux:.2e} < 1e-6 over {len(_MASS_PRESETS)} "
               f"presets; {worst_zero:.2e} < 1e-10 with zero datum")
    return CriterionResult(1, "mass identity", passed, details)


# ---------------------------------------------------------------------------
# 2. comparison principle

def criterion_2(fx):
    shape = shape_from_spec({"kind": "interval", "a": 0.0, "b": 1.0})
    geo = build_grid(shape, d=0.25, h_grid=0.05)
    ker = make_kernel("uniform", 0.25, 1)
    op = assemble_diffusion(geo, ker)
    flux_op = assemble_flux(geo, ker)
    dt = 0.05
    if dt * float(np.max(op.A)) > 1.0:
        raise RuntimeError("benchmark step violates the monotone step bound")
    cfg = SolverConfig(scheme="euler", dt=dt, t_end=1.0, snapshot_stride=4)
    rng = np.random.default_rng(2024)
    n, nc = op.n, flux_op.n_collar
    worst = 0.0
    for k in range(100):
        u0 = rng.standard_normal(n)
        if k < 50:
            v0 = u0 + np.abs(rng.standard_normal(n))
            datum_u = datum_v = None
        else:
            v0 = u0.copy()
            base = rng.standard_normal(nc)
            datum_u = StaticFlux(base)
            datum_v = StaticFlux(base + np.abs(rng.standard_normal(nc)))
        tu = run(op, flux_op, datum_u, u0, cfg)
        tv = run(op, flux_op, datum_v, v0, cfg)
        worst = max(worst, comparison_check(tu, tv))
    passed = worst <= 1e-12
    details = f"worst ordering violation {worst:.2e} <= 1e-12 over 100 ordered pairs"
    return CriterionResult(2, "comparison principle", passed, details)


# ---------------------------------------------------------------------------
# 3. fixed-point oracle

def criterion_3(fx):
    ex = fx.experiment("picard-bench")
    u_end, rep = picard_solve(ex.op, ex.flux_op, ex.datum, ex.u0,
                              t0=ex.solver.t_end,
                              substeps=ex.solver.picard_substeps)
    raw = get_preset("picard-bench")
    raw["solver"] = dict(raw["solver"], scheme="rk4", dt=1e-3)
    ex_rk = assemble_experiment(raw)
    traj = run(ex_rk.op, ex_rk.flux_op, ex_rk.datum, ex_rk.u0, ex_rk.solver)
    diff = float(np.max(np.abs(u_end - traj.snapshots[-1])))
    ratios = rep.ratios
    ratios = ratios[np.isfinite(ratios)]
    worst_ratio = float(np.max(ratios)) if ratios.size else 0.0
    ok_diff = diff <= 1e-4
    ok_ratio = worst_ratio <= rep.contraction_bound
    details = (f"|picard - rk4| {diff:.2e} <= 1e-4 at t=0.2; iterate ratio "
               f"{worst_ratio:.3f} <= C*t0 = {rep.contraction_bound:.3f} "
               f"({rep.iterations} iterations)")
    return CriterionResult(3, "fixed-point oracle", ok_diff and ok_ratio, details)


# ---------------------------------------------------------------------------
# 4. stationary solve and refusal

def criterion_4(fx):
    ex = fx.experiment("stationary-antisym")
    pair = fredholm_pair(ex.op)
    sol0 = solve_stationary(pair, ex.flux_op, ex.h, target_mass=0.0)
    sol2 = solve_stationary(pair, ex.flux_op, ex.h, target_mass=2.0)
    n, vol = ex.op.n, ex.op.vol
    shift = (2.0 - 0.0) / (n * vol)
    shift_err = float(np.max(np.abs(sol2.phi - sol0.phi - shift)))
    ex_r = fx.experiment("stationary-refusal")
    h_grid = ex_r.geometry.grid.h
    defect = abs(compat_residual(ex_r.flux_op, ex_r.h))
    refused = False
    try:
        solve_stationary(fredholm_pair(ex_r.op), ex_r.flux_op, ex_r.h)
    except ConfigurationError:
        refused = True
    ok = (sol0.residual <= 1e-8 and refused
          and abs(defect - 0.0625) <= 5.0 * h_grid and shift_err <= 1e-10)
    details = (f"residual {sol0.residual:.2e} <= 1e-8; refusal defect {defect:.4f} "
               f"within 0.0625 +- {5.0 * h_grid:.3f}; mass-shift error {shift_err:.2e} <= 1e-10")
    return CriterionResult(4, "stationary solve", ok, details)


# ---------------------------------------------------------------------------
# 5. spectral constant two ways

def criterion_5(fx):
    ex = fx.experiment("spectral-interval")
    rep = poincare_constant(ex.op, restarts=6, seed=3)
    ident = abs(rep.beta - 2.0 * rep.lambda1)
    two = poincare_constant(two_cell_operator(), restarts=4, seed=0)
    ok = (rep.method_agreement <= 1e-6 and ident <= 1e-8
          and abs(two.beta - 1.0) <= 1e-12
          and abs(two.beta_variational - 1.0) <= 1e-12)
    details = (f"route agreement {rep.method_agreement:.2e} <= 1e-6; "
               f"|beta - 2 lambda1| = {ident:.1e}; two-cell beta "
               f"{two.beta:.12f} (eig) / {two.beta_variational:.12f} (variational)")
    return CriterionResult(5, "spectral constant", ok, details)


# ---------------------------------------------------------------------------
# 6. exponential decay rates

def criterion_6(fx):
    checks = []
    slow_rel = None
    for name in ("decay-slow-mode", "decay-random", "decay-forced"):
        ex = fx.experiment(name)
        h = ex.h if ex.h is not None else np.zeros(ex.flux_op.n_collar)
        sol = solve_stationary(fredholm_pair(ex.op), ex.flux_op, h,
                               target_mass=ex.op.vol * float(np.sum(ex.u0)))
        beta = poincare_constant(ex.op, restarts=2).beta
        rep = convergence_verify(fx.trajectory(name), sol, beta)
        checks.append((rep.meets_beta, f"{name} {rep.fitted_rate:.5f}"))
        if name == "decay-slow-mode":
            slow_rel = abs(rep.fitted_rate - beta) / beta
            checks.append((slow_rel <= 0.02, None))
    passed = all(ok for ok, _ in checks)
    texts = [t for _, t in checks if t]
    details = (f"fitted rates {', '.join(texts)} all >= 0.95 beta; "
               f"slow mode off 2 lambda1 by {slow_rel:.2%} <= 2%")
    return CriterionResult(6, "exponential decay", passed, details)


# ---------------------------------------------------------------------------
# 7. energy descent

def criterion_7(fx):
    ex = fx.experiment("lyapunov-static")
    rep = lyapunov_check(fx.trajectory("lyapunov-static"), ex.op, ex.flux_op, ex.h)
    bar = 1e-3 * max(abs(rep.F0), 1e-30)
    raw = get_preset("lyapunov-static")
    raw["datum"] = {"variant": "none"}
    ex0 = assemble_experiment(raw)
    traj0 = run(ex0.op, ex0.flux_op, ex0.datum, ex0.u0, ex0.solver)
    rep0 = lyapunov_check(traj0, ex0.op, ex0.flux_op, None)
    bar0 = 1e-3 * max(abs(rep0.F0), 1e-30)
    ok = (rep.monotone_violation <= 1e-10 and rep.identity_residual < bar
          and rep0.monotone_violation <= 1e-10 and rep0.identity_residual < bar0)
    details = (f"monotone violation {rep.monotone_violation:.1e} <= 1e-10; "
               f"identity residual {rep.identity_residual:.2e} < 1e-3 |F0| = {bar:.2e} "
               f"(zero-datum: {rep0.identity_residual:.2e} < {bar0:.2e})")
    return CriterionResult(7, "energy descent", ok, details)


# ---------------------------------------------------------------------------
# 8. divergence threshold in alpha

_LADDERS = {"ladder-alpha-05": 0.5, "ladder-alpha-1": 1.0,
            "ladder-alpha-15": 1.5, "ladder-alpha-23": 2.3,
            "ladder-alpha-45": 4.5}


def criterion_8(fx):
    ex = fx.experiment("ladder-alpha-05")
    traj = fx.trajectory("ladder-alpha-05")
    T = ex.datum.T
    bounded = (traj.event is None and traj.times[-1] >= T - 1e-4 - 1e-9
               and float(np.max(traj.supnorm)) < 10.0)
    events = []
    for name in ("ladder-alpha-1", "ladder-alpha-15", "ladder-alpha-23"):
        ev = fx.trajectory(name).event
        events.append((name, ev))
    triggered = all(ev is not None for _, ev in events)
    sup05 = float(np.max(fx.trajectory("ladder-alpha-05").supnorm))
    ts = ", ".join(f"{n.split('-')[-1]}: T-hat {ev.time_estimate:.5f}"
                   for n, ev in events if ev is not None)
    details = (f"alpha=0.5 bounded to T-1e-4 (sup {sup05:.3f}, no event); "
               f"events fired for {ts}")
    return CriterionResult(8, "divergence threshold", bounded and triggered, details)


# ---------------------------------------------------------------------------
# 9. strip rates and profiles

def criterion_9(fx):
    checks = []

    ex = fx.experiment("ladder-alpha-15")
    traj = fx.trajectory("ladder-alpha-15")
    prof = fx.profiles("ladder-alpha-15", 1.5)
    mask = ex.geometry.mask
    b1 = mask.positions(ex.strips.strips[0])
    fit1 = rate_fit(traj, b1, ex.datum.T, mode="power",
                    profile=prof.scaled(1), profile_exponent=0.5)
    perr_bar = 10.0 * ex.geometry.grid.h
    checks.append((abs(fit1.exponent - 0.5) <= 0.05,
                   f"a=1.5 B1 exponent {fit1.exponent:.4f}"))
    checks.append((fit1.r2 > 0.99, f"r2 {fit1.r2:.5f}"))
    checks.append((fit1.profile_error < perr_bar,
                   f"profile err {fit1.profile_error:.1e} < {perr_bar:.2f}"))

    ex = fx.experiment("ladder-alpha-23")
    traj = fx.trajectory("ladder-alpha-23")
    mask = ex.geometry.mask
    b2 = mask.positions(ex.strips.strips[1])
    fit2 = rate_fit(traj, b2, ex.datum.T, mode="power")
    omega2 = mask.positions(ex.strips.omegas[2])
    sup_om2 = float(np.max(np.abs(traj.snapshots[:, omega2])))
    checks.append((abs(fit2.exponent - 0.3) <= 0.05,
                   f"a=2.3 B2 exponent {fit2.exponent:.4f}"))
    checks.append((sup_om2 < 1.0, f"omega2 sup {sup_om2:.4f} bounded"))

    ex = fx.experiment("ladder-alpha-1")
    traj = fx.trajectory("ladder-alpha-1")
    prof = fx.profiles("ladder-alpha-1", 1.0)
    mask = ex.geometry.mask
    b1 = mask.positions(ex.strips.strips[0])
    fitl = rate_fit(traj, b1, ex.datum.T, mode="log")
    target = float(np.max(prof.unscaled(1)[b1]))
    rel = abs(fitl.exponent - target) / target
    checks.append((rel <= 0.10, f"a=1 log slope {fitl.exponent:.4f} within "
                                f"{rel:.1%} of {target:.4f}"))

    passed = all(ok for ok, _ in checks)
    details = "; ".join(t for _, t in checks)
    return CriterionResult(9, "strip rates and profiles", passed, details)


# ---------------------------------------------------------------------------
# 10. estimated divergence set

def criterion_10(fx):
    checks = []
    for name, alpha in (("ladder-alpha-15", 1.5), ("ladder-alpha-23", 2.3)):
        ex = fx.experiment(name)
        traj = fx.trajectory(name)
        est = blowup_set_estimate(traj)
        diverging = math.floor(alpha)
        comp = blowup_set_compare(est, ex.strips, ex.geometry.mask, count=diverging)
        interfaces = diverging + 1
        allowance = 2 * interfaces
        checks.append((comp.sym_diff <= allowance,
                       f"a={alpha} sym diff {comp.sym_diff} <= {allowance}"))
    ex = fx.experiment("ladder-alpha-45")
    traj = fx.trajectory("ladder-alpha-45")
    est = blowup_set_estimate(traj)
    mask = ex.geometry.mask
    per_strip = [np.intersect1d(est, mask.positions(s)).size
                 for s in ex.strips.strips]
    global_flag = all(c > 0 for c in per_strip)
    comp = blowup_set_compare(est, ex.strips, mask, count=4)
    allowance = 2 * 5
    checks.append((global_flag and comp.sym_diff <= allowance,
                   f"a=4.5 all {len(per_strip)} strips flagged "
                   f"({per_strip} cells), sym diff {comp.sym_diff} <= {allowance}"))
    passed = all(ok for ok, _ in checks)
    return CriterionResult(10, "divergence set", passed,
                           "; ".join(t for _, t in checks))


# ---------------------------------------------------------------------------
# 11. nonlinear divergence rates and global bounds

def criterion_11(fx):
    checks = []
    for name, p, target in (("nl-p2-disk", 2.0, 1.0), ("nl-p3", 3.0, 0.5)):
        traj = fx.trajectory(name)
        rep = nonlinear_rate_check(traj, p)
        checks.append((abs(rep.fit.exponent - target) <= 0.1,
                       f"p={p:g} exponent {rep.fit.exponent:.4f}"))
        rem = rep.T_estimate - traj.times
        window = (rem >= FIT_WINDOW[0]) & (rem <= FIT_WINDOW[1])
        sup = np.max(traj.snapshots[window], axis=1)
        lb = rep.bound_constant * rem[window] ** (-rep.expected_exponent)
        worst = float(np.min(sup / lb))
        checks.append((worst >= 0.95, f"lower-bound ratio {worst:.3f} >= 0.95"))
    for name, p in (("nl-p05", 0.5), ("nl-p1", 1.0)):
        ex = fx.experiment(name)
        traj = fx.trajectory(name)
        gamma0 = float(np.max(ex.flux_op.G @ np.ones(ex.flux_op.n_collar)))
        rep = nonlinear_bound_check(traj, p, gamma0)
        checks.append((traj.event is None and rep.ok,
                       f"p={p:g} envelope ratio {rep.worst_ratio:.3f} <= 1"))
    passed = all(ok for ok, _ in checks)
    return CriterionResult(11, "nonlinear rates", passed,
                           "; ".join(t for _, t in checks))


# ---------------------------------------------------------------------------
# 12. nonlinear divergence set containment

def criterion_12(fx):
    checks = []
    for name, p, K in (("nl-p2-disk", 2.0, 2), ("nl-p3", 3.0, 1)):
        ex = fx.experiment(name)
        traj = fx.trajectory(name)
        rep_rate = nonlinear_rate_check(traj, p)
        rep = nonlinear_blowup_set(traj, p, ex.geometry, T=rep_rate.T_estimate)
        checks.append((rep.K == K and rep.contained,
                       f"p={p:g}: {rep.cells.size} cells, deepest "
                       f"{rep.max_depth:.4f} <= {rep.depth_limit:.2f} (K={rep.K})"))
    passed = all(ok for ok, _ in checks)
    return CriterionResult(12, "nonlinear set containment", passed,
                           "; ".join(t for _, t in checks))


# ---------------------------------------------------------------------------
# 13. vanishing-data fork

def criterion_13(fx):
    ex = fx.experiment("nonuniq-p05")
    probe = ex.raw["probe"]
    chart = build_boundary_chart(ex.geometry)
    rep = nonuniqueness_probe(ex.op, ex.flux_op, chart, 0.5,
                              probe["eps_ladder"], ex.geometry,
                              gamma=probe["gamma"], dt=probe["dt"],
                              t_star=probe["t_star"])
    ok = (rep.monotone_violation <= 1e-10 and rep.subsolution_margin > 0.0
          and rep.certificate_violation <= 1e-12 and rep.trivial_sup <= 1e-14)
    details = (f"eps-monotone violation {rep.monotone_violation:.1e} <= 1e-10; "
               f"margin above subsolution {rep.subsolution_margin:.2e} > 0 "
               f"(v(t*) = {rep.subsolution_value:.2e}); certificate defect "
               f"{rep.certificate_violation:.1e}; trivial run sup {rep.trivial_sup:.1e}")
    return CriterionResult(13, "vanishing-data fork", ok, details)


# ---------------------------------------------------------------------------
# 14. refinement halving

def criterion_14(fx):
    shape = shape_from_spec({"kind": "interval", "a": 0.0, "b": 1.0})
    ker = make_kernel("uniform", 0.25, 1)

    resids = []
    for h in (0.05, 0.025):
        geo = build_grid(shape, d=0.25, h_grid=h)
        flux_op = assemble_flux(geo, ker)
        hv, _ = build_collar_field(geo, {"name": "linear_balanced"})
        resids.append(abs(compat_residual(flux_op, hv)))
    compat_ratio = resids[1] / resids[0]
    checks = [(0.35 <= compat_ratio <= 0.65,
               f"compat residual ratio {compat_ratio:.4f}")]

    for x in (0.5, 0.1):
        errs = []
        for h in (0.05, 0.025, 0.0125):
            geo = build_grid(shape, d=0.25, h_grid=h)
            op = assemble_diffusion(geo, ker)
            cells = geo.grid.centers[geo.mask.interior][:, 0]
            i = int(np.argmin(np.abs(cells - x)))
            xc = cells[i]
            a_cont = (min(1.0, xc + 0.25) - max(0.0, xc - 0.25)) * 2.0
            errs.append(abs(op.A[i] - a_cont))
        ratios = [errs[k + 1] / errs[k] for k in range(2)]
        ok = all(0.35 <= r <= 0.65 for r in ratios)
        checks.append((ok, f"A error ratios at x={x}: "
                           + ", ".join(f"{r:.3f}" for r in ratios)))
    passed = all(ok for ok, _ in checks)
    return CriterionResult(14, "refinement halving", passed,
                           "; ".join(t for _, t in checks))


# ---------------------------------------------------------------------------

CRITERIA = (criterion_1, criterion_2, criterion_3, criterion_4, criterion_5,
            criterion_6, criterion_7, criterion_8, criterion_9, criterion_10,
            criterion_11, criterion_12, criterion_13, criterion_14)

_HEAVY = ("ladder-alpha-05", "ladder-alpha-1", "ladder-alpha-15",
          "ladder-alpha-23", "ladder-alpha-45", "nl-p2-disk", "nl-p3",
          "nl-p05", "nl-p1", "decay-slow-mode", "decay-random", "decay-forced",
          "lyapunov-static")


def run_all(threads=1, stream=None, fixtures=None):
    """Evaluate every criterion in order; print one line each; return results."""
    fx = fixtures if fixtures is not None else Fixtures()
    fx.prewarm(_HEAVY, threads=threads)
    results = []
    for fn in CRITERIA:
        res = fn(fx)
        results.append(res)
        if stream is not None:
            print(res.line(), file=stream, flush=True)
    return results
