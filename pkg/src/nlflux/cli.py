"""Command line experiment runner.

Subcommands bind the library into reproducible one-shot experiments:

    simulate        integrate a config and write series + final field
    stationary      solve the balance equation, report spectra and decay
    spectral        spectral constants only (no time integration)
    blowup          focusing or nonlinear runs with rate fits and set audit
    nonuniqueness   the vanishing-data fork probe (p < 1)
    verify          run the full acceptance battery

Every command takes --preset NAME or --config PATH plus --out DIR,
--seed K, --threads N. Outputs are deterministic for a fixed config and
seed: text series with documented headers, JSON reports with sorted keys,
field files with lattice indices (see fileio).

Exit codes: 0 success; 2 invalid configuration (message carries the file
position when one exists); 3 stationary refusal for incompatible data
(the measured defect is printed); 4 a predicted divergence did not occur
within budget.
"""

import argparse
import math
import os
import sys

import numpy as np

from . import fileio
from .acceptance import run_all
from .analysis import (blowup_set_compare, blowup_set_estimate,
                       compute_profiles, nonlinear_blowup_set,
                       nonlinear_bound_check, nonlinear_rate_check,
                       nonuniqueness_probe, poincare_constant, rate_fit)
from .config import assemble_experiment, load_config
from .errors import ConfigurationError, NumericalError, UsageError
from .evolution import PowerLawFlux, mass_balance_check, run
from .geometry import build_boundary_chart
from .operators import assemble_collar_coupling, fredholm_pair
from .presets import get_preset, preset_names
from .stationary import convergence_verify, kernel_simplicity_check, solve_stationary


def _load_raw(args):
    if args.preset is not None:
        raw = get_preset(args.preset)
    else:
        raw = load_config(args.config)
    if args.seed is not None:
        raw["seed"] = int(args.seed)
        u0 = raw.get("u0")
        if isinstance(u0, dict) and "seed" in u0:
            u0["seed"] = int(args.seed)
    return raw


def _event_record(traj):
    if traj.event is None:
        return {"triggered": False}
    ev = traj.event
    return {"triggered": True, "time_estimate": ev.time_estimate,
            "trigger": ev.trigger, "t_last": ev.t_last,
            "sup_last": ev.sup_last, "dt_last": ev.dt_last}


def _write_series(out, traj):
    fileio.write_series(os.path.join(out, "series.txt"), {
        "time": traj.times, "mass": traj.mass,
        "flux_integral": traj.flux_integral, "supnorm": traj.supnorm})


def cmd_simulate(args):
    ex = assemble_experiment(_load_raw(args))
    traj = run(ex.op, ex.flux_op, ex.datum, ex.u0, ex.solver)
    out = fileio.ensure_dir(args.out)
    _write_series(out, traj)
    fileio.write_field(os.path.join(out, "u_final.txt"), ex.geometry.grid,
                       ex.geometry.mask.interior, traj.snapshots[-1],
                       shape_spec=ex.raw["shape"])
    report = {"preset": ex.raw.get("name"), "n_snapshots": traj.n_snapshots,
              "t_final": float(traj.times[-1]),
              "mass_residual": mass_balance_check(traj),
              "event": _event_record(traj)}
    fileio.write_report(os.path.join(out, "report.json"), report)
    return 0


def cmd_stationary(args):
    ex = assemble_experiment(_load_raw(args))
    if ex.h is None:
        raise ConfigurationError("stationary solve needs a static datum")
    pair = fredholm_pair(ex.op)
    target = float(ex.raw.get("target_mass", 0.0))
    try:
        sol = solve_stationary(pair, ex.flux_op, ex.h, target_mass=target)
    except ConfigurationError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return 3
    out = fileio.ensure_dir(args.out)
    fileio.write_field(os.path.join(out, "phi.txt"), ex.geometry.grid,
                       ex.geometry.mask.interior, sol.phi,
                       shape_spec=ex.raw["shape"])
    spec = poincare_constant(ex.op, restarts=4, seed=int(ex.raw.get("seed", 0)))
    report = {"residual": sol.residual, "compat": sol.compat,
              "compat_rel": sol.compat_rel, "target_mass": sol.target_mass,
              "cg_iterations": sol.cg_iterations,
              "beta": spec.beta, "lambda1": spec.lambda1,
              "beta_variational": spec.beta_variational,
              "method_agreement": spec.method_agreement}

    # paired decay fit when the config carries an evolution run
    if ex.raw.get("u0") is not None and ex.solver.t_end > 0:
        traj = run(ex.op, ex.flux_op, ex.datum, ex.u0, ex.solver)
        try:
            conv = convergence_verify(traj, sol, spec.beta)
            report["decay"] = {"fitted_rate": conv.fitted_rate,
                               "meets_beta": conv.meets_beta,
                               "n_window": conv.n_window,
                               "skipped": conv.skipped}
        except NumericalError as exc:
            report["decay"] = {"fitted_rate": None, "note": str(exc)}
    fileio.write_report(os.path.join(out, "report.json"), report)
    return 0


def cmd_spectral(args):
    ex = assemble_experiment(_load_raw(args))
    spec = poincare_constant(ex.op, restarts=6, seed=int(ex.raw.get("seed", 0)))
    simp = kernel_simplicity_check(fredholm_pair(ex.op))
    out = fileio.ensure_dir(args.out)
    fileio.write_report(os.path.join(out, "report.json"), {
        "beta": spec.beta, "lambda1": spec.lambda1,
        "beta_variational": spec.beta_variational,
        "method_agreement": spec.method_agreement,
        "averaging_top": simp.lam1, "averaging_second": simp.lam2,
        "averaging_gap": simp.gap})
    return 0


def _blowup_power_law(ex, traj, out):
    alpha = ex.datum.alpha
    T = ex.datum.T
    mask = ex.geometry.mask
    collar_op = assemble_collar_coupling(ex.geometry, ex.kernel)
    prof = compute_profiles(ex.op, ex.flux_op, collar_op, ex.strips, mask,
                            ex.h, alpha)
    strips_rec = [{"strip": i + 1, "cells": s.tolist()}
                  for i, s in enumerate(ex.strips.strips)]
    fileio.write_report(os.path.join(out, "strips.json"), strips_rec)

    predicted = alpha >= 1.0
    if predicted and traj.event is None and traj.times[-1] < T - 1e-3:
        fileio.write_report(os.path.join(out, "report.json"),
                            {"alpha": alpha, "T": T,
                             "event": _event_record(traj),
                             "t_last": float(traj.times[-1]),
                             "sup_last": float(traj.supnorm[-1])})
        print(f"predicted divergence (alpha = {alpha}) did not trigger by "
              f"t = {traj.times[-1]}; sup = {traj.supnorm[-1]}",
              file=sys.stderr)
        return 4

    fits = []
    is_int = float(alpha).is_integer()
    for i in range(1, len(ex.strips.strips) + 1):
        cells = mask.positions(ex.strips.strips[i - 1])
        entry = {"strip": i}
        q = alpha - i
        if is_int and i == int(alpha):
            fit = rate_fit(traj, cells, T, mode="log")
            entry.update(mode="log", slope=fit.exponent, r2=fit.r2,
                         target=float(np.max(prof.unscaled(i)[cells])))
        elif q > 0 and i <= prof.n_levels:
            fit = rate_fit(traj, cells, T, mode="power",
                           profile=prof.scaled(i), profile_exponent=q)
            entry.update(mode="power", exponent=fit.exponent, target=q,
                         r2=fit.r2, profile_error=fit.profile_error)
            fileio.write_field(os.path.join(out, f"profile_w{i}.txt"),
                               ex.geometry.grid, mask.interior, prof.scaled(i),
                               shape_spec=ex.raw["shape"])
        else:
            sup = float(np.max(np.abs(traj.snapshots[:, cells])))
            entry.update(mode="bounded", sup=sup)
        fits.append(entry)
    fileio.write_report(os.path.join(out, "rate_fits.json"), fits)

    report = {"alpha": alpha, "T": T, "event": _event_record(traj)}
    if traj.event is not None:
        est = blowup_set_estimate(traj)
        comp = blowup_set_compare(est, ex.strips, mask,
                                  count=math.floor(alpha))
        report["set_comparison"] = {
            "estimated_cells": est.tolist(),
            "reference_cells": comp.reference.tolist(),
            "sym_diff": comp.sym_diff,
            "missing": comp.missing.tolist(), "extra": comp.extra.tolist()}
    fileio.write_report(os.path.join(out, "report.json"), report)
    if predicted and traj.event is None:
        print(f"predicted divergence (alpha = {alpha}) did not trigger by "
              f"t = {traj.times[-1]}; sup = {traj.supnorm[-1]}",
              file=sys.stderr)
        return 4
    return 0


def _blowup_nonlinear(ex, traj, out):
    p = ex.datum.p
    report = {"p": p, "event": _event_record(traj)}
    if p > 1:
        if traj.event is None:
            fileio.write_report(os.path.join(out, "report.json"), report)
            print(f"predicted divergence (p = {p}) did not trigger by "
                  f"t = {traj.times[-1]}; sup = {traj.supnorm[-1]}",
                  file=sys.stderr)
            return 4
        rep = nonlinear_rate_check(traj, p)
        srep = nonlinear_blowup_set(traj, p, ex.geometry, T=rep.T_estimate)
        report.update({
            "T_estimate": rep.T_estimate, "T_band": list(rep.T_band),
            "exponent": rep.fit.exponent, "expected_exponent": rep.expected_exponent,
            "r2": rep.fit.r2,
            "containment": {"K": srep.K, "depth_limit": srep.depth_limit,
                            "max_depth": srep.max_depth,
                            "contained": srep.contained,
                            "n_cells": int(srep.cells.size)}})
    else:
        gamma0 = float(np.max(ex.flux_op.G @ np.ones(ex.flux_op.n_collar)))
        env = nonlinear_bound_check(traj, p, gamma0)
        report.update({"gamma0": gamma0, "envelope_worst_ratio": env.worst_ratio,
                       "bounded": env.ok and traj.event is None})
    fileio.write_report(os.path.join(out, "report.json"), report)
    return 0


def cmd_blowup(args):
    ex = assemble_experiment(_load_raw(args))
    if not isinstance(ex.datum, PowerLawFlux) and ex.raw.get(
            "datum", {}).get("variant") != "nonlinear":
        raise ConfigurationError(
            "blowup needs a power_law or nonlinear datum")
    traj = run(ex.op, ex.flux_op, ex.datum, ex.u0, ex.solver)
    out = fileio.ensure_dir(args.out)
    _write_series(out, traj)
    if isinstance(ex.datum, PowerLawFlux):
        return _blowup_power_law(ex, traj, out)
    return _blowup_nonlinear(ex, traj, out)


def cmd_nonuniqueness(args):
    ex = assemble_experiment(_load_raw(args))
    probe = ex.raw.get("probe")
    if ex.raw.get("datum", {}).get("variant") != "nonlinear" or probe is None:
        raise ConfigurationError(
            "nonuniqueness needs a nonlinear datum and a probe section")
    p = float(ex.raw["datum"]["p"])
    chart = build_boundary_chart(ex.geometry)
    rep = nonuniqueness_probe(ex.op, ex.flux_op, chart, p,
                              probe["eps_ladder"], ex.geometry,
                              gamma=float(probe.get("gamma", 0.01)),
                              dt=float(probe.get("dt", 1e-3)),
                              t_star=float(probe.get("t_star", 0.5)))
    out = fileio.ensure_dir(args.out)
    fileio.write_report(os.path.join(out, "report.json"), {
        "p": p, "eps_ladder": rep.eps_ladder.tolist(), "t_star": rep.t_star,
        "gamma": rep.gamma, "subsolution_value": rep.subsolution_value,
        "monotone_violation": rep.monotone_violation,
        "subsolution_margin": rep.subsolution_margin,
        "certificate_violation": rep.certificate_violation,
        "trivial_sup": rep.trivial_sup})
    for k, eps in enumerate(rep.eps_ladder):
        fileio.write_field(os.path.join(out, f"u_eps_{k}.txt"),
                           ex.geometry.grid, ex.geometry.mask.interior,
                           rep.final_fields[k], shape_spec=ex.raw["shape"])
    return 0


def cmd_verify(args):
    results = run_all(threads=args.threads, stream=sys.stdout)
    if args.out is not None:
        out = fileio.ensure_dir(args.out)
        fileio.write_report(os.path.join(out, "acceptance.json"),
                            [{"number": r.number, "title": r.title,
                              "passed": r.passed, "details": r.details}
                             for r in results])
    n_fail = sum(not r.passed for r in results)
    print(f"{len(results) - n_fail}/{len(results)} criteria passed")
    return 0 if n_fail == 0 else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="nlflux",
        description="Nonlocal diffusion with prescribed boundary flux: "
                    "simulation and analysis experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {"simulate": cmd_simulate, "stationary": cmd_stationary,
                "spectral": cmd_spectral, "blowup": cmd_blowup,
                "nonuniqueness": cmd_nonuniqueness, "verify": cmd_verify}
    for name, fn in commands.items():
        sp = sub.add_parser(name)
        src = sp.add_mutually_exclusive_group(required=(name != "verify"))
        src.add_argument("--config", help="path to a JSON experiment config")
        src.add_argument("--preset", choices=preset_names(),
                         help="name of a shipped preset")
        sp.add_argument("--out", default=None if name == "verify" else "out",
                        help="output directory")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads for independent runs")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
        sp.set_defaults(fn=fn)
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except (UsageError, NumericalError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
