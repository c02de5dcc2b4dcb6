"""Time integration of the nonlocal boundary-flux model.

The semi-discrete system on interior fields is

    du/dt = (W u) - A u + (G g(t))

with the boundary datum g living on the collar. Three steppers are
provided. euler is written in the monotone form

    u_new = (1 - dt A) u + dt (W u + G g)

whose coefficients are nonnegative when dt max(A) <= 1; comparison and
positivity then survive in floating point, not just in exact arithmetic.
rk4 is the accuracy workhorse. exponential freezes the coupling term and
integrates the absorption exactly,

    u_new = e^(-A dt) u + (1 - e^(-A dt)) / A (W u + G g),

which is unconditionally positivity preserving but trades away the exact
mass bookkeeping of the polynomial schemes.

The recorded flux integral accumulates, per step, exactly the flux mass
the scheme itself injected (left endpoint for euler, Simpson-weighted
stages for rk4), so for euler and rk4 the identity

    mass(t) = mass(0) + flux_integral(t)

holds to rounding. For exponential it holds to O(dt). A running majorant
integral of sup_x (G g) is kept alongside for the sup bound check.

Power-law data g = h (T-t)^(-alpha) get adaptive steps dt proportional to
the remaining time, so the approach to T is sampled log-uniformly.
Nonlinear trace data g = (trace u)^p cap the per-step relative growth
instead. A blow-up event is declared when the sup norm crosses the
configured threshold or leaves the finite range; the blow-up time is then
extrapolated from the last three steps under a power-law growth model.

picard_solve is a deliberately independent second solver: the integral
fixed-point map is iterated on a time grid with trapezoid quadrature. Its
contraction constant is certified a priori by C = 2 max(A) + 1, and the
measured per-iteration decay of the updates must stay below C t0.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import ConfigurationError, NumericalError, UsageError
from .operators import apply_L

SCHEMES = ("euler", "rk4", "exponential", "picard")


# ---------------------------------------------------------------------------
# boundary data

@dataclass
class StaticFlux:
    """g(t) = h, a fixed collar field."""
    h: np.ndarray


@dataclass
class PowerLawFlux:
    """g(t) = h * (T - t)^(-alpha); the forcing focuses as t -> T."""
    h: np.ndarray
    T: float
    alpha: float


@dataclass
class NonlinearTraceFlux:
    """g(t) = f(trace u) with f(s) = s^p; negative traces are clipped.

    With regularize_eps set, f is linearized below eps/2 (continuous match,
    slope (eps/2)^(p-1)), which keeps f Lipschitz near zero for p < 1. A
    solution that stays above eps never sees the linear branch.
    """
    p: float
    chart: object
    regularize_eps: float | None = None

    def flux_values(self, ubar):
        s = np.maximum(ubar, 0.0)
        if self.regularize_eps is None:
            return s ** self.p
        half = 0.5 * self.regularize_eps
        out = np.where(s >= half, s, half) ** self.p
        low = s < half
        if np.any(low):
            out[low] = half ** (self.p - 1.0) * s[low]
        return out


@dataclass
class TabulatedFlux:
    """g(t) interpolated linearly between tabulated collar fields."""
    times: np.ndarray
    fields: np.ndarray  # (n_times, n_collar)

    def at(self, t):
        ts = self.times
        if t <= ts[0]:
            return self.fields[0]
        if t >= ts[-1]:
            return self.fields[-1]
        k = int(np.searchsorted(ts, t) - 1)
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        return (1.0 - w) * self.fields[k] + w * self.fields[k + 1]


def extend_trace(chart, u):
    """Extend an interior field to the collar along normal fibers."""
    return u[chart.trace_cells]


def collar_values(datum, t, u):
    """Evaluate the boundary datum as a collar field; None means g = 0."""
    if datum is None:
        return None
    if isinstance(datum, StaticFlux):
        return datum.h
    if isinstance(datum, PowerLawFlux):
        rem = datum.T - t
        if rem <= 0.0:
            raise UsageError(f"power-law datum evaluated at t={t} past its focusing time {datum.T}")
        return datum.h * rem ** (-datum.alpha)
    if isinstance(datum, NonlinearTraceFlux):
        return datum.flux_values(extend_trace(datum.chart, u))
    if isinstance(datum, TabulatedFlux):
        return datum.at(t)
    raise UsageError(f"unknown boundary datum {type(datum).__name__}")


# ---------------------------------------------------------------------------
# configuration and results

@dataclass
class SolverConfig:
    scheme: str = "rk4"
    dt: float = 1e-3
    t_end: float = 1.0
    adaptive: bool = False
    adaptive_fraction: float = 0.05
    snapshot_stride: int = 1
    blowup_threshold: float = 1e8
    picard_substeps: int = 256

    def validate(self, op, datum, u0):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}, expected one of {SCHEMES}")
        if not (self.dt > 0) or not math.isfinite(self.dt):
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if not (self.t_end > 0):
            raise ConfigurationError(f"t_end must be positive, got {self.t_end}")
        if self.snapshot_stride < 1:
            raise ConfigurationError("snapshot_stride must be >= 1")
        if not (0 < self.adaptive_fraction <= 1):
            raise ConfigurationError("adaptive_fraction must lie in (0, 1]")
        if self.scheme == "euler" and self.dt * float(np.max(op.A)) > 1.0 + 1e-12:
            raise ConfigurationError(
                f"euler monotonicity needs dt * max(A) <= 1, got {self.dt * float(np.max(op.A)):.3g}")
        if float(np.max(u0)) >= self.blowup_threshold:
            raise ConfigurationError("blowup_threshold must exceed the initial sup norm")
        if isinstance(datum, PowerLawFlux) and self.t_end >= datum.T:
            raise ConfigurationError(
                f"t_end={self.t_end} must stay below the focusing time T={datum.T}")


@dataclass
class BlowupEvent:
    time_estimate: float
    trigger: str              # "supnorm_threshold" or "nonfinite"
    t_last: float
    sup_last: float
    dt_last: float


@dataclass
class Trajectory:
    times: np.ndarray
    snapshots: np.ndarray          # (n_snap, n_interior)
    mass: np.ndarray
    supnorm: np.ndarray            # max |u|
    supmax: np.ndarray             # max u (signed), for the sup bound
    flux_integral: np.ndarray      # scheme-consistent injected flux mass
    sup_flux_integral: np.ndarray  # integral of sup_x (G g)
    event: BlowupEvent | None
    meta: dict = field(default_factory=dict)

    @property
    def n_snapshots(self):
        return len(self.times)


# ---------------------------------------------------------------------------
# single steps

def step(scheme, op, flux_op, g, u, t, dt):
    """Advance u by one step of the chosen scheme and return the new field.

    picard is not a one-step scheme; ask run() or picard_solve for it.
    """
    if scheme == "picard":
        raise ConfigurationError("picard advances whole time windows; use run() or picard_solve")
    u_new, _, _ = _step_full(op, flux_op, g, u, t, dt, scheme)
    return u_new


def _step_full(op, flux_op, datum, u, t, dt, scheme):
    """One step returning (u_new, flux_mass, sup_g_left).

    flux_mass is the flux content the step injected, measured with the
    scheme's own quadrature; sup_g_left is sup_x (G g) at the step start,
    for the majorant accumulation of u-dependent data.
    """
    vol = op.vol

    def flux_field(tt, uu):
        g = collar_values(datum, tt, uu)
        if g is None:
            return None
        return flux_op.G @ g

    if scheme == "euler":
        f = flux_field(t, u)
        if f is None:
            u_new = (1.0 - dt * op.A) * u + dt * (op.W @ u)
            return u_new, 0.0, 0.0
        u_new = (1.0 - dt * op.A) * u + dt * (op.W @ u + f)
        return u_new, dt * vol * float(np.sum(f)), float(np.max(f))

    if scheme == "exponential":
        decay = np.exp(-op.A * dt)
        gain = (1.0 - decay) / op.A
        f = flux_field(t, u)
        if f is None:
            u_new = decay * u + gain * (op.W @ u)
            return u_new, 0.0, 0.0
        u_new = decay * u + gain * (op.W @ u + f)
        return u_new, vol * float(np.sum(gain * f)), float(np.max(f))

    if scheme == "rk4":
        def rhs(tt, uu):
            f = flux_field(tt, uu)
            if f is None:
                return apply_L(op, uu), 0.0, 0.0
            return apply_L(op, uu) + f, float(np.sum(f)), float(np.max(f))

        k1, s1, m1 = rhs(t, u)
        k2, s2, _ = rhs(t + 0.5 * dt, u + 0.5 * dt * k1)
        k3, s3, _ = rhs(t + 0.5 * dt, u + 0.5 * dt * k2)
        k4, s4, _ = rhs(t + dt, u + dt * k3)
        u_new = u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        flux_mass = (dt / 6.0) * vol * (s1 + 2.0 * s2 + 2.0 * s3 + s4)
        return u_new, flux_mass, m1

    raise ConfigurationError(f"unknown scheme {scheme!r}")


# ---------------------------------------------------------------------------
# majorant bookkeeping

def _majorant_increment(datum, flux_op, t, dt, sup_g_left):
    """Increment of the integral of sup_x (G g) over [t, t + dt].

    Closed forms for static and power-law data; left-endpoint sums (the
    euler-consistent choice) otherwise.
    """
    if datum is None:
        return 0.0
    if isinstance(datum, StaticFlux):
        return dt * sup_g_left
    if isinstance(datum, PowerLawFlux):
        T, al = datum.T, datum.alpha
        peak = sup_g_left * (T - t) ** datum.alpha  # sup_x (G h)
        if abs(al - 1.0) < 1e-14:
            return peak * math.log((T - t) / (T - t - dt))
        return peak * ((T - t - dt) ** (1 - al) - (T - t) ** (1 - al)) / (al - 1.0)
    return dt * sup_g_left


# ---------------------------------------------------------------------------
# blow-up time extrapolation

def estimate_blowup_time(history):
    """Extrapolate the divergence time from the last three (t, sup) samples.

    Assumes sup ~ C (T - t)^(-q) and solves for the T that makes the two
    consecutive log-growth ratios consistent; falls back to the last time
    plus the last step when the samples do not describe accelerating
    growth. Returns (T_estimate, q_estimate_or_None).
    """
    (t1, s1), (t2, s2), (t3, s3) = history[-3:]
    if not (s1 > 0 and s2 > s1 and s3 > s2):
        return t3 + (t3 - t2), None
    r1 = math.log(s2 / s1)
    r2 = math.log(s3 / s2)

    def mismatch(T):
        return r1 * math.log((T - t2) / (T - t3)) - r2 * math.log((T - t1) / (T - t2))

    lo = t3 + 1e-14 * max(1.0, abs(t3))
    hi = t3 + 100.0 * (t3 - t1)
    flo = mismatch(lo)
    fhi = mismatch(hi)
    if not (np.isfinite(flo) and np.isfinite(fhi)) or flo * fhi > 0:
        return t3 + (t3 - t2), None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = mismatch(mid)
        if flo * fm <= 0:
            hi = mid
        else:
            lo, flo = mid, fm
        if hi - lo < 1e-15 * max(1.0, hi):
            break
    T = 0.5 * (lo + hi)
    q = r2 / math.log((T - t2) / (T - t3))
    return T, q


# ---------------------------------------------------------------------------
# the main loop

def run(op, flux_op, datum, u0, config):
    """Integrate from u0 and record a Trajectory at the snapshot stride.

    The picard scheme re-anchors the integral fixed point on consecutive
    windows short enough to contract, snapshotting at window ends.
    """
    u0 = np.asarray(u0, dtype=float)
    config.validate(op, datum, u0)
    if config.scheme == "picard":
        return _picard_run(op, flux_op, datum, u0, config)
    vol = op.vol
    c_a = config.adaptive_fraction

    t = 0.0
    u = u0.copy()
    flux_mass = 0.0
    majorant = 0.0

    times = [0.0]
    snaps = [u.copy()]
    mass = [vol * float(np.sum(u))]
    supn = [float(np.max(np.abs(u)))]
    supm = [float(np.max(u))]
    flux_series = [0.0]
    majorant_series = [0.0]

    history = [(0.0, supn[-1])]
    event = None
    nsteps = 0
    dt_n = config.dt
    t_end = config.t_end

    while t < t_end - 1e-14 * max(1.0, t_end):
        dt_n = config.dt
        if config.adaptive and isinstance(datum, PowerLawFlux):
            dt_n = min(dt_n, c_a * (datum.T - t))
        elif config.adaptive and isinstance(datum, NonlinearTraceFlux):
            g = collar_values(datum, t, u)
            r = apply_L(op, u) + flux_op.G @ g
            scale = float(np.max(np.abs(r)))
            if scale > 0:
                dt_n = min(dt_n, c_a * (float(np.max(np.abs(u))) + 1.0) / scale)
        dt_n = min(dt_n, t_end - t)

        u, dflux, sup_g = _step_full(op, flux_op, datum, u, t, dt_n, config.scheme)
        flux_mass += dflux
        majorant += _majorant_increment(datum, flux_op, t, dt_n, sup_g)
        t += dt_n
        nsteps += 1

        s_abs = float(np.max(np.abs(u))) if np.all(np.isfinite(u)) else math.inf
        history.append((t, s_abs))
        if len(history) > 4:
            history.pop(0)

        hit_end = t >= t_end - 1e-14 * max(1.0, t_end)
        if not math.isfinite(s_abs):
            T_est, _ = estimate_blowup_time(history[:-1]) if len(history) >= 4 else (t, None)
            event = BlowupEvent(time_estimate=T_est, trigger="nonfinite",
                                t_last=t, sup_last=s_abs, dt_last=dt_n)
        elif s_abs > config.blowup_threshold:
            T_est, _ = estimate_blowup_time(history)
            event = BlowupEvent(time_estimate=T_est, trigger="supnorm_threshold",
                                t_last=t, sup_last=s_abs, dt_last=dt_n)

        if nsteps % config.snapshot_stride == 0 or hit_end or event is not None:
            times.append(t)
            snaps.append(u.copy())
            mass.append(vol * float(np.sum(u)))
            supn.append(s_abs)
            supm.append(float(np.max(u)) if math.isfinite(s_abs) else math.inf)
            flux_series.append(flux_mass)
            majorant_series.append(majorant)
        if event is not None:
            break

    return Trajectory(
        times=np.array(times), snapshots=np.array(snaps), mass=np.array(mass),
        supnorm=np.array(supn), supmax=np.array(supm),
        flux_integral=np.array(flux_series), sup_flux_integral=np.array(majorant_series),
        event=event,
        meta={"scheme": config.scheme, "dt": config.dt, "t_end": config.t_end,
              "adaptive": config.adaptive, "steps": nsteps, "vol": vol,
              "blowup_threshold": config.blowup_threshold})


# ---------------------------------------------------------------------------
# integral fixed-point solver (independent route)

@dataclass
class PicardReport:
    iterations: int
    diffs: np.ndarray
    contraction_bound: float  # C * t0 with C = 2 max(A) + 1

    @property
    def ratios(self):
        d = self.diffs
        with np.errstate(divide="ignore", invalid="ignore"):
            return d[1:] / d[:-1]


def picard_solve(op, flux_op, datum, u0, t0, substeps=256, tol=1e-10, max_iter=10000,
                 t_start=0.0, return_path=False):
    """Iterate the integral map w -> u0 + int (L w + G g) ds over [t_start, t_start + t0].

    The time integral uses trapezoid quadrature on a uniform grid with the
    given number of substeps. Requires C t0 < 1 with C = 2 max(A) + 1 so
    the map contracts in the norm max_t |w|_L1; iteration stops when the
    update falls below tol in that norm. Returns (field at the window end,
    report). Longer horizons come from re-anchoring window after window,
    which run() does for scheme="picard".
    """
    u0 = np.asarray(u0, dtype=float)
    C = 2.0 * float(np.max(op.A)) + 1.0
    if C * t0 >= 1.0:
        raise UsageError(
            f"contraction requires (2 max A + 1) * t0 < 1; got {C * t0:.3f}. Shorten t0.")
    if substeps < 2:
        raise UsageError("picard_solve needs at least 2 substeps")
    ts = t_start + np.linspace(0.0, t0, substeps + 1)
    vol = op.vol
    n = len(u0)

    u_dependent = isinstance(datum, NonlinearTraceFlux)
    if not u_dependent:
        flux_rows = np.zeros((substeps + 1, n))
        if datum is not None:
            for k, tk in enumerate(ts):
                flux_rows[k] = flux_op.G @ collar_values(datum, tk, None)
        flux_cum = cumulative_trapezoid(flux_rows, ts, axis=0, initial=0.0)

    w = np.tile(u0, (substeps + 1, 1))
    diffs = []
    for it in range(max_iter):
        lw = (op.W @ w.T).T - w * op.A
        if u_dependent:
            rows = np.empty_like(w)
            for k, tk in enumerate(ts):
                rows[k] = flux_op.G @ collar_values(datum, tk, w[k])
            integ = cumulative_trapezoid(lw + rows, ts, axis=0, initial=0.0)
        else:
            integ = cumulative_trapezoid(lw, ts, axis=0, initial=0.0) + flux_cum
        z = u0[None, :] + integ
        diff = float(np.max(np.sum(np.abs(z - w), axis=1)) * vol)
        w = z
        diffs.append(diff)
        if diff < tol:
            report = PicardReport(iterations=it + 1, diffs=np.array(diffs),
                                  contraction_bound=C * t0)
            if return_path:
                return w[-1].copy(), report, (ts, w)
            return w[-1].copy(), report
    raise NumericalError(f"integral fixed point did not reach {tol:g} in {max_iter} iterations")


def _picard_run(op, flux_op, datum, u0, config):
    """Cover [0, t_end] with contraction windows and snapshot at their ends."""
    C = 2.0 * float(np.max(op.A)) + 1.0
    t_end = config.t_end
    window = min(0.5 / C, t_end)
    n_windows = max(1, int(math.ceil(t_end / window - 1e-12)))
    window = t_end / n_windows
    substeps = max(config.picard_substeps, 2)
    vol = op.vol

    times = [0.0]
    snaps = [u0.copy()]
    mass = [vol * float(np.sum(u0))]
    supn = [float(np.max(np.abs(u0)))]
    supm = [float(np.max(u0))]
    flux_series = [0.0]
    majorant_series = [0.0]

    u = u0.copy()
    flux_mass = 0.0
    majorant = 0.0
    iterations = 0
    for k in range(n_windows):
        t_s = k * window
        u, rep, (ts, path) = picard_solve(op, flux_op, datum, u, window,
                                          substeps=substeps, t_start=t_s,
                                          return_path=True)
        iterations += rep.iterations
        if datum is not None:
            sums = np.empty(substeps + 1)
            sups = np.empty(substeps + 1)
            for j, tj in enumerate(ts):
                f = flux_op.G @ collar_values(datum, tj, path[j])
                sums[j] = vol * float(np.sum(f))
                sups[j] = float(np.max(f))
            flux_mass += float(np.trapezoid(sums, ts))
            majorant += float(np.trapezoid(sups, ts))
        times.append(t_s + window)
        snaps.append(u.copy())
        mass.append(vol * float(np.sum(u)))
        supn.append(float(np.max(np.abs(u))))
        supm.append(float(np.max(u)))
        flux_series.append(flux_mass)
        majorant_series.append(majorant)

    return Trajectory(
        times=np.array(times), snapshots=np.array(snaps), mass=np.array(mass),
        supnorm=np.array(supn), supmax=np.array(supm),
        flux_integral=np.array(flux_series), sup_flux_integral=np.array(majorant_series),
        event=None,
        meta={"scheme": "picard", "dt": config.dt, "t_end": t_end,
              "windows": n_windows, "window": window, "substeps": substeps,
              "iterations": iterations, "vol": vol,
              "blowup_threshold": config.blowup_threshold})


# ---------------------------------------------------------------------------
# trajectory checks

def mass_balance_check(traj):
    """Worst relative defect of mass(t) = mass(0) + flux_integral(t)."""
    resid = np.abs(traj.mass - traj.mass[0] - traj.flux_integral)
    scale = max(float(np.max(np.abs(traj.mass))), 1e-30)
    return float(np.max(resid)) / scale


def comparison_check(traj_u, traj_v):
    """Worst violation of u <= v over shared snapshot times (0 when ordered)."""
    if traj_u.n_snapshots != traj_v.n_snapshots or not np.allclose(
            traj_u.times, traj_v.times, rtol=0, atol=1e-14):
        raise UsageError("comparison_check needs trajectories on the same time grid")
    excess = traj_u.snapshots - traj_v.snapshots
    return float(max(np.max(excess), 0.0))


def sup_bound_check(traj):
    """Worst excess of max u(t) over max u(0) + integral of sup_x (G g)."""
    bound = traj.supmax[0] + traj.sup_flux_integral
    return float(np.max(traj.supmax - bound))
