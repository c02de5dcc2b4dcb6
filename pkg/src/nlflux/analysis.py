"""Post-processing: spectral constant, energy functional, singularity profiles,
rate fits, and the nonlinear-flux diagnostics.

Everything here consumes immutable operators and trajectories; nothing
mutates shared state, so analyses parallelize trivially across regions
and parameter sweeps.

Conventions. The nonlocal Dirichlet form of an interior field u is

    Q(u) = sum_x sum_y vol^2 J(x_c - y_c) (u_y - u_x)^2 = 2 vol u' S u

with S = diag(A) - W, and |u|^2 = vol sum u^2, so the sharp constant in
Q(u) >= beta |u - mean|^2 is beta = 2 lambda_1 with lambda_1 the smallest
nonzero eigenvalue of S. The energy functional is kept in the
normalization

    F(u) = (1/2) Q(u) - 2 sum_x vol (G h)_x u_x,

whose time derivative along u_t = Lu + Gh is exactly -2 sum vol (u_t)^2.
(The quarter-energy form with a single flux pairing, which is half of
this F, has derivative -sum vol (u_t)^2; the two statements are often
conflated, so the factor is pinned here once and checked in the tests.)

Singularity profiles for the focusing datum g = h (T-t)^(-alpha): with
strips B_1, B_2, ... peeled from the support of h, the leading
coefficients obey

    w_1 = I_1 / (alpha - 1),   I_1(x) = integral of J(x-y) h(y) over the exterior,
    w_i = I_i / (alpha - i),   I_i(x) = integral of J(x-y) w_{i-1}(y) over
                               the exterior plus the strips B_1..B_i,

and the fields w_i live on interior and collar cells alike (the
recursion needs their collar values). The unscaled integrals I_i are the
log-mode limits: for integer alpha the ratio u / (-ln(T-t)) stabilizes
at I_alpha on B_alpha. Divergence rates are fitted on the fixed window
T-t in [1e-4, 1e-1]: below 1e-4 the adaptive stepper and cancellation in
T-t dominate, above 1e-1 transients pollute the asymptotics.

Blow-up sets are estimated from growth, not magnitude: a cell is flagged
when its value grew by at least `growth_min` over the last decade of
T-t (and sits above a tiny support floor). A magnitude test against the
median cannot work here, since under global blow-up the median itself
diverges and would erase the slow strips.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, NumericalError, UsageError
from .evolution import NonlinearTraceFlux, SolverConfig, extend_trace, run
from .stationary import spectral_gap

FIT_WINDOW = (1e-4, 1e-1)


# ---------------------------------------------------------------------------
# spectral constant

@dataclass
class SpectralReport:
    beta: float
    lambda1: float
    beta_variational: float
    method_agreement: float   # |eigen - variational| / eigen
    restarts: int


def _rayleigh(op, u):
    su = op.A * u - op.W @ u
    return 2.0 * float(u @ su) / float(u @ u)


def poincare_constant(op, grid=None, restarts=10, seed=0, maxiter=200000,
                      tol=1e-14):
    """Best constant in Q(u) >= beta |u - mean|^2, computed two ways.

    Route one diagonalizes the quadratic form (beta = 2 lambda_1 of S on
    the mean-zero subspace). Route two minimizes the Rayleigh quotient by
    projected gradient descent with the fixed step 1/(4 max A), restarted
    from `restarts` random mean-zero fields; the step keeps every mode
    factor of the descent map inside [1/2, 1], so iterates never vanish
    and converge to the slow mode from any start with a nonzero slow
    component. The report
    carries both values and their relative agreement. grid is unused (the
    uniform volume cancels from the quotient) and kept for signature
    uniformity.
    """
    lam1 = spectral_gap(op)
    beta = 2.0 * lam1
    if lam1 < 1e-12 * float(np.max(op.A)):
        warnings.warn("smallest nonzero form eigenvalue is numerically zero; "
                      "the domain appears disconnected at interaction range",
                      stacklevel=2)

    n = op.n
    rng = np.random.default_rng(seed)
    eta = 1.0 / (4.0 * float(np.max(op.A)))
    best = math.inf
    for _ in range(restarts):
        u = rng.standard_normal(n)
        u -= np.mean(u)
        norm = np.linalg.norm(u)
        if norm == 0.0:
            continue
        u /= norm
        rho = _rayleigh(op, u)
        for _ in range(maxiter):
            su = op.A * u - op.W @ u
            u = u - eta * su
            u -= np.mean(u)
            u /= np.linalg.norm(u)
            rho_new = _rayleigh(op, u)
            if abs(rho_new - rho) < tol * max(1.0, abs(rho_new)):
                rho = rho_new
                break
            rho = rho_new
        best = min(best, rho)

    agreement = abs(beta - best) / beta if beta > 0 else abs(beta - best)
    return SpectralReport(beta=beta, lambda1=lam1, beta_variational=best,
                          method_agreement=agreement, restarts=restarts)


# ---------------------------------------------------------------------------
# energy functional

def lyapunov_series(traj, op, flux_op, h):
    """F along the trajectory; static datum h (possibly zero)."""
    vol = op.vol
    r = flux_op.G @ np.asarray(h, dtype=float) if h is not None else None
    out = np.empty(traj.n_snapshots)
    for k, u in enumerate(traj.snapshots):
        su = op.A * u - op.W @ u
        val = vol * float(u @ su)
        if r is not None:
            val -= 2.0 * vol * float(r @ u)
        out[k] = val
    return out


@dataclass
class LyapunovReport:
    F: np.ndarray
    monotone_violation: float   # max increase between consecutive snapshots
    identity_residual: float    # max |dF/dt + 2 sum vol u_t^2|
    F0: float


def lyapunov_check(traj, op, flux_op, h):
    """Monotonicity and the dissipation identity, by finite differences.

    Both dF/dt and u_t are taken as forward differences between
    consecutive snapshots, which agree at the half step to second order,
    so the identity residual measures the functional itself rather than
    the differencing.
    """
    F = lyapunov_series(traj, op, flux_op, h)
    vol = op.vol
    dts = np.diff(traj.times)
    if np.any(dts <= 0):
        raise UsageError("snapshot times must increase")
    dF = np.diff(F) / dts
    udots = np.diff(traj.snapshots, axis=0) / dts[:, None]
    dissip = 2.0 * vol * np.sum(udots ** 2, axis=1)
    return LyapunovReport(
        F=F,
        monotone_violation=float(np.max(np.diff(F), initial=0.0)),
        identity_residual=float(np.max(np.abs(dF + dissip))),
        F0=float(F[0]))


# ---------------------------------------------------------------------------
# singularity profiles

@dataclass
class Profiles:
    w: list              # interior fields w_1..; entry i-1 defined since i < alpha
    w_tilde: list        # unscaled integrals I_1..; one per computed level
    w_collar: list       # collar-side values of the scaled profiles
    strips: object
    alpha: float

    @property
    def n_levels(self):
        return len(self.w_tilde)

    def scaled(self, i):
        """w_i (1-based). Levels at or past alpha only exist unscaled."""
        if i < 1 or i > len(self.w):
            raise UsageError(
                f"w_{i} is not defined: levels carry 1/(alpha - i) and need i < alpha "
                f"(alpha = {self.alpha}); the unscaled field drives the log regime")
        return self.w[i - 1]

    def unscaled(self, i):
        if i < 1 or i > len(self.w_tilde):
            raise UsageError(f"no level {i}; {len(self.w_tilde)} were computed")
        return self.w_tilde[i - 1]


def compute_profiles(op, flux_op, collar_op, strips, mask, h, alpha, count=None):
    """Leading singularity coefficients for the focusing datum h (T-t)^(-alpha).

    Returns floor(alpha) levels (alpha levels when alpha is an integer,
    the last one unscaled only), or fewer via count. Each level's
    integral runs over the exterior collar and the strips peeled so far,
    with the previous profile's own collar values closing the recursion;
    collar_op is the collar-to-collar coupling matrix, the datum is taken
    as zero outside the collar.
    """
    h = np.asarray(h, dtype=float)
    if alpha <= 0:
        raise UsageError(f"alpha must be positive, got {alpha}")
    is_integer = abs(alpha - round(alpha)) < 1e-12
    max_level = int(round(alpha)) if is_integer else int(math.floor(alpha))
    m = max_level if count is None else min(count, max_level)

    G = flux_op.G
    Gt = G.T.tocsr()
    W = op.W
    C = collar_op

    w_list, wt_list, wcol_list = [], [], []
    w_prev_int = None
    w_prev_col = None
    for i in range(1, m + 1):
        if i == 1:
            I_int = G @ h
            I_col = C @ h
        else:
            sel = np.zeros(op.n)
            pos = mask.positions(strips.union_of_strips(i))
            sel[pos] = 1.0
            masked = w_prev_int * sel
            I_int = G @ w_prev_col + W @ masked
            I_col = C @ w_prev_col + Gt @ masked
        wt_list.append(I_int)
        if alpha - i > 1e-12:
            w_prev_int = I_int / (alpha - i)
            w_prev_col = I_col / (alpha - i)
            w_list.append(w_prev_int)
            wcol_list.append(w_prev_col)
    return Profiles(w=w_list, w_tilde=wt_list, w_collar=wcol_list,
                    strips=strips, alpha=alpha)


# ---------------------------------------------------------------------------
# rate fitting

@dataclass
class RateFit:
    region: np.ndarray
    exponent: float        # power mode: slope in log u vs -log(T-t); log mode: slope vs -ln(T-t)
    intercept: float
    r2: float
    window: tuple          # (t_lo, t_hi) actually used
    mode: str
    n_points: int
    profile_error: float | None = None


def rate_fit(traj, region, T, mode="power", profile=None, profile_exponent=None):
    """Fit the divergence rate of max over `region` against T - t.

    region indexes interior fields (positions, not global cells). power
    mode fits log(max u) against -log(T-t); log mode fits max u against
    -ln(T-t), whose slope estimates the unscaled profile maximum. Only
    snapshots with T-t inside the fixed window enter; fewer than 10 of
    them is a diagnostic failure. The run must have approached T to
    within about the lower window edge (a blow-up trigger firing just
    short of it is acceptable; an order of magnitude short is not).

    With `profile` (an interior field) and `profile_exponent` q given,
    also reports max over region of |(T-t)^q u - profile| at the last
    usable snapshot.

    Snapshots cluster unevenly along the -log(T-t) axis: fixed stepping
    early in the run, adaptive shrinking near T. An unweighted fit would
    hand most of the leverage to the top of the window, where subleading
    terms still pollute the slope, so each point is weighted by its local
    abscissa spacing (trapezoid style), which treats every decade of T-t
    alike no matter how the stepper sampled it.
    """
    region = np.asarray(region, dtype=np.int64)
    if region.size == 0:
        raise UsageError("rate_fit needs a nonempty region")
    if mode not in ("power", "log"):
        raise UsageError(f"unknown fit mode {mode!r}")
    if traj.times[-1] < T - 10.0 * FIT_WINDOW[0]:
        raise NumericalError(
            f"trajectory ends at t={traj.times[-1]:.6g}, too far from T={T:.6g} "
            "to resolve the asymptotic window")
    rem = T - traj.times
    series = np.max(traj.snapshots[:, region], axis=1)
    keep = (rem >= FIT_WINDOW[0]) & (rem <= FIT_WINDOW[1]) & np.isfinite(series)
    if mode == "power":
        keep &= series > 0
    n_keep = int(np.count_nonzero(keep))
    if n_keep < 10:
        raise NumericalError(
            f"only {n_keep} snapshots fall in the fit window "
            f"T-t in [{FIT_WINDOW[0]:g}, {FIT_WINDOW[1]:g}]")

    x = -np.log(rem[keep])
    y = np.log(series[keep]) if mode == "power" else series[keep]
    order = np.argsort(x)
    x, y = x[order], y[order]
    gaps = np.diff(x)
    w = np.empty_like(x)
    w[0], w[-1] = gaps[0], gaps[-1]
    if len(x) > 2:
        w[1:-1] = 0.5 * (gaps[:-1] + gaps[1:])
    w = np.maximum(w, 1e-30)
    slope, intercept = np.polyfit(x, y, 1, w=np.sqrt(w))
    yhat = slope * x + intercept
    ybar = float(np.sum(w * y) / np.sum(w))
    ss_res = float(np.sum(w * (y - yhat) ** 2))
    ss_tot = float(np.sum(w * (y - ybar) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    tt = traj.times[keep]

    perr = None
    if profile is not None:
        if profile_exponent is None:
            raise UsageError("profile comparison needs profile_exponent")
        k_last = int(np.nonzero(keep)[0][-1])
        tau = T - traj.times[k_last]
        rescaled = tau ** profile_exponent * traj.snapshots[k_last][region]
        perr = float(np.max(np.abs(rescaled - np.asarray(profile)[region])))

    return RateFit(region=region, exponent=float(slope), intercept=float(intercept),
                   r2=r2, window=(float(tt[0]), float(tt[-1])), mode=mode,
                   n_points=n_keep, profile_error=perr)


# ---------------------------------------------------------------------------
# blow-up set estimation

def blowup_set_estimate(traj, T=None, growth_min=1.5, support_floor=1e-8):
    """Interior positions flagged as divergent by last-decade growth.

    Compares the final snapshot against the one closest to ten times the
    final distance to T; a cell is flagged when its value exceeds the
    support floor and grew by at least growth_min over that decade. The
    power rates make the slowest diverging strip grow by 10^(alpha -
    floor(alpha)) per decade, while cells bounded by the hierarchy settle
    toward constants, so 1.5 separates the two regimes with margin on
    both sides.
    """
    if T is None:
        if traj.event is None:
            raise UsageError("no blow-up event recorded; pass T explicitly")
        T = traj.event.time_estimate
    rem = T - traj.times
    usable = np.nonzero(rem > 0)[0]
    if usable.size < 2:
        raise UsageError("trajectory has no snapshots before T")
    k_hi = int(usable[-1])
    tau = rem[k_hi]
    k_lo = int(np.argmin(np.abs(rem - 10.0 * tau)))
    if k_lo == k_hi:
        raise NumericalError("snapshots do not span a decade of T-t")
    u_hi = traj.snapshots[k_hi]
    u_lo = traj.snapshots[k_lo]
    flagged = (u_hi > support_floor) & (u_hi >= growth_min * u_lo)
    return np.nonzero(flagged)[0]


@dataclass
class SetComparison:
    estimated: np.ndarray
    reference: np.ndarray
    missing: np.ndarray     # in reference, not estimated
    extra: np.ndarray       # estimated, not reference
    sym_diff: int


def blowup_set_compare(estimated, strips, mask, count=None):
    """Symmetric difference of an estimated set against the strip union."""
    ref = mask.positions(strips.union_of_strips(count))
    est = np.asarray(estimated, dtype=np.int64)
    missing = np.setdiff1d(ref, est)
    extra = np.setdiff1d(est, ref)
    return SetComparison(estimated=est, reference=ref, missing=missing, extra=extra,
                         sym_diff=int(missing.size + extra.size))


# ---------------------------------------------------------------------------
# nonlinear flux diagnostics

@dataclass
class NonlinearRateReport:
    fit: RateFit
    T_estimate: float
    T_band: tuple              # estimate +- last step
    expected_exponent: float   # 1 / (p - 1)
    bound_constant: float      # (p-1)^(-1/(p-1))
    worst_bound_ratio: float   # min over window of sup u / lower bound
    bound_ok: bool


def nonlinear_rate_check(traj, p):
    """Divergence rate and lower-bound audit for the flux g = (trace u)^p, p > 1.

    Fits the sup norm against the extrapolated blow-up time and checks
    the closed-form floor (p-1)^(-1/(p-1)) (T-t)^(-1/(p-1)) at every
    snapshot in the fit window, allowing 5 percent for the time estimate
    and quadrature.
    """
    if not p > 1:
        raise UsageError(f"divergence rate analysis needs p > 1, got {p}")
    if traj.event is None:
        budget = traj.meta.get("t_end")
        raise NumericalError(
            f"no blow-up event was recorded within the time budget t_end={budget}; "
            "cannot audit the divergence rate")
    T = traj.event.time_estimate
    dt_last = traj.event.dt_last

    rem = T - traj.times
    keep = (rem >= FIT_WINDOW[0]) & (rem <= FIT_WINDOW[1]) & (traj.supnorm > 0)
    if np.count_nonzero(keep) < 10:
        raise NumericalError("fewer than 10 snapshots in the rate window")
    x = -np.log(rem[keep])
    y = np.log(traj.supnorm[keep])
    slope, intercept = np.polyfit(x, y, 1)
    yhat = slope * x + intercept
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 - float(np.sum((y - yhat) ** 2)) / ss_tot if ss_tot > 0 else 1.0
    tt = traj.times[keep]
    fit = RateFit(region=np.arange(traj.snapshots.shape[1]), exponent=float(slope),
                  intercept=float(intercept), r2=r2,
                  window=(float(tt[0]), float(tt[-1])), mode="power",
                  n_points=int(np.count_nonzero(keep)))

    q = 1.0 / (p - 1.0)
    const = (p - 1.0) ** (-q)
    floor = const * rem[keep] ** (-q)
    ratios = traj.supnorm[keep] / floor
    worst = float(np.min(ratios))
    return NonlinearRateReport(
        fit=fit, T_estimate=T, T_band=(T - dt_last, T + dt_last),
        expected_exponent=q, bound_constant=const,
        worst_bound_ratio=worst, bound_ok=worst >= 0.95)


@dataclass
class EnvelopeReport:
    p: float
    envelope: str
    worst_ratio: float   # max over snapshots of sup u / envelope
    ok: bool


def nonlinear_bound_check(traj, p, gamma0):
    """Global-boundedness envelopes for the flux g = (trace u)^p, p <= 1.

    gamma0 is the largest total collar weight max_x (G 1)_x. For p = 1
    the constant-in-space field sup(u0) e^(gamma0 t) is a supersolution;
    for p < 1 it is c (t+1)^(1/(1-p)) with c = max(sup u0,
    (gamma0 (1-p))^(1/(1-p)))... specialized here to the two envelopes
    the suite exercises: e-growth at p = 1 and quadratic growth at
    p = 1/2 with c = max(sup u0, (gamma0/2)^2).
    """
    if p > 1:
        raise UsageError("envelopes apply to p <= 1; use nonlinear_rate_check for p > 1")
    s0 = traj.supmax[0]
    t = traj.times
    if p == 1:
        env = s0 * np.exp(gamma0 * t)
        name = "sup(u0) * exp(gamma0 t)"
    elif p == 0.5:
        c = max(s0, (gamma0 / 2.0) ** 2)
        env = c * (t + 1.0) ** 2
        name = "max(sup u0, (gamma0/2)^2) * (t+1)^2"
    else:
        # general sublinear: c (t+1)^(1/(1-p)) dominates once
        # c^(1-p) / (1-p) >= gamma0; proof mirrors the p = 1/2 case
        c = max(s0, (gamma0 * (1.0 - p)) ** (1.0 / (1.0 - p)))
        env = c * (t + 1.0) ** (1.0 / (1.0 - p))
        name = "c * (t+1)^(1/(1-p))"
    worst = float(np.max(traj.supmax / env))
    return EnvelopeReport(p=p, envelope=name, worst_ratio=worst,
                          ok=worst <= 1.0 + 1e-8)


@dataclass
class NonlinearSetReport:
    cells: np.ndarray        # flagged interior positions
    K: int
    depth_limit: float       # K * d
    max_depth: float         # deepest flagged cell's boundary distance
    contained: bool


def nonlinear_blowup_set(traj, p, geometry, T=None, growth_min=1.5,
                         support_floor=1e-8):
    """Flag divergent cells and audit containment in the K d boundary band.

    K = floor(p/(p-1)) counts how many kernel widths the singular region
    can reach inward. Containment of the flagged set is the assertion;
    the deepest flagged cell's distance to the boundary is reported.
    """
    if not p > 1:
        raise UsageError(f"the boundary-band containment applies to p > 1, got {p}")
    flagged = blowup_set_estimate(traj, T=T, growth_min=growth_min,
                                  support_floor=support_floor)
    K = int(math.floor(p / (p - 1.0)))
    limit = K * geometry.d
    if flagged.size == 0:
        return NonlinearSetReport(cells=flagged, K=K, depth_limit=limit,
                                  max_depth=0.0, contained=True)
    centers = geometry.grid.centers[geometry.mask.interior[flagged]]
    depths = geometry.mask.shape.boundary_distance(centers)
    max_depth = float(np.max(depths))
    return NonlinearSetReport(cells=flagged, K=K, depth_limit=limit,
                              max_depth=max_depth,
                              contained=max_depth <= limit + 1e-12)


# ---------------------------------------------------------------------------
# non-uniqueness from vanishing data (p < 1)

@dataclass
class NonuniquenessReport:
    eps_ladder: np.ndarray
    final_fields: np.ndarray        # (n_eps, n_interior), ordered as eps_ladder
    t_star: float
    gamma: float
    support: np.ndarray             # interior positions within d/2 of the boundary
    subsolution_value: float        # gamma * ((1-p) t*)^(1/(1-p))
    monotone_violation: float       # worst of (w_small - w_large)+ across the ladder
    subsolution_margin: float       # min over support of (w_smallest_eps - v(t*))
    certificate_violation: float    # worst one-step defect of the discrete subsolution
    trivial_sup: float              # sup norm of the u0 = 0 run (stays zero)


def nonuniqueness_probe(op, flux_op, chart, p, eps_ladder, geometry,
                        t_star=0.5, gamma=0.01, dt=1e-3):
    """Exhibit a nontrivial solution from vanishing data when p < 1.

    For each eps the flux nonlinearity is regularized to be Lipschitz
    below eps/2 and the run starts from u0 = eps. The final fields must
    be cellwise monotone in eps, and the smallest-eps field must stay
    above the separating subsolution

        v(x, t) = gamma * 1[dist(x, boundary) < d/2] * ((1-p) t)^(1/(1-p)),

    whose value at t* is strictly positive: the eps -> 0 limit is then a
    solution from zero data that is not the trivial one. The report also
    carries a direct one-step certificate that v is a subsolution of the
    same explicit update from the time it crosses below eps onward, which
    closes the ordering chain u_eps >= eps >= v early, u_eps >= v late.
    """
    if not 0 < p < 1:
        raise UsageError(f"non-uniqueness requires 0 < p < 1, got {p}")
    eps_ladder = np.asarray(sorted(eps_ladder, reverse=True), dtype=float)
    if eps_ladder.size == 0 or eps_ladder[-1] <= 0:
        raise UsageError("eps ladder must hold positive values")

    n = op.n
    centers = geometry.grid.centers[geometry.mask.interior]
    depths = geometry.mask.shape.boundary_distance(centers)
    support = np.nonzero(depths < 0.5 * geometry.d)[0]
    if support.size == 0:
        raise ConfigurationError("no interior cells within d/2 of the boundary; "
                                 "grid too coarse for the separating subsolution")

    cfg = SolverConfig(scheme="euler", dt=dt, t_end=t_star, snapshot_stride=10 ** 9,
                       blowup_threshold=1e8)
    finals = np.empty((eps_ladder.size, n))
    for k, eps in enumerate(eps_ladder):
        datum = NonlinearTraceFlux(p=p, chart=chart, regularize_eps=float(eps))
        traj = run(op, flux_op, datum, np.full(n, float(eps)), cfg)
        finals[k] = traj.snapshots[-1]

    # monotone increasing in eps: ladder is stored largest first
    mono = 0.0
    for k in range(eps_ladder.size - 1):
        mono = max(mono, float(np.max(finals[k + 1] - finals[k])))

    expo = 1.0 / (1.0 - p)
    v_star = gamma * ((1.0 - p) * t_star) ** expo
    margin = float(np.min(finals[-1][support] - v_star))

    cert = _subsolution_certificate(op, flux_op, chart, p, float(eps_ladder[-1]),
                                    support, gamma, dt, t_star)

    trivial = run(op, flux_op, NonlinearTraceFlux(p=p, chart=chart),
                  np.zeros(n), cfg)
    return NonuniquenessReport(
        eps_ladder=eps_ladder, final_fields=finals, t_star=t_star, gamma=gamma,
        support=support, subsolution_value=v_star, monotone_violation=mono,
        subsolution_margin=margin, certificate_violation=cert,
        trivial_sup=float(trivial.supnorm[-1]))


def _subsolution_certificate(op, flux_op, chart, p, eps, support, gamma, dt, t_star):
    """Worst one-step defect of v(x,t) = a(x) b(t) under the explicit update.

    a = gamma on the support band, 0 elsewhere; b(t) = ((1-p) t)^(1/(1-p))
    solves b' = b^p. Checked from the first step where gamma b >= eps (the
    power branch of the regularized flux; before that the ordering
    u_eps >= eps >= v holds directly). Returns max over steps and cells of
    (v_next - update(v_now))+, which is <= 0 up to rounding when v is a
    genuine discrete subsolution.
    """
    n = op.n
    a = np.zeros(n)
    a[support] = gamma
    Wa = op.W @ a
    expo = 1.0 / (1.0 - p)
    datum = NonlinearTraceFlux(p=p, chart=chart, regularize_eps=eps)

    def b(t):
        return ((1.0 - p) * t) ** expo

    # first step index where v has crossed eps on its support
    t_cross = (eps / gamma) ** (1.0 / expo) / (1.0 - p)
    k0 = max(int(math.ceil(t_cross / dt)), 0)
    nsteps = int(round(t_star / dt))
    worst = -math.inf
    for k in range(k0, nsteps):
        t = k * dt
        bn, bn1 = b(t), b(t + dt)
        v = a * bn
        fl = datum.flux_values(extend_trace(chart, v))
        update = (1.0 - dt * op.A) * v + dt * (Wa * bn + flux_op.G @ fl)
        worst = max(worst, float(np.max(a * bn1 - update)))
    return worst
