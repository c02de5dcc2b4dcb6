"""Stationary states of the nonlocal boundary-flux model.

A stationary state phi balances the interior exchange against a static
boundary datum h. In averaging form, with a = 1/A and b = a * (G h),

    phi - K phi = b,        K phi = a * (W phi),

which is the same linear system as S phi = G h for the symmetric
positive semidefinite S = diag(A) - W, rescaled row-wise by A. S has row
sums exactly zero, so constants span its kernel whenever the domain is
connected at interaction range. Solvability therefore requires the datum
to carry no net flux; data whose compatibility defect is large relative
to the quadrature's own resolution are refused (the defect of a
compatible continuum datum is pure discretization error, which scales
like the cell width, so the gate is 10 * h_grid on the relative defect).

The solve runs conjugate gradients on the symmetric form with the
constant direction deflected upward (S v + shift * mean(v) * 1), which
is definite on the whole space and agrees with S on mean-zero vectors;
deflation rather than pinning a cell keeps the system symmetric and
well conditioned. The solution is then shifted by a constant to hit the
requested total mass, the one degree of freedom the kernel leaves free.

spectral_gap exposes the smallest nonzero eigenvalue of S in the
volume-weighted inner product; twice that value is the exponential rate
at which same-mass trajectories approach phi, and convergence_verify
fits that rate from a trajectory and compares it with the constant from
poincare_constant.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigvalsh
from scipy.sparse.linalg import LinearOperator, cg, eigsh

from .errors import ConfigurationError, NumericalError, UsageError
from .operators import compat_residual, compat_scale

_DENSE_EIG_LIMIT = 4000


def _deflated_action(op, shift):
    n = op.n
    A, W = op.A, op.W

    def mv(v):
        return A * v - W @ v + shift * (np.sum(v) / n)

    return LinearOperator((n, n), matvec=mv, dtype=float)


@dataclass
class StationarySolution:
    phi: np.ndarray
    target_mass: float
    residual: float   # sup norm of L phi + G h
    compat: float     # signed net-flux defect of h
    compat_rel: float
    cg_iterations: int


def solve_stationary(pair, flux_op, h, target_mass=0.0, tol=1e-10, maxiter=None,
                     compat_rtol=None):
    """Solve phi - K phi = a (G h), then shift phi to the requested mass.

    compat_rtol defaults to 10 * h_grid (from the operator's build
    metadata); data with a relative net-flux defect above it are refused
    with ConfigurationError carrying the measured defect, since no
    stationary state exists for net-flux data.
    """
    op = pair.op
    h = np.asarray(h, dtype=float)
    if h.shape != (flux_op.n_collar,):
        raise UsageError(f"datum has shape {h.shape}, collar has {flux_op.n_collar} cells")
    if compat_rtol is None:
        h_grid = op.meta.get("h_grid")
        if h_grid is None:
            raise UsageError("operator metadata lacks h_grid; pass compat_rtol explicitly")
        compat_rtol = 10.0 * h_grid

    net = compat_residual(flux_op, h)
    scale = compat_scale(flux_op, h)
    rel = abs(net) / max(scale, 1e-300)
    if rel > compat_rtol:
        raise ConfigurationError(
            f"datum carries net flux: measured defect {net:.17g} "
            f"(relative {rel:.3g} > {compat_rtol:.3g}); no stationary state exists")

    r = flux_op.G @ h
    rhs = r - np.mean(r)

    n = op.n
    vol = op.vol
    shift = float(np.mean(op.A))
    M = _deflated_action(op, shift)
    it_count = [0]

    def tick(_):
        it_count[0] += 1

    # atol set so both the vol-weighted L2 and (a fortiori, at these sizes)
    # the sup-norm residual land at tol
    x, info = cg(M, rhs, rtol=0.0, atol=tol * min(1.0, np.sqrt(vol)),
                 maxiter=maxiter or 100 * n, callback=tick)
    if info != 0:
        raise NumericalError(f"conjugate gradients stalled (info={info}) "
                             f"after {it_count[0]} iterations")

    phi = x + (target_mass - vol * float(np.sum(x))) / (n * vol)
    res = float(np.max(np.abs(op.W @ phi - op.A * phi + r)))
    return StationarySolution(phi=phi, target_mass=target_mass, residual=res,
                              compat=net, compat_rel=rel, cg_iterations=it_count[0])


# ---------------------------------------------------------------------------
# spectra

def spectral_gap(op):
    """Smallest nonzero eigenvalue of S = diag(A) - W (constants deflected)."""
    n = op.n
    if n <= _DENSE_EIG_LIMIT:
        S = np.diag(op.A) - op.W.toarray()
        vals = eigvalsh(S)
        return float(vals[1])
    shift = 2.0 * float(np.max(op.A))
    M = _deflated_action(op, shift * n)
    vals = eigsh(M, k=1, which="SA", return_eigenvectors=False, maxiter=n * 200)
    return float(vals[0])


@dataclass
class SimplicityReport:
    lam1: float
    lam2: float
    gap: float   # 1 - lam2


def kernel_simplicity_check(pair):
    """Top of the spectrum of the averaging map K phi = (W phi) / A.

    K is self-adjoint in the A*vol-weighted inner product and similar to
    the symmetric D^(-1/2) W D^(-1/2) with D = diag(A), so the spectrum
    is real with top eigenvalue 1 (constants are fixed). The returned gap
    1 - lam2 is positive exactly when the domain is connected at
    interaction range; it collapses to zero for split domains, where the
    eigenvalue 1 doubles.
    """
    op = pair.op
    n = op.n
    dhalf = 1.0 / np.sqrt(op.A)
    if n <= _DENSE_EIG_LIMIT:
        sym = dhalf[:, None] * op.W.toarray() * dhalf[None, :]
        vals = eigvalsh(sym)
        lam1, lam2 = float(vals[-1]), float(vals[-2])
    else:
        act = LinearOperator((n, n), matvec=lambda v: dhalf * (op.W @ (dhalf * v)),
                             dtype=float)
        vals = np.sort(eigsh(act, k=2, which="LA", return_eigenvectors=False,
                             maxiter=n * 200))
        lam1, lam2 = float(vals[-1]), float(vals[-2])
    return SimplicityReport(lam1=lam1, lam2=lam2, gap=1.0 - lam2)


# ---------------------------------------------------------------------------
# decay-rate verification against the spectral constant

@dataclass
class ConvergenceReport:
    fitted_rate: float
    beta: float
    meets_beta: bool    # fitted_rate >= 0.95 * beta
    n_window: int
    error_initial: float
    error_final: float
    skipped: bool = False


def convergence_verify(traj, sol, beta, window=(1e-8, 1e-1)):
    """Fit the decay rate of |u(t) - phi|^2 and compare it with beta.

    The trajectory must come from a static-datum run whose initial mass
    equals sol.target_mass (the mass mismatch is conserved by the flow
    and would floor the distance otherwise). Snapshots where the
    volume-weighted L2 distance to phi sits inside `window` relative to
    its initial value enter a least-squares line fit of log distance^2
    versus time; the early transient carries fast modes and the tail is
    rounding noise, so both are excluded. The squared distance contracts
    at least like exp(-beta t), so the fitted rate must reach beta up to
    fit tolerance; a run that starts at phi has nothing to fit and comes
    back marked skipped.
    """
    phi = sol.phi
    n = traj.snapshots.shape[1]
    if phi.shape != (n,):
        raise UsageError("stationary field and trajectory live on different grids")
    vol = traj.meta.get("vol")
    if vol is None:
        raise UsageError("trajectory metadata lacks the cell volume")
    diffs = traj.snapshots - phi[None, :]
    err = np.sqrt(vol * np.sum(diffs ** 2, axis=1))
    e0 = err[0]
    if e0 <= 1e-14 * (1.0 + float(np.max(np.abs(phi)))):
        return ConvergenceReport(fitted_rate=float("nan"), beta=beta, meets_beta=True,
                                 n_window=0, error_initial=float(e0),
                                 error_final=float(err[-1]), skipped=True)
    keep = (err >= window[0] * e0) & (err <= window[1] * e0)
    if np.count_nonzero(keep) < 5:
        raise NumericalError(
            f"only {np.count_nonzero(keep)} snapshots fall in the fit window; "
            "lengthen the run or loosen the window")
    tt = traj.times[keep]
    yy = 2.0 * np.log(err[keep])
    slope = np.polyfit(tt, yy, 1)[0]
    fitted = -float(slope)
    return ConvergenceReport(
        fitted_rate=fitted, beta=beta, meets_beta=fitted >= 0.95 * beta,
        n_window=int(np.count_nonzero(keep)),
        error_initial=float(e0), error_final=float(err[-1]))
