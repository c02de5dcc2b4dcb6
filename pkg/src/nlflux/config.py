"""Declarative experiment configuration.

A config is a flat JSON document (or the equivalent dict) with these
sections; unknown keys are rejected so typos fail loudly:

    {
      "shape":  {"kind": "interval", "a": 0.0, "b": 1.0},
      "kernel": {"family": "uniform", "d": 0.25},
      "h_grid": 0.05,
      "solver": {"scheme": "rk4", "dt": 1e-3, "t_end": 1.0,
                 "adaptive": false, "adaptive_fraction": 0.05,
                 "snapshot_stride": 1, "blowup_threshold": 1e8,
                 "picard_substeps": 256},
      "datum":  {"variant": "static" | "power_law" | "nonlinear" | "none",
                 "h": <field spec>,          # static, power_law
                 "T": 0.9, "alpha": 1.5,     # power_law
                 "p": 2.0,                   # nonlinear
                 "regularize_eps": null},    # nonlinear, optional
      "u0":     {"kind": "constant", "value": 0.0}
                | {"kind": "slow_mode", "base": 0.5, "amplitude": 0.1}
                | {"kind": "random", "base": 0.5, "amplitude": 0.1}
                | {"kind": "file", "path": "u0.txt"},
      "target_mass": 0.0,      # stationary solves
      "seed": 0
    }

Collar field specs name a construction instead of listing numbers, so a
preset is readable and grid-independent:

    {"name": "zero"}
    {"name": "uniform", "value": 1.0}
    {"name": "one_sided", "value": 1.0, "side": "right"}     # interval
    {"name": "antisymmetric", "value": 1.0}                  # interval
    {"name": "linear_balanced"}                              # interval, uniform kernel
    {"name": "edge", "edge": "right", "value": 1.0}          # rectangle
    {"name": "values", "values": [...]}                      # explicit, grid-bound

one_sided carries net flux on purpose (the refusal example);
linear_balanced is the ramp datum whose continuum net flux vanishes
exactly, h(y) = y on the right collar and the closed-form constant on
the left, so its discrete defect is pure quadrature error.
"""

import json

import numpy as np

from .errors import ConfigurationError
from .evolution import (NonlinearTraceFlux, PowerLawFlux, SolverConfig,
                        StaticFlux)
from .geometry import Interval, Rectangle, build_boundary_chart, shape_from_spec
from .stationary import spectral_gap  # noqa: F401 (re-export convenience)

_TOP_KEYS = {"shape", "kernel", "h_grid", "solver", "datum", "u0",
             "target_mass", "seed", "name", "budget_seconds", "notes",
             "probe"}
_SOLVER_KEYS = {"scheme", "dt", "t_end", "adaptive", "adaptive_fraction",
                "snapshot_stride", "blowup_threshold", "picard_substeps"}


def load_config(path):
    """Parse and validate a JSON config file; errors carry line numbers."""
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"{path}:{exc.lineno}:{exc.colno}: malformed JSON ({exc.msg})") from exc
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return validate_config(raw, origin=str(path))


def validate_config(raw, origin="<config>"):
    """Check structure and ranges; returns the config dict unchanged."""
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{origin}: config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigurationError(f"{origin}: unknown keys {sorted(unknown)}")
    for key in ("shape", "kernel", "h_grid"):
        if key not in raw:
            raise ConfigurationError(f"{origin}: missing required key {key!r}")
    if not (isinstance(raw["h_grid"], (int, float)) and raw["h_grid"] > 0):
        raise ConfigurationError(f"{origin}: h_grid must be a positive number")
    kernel = raw["kernel"]
    if not isinstance(kernel, dict) or "family" not in kernel or "d" not in kernel:
        raise ConfigurationError(f"{origin}: kernel needs 'family' and 'd'")
    if not (isinstance(kernel["d"], (int, float)) and kernel["d"] > 0):
        raise ConfigurationError(f"{origin}: kernel.d must be positive")
    solver = raw.get("solver", {})
    if not isinstance(solver, dict):
        raise ConfigurationError(f"{origin}: solver must be an object")
    unknown = set(solver) - _SOLVER_KEYS
    if unknown:
        raise ConfigurationError(f"{origin}: unknown solver keys {sorted(unknown)}")
    if "dt" in solver and not (isinstance(solver["dt"], (int, float)) and solver["dt"] > 0):
        raise ConfigurationError(f"{origin}: solver.dt must be positive")
    if "t_end" in solver and not (isinstance(solver["t_end"], (int, float))
                                  and solver["t_end"] > 0):
        raise ConfigurationError(f"{origin}: solver.t_end must be positive")
    datum = raw.get("datum", {"variant": "none"})
    if not isinstance(datum, dict) or "variant" not in datum:
        raise ConfigurationError(f"{origin}: datum needs a 'variant'")
    variant = datum["variant"]
    if variant not in ("static", "power_law", "nonlinear", "none"):
        raise ConfigurationError(f"{origin}: unknown datum variant {variant!r}")
    if variant in ("static", "power_law") and "h" not in datum:
        raise ConfigurationError(f"{origin}: datum variant {variant!r} needs 'h'")
    if variant == "power_law":
        for key in ("T", "alpha"):
            if key not in datum or not (isinstance(datum[key], (int, float))
                                        and datum[key] > 0):
                raise ConfigurationError(
                    f"{origin}: power_law needs positive {key!r}")
        t_end = solver.get("t_end", SolverConfig.t_end)
        if t_end >= datum["T"]:
            raise ConfigurationError(
                f"{origin}: t_end={t_end} must stay below the focusing time T={datum['T']}")
    if variant == "nonlinear" and not (isinstance(datum.get("p"), (int, float))
                                       and datum["p"] > 0):
        raise ConfigurationError(f"{origin}: nonlinear datum needs positive 'p'")
    return raw


def solver_config(raw):
    return SolverConfig(**raw.get("solver", {}))


# ---------------------------------------------------------------------------
# collar field construction

def _interval_sides(geometry):
    shape = geometry.mask.shape
    y = geometry.grid.centers[geometry.collar.exterior][:, 0]
    return y, y > 0.5 * (shape.a + shape.b)


def build_collar_field(geometry, spec):
    """Realize a named collar field spec; returns (values, support_indices).

    support_indices are the global cells where the datum is nonzero (they
    seed the strip decomposition).
    """
    if not isinstance(spec, dict) or "name" not in spec:
        raise ConfigurationError("collar field spec needs a 'name'")
    name = spec["name"]
    shape = geometry.mask.shape
    exterior = geometry.collar.exterior
    n = len(exterior)

    if name == "zero":
        return np.zeros(n), np.empty(0, dtype=np.int64)
    if name == "uniform":
        val = float(spec.get("value", 1.0))
        return np.full(n, val), exterior.copy()
    if name == "values":
        vals = np.asarray(spec["values"], dtype=float)
        if vals.shape != (n,):
            raise ConfigurationError(
                f"explicit collar values have length {vals.shape}, collar has {n} cells")
        return vals, exterior[vals != 0.0]

    if name in ("one_sided", "antisymmetric", "linear_balanced"):
        if not isinstance(shape, Interval):
            raise ConfigurationError(f"collar field {name!r} is defined on intervals")
        y, right = _interval_sides(geometry)
        if name == "one_sided":
            val = float(spec.get("value", 1.0))
            side = spec.get("side", "right")
            pick = right if side == "right" else ~right
            out = np.where(pick, val, 0.0)
            return out, exterior[pick]
        if name == "antisymmetric":
            val = float(spec.get("value", 1.0))
            return np.where(right, val, -val), exterior.copy()
        # linear_balanced: h(y) = y on the right collar, the closed-form
        # constant on the left that zeroes the continuum net flux of the
        # uniform kernel: R = (1/(4d)) [((b+d)^3 - b^3)/3 - b^2 d] and the
        # left band absorbs c * d/4.
        d = geometry.d
        b = shape.b
        R = (((b + d) ** 3 - b ** 3) / 3.0 - b ** 2 * d) / (4.0 * d)
        c = -4.0 * R / d
        return np.where(right, y, c), exterior.copy()

    if name == "edge":
        if not isinstance(shape, Rectangle):
            raise ConfigurationError("collar field 'edge' is defined on rectangles")
        val = float(spec.get("value", 1.0))
        edge = spec.get("edge", "right")
        pts = geometry.grid.centers[exterior]
        x, y = pts[:, 0], pts[:, 1]
        if edge == "right":
            pick = x > shape.bx
        elif edge == "left":
            pick = x < shape.ax
        elif edge == "top":
            pick = y > shape.by
        elif edge == "bottom":
            pick = y < shape.ay
        else:
            raise ConfigurationError(f"unknown edge {edge!r}")
        out = np.where(pick, val, 0.0)
        return out, exterior[pick]

    raise ConfigurationError(f"unknown collar field {name!r}")


# ---------------------------------------------------------------------------
# initial fields

def prepared_profile_field(op, flux_op, collar_op, strips, mask, h, T, alpha):
    """Initial data matched to the focusing expansion at t = 0.

    Summing the scaled profile levels with weights T^(i - alpha) removes
    the O(1) remainder a cold start would carry through the whole fit
    window, so strip series follow their asymptotic rates from the first
    snapshot. For integer alpha the top level is the unscaled field
    driving the logarithmic regime, weighted by max(0, -log T) to stay
    nonnegative. Zero levels (alpha < 1) give zero data back.
    """
    from .analysis import compute_profiles
    prof = compute_profiles(op, flux_op, collar_op, strips, mask, h, alpha)
    u0 = np.zeros(mask.n)
    is_int = float(alpha).is_integer()
    top = int(round(alpha)) if is_int else prof.n_levels
    for i in range(1, prof.n_levels + 1):
        if is_int and i == top:
            u0 += prof.unscaled(i) * max(0.0, -np.log(T))
        else:
            u0 += prof.scaled(i) * T ** (i - alpha)
    return u0


def build_initial_field(geometry, op, spec, seed=0):
    """Realize a u0 spec on the interior cells.

    The prepared_profile kind depends on the boundary datum and is
    resolved by the experiment pipeline (see assemble_experiment), not
    here.
    """
    spec = spec or {"kind": "constant", "value": 0.0}
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigurationError("u0 spec needs a 'kind'")
    kind = spec["kind"]
    if kind == "prepared_profile":
        raise ConfigurationError(
            "prepared_profile data need the assembled datum; run through the "
            "experiment pipeline")
    n = geometry.mask.n

    if kind == "constant":
        return np.full(n, float(spec.get("value", 0.0)))
    if kind == "random":
        rng = np.random.default_rng(int(spec.get("seed", seed)))
        r = rng.standard_normal(n)
        r -= np.mean(r)
        return float(spec.get("base", 0.0)) + float(spec.get("amplitude", 1.0)) * r
    if kind == "slow_mode":
        # slowest mean-zero eigenmode of the exchange form; single-mode
        # initial data decay at exactly twice the spectral gap
        S = np.diag(op.A) - op.W.toarray()
        vals, vecs = np.linalg.eigh(S)
        mode = vecs[:, 1]
        mode = mode - np.mean(mode)
        mode /= np.max(np.abs(mode))
        return float(spec.get("base", 0.0)) + float(spec.get("amplitude", 1.0)) * mode
    if kind == "file":
        try:
            vals = np.loadtxt(spec["path"], dtype=float)
        except OSError as exc:
            raise ConfigurationError(f"cannot read u0 file: {exc}") from exc
        if vals.shape != (n,):
            raise ConfigurationError(
                f"u0 file holds {vals.shape} values, interior has {n} cells")
        return vals
    raise ConfigurationError(f"unknown u0 kind {kind!r}")


def build_datum(geometry, raw):
    """Turn the config's datum section into a boundary datum object.

    Returns (datum, h_values_or_None, support_indices_or_None).
    """
    spec = raw.get("datum", {"variant": "none"})
    variant = spec["variant"]
    if variant == "none":
        return None, None, None
    if variant == "static":
        h, support = build_collar_field(geometry, spec["h"])
        return StaticFlux(h), h, support
    if variant == "power_law":
        h, support = build_collar_field(geometry, spec["h"])
        if np.any(h < 0):
            raise ConfigurationError("focusing data require h >= 0")
        return PowerLawFlux(h, float(spec["T"]), float(spec["alpha"])), h, support
    if variant == "nonlinear":
        chart = build_boundary_chart(geometry)
        eps = spec.get("regularize_eps")
        datum = NonlinearTraceFlux(p=float(spec["p"]), chart=chart,
                                   regularize_eps=None if eps is None else float(eps))
        return datum, None, None
    raise ConfigurationError(f"unknown datum variant {variant!r}")


def geometry_from_config(raw):
    from .geometry import build_grid
    shape = shape_from_spec(raw["shape"])
    return build_grid(shape, float(raw["kernel"]["d"]), float(raw["h_grid"]))


def kernel_from_config(raw, dim):
    from .kernels import make_kernel
    return make_kernel(raw["kernel"]["family"], float(raw["kernel"]["d"]), dim)


# ---------------------------------------------------------------------------
# full experiment assembly

class Experiment:
    """Everything a run needs, assembled once from a validated config.

    Attributes: raw (the config dict), geometry, kernel, op, flux_op,
    datum, h (collar values or None), support (datum support cells or
    None), strips (decomposition seeded by the support, or None), u0,
    solver.
    """

    def __init__(self, raw, geometry, kernel, op, flux_op, datum, h,
                 support, strips, u0, solver):
        self.raw = raw
        self.geometry = geometry
        self.kernel = kernel
        self.op = op
        self.flux_op = flux_op
        self.datum = datum
        self.h = h
        self.support = support
        self.strips = strips
        self.u0 = u0
        self.solver = solver


def assemble_experiment(raw):
    """Config dict to ready-to-run pieces; validates first.

    Resolves u0 kind prepared_profile here, where the assembled datum,
    the collar coupling, and the strip decomposition are all in hand.
    """
    from .geometry import strip_decomposition
    from .operators import (assemble_collar_coupling, assemble_diffusion,
                            assemble_flux)

    raw = validate_config(raw, origin=raw.get("name", "<config>"))
    geometry = geometry_from_config(raw)
    kernel = kernel_from_config(raw, geometry.mask.shape.dim)
    op = assemble_diffusion(geometry, kernel)
    flux_op = assemble_flux(geometry, kernel)
    datum, h, support = build_datum(geometry, raw)
    strips = None
    if support is not None and len(support) > 0:
        strips = strip_decomposition(geometry, support)

    u0_spec = raw.get("u0") or {"kind": "constant", "value": 0.0}
    if isinstance(u0_spec, dict) and u0_spec.get("kind") == "prepared_profile":
        if not isinstance(datum, PowerLawFlux):
            raise ConfigurationError(
                "prepared_profile data go with a power_law datum")
        if strips is None:
            raise ConfigurationError(
                "prepared_profile data need a datum with nonempty support")
        collar_op = assemble_collar_coupling(geometry, kernel)
        u0 = prepared_profile_field(op, flux_op, collar_op, strips,
                                    geometry.mask, h, datum.T, datum.alpha)
    else:
        u0 = build_initial_field(geometry, op, u0_spec,
                                 seed=int(raw.get("seed", 0)))
    return Experiment(raw=raw, geometry=geometry, kernel=kernel, op=op,
                      flux_op=flux_op, datum=datum, h=h, support=support,
                      strips=strips, u0=u0, solver=solver_config(raw))
