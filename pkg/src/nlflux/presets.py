"""Shipped experiment presets.

Every named experiment used by the verification suite lives here as a
plain config dict (see config.py for the grammar), so each one can be
reproduced with `nlflux <subcommand> --preset NAME`.  budget_seconds is
the declared runtime budget on a desktop machine; the verify run checks
wall clock against it.

Naming scheme:
  mass-*      mass bookkeeping runs (five of them cover the identity check)
  picard-*    fixed-point bench on a short horizon
  stationary-* solve inputs, including the deliberately refused datum
  decay-*     h with zero net flux (or none), long horizons for rate fits
  lyapunov-*  static-datum run with a nonzero initial energy
  ladder-*    focusing power-law data on the unit interval, one per alpha
  nl-*        nonlinear boundary trace runs
  nonuniq-*   regularized sublinear trace, ladder of constant data
"""

import copy

_INTERVAL = {"kind": "interval", "a": 0.0, "b": 1.0}
_UNIFORM_25 = {"family": "uniform", "d": 0.25}


def _base(name, budget, **over):
    cfg = {
        "name": name,
        "budget_seconds": budget,
        "shape": dict(_INTERVAL),
        "kernel": dict(_UNIFORM_25),
        "h_grid": 0.05,
        "solver": {"scheme": "rk4", "dt": 1e-3, "t_end": 1.0},
        "datum": {"variant": "none"},
        "u0": {"kind": "constant", "value": 0.0},
        "seed": 0,
    }
    cfg.update(over)
    return cfg


def _ladder(alpha, threshold):
    tag = f"{alpha:g}".replace(".", "")
    return _base(
        f"ladder-alpha-{tag}", 60,
        h_grid=0.025,
        solver={"scheme": "rk4", "dt": 1e-3, "t_end": 0.9 - 1e-4,
                "adaptive": True, "adaptive_fraction": 0.05,
                "blowup_threshold": threshold},
        datum={"variant": "power_law", "alpha": alpha, "T": 0.9,
               "h": {"name": "one_sided", "value": 1.0}},
        u0={"kind": "prepared_profile"},
        notes="focusing datum on the right collar; strips climb inward by d; "
              "initial data matched to the expansion so strip series follow "
              "their rates across the whole fit window",
    )


def _build_catalog():
    p = {}

    # --- mass bookkeeping (criterion: identity across five presets) ---
    p["mass-identity"] = _base(
        "mass-identity", 10,
        datum={"variant": "static", "h": {"name": "one_sided", "value": 1.0}},
        notes="zero initial mass, one-sided inflow: mass column equals the "
              "flux-integral column",
    )
    p["mass-zero-flux"] = _base(
        "mass-zero-flux", 10,
        u0={"kind": "random", "base": 0.5, "amplitude": 0.2, "seed": 1},
    )
    p["mass-power-law"] = _base(
        "mass-power-law", 10,
        solver={"scheme": "rk4", "dt": 1e-3, "t_end": 0.5},
        datum={"variant": "power_law", "alpha": 1.5, "T": 0.9,
               "h": {"name": "one_sided", "value": 1.0}},
    )
    p["mass-antisym"] = _base(
        "mass-antisym", 10,
        datum={"variant": "static", "h": {"name": "antisymmetric", "value": 1.0}},
        u0={"kind": "constant", "value": 0.5},
    )
    p["mass-disk"] = _base(
        "mass-disk", 30,
        shape={"kind": "disk", "radius": 1.0},
        kernel={"family": "uniform", "d": 0.2},
        solver={"scheme": "rk4", "dt": 1e-3, "t_end": 0.5},
        datum={"variant": "static", "h": {"name": "uniform", "value": 1.0}},
    )
    p["mass-constant"] = _base(
        "mass-constant", 5,
        u0={"kind": "constant", "value": 0.7},
        notes="no datum, constant data: every snapshot identical",
    )

    # --- fixed point bench ---
    p["picard-bench"] = _base(
        "picard-bench", 20,
        solver={"scheme": "picard", "dt": 1e-3, "t_end": 0.2,
                "picard_substeps": 512},
        datum={"variant": "static", "h": {"name": "antisymmetric", "value": 1.0}},
        u0={"kind": "constant", "value": 0.5},
    )

    # --- stationary solves ---
    p["stationary-antisym"] = _base(
        "stationary-antisym", 5,
        datum={"variant": "static", "h": {"name": "antisymmetric", "value": 1.0}},
        target_mass=0.0,
    )
    p["stationary-refusal"] = _base(
        "stationary-refusal", 5,
        datum={"variant": "static", "h": {"name": "one_sided", "value": 1.0}},
        target_mass=0.0,
        notes="carries net flux 1/16 in the continuum; the solver must refuse",
    )
    p["stationary-balanced"] = _base(
        "stationary-balanced", 5,
        datum={"variant": "static", "h": {"name": "linear_balanced"}},
        target_mass=0.0,
        notes="ramp datum balanced in the continuum; discrete defect is O(h)",
    )

    # --- decay rate fits (long horizons, cheap explicit stepping) ---
    decay_solver = {"scheme": "euler", "dt": 0.02, "t_end": 190.0,
                    "snapshot_stride": 5}
    p["decay-slow-mode"] = _base(
        "decay-slow-mode", 30,
        solver=dict(decay_solver),
        u0={"kind": "slow_mode", "base": 0.0, "amplitude": 1.0},
    )
    p["decay-random"] = _base(
        "decay-random", 30,
        solver=dict(decay_solver),
        u0={"kind": "random", "base": 0.0, "amplitude": 1.0, "seed": 7},
    )
    p["decay-forced"] = _base(
        "decay-forced", 30,
        solver=dict(decay_solver),
        datum={"variant": "static", "h": {"name": "antisymmetric", "value": 1.0}},
        notes="starts at zero and relaxes to the compatible steady state",
    )

    # --- energy dissipation ---
    p["lyapunov-static"] = _base(
        "lyapunov-static", 15,
        datum={"variant": "static", "h": {"name": "antisymmetric", "value": 1.0}},
        u0={"kind": "random", "base": 0.0, "amplitude": 1.0, "seed": 11},
    )

    # --- focusing ladders; thresholds sized so each alpha >= 1 trips its
    #     event inside the fit window while alpha = 0.5 stays bounded ---
    p["ladder-alpha-05"] = _ladder(0.5, 1e8)
    p["ladder-alpha-1"] = _ladder(1.0, 3.5)
    p["ladder-alpha-15"] = _ladder(1.5, 80.0)
    p["ladder-alpha-23"] = _ladder(2.3, 3e4)
    p["ladder-alpha-45"] = _ladder(4.5, 1e12)

    # --- nonlinear boundary trace ---
    p["nl-p05"] = _base(
        "nl-p05", 10,
        solver={"scheme": "euler", "dt": 1e-3, "t_end": 3.0},
        datum={"variant": "nonlinear", "p": 0.5},
        u0={"kind": "constant", "value": 1.0},
    )
    p["nl-p1"] = _base(
        "nl-p1", 10,
        solver={"scheme": "euler", "dt": 1e-3, "t_end": 3.0},
        datum={"variant": "nonlinear", "p": 1.0},
        u0={"kind": "constant", "value": 1.0},
    )
    p["nl-p2-disk"] = _base(
        "nl-p2-disk", 60,
        shape={"kind": "disk", "radius": 1.0},
        kernel={"family": "uniform", "d": 0.2},
        solver={"scheme": "rk4", "dt": 1e-3, "t_end": 20.0,
                "adaptive": True, "adaptive_fraction": 0.05,
                "blowup_threshold": 1e8},
        datum={"variant": "nonlinear", "p": 2.0},
        u0={"kind": "constant", "value": 1.0},
    )
    p["nl-p3"] = _base(
        "nl-p3", 30,
        kernel={"family": "uniform", "d": 0.2},
        solver={"scheme": "rk4", "dt": 1e-3, "t_end": 20.0,
                "adaptive": True, "adaptive_fraction": 0.05,
                "blowup_threshold": 1e6},
        datum={"variant": "nonlinear", "p": 3.0},
        u0={"kind": "constant", "value": 1.0},
        notes="threshold kept at 1e6 so the adaptive step keeps resolving "
              "T - t without stalling at machine precision",
    )

    # --- nonuniqueness probe ---
    p["nonuniq-p05"] = _base(
        "nonuniq-p05", 30,
        datum={"variant": "nonlinear", "p": 0.5},
        probe={"eps_ladder": [1e-2, 1e-3, 1e-4], "t_star": 0.5,
               "gamma": 0.01, "dt": 1e-3},
    )

    # --- spectral report geometry ---
    p["spectral-interval"] = _base("spectral-interval", 10)

    return p


_CATALOG = _build_catalog()


def preset_names():
    return sorted(_CATALOG)


def get_preset(name):
    from .errors import ConfigurationError
    try:
        cfg = _CATALOG[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown preset {name!r}; available: {', '.join(preset_names())}") from None
    return copy.deepcopy(cfg)
