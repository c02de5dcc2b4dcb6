import numpy as np
import pytest

from nlflux.config import (assemble_experiment, build_collar_field,
                           build_datum, build_initial_field, load_config,
                           solver_config, validate_config)
from nlflux.errors import ConfigurationError
from nlflux.evolution import PowerLawFlux, StaticFlux
from nlflux.operators import compat_residual, compat_scale


def base_config(**over):
    raw = {
        "shape": {"kind": "interval", "a": 0.0, "b": 1.0},
        "kernel": {"family": "uniform", "d": 0.25},
        "h_grid": 0.05,
    }
    raw.update(over)
    return raw


def test_load_config_round_trip(tmp_path):
    import json
    path = tmp_path / "run.json"
    path.write_text(json.dumps(base_config()))
    raw = load_config(path)
    assert raw["h_grid"] == 0.05


def test_load_config_reports_line(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"shape": 1,\n "kernel": }')
    with pytest.raises(ConfigurationError) as err:
        load_config(path)
    assert ":2:" in str(err.value)
    assert "malformed JSON" in str(err.value)


def test_load_config_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "absent.json")


@pytest.mark.parametrize("mangle, needle", [
    (lambda r: r.update(extra=1), "unknown keys"),
    (lambda r: r.pop("kernel"), "missing required key"),
    (lambda r: r.update(h_grid=-0.1), "h_grid"),
    (lambda r: r["kernel"].pop("d"), "kernel"),
    (lambda r: r.update(kernel={"family": "uniform", "d": 0}), "kernel.d"),
    (lambda r: r.update(solver={"dt": -1e-3}), "dt"),
    (lambda r: r.update(solver={"warp": 9}), "unknown solver keys"),
    (lambda r: r.update(datum={"name": "x"}), "variant"),
    (lambda r: r.update(datum={"variant": "cubic"}), "unknown datum variant"),
    (lambda r: r.update(datum={"variant": "static"}), "needs 'h'"),
    (lambda r: r.update(datum={"variant": "nonlinear"}), "positive 'p'"),
    (lambda r: r.update(datum={"variant": "power_law",
                               "h": {"name": "uniform"}, "T": 0.5,
                               "alpha": 1.5},
                        solver={"t_end": 0.5}), "focusing time"),
])
def test_validation_rejections(mangle, needle):
    raw = base_config()
    mangle(raw)
    with pytest.raises(ConfigurationError) as err:
        validate_config(raw, origin="unit")
    assert needle in str(err.value)
    assert str(err.value).startswith("unit")


def test_solver_config_defaults_and_overrides():
    cfg = solver_config(base_config())
    assert cfg.scheme == "rk4"
    assert cfg.dt == 1e-3
    cfg2 = solver_config(base_config(solver={"scheme": "euler", "dt": 0.05,
                                             "t_end": 2.0,
                                             "snapshot_stride": 4}))
    assert cfg2.scheme == "euler"
    assert cfg2.dt == 0.05
    assert cfg2.t_end == 2.0
    assert cfg2.snapshot_stride == 4


# ---------------------------------------------------------------------------
# collar fields

def test_collar_one_sided(interval_geo):
    vals, support = build_collar_field(
        interval_geo, {"name": "one_sided", "value": 2.0})
    y = interval_geo.grid.centers[interval_geo.collar.exterior][:, 0]
    assert np.array_equal(vals, np.where(y > 0.5, 2.0, 0.0))
    assert np.array_equal(np.sort(support),
                          np.sort(interval_geo.collar.exterior[y > 0.5]))


def test_collar_antisymmetric(interval_geo):
    vals, support = build_collar_field(interval_geo, {"name": "antisymmetric"})
    y = interval_geo.grid.centers[interval_geo.collar.exterior][:, 0]
    assert np.array_equal(vals, np.where(y > 0.5, 1.0, -1.0))
    assert support.size == interval_geo.collar.exterior.size


def test_collar_linear_balanced(interval_geo, interval_flux):
    vals, _ = build_collar_field(interval_geo, {"name": "linear_balanced"})
    y = interval_geo.grid.centers[interval_geo.collar.exterior][:, 0]
    right = y > 0.5
    assert np.array_equal(vals[right], y[right])
    left = vals[~right]
    assert np.all(left == left[0])
    assert left[0] < 0.0
    # the left constant balances the net flux to quadrature accuracy
    rel = abs(compat_residual(interval_flux, vals)) / compat_scale(interval_flux, vals)
    assert rel < 10.0 * interval_geo.grid.h


def test_collar_zero_and_values(interval_geo):
    vals, support = build_collar_field(interval_geo, {"name": "zero"})
    assert np.all(vals == 0.0)
    assert support.size == 0
    n = interval_geo.collar.exterior.size
    explicit = np.zeros(n)
    explicit[3] = 5.0
    vals2, support2 = build_collar_field(
        interval_geo, {"name": "values", "values": list(explicit)})
    assert np.array_equal(vals2, explicit)
    assert np.array_equal(support2, interval_geo.collar.exterior[3:4])
    with pytest.raises(ConfigurationError):
        build_collar_field(interval_geo, {"name": "values", "values": [1.0]})
    with pytest.raises(ConfigurationError):
        build_collar_field(interval_geo, {"name": "edge"})
    with pytest.raises(ConfigurationError):
        build_collar_field(interval_geo, {"name": "nope"})


# ---------------------------------------------------------------------------
# initial fields

def test_u0_constant(interval_geo, interval_op):
    u0 = build_initial_field(interval_geo, interval_op,
                             {"kind": "constant", "value": 1.5})
    assert np.all(u0 == 1.5)
    default = build_initial_field(interval_geo, interval_op, None)
    assert np.all(default == 0.0)


def test_u0_random_mean_zero(interval_geo, interval_op):
    spec = {"kind": "random", "seed": 11, "amplitude": 0.3, "base": 2.0}
    u0 = build_initial_field(interval_geo, interval_op, spec)
    assert np.mean(u0) == pytest.approx(2.0, abs=1e-12)
    again = build_initial_field(interval_geo, interval_op, spec)
    assert np.array_equal(u0, again)
    # the spec's own seed wins over the fallback argument
    other = build_initial_field(interval_geo, interval_op, spec, seed=99)
    assert np.array_equal(u0, other)


def test_u0_slow_mode(interval_geo, interval_op):
    u0 = build_initial_field(interval_geo, interval_op, {"kind": "slow_mode"})
    assert np.max(np.abs(u0)) == pytest.approx(1.0, abs=1e-12)
    assert np.mean(u0) == pytest.approx(0.0, abs=1e-12)
    # single-mode data are an eigenvector of the exchange form
    s = interval_op.A * u0 - interval_op.W @ u0
    lam = float(u0 @ s) / float(u0 @ u0)
    assert np.max(np.abs(s - lam * u0)) < 1e-10


def test_u0_file_round_trip(tmp_path, interval_geo, interval_op):
    vals = np.linspace(0.0, 1.0, interval_op.n)
    path = tmp_path / "u0.txt"
    np.savetxt(path, vals)
    u0 = build_initial_field(interval_geo, interval_op,
                             {"kind": "file", "path": str(path)})
    assert np.allclose(u0, vals, rtol=0, atol=1e-15)
    short = tmp_path / "short.txt"
    np.savetxt(short, vals[:5])
    with pytest.raises(ConfigurationError):
        build_initial_field(interval_geo, interval_op,
                            {"kind": "file", "path": str(short)})


def test_u0_guards(interval_geo, interval_op):
    with pytest.raises(ConfigurationError):
        build_initial_field(interval_geo, interval_op, {"kind": "vortex"})
    with pytest.raises(ConfigurationError):
        build_initial_field(interval_geo, interval_op, {"value": 1.0})
    with pytest.raises(ConfigurationError):
        build_initial_field(interval_geo, interval_op,
                            {"kind": "prepared_profile"})


# ---------------------------------------------------------------------------
# datum assembly

def test_build_datum_variants(interval_geo):
    datum, h, support = build_datum(interval_geo, base_config())
    assert datum is None and h is None and support is None

    raw = base_config(datum={"variant": "static",
                             "h": {"name": "one_sided"}})
    datum, h, support = build_datum(interval_geo, raw)
    assert isinstance(datum, StaticFlux)
    assert support.size == 5

    raw = base_config(datum={"variant": "power_law",
                             "h": {"name": "one_sided"}, "T": 0.9,
                             "alpha": 1.5})
    datum, h, support = build_datum(interval_geo, raw)
    assert isinstance(datum, PowerLawFlux)
    assert datum.T == 0.9 and datum.alpha == 1.5

    raw = base_config(datum={"variant": "power_law",
                             "h": {"name": "antisymmetric"}, "T": 0.9,
                             "alpha": 1.5})
    with pytest.raises(ConfigurationError):
        build_datum(interval_geo, raw)  # focusing data must be nonnegative


# ---------------------------------------------------------------------------
# the assembled experiment

def test_assemble_experiment_prepared_profile():
    raw = base_config(
        datum={"variant": "power_law", "h": {"name": "one_sided"},
               "T": 0.9, "alpha": 1.5},
        u0={"kind": "prepared_profile"},
        solver={"dt": 1e-3, "t_end": 0.5})
    exp = assemble_experiment(raw)
    assert exp.strips is not None
    assert exp.datum.alpha == 1.5
    # one profile level: u0 = w1 * T^(1 - alpha); the peak cell sees four
    # collar cells (the fifth sits at the tie and is excluded), so
    # w1 = 4 * 2 * 0.05 / (alpha - 1) = 0.8 there
    assert np.max(exp.u0) == pytest.approx(0.8 * 0.9 ** (-0.5), abs=1e-12)
    assert np.all(exp.u0 >= 0.0)


def test_assemble_experiment_rejects_mismatched_u0():
    raw = base_config(datum={"variant": "static", "h": {"name": "one_sided"}},
                      u0={"kind": "prepared_profile"})
    with pytest.raises(ConfigurationError):
        assemble_experiment(raw)
    raw = base_config(
        datum={"variant": "power_law", "h": {"name": "zero"},
               "T": 0.9, "alpha": 1.5},
        u0={"kind": "prepared_profile"}, solver={"t_end": 0.5})
    with pytest.raises(ConfigurationError):
        assemble_experiment(raw)
