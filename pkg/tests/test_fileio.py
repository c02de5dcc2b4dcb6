import numpy as np
import pytest

from nlflux.fileio import (ensure_dir, read_field, read_report, read_series,
                           write_field, write_report, write_series)


def test_series_round_trip(tmp_path):
    path = tmp_path / "series.txt"
    cols = {"time": np.linspace(0.0, 1.0, 7),
            "mass": np.pi * np.arange(7),
            "supnorm": np.exp(np.arange(7.0))}
    write_series(path, cols)
    back = read_series(path)
    assert list(back) == ["time", "mass", "supnorm"]
    for k in cols:
        assert np.array_equal(back[k], cols[k])


def test_series_rewrite_is_byte_identical(tmp_path):
    path1, path2 = tmp_path / "a.txt", tmp_path / "b.txt"
    cols = {"time": np.array([0.1, 0.2]), "mass": np.array([1 / 3, 2 / 3])}
    write_series(path1, cols)
    write_series(path2, cols)
    assert path1.read_bytes() == path2.read_bytes()


def test_field_round_trip(tmp_path, interval_geo):
    path = tmp_path / "field.txt"
    cells = interval_geo.mask.interior
    values = np.sin(np.arange(len(cells), dtype=float))
    write_field(path, interval_geo.grid, cells, values,
                shape_spec={"kind": "interval", "a": 0.0, "b": 1.0})
    cells2, values2 = read_field(path)
    assert np.array_equal(cells2, cells)
    assert np.array_equal(values2, values)
    text = path.read_text()
    assert text.startswith("# nlflux field v1")
    assert '"kind": "interval"' in text


def test_field_2d_lattice_columns(tmp_path):
    from nlflux.geometry import build_grid, shape_from_spec
    geo = build_grid(shape_from_spec({"kind": "disk", "radius": 1.0}),
                     d=0.25, h_grid=0.0625)
    path = tmp_path / "disk.txt"
    cells = geo.mask.interior[:10]
    values = np.arange(10.0)
    write_field(path, geo.grid, cells, values)
    rows = [ln.split() for ln in path.read_text().splitlines()
            if not ln.startswith("#")]
    assert len(rows) == 10
    # cell, i0, i1, x0, x1, value
    assert all(len(r) == 6 for r in rows)
    cells2, values2 = read_field(path)
    assert np.array_equal(cells2, cells)
    assert np.array_equal(values2, values)


def test_report_round_trip_sorted(tmp_path):
    path = tmp_path / "report.json"
    write_report(path, {"zeta": 1.0, "alpha": {"b": [1, 2], "a": 0.1},
                        "arr": np.arange(3), "flag": np.bool_(True)})
    text = path.read_text()
    assert text.index('"alpha"') < text.index('"zeta"')
    back = read_report(path)
    assert back["arr"] == [0, 1, 2]
    assert back["flag"] is True
    assert back["alpha"]["b"] == [1, 2]


def test_report_handles_dataclass(tmp_path):
    from nlflux.stationary import ConvergenceReport
    rep = ConvergenceReport(fitted_rate=0.5, beta=0.4, meets_beta=True,
                            n_window=12, error_initial=1.0, error_final=0.01)
    path = tmp_path / "conv.json"
    write_report(path, {"convergence": rep})
    back = read_report(path)
    assert back["convergence"]["fitted_rate"] == 0.5
    assert back["convergence"]["meets_beta"] is True


def test_ensure_dir(tmp_path):
    target = tmp_path / "deep" / "nest"
    out = ensure_dir(target)
    assert (tmp_path / "deep" / "nest").is_dir()
    ensure_dir(target)  # idempotent
    assert str(out) == str(target)
