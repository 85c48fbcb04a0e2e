import csv
import json

import numpy as np
import pytest

from fr3sounder.analysis import PadpGrid, PathLossFit, PathLossSample, RcsFit
from fr3sounder.export import (
    dumps, export_grid_csv, export_path_loss_csv, export_pdps_csv, export_rows_csv, fit_to_dict, grid_to_dict,
    read_grid_csv, write_json,
)
from fr3sounder.receiver import CaptureInfo, Pdp, noise_threshold


def grid(kind="azimuth"):
    rng = np.random.default_rng(3)
    p = rng.random((5, 7)) * 1e-6
    p[1, 2] = 0.0
    return PadpGrid(kind, np.array([-36.0, -18.0, 0.0, 18.0, 36.0]), np.arange(7) * 2.4927709642, p,
                    np.ones_like(p, dtype=bool))


def test_path_loss_csv(tmp_path):
    fit = PathLossFit(2.0, 0.0, 49.35, 1.0, 2)
    samples = [PathLossSample(10.0, 69.35), PathLossSample(100.0, 89.4)]
    p = tmp_path / "pl.csv"
    export_path_loss_csv(fit, samples, p)
    rows = list(csv.reader(open(p)))
    assert rows[0] == ["distance_m", "pl_db", "fitted_db"]
    assert [float(v) for v in rows[2]] == [100.0, 89.4, pytest.approx(89.35)]


def test_grid_csv_round_trip_exact(tmp_path):
    g = grid()
    p = tmp_path / "g.csv"
    export_grid_csv(g, p)
    assert next(csv.reader(open(p))) == ["az_deg", "delay_ns", "power_dbm"]
    a0, a1, db = read_grid_csv(p)
    assert np.array_equal(a0, g.axis0_deg) and np.array_equal(a1, g.axis1)
    assert np.array_equal(db, g.power_dbm, equal_nan=True)
    assert np.isnan(db[1, 2])


def test_pdps_csv(tmp_path):
    p = np.zeros(10)
    p[4] = 1e-5
    pdp = noise_threshold(Pdp(p, 2e-9, CaptureInfo(0.5, 1, 2, 44)))
    omni = noise_threshold(Pdp(p, 2e-9, CaptureInfo(0.5, 1, 0, None)))
    path = tmp_path / "p.csv"
    export_pdps_csv([pdp, omni], path)
    rows = list(csv.reader(open(path)))
    assert rows[1] == ["0.5", "1", "2", "44", "8.0", "-50.0"]
    assert rows[2][3] == "omni"


def test_rows_csv(tmp_path):
    path = tmp_path / "r.csv"
    export_rows_csv(["a", "b"], [[0.1, "x"], [2, 1.5]], path)
    assert list(csv.reader(open(path)))[1:] == [["0.1", "x"], ["2", "1.5"]]


def test_json_helpers(tmp_path):
    d = grid_to_dict(grid("pap"))
    assert d["axes"]["axis0"] == "az_deg" and "el_deg" in d
    text = dumps(d)
    assert "NaN" not in text and json.loads(text)["power_dbm"][1][2] is None
    write_json({"x": np.float32(1.5), "n": np.int64(3), "ok": np.bool_(True), "v": np.arange(2)}, tmp_path / "o.json")
    assert json.load(open(tmp_path / "o.json")) == {"n": 3, "ok": True, "v": [0, 1], "x": 1.5}


def test_fit_to_dict():
    assert fit_to_dict(PathLossFit(2.1, 3.9, 50.0, 1.0, 500))["ple"] == 2.1
    r = fit_to_dict(RcsFit(7.7, 8.4, 2000, "passenger_car", "monostatic", 1))
    assert r["kind"] == "rcs_fit" and r["n_excluded"] == 1
    with pytest.raises(TypeError):
        fit_to_dict(object())


def test_unwritable_path(tmp_path):
    with pytest.raises(OSError):
        export_grid_csv(grid(), tmp_path / "missing" / "g.csv")
    with pytest.raises(OSError):
        write_json({}, tmp_path / "missing" / "x.json")
