"""CSV and JSON exports of analysis products.

Floats are written with ``repr`` (shortest round-tripping form), so
re-importing a CSV reproduces the values bit for bit.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .analysis import PadpGrid, PathLossFit, RcsFit


def _f(x) -> str:
    return repr(float(x))


def _open(path):
    try:
        return open(path, "w", newline="")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def export_path_loss_csv(fit: PathLossFit, samples, path) -> None:
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["distance_m", "pl_db", "fitted_db"])
        for s in samples:
            w.writerow([_f(s.distance), _f(s.path_loss), _f(fit.predict(s.distance))])


def export_grid_csv(grid: PadpGrid, path) -> None:
    """Long-form rows (axis0, axis1, power_dbm); absent cells read 'nan'."""
    a0, a1 = grid.axis_names
    db = grid.power_dbm
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow([a0, a1, "power_dbm"])
        for i, x in enumerate(grid.axis0_deg):
            for j, y in enumerate(grid.axis1):
                w.writerow([_f(x), _f(y), _f(db[i, j])])


def read_grid_csv(path) -> tuple:
    """Inverse of :func:`export_grid_csv`: (axis0, axis1, power_dbm matrix)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    body = [[float(v) for v in r] for r in rows[1:]]
    a0 = np.array(sorted({r[0] for r in body}))
    a1 = np.array(sorted({r[1] for r in body}))
    db = np.full((len(a0), len(a1)), np.nan)
    for x, y, p in body:
        db[np.searchsorted(a0, x), np.searchsorted(a1, y)] = p
    return a0, a1, db


def export_pdps_csv(pdps, path) -> None:
    """Long-form rows of retained PDP bins: capture identity, delay, power."""
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp_s", "node_id", "array_id", "beam_id", "delay_ns", "power_dbm"])
        for p in pdps:
            beam = "omni" if p.info.beam_id is None else p.info.beam_id
            for k in np.flatnonzero(p.retained_mw() > 0):
                w.writerow([_f(p.info.timestamp), p.info.node_id, p.info.array_id, beam,
                            _f(k * p.tap_spacing * 1e9), _f(10 * math.log10(p.power_mw[k]))])


def export_rows_csv(header, rows, path) -> None:
    with _open(path) as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_f(v) if isinstance(v, float) else v for v in r])


def _clean(obj):
    """JSON-safe copy: NaN becomes null, numpy scalars/arrays become Python."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def grid_to_dict(grid: PadpGrid) -> dict:
    a0, a1 = grid.axis_names
    return {"kind": grid.kind, "axes": {"axis0": a0, "axis1": a1, "units": "dBm"},
            a0: grid.axis0_deg, a1: grid.axis1, "power_dbm": grid.power_dbm,
            "missing_beams": list(grid.missing_beams)}


def fit_to_dict(fit) -> dict:
    if isinstance(fit, PathLossFit):
        return {"kind": "path_loss_fit", "ple": fit.ple, "sigma_s_db": fit.sigma_s,
                "intercept_at_d0_db": fit.intercept_at_d0, "d0_m": fit.d0, "n_samples": fit.n_samples,
                "anchored": fit.anchored}
    if isinstance(fit, RcsFit):
        return {"kind": "rcs_fit", "mu_dbsm": fit.mu, "sigma_dbsm": fit.sigma, "n_samples": fit.n_samples,
                "target_class": fit.target_class, "mode": fit.mode, "n_excluded": fit.n_excluded}
    raise TypeError(f"cannot export {type(fit).__name__}")


def write_json(obj, path) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(_clean(obj), fh, indent=1, sort_keys=True, allow_nan=False)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, allow_nan=False)
