"""Command-line interface: ``fr3sounder <subcommand> ...``.

Exit codes: 0 success, 1 invalid input (config, scene, flags), 2 processing failure.
Relative ``--out`` paths resolve under ``$CSND_OUT_DIR`` when it is set.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import analysis as an
from . import export as ex
from .array import BeamDefinition, build_beam_table, build_scan_schedule
from .calibration import CalReport, CalibrationError, SounderCalibration, verify_omni_vs_beams
from .campaign import (
    CampaignSeeds, Node, ScheduleError, build_frontends, build_schedule, calibrate_flatness,
    calibrated_pdps, calibration_rotations, group_by_snapshot, incident_power_calibration, run_campaign, snapshot_of,
)
from .channel import FrontEndModel, Scene, SensingGeometry, bistatic_delay_s, fspl_db, load_scene
from .core import ConfigError, SounderConfig, config_violations, default_config, load_config
from .receiver import synthesize_omni_pdp, total_power_dbm
from .recording import RecordingFormatError, load_recording, save_recording
from .waveform import build_sounding_frame

OUT_DIR_ENV = "CSND_OUT_DIR"
EXIT_OK, EXIT_INVALID, EXIT_FAILED = 0, 1, 2
CAL_DISTANCE_M = 3.0


class InputError(Exception):
    """Bad user input: maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _out_path(path):
    base = os.environ.get(OUT_DIR_ENV)
    if path and base and not os.path.isabs(path):
        return os.path.join(base, path)
    return path


def _config(args) -> SounderConfig:
    if not getattr(args, "config", None):
        return default_config()
    try:
        return load_config(args.config)
    except ConfigError:
        raise
    except (OSError, ValueError, TypeError) as exc:
        raise InputError(f"cannot load config {args.config}: {exc}") from None


def _scene(path) -> Scene:
    try:
        return load_scene(path)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise InputError(f"cannot load scene {path}: {exc}") from None


def _recording(path):
    try:
        return load_recording(path)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _emit(obj, args, csv_writer=None):
    """Write ``obj`` as JSON (or via ``csv_writer``) to --out, else print JSON."""
    out = _out_path(getattr(args, "out", None))
    fmt = getattr(args, "format", "json")
    if out is None:
        print(ex.dumps(obj))
    elif fmt == "csv" and csv_writer is not None:
        csv_writer(out)
    else:
        ex.write_json(obj, out)


def _recording_config(rec) -> SounderConfig:
    return SounderConfig.from_dict(rec.header["config"])


def _beams_from_header(rec):
    rows = rec.header.get("beams") or []
    return [BeamDefinition(int(r[0]), int(r[1]), (r[2], r[3]), (r[4], r[5]), r[6]) for r in rows]


def _calibration(path, rec=None):
    if path:
        try:
            return SounderCalibration.load(path)
        except (OSError, ValueError, KeyError) as exc:
            raise InputError(f"cannot load calibration {path}: {exc}") from None
    if rec is not None and rec.header.get("calibration"):
        return SounderCalibration.from_dict(rec.header["calibration"])
    return None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_validate(args):
    cfg = _config(args)
    v = config_violations(cfg)
    for msg in v:
        print(f"violation: {msg}")
    if v:
        return EXIT_INVALID
    print("config valid")
    return EXIT_OK


def cmd_waveform(args):
    cfg = _config(args)
    frame = build_sounding_frame(cfg, root=args.root)
    s = frame.baseband.samples
    p = np.abs(s) ** 2
    stats = {
        "samples": len(s),
        "sample_rate_hz": cfg.sample_rate,
        "duration_s": frame.duration,
        "repetitions": frame.repetitions,
        "zc_length": cfg.zc_length,
        "zc_root": args.root,
        "papr_db": 10 * math.log10(p.max() / p.mean()),
        "processing_gain_db": cfg.processing_gain_db,
        "tap_spacing_s": cfg.tap_spacing,
        "occupied_bandwidth_hz": cfg.occupied_bandwidth,
    }
    _emit(stats, args)
    return EXIT_OK


def _frontends(args, cfg):
    if args.ideal_frontend:
        return {
            "omni": FrontEndModel.ideal(cfg, cfg.rx_noise_figure_omni, noise_enabled=not args.no_noise),
            **{f"array{k}": FrontEndModel.ideal(cfg, cfg.rx_noise_figure_array, noise_enabled=not args.no_noise)
               for k in range(4)},
        }
    return build_frontends(cfg, args.frontend_seed, noise_enabled=not args.no_noise)


def _nodes(array: bool, omni: bool):
    return [Node(0, transmits=True), Node(1, omni=omni, array=array)]


def cmd_simulate(args):
    if not args.out:
        raise InputError("simulate needs --out")
    cfg = _config(args)
    scene = _scene(args.scene)
    use_array = args.array or args.calibration_sweep
    if use_array and not cfg.band.has_array:
        raise InputError(f"{cfg.center_frequency} GHz has no phased array; drop --array")
    beams = build_beam_table(cfg.band) if use_array else None
    sweep = build_scan_schedule(beams, cfg, args.guard) if use_array else None
    n = 4 if args.calibration_sweep else args.snapshots
    try:
        sched = build_schedule(_nodes(use_array, not args.no_omni), sweep, args.period, n, cfg, args.guard)
    except ScheduleError as exc:
        raise InputError(str(exc)) from None
    cal = _calibration(args.calibration)
    rotations = calibration_rotations(scene) if args.calibration_sweep else None
    rec = run_campaign(sched, scene, cfg, CampaignSeeds(args.seed, args.frontend_seed), cal,
                       _frontends(args, cfg), beams, rotations, noise_enabled=not args.no_noise)
    out = _out_path(args.out)
    save_recording(rec, out)
    print(f"wrote {len(rec.records)} CIR records to {out}")
    return EXIT_OK


def cmd_calibrate(args):
    cfg = _config(args)
    fes = build_frontends(cfg, args.frontend_seed)
    if args.recording:
        rec = _recording(args.recording)
        cfg = _recording_config(rec)
        base = _calibration(None, rec) or SounderCalibration()
        beams = _beams_from_header(rec)
    else:
        base = calibrate_flatness(cfg, fes)
        scene = _scene(args.scene) if args.scene else Scene(
            tx_position=(0.0, 0.0, 1.5), rx_position=(CAL_DISTANCE_M, 0.0, 1.5), name="calibration_3m")
        beams = build_beam_table(cfg.band) if cfg.band.has_array else None
        sweep = build_scan_schedule(beams, cfg) if beams else None
        n = 4 if beams else 1
        sched = build_schedule(_nodes(bool(beams), True), sweep, max(1e-3, cfg.frame_duration), n, cfg)
        rots = calibration_rotations(scene) if beams else None
        rec = run_campaign(sched, scene, cfg, CampaignSeeds(args.seed, args.frontend_seed), base, fes, beams, rots)
    full = incident_power_calibration(rec, cfg, args.d_ref, base, beams)
    steps = list(full.report.steps)
    delta = None
    if args.verify_scene:
        if not beams:
            raise InputError("omni-vs-beam verification needs an array band")
        scene = _scene(args.verify_scene)
        sched = build_schedule(_nodes(True, True), build_scan_schedule(beams, cfg), 1e-3, 1, cfg)
        vrec = run_campaign(sched, scene, cfg, CampaignSeeds(args.seed + 1, args.frontend_seed), full, fes, beams)
        lut = {b.beam_id: b for b in beams}
        pdps = calibrated_pdps(vrec.records, full, lut)
        omni = [p for p in pdps if p.info.beam_id is None][0]
        res = verify_omni_vs_beams(synthesize_omni_pdp([p for p in pdps if p.info.beam_id is not None]), omni)
        steps.append(res)
        delta = res.metrics.get("delta_db")
    full = SounderCalibration(full.tx, full.rx, full.offsets_db, CalReport(tuple(steps), delta))
    out = _out_path(args.out)
    if out:
        full.save(out)
    print(json.dumps(ex._clean(full.report.to_dict()), indent=1, sort_keys=True))
    return EXIT_OK if full.report.passed else EXIT_FAILED


def _process(rec, cal, margin):
    cfg = _recording_config(rec)
    beams = _beams_from_header(rec)
    lut = {b.beam_id: b for b in beams}
    pdps = calibrated_pdps(rec.records, cal, lut, margin)
    return cfg, beams, pdps


def cmd_process(args):
    rec = _recording(args.input)
    cal = _calibration(args.calibration, rec)
    cfg, beams, pdps = _process(rec, cal, args.margin_db)
    captures = []
    for p in pdps:
        captures.append({
            "timestamp_s": p.info.timestamp, "node_id": p.info.node_id, "array_id": p.info.array_id,
            "beam_id": p.info.beam_id, "total_power_dbm": total_power_dbm(p),
            "present_bins": int(np.count_nonzero(p.present)),
        })
    synthesized = []
    snap_groups = {}
    for p in pdps:
        if p.info.beam_id is not None:
            snap_groups.setdefault(snapshot_of(rec.header, p), []).append(p)
    for k, group in sorted(snap_groups.items()):
        synthesized.append({"snapshot": k, "total_power_dbm": total_power_dbm(synthesize_omni_pdp(group))})
    samples, dropped = an.path_loss_samples(rec, cal, margin_db=args.margin_db, run_id=args.input)
    result = {
        "kind": "processed",
        "config": rec.header["config"],
        "captures": captures,
        "synthesized_omni": synthesized,
        "path_loss_samples": [
            {"distance_m": s.distance, "path_loss_db": s.path_loss, "timestamp_s": s.timestamp} for s in samples
        ],
        "no_signal_captures": dropped,
    }
    _emit(result, args, lambda out: ex.export_pdps_csv(pdps, out))
    print(f"processed {len(pdps)} captures, {len(samples)} path-loss samples", file=sys.stderr)
    return EXIT_OK


def _samples_from(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"CSND":
        rec = _recording(path)
        return an.path_loss_samples(rec, _calibration(None, rec), run_id=path)[0]
    d = _read_json(path)
    try:
        return [an.PathLossSample(s["distance_m"], s["path_loss_db"], path, s.get("timestamp_s", 0.0))
                for s in d["path_loss_samples"]]
    except (KeyError, TypeError) as exc:
        raise InputError(f"{path} holds no path_loss_samples: {exc}") from None


def cmd_fit_pathloss(args):
    samples = _samples_from(args.input)
    anchor = None
    if args.anchor_fspl:
        anchor = fspl_db(args.d0, args.anchor_fspl)
    fit = an.fit_path_loss(samples, args.d0, anchor)
    print(f"PLE {fit.ple:.2f}  sigma_S {fit.sigma_s:.2f} dB  PL(d0={fit.d0:g} m) {fit.intercept_at_d0:.2f} dB"
          f"  n={fit.n_samples}")
    if args.out:
        _emit(ex.fit_to_dict(fit), args, lambda out: ex.export_path_loss_csv(fit, samples, out))
    return EXIT_OK


def cmd_padp(args):
    rec = _recording(args.input)
    cal = _calibration(args.calibration, rec)
    cfg, beams, pdps = _process(rec, cal, args.margin_db)
    if not beams:
        raise InputError("recording has no beam captures")
    groups = group_by_snapshot(rec)
    if args.snapshot not in groups:
        raise InputError(f"snapshot {args.snapshot} not in recording (have {sorted(groups)[:5]}...)")
    ids = {id(r) for r in groups[args.snapshot]}
    beam_pdps = [p for r, p in zip(rec.records, pdps) if id(r) in ids and p.info.beam_id is not None]
    grid = an.build_pap(beam_pdps, beams) if args.axis == "pap" else an.build_padp(beam_pdps, beams, args.axis)
    _emit(ex.grid_to_dict(grid), args, lambda out: ex.export_grid_csv(grid, out))
    return EXIT_OK


def cmd_isolate_target(args):
    rec = _recording(args.input)
    cal = _calibration(args.calibration, rec)
    cfg, _, pdps = _process(rec, cal, args.margin_db)
    scene = Scene.from_dict(rec.header["scene"])
    if not scene.targets:
        raise InputError("scene has no target track")
    omni = [p for p in pdps if p.info.beam_id is None]
    times = [p.info.timestamp for p in omni]
    track = scene.targets[args.target]
    expected = [bistatic_delay_s(scene.tx_at(t), scene.rx_at(t), track.position(t)) for t in times]
    iso = an.isolate_target(omni, expected, args.window_bins * cfg.tap_spacing)
    geoms = an.target_geometries(scene, times, args.target)
    rows = [
        {"timestamp_s": t, "expected_delay_ns": e * 1e9, "peak_delay_ns": pk * 1e9, "power_dbm": pw,
         "d1_m": g.d1, "d2_m": g.d2}
        for t, e, pk, pw, g in zip(times, expected, iso.peak_delay_s, iso.power_dbm, geoms)
    ]
    result = {"kind": "target_isolation", "f_ghz": cfg.center_frequency, "tx_eirp_dbm": cfg.tx_eirp,
              "g_tx_dbi": scene.g_tx_dbi, "g_rx_dbi": scene.g_rx_dbi, "target_class": track.target_class,
              "mode": track.mode, "snapshots": rows}

    def csv_out(out):
        keys = list(rows[0]) if rows else []
        ex.export_rows_csv(keys, [[float(r[k]) for k in keys] for r in rows], out)

    _emit(result, args, csv_out)
    return EXIT_OK


def cmd_fit_rcs(args):
    d = _read_json(args.input)
    if d.get("kind") != "target_isolation":
        raise InputError(f"{args.input} is not an isolate-target output")
    snaps = d["snapshots"]
    powers = [np.nan if s["power_dbm"] is None else s["power_dbm"] for s in snaps]
    geoms = [SensingGeometry((0, 0, 0), (0, 0, 0), (0, 0, 0), s["d1_m"], s["d2_m"]) for s in snaps]
    est = an.estimate_rcs(powers, geoms, d["f_ghz"], d["tx_eirp_dbm"], d["g_tx_dbi"], d["g_rx_dbi"])
    fit = an.fit_normal(est, d["target_class"], d["mode"])
    print(f"RCS {fit.target_class}/{fit.mode}: mu {fit.mu:.2f} dBsm  sigma {fit.sigma:.2f} dBsm  "
          f"n={fit.n_samples} excluded={fit.n_excluded}")
    if args.out:
        _emit(ex.fit_to_dict(fit), args)
    return EXIT_OK


def cmd_link_budget(args):
    cfg = _config(args)
    lb = an.link_budget(cfg, args.g_rx, args.snr_min, args.noise_figure)
    print(f"max measurable path loss: {lb.max_path_loss_db:.1f} dB")
    if args.out:
        _emit({"max_path_loss_db": lb.max_path_loss_db, **lb.terms}, args)
    return EXIT_OK


def cmd_export(args):
    rec = _recording(args.input)
    cal = _calibration(args.calibration, rec)
    _, _, pdps = _process(rec, cal, args.margin_db)
    if args.format == "csv":
        if not args.out:
            raise InputError("csv export needs --out")
        ex.export_pdps_csv(pdps, _out_path(args.out))
    else:
        data = {"kind": "pdps", "header": rec.header, "pdps": [
            {"timestamp_s": p.info.timestamp, "node_id": p.info.node_id, "array_id": p.info.array_id,
             "beam_id": p.info.beam_id, "tap_spacing_s": p.tap_spacing,
             "bins": np.flatnonzero(p.present).tolist(), "power_dbm": 10 * np.log10(p.power_mw[p.present])}
            for p in pdps]}
        _emit(data, args)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fr3sounder", description="FR3 channel sounder simulation and processing")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(fn=fn)
        return sp

    def common(sp, config=True, out=True, fmt=False):
        if config:
            sp.add_argument("--config", help="sounder config JSON (default: built-in 14.5 GHz)")
        if out:
            sp.add_argument("--out", help=f"output path (relative paths go under ${OUT_DIR_ENV})")
        if fmt:
            sp.add_argument("--format", choices=("json", "csv"), default="json")

    def processing(sp):
        sp.add_argument("--in", dest="input", required=True, help="input recording")
        sp.add_argument("--calibration", help="calibration JSON (default: the recording's own)")
        sp.add_argument("--margin-db", type=float, default=None, help="noise threshold margin")

    sp = add("validate", cmd_validate, "check a config against its invariants")
    common(sp, out=False)

    sp = add("waveform", cmd_waveform, "emit sounding-frame statistics")
    common(sp)
    sp.add_argument("--root", type=int, default=1)

    sp = add("simulate", cmd_simulate, "simulate a campaign over a scene into a recording")
    common(sp)
    sp.add_argument("--scene", required=True)
    sp.add_argument("--seed", type=int, default=0, help="noise seed")
    sp.add_argument("--frontend-seed", type=int, default=0, help="hardware impairment seed")
    sp.add_argument("--snapshots", type=int, default=1)
    sp.add_argument("--period", type=float, default=1e-3, help="snapshot period, s")
    sp.add_argument("--guard", type=float, default=0.0, help="guard time between beam dwells, s")
    sp.add_argument("--array", action="store_true", help="capture with the phased arrays")
    sp.add_argument("--no-omni", action="store_true")
    sp.add_argument("--calibration", help="apply this calibration while capturing")
    sp.add_argument("--calibration-sweep", action="store_true",
                    help="four platform rotations for incident-power calibration")
    sp.add_argument("--ideal-frontend", action="store_true", help="no ripple or gain error")
    sp.add_argument("--no-noise", action="store_true")

    sp = add("calibrate", cmd_calibrate, "run the calibration steps and write coefficients")
    common(sp)
    sp.add_argument("--recording", help="calibration-sweep recording for the incident-power step")
    sp.add_argument("--scene", help="calibration scene (default: 3 m LOS)")
    sp.add_argument("--verify-scene", help="scene for the omni-vs-beam check")
    sp.add_argument("--d-ref", type=float, default=CAL_DISTANCE_M)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--frontend-seed", type=int, default=0)

    sp = add("process", cmd_process, "recording to thresholded PDPs and omni power")
    common(sp, config=False, fmt=True)
    processing(sp)

    sp = add("fit-pathloss", cmd_fit_pathloss, "path-loss exponent and shadow fading")
    common(sp, config=False, fmt=True)
    sp.add_argument("--in", dest="input", required=True, help="process output JSON or a recording")
    sp.add_argument("--d0", type=float, default=1.0)
    sp.add_argument("--anchor-fspl", type=float, metavar="F_GHZ", help="pin the intercept to FSPL(d0)")

    sp = add("padp", cmd_padp, "PAP or azimuth/elevation PADP of one snapshot")
    common(sp, config=False, fmt=True)
    processing(sp)
    sp.add_argument("--snapshot", type=int, default=0)
    sp.add_argument("--axis", choices=("pap", "azimuth", "elevation"), default="azimuth")

    sp = add("isolate-target", cmd_isolate_target, "per-snapshot target power after background removal")
    common(sp, config=False, fmt=True)
    processing(sp)
    sp.add_argument("--target", type=int, default=0)
    sp.add_argument("--window-bins", type=float, default=15.0)

    sp = add("fit-rcs", cmd_fit_rcs, "log-normal RCS fit from isolate-target output")
    common(sp, config=False, fmt=True)
    sp.add_argument("--in", dest="input", required=True)

    sp = add("link-budget", cmd_link_budget, "maximum measurable path loss")
    common(sp)
    sp.add_argument("--g-rx", type=float, default=an.DEFAULT_LINK_G_RX_DBI)
    sp.add_argument("--snr-min", type=float, default=an.DEFAULT_SNR_MIN_DB)
    sp.add_argument("--noise-figure", type=float, default=None)

    sp = add("export", cmd_export, "thresholded PDPs of a recording as CSV or JSON")
    common(sp, config=False, fmt=True)
    processing(sp)
    return p


def cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.fn(args)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_INVALID
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (RecordingFormatError, CalibrationError, ValueError, OSError) as exc:
        print(f"processing failed: {exc}", file=sys.stderr)
        return EXIT_FAILED


def main():
    sys.exit(cli())


if __name__ == "__main__":
    main()
