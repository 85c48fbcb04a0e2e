"""Run the three calibration steps per band and compare calibrated power with FSPL.

Prints the omni (and, where the band has an array, beam-synthesized) total
power error at a few distances, plus the omni-vs-beam delta on los_76m.json.
"""

import argparse
import math
from pathlib import Path

from fr3sounder.array import build_beam_table, build_scan_schedule
from fr3sounder.calibration import verify_omni_vs_beams
from fr3sounder.campaign import (
    CampaignSeeds, Node, build_frontends, build_schedule, calibrate_flatness, calibrated_pdps,
    calibration_rotations, incident_power_calibration, run_campaign,
)
from fr3sounder.channel import Scene, fspl_db, load_scene
from fr3sounder.core import SUPPORTED_FREQUENCIES_GHZ, default_config
from fr3sounder.receiver import synthesize_omni_pdp, total_power_dbm

SCENES = Path(__file__).resolve().parent.parent / "configs" / "scenes"


def calibrate_band(f, frontend_seed):
    cfg = default_config(f)
    fes = build_frontends(cfg, frontend_seed)
    flat = calibrate_flatness(cfg, fes)
    arr = cfg.band.has_array
    beams = build_beam_table(cfg.band) if arr else None
    sweep = build_scan_schedule(beams, cfg) if arr else None
    nodes = [Node(0, transmits=True), Node(1, omni=True, array=arr)]
    cal_scene = load_scene(SCENES / "calibration_3m.json")
    rots = calibration_rotations(cal_scene) if arr else None
    rec = run_campaign(build_schedule(nodes, sweep, 1e-3, 4 if arr else 1, cfg), cal_scene, cfg,
                       CampaignSeeds(1, frontend_seed), flat, fes, beams, rots)
    full = incident_power_calibration(rec, cfg, 3.0, flat, beams)
    return cfg, fes, beams, sweep, nodes, full


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--frontend-seed", type=int, default=5)
    ap.add_argument("--distances", type=float, nargs="+", default=[3.0, 20.0, 76.0])
    args = ap.parse_args()

    for f in SUPPORTED_FREQUENCIES_GHZ:
        cfg, fes, beams, sweep, nodes, full = calibrate_band(f, args.frontend_seed)
        lut = {b.beam_id: b for b in beams} if beams else {}
        for d in args.distances:
            scene = Scene(tx_position=(0, 0, 1.5), rx_position=(d * math.cos(0.3), d * math.sin(0.3), 1.5))
            rec = run_campaign(build_schedule(nodes, sweep, 1e-3, 1, cfg), scene, cfg,
                               CampaignSeeds(2, args.frontend_seed), full, fes, beams)
            pdps = calibrated_pdps(rec.records, full, lut)
            expected = cfg.tx_eirp - fspl_db(d, f)
            omni = next(p for p in pdps if p.info.beam_id is None)
            line = f"{f:5.1f} GHz  {d:6.1f} m  omni {total_power_dbm(omni) - expected:+.4f} dB"
            if beams:
                synth = synthesize_omni_pdp([p for p in pdps if p.info.beam_id is not None])
                line += f"  beams {total_power_dbm(synth) - expected:+.4f} dB"
            print(line)
        if beams:
            scene = load_scene(SCENES / "los_76m.json")
            rec = run_campaign(build_schedule(nodes, sweep, 1e-3, 1, cfg), scene, cfg,
                               CampaignSeeds(10, args.frontend_seed), full, fes, beams)
            pdps = calibrated_pdps(rec.records, full, lut)
            omni = next(p for p in pdps if p.info.beam_id is None)
            res = verify_omni_vs_beams(synthesize_omni_pdp([p for p in pdps if p.info.beam_id is not None]), omni)
            print(f"{f:5.1f} GHz  los_76m omni-vs-beam delta {res.metrics['delta_db']:+.3f} dB")


if __name__ == "__main__":
    main()
