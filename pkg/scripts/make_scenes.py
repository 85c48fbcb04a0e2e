"""Regenerate the bundled configs and scene files under configs/."""

import json
import math
from pathlib import Path

from fr3sounder.channel import Scene, TargetTrack
from fr3sounder.core import SPEED_OF_LIGHT, SUPPORTED_FREQUENCIES_GHZ, default_config, save_config

ROOT = Path(__file__).resolve().parent.parent / "configs"
CFG = default_config()
BIN_M = SPEED_OF_LIGHT * CFG.tap_spacing  # path length of one delay bin


def scene_fspl_drive():
    # 500 positions 10..300 m from a 10 m mast at the same height
    n = 500
    track = ((0.0, 10.0, 0.0, 10.0), ((n - 1) * 0.1, 300.0, 0.0, 10.0))
    return Scene(tx_position=(0.0, 0.0, 10.0), rx_position=(10.0, 0.0, 10.0), rx_track=track,
                 name="fspl_drive")


def scene_drive_shadowed():
    s = scene_fspl_drive()
    return Scene(**{**s.__dict__, "shadowing_sigma_db": 4.0, "shadowing_seed": 11, "name": "drive_shadowed"})


def scene_calibration():
    return Scene(tx_position=(0.0, 0.0, 1.5), rx_position=(3.0, 0.0, 1.5), name="calibration_3m")


def scene_los76():
    """LOS 76 m away at 20° azimuth plus three static reflections."""
    rx = (0.0, 0.0, 2.0)
    a = math.radians(20.0)
    tx = (76 * math.cos(a), 76 * math.sin(a), 2.0)
    d = 76 / SPEED_OF_LIGHT
    env = (
        {"delay_s": d + 10e-9, "gain_db": -103.3, "phase_rad": 2.0, "aoa": [20.0, -20.0], "aod": [0.0, 0.0]},
        {"delay_s": d + 40e-9, "gain_db": -101.3, "phase_rad": 1.0, "aoa": [-30.0, 20.0], "aod": [0.0, 0.0]},
        {"delay_s": d + 120e-9, "gain_db": -108.3, "phase_rad": 0.3, "aoa": [150.0, 5.0], "aod": [0.0, 0.0]},
    )
    return Scene(tx_position=tx, rx_position=rx, environment=env, name="los_76m")


def scene_isac():
    """Car receding at 8 m/s from beside the receiver for 30 s.

    The static paths (LOS, one reflector) sit exactly on the delay grid so
    their sinc sidelobes do not raise the noise floor estimate.
    """
    los_m = 35 * BIN_M
    rx_x = math.sqrt(los_m**2 - 8.0**2)
    env = ({"delay_s": 56 * CFG.tap_spacing, "gain_db": -95.0, "phase_rad": 0.4, "aoa": [30.0, 0.0],
            "aod": [0.0, 0.0]},)
    car = TargetTrack(((0.0, 25.2, 0.5, 1.5), (30.0, 25.2 + 8 * 30, 0.5, 1.5)), "passenger_car", "bistatic",
                      "frozen", seed=3)
    return Scene(tx_position=(0.0, 0.0, 10.0), rx_position=(rx_x, 0.0, 2.0), g_tx_dbi=10.0, environment=env,
                 targets=(car,), name="isac_receding_car")


def scene_rcs(target_class, mode, n=2000, period=0.01):
    """Target drifting across range; for bistatic the baseline is 4 bins long."""
    t_end = (n - 1) * period
    if mode == "monostatic":
        tx = rx = (0.0, 0.0, 1.5)
        wp = ((0.0, 6.0, 0.0, 1.5), (t_end, 20.0, 0.0, 1.5))
    else:
        base = 4 * BIN_M
        tx, rx = (0.0, 0.0, 1.5), (base, 0.0, 1.5)
        wp = ((0.0, base / 2, 12.0, 1.5), (t_end, base / 2, 25.0, 1.5))
    track = TargetTrack(wp, target_class, mode, "fresh", seed=7)
    return Scene(tx_position=tx, rx_position=rx, targets=(track,), name=f"rcs_{target_class}_{mode}")


def write(scene, name):
    (ROOT / "scenes" / name).write_text(json.dumps(scene.to_dict(), indent=1, sort_keys=True) + "\n")


def main():
    (ROOT / "scenes").mkdir(parents=True, exist_ok=True)
    for f in SUPPORTED_FREQUENCIES_GHZ:
        tag = f"{f:g}".replace(".", "g")
        tag = tag if "g" in tag else tag + "g"
        save_config(default_config(f), ROOT / f"default{tag}.json")
    write(scene_fspl_drive(), "fspl_drive.json")
    write(scene_drive_shadowed(), "drive_shadowed.json")
    write(scene_calibration(), "calibration_3m.json")
    write(scene_los76(), "los_76m.json")
    write(scene_isac(), "isac_receding_car.json")
    for cls in ("passenger_car", "pedestrian"):
        for mode in ("bistatic", "monostatic"):
            write(scene_rcs(cls, mode), f"rcs_{cls}_{mode}.json")


if __name__ == "__main__":
    main()
