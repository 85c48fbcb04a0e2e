import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fr3sounder.channel import (
    ChannelRealization, FrontEndModel, PathTap, RcsModel, Scene, SensingGeometry, TapOrigin, TargetTrack,
    aperture_gain_db, apply_channel, bistatic_delay_s, capture_power_dbm, fspl_db, realize_channel,
    rcs_sample_dbsm, ripple_response, target_path_loss_db,
)
from fr3sounder.core import SPEED_OF_LIGHT, default_config
from fr3sounder.receiver import correlate
from fr3sounder.waveform import ComplexBaseband


@pytest.mark.parametrize("d,f,expect", [(1, 1, 32.44), (3, 7, 58.88), (76, 14.5, 93.28)])
def test_fspl_examples(d, f, expect):
    assert fspl_db(d, f) == pytest.approx(expect, abs=0.005)


def test_fspl_gains_and_errors():
    assert fspl_db(10, 7, 10, 5) == pytest.approx(fspl_db(10, 7) - 15, abs=1e-12)
    with pytest.raises(ValueError):
        fspl_db(0, 7)
    with pytest.raises(ValueError):
        fspl_db(1, -1)


@pytest.mark.parametrize("gamma,f,expect", [(0, 7, 38.36), (0, 14.5, 44.68)])
def test_scattering_aperture(gamma, f, expect):
    assert gamma + aperture_gain_db(f) == pytest.approx(expect, abs=0.005)


def test_target_path_loss_hand_example():
    g = SensingGeometry.from_positions((0, 0, 10), (25, 0, 2), (50, 0, 1))
    assert g.d1 == pytest.approx(math.sqrt(50**2 + 9**2), rel=1e-12)
    assert g.d2 == pytest.approx(math.sqrt(25**2 + 1), rel=1e-12)
    # documented by-hand values, rounded to the nearest few mm
    assert g.d1 == pytest.approx(50.805, abs=2e-3)
    assert g.d2 == pytest.approx(25.020, abs=5e-4)
    pl = target_path_loss_db(g, 0.0, 7.0)
    assert pl == pytest.approx(122.41, abs=0.01)
    assert target_path_loss_db(g, 6.0, 7.0) == pytest.approx(pl - 6.0, abs=1e-9)
    assert target_path_loss_db(g, 0.0, 7.0, g_tx=10) == pytest.approx(pl - 10.0, abs=1e-9)


def test_monostatic_geometry():
    g = SensingGeometry.from_positions((0, 0, 1), (0, 0, 1), (10, 0, 1))
    assert g.is_monostatic and g.theta_b == pytest.approx(0.0, abs=1e-6)
    with pytest.raises(ValueError):
        SensingGeometry.from_positions((0, 0, 0), (5, 0, 0), (0, 0, 0))


def test_bistatic_delay_examples():
    tx, rx = (0, 0, 10), (25, 0, 2)
    assert bistatic_delay_s(tx, rx, rx) == pytest.approx(87.56e-9, abs=0.01e-9)
    mid = (12.5, 0, 6)
    los = math.dist(tx, rx) / SPEED_OF_LIGHT
    assert bistatic_delay_s(tx, rx, mid) == pytest.approx(los, rel=1e-12)
    with pytest.raises(ValueError):
        bistatic_delay_s(tx, rx, (np.nan, 0, 0))


@given(st.floats(1, 500), st.floats(0.1, 100))
def test_bistatic_delay_grows_when_receding(r, step):
    tx, rx = np.array([0.0, 0, 10]), np.array([25.0, 0, 2])
    u = np.array([0.6, 0.8, 0.0])
    assert bistatic_delay_s(tx, rx, rx + (r + step) * u) > bistatic_delay_s(tx, rx, rx + r * u)


def test_rcs_sample_statistics():
    rng = np.random.default_rng(5)
    car = rcs_sample_dbsm(RcsModel.from_catalog("passenger_car", "bistatic"), rng, 100_000)
    ped = rcs_sample_dbsm(RcsModel.from_catalog("pedestrian", "monostatic"), rng, 100_000)
    assert car.mean() == pytest.approx(-0.1, abs=0.1)
    assert ped.std() == pytest.approx(10.0, abs=0.2)
    fixed = RcsModel("x", "bistatic", 3.0, 0.0)
    assert np.all(rcs_sample_dbsm(fixed, rng, 10) == 3.0)


def test_rcs_model_errors():
    with pytest.raises(ValueError):
        RcsModel.from_catalog("bicycle", "bistatic")
    with pytest.raises(ValueError):
        RcsModel("x", "bistatic", 0.0, -1.0)


def test_realize_empty_scene_los(cfg7):
    ch = realize_channel(Scene(tx_position=(0, 0, 0), rx_position=(3, 0, 0)), 0.0, cfg7)
    (tap,) = ch.taps
    assert tap.origin is TapOrigin.LINE_OF_SIGHT
    assert tap.power_db == pytest.approx(-58.88, abs=0.005)
    assert tap.delay == pytest.approx(10.007e-9, abs=1e-12)


def test_realize_blocked_and_receding(cfg):
    wp = ((0.0, 30.0, 0.0, 1.5), (10.0, 110.0, 0.0, 1.5))
    scene = Scene((0, 0, 10), (25, 0, 2), targets=(TargetTrack(wp, seed=1),))
    t0 = realize_channel(scene, 0.0, cfg).of_origin(TapOrigin.TARGET)[0]
    t10 = realize_channel(scene, 10.0, cfg).of_origin(TapOrigin.TARGET)[0]
    assert t10.delay > t0.delay
    blocked = Scene((0, 0, 10), (25, 0, 2), targets=(TargetTrack(wp, blocked=True),))
    assert not realize_channel(blocked, 0.0, cfg).of_origin(TapOrigin.TARGET)
    with pytest.raises(ValueError):
        realize_channel(scene, 11.0, cfg)


def test_realize_is_reproducible(cfg):
    wp = ((0.0, 30.0, 0.0, 1.5), (10.0, 110.0, 0.0, 1.5))
    scene = Scene((0, 0, 10), (25, 0, 2), targets=(TargetTrack(wp, seed=1),))
    a = realize_channel(scene, 2.5, cfg)
    b = realize_channel(scene, 2.5, cfg)
    assert [t.gain for t in a.taps] == [t.gain for t in b.taps]
    c = realize_channel(scene, 2.6, cfg).of_origin(TapOrigin.TARGET)[0]
    assert c.gain != a.of_origin(TapOrigin.TARGET)[0].gain


def test_channel_realization_rules():
    with pytest.raises(ValueError):
        PathTap(-1e-9, 1.0)
    los = PathTap(0.0, 1.0, origin=TapOrigin.LINE_OF_SIGHT)
    with pytest.raises(ValueError):
        ChannelRealization((los, los))
    ch = ChannelRealization((PathTap(5e-9, 0.5), los))
    assert [t.delay for t in ch.taps] == [0.0, 5e-9]


def test_identity_channel_is_exact(cfg, frame):
    ch = ChannelRealization((PathTap(0.0, 1.0),))
    out = apply_channel(frame.baseband, ch, FrontEndModel.ideal(cfg), cfg)
    assert np.array_equal(out.samples, frame.baseband.samples)


def test_integer_bin_delay_peaks_at_bin(cfg, frame):
    ch = ChannelRealization((PathTap(10 * cfg.tap_spacing, 0.3 * np.exp(1j)),))
    cir = correlate(apply_channel(frame.baseband, ch, FrontEndModel.ideal(cfg), cfg), frame, cfg)
    assert int(np.argmax(np.abs(cir.taps))) == 10
    assert abs(cir.taps[10]) == pytest.approx(0.3, abs=1e-6)


def test_noise_only_power(cfg):
    fe = FrontEndModel.ideal(cfg, noise_figure=1.5, noise_enabled=True)
    silent = ComplexBaseband(np.zeros(cfg.fft_size * 64, complex), cfg.sample_rate, 43.0)
    out = apply_channel(silent, ChannelRealization(()), fe, cfg, np.random.default_rng(3))
    expect = -174 + 10 * math.log10(401.16e6) + 1.5
    assert capture_power_dbm(out, cfg) == pytest.approx(expect, abs=0.1)


def test_apply_channel_rejects_bad_input(cfg, frame):
    ch = ChannelRealization(())
    with pytest.raises(ValueError):
        apply_channel(ComplexBaseband(frame.baseband.samples, 1e6), ch, FrontEndModel.ideal(cfg), cfg)
    with pytest.raises(ValueError):
        apply_channel(ComplexBaseband(frame.baseband.samples[:-1], cfg.sample_rate), ch,
                      FrontEndModel.ideal(cfg), cfg)
    with pytest.raises(ValueError):
        apply_channel(frame.baseband, ch, FrontEndModel.ideal(cfg, noise_enabled=True), cfg)


def test_ripple_response_shape():
    r = ripple_response(3343, seed=2, max_db=1.5)
    db = 20 * np.log10(np.abs(r))
    assert np.max(np.abs(db)) == pytest.approx(1.5, abs=1e-12)
    assert abs(db.mean()) < 1e-12
    assert np.array_equal(r, ripple_response(3343, seed=2, max_db=1.5))


def test_frontend_ripple_bound(cfg):
    ok = np.ones(cfg.zc_length, complex)
    with pytest.raises(ValueError):
        FrontEndModel(ok * 10 ** (4 / 20), ok)
    fe = FrontEndModel.seeded(cfg, 3, 1.5)
    assert not np.array_equal(fe.tx_ripple, fe.rx_ripple)


def test_scene_json_round_trip():
    scene = Scene(
        (0, 0, 10), (25, 0, 2), 10.0, 0.0,
        ({"delay_s": 1e-7, "gain_db": -90.0, "phase_rad": 0.1, "aoa": [30.0, 0.0], "aod": [0.0, 0.0]},),
        (TargetTrack(((0.0, 1.0, 2.0, 3.0), (1.0, 2.0, 2.0, 3.0)), "pedestrian", "monostatic", "frozen", 4),),
        ((0.0, 1.0, 0.0, 0.0), (2.0, 5.0, 0.0, 0.0)), False, 4.0, 9, "demo",
    )
    back = Scene.from_dict(scene.to_dict())
    assert back == scene and back.digest() == scene.digest()
    with pytest.raises(ValueError):
        Scene.from_dict({**scene.to_dict(), "extra": 1})
    bad = scene.to_dict()
    bad["targets"][0]["coherence"] = "sometimes"
    with pytest.raises(ValueError):
        Scene.from_dict(bad)


def test_shadowing_is_location_keyed():
    s = Scene(shadowing_sigma_db=4.0, shadowing_seed=11)
    p = np.array([10.0, 0.0, 10.0])
    assert s.shadowing_db(p) == s.shadowing_db(p.copy())
    assert s.shadowing_db(p) != s.shadowing_db(p + [1.0, 0, 0])
    assert Scene().shadowing_db(p) == 0.0
