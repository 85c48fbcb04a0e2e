import json
import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fr3sounder.core import (
    BandPlan, ConfigError, Dbi, Decibel, DbMilliwatt, SounderConfig, config_violations, db_to_linear,
    default_config, linear_to_db, load_config, save_config, thermal_noise_dbm, validate_config, wavelength_m,
)


def test_db_to_linear_examples():
    assert db_to_linear(0) == 1.0
    assert db_to_linear(10) == pytest.approx(10.0, rel=1e-15)
    assert db_to_linear(41) == pytest.approx(12589.254117941673, rel=1e-6)


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_db_to_linear_rejects_non_finite(bad):
    with pytest.raises(ValueError):
        db_to_linear(bad)


@given(st.floats(-200, 200))
def test_db_linear_round_trip(x):
    assert linear_to_db(db_to_linear(x)) == pytest.approx(x, abs=1e-9)


def test_wavelength_examples():
    assert wavelength_m(7.0) == pytest.approx(0.0428275, abs=5e-8)
    assert wavelength_m(14.5) == pytest.approx(2.99792458e8 / 14.5e9, rel=1e-15)
    assert wavelength_m(14.5) == pytest.approx(0.0206754, abs=1e-7)
    assert wavelength_m(0.299792458) == pytest.approx(1.0, rel=1e-15)


@pytest.mark.parametrize("f", [0.0, -1.0])
def test_wavelength_rejects_non_positive(f):
    with pytest.raises(ValueError):
        wavelength_m(f)


def test_unit_tags():
    p = DbMilliwatt(10.0) + Decibel(3.0)
    assert isinstance(p, DbMilliwatt) and float(p) == 13.0
    assert isinstance(DbMilliwatt(10.0) + Dbi(5.0), DbMilliwatt)
    diff = DbMilliwatt(10.0) - DbMilliwatt(4.0)
    assert isinstance(diff, Decibel) and float(diff) == 6.0
    with pytest.raises(TypeError):
        DbMilliwatt(1.0) + DbMilliwatt(2.0)
    with pytest.raises(ValueError):
        Decibel(math.nan)


def test_thermal_noise_401mhz():
    assert thermal_noise_dbm(401.16e6) == pytest.approx(-87.967, abs=1e-3)


@pytest.mark.parametrize(
    "f,beams,elements", [(7.0, 0, 0), (8.3, 15, 32), (11.3, 15, 32), (14.5, 20, 64)]
)
def test_band_plan_table(f, beams, elements):
    b = BandPlan.for_frequency(f)
    assert (b.beams_per_array, b.elements_per_array) == (beams, elements)
    assert b.has_array == (beams > 0)


def test_unsupported_band_rejected():
    with pytest.raises(ConfigError):
        BandPlan.for_frequency(28.0)


def test_default_config_valid(cfg):
    assert validate_config(cfg) is cfg
    assert cfg.occupied_bandwidth == pytest.approx(401.16e6)
    assert cfg.sample_rate == pytest.approx(491.52e6)
    assert cfg.zc_period == pytest.approx(8.3333e-6, rel=1e-4)
    assert cfg.zc_period >= cfg.max_excess_delay
    assert cfg.tap_spacing == pytest.approx(2.4928e-9, rel=1e-4)
    assert cfg.frame_duration == pytest.approx(33.333e-6, rel=1e-4)
    assert cfg.processing_gain_db == pytest.approx(41.26, abs=0.005)


def test_zc_length_mismatch_reported(cfg):
    v = config_violations(cfg.replace(zc_length=100))
    assert any("zc_length × scs mismatch" in m for m in v)
    with pytest.raises(ConfigError) as err:
        validate_config(cfg.replace(zc_length=100))
    assert err.value.violations == v


def test_fft_size_violations_listed_together(cfg):
    v = config_violations(cfg.replace(fft_size=3000))
    assert any("not a power of two" in m for m in v)
    assert any("< zc_length" in m for m in v)


def test_eirp_and_excess_delay_limits(cfg):
    v = config_violations(cfg.replace(tx_eirp=44.0, max_excess_delay=9e-6))
    assert any(m.startswith("tx_eirp") for m in v)
    assert any(m.startswith("max_excess_delay") for m in v)


def test_config_json_round_trip(tmp_path, cfg):
    p = tmp_path / "c.json"
    save_config(default_config(8.3), p)
    back = load_config(p)
    assert back == default_config(8.3)
    assert json.loads(p.read_text())["center_frequency"] == 8.3e9


def test_config_unknown_key_rejected(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"zc_length": 3343, "colour": "blue"}))
    with pytest.raises(ConfigError) as err:
        load_config(p)
    assert "colour" in err.value.violations[0]


def test_config_is_immutable(cfg):
    with pytest.raises(Exception):
        cfg.zc_length = 5
    assert isinstance(cfg.replace(center_frequency=7.0), SounderConfig)
    assert cfg.replace(center_frequency=7.0).center_frequency == 7.0
