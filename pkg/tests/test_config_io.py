import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nervemag import dsp, io
from nervemag.config import ConfigError, ExperimentConfig, dump_config, load_config
from nervemag.fields import FieldWaveform
from nervemag.spin import DetectionRecord

finite = st.floats(-1e30, 1e30, allow_nan=False, allow_infinity=False)


def test_config_defaults_and_validation():
    cfg = ExperimentConfig()
    assert cfg.run.mode == "pulsed" and cfg.n_cal == cfg.run.n_avg
    assert cfg.psd_window == 8e-3
    assert cfg.with_run(mode="continuous").psd_window == pytest.approx(37.1e-3)
    for bad in (dict(mode="x"), dict(scenario="x"), dict(n_avg=0)):
        with pytest.raises(ConfigError):
            cfg.with_run(**bad)
    with pytest.raises(ConfigError):
        cfg.with_section("waveform", nerve_axis="x")


def test_config_round_trip(tmp_path):
    cfg = (ExperimentConfig().with_run(mode="continuous", seed=42, n_avg=17)
           .with_section("analysis", limit_temperatures_celsius=(20.0, 30.0, 40.0))
           .with_section("magnetometer", misalignment_re=0.1))
    path = tmp_path / "c.ini"
    dump_config(cfg, path)
    assert load_config(path) == cfg


def test_config_errors(tmp_path):
    p = tmp_path / "c.ini"
    for text in ("[nope]\na = 1\n", "[run]\nseeed = 1\n", "[run]\nseed = abc\n", "garbage"):
        p.write_text(text)
        with pytest.raises(ConfigError):
            load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")


def test_config_ensemble_build():
    ens = ExperimentConfig().ensemble.build()
    assert ens.density == pytest.approx(3.6e16)
    hot = ExperimentConfig().with_section("ensemble", temperature_celsius=37.0).ensemble.build()
    assert hot.density / ens.density == pytest.approx(4.0, rel=0.05)


@given(st.lists(finite, min_size=1, max_size=40), st.sampled_from(DetectionRecord.SEQUENCES))
def test_record_csv_round_trip(tmp_path_factory, values, seq):
    path = tmp_path_factory.mktemp("r") / "rec.csv"
    rec = DetectionRecord(values, 1e-5, seq, 0.0123, {"n_avg": 3, "note": "x"})
    io.write_record_csv(path, rec, {"config": {"a": 1.5}})
    back = io.read_record_csv(path)
    assert np.array_equal(back.samples, rec.samples)
    assert back.dt == rec.dt and back.start_time == rec.start_time and back.sequence == seq
    assert back.metadata["n_avg"] == 3 and back.metadata["config"] == {"a": 1.5}


@given(st.lists(finite, min_size=2, max_size=40))
def test_waveform_csv_round_trip(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("w") / "w.csv"
    w = FieldWaveform(values, 1e-5, 0.0, "y")
    io.write_waveform_csv(path, w)
    assert path.read_text().splitlines()[0] == "time_s,field_T"
    back = io.read_waveform_csv(path, axis="y")
    assert np.array_equal(back.samples, w.samples)
    assert back.dt == pytest.approx(w.dt, rel=1e-12)
    assert np.allclose(back.times, w.times, rtol=0, atol=1e-15)


def test_spectrum_csv_round_trip(tmp_path):
    x = np.random.default_rng(0).standard_normal((3, 101))
    spec = dsp.psd(x, 1e-5, pad=2)
    io.write_spectrum_csv(tmp_path / "s.csv", spec)
    back = io.read_spectrum_csv(tmp_path / "s.csv")
    assert np.array_equal(back.psd_values, spec.psd_values)
    assert np.array_equal(back.frequencies, spec.frequencies)
    assert back.nfft == spec.nfft and back.n_records == 3
    assert np.array_equal(back.one_sided(), spec.one_sided())


def test_kv_round_trip(tmp_path):
    items = {"a": 1.0 / 3.0, "b": 7, "c": "text", "d": [1, 2.5], "e": float("nan"),
             "f": -math.inf, "g": {"x": 1}}
    io.write_kv(tmp_path / "k.txt", items)
    back = io.read_kv(tmp_path / "k.txt")
    assert back["a"] == items["a"] and back["b"] == 7 and back["c"] == "text"
    assert back["d"] == [1, 2.5] and math.isnan(back["e"]) and back["f"] == -math.inf
    assert back["g"] == {"x": 1}


def test_io_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(io.FormatError):
        io.read_record_csv(p)
    p.write_text("time_s,signal\n1,x\n")
    with pytest.raises(io.FormatError):
        io.read_record_csv(p)
    p.write_text("# only = 1\n")
    with pytest.raises(io.FormatError):
        io.read_spectrum_csv(p)
    p.write_text("no equals sign\n")
    with pytest.raises(io.FormatError):
        io.read_kv(p)
    with pytest.raises(OSError):
        io.read_record_csv(tmp_path / "missing.csv")
