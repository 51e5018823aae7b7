import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nervemag import dsp, fields, physics, spin
from nervemag.fields import FieldWaveform
from nervemag.spin import SpinState
from oracles import bloch_rk4, one_period_fourier

ENS = physics.AtomEnsemble()
JX = ENS.total_spin
DT = 10e-6


def test_free_decay():
    cfg = physics.pulsed_config()
    j0 = 1e-3 * JX
    traj = spin.evolve_mean(cfg, ENS, FieldWaveform.zeros(1000, DT), SpinState(j0, 0.5 * j0, JX))
    expect = abs(complex(j0, 0.5 * j0)) * np.exp(-cfg.relaxation_rate * traj.times)
    assert np.allclose(traj.transverse, expect, rtol=1e-3)
    assert np.all(np.diff(traj.transverse) <= 0)


def test_zero_field_zero_state():
    traj = spin.evolve_mean(physics.pulsed_config(), ENS, FieldWaveform.zeros(100, DT))
    assert not traj.z.any()
    assert traj.times.shape == (101,)


def test_pulse_response_theorem():
    # the theorem neglects relaxation during the pulse
    cfg = physics.MagnetometerConfig.from_larmor_hz(700.0, t2=1e6)
    w = fields.calibration_waveform(1e-12, 700.0, DT)
    traj = spin.evolve_mean(cfg, ENS, w)
    expect = cfg.gamma * JX * one_period_fourier(1e-12, cfg.larmor_omega)
    assert traj.transverse[-1] == pytest.approx(expect, rel=5e-3)


@pytest.mark.parametrize("make", [
    lambda c: fields.calibration_waveform(1e-12, c.larmor_hz, DT, onset=1e-3, duration=10e-3),
    lambda c: fields.nerve_waveform(dt=DT, duration=10e-3, axis="y"),
    lambda c: FieldWaveform(np.convolve(np.random.default_rng(4).standard_normal(1000),
                                        np.ones(25) / 25, "same") * 2e-12, DT, axis="y"),
])
@pytest.mark.parametrize("cfg", [physics.pulsed_config(), physics.continuous_config()])
def test_lab_frame_oracle(make, cfg):
    w = make(cfg)
    by, bz = w.components()
    lab = bloch_rk4(JX, cfg.gamma, cfg.bias_field, cfg.relaxation_rate, by, bz, DT, substeps=4)
    traj = spin.evolve_mean(cfg, ENS, w)
    for ours, ref in ((traj.lab_jy(), lab[:, 1]), (traj.lab_jz(), lab[:, 2])):
        assert np.max(np.abs(ours - ref)) <= 1e-3 * np.max(np.abs(ref))


@given(st.floats(-10.0, 10.0, allow_nan=False))
def test_mean_linear_in_field(a):
    cfg = physics.continuous_config()
    w = fields.nerve_waveform(dt=DT, duration=5e-3)
    z1 = spin.evolve_mean(cfg, ENS, w.scaled(a)).z
    z2 = spin.evolve_mean(cfg, ENS, w).z
    assert np.allclose(z1, a * z2, rtol=1e-12, atol=1e-12 * np.abs(z2).max())


def test_large_tilt_warns():
    cfg = physics.pulsed_config()
    w = fields.calibration_waveform(1e-6, 700.0, DT)
    with pytest.warns(spin.SpinWarning):
        spin.evolve_mean(cfg, ENS, w)


def test_stochastic_requires_seed_and_is_reproducible():
    cfg = physics.continuous_config()
    w = FieldWaveform.zeros(200, DT)
    with pytest.raises(ValueError):
        spin.evolve_stochastic(cfg, ENS, w, None)
    a = spin.evolve_stochastic(cfg, ENS, w, 11, n_shots=3).z
    b = spin.evolve_stochastic(cfg, ENS, w, 11, n_shots=3).z
    c = spin.evolve_stochastic(cfg, ENS, w, 12, n_shots=3).z
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_stochastic_stationary_variance():
    cfg = physics.continuous_config()
    n = int(2000 * cfg.t2 / DT)
    traj = spin.evolve_stochastic(cfg, ENS, FieldWaveform.zeros(n, DT), 5)
    assert np.var(traj.jy_rot) == pytest.approx(JX / 2, rel=0.08)
    assert np.var(traj.jz_rot) == pytest.approx(JX / 2, rel=0.08)


def test_stochastic_mean_matches_deterministic():
    cfg = physics.continuous_config()
    w = fields.calibration_waveform(2e-12, 410.0, DT, onset=0.5e-3, duration=4e-3)
    n_shots = 10_000
    traj = spin.evolve_stochastic(cfg, ENS, w, 3, n_shots=n_shots)
    mean = spin.evolve_mean(cfg, ENS, w).z
    se = math.sqrt(JX / 2 / n_shots)
    dev = np.abs(traj.z.mean(axis=0) - mean)
    assert np.max(dev.real / se) < 4.5 and np.max(dev.imag / se) < 4.5
    assert np.mean(dev.real / se < 3) > 0.99


def test_readout_noise():
    assert not spin.readout_noise(100, DT, 0.0, 1).any()
    with pytest.raises(ValueError):
        spin.readout_noise(10, DT, -1.0, 1)
    x = spin.readout_noise(1_000_000, DT, 2.0, 7)
    assert np.var(x) == pytest.approx(2.0 / (2 * DT), rel=0.01)
    interior = dsp.psd(x.reshape(1000, 1000), DT).one_sided()[1:-1]
    assert np.mean(interior) == pytest.approx(2.0, rel=0.05)
    # flat: low and high halves agree
    half = interior.size // 2
    assert np.mean(interior[:half]) == pytest.approx(np.mean(interior[half:]), rel=0.05)


def test_flicker_noise_spectrum():
    x = spin.flicker_noise(2000, DT, 1.0, 2, shape=(400,))
    spec = dsp.psd(x, DT)
    f = spec.frequencies
    sel = (f > 200) & (f < 20_000)
    ratio = spec.one_sided()[sel] * f[sel]
    assert np.mean(ratio) == pytest.approx(1.0, rel=0.1)
    assert not spin.flicker_noise(10, DT, 0.0).any()


def test_pulsed_sequence_noiseless():
    cfg = physics.pulsed_config()
    w = fields.calibration_waveform(1e-9, 700.0, DT)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", spin.SpinWarning)
        a, b = spin.pulsed_sequence(cfg, ENS, w, 10e-3)
    assert a.sequence == "pulsed_A" and b.sequence == "pulsed_B"
    assert not b.samples.any()
    s = a - b
    assert s.sequence == "pulsed_diff"
    assert s.start_time == pytest.approx(w.duration)
    fit = dsp.fit_fid(s)
    # spin at the end of the pulse, including relaxation while the field is on
    weight = np.exp(-cfg.relaxation_rate * (w.duration - w.times))
    b_eff = abs(np.sum(w.samples * weight * np.exp(-1j * cfg.larmor_omega * w.times)) * DT)
    expect = cfg.readout_coupling * cfg.gamma * JX * b_eff
    assert fit.amplitude == pytest.approx(expect, rel=1e-3)
    b_cal = abs(fields.fourier_component(w, cfg.larmor_omega))
    assert b_eff == pytest.approx(b_cal, rel=0.06)
    assert fit.decay_rate == pytest.approx(1 / 15e-3, rel=1e-3)
    assert fit.omega == pytest.approx(2 * math.pi * 700, rel=1e-3)


def test_pulsed_zero_and_misalignment_cancel():
    cfg = physics.pulsed_config()
    w = FieldWaveform.zeros(143, DT)
    a, b = spin.pulsed_sequence(cfg, ENS, w, 10e-3)
    assert not a.samples.any() and not b.samples.any()
    cfg = cfg.replace(misalignment=0.002 - 0.001j)
    a, b = spin.pulsed_sequence(cfg, ENS, w, 10e-3)
    assert np.abs(a.samples).max() > 0
    assert np.array_equal((a - b).samples, np.zeros(a.n_samples))


def test_pulsed_validation():
    cfg = physics.pulsed_config()
    with pytest.raises(ValueError):
        spin.pulsed_sequence(cfg, ENS, FieldWaveform.zeros(10, DT), 0.0)
    with pytest.warns(spin.SpinWarning):
        spin.pulsed_sequence(cfg, ENS, FieldWaveform.zeros(400, DT), 1e-3)


def test_continuous_impulse_response():
    cfg = physics.continuous_config()
    w = FieldWaveform(np.r_[1e-9, np.zeros(999)], DT)
    rec = spin.continuous_record(cfg, ENS, w)
    t = rec.times[1:] - 0.5 * DT
    expect = np.exp(-cfg.relaxation_rate * t) * np.sin(cfg.larmor_omega * t)
    scale = cfg.readout_coupling * cfg.gamma * JX * 1e-9 * DT
    assert np.max(np.abs(rec.samples[1:] / scale - expect)) < 5e-3
    assert not spin.continuous_record(cfg, ENS, FieldWaveform.zeros(100, DT)).samples.any()


def test_continuous_matches_kernel_convolution():
    cfg = physics.continuous_config()
    w = fields.calibration_waveform(1e-12, 410.0, DT, onset=5e-3, duration=40e-3)
    rec = spin.continuous_record(cfg, ENS, w)
    h = spin.response_kernel(cfg.larmor_omega, cfg.relaxation_rate, len(w), DT)
    model = np.convolve(w.samples, h)[: len(w)] * DT
    model *= cfg.readout_coupling * cfg.gamma * JX
    assert np.max(np.abs(rec.samples - model)) < 1e-3 * np.max(np.abs(model))


def test_detection_record():
    r = spin.DetectionRecord(np.ones((3, 5)), DT, "continuous", metadata={"n_avg": 2})
    assert r.n_shots == 3 and r.n_samples == 5
    assert r.mean().metadata["n_avg"] == 6
    assert r.window(3 * DT).n_samples == 3
    with pytest.raises(ValueError):
        r.window(10 * DT)
    with pytest.raises(ValueError):
        spin.DetectionRecord([np.inf], DT, "continuous")
    with pytest.raises(ValueError):
        spin.DetectionRecord([1.0], DT, "other")
    with pytest.raises(ValueError):
        r - spin.DetectionRecord(np.ones(5), DT, "continuous")


def test_shot_batches_stable():
    a = [(n, s.spawn_key) for n, s in spin.shot_batches(9, 600)]
    assert [n for n, _ in a] == [256, 256, 88]
    b = [(n, s.spawn_key) for n, s in spin.shot_batches(9, 300)]
    assert a[0] == b[0]
