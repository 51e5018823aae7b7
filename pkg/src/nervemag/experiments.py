"""Scenario runners: simulate, calibrate and analyse pulsed or continuous runs.

Shots are simulated in fixed-size batches whose random streams depend only
on the run seed and the batch index, and batch sums are reduced in index
order, so a run is reproducible bit for bit from its configuration.
"""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import linalg

from . import dsp, io, metrology, physics
from .config import ConfigError, ExperimentConfig, dump_config
from .fields import (FieldWaveform, calibration_waveform, fourier_component, nerve_waveform,
                     scale_to_fourier)
from .spin import (DetectionRecord, child_seed, continuous_record, pulsed_sequence,
                   response_kernel, shot_batches)

PULSED_NOISE_TOTAL = 5.7e-15  # T s, single-shot uncertainty of |B(Omega)|
CONTINUOUS_NOISE_TOTAL = 360e-15  # T/sqrt(Hz), single-shot sensitivity


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class Quantity:
    value: float
    unit: str
    op: str
    display_scale: float = 1.0
    display_unit: str = ""

    @property
    def display(self):
        if not self.display_unit:
            return f"{self.value:.6g} {self.unit}".strip()
        return f"{self.value * self.display_scale:.4g} {self.display_unit}"


@dataclass
class RunReport:
    mode: str
    scenario: str
    quantities: dict = field(default_factory=dict)
    files: list = field(default_factory=list)
    wall_time: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def add(self, name, value, unit, op, scale=1.0, display_unit=""):
        self.quantities[name] = Quantity(float(value), unit, op, scale, display_unit)

    def __getitem__(self, name):
        return self.quantities[name].value

    def as_kv(self):
        out = {"mode": self.mode, "scenario": self.scenario}
        for name, q in self.quantities.items():
            out[name] = q.value
            out[f"{name}.unit"] = q.unit
            out[f"{name}.op"] = q.op
            if q.display_unit:
                out[f"{name}.display"] = q.display
        for k, v in self.diagnostics.items():
            out[f"diag.{k}"] = v
        return out

    def summary(self):
        width = max((len(n) for n in self.quantities), default=0)
        lines = [f"{self.mode} / {self.scenario}"]
        lines += [f"  {n:<{width}}  {q.display}" for n, q in self.quantities.items()]
        lines.append(f"  wall time {self.wall_time:.2f} s")
        return "\n".join(lines)


def windowed_psd_from_acov(acov, dt, nw, freq):
    """Expected periodogram at ``freq`` of ``nw`` samples of a stationary series.

    ``acov[m]`` is the autocovariance at lag ``m`` (at least ``nw`` lags).
    """
    m = np.arange(nw)
    w = (nw - m) * acov[:nw] * np.cos(2 * math.pi * freq * m * dt)
    return float(dt / nw * (2.0 * np.sum(w) - w[0]))


def spin_acov(jx, gamma, omega, n, dt):
    """Autocovariance of the stationary lab-frame J_z projection noise."""
    tau = np.arange(n) * dt
    return 0.5 * jx * np.exp(-gamma * tau) * np.cos(omega * tau)


def flicker_acov(psd_1hz, n, dt):
    """Circular autocovariance of ``spin.flicker_noise`` over ``n`` samples."""
    freqs = np.fft.rfftfreq(n, dt)
    power = np.zeros_like(freqs)
    power[1:] = psd_1hz / freqs[1:] / (2.0 * dt)
    return np.fft.irfft(power, n=n)


def _solve_budget(target_psd, pn_psd, shot_unit, flicker_unit, shot_fraction, what):
    shot_psd = shot_fraction * target_psd / shot_unit
    rest = target_psd * (1.0 - shot_fraction) - pn_psd
    if rest < 0:
        raise ConfigError(f"{what}: projection and shot noise already exceed the requested total")
    return shot_psd, rest / flicker_unit


def pulsed_noise_levels(mag, ensemble, dt=10e-6, probe_duration=10e-3, window=8e-3,
                        noise_total=PULSED_NOISE_TOTAL, shot_fraction=0.5, cal_amplitude=1e-9,
                        cal_freq=None):
    """(shot_psd, flicker_psd_1hz) giving the requested single-shot |B(Omega)| floor.

    The floor is the calibrated sqrt(PSD) at the Larmor frequency of one
    noise-only A-B record; shot noise takes ``shot_fraction`` of its
    variance, projection noise follows from the ensemble, 1/f noise fills
    the rest.
    """
    quiet = mag.noiseless()
    f0 = mag.larmor_hz
    cal = calibration_waveform(cal_amplitude, cal_freq or f0, dt)
    a, b = pulsed_sequence(quiet, ensemble, cal, probe_duration)
    cal_psd = dsp.psd_at((a - b).window(window), f0)
    kappa = abs(fourier_component(cal, mag.larmor_omega)) / math.sqrt(cal_psd)
    nw = int(round(window / dt))
    n_probe = int(round(probe_duration / dt))
    gain2 = mag.detector_gain**2
    coupling2 = mag.readout_coupling**2
    pn = 2 * gain2 * coupling2 * windowed_psd_from_acov(
        spin_acov(ensemble.total_spin, mag.relaxation_rate, mag.larmor_omega, nw, dt), dt, nw, f0)
    flicker_unit = 2 * gain2 * windowed_psd_from_acov(flicker_acov(1.0, n_probe, dt), dt, nw, f0)
    target = (noise_total / kappa) ** 2
    return _solve_budget(target, pn, gain2, flicker_unit, shot_fraction, "pulsed budget")


def continuous_noise_levels(mag, ensemble, dt=10e-6, record_duration=40e-3, window=37.1e-3,
                            noise_total=CONTINUOUS_NOISE_TOTAL, shot_fraction=0.5,
                            regularization=dsp.DEFAULT_REGULARIZATION, cutoff=dsp.DEFAULT_CUTOFF,
                            cal_amplitude=1e-9, cal_onset=5e-3, band=30.0):
    """(shot_psd, flicker_psd_1hz) giving the requested single-shot sensitivity.

    Sensitivity is sqrt(PSD), averaged over ``band`` Hz about the Larmor
    frequency, of the calibrated, deconvolved noise-only record. The
    expectation is exact for the linear deconvolution map, so 1/f power
    leaking in from low frequencies is accounted for.
    """
    quiet = mag.noiseless()
    f0 = mag.larmor_hz
    n = int(round(record_duration / dt))
    cal = calibration_waveform(cal_amplitude, f0, dt, onset=cal_onset, duration=record_duration)
    rec = continuous_record(quiet, ensemble, cal)
    dec = dsp.deconvolve(rec, mag.larmor_omega, mag.relaxation_rate, regularization, cutoff)
    factor = dsp.calibrate_continuous(dec, cal, cutoff).factor

    nw = int(round(window / dt))
    freqs = np.fft.rfftfreq(nw, dt)
    sel = np.abs(freqs - f0) <= band
    freqs = freqs[sel] if np.any(sel) else freqs[[np.argmin(np.abs(freqs - f0))]]
    m, filt = dsp.deconvolution_filter(n, dt, mag.larmor_omega, mag.relaxation_rate,
                                       regularization, cutoff)
    probes = _adjoint_probes(m, filt, n, nw, dt, freqs)
    gain2 = mag.detector_gain**2 * factor**2

    def expected(acov):
        return gain2 * _quadratic_mean(acov, probes, nw * dt)

    pn = mag.readout_coupling**2 * expected(
        spin_acov(ensemble.total_spin, mag.relaxation_rate, mag.larmor_omega, n, dt))
    white = np.zeros(n)
    white[0] = 1.0 / (2.0 * dt)
    return _solve_budget(noise_total**2, pn, expected(white), expected(flicker_acov(1.0, n, dt)),
                         shot_fraction, "continuous budget")


def _adjoint_probes(m, filt, n, nw, dt, freqs):
    """Rows v with E|sum_t u_t (L y)_t|^2 = v^H C v for the deconvolution map L.

    ``u`` is the windowed Fourier vector at each frequency; L is circular
    filtering of the zero-padded record followed by cropping.
    """
    t = np.arange(nw) * dt
    u = np.zeros((len(freqs), m), dtype=complex)
    u[:, :nw] = np.exp(-2j * math.pi * np.outer(freqs, t)) * dt
    back = np.conj(filt)
    return (np.fft.irfft(np.fft.rfft(u.real, axis=-1) * back, n=m, axis=-1)[:, :n]
            + 1j * np.fft.irfft(np.fft.rfft(u.imag, axis=-1) * back, n=m, axis=-1)[:, :n])


def _quadratic_mean(acov, probes, duration):
    """Mean over probes of v^H C v / T for the symmetric Toeplitz covariance C."""
    cv = linalg.matmul_toeplitz(acov, probes.T)
    return float(np.mean(np.real(np.sum(np.conj(probes.T) * cv, axis=0)))) / duration


@functools.lru_cache(maxsize=32)
def _cached_levels(mode, mag, ensemble, dt, duration, window, total, frac, reg, cutoff, cal_amp,
                   cal_onset, band):
    if mode == "pulsed":
        return pulsed_noise_levels(mag, ensemble, dt, duration, window, total, frac, cal_amp)
    return continuous_noise_levels(mag, ensemble, dt, duration, window, total, frac, reg, cutoff,
                                   cal_amp, cal_onset, band)


def build_magnetometer(config, ensemble):
    """Magnetometer operating point with noise levels from the file or the budget."""
    ms = config.magnetometer
    pulsed = config.run.mode == "pulsed"
    larmor = ms.larmor_hz or (700.0 if pulsed else 410.0)
    t2 = ms.t2_s or (physics.T2_DARK if pulsed else physics.T2_CONTINUOUS)
    mag = physics.MagnetometerConfig.from_larmor_hz(
        larmor, t2, readout_coupling=ms.readout_coupling_per_s, detector_gain=ms.detector_gain,
        misalignment=complex(ms.misalignment_re, ms.misalignment_im))
    shot, flicker = ms.shot_psd, ms.flicker_psd_1hz
    if shot < 0 or flicker < 0:
        total = ms.noise_total or (PULSED_NOISE_TOTAL if pulsed else CONTINUOUS_NOISE_TOTAL)
        duration = config.analysis.probe_duration_s if pulsed else config.analysis.record_duration_s
        b_shot, b_flicker = _cached_levels(
            config.run.mode, mag, ensemble, config.waveform.dt_s, duration, config.psd_window,
            total, ms.shot_variance_fraction, config.analysis.regularization,
            config.analysis.cutoff_hz, config.waveform.cal_amplitude_tesla,
            config.waveform.cal_onset_s, config.analysis.floor_band_hz)
        shot = b_shot if shot < 0 else shot
        flicker = b_flicker if flicker < 0 else flicker
    return mag.replace(shot_psd=shot, flicker_psd_1hz=flicker)


def average_pulsed(mag, ensemble, waveform, probe_duration, seed, n_shots):
    """Mean A-B record over ``n_shots`` shot pairs."""
    total = None
    for count, batch_seed in shot_batches(seed, n_shots):
        a, b = pulsed_sequence(mag, ensemble, waveform, probe_duration, batch_seed, count)
        part = (a.samples - b.samples).sum(axis=0)
        total = part if total is None else total + part
        meta = a.metadata
    return DetectionRecord(total / n_shots, waveform.dt, "pulsed_diff",
                           waveform.start_time + waveform.duration,
                           dict(meta, n_avg=n_shots, seed=_seed_meta(seed)))


def average_continuous(mag, ensemble, waveform, seed, n_shots):
    """Mean continuous-mode record over ``n_shots`` shots."""
    total = None
    for count, batch_seed in shot_batches(seed, n_shots):
        rec = continuous_record(mag, ensemble, waveform, batch_seed, count)
        part = rec.samples.sum(axis=0)
        total = part if total is None else total + part
        meta = rec.metadata
    return DetectionRecord(total / n_shots, waveform.dt, "continuous", waveform.start_time,
                           dict(meta, n_avg=n_shots, seed=_seed_meta(seed)))


def _seed_meta(seed):
    return {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}


def _common_quantities(report, ensemble, mag):
    jx = ensemble.total_spin
    report.add("total_spin", jx, "1", "physics.ensemble_spin")
    report.add("larmor_frequency", mag.larmor_hz, "Hz", "physics.larmor_frequency")
    report.add("relaxation_rate", mag.relaxation_rate, "1/s", "config")
    report.add("shot_psd", mag.shot_psd, "unit^2/Hz", "experiments.build_magnetometer")
    report.add("flicker_psd_1hz", mag.flicker_psd_1hz, "unit^2/Hz", "experiments.build_magnetometer")


@dataclass(frozen=True)
class CalibrationRun:
    waveform: FieldWaveform
    record: DetectionRecord
    fit: object
    scale: dsp.CalibrationScale


def calibrate_pulsed_run(config, mag, ensemble, root):
    """Average the calibration FID, fit it and derive the counts-to-T*s scale."""
    ws = config.waveform
    window = config.psd_window
    f_cal = ws.cal_freq_hz or mag.larmor_hz
    cal_w = calibration_waveform(ws.cal_amplitude_tesla, f_cal, ws.dt_s)
    cal_fourier = abs(fourier_component(cal_w, 2 * math.pi * f_cal))
    rec = average_pulsed(mag, ensemble, cal_w, config.analysis.probe_duration_s,
                         child_seed(root, 0), config.n_cal)
    fit = dsp.fit_fid(rec.window(window))
    if not fit:
        raise ExperimentError(f"calibration FID fit failed: {fit.message}")
    scale = dsp.calibrate_pulsed(rec, cal_fourier, omega=fit.omega, window=window)
    return CalibrationRun(cal_w, rec, fit, scale)


def calibrate_continuous_run(config, mag, ensemble, root):
    """Fit the convolution model to the calibration record and scale the deconvolution."""
    ws, an = config.waveform, config.analysis
    f_cal = ws.cal_freq_hz or mag.larmor_hz
    cal_w = calibration_waveform(ws.cal_amplitude_tesla, f_cal, ws.dt_s, onset=ws.cal_onset_s,
                                 duration=an.record_duration_s)
    rec = average_continuous(mag, ensemble, cal_w, child_seed(root, 0), config.n_cal)
    fit = dsp.fit_convolution(rec, cal_w, mag.larmor_omega, mag.relaxation_rate)
    if not fit:
        raise ExperimentError(f"calibration convolution fit failed: {fit.message}")
    dec = dsp.deconvolve(rec, fit.omega, fit.decay_rate, an.regularization, an.cutoff_hz)
    scale = dsp.calibrate_continuous(dec, cal_w, an.cutoff_hz, fit.omega, fit.decay_rate)
    return CalibrationRun(cal_w, rec, fit, scale)


def run_calibration(config, out_dir=None):
    """Calibration step alone; writes the averaged record and the scale file."""
    t_start = time.perf_counter()
    ensemble = config.ensemble.build()
    if not ensemble.total_spin > 0:
        raise ConfigError("ensemble has no spin polarization")
    mag = build_magnetometer(config, ensemble)
    root = np.random.SeedSequence(config.run.seed)
    if config.run.mode == "pulsed":
        cal = calibrate_pulsed_run(config, mag, ensemble, root)
        op = "dsp.calibrate_pulsed"
    else:
        cal = calibrate_continuous_run(config, mag, ensemble, root)
        op = "dsp.calibrate_continuous"
    report = RunReport(config.run.mode, "calibration")
    _common_quantities(report, ensemble, mag)
    report.add("n_cal", config.n_cal, "1", "config")
    report.add("fit_larmor_frequency", cal.scale.omega / (2 * math.pi), "Hz", op)
    report.add("fit_decay_rate", cal.scale.decay_rate, "1/s", op)
    unit = "T s/sqrt(unit^2 s)" if config.run.mode == "pulsed" else "T/unit"
    report.add("calibration_scale", cal.scale.factor, unit, op)
    out = Path(out_dir or config.run.out_dir) if out_dir is not False else None
    if out is not None:
        stem = config.run.mode
        header = {"config": _portable(config).as_dict()}
        report.files += [
            str(io.write_record_csv(out / f"{stem}_calibration_record.csv", cal.record, header)),
            str(io.write_kv(out / f"{stem}_calibration.txt", cal.scale.as_dict())),
        ]
        _write_report(out, config, report, f"{stem}_calibrate")
    report.wall_time = time.perf_counter() - t_start
    return report


def load_calibration(path):
    """``CalibrationScale`` from a key-value file written by a run."""
    kv = io.read_kv(path)
    source = {k[len("source_"):]: kv.pop(k) for k in list(kv) if k.startswith("source_")}
    try:
        return dsp.CalibrationScale(**kv, source=source)
    except (TypeError, ValueError) as exc:
        raise io.FormatError(f"{path}: not a calibration file ({exc})") from exc


def analyze_record(record, scale, config=None, axis="z"):
    """Offline analysis of a stored record with a stored calibration.

    Pulsed records give the calibrated |B(Omega)| and the FID fit;
    continuous records are deconvolved with the calibration's Omega and
    Gamma and returned as a field waveform in ``report.diagnostics``.
    """
    config = config or ExperimentConfig()
    an = config.analysis
    t_start = time.perf_counter()
    if scale.mode == "pulsed":
        if record.sequence == "continuous":
            raise dsp.CalibrationError("pulsed calibration applied to a continuous record")
        report = RunReport("pulsed", "analyze")
        fit = dsp.fit_fid(record.window(min(scale.window, record.duration)))
        report.add("fourier_component", dsp.pulsed_fourier(record, scale), "T s",
                   "dsp.pulsed_fourier", 1e15, "pT ms")
        if fit:
            report.add("fit_larmor_frequency", fit.omega / (2 * math.pi), "Hz", "dsp.fit_fid")
            report.add("fit_decay_rate", fit.decay_rate, "1/s", "dsp.fit_fid")
            report.add("fit_amplitude", fit.amplitude, "unit", "dsp.fit_fid")
        report.diagnostics["fit_message"] = fit.message
    else:
        if record.sequence != "continuous":
            raise dsp.CalibrationError("continuous calibration applied to a pulsed record")
        report = RunReport("continuous", "analyze")
        field = dsp.deconvolve(record, scale.omega, scale.decay_rate, an.regularization,
                               an.cutoff_hz, axis=axis, scale=scale)
        report.add("peak_to_peak", float(np.ptp(field.samples)), "T", "dsp.deconvolve", 1e12, "pT")
        report.add("peak_time", float(field.times[np.argmax(field.samples)]), "s", "dsp.deconvolve",
                   1e3, "ms")
        report.diagnostics["field"] = field
    report.wall_time = time.perf_counter() - t_start
    return report


def pulsed_signal_waveform(config, omega):
    """Field applied in the dark interval for the configured scenario."""
    ws = config.waveform
    dt = ws.dt_s
    if config.run.scenario == "calibration":
        return calibration_waveform(ws.cal_amplitude_tesla, ws.cal_freq_hz or omega / (2 * math.pi), dt)
    # the stimulation artifact falls in the pumping interval and is not seen
    params = ws.nerve_params(onset=0.0, artifact_amplitude=0.0)
    w = nerve_waveform(params, dt, duration=params.duration, axis=ws.nerve_axis)
    if config.run.scenario == "null":
        return w.scaled(0.0)
    if ws.nerve_fourier_tesla_s > 0:
        w = scale_to_fourier(w, omega, ws.nerve_fourier_tesla_s)
    return w


def run_pulsed_experiment(config, out_dir=None):
    """Calibrate, measure and analyse a pulsed-mode run; returns a ``RunReport``."""
    if config.run.mode != "pulsed":
        raise ConfigError("run_pulsed_experiment needs mode = pulsed")
    t_start = time.perf_counter()
    ws, an = config.waveform, config.analysis
    ensemble = config.ensemble.build()
    if not ensemble.total_spin > 0:
        raise ConfigError("ensemble has no spin polarization")
    mag = build_magnetometer(config, ensemble)
    root = np.random.SeedSequence(config.run.seed)
    probe, window = an.probe_duration_s, config.psd_window
    n_avg = config.run.n_avg

    cal = calibrate_pulsed_run(config, mag, ensemble, root)
    cal_w, cal_rec, fit, scale = cal.waveform, cal.record, cal.fit, cal.scale
    cal_fourier = scale.reference

    sig_w = pulsed_signal_waveform(config, mag.larmor_omega)
    sig_rec = average_pulsed(mag, ensemble, sig_w, probe, child_seed(root, 1), n_avg)
    b_est = dsp.pulsed_fourier(sig_rec, scale)

    f_fit = scale.omega / (2 * math.pi)
    null_w = sig_w.scaled(0.0)
    null_psd = []
    for r in range(config.run.null_repeats):
        rec = average_pulsed(mag, ensemble, null_w, probe, child_seed(root, 2, r), n_avg)
        null_psd.append(dsp.psd_at(rec.window(window), f_fit))
    floor = scale.factor * math.sqrt(np.mean(null_psd)) if null_psd else float("nan")

    jx = ensemble.total_spin
    report = RunReport("pulsed", config.run.scenario)
    _common_quantities(report, ensemble, mag)
    report.add("n_avg", n_avg, "1", "config")
    report.add("fit_larmor_frequency", f_fit, "Hz", "dsp.fit_fid")
    report.add("fit_decay_rate", fit.decay_rate, "1/s", "dsp.fit_fid")
    report.add("calibration_fourier", cal_fourier, "T s", "fields.fourier_component", 1e15, "pT ms")
    report.add("calibration_scale", scale.factor, "T s/sqrt(unit^2 s)", "dsp.calibrate_pulsed")
    report.add("fourier_component", b_est, "T s", "dsp.pulsed_fourier", 1e15, "pT ms")
    report.add("true_fourier_component", abs(fourier_component(sig_w, mag.larmor_omega)), "T s",
               "fields.fourier_component", 1e15, "pT ms")
    report.add("pn_limit_fourier", metrology.pn_pulsed_fourier(jx), "T s",
               "metrology.pn_pulsed_fourier", 1e15, "pT ms")
    if null_psd:
        report.add("noise_floor", floor, "T s", "experiments.run_pulsed_experiment", 1e15, "pT ms")
        report.add("noise_floor_single_shot", floor * math.sqrt(n_avg), "T s",
                   "experiments.run_pulsed_experiment", 1e15, "pT ms")
        report.add("snr", dsp.snr(b_est, floor), "1", "dsp.snr")
        report.add("snr_single_shot", dsp.snr(b_est, floor * math.sqrt(n_avg)), "1", "dsp.snr")
        report.add("calibration_snr", dsp.snr(cal_fourier, floor), "1", "dsp.snr")
        pn_share = metrology.pn_pulsed_fourier(jx) / (floor * math.sqrt(n_avg))
        report.add("pn_amplitude_fraction", pn_share, "1", "metrology.pn_pulsed_fourier")
        report.add("pn_variance_fraction", pn_share**2, "1", "metrology.pn_pulsed_fourier")
    report.diagnostics["null_repeats"] = config.run.null_repeats
    report.diagnostics["fit_residual_norm"] = fit.residual_norm

    out = Path(out_dir or config.run.out_dir) if out_dir is not False else None
    if out is not None:
        header = {"config": _portable(config).as_dict()}
        report.files += [
            str(io.write_record_csv(out / "pulsed_calibration_record.csv", cal_rec, header)),
            str(io.write_record_csv(out / "pulsed_signal_record.csv", sig_rec, header)),
            str(io.write_spectrum_csv(out / "pulsed_signal_spectrum.csv",
                                      dsp.psd(sig_rec.window(window), pad=8), header)),
            str(io.write_kv(out / "pulsed_calibration.txt", scale.as_dict())),
        ]
        _write_report(out, config, report, "pulsed")
    report.wall_time = time.perf_counter() - t_start
    return report


def continuous_signal_waveform(config, record_duration):
    ws = config.waveform
    dt = ws.dt_s
    if config.run.scenario == "calibration":
        return None
    params = ws.nerve_params()
    w = nerve_waveform(params, dt, duration=record_duration, axis=ws.nerve_axis)
    return w.scaled(0.0) if config.run.scenario == "null" else w


def _impulse_window(config):
    p = config.waveform.nerve_params()
    return p.onset, p.onset + p.duration


def run_continuous_experiment(config, out_dir=None):
    """Calibrate, measure, deconvolve and analyse a continuous-mode run."""
    if config.run.mode != "continuous":
        raise ConfigError("run_continuous_experiment needs mode = continuous")
    t_start = time.perf_counter()
    ws, an = config.waveform, config.analysis
    ensemble = config.ensemble.build()
    if not ensemble.total_spin > 0:
        raise ConfigError("ensemble has no spin polarization")
    mag = build_magnetometer(config, ensemble)
    root = np.random.SeedSequence(config.run.seed)
    duration, window = an.record_duration_s, config.psd_window
    n_avg = config.run.n_avg
    dt = ws.dt_s

    cal = calibrate_continuous_run(config, mag, ensemble, root)
    cal_w, cal_rec, fit, scale = cal.waveform, cal.record, cal.fit, cal.scale

    sig_w = continuous_signal_waveform(config, duration)
    if sig_w is None:
        sig_w, sig_rec = cal_w, cal_rec
        if n_avg != config.n_cal:
            sig_rec = average_continuous(mag, ensemble, cal_w, child_seed(root, 1), n_avg)
    else:
        sig_rec = average_continuous(mag, ensemble, sig_w, child_seed(root, 1), n_avg)
    recovered = dsp.deconvolve(sig_rec, fit.omega, fit.decay_rate, an.regularization,
                               an.cutoff_hz, axis=sig_w.axis, scale=scale)

    f_fit = fit.omega / (2 * math.pi)
    # sensitivity refers to the calibrated axis whatever the signal axis is
    null_w = cal_w.scaled(0.0)
    null_psd = []
    for r in range(config.run.null_repeats):
        rec = average_continuous(mag, ensemble, null_w, child_seed(root, 2, r), n_avg)
        dec = dsp.deconvolve(rec, fit.omega, fit.decay_rate, an.regularization, an.cutoff_hz,
                             axis=cal_w.axis, scale=scale)
        spec = dsp.psd(dec.samples[: int(round(window / dt))], dt)
        null_psd.append(spec.band_mean(f_fit, an.floor_band_hz))
    floor = math.sqrt(np.mean(null_psd)) if null_psd else float("nan")

    truth = dsp.lowpass(sig_w.samples, dt, an.cutoff_hz)
    report = RunReport("continuous", config.run.scenario)
    _common_quantities(report, ensemble, mag)
    report.add("n_avg", n_avg, "1", "config")
    report.add("fit_larmor_frequency", f_fit, "Hz", "dsp.fit_convolution")
    report.add("fit_decay_rate", fit.decay_rate, "1/s", "dsp.fit_convolution")
    report.add("calibration_scale", scale.factor, "T/unit", "dsp.calibrate_continuous")
    report.add("pn_limit_sensitivity", metrology.pn_sensitivity_continuous(
        ensemble.total_spin, 1.0 / fit.decay_rate), "T/sqrt(Hz)",
        "metrology.pn_sensitivity_continuous", 1e15, "fT/sqrt(Hz)")
    norm = float(np.sqrt(np.mean(truth**2)))
    if norm > 0:
        nrmse = float(np.sqrt(np.mean((recovered.samples - truth) ** 2))) / norm
        report.add("normalized_rms_error", nrmse, "1", "experiments.run_continuous_experiment")
    if config.run.scenario == "nerve":
        lo, hi = _impulse_window(config)
        sel = (recovered.times >= lo) & (recovered.times < hi)
        seg = recovered.samples[sel]
        ptp = float(np.ptp(seg))
        t_peak = float(recovered.times[sel][np.argmax(seg)])
        delay = t_peak - ws.artifact_time_s
        report.add("peak_to_peak", ptp, "T", "experiments.run_continuous_experiment", 1e12, "pT")
        report.add("true_peak_to_peak", float(np.ptp(sig_w.samples[sel])), "T",
                   "fields.nerve_waveform", 1e12, "pT")
        report.add("arrival_delay", delay, "s", "experiments.run_continuous_experiment", 1e3, "ms")
        dist = metrology.Measurement(an.path_length_m, an.path_length_sigma_m, metrology.METRE)
        if delay > 0:
            v = metrology.conduction_velocity(dist, metrology.Measurement(delay, dt, metrology.SECOND))
            report.add("conduction_velocity", v.value, "m/s", "metrology.conduction_velocity")
        report.add("axial_current", metrology.axial_current(
            metrology.Measurement(ptp, 0.0, metrology.TESLA),
            metrology.Measurement(an.wire_distance_m, 0.0, metrology.METRE)).value, "A",
            "metrology.axial_current", 1e6, "uA")
    elif config.run.scenario == "calibration":
        report.add("peak_to_peak", float(np.ptp(recovered.samples)), "T",
                   "experiments.run_continuous_experiment", 1e12, "pT")
    if null_psd:
        report.add("noise_floor", floor, "T/sqrt(Hz)", "experiments.run_continuous_experiment",
                   1e15, "fT/sqrt(Hz)")
        report.add("noise_floor_single_shot", floor * math.sqrt(n_avg), "T/sqrt(Hz)",
                   "experiments.run_continuous_experiment", 1e15, "fT/sqrt(Hz)")
    report.diagnostics["null_repeats"] = config.run.null_repeats
    report.diagnostics["fit_residual_norm"] = fit.residual_norm
    report.diagnostics["fit_gain"] = fit.scale

    out = Path(out_dir or config.run.out_dir) if out_dir is not False else None
    if out is not None:
        header = {"config": _portable(config).as_dict()}
        report.files += [
            str(io.write_record_csv(out / "continuous_calibration_record.csv", cal_rec, header)),
            str(io.write_record_csv(out / "continuous_signal_record.csv", sig_rec, header)),
            str(io.write_waveform_csv(out / "continuous_recovered_field.csv", recovered)),
            str(io.write_spectrum_csv(out / "continuous_recovered_spectrum.csv",
                                      dsp.psd(recovered.samples[: int(round(window / dt))], dt),
                                      header)),
            str(io.write_kv(out / "continuous_calibration.txt", scale.as_dict())),
        ]
        _write_report(out, config, report, "continuous")
    report.wall_time = time.perf_counter() - t_start
    return report


def run_limits(config, out_dir=None):
    """Projection-noise limits of the configured ensemble at each listed temperature."""
    t_start = time.perf_counter()
    es, an, ws = config.ensemble, config.analysis, config.waveform
    t2 = config.magnetometer.t2_s or physics.T2_CONTINUOUS
    report = RunReport("limits", "projection_noise")
    for temp in an.limit_temperatures_celsius:
        if es.density_per_m3 and temp == es.temperature_celsius:
            density = es.density_per_m3
        else:
            density = physics.density_at_temperature(temp)
        jx = physics.ensemble_spin(density, es.cell_diameter_m, es.polarization)
        if not jx > 0:
            raise ConfigError(f"ensemble at {temp} degC has zero total spin "
                              f"(polarization = {es.polarization}); no finite limit exists")
        tag = f"{temp:g}C"
        report.add(f"density_{tag}", density, "1/m^3", "physics.density_at_temperature")
        report.add(f"total_spin_{tag}", jx, "1", "physics.ensemble_spin")
        report.add(f"pn_fourier_{tag}", metrology.pn_pulsed_fourier(jx), "T s",
                   "metrology.pn_pulsed_fourier", 1e15, "pT ms")
        report.add(f"pn_amplitude_{tag}", metrology.pn_amplitude(jx, ws.nerve_duration_s), "T",
                   "metrology.pn_amplitude", 1e12, "pT")
        report.add(f"pn_sensitivity_{tag}", metrology.pn_sensitivity_continuous(jx, t2),
                   "T/sqrt(Hz)", "metrology.pn_sensitivity_continuous", 1e15, "fT/sqrt(Hz)")
    report.add("wire_current_7pT", metrology.axial_current(
        metrology.Measurement(7e-12, 0.0, metrology.TESLA),
        metrology.Measurement(an.wire_distance_m, 0.0, metrology.METRE)).value, "A",
        "metrology.axial_current", 1e6, "uA")
    out = Path(out_dir or config.run.out_dir) if out_dir is not False else None
    if out is not None:
        _write_report(out, config, report, "limits")
    report.wall_time = time.perf_counter() - t_start
    return report


def _portable(config):
    # the output directory does not affect results, so it is left out of file contents
    return config.with_run(out_dir=".")


def _write_report(out, config, report, stem):
    out.mkdir(parents=True, exist_ok=True)
    report.files.append(str(out / f"{stem}_report.txt"))
    report.files.append(str(out / f"{stem}_config.ini"))
    dump_config(_portable(config), out / f"{stem}_config.ini")
    kv = report.as_kv()
    kv["files"] = [Path(f).name for f in report.files]
    io.write_kv(out / f"{stem}_report.txt", kv)


def run(config, out_dir=None):
    if config.run.mode == "pulsed":
        return run_pulsed_experiment(config, out_dir)
    return run_continuous_experiment(config, out_dir)
