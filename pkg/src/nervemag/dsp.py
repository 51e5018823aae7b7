"""Signal recovery: spectra, FID fits, calibration, deconvolution, averaging.

Spectra follow the definition S(omega) = (1/T) <|int_0^T x(t) exp(-i omega t) dt|^2>
with a rectangular window. Only non-negative frequencies are stored; the
values are the two-sided density, so ``Spectrum.one_sided()`` doubles the
interior bins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, signal
from scipy.fft import irfft, next_fast_len, rfft, rfftfreq

from .fields import FieldWaveform
from .spin import DetectionRecord, response_kernel

PULSED_PSD_WINDOW = 8e-3  # s
CONTINUOUS_PSD_WINDOW = 37.1e-3  # s
DEFAULT_CUTOFF = 3e3  # Hz
DEFAULT_REGULARIZATION = 1e-3  # relative to max |H|^2


class DeconvolutionError(ValueError):
    pass


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Spectrum:
    frequencies: np.ndarray
    psd_values: np.ndarray
    window_length: float
    n_records: int = 1
    nfft: int = 0

    @property
    def df(self):
        return self.frequencies[1] - self.frequencies[0]

    def one_sided(self):
        """Values folded onto positive frequencies (interior bins doubled)."""
        w = np.full(self.frequencies.shape, 2.0)
        w[0] = 1.0
        if self.nfft % 2 == 0:
            w[-1] = 1.0
        return self.psd_values * w

    def total_power(self):
        """Integral of the density over all frequencies; equals the mean power for pad=1."""
        return float(np.sum(self.one_sided()) * self.df)

    def sqrt(self):
        return np.sqrt(self.psd_values)

    def peak(self, fmin=0.0):
        """(frequency, value) of the maximum above ``fmin``; ties go to the lowest frequency."""
        sel = np.flatnonzero(self.frequencies > fmin) if fmin > 0 else np.arange(self.frequencies.size)
        k = sel[np.argmax(self.psd_values[sel])]
        return float(self.frequencies[k]), float(self.psd_values[k])

    def band_mean(self, f0, half_width):
        sel = np.abs(self.frequencies - f0) <= half_width
        if not np.any(sel):
            sel = np.abs(self.frequencies - f0) == np.min(np.abs(self.frequencies - f0))
        return float(np.mean(self.psd_values[sel]))


def _as_array(x):
    if isinstance(x, DetectionRecord):
        return x.samples, x.dt
    if isinstance(x, FieldWaveform):
        return x.samples, x.dt
    return np.asarray(x, dtype=float), None


def psd(x, dt=None, pad=1):
    """Periodogram on the grid k / (pad T).

    ``x`` may be an array, a record or a waveform; 2-D input is treated as
    an ensemble of records and the periodograms are averaged.
    """
    data, rec_dt = _as_array(x)
    dt = rec_dt if dt is None else dt
    if data.shape[-1] < 2:
        raise ValueError("need at least two samples for a spectrum")
    n = data.shape[-1]
    window = n * dt
    nfft = int(pad * n)
    spec = np.abs(rfft(data, n=nfft, axis=-1)) ** 2 * dt**2 / window
    if spec.ndim > 1:
        spec = spec.reshape(-1, spec.shape[-1]).mean(axis=0)
    rows = 1 if data.ndim == 1 else int(np.prod(data.shape[:-1]))
    return Spectrum(rfftfreq(nfft, dt), spec, window, rows, nfft)


def psd_at(x, freq, dt=None):
    """Periodogram value(s) at arbitrary frequency ``freq`` (Hz), averaged over rows."""
    data, rec_dt = _as_array(x)
    dt = rec_dt if dt is None else dt
    n = data.shape[-1]
    t = np.arange(n) * dt
    f = np.atleast_1d(np.asarray(freq, dtype=float))
    basis = np.exp(-2j * math.pi * f[:, None] * t[None, :])
    amp = data.reshape(-1, n) @ basis.T * dt
    out = np.mean(np.abs(amp) ** 2, axis=0) / (n * dt)
    return float(out[0]) if np.ndim(freq) == 0 else out


def damped_sine_peak(amplitude, gamma, window):
    """Leading term of the periodogram peak of A sin(Omega t + theta) exp(-Gamma t).

    This is |integral|^2, i.e. the periodogram times the window length.
    """
    return abs(amplitude) ** 2 * (1 - math.exp(-gamma * window)) ** 2 / (4 * gamma**2)


@dataclass(frozen=True)
class FidFit:
    amplitude: float = float("nan")
    omega: float = float("nan")
    phase: float = float("nan")
    decay_rate: float = float("nan")
    residual_norm: float = float("nan")
    success: bool = False
    message: str = ""
    stderr: dict = field(default_factory=dict)

    def __bool__(self):
        return bool(self.success)

    @property
    def frequency(self):
        return self.omega / (2 * math.pi)

    def model(self, t):
        return self.amplitude * np.sin(self.omega * t + self.phase) * np.exp(-self.decay_rate * t)


def _fid_design(t, omega, gamma):
    env = np.exp(-gamma * t)
    return np.stack([np.sin(omega * t) * env, np.cos(omega * t) * env], axis=-1)


def _wrap(phase):
    return (phase + math.pi) % (2 * math.pi) - math.pi


def fit_fid(record, dt=None, max_nfev=200, min_cycles=5.0):
    """Least-squares fit of A sin(Omega t + theta) exp(-Gamma t).

    Time runs from the first sample. Starting values: Omega from the
    zero-padded periodogram maximum, Gamma from a straight-line fit to the
    log of the analytic-signal envelope, and the two quadratures by linear
    least squares. Degenerate input or non-convergence returns a failed
    ``FidFit`` instead of raising.
    """
    x, rec_dt = _as_array(record)
    dt = rec_dt if dt is None else dt
    if x.ndim != 1:
        x = x.reshape(-1, x.shape[-1]).mean(axis=0)
    n = x.size
    t = np.arange(n) * dt
    if n < 8 or not np.any(x):
        return FidFit(message="record has no oscillation to fit")

    spec = psd(x, dt, pad=16)
    f0, _ = spec.peak(fmin=spec.frequencies[1])
    omega0 = 2 * math.pi * f0
    if f0 * n * dt < min_cycles:
        return FidFit(message=f"only {f0 * n * dt:.1f} cycles in the record (need {min_cycles})")

    env = np.abs(signal.hilbert(x - x.mean()))
    lo, hi = n // 10, n - n // 10
    good = env[lo:hi] > 0
    if np.count_nonzero(good) > 2:
        slope = np.polyfit(t[lo:hi][good], np.log(env[lo:hi][good]), 1)[0]
    else:
        slope = 0.0
    gamma0 = -slope if slope < 0 else 1.0 / (n * dt)

    quad0 = np.linalg.lstsq(_fid_design(t, omega0, gamma0), x, rcond=None)[0]
    scale = max(np.max(np.abs(x)), np.finfo(float).tiny)

    def resid(p):
        c1, c2, om, ga = p
        return (_fid_design(t, om, ga) @ np.array([c1, c2]) - x) / scale

    p0 = [quad0[0], quad0[1], omega0, gamma0]
    bounds = ([-np.inf, -np.inf, 0.5 * omega0, 0.0], [np.inf, np.inf, 1.5 * omega0, np.inf])
    try:
        sol = optimize.least_squares(resid, p0, bounds=bounds, x_scale="jac",
                                     max_nfev=max_nfev, xtol=1e-12, ftol=1e-12, gtol=1e-12)
    except (ValueError, np.linalg.LinAlgError) as exc:
        return FidFit(message=f"fit failed: {exc}")
    c1, c2, om, ga = sol.x
    if sol.status <= 0:
        return FidFit(message=f"no convergence: {sol.message}")
    if not ga > 0:
        return FidFit(message="fitted decay rate is not positive")

    res = sol.fun * scale
    rss = float(res @ res)
    dof = max(n - 4, 1)
    jac = sol.jac * scale
    try:
        cov = np.linalg.inv(jac.T @ jac) * rss / dof
        err = np.sqrt(np.abs(np.diag(cov)))
    except np.linalg.LinAlgError:
        cov, err = None, np.full(4, np.nan)
    amp = math.hypot(c1, c2)
    # c1 = A cos(theta), c2 = A sin(theta)
    phase = _wrap(math.atan2(c2, c1))
    if cov is not None and amp > 0:
        g = np.array([c1 / amp, c2 / amp, 0.0, 0.0])
        amp_err = float(math.sqrt(max(g @ cov @ g, 0.0)))
    else:
        amp_err = float("nan")
    return FidFit(amp, float(om), phase, float(ga), math.sqrt(rss), True, "converged",
                  {"amplitude": amp_err, "omega": float(err[2]), "decay_rate": float(err[3])})


@dataclass(frozen=True)
class CalibrationScale:
    """Field per readout unit, traceable to a calibration measurement.

    Pulsed: T s per sqrt(PSD) unit at ``omega``. Continuous: T per
    deconvolved signal unit.
    """

    factor: float
    reference: float
    mode: str
    omega: float
    decay_rate: float = float("nan")
    window: float = float("nan")
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (self.factor > 0 and math.isfinite(self.factor)):
            raise CalibrationError(f"calibration factor must be positive and finite, got {self.factor}")
        if self.mode not in ("pulsed", "continuous"):
            raise CalibrationError(f"unknown calibration mode {self.mode!r}")

    def as_dict(self):
        return {"factor": self.factor, "reference": self.reference, "mode": self.mode,
                "omega": self.omega, "decay_rate": self.decay_rate, "window": self.window,
                **{f"source_{k}": v for k, v in self.source.items()}}


def calibrate_pulsed(cal_record, cal_fourier, omega=None, window=PULSED_PSD_WINDOW):
    """Scale mapping sqrt(PSD) at the Larmor frequency to |B(Omega)|.

    ``omega`` defaults to the FID-fit frequency of the calibration record.
    The PSD uses the first ``window`` seconds of the record.
    """
    rec = cal_record.mean() if cal_record.samples.ndim == 2 else cal_record
    if window is not None and window < rec.duration:
        rec = rec.window(window)
    source = {"n_avg": rec.metadata.get("n_avg", 1)}
    gamma = float("nan")
    if omega is None:
        fit = fit_fid(rec)
        if not fit:
            raise CalibrationError(f"calibration FID fit failed: {fit.message}")
        omega, gamma = fit.omega, fit.decay_rate
        source["fit_amplitude"] = fit.amplitude
    peak = psd_at(rec, omega / (2 * math.pi))
    if not peak > 0:
        raise CalibrationError("calibration record has a vanishing PSD peak")
    return CalibrationScale(cal_fourier / math.sqrt(peak), cal_fourier, "pulsed", float(omega),
                            gamma, rec.duration, source)


def pulsed_fourier(record, scale, window=None):
    """Calibrated Fourier component |B(Omega)| (T s) of a pulsed record."""
    if scale.mode != "pulsed":
        raise CalibrationError("pulsed_fourier needs a pulsed calibration")
    rec = record.mean() if record.samples.ndim == 2 else record
    window = scale.window if window is None else window
    if math.isfinite(window) and window < rec.duration:
        rec = rec.window(window)
    return scale.factor * math.sqrt(psd_at(rec, scale.omega / (2 * math.pi)))


def lowpass_response(freqs, cutoff, order=4):
    """Zero-phase Butterworth magnitude response."""
    if cutoff is None or not math.isfinite(cutoff):
        return np.ones_like(freqs)
    return 1.0 / np.sqrt(1.0 + (np.abs(freqs) / cutoff) ** (2 * order))


def lowpass(x, dt, cutoff, order=4):
    """Apply the deconvolution low-pass (zero phase, FFT domain) to a series."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    m = next_fast_len(2 * n)
    spec = rfft(x, n=m, axis=-1) * lowpass_response(rfftfreq(m, dt), cutoff, order)
    return irfft(spec, n=m, axis=-1)[..., :n]


def deconvolution_filter(n, dt, omega, gamma, regularization=DEFAULT_REGULARIZATION,
                         cutoff=DEFAULT_CUTOFF, axis="z"):
    """(padded length, rfft-domain filter) used by ``deconvolve`` on ``n`` samples."""
    if regularization < 0:
        raise ValueError("regularization must be non-negative")
    m = next_fast_len(2 * n)
    h = response_kernel(omega, gamma, m, dt, axis)
    hf = rfft(h) * dt
    power = np.abs(hf) ** 2
    hmax = np.max(power)
    if hmax == 0 or (regularization == 0 and np.min(power) < 1e-12 * hmax):
        raise DeconvolutionError("response kernel has (near-)zero spectral bins; "
                                 "deconvolution without regularization is ill-posed")
    filt = np.conj(hf) / (power + regularization * hmax)
    return m, filt * lowpass_response(rfftfreq(m, dt), cutoff)


def deconvolve(record, omega, gamma, regularization=DEFAULT_REGULARIZATION,
               cutoff=DEFAULT_CUTOFF, axis="z", scale=None):
    """Recover the field from a continuous-mode record.

    Divides by the transform of the discrete response kernel with the
    Wiener-type filter conj(H) / (|H|^2 + lambda max|H|^2), then applies a
    zero-phase low-pass at ``cutoff``. The result is in readout units per
    second of kernel area unless ``scale`` (T per unit, or a continuous
    ``CalibrationScale``) converts it to tesla. Batches are averaged.
    """
    y = record.samples
    dt = record.dt
    n = y.shape[-1]
    m, filt = deconvolution_filter(n, dt, omega, gamma, regularization, cutoff, axis)
    out = irfft(rfft(y, n=m, axis=-1) * filt, n=m, axis=-1)[..., :n]
    if isinstance(scale, CalibrationScale):
        if scale.mode != "continuous":
            raise CalibrationError("deconvolution needs a continuous calibration")
        factor = scale.factor
    else:
        factor = 1.0 if scale is None else float(scale)
    out = out * factor
    if out.ndim > 1:
        out = out.reshape(-1, n).mean(axis=0)
    return FieldWaveform(out, dt, record.start_time, axis)


def calibrate_continuous(deconvolved, cal_waveform, cutoff=DEFAULT_CUTOFF, omega=float("nan"),
                         decay_rate=float("nan")):
    """Tesla per deconvolved unit from a record of a known calibration field.

    The amplitude is the least-squares projection of the deconvolved trace
    onto the calibration field passed through the same low-pass.
    """
    if len(deconvolved) != len(cal_waveform):
        raise CalibrationError("deconvolved trace and calibration field differ in length")
    ref = lowpass(cal_waveform.samples, cal_waveform.dt, cutoff)
    norm = float(ref @ ref)
    if norm == 0:
        raise CalibrationError("calibration field is zero")
    alpha = float(deconvolved.samples @ ref) / norm
    if not alpha > 0:
        raise CalibrationError("calibration response has no positive projection on the field")
    ref_amp = float(np.max(np.abs(cal_waveform.samples)))
    return CalibrationScale(1.0 / alpha, ref_amp, "continuous", omega, decay_rate)


@dataclass(frozen=True)
class ConvolutionFit:
    scale: float
    omega: float
    decay_rate: float
    residual_norm: float
    success: bool
    message: str = ""

    def __bool__(self):
        return bool(self.success)


def convolution_model(waveform, omega, gamma, n=None):
    """Noiseless continuous-mode record per unit gain: dt * (h conv B)."""
    n = len(waveform) if n is None else n
    h = response_kernel(omega, gamma, n, waveform.dt, waveform.axis)
    return signal.fftconvolve(waveform.samples, h)[:n] * waveform.dt


def fit_convolution(record, waveform, omega0, gamma0, max_nfev=200):
    """Fit gain, Larmor frequency and decay rate of a continuous record of a known field."""
    y = record.mean().samples if record.samples.ndim == 2 else record.samples
    if len(waveform) != y.size or waveform.dt != record.dt:
        raise ValueError("record and waveform must share their grid")
    model0 = convolution_model(waveform, omega0, gamma0)
    denom = float(model0 @ model0)
    if denom == 0 or not np.any(y):
        return ConvolutionFit(float("nan"), float("nan"), float("nan"), float("nan"), False,
                              "degenerate record or field")
    c0 = float(y @ model0) / denom
    yscale = np.max(np.abs(y))

    def resid(p):
        c, om, ga = p
        return (c * convolution_model(waveform, om, ga) - y) / yscale

    try:
        sol = optimize.least_squares(resid, [c0, omega0, gamma0], x_scale="jac",
                                     bounds=([-np.inf, 0.0, 0.0], [np.inf, np.inf, np.inf]),
                                     max_nfev=max_nfev, xtol=1e-12, ftol=1e-12)
    except ValueError as exc:
        return ConvolutionFit(float("nan"), float("nan"), float("nan"), float("nan"), False, str(exc))
    c, om, ga = sol.x
    ok = sol.status > 0 and ga > 0
    return ConvolutionFit(float(c), float(om), float(ga),
                          float(np.linalg.norm(sol.fun) * yscale), ok, sol.message)


def average_shots(records):
    """Pointwise mean of records on identical grids; ``n_avg`` accumulates."""
    records = list(records)
    if not records:
        raise ValueError("no records to average")
    first = records[0]
    total = np.zeros(first.n_samples)
    n_avg = 0
    for rec in records:
        if rec.n_samples != first.n_samples or rec.dt != first.dt or rec.start_time != first.start_time:
            raise ValueError("records must share their time grid")
        k = rec.metadata.get("n_avg", 1)
        rows = rec.samples.reshape(-1, rec.n_samples)
        total += rows.sum(axis=0) * k
        n_avg += k * rows.shape[0]
    return first.replace(samples=total / n_avg, n_avg=n_avg)


def snr(signal_metric, noise_std):
    """Signal metric divided by the noise standard deviation."""
    if not noise_std > 0:
        raise ValueError("noise standard deviation must be positive")
    return signal_metric / noise_std
