"""Transverse field waveforms: calibration tone, nerve template, wire model."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .physics import MU0

DEFAULT_DT = 10e-6  # s


@dataclass(frozen=True, eq=False)
class FieldWaveform:
    """Uniformly sampled transverse field.

    Sample ``k`` is the field on the cell ``[start + k dt, start + (k+1) dt)``,
    taken at the cell midpoint; ``times`` returns those midpoints.
    """

    samples: np.ndarray
    dt: float
    start_time: float = 0.0
    axis: str = "z"

    def __post_init__(self):
        s = np.array(self.samples, dtype=float).ravel()
        if s.size < 1:
            raise ValueError("waveform needs at least one sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("waveform samples must be finite")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.axis not in ("y", "z"):
            raise ValueError(f"axis must be 'y' or 'z', got {self.axis!r}")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size * self.dt

    @property
    def times(self):
        return self.start_time + (np.arange(self.samples.size) + 0.5) * self.dt

    @property
    def edges(self):
        return self.start_time + np.arange(self.samples.size + 1) * self.dt

    @property
    def peak_to_peak(self):
        return float(np.ptp(self.samples))

    def with_samples(self, samples):
        return FieldWaveform(samples, self.dt, self.start_time, self.axis)

    def scaled(self, factor):
        return self.with_samples(factor * self.samples)

    def shifted(self, t0):
        return FieldWaveform(self.samples, self.dt, self.start_time + t0, self.axis)

    def padded(self, before=0.0, after=0.0):
        """Zero-pad by whole cells; ``before`` moves the start time back."""
        nb = int(round(before / self.dt))
        na = int(round(after / self.dt))
        s = np.concatenate([np.zeros(nb), self.samples, np.zeros(na)])
        return FieldWaveform(s, self.dt, self.start_time - nb * self.dt, self.axis)

    def components(self):
        """(B_y, B_z) sample arrays."""
        zero = np.zeros_like(self.samples)
        return (self.samples, zero) if self.axis == "y" else (zero, self.samples)

    def __add__(self, other):
        if not isinstance(other, FieldWaveform):
            return NotImplemented
        if (len(self) != len(other) or self.dt != other.dt
                or self.start_time != other.start_time or self.axis != other.axis):
            raise ValueError("waveforms must share grid and axis to be added")
        return self.with_samples(self.samples + other.samples)

    @classmethod
    def zeros(cls, n, dt=DEFAULT_DT, start_time=0.0, axis="z"):
        return cls(np.zeros(int(n)), dt, start_time, axis)


def _grid(duration, dt, start_time=0.0):
    n = int(round(duration / dt))
    return start_time + (np.arange(max(n, 1)) + 0.5) * dt


def sine_period(t, amplitude, freq, onset=0.0):
    """One period of ``amplitude * sin(2 pi f (t - onset))``, zero elsewhere."""
    t = np.asarray(t, dtype=float)
    x = t - onset
    inside = (x >= 0.0) & (x < 1.0 / freq)
    return np.where(inside, amplitude * np.sin(2 * math.pi * freq * x), 0.0)


def calibration_waveform(amplitude, freq, dt=DEFAULT_DT, onset=0.0, duration=None, axis="z"):
    """Single sinusoidal period of the calibration coil field.

    By default the grid covers exactly the period; ``onset`` and ``duration``
    embed it in a longer zero record starting at t = 0.
    """
    if amplitude < 0:
        raise ValueError("calibration amplitude must be non-negative")
    if freq <= 0:
        raise ValueError("calibration frequency must be positive")
    if dt > 1.0 / (20.0 * freq) * (1 + 1e-12):
        raise ValueError(f"dt={dt} undersamples a {freq} Hz tone (need dt <= 1/(20 f))")
    if duration is None:
        t = _grid(1.0 / freq, dt, onset)
        start = onset
    else:
        if onset < 0 or onset + 1.0 / freq > duration + dt:
            raise ValueError("calibration period does not fit into the requested duration")
        t = _grid(duration, dt)
        start = 0.0
    return FieldWaveform(sine_period(t, amplitude, freq, onset), dt, start, axis)


def fourier_component(waveform, omega):
    """Midpoint-rule value of the integral of B(t) exp(-i omega t) dt (T s)."""
    phase = np.exp(-1j * omega * waveform.times)
    return complex(np.sum(waveform.samples * phase) * waveform.dt)


def scale_to_fourier(waveform, omega, target):
    """Rescale ``waveform`` so that ``|fourier_component(w, omega)| == target``."""
    current = abs(fourier_component(waveform, omega))
    if current == 0.0:
        raise ValueError("cannot rescale a waveform with a vanishing Fourier component")
    return waveform.scaled(target / current)


@dataclass(frozen=True)
class NerveTemplateParams:
    """Biphasic impulse preceded by a square stimulation artifact.

    The impulse is ``G(t - c1; s1) - asymmetry * G(t - c2; s2)`` with
    Gaussian lobes whose widths and centres are fixed fractions of
    ``duration``; ``peak_to_peak`` sets the overall scale.
    """

    peak_to_peak: float = 7e-12
    duration: float = 2e-3
    onset: float = 6.2e-3
    asymmetry: float = 0.5
    artifact_amplitude: float = 5e-12
    artifact_duration: float = 50e-6
    artifact_time: float = 5.5e-3

    def __post_init__(self):
        if self.peak_to_peak < 0:
            raise ValueError("peak_to_peak must be non-negative")
        if self.duration <= 0:
            raise ValueError("duration must be positive")
        if self.asymmetry < 0:
            raise ValueError("asymmetry must be non-negative")
        if self.artifact_duration < 0:
            raise ValueError("artifact duration must be non-negative")
        if self.artifact_amplitude != 0 and self.artifact_time + self.artifact_duration > self.onset:
            raise ValueError("stimulation artifact must precede the impulse")

    @property
    def lobe_widths(self):
        return 0.10 * self.duration, 0.15 * self.duration

    @property
    def lobe_centres(self):
        s1, s2 = self.lobe_widths
        return self.onset + 3.0 * s1, self.onset + self.duration - 3.0 * s2

    @property
    def peak_time(self):
        return self.lobe_centres[0]


def _unit_impulse(t, p):
    s1, s2 = p.lobe_widths
    c1, c2 = p.lobe_centres
    return np.exp(-0.5 * ((t - c1) / s1) ** 2) - p.asymmetry * np.exp(-0.5 * ((t - c2) / s2) ** 2)


def _impulse_scale(p):
    t = np.linspace(p.onset - p.duration, p.onset + 2 * p.duration, 30001)
    return p.peak_to_peak / np.ptp(_unit_impulse(t, p))


def nerve_impulse_field(t, p):
    """Analytic impulse part of the template (no artifact)."""
    t = np.asarray(t, dtype=float)
    if p.peak_to_peak == 0:
        return np.zeros_like(t)
    return _impulse_scale(p) * _unit_impulse(t, p)


def artifact_field(t, p):
    t = np.asarray(t, dtype=float)
    on = (t >= p.artifact_time) & (t < p.artifact_time + p.artifact_duration)
    return np.where(on, p.artifact_amplitude, 0.0)


def nerve_field(t, p):
    return nerve_impulse_field(t, p) + artifact_field(t, p)


def nerve_waveform(params=None, dt=DEFAULT_DT, duration=None, axis="y", include_artifact=True):
    """Sampled nerve template on ``[0, duration)``.

    ``duration`` defaults to the impulse end plus one impulse duration.
    """
    p = params or NerveTemplateParams()
    if duration is None:
        duration = p.onset + 2 * p.duration
    t = _grid(duration, dt)
    b = nerve_impulse_field(t, p)
    if include_artifact:
        b = b + artifact_field(t, p)
    return FieldWaveform(b, dt, 0.0, axis)


def wire_field(current, r):
    """Field magnitude (T) at distance ``r`` from an infinite straight current."""
    if np.any(np.asarray(r) <= 0):
        raise ValueError("distance from the wire must be positive")
    return MU0 * current / (2 * math.pi * r)


def invert_wire(field, r):
    """Current (A) of an infinite wire producing ``field`` at distance ``r``."""
    if np.any(np.asarray(r) <= 0):
        raise ValueError("distance from the wire must be positive")
    return 2 * math.pi * r * field / MU0
