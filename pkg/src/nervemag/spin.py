"""Rotating-frame spin propagation and polarimeter records.

The transverse spin is carried as the complex number ``z = J'_y + i J'_z``.
In this notation the rotating-frame equations of motion collapse to

    dz/dt = -Gamma z + gamma J_x exp(-i Omega t) (B_z - i B_y) + noise

and the Faraday signal is ``J_z(t) = Im(exp(i Omega t) z(t))``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .fields import FieldWaveform

SHOT_BATCH = 256


class SpinWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SpinState:
    jy_rot: float = 0.0
    jz_rot: float = 0.0
    jx: float = 0.0
    time: float = 0.0

    @property
    def z(self):
        return complex(self.jy_rot, self.jz_rot)

    @property
    def transverse(self):
        return abs(self.z)


@dataclass(frozen=True, eq=False)
class SpinTrajectory:
    """Rotating-frame spin on the edge grid of the driving waveform.

    ``z`` has shape ``(n + 1,)`` for one run or ``(shots, n + 1)`` for a batch.
    """

    times: np.ndarray
    z: np.ndarray
    jx: float
    larmor_omega: float
    mode: str = "deterministic"
    seed: object = None

    @property
    def jy_rot(self):
        return self.z.real

    @property
    def jz_rot(self):
        return self.z.imag

    @property
    def transverse(self):
        return np.abs(self.z)

    def lab_jz(self):
        return np.imag(np.exp(1j * self.larmor_omega * self.times) * self.z)

    def lab_jy(self):
        return np.real(np.exp(1j * self.larmor_omega * self.times) * self.z)

    def state(self, index=-1):
        z = complex(self.z[..., index]) if self.z.ndim == 1 else self.z[..., index]
        return SpinState(np.real(z), np.imag(z), self.jx, float(self.times[index]))


def child_seed(seed, *keys):
    """Deterministic sub-stream of ``seed`` addressed by integer ``keys``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.SeedSequence(ss.entropy, spawn_key=tuple(ss.spawn_key) + tuple(keys))


def shot_batches(seed, n_shots, batch=SHOT_BATCH):
    """Yield ``(count, SeedSequence)`` per batch; streams depend only on seed and index."""
    for i, lo in enumerate(range(0, n_shots, batch)):
        yield min(batch, n_shots - lo), child_seed(seed, i)


def _forcing(config, jx, waveform):
    by, bz = waveform.components()
    dt = waveform.dt
    rot = np.exp(-1j * config.larmor_omega * waveform.times)
    decay_half = math.exp(-0.5 * config.relaxation_rate * dt)
    return config.gamma * jx * decay_half * dt * rot * (bz - 1j * by)


def _propagate(z0, drive, decay):
    """z[k+1] = decay z[k] + drive[k]; returns all n+1 states along the last axis."""
    z0 = np.asarray(z0, dtype=complex)
    drive = np.asarray(drive, dtype=complex)
    if z0.ndim == 0:
        out = lfilter([1.0], [1.0, -decay], drive, zi=[decay * z0])[0]
        return np.concatenate([[z0], out])
    drive = np.broadcast_to(drive, z0.shape + drive.shape[-1:])
    out = lfilter([1.0], [1.0, -decay], drive, axis=-1, zi=(decay * z0)[:, None])[0]
    return np.concatenate([z0[:, None], out], axis=-1)


def _check_small(z, jx):
    if jx > 0 and np.max(np.abs(z)) > 0.1 * jx:
        warnings.warn("transverse spin exceeds 10% of J_x; the linearised model is "
                      "no longer accurate", SpinWarning, stacklevel=3)


def evolve_mean(config, ensemble, waveform, initial=None):
    """Deterministic mean spin under ``waveform``.

    Each step applies the exact decay factor and the midpoint forcing, so
    the scheme is second order in dt and exact for the free decay.
    """
    jx = ensemble.total_spin
    z0 = initial.z if initial is not None else 0j
    decay = math.exp(-config.relaxation_rate * waveform.dt)
    z = _propagate(z0, _forcing(config, jx, waveform), decay)
    _check_small(z, jx)
    return SpinTrajectory(waveform.edges, z, jx, config.larmor_omega)


def coherent_state_noise(rng, jx, shape=()):
    """Transverse projection noise of a freshly pumped ensemble (variance J_x/2 each)."""
    sd = math.sqrt(jx / 2.0)
    return sd * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def evolve_stochastic(config, ensemble, waveform, seed, initial=None, n_shots=None):
    """Langevin trajectory(ies) with exact Ornstein-Uhlenbeck steps.

    The initial transverse spin is the mean ``initial`` (default zero) plus
    coherent-state noise. With ``n_shots`` the result is a batch of
    independent shots drawn from one stream.
    """
    if seed is None:
        raise ValueError("a seed is required for stochastic evolution")
    rng = np.random.default_rng(seed)
    jx = ensemble.total_spin
    shape = () if n_shots is None else (int(n_shots),)
    gamma_dt = config.relaxation_rate * waveform.dt
    decay = math.exp(-gamma_dt)
    step_sd = math.sqrt(jx / 2.0 * -math.expm1(-2.0 * gamma_dt))
    z0 = (initial.z if initial is not None else 0j) + coherent_state_noise(rng, jx, shape)
    n = len(waveform)
    kicks = step_sd * (rng.standard_normal(shape + (n,)) + 1j * rng.standard_normal(shape + (n,)))
    z = _propagate(z0, _forcing(config, jx, waveform) + kicks, decay)
    return SpinTrajectory(waveform.edges, z, jx, config.larmor_omega, "stochastic", seed)


def readout_noise(n, dt, shot_psd, seed=None, shape=()):
    """White Gaussian polarimeter noise with one-sided PSD ``shot_psd``.

    Per-sample variance is ``shot_psd / (2 dt)``.
    """
    if shot_psd < 0:
        raise ValueError("shot noise PSD must be non-negative")
    shape = tuple(shape) + (int(n),)
    if shot_psd == 0:
        return np.zeros(shape)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return math.sqrt(shot_psd / (2.0 * dt)) * rng.standard_normal(shape)


def flicker_noise(n, dt, psd_1hz, seed=None, shape=()):
    """Gaussian 1/f noise, one-sided PSD ``psd_1hz / f`` above the record's lowest bin."""
    shape = tuple(shape) + (int(n),)
    if psd_1hz == 0:
        return np.zeros(shape)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    freqs = np.fft.rfftfreq(n, dt)
    s_one = np.zeros_like(freqs)
    s_one[1:] = psd_1hz / freqs[1:]
    amp = np.sqrt(n * s_one / (2.0 * dt))
    spec = amp * (rng.standard_normal(shape[:-1] + freqs.shape)
                  + 1j * rng.standard_normal(shape[:-1] + freqs.shape)) / math.sqrt(2.0)
    if n % 2 == 0:
        spec[..., -1] = amp[-1] * rng.standard_normal(shape[:-1])
    return np.fft.irfft(spec, n=n, axis=-1)


@dataclass(frozen=True, eq=False)
class DetectionRecord:
    """Polarimeter output; ``samples`` is 1-D or (shots, time)."""

    samples: np.ndarray
    dt: float
    sequence: str
    start_time: float = 0.0
    metadata: dict = field(default_factory=dict)

    SEQUENCES = ("pulsed_A", "pulsed_B", "pulsed_diff", "continuous")

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if not np.all(np.isfinite(s)):
            raise ValueError("record samples must be finite")
        if self.sequence not in self.SEQUENCES:
            raise ValueError(f"unknown sequence {self.sequence!r}")
        object.__setattr__(self, "samples", s)

    @property
    def n_samples(self):
        return self.samples.shape[-1]

    @property
    def n_shots(self):
        return 1 if self.samples.ndim == 1 else self.samples.shape[0]

    @property
    def times(self):
        return self.start_time + np.arange(self.n_samples) * self.dt

    @property
    def duration(self):
        return self.n_samples * self.dt

    def replace(self, samples=None, sequence=None, **meta):
        md = dict(self.metadata)
        md.update(meta)
        return DetectionRecord(self.samples if samples is None else samples, self.dt,
                               sequence or self.sequence, self.start_time, md)

    def shot(self, i):
        return self.replace(samples=self.samples[i]) if self.samples.ndim == 2 else self

    def mean(self):
        if self.samples.ndim == 1:
            return self
        n = self.samples.shape[0] * self.metadata.get("n_avg", 1)
        return self.replace(samples=self.samples.mean(axis=0), n_avg=n)

    def window(self, duration):
        n = int(round(duration / self.dt))
        if n > self.n_samples:
            raise ValueError("window longer than record")
        return self.replace(samples=self.samples[..., :n])

    def __sub__(self, other):
        if not isinstance(other, DetectionRecord):
            return NotImplemented
        if other.samples.shape != self.samples.shape or other.dt != self.dt:
            raise ValueError("records must share their grid to be subtracted")
        return self.replace(samples=self.samples - other.samples, sequence="pulsed_diff")


def _readout(config, jz, dt, rng):
    signal = config.readout_coupling * jz
    if rng is not None:
        shape = jz.shape[:-1]
        n = jz.shape[-1]
        signal = (signal + readout_noise(n, dt, config.shot_psd, rng, shape)
                  + flicker_noise(n, dt, config.flicker_psd_1hz, rng, shape))
    return config.detector_gain * signal


def _snapshot(config, ensemble, seed, **extra):
    md = {"config": config.as_dict(), "total_spin": ensemble.total_spin,
          "seed": None if seed is None else _seed_repr(seed)}
    md.update(extra)
    return md


def _seed_repr(seed):
    if isinstance(seed, np.random.SeedSequence):
        return {"entropy": seed.entropy, "spawn_key": list(seed.spawn_key)}
    return seed


def _probe_record(config, ensemble, waveform, probe_duration, seed, n_shots, sequence):
    n_probe = int(round(probe_duration / waveform.dt))
    full = waveform.padded(after=n_probe * waveform.dt)
    mean0 = SpinState(config.misalignment.real * ensemble.total_spin,
                      config.misalignment.imag * ensemble.total_spin,
                      ensemble.total_spin, waveform.start_time)
    if seed is None:
        traj = evolve_mean(config, ensemble, full, mean0)
        rng = None
    else:
        traj = evolve_stochastic(config, ensemble, full, child_seed(seed, 0), mean0, n_shots)
        rng = np.random.default_rng(child_seed(seed, 1))
    k0 = len(waveform)
    jz = traj.lab_jz()[..., k0:k0 + n_probe]
    samples = _readout(config, jz, waveform.dt, rng)
    return DetectionRecord(samples, waveform.dt, sequence, waveform.start_time + waveform.duration,
                           _snapshot(config, ensemble, seed, n_avg=1,
                                     field_duration=waveform.duration))


def pulsed_sequence(config, ensemble, waveform, probe_duration, seed=None, n_shots=None):
    """Probe records A (field applied in the dark) and B (no field).

    ``waveform`` spans the dark interval between pump and probe. Without a
    seed the records are the noiseless means. Record times start at the
    end of the dark interval.
    """
    if probe_duration <= 0:
        raise ValueError("probe duration must be positive")
    if waveform.duration > 0.2 * config.t2:
        warnings.warn(f"field interval {waveform.duration:.3g} s is not short compared with "
                      f"T2 = {config.t2:.3g} s", SpinWarning, stacklevel=2)
    seeds = (None, None) if seed is None else (child_seed(seed, 0), child_seed(seed, 1))
    rec_a = _probe_record(config, ensemble, waveform, probe_duration, seeds[0], n_shots, "pulsed_A")
    empty = waveform.with_samples(np.zeros(len(waveform)))
    rec_b = _probe_record(config, ensemble, empty, probe_duration, seeds[1], n_shots, "pulsed_B")
    return rec_a, rec_b


def continuous_record(config, ensemble, waveform, seed=None, n_shots=None, initial=None):
    """Always-on probe record ``a S_x J_z(t)`` sampled at ``waveform``'s cell starts.

    Without a seed the record is the noiseless mean response to the field.
    """
    if seed is None:
        traj = evolve_mean(config, ensemble, waveform, initial)
        rng = None
    else:
        traj = evolve_stochastic(config, ensemble, waveform, child_seed(seed, 0), initial, n_shots)
        rng = np.random.default_rng(child_seed(seed, 1))
    jz = traj.lab_jz()[..., :-1]
    samples = _readout(config, jz, waveform.dt, rng)
    return DetectionRecord(samples, waveform.dt, "continuous", waveform.start_time,
                           _snapshot(config, ensemble, seed, n_avg=1))


def response_kernel(omega, gamma, n, dt, axis="z"):
    """Discrete response of the recorded J_z to a field cell.

    ``h[m]`` multiplies the field in the cell that ended ``m - 1`` samples
    before the readout; ``h[0] = 0``. For a z-field it is
    ``exp(-Gamma s) sin(Omega s)`` at ``s = (m - 1/2) dt``, for a y-field
    ``-exp(-Gamma s) cos(Omega s)``.
    """
    s = (np.arange(n) - 0.5) * dt
    env = np.exp(-gamma * s)
    h = env * (np.sin(omega * s) if axis == "z" else -np.cos(omega * s))
    h[0] = 0.0
    return h
