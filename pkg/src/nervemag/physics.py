"""Constants, atomic ensemble bookkeeping and magnetometer configuration.

Everything here is strict SI. Spin quantities are dimensionless (angular
momentum in units of hbar).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

GAMMA_CS = 2.20e10  # rad/(s T), cesium F=4 ground state
MU0 = 4e-7 * math.pi  # T m / A
K_BOLTZMANN = 1.380649e-23  # J/K
TORR = 133.322368  # Pa

# cesium density at the 22 degC room-temperature anchor, atoms/m^3
ROOM_DENSITY = 3.6e16
ROOM_TEMPERATURE_C = 22.0
CELL_DIAMETER = 5.3e-3  # m, inner diameter of the spherical cell

T2_DARK = 15e-3  # s
T2_CONTINUOUS = 0.44e-3  # s


@dataclass(frozen=True)
class PhysicalConstants:
    gamma: float = GAMMA_CS
    mu0: float = MU0


CONSTANTS = PhysicalConstants()


def larmor_frequency(bias_field, gamma=GAMMA_CS):
    """Angular Larmor frequency (rad/s) for a bias field in tesla."""
    b = np.asarray(bias_field, dtype=float)
    if np.any(b < 0):
        raise ValueError(f"bias field must be non-negative, got {bias_field!r}")
    out = gamma * b
    return float(out) if out.ndim == 0 else out


def bias_for_larmor(omega, gamma=GAMMA_CS):
    """Bias field (T) giving the angular Larmor frequency ``omega``."""
    if omega < 0:
        raise ValueError("Larmor frequency must be non-negative")
    return omega / gamma


def sphere_volume(diameter):
    return math.pi / 6.0 * diameter**3


def ensemble_spin(density, diameter, polarization=1.0):
    """Total longitudinal spin J_x = 4 p N_A of a spherical cesium cell.

    The factor 4 is F=4 for a fully stretched state; ``polarization``
    scales it linearly.
    """
    if density < 0 or diameter < 0:
        raise ValueError("density and diameter must be non-negative")
    if not 0.0 <= polarization <= 1.0:
        raise ValueError(f"polarization must lie in [0, 1], got {polarization}")
    return 4.0 * polarization * density * sphere_volume(diameter)


def _cs_liquid_pressure(temp_k):
    # Alcock, Itkin & Horrigan (1984) liquid-phase fit, log10(P/atm) = 4.165 - 3830/T
    return 10.0 ** (2.881 + 4.165 - 3830.0 / temp_k) * TORR


def _raw_density(temp_c):
    temp_k = temp_c + 273.15
    return _cs_liquid_pressure(temp_k) / (K_BOLTZMANN * temp_k)


def density_at_temperature(temp_c):
    """Saturated cesium vapour density (atoms/m^3) between 0 and 60 degC.

    The liquid-phase vapour-pressure curve is rescaled by a constant so that
    22 degC gives exactly 3.6e16 m^-3.
    """
    t = np.asarray(temp_c, dtype=float)
    if np.any((t < 0.0) | (t > 60.0)) or not np.all(np.isfinite(t)):
        raise ValueError(f"temperature {temp_c!r} degC outside supported range [0, 60]")
    out = ROOM_DENSITY * _raw_density(t) / _raw_density(ROOM_TEMPERATURE_C)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class AtomEnsemble:
    density: float = ROOM_DENSITY
    cell_inner_diameter: float = CELL_DIAMETER
    polarization: float = 1.0

    def __post_init__(self):
        if self.density < 0 or self.cell_inner_diameter < 0:
            raise ValueError("density and diameter must be non-negative")
        if not 0.0 <= self.polarization <= 1.0:
            raise ValueError("polarization must lie in [0, 1]")

    @classmethod
    def at_temperature(cls, temp_c, **kwargs):
        return cls(density=density_at_temperature(temp_c), **kwargs)

    @property
    def atom_count(self):
        return self.density * sphere_volume(self.cell_inner_diameter)

    @property
    def total_spin(self):
        return ensemble_spin(self.density, self.cell_inner_diameter, self.polarization)


@dataclass(frozen=True)
class MagnetometerConfig:
    """Operating point of the sensor and its readout chain.

    ``larmor_omega`` is derived from ``bias_field``. Noise levels are in
    readout units: ``shot_psd`` is a one-sided white PSD (units^2/Hz), and
    ``flicker_psd_1hz`` is the one-sided 1/f PSD evaluated at 1 Hz.
    ``misalignment`` is the transverse spin left by imperfect pumping, as a
    complex fraction of J_x (J'_y + i J'_z).
    """

    bias_field: float
    relaxation_rate: float
    readout_coupling: float = 1e6
    shot_psd: float = 0.0
    flicker_psd_1hz: float = 0.0
    detector_gain: float = 1.0
    misalignment: complex = 0j
    gamma: float = GAMMA_CS
    larmor_omega: float = dataclasses.field(init=False)

    def __post_init__(self):
        if self.relaxation_rate <= 0:
            raise ValueError("relaxation rate must be positive")
        if self.shot_psd < 0 or self.flicker_psd_1hz < 0:
            raise ValueError("noise levels must be non-negative")
        object.__setattr__(self, "larmor_omega", larmor_frequency(self.bias_field, self.gamma))

    @classmethod
    def from_larmor_hz(cls, f_larmor, t2, **kwargs):
        gamma = kwargs.get("gamma", GAMMA_CS)
        return cls(bias_field=2 * math.pi * f_larmor / gamma, relaxation_rate=1.0 / t2, **kwargs)

    @property
    def t2(self):
        return 1.0 / self.relaxation_rate

    @property
    def larmor_hz(self):
        return self.larmor_omega / (2 * math.pi)

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def noiseless(self):
        return self.replace(shot_psd=0.0, flicker_psd_1hz=0.0)

    def as_dict(self):
        d = dataclasses.asdict(self)
        d["misalignment"] = [self.misalignment.real, self.misalignment.imag]
        return d


def pulsed_config(**kwargs):
    """Pulsed-mode operating point: 700 Hz Larmor frequency, T2 = 15 ms, noiseless."""
    return MagnetometerConfig.from_larmor_hz(700.0, T2_DARK, **kwargs)


def continuous_config(**kwargs):
    """Continuous-mode operating point: 410 Hz Larmor frequency, T2 = 0.44 ms, noiseless."""
    return MagnetometerConfig.from_larmor_hz(410.0, T2_CONTINUOUS, **kwargs)
