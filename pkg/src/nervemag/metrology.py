"""Projection-noise limits and derived physiological estimates with uncertainties."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .fields import invert_wire
from .physics import GAMMA_CS


class UnitError(TypeError):
    pass


_BASE = ("m", "kg", "s", "A")


@dataclass(frozen=True)
class Unit:
    """SI unit as integer exponents of (m, kg, s, A)."""

    m: int = 0
    kg: int = 0
    s: int = 0
    A: int = 0

    def _exps(self):
        return (self.m, self.kg, self.s, self.A)

    def __mul__(self, other):
        return Unit(*(a + b for a, b in zip(self._exps(), other._exps())))

    def __truediv__(self, other):
        return Unit(*(a - b for a, b in zip(self._exps(), other._exps())))

    def __pow__(self, k):
        return Unit(*(a * k for a in self._exps()))

    def __str__(self):
        if self in _NAMES:
            return _NAMES[self]
        parts = [f"{b}^{e}" if e != 1 else b for b, e in zip(_BASE, self._exps()) if e]
        return " ".join(parts) or "1"


DIMENSIONLESS = Unit()
METRE = Unit(m=1)
SECOND = Unit(s=1)
AMPERE = Unit(A=1)
TESLA = Unit(kg=1, s=-2, A=-1)
VELOCITY = METRE / SECOND

_NAMES = {
    DIMENSIONLESS: "1",
    METRE: "m",
    SECOND: "s",
    AMPERE: "A",
    TESLA: "T",
    VELOCITY: "m/s",
    TESLA * SECOND: "T s",
}


@dataclass(frozen=True)
class Measurement:
    """Value with a standard uncertainty, propagated to first order.

    Operands are treated as independent.
    """

    value: float
    sigma: float = 0.0
    unit: Unit = DIMENSIONLESS

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError("uncertainty must be non-negative")
        if not isinstance(self.unit, Unit):
            raise UnitError(f"unit must be a Unit, got {self.unit!r}")

    def _coerce(self, other):
        return other if isinstance(other, Measurement) else Measurement(float(other))

    def __add__(self, other):
        other = self._coerce(other)
        if other.unit != self.unit:
            raise UnitError(f"cannot add {other.unit} to {self.unit}")
        return Measurement(self.value + other.value, math.hypot(self.sigma, other.sigma), self.unit)

    def __sub__(self, other):
        other = self._coerce(other)
        return self + Measurement(-other.value, other.sigma, other.unit)

    def __mul__(self, other):
        other = self._coerce(other)
        v = self.value * other.value
        s = math.hypot(self.sigma * other.value, other.sigma * self.value)
        return Measurement(v, s, self.unit * other.unit)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        if other.value == 0:
            raise ZeroDivisionError("division by a zero-valued measurement")
        v = self.value / other.value
        s = math.hypot(self.sigma / other.value, self.value * other.sigma / other.value**2)
        return Measurement(v, s, self.unit / other.unit)

    @property
    def relative(self):
        return self.sigma / abs(self.value) if self.value else math.inf

    def to(self, unit):
        if unit != self.unit:
            raise UnitError(f"cannot express {self.unit} as {unit}")
        return self.value

    def format(self, scale=1.0):
        """Concise ``value(sigma)`` notation, rounded by the PDG rule."""
        return concise(self.value / scale, self.sigma / scale)

    def __str__(self):
        return f"{self.format()} {self.unit}"


def concise(value, sigma):
    """Format ``value(sigma)``.

    The uncertainty keeps two significant digits when its leading three
    digits are 100-354, one digit for 355-949, and is rounded up to two
    digits of the next decade for 950-999. The value is rounded to the
    same decimal place.
    """
    if sigma == 0:
        return f"{value:g}"
    exp = math.floor(math.log10(sigma))
    lead = int(round(sigma / 10 ** (exp - 2)))
    if lead >= 1000:
        exp, lead = exp + 1, lead // 10
    if lead < 355:
        digits = 2
    elif lead < 950:
        digits = 1
    else:
        exp, digits = exp + 1, 2
    place = exp - digits + 1
    s_int = int(round(sigma / 10**place))
    v = round(value / 10**place) * 10**place
    decimals = max(-place, 0)
    if place >= 0:
        return f"{v:.0f}({s_int * 10**place if place > 0 else s_int})"
    return f"{v:.{decimals}f}({s_int})"


def pn_pulsed_fourier(jx, gamma=GAMMA_CS):
    """Projection-noise uncertainty of |B(Omega)| in pulsed mode, T s."""
    if not jx > 0:
        raise ValueError("total spin J_x must be positive")
    return 1.0 / (gamma * math.sqrt(2.0 * jx))


def pn_amplitude(jx, tau, gamma=GAMMA_CS):
    """Projection-noise limited amplitude of a sinusoid lasting ``tau``, T."""
    if not jx > 0 or not tau > 0:
        raise ValueError("J_x and tau must be positive")
    return 1.0 / (gamma * math.sqrt(jx / 2.0) * tau)


def pn_sensitivity_continuous(jx, t2, gamma=GAMMA_CS):
    """Projection-noise limited sensitivity for T_tot = tau = T2, T/sqrt(Hz)."""
    if not jx > 0 or not t2 > 0:
        raise ValueError("J_x and T2 must be positive")
    return 1.0 / (gamma * math.sqrt(t2 * jx / 2.0))


def conduction_velocity(distance, delta_t):
    """Conduction velocity from path length and arrival delay."""
    if distance.unit != METRE or delta_t.unit != SECOND:
        raise UnitError("distance must be in metres and delay in seconds")
    if not delta_t.value > 0:
        raise ValueError("arrival delay must be positive")
    return distance / delta_t


def axial_current(field, distance):
    """Infinite-wire current estimate with first-order uncertainty."""
    if field.unit != TESLA or distance.unit != METRE:
        raise UnitError("field must be in tesla and distance in metres")
    value = invert_wire(field.value, distance.value)
    rel = math.hypot(field.relative if field.value else 0.0,
                     distance.sigma / distance.value)
    return Measurement(value, abs(value) * rel, AMPERE)


class BudgetError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseBudget:
    """Quadrature split of a total uncertainty into PN, photon shot and classical parts.

    ``*_variance`` entries are shares of the total variance (they sum to 1);
    ``*_amplitude`` entries are component/total ratios.
    """

    total: float
    pn: float
    shot: float
    classical: float

    @property
    def pn_variance(self):
        return (self.pn / self.total) ** 2

    @property
    def shot_variance(self):
        return (self.shot / self.total) ** 2

    @property
    def classical_variance(self):
        return (self.classical / self.total) ** 2

    @property
    def pn_amplitude(self):
        return self.pn / self.total

    @property
    def shot_amplitude(self):
        return self.shot / self.total

    @property
    def classical_amplitude(self):
        return self.classical / self.total

    def recompose(self):
        return math.sqrt(self.pn**2 + self.shot**2 + self.classical**2)

    def as_dict(self):
        return {
            "total": self.total, "pn": self.pn, "shot": self.shot, "classical": self.classical,
            "pn_variance_fraction": self.pn_variance,
            "shot_variance_fraction": self.shot_variance,
            "classical_variance_fraction": self.classical_variance,
            "pn_amplitude_fraction": self.pn_amplitude,
            "shot_amplitude_fraction": self.shot_amplitude,
            "classical_amplitude_fraction": self.classical_amplitude,
        }


def noise_budget(total, pn, shot_fraction):
    """Split ``total`` given the PN amplitude and the shot-noise variance share.

    The classical part takes whatever variance remains.
    """
    if total <= 0 or pn < 0 or not 0 <= shot_fraction <= 1:
        raise BudgetError("need total > 0, pn >= 0 and 0 <= shot_fraction <= 1")
    rest = 1.0 - (pn / total) ** 2 - shot_fraction
    if rest < -1e-12:
        raise BudgetError("components exceed the total in quadrature")
    rest = max(rest, 0.0)
    return NoiseBudget(total, pn, total * math.sqrt(shot_fraction), total * math.sqrt(rest))
