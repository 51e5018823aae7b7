"""Independent reference implementations used only by the tests.

None of these share code with the package: the Bloch oracle integrates the
full three-dimensional lab-frame equations with classical RK4, the vapour
density uses a different published vapour-pressure fit, and the spectral
references integrate with adaptive quadrature.
"""

import math

import numpy as np
from scipy import integrate

GAMMA = 2.20e10
K_B = 1.380649e-23


def bloch_rk4(jx, gamma, bias, relax, by, bz, dt, substeps=8):
    """Lab-frame J(t) on the cell edges for piecewise-constant transverse fields.

    Integrates dJ/dt = gamma B x J - relax (0, J_y, J_z) with B = (bias,
    B_y, B_z); the longitudinal component is kept undamped, as pumping holds
    it. Returns an array of shape (n + 1, 3).
    """
    by = np.asarray(by, dtype=float)
    bz = np.asarray(bz, dtype=float)
    h = dt / substeps
    state = np.array([jx, 0.0, 0.0])
    out = [state.copy()]

    def deriv(j, b):
        d = gamma * np.cross(b, j)
        d[1:] -= relax * j[1:]
        return d

    for k in range(len(by)):
        b = np.array([bias, by[k], bz[k]])
        for _ in range(substeps):
            k1 = deriv(state, b)
            k2 = deriv(state + 0.5 * h * k1, b)
            k3 = deriv(state + 0.5 * h * k2, b)
            k4 = deriv(state + h * k3, b)
            state = state + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out.append(state.copy())
    return np.array(out)


def cs_vapor_pressure_torr(temp_k):
    """Nesmeyanov fit for liquid cesium (torr)."""
    return 10 ** (8.22127 - 4006.048 / temp_k - 0.00060194 * temp_k - 0.19623 * math.log10(temp_k))


def cs_density_ratio(t1_c, t2_c):
    """Ratio of saturated number densities n(t2)/n(t1) from the ideal gas law."""
    def n(tc):
        tk = tc + 273.15
        return cs_vapor_pressure_torr(tk) * 133.322368 / (K_B * tk)
    return n(t2_c) / n(t1_c)


def pn_fourier_limit(jx, gamma=GAMMA):
    return 1.0 / (gamma * math.sqrt(2.0 * jx))


def pn_continuous_limit(jx, t2, gamma=GAMMA):
    return 1.0 / (gamma * math.sqrt(t2 * jx / 2.0))


def damped_sine_psd(amplitude, gamma, omega, theta, window):
    """(1/T)|int_0^T A sin(omega t + theta) e^{-gamma t} e^{-i omega t} dt|^2 by quadrature."""
    def part(fn):
        return integrate.quad(fn, 0.0, window, limit=400)[0]
    f = lambda t: amplitude * math.sin(omega * t + theta) * math.exp(-gamma * t)  # noqa: E731
    re = part(lambda t: f(t) * math.cos(omega * t))
    im = part(lambda t: -f(t) * math.sin(omega * t))
    return (re * re + im * im) / window


def reference_peak_formula(amplitude, gamma, window):
    """|A|^2 (1 - e^{-Gamma T})^2 / (4 Gamma^2) in its reference form, with no 1/T."""
    return amplitude**2 * (1.0 - math.exp(-gamma * window)) ** 2 / (4.0 * gamma**2)


def fid_amplitude_crlb(amplitude, gamma, omega, phase, dt, n, sigma):
    """Cramer-Rao bound on the FID amplitude with white Gaussian noise ``sigma``."""
    t = np.arange(n) * dt
    env = np.exp(-gamma * t)
    s, c = np.sin(omega * t + phase), np.cos(omega * t + phase)
    jac = np.column_stack([
        env * s,                        # d/dA
        amplitude * t * env * c,        # d/domega
        amplitude * env * c,            # d/dphase
        -amplitude * t * env * s,       # d/dgamma
    ])
    fisher = jac.T @ jac / sigma**2
    return math.sqrt(np.linalg.inv(fisher)[0, 0])


def one_period_fourier(b0, omega):
    """|int_0^{2 pi/omega} b0 sin(omega t) e^{-i omega t} dt| = pi b0 / omega."""
    return math.pi * b0 / omega
