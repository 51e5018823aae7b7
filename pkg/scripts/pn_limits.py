"""Projection-noise limits versus cell temperature.

    python3 scripts/pn_limits.py [T1 T2 ...]
"""

import sys

from nervemag import metrology, physics


def main(temps):
    print(f"{'T (degC)':>8} {'n (1/m^3)':>10} {'J_x':>10} {'dB(Omega) pT ms':>16} "
          f"{'dB 2 ms (pT)':>13} {'fT/sqrt(Hz)':>12}")
    for t in temps:
        n = physics.density_at_temperature(t)
        jx = physics.ensemble_spin(n, physics.CELL_DIAMETER)
        print(f"{t:8.1f} {n:10.3e} {jx:10.3e} {metrology.pn_pulsed_fourier(jx) * 1e15:16.4f} "
              f"{metrology.pn_amplitude(jx, 2e-3) * 1e12:13.4f} "
              f"{metrology.pn_sensitivity_continuous(jx, physics.T2_CONTINUOUS) * 1e15:12.2f}")


if __name__ == "__main__":
    main([float(a) for a in sys.argv[1:]] or [20.0, 22.0, 30.0, 37.0, 45.0])
