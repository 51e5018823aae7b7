"""Optically pumped magnetometer simulator and signal recovery for nerve-impulse fields."""

from .physics import (AtomEnsemble, MagnetometerConfig, PhysicalConstants, continuous_config,
                      density_at_temperature, ensemble_spin, larmor_frequency, pulsed_config)
from .fields import (FieldWaveform, NerveTemplateParams, calibration_waveform, fourier_component,
                     invert_wire, nerve_waveform, wire_field)
from .spin import (DetectionRecord, SpinState, SpinTrajectory, continuous_record, evolve_mean,
                   evolve_stochastic, pulsed_sequence, readout_noise)
from .dsp import (CalibrationScale, FidFit, Spectrum, average_shots, calibrate_pulsed,
                  deconvolve, fit_fid, psd, snr)
from .metrology import (Measurement, conduction_velocity, noise_budget, pn_amplitude,
                        pn_pulsed_fourier, pn_sensitivity_continuous)

__version__ = "0.1.0"
