"""Experiment configuration: INI files with SI units spelled out in the keys.

Example::

    [run]
    mode = pulsed
    seed = 7
    n_avg = 1000

    [ensemble]
    temperature_celsius = 22
    polarization = 1.0

Unknown sections or keys are rejected so that a misspelt unit suffix
cannot silently fall back to a default.
"""

from __future__ import annotations

import configparser
import dataclasses
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from . import physics
from .fields import NerveTemplateParams


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunSection:
    mode: str = "pulsed"
    scenario: str = "nerve"  # nerve | calibration | null
    seed: int = 0
    n_avg: int = 1000
    n_cal: int = 0  # 0 -> same as n_avg
    null_repeats: int = 16
    out_dir: str = "out"


@dataclass(frozen=True)
class EnsembleSection:
    density_per_m3: float = 0.0  # 0 -> derived from temperature
    temperature_celsius: float = physics.ROOM_TEMPERATURE_C
    cell_diameter_m: float = physics.CELL_DIAMETER
    polarization: float = 1.0

    def build(self):
        density = self.density_per_m3 or physics.density_at_temperature(self.temperature_celsius)
        return physics.AtomEnsemble(density, self.cell_diameter_m, self.polarization)


@dataclass(frozen=True)
class MagnetometerSection:
    larmor_hz: float = 0.0  # 0 -> mode default (700 Hz pulsed, 410 Hz continuous)
    t2_s: float = 0.0  # 0 -> mode default (15 ms pulsed, 0.44 ms continuous)
    readout_coupling_per_s: float = 1e6
    detector_gain: float = 1.0
    shot_psd: float = -1.0  # < 0 -> derived from the noise budget
    flicker_psd_1hz: float = -1.0  # < 0 -> derived from the noise budget
    misalignment_re: float = 0.0
    misalignment_im: float = 0.0
    # single-shot noise target: T s (pulsed) or T/sqrt(Hz) (continuous); 0 -> mode default
    noise_total: float = 0.0
    shot_variance_fraction: float = 0.5


@dataclass(frozen=True)
class WaveformSection:
    dt_s: float = 10e-6
    cal_amplitude_tesla: float = 1e-9
    cal_freq_hz: float = 0.0  # 0 -> Larmor frequency
    cal_onset_s: float = 5e-3
    nerve_peak_to_peak_tesla: float = 7e-12
    nerve_duration_s: float = 2e-3
    nerve_onset_s: float = 6.2e-3
    nerve_asymmetry: float = 0.5
    nerve_axis: str = "y"
    nerve_fourier_tesla_s: float = 4.1e-15  # pulsed mode target |B(Omega)|; 0 -> keep ptp
    artifact_amplitude_tesla: float = 5e-12
    artifact_duration_s: float = 50e-6
    artifact_time_s: float = 5.5e-3

    def nerve_params(self, **overrides):
        kw = dict(peak_to_peak=self.nerve_peak_to_peak_tesla, duration=self.nerve_duration_s,
                  onset=self.nerve_onset_s, asymmetry=self.nerve_asymmetry,
                  artifact_amplitude=self.artifact_amplitude_tesla,
                  artifact_duration=self.artifact_duration_s, artifact_time=self.artifact_time_s)
        kw.update(overrides)
        return NerveTemplateParams(**kw)


@dataclass(frozen=True)
class AnalysisSection:
    probe_duration_s: float = 10e-3
    record_duration_s: float = 40e-3
    psd_window_s: float = 0.0  # 0 -> 8 ms pulsed, 37.1 ms continuous
    regularization: float = 1e-3
    cutoff_hz: float = 3e3
    floor_band_hz: float = 30.0
    wire_distance_m: float = 4.5e-3
    path_length_m: float = 0.05
    path_length_sigma_m: float = 0.01
    limit_temperatures_celsius: tuple = (22.0, 37.0)


SECTIONS = {
    "run": RunSection,
    "ensemble": EnsembleSection,
    "magnetometer": MagnetometerSection,
    "waveform": WaveformSection,
    "analysis": AnalysisSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    run: RunSection = field(default_factory=RunSection)
    ensemble: EnsembleSection = field(default_factory=EnsembleSection)
    magnetometer: MagnetometerSection = field(default_factory=MagnetometerSection)
    waveform: WaveformSection = field(default_factory=WaveformSection)
    analysis: AnalysisSection = field(default_factory=AnalysisSection)

    def __post_init__(self):
        if self.run.mode not in ("pulsed", "continuous"):
            raise ConfigError(f"mode must be 'pulsed' or 'continuous', got {self.run.mode!r}")
        if self.run.scenario not in ("nerve", "calibration", "null"):
            raise ConfigError(f"unknown scenario {self.run.scenario!r}")
        if self.run.n_avg < 1:
            raise ConfigError("n_avg must be at least 1")
        if self.waveform.nerve_axis not in ("y", "z"):
            raise ConfigError("nerve_axis must be 'y' or 'z'")

    def with_run(self, **changes):
        return dataclasses.replace(self, run=dataclasses.replace(self.run, **changes))

    def with_section(self, name, **changes):
        return dataclasses.replace(self, **{name: dataclasses.replace(getattr(self, name), **changes)})

    @property
    def n_cal(self):
        return self.run.n_cal or self.run.n_avg

    @property
    def psd_window(self):
        if self.analysis.psd_window_s:
            return self.analysis.psd_window_s
        return 8e-3 if self.run.mode == "pulsed" else 37.1e-3

    def as_dict(self):
        return {name: dataclasses.asdict(getattr(self, name)) for name in SECTIONS}

    def snapshot(self):
        """Stable one-line JSON used in output headers."""
        return json.dumps(self.as_dict(), sort_keys=True, default=list)


def _convert(raw, typ, where):
    try:
        if typ is bool:
            return raw.strip().lower() in ("1", "true", "yes", "on")
        if typ is tuple:
            return tuple(float(v) for v in raw.replace(",", " ").split())
        return typ(raw)
    except ValueError as exc:
        raise ConfigError(f"{where}: cannot parse {raw!r} as {typ.__name__}") from exc


def load_config(path):
    """Read an INI experiment file; missing keys take the dataclass defaults."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    path = Path(path)
    try:
        with path.open() as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    sections = {}
    for name in parser.sections():
        if name not in SECTIONS:
            raise ConfigError(f"{path}: unknown section [{name}]")
        cls = SECTIONS[name]
        hints = typing.get_type_hints(cls)
        kwargs = {}
        for key, raw in parser.items(name):
            if key not in hints:
                raise ConfigError(f"{path}: unknown key '{key}' in [{name}]")
            kwargs[key] = _convert(raw, hints[key], f"{path} [{name}] {key}")
        sections[name] = cls(**kwargs)
    return ExperimentConfig(**sections)


def dump_config(config, path=None):
    """INI text for ``config``; written to ``path`` when given."""
    lines = []
    for name in SECTIONS:
        lines.append(f"[{name}]")
        for key, value in dataclasses.asdict(getattr(config, name)).items():
            if isinstance(value, (tuple, list)):
                value = " ".join(repr(float(v)) for v in value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{key} = {value}")
        lines.append("")
    text = "\n".join(lines)
    if path is not None:
        Path(path).write_text(text)
    return text
