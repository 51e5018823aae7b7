"""CSV and key-value file formats.

Records and spectra carry ``# key = json`` comment lines ahead of the
column header; waveform files have a single header line. Floats are
written with 17 significant digits so reading a file back recovers every
value exactly.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .dsp import Spectrum
from .fields import FieldWaveform
from .spin import DetectionRecord

FLOAT_FMT = "%.17g"


class FormatError(ValueError):
    """A file exists but does not parse as the expected format."""


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _write_table(path, columns, names, meta=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for key, value in (meta or {}).items():
        lines.append(f"# {key} = {json.dumps(_jsonable(value), sort_keys=True)}")
    lines.append(",".join(names))
    body = np.column_stack(columns)
    rows = [",".join(FLOAT_FMT % v for v in row) for row in body]
    path.write_text("\n".join(lines + rows) + "\n")
    return path


def _read_table(path):
    path = Path(path)
    meta = {}
    header = None
    rows = []
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                if line.startswith("#"):
                    key, _, value = line[1:].partition("=")
                    meta[key.strip()] = json.loads(value)
                elif header is None:
                    header = [h.strip() for h in line.split(",")]
                else:
                    rows.append([float(v) for v in line.split(",")])
            except ValueError as exc:
                raise FormatError(f"{path}: cannot parse line {line[:60]!r}") from exc
    if header is None:
        raise FormatError(f"{path}: missing column header")
    if any(len(r) != len(header) for r in rows):
        raise FormatError(f"{path}: rows do not match the {len(header)}-column header")
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    return header, data, meta


def write_record_csv(path, record, extra=None):
    """Two-column record file (time_s, signal); 1-D records only."""
    rec = record.mean() if record.samples.ndim == 2 else record
    meta = {"sequence": rec.sequence, "dt": rec.dt, "start_time": rec.start_time}
    meta.update(rec.metadata)
    meta.update(extra or {})
    return _write_table(path, [rec.times, rec.samples], ["time_s", "signal"], meta)


def read_record_csv(path):
    header, data, meta = _read_table(path)
    if header != ["time_s", "signal"]:
        raise FormatError(f"{path}: expected columns time_s,signal, got {header}")
    times, samples = data[:, 0], data[:, 1]
    dt = meta.pop("dt", None)
    if dt is None:
        dt = float(np.mean(np.diff(times)))
    start = meta.pop("start_time", float(times[0]))
    sequence = meta.pop("sequence", "continuous")
    return DetectionRecord(samples, dt, sequence, start, meta)


def write_waveform_csv(path, waveform):
    """(time_s, field_T) at cell midpoints, one header line."""
    return _write_table(path, [waveform.times, waveform.samples], ["time_s", "field_T"])


def read_waveform_csv(path, axis="z"):
    header, data, _ = _read_table(path)
    if header != ["time_s", "field_T"]:
        raise FormatError(f"{path}: expected columns time_s,field_T, got {header}")
    t, b = data[:, 0], data[:, 1]
    dt = float((t[-1] - t[0]) / (t.size - 1)) if t.size > 1 else 1.0
    return FieldWaveform(b, dt, float(t[0] - 0.5 * dt), axis)


def write_spectrum_csv(path, spectrum, extra=None):
    meta = {"window_length": spectrum.window_length, "n_records": spectrum.n_records,
            "nfft": spectrum.nfft}
    meta.update(extra or {})
    return _write_table(path, [spectrum.frequencies, spectrum.psd_values], ["freq_Hz", "psd"], meta)


def read_spectrum_csv(path):
    header, data, meta = _read_table(path)
    if header != ["freq_Hz", "psd"]:
        raise FormatError(f"{path}: expected columns freq_Hz,psd, got {header}")
    return Spectrum(data[:, 0], data[:, 1], meta.get("window_length", float("nan")),
                    meta.get("n_records", 1), meta.get("nfft", 0))


def _kv_value(v):
    if isinstance(v, (float, np.floating)):
        return json.dumps(float(v))
    if isinstance(v, (dict, list, tuple)):
        return json.dumps(_jsonable(v), sort_keys=True)
    return str(v)


def write_kv(path, items):
    """Flat ``key = value`` text file; insertion order is preserved."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{k} = {_kv_value(v)}\n" for k, v in items.items()))
    return path


def read_kv(path):
    out = {}
    for line in Path(path).read_text().splitlines():
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"{path}: expected 'key = value', got {line[:60]!r}")
        value = value.strip()
        try:
            out[key.strip()] = json.loads(value)
        except json.JSONDecodeError:
            out[key.strip()] = value
    return out
