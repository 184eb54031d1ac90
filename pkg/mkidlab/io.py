"""
On-disk formats.

Text files are UTF-8 with "\\n" newlines and floats written with 17 significant
digits; JSON is indented with sorted keys. Together that makes reruns with the
same inputs byte-identical.

    sweep CSV          freq_hz,re,im            + <stem>.json sidecar (meta)
    QiSeries CSV       temperature_k,inv_qi,inv_qi_err + sidecar (f0_hz, resonator_id)
    IqTrace CSV        axis,i,q                 + sidecar (meta)
    records            <stem>.json header + <stem>.bin little-endian payload
                       (float64 phase or complex128 raw IQ); a CSV with one
                       record per row is accepted on input
    OFF CSV            index,off
"""

from __future__ import annotations

import json
import logging
import math
from pathlib import Path
from types import TracebackType
from typing import Any, Dict, List, Optional, Sequence, Tuple, Type

import numpy as np

from mkidlab.errors import DataFormatError, MkidError
from mkidlab.gap.model import QiSeries
from mkidlab.iqcal.chain import CalibrationData
from mkidlab.iqcal.geometry import IqTrace
from mkidlab.resonance.model import ComplexSweep

logger = logging.getLogger(__name__)

RECORD_FORMAT = "mkidlab-records"
RECORD_DTYPES = {"float64": "<f8", "complex128": "<c16"}


def ensure_dir(p: Path) -> None:
    p.mkdir(parents=True, exist_ok=True)


def write_text(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8", newline="\n")


def _jsonable(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def dumps_json(obj: Any) -> str:
    """Deterministic JSON: sorted keys, indent 2, non-finite floats as null."""
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _format_row(values: Sequence[float]) -> str:
    return ",".join(format(float(v), ".17g") for v in values)


def csv_text(header: Sequence[str], columns: Sequence[np.ndarray]) -> str:
    cols = [np.asarray(c, dtype=float).ravel() for c in columns]
    lines = [",".join(header)]
    lines.extend(_format_row(row) for row in zip(*cols))
    return "\n".join(lines) + "\n"


def read_json(path: Path) -> dict:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError as e:
        raise DataFormatError(f"File not found: {path}") from e
    except (OSError, json.JSONDecodeError) as e:
        raise DataFormatError(f"Cannot parse JSON {path}: {e}") from e
    if not isinstance(data, dict):
        raise DataFormatError(f"{path}: expected a JSON object")
    return data


def read_csv(path: Path, header: Sequence[str]) -> np.ndarray:
    """Numeric CSV with an exact header; returns (rows, len(header))."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise DataFormatError(f"File not found: {path}") from e
    except OSError as e:
        raise DataFormatError(f"Cannot read {path}: {e}") from e
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise DataFormatError(f"{path} is empty")
    found = [h.strip() for h in lines[0].split(",")]
    if found != list(header):
        raise DataFormatError(f"{path}: expected header {','.join(header)}, got {lines[0]}")
    try:
        rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
    except ValueError as e:
        raise DataFormatError(f"{path}: non-numeric value ({e})") from e
    if any(len(r) != len(header) for r in rows):
        raise DataFormatError(f"{path}: every row needs {len(header)} columns")
    data = np.asarray(rows, dtype=float).reshape(-1, len(header))
    if not np.all(np.isfinite(data)):
        raise DataFormatError(f"{path} contains non-finite values")
    return data


def _sidecar(path: Path) -> Path:
    return Path(path).with_suffix(".json")


# ----------------------------
# Output transaction
# ----------------------------

class OutputSet:
    """
    Collects the files a stage writes; if the stage fails, the files written so
    far are removed before the error propagates.
    """

    def __init__(self, outdir: Path) -> None:
        self.outdir = Path(outdir)
        self.written: List[Path] = []

    def __enter__(self) -> "OutputSet":
        if not self.outdir.is_dir():
            raise DataFormatError(
                f"Output directory does not exist: {self.outdir}\n"
                f"Create it first or choose an existing directory."
            )
        return self

    def __exit__(
        self,
        exc_type: Optional[Type[BaseException]],
        exc: Optional[BaseException],
        tb: Optional[TracebackType],
    ) -> bool:
        if exc_type is not None:
            for p in reversed(self.written):
                if p.exists():
                    p.unlink()
            if self.written:
                logger.warning("removed %d partial output files after %s", len(self.written), exc_type.__name__)
        return False

    def path(self, name: str) -> Path:
        p = self.outdir / name
        ensure_dir(p.parent)
        return p

    def _track(self, p: Path) -> Path:
        if p not in self.written:
            self.written.append(p)
        return p

    def text(self, name: str, text: str) -> Path:
        p = self._track(self.path(name))
        try:
            write_text(p, text)
        except OSError as e:
            raise DataFormatError(f"Cannot write {p}: {e}") from e
        return p

    def json(self, name: str, obj: Any) -> Path:
        return self.text(name, dumps_json(obj))

    def csv(self, name: str, header: Sequence[str], columns: Sequence[np.ndarray]) -> Path:
        return self.text(name, csv_text(header, columns))

    def binary(self, name: str, payload: bytes) -> Path:
        p = self._track(self.path(name))
        try:
            p.write_bytes(payload)
        except OSError as e:
            raise DataFormatError(f"Cannot write {p}: {e}") from e
        return p

    def sweep(self, name: str, sweep: ComplexSweep) -> Path:
        self.json(Path(name).with_suffix(".json").as_posix(), sweep.meta)
        return self.csv(name, ("freq_hz", "re", "im"), (sweep.freqs, sweep.s21.real, sweep.s21.imag))

    def qi_series(self, name: str, series: QiSeries) -> Path:
        self.json(Path(name).with_suffix(".json").as_posix(),
                  {"f0_hz": series.f0, "resonator_id": series.resonator_id, "meta": series.meta})
        return self.csv(name, ("temperature_k", "inv_qi", "inv_qi_err"),
                        (series.temperatures, series.inv_qi, series.inv_qi_err))

    def iq_trace(self, name: str, trace: IqTrace) -> Path:
        self.json(Path(name).with_suffix(".json").as_posix(), trace.meta)
        return self.csv(name, ("axis", "i", "q"), (trace.axis, trace.i, trace.q))

    def records(self, name: str, samples: np.ndarray, sample_rate: float, meta: Optional[Dict[str, Any]] = None) -> Path:
        x = np.atleast_2d(np.asarray(samples))
        kind = "complex128" if np.iscomplexobj(x) else "float64"
        payload = Path(name).with_suffix(".bin")
        self.binary(payload.as_posix(), np.ascontiguousarray(x, dtype=RECORD_DTYPES[kind]).tobytes())
        return self.json(Path(name).with_suffix(".json").as_posix(), {
            "format": RECORD_FORMAT,
            "version": 1,
            "dtype": kind,
            "n_records": int(x.shape[0]),
            "length": int(x.shape[1]),
            "sample_rate": float(sample_rate),
            "payload": payload.name,
            "meta": meta or {},
        })

    def off_values(self, name: str, off: np.ndarray) -> Path:
        off = np.asarray(off, dtype=float)
        return self.csv(name, ("index", "off"), (np.arange(off.size), off))


# ----------------------------
# Readers
# ----------------------------

def _read_sidecar(path: Path) -> dict:
    side = _sidecar(path)
    return read_json(side) if side.exists() else {}


def read_sweep(path: Path) -> ComplexSweep:
    data = read_csv(path, ("freq_hz", "re", "im"))
    try:
        return ComplexSweep(data[:, 0], data[:, 1] + 1j * data[:, 2], meta=_read_sidecar(path))
    except MkidError as e:
        raise DataFormatError(f"{path}: {e}") from e


def read_sweep_dir(directory: Path) -> List[ComplexSweep]:
    """All sweep CSVs of a directory, ordered by the temperature_k of their sidecars."""
    directory = Path(directory)
    paths = sorted(p for p in directory.glob("*.csv"))
    if not paths:
        raise DataFormatError(f"No sweep CSV files in {directory}")
    sweeps = [read_sweep(p) for p in paths]
    missing = [p.name for p, s in zip(paths, sweeps) if "temperature_k" not in s.meta]
    if missing:
        raise DataFormatError(f"Sweeps without temperature_k in their sidecar: {missing}")
    return sorted(sweeps, key=lambda s: float(s.meta["temperature_k"]))


def read_qi_series(path: Path) -> QiSeries:
    data = read_csv(path, ("temperature_k", "inv_qi", "inv_qi_err"))
    side = _read_sidecar(path)
    if "f0_hz" not in side:
        raise DataFormatError(f"{_sidecar(path)}: missing f0_hz (needed for the gap model)")
    try:
        return QiSeries(
            temperatures=data[:, 0],
            inv_qi=data[:, 1],
            inv_qi_err=data[:, 2],
            f0=float(side["f0_hz"]),
            resonator_id=str(side.get("resonator_id", Path(path).stem)),
            meta=dict(side.get("meta") or {}),
        )
    except MkidError as e:
        raise DataFormatError(f"{path}: {e}") from e


def read_iq_trace(path: Path) -> IqTrace:
    data = read_csv(path, ("axis", "i", "q"))
    return IqTrace(axis=data[:, 0], i=data[:, 1], q=data[:, 2], meta=_read_sidecar(path))


def read_records(path: Path) -> Tuple[np.ndarray, float, dict]:
    """
    Records as a (n_records, length) array, their sample rate and the header meta.

    A .csv input holds one real record per row and a sample_rate in its sidecar.
    """
    path = Path(path)
    if path.suffix == ".csv":
        side = _read_sidecar(path)
        if "sample_rate" not in side:
            raise DataFormatError(f"{_sidecar(path)}: missing sample_rate")
        try:
            x = np.loadtxt(path, delimiter=",", ndmin=2)
        except (OSError, ValueError) as e:
            raise DataFormatError(f"Cannot read records {path}: {e}") from e
        return x, float(side["sample_rate"]), dict(side.get("meta") or {})

    header = read_json(path)
    if header.get("format") != RECORD_FORMAT:
        raise DataFormatError(f"{path} is not a record header (format={header.get('format')!r})")
    try:
        kind = RECORD_DTYPES[header["dtype"]]
        shape = (int(header["n_records"]), int(header["length"]))
        sample_rate = float(header["sample_rate"])
        payload = path.parent / header["payload"]
    except (KeyError, TypeError, ValueError) as e:
        raise DataFormatError(f"{path}: malformed record header ({e})") from e
    try:
        x = np.fromfile(payload, dtype=kind)
    except OSError as e:
        raise DataFormatError(f"Cannot read record payload {payload}: {e}") from e
    if x.size != shape[0] * shape[1]:
        raise DataFormatError(f"{payload}: expected {shape[0]}x{shape[1]} samples, found {x.size}")
    x = x.reshape(shape)
    if not np.all(np.isfinite(x)):
        raise DataFormatError(f"{payload} contains non-finite samples")
    if not sample_rate > 0:
        raise DataFormatError(f"{path}: sample_rate must be > 0")
    return x, sample_rate, dict(header.get("meta") or {})


def read_off_values(path: Path) -> np.ndarray:
    return read_csv(path, ("index", "off"))[:, 1]


# ----------------------------
# Calibration data sets
# ----------------------------

CALIBRATION_FILES = {
    "delay_scan": "delay_scan.csv",
    "mixer_circle": "mixer_circle.csv",
    "wide_scan": "wide_scan.csv",
    "resonance": "resonance_scan.csv",
}


def write_calibration_data(out: OutputSet, subdir: str, data: CalibrationData) -> None:
    out.iq_trace(f"{subdir}/{CALIBRATION_FILES['delay_scan']}", data.delay_scan)
    mixer = np.asarray(data.mixer_circle, dtype=complex)
    out.iq_trace(
        f"{subdir}/{CALIBRATION_FILES['mixer_circle']}",
        IqTrace.from_complex(np.arange(mixer.size, dtype=float), mixer, {"frequency_hz": data.mixer_frequency}),
    )
    out.sweep(f"{subdir}/{CALIBRATION_FILES['wide_scan']}", data.wide_scan)
    out.sweep(f"{subdir}/{CALIBRATION_FILES['resonance']}", data.resonance)


def read_calibration_data(directory: Path) -> CalibrationData:
    directory = Path(directory)
    if not directory.is_dir():
        raise DataFormatError(f"Calibration directory not found: {directory}")
    mixer = read_iq_trace(directory / CALIBRATION_FILES["mixer_circle"])
    if "frequency_hz" not in mixer.meta:
        raise DataFormatError(f"{directory / 'mixer_circle.json'}: missing frequency_hz")
    return CalibrationData(
        delay_scan=read_iq_trace(directory / CALIBRATION_FILES["delay_scan"]),
        mixer_circle=mixer.z,
        mixer_frequency=float(mixer.meta["frequency_hz"]),
        wide_scan=read_sweep(directory / CALIBRATION_FILES["wide_scan"]),
        resonance=read_sweep(directory / CALIBRATION_FILES["resonance"]),
    )
