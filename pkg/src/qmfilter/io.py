"""CSV readers/writers.

Every file starts with ``# key=value`` comment lines. Run settings are
written as ``# config.<key>=<value>`` so an output file can be fed back as
``--config`` to repeat the run; values are JSON encoded.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .core import SnrSeries, TimeSeries
from .sigproc import PsdEstimate


class DataError(ValueError):
    """Input file missing or malformed."""


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def header_lines(config: Mapping | None = None, **extra) -> list[str]:
    lines = [f"# {k}={json.dumps(_plain(v))}" for k, v in extra.items()]
    for k, v in (config or {}).items():
        lines.append(f"# config.{k}={json.dumps(_plain(v))}")
    return lines


def _plain(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    return v


def _decode(val: str):
    try:
        return json.loads(val)
    except json.JSONDecodeError:
        return val


def parse_header(text: str) -> tuple[dict, dict, list[str]]:
    """Split a file into (header fields, config fields, data lines)."""
    fields, config, body = {}, {}, []
    for line in text.splitlines():
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            key, sep, val = s[1:].strip().partition("=")
            if not sep:
                continue
            key = key.strip()
            if key.startswith("config."):
                config[key[len("config."):]] = _decode(val.strip())
            else:
                fields[key] = _decode(val.strip())
        else:
            body.append(s)
    return fields, config, body


def write_atomic(path: str | os.PathLike, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None


def _table(body: list[str], columns: Iterable[str], path="<text>") -> list[list[str]]:
    columns = list(columns)
    if not body or [c.strip() for c in body[0].split(",")] != columns:
        raise DataError(f"{path}: expected header line {','.join(columns)}")
    rows = [[c.strip() for c in line.split(",")] for line in body[1:]]
    for i, row in enumerate(rows, 2):
        if len(row) != len(columns):
            raise DataError(f"{path}: row {i} has {len(row)} fields, expected {len(columns)}")
    return rows


def _floats(rows, col, path, allow_empty=False):
    out = []
    for row in rows:
        v = row[col]
        if allow_empty and v == "":
            out.append(np.nan)
            continue
        try:
            out.append(float(v))
        except ValueError:
            raise DataError(f"{path}: cannot parse number {v!r}") from None
    return np.array(out)


# --- time series -----------------------------------------------------------

def dumps_series(ts: TimeSeries, config: Mapping | None = None, **extra) -> str:
    lines = header_lines(config, sample_rate=float(ts.sample_rate), epoch=float(ts.epoch), **extra)
    lines.append("index,time_s,value")
    times = ts.times
    lines += [f"{i},{_fmt(t)},{_fmt(v)}" for i, (t, v) in enumerate(zip(times, ts.samples))]
    return "\n".join(lines) + "\n"


def loads_series(text: str, path="<text>") -> TimeSeries:
    fields, _, body = parse_header(text)
    rows = _table(body, ["index", "time_s", "value"], path)
    if not rows:
        raise DataError(f"{path}: no samples")
    values = _floats(rows, 2, path)
    times = _floats(rows, 1, path)
    rate = fields.get("sample_rate")
    if rate is None:
        if times.size < 2:
            raise DataError(f"{path}: cannot infer sample rate from one sample")
        rate = 1.0 / float(np.median(np.diff(times)))
    epoch = fields.get("epoch", float(times[0]))
    try:
        return TimeSeries(values, float(rate), float(epoch))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def read_series(path) -> TimeSeries:
    return loads_series(read_text(path), path)


# --- PSD -------------------------------------------------------------------

def dumps_psd(psd: PsdEstimate, config: Mapping | None = None) -> str:
    lines = header_lines(config, segment_length=int(psd.segment_length), window=psd.window)
    lines.append("freq_hz,power")
    lines += [f"{_fmt(f)},{_fmt(p)}" for f, p in zip(psd.frequencies, psd.power)]
    return "\n".join(lines) + "\n"


def loads_psd(text: str, path="<text>") -> PsdEstimate:
    fields, _, body = parse_header(text)
    rows = _table(body, ["freq_hz", "power"], path)
    try:
        return PsdEstimate(_floats(rows, 0, path), _floats(rows, 1, path),
                           int(fields.get("segment_length", len(rows))),
                           str(fields.get("window", "hann")))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


# --- SNR series --------------------------------------------------------------

def dumps_snr(series: SnrSeries, config: Mapping | None = None) -> str:
    meta = {f"meta.{k}": v for k, v in series.meta.items()}
    lines = header_lines(config, sample_rate=float(series.sample_rate),
                         epoch=float(series.epoch), **meta)
    lines.append("lag,time_s,snr,sigma")
    for e, t in zip(series.estimates, series.times):
        lines.append(f"{e.lag},{_fmt(t)},{_fmt(e.value)},{_fmt(e.sigma)}")
    return "\n".join(lines) + "\n"


def loads_snr(text: str, path="<text>") -> SnrSeries:
    fields, _, body = parse_header(text)
    rows = _table(body, ["lag", "time_s", "snr", "sigma"], path)
    lags = [int(r[0]) for r in rows]
    if lags != list(range(len(rows))):
        raise DataError(f"{path}: lags must be contiguous from 0")
    meta = {k[len("meta."):]: v for k, v in fields.items() if k.startswith("meta.")}
    values = _floats(rows, 2, path)
    sigmas = _floats(rows, 3, path, allow_empty=True)
    return SnrSeries.from_arrays(values, sigmas, meta=meta,
                                 sample_rate=fields.get("sample_rate", 1.0),
                                 epoch=fields.get("epoch", 0.0))


def read_snr(path) -> SnrSeries:
    return loads_snr(read_text(path), path)


# --- generic tables --------------------------------------------------------------

def dumps_table(columns: list[str], rows: Iterable[Iterable], config: Mapping | None = None,
                **extra) -> str:
    lines = header_lines(config, **extra)
    lines.append(",".join(columns))
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    return "\n".join(lines) + "\n"


def parse_config_file(path) -> dict:
    """``key=value`` lines; ``#`` lines count only as ``# config.key=value``."""
    out = {}
    for raw in read_text(path).splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key, sep, val = line[1:].strip().partition("=")
            if sep and key.strip().startswith("config."):
                out[key.strip()[len("config."):]] = _decode(val.strip())
            continue
        key, sep, val = line.partition("=")
        if sep:
            out[key.strip()] = _decode(val.strip())
    return out
