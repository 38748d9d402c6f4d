"""File formats and config parsing.

Everything crossing the file boundary is in Hz, seconds, millimetres and
radians (phase amplitudes may be written as multiples of pi, e.g. "0.76pi").
Floats are written with ``repr`` so that a write/read cycle is lossless.
"""
from __future__ import annotations

import csv
import json
import math
import struct
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

import numpy as np
import yaml

from .errors import InvalidInputError
from .model import TWO_PI, CorrelationGrid, EventSet, FringeModel, PerturbationSpec

EVENTS_MAGIC = "#fringecorr-events v1"
GRID_MAGIC = "#fringecorr-grid v1"
BINARY_MAGIC = b"FCG1"
META_SUFFIX = ".meta.yaml"


# --------------------------------------------------------------------------
# scalars


def parse_phase(value, key: str = "value") -> float:
    """Radians from a number or a multiple of pi ("0.76pi", "pi", "-0.25*pi")."""
    if isinstance(value, bool):
        raise InvalidInputError(f"{key}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        s = value.strip().lower().replace("π", "pi").replace(" ", "")
        if s.endswith("pi"):
            coef = s[:-2].rstrip("*")
            if coef in ("", "+", "-"):
                coef += "1"
            try:
                return float(coef) * math.pi
            except ValueError:
                raise InvalidInputError(f"{key}: cannot parse {value!r} as a phase") from None
        try:
            return float(s)
        except ValueError:
            pass
    raise InvalidInputError(f"{key}: cannot parse {value!r} as a phase")


def parse_fraction(value, key: str = "value") -> Fraction:
    """Exact rational from a decimal literal (used for frequencies in Hz)."""
    try:
        if isinstance(value, float):
            return Fraction(repr(value))
        return Fraction(str(value).strip())
    except (ValueError, ZeroDivisionError):
        raise InvalidInputError(f"{key}: {value!r} is not a decimal number") from None


def _fmt(x: float, digits: int | None = None) -> str:
    if digits is None:
        return repr(float(x))
    return f"{float(x):.{digits}g}"


# --------------------------------------------------------------------------
# events


def meta_path(path) -> Path:
    return Path(str(path) + META_SUFFIX)


def _plain(obj):
    if isinstance(obj, Mapping):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def write_events(path, events: EventSet, digits: int | None = None) -> None:
    """One "t,y" line per event plus a YAML sidecar with window and metadata.

    ``digits`` limits the significant digits; the default writes the shortest
    representation that reads back to the same double.
    """
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        fh.write(EVENTS_MAGIC + "\n")
        fh.write(f"#T_s={_fmt(events.T)},Y_mm={_fmt(events.Y)},n={events.n}\n")
        fh.write("#t_s,y_mm\n")
        for t, y in zip(events.t.tolist(), events.y.tolist()):
            fh.write(f"{_fmt(t, digits)},{_fmt(y, digits)}\n")
    meta = {"acquisition_time_s": events.T, "acquisition_length_mm": events.Y,
            "n_events": events.n, "metadata": _plain(dict(events.metadata))}
    with open(meta_path(path), "w") as fh:
        yaml.safe_dump(meta, fh, sort_keys=True)


def read_events(path) -> EventSet:
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"event file {path} does not exist")
    with open(path) as fh:
        first = fh.readline().rstrip("\n")
        if first != EVENTS_MAGIC:
            raise InvalidInputError(f"{path}: not an event file (header {first!r})")
        header = {}
        rows = []
        for lineno, line in enumerate(fh, start=2):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for part in line[1:].split(","):
                    if "=" in part:
                        k, v = part.split("=", 1)
                        header[k.strip()] = v.strip()
                continue
            try:
                t, y = line.split(",")
                rows.append((float(t), float(y)))
            except ValueError:
                raise InvalidInputError(f"{path}:{lineno}: malformed event line {line!r}")
    meta: dict[str, Any] = {}
    mp = meta_path(path)
    if mp.exists():
        with open(mp) as fh:
            side = yaml.safe_load(fh) or {}
        meta = side.get("metadata", {}) or {}
        header.setdefault("T_s", side.get("acquisition_time_s"))
        header.setdefault("Y_mm", side.get("acquisition_length_mm"))
    if not rows:
        raise InvalidInputError(f"{path}: event file holds no events")
    arr = np.array(rows, dtype=float)
    try:
        T = float(header["T_s"])
        Y = float(header["Y_mm"])
    except (KeyError, TypeError, ValueError):
        raise InvalidInputError(f"{path}: acquisition window (T_s, Y_mm) missing")
    return EventSet(arr[:, 0], arr[:, 1], T, Y, meta)


# --------------------------------------------------------------------------
# grids

def _grid_header(grid: CorrelationGrid) -> dict:
    return {"du_mm": grid.du, "dtau_s": grid.dtau, "tau_max_s": grid.tau_max,
            "u_max_mm": grid.u_max, "n_events": grid.n_events, "T_s": grid.T, "Y_mm": grid.Y,
            "n_u": grid.n_u, "n_tau": grid.n_tau, "normalized": grid.is_normalized,
            "zero_lag": grid.zero_lag_counts is not None,
            "layout": "row-major [i_u][i_tau]",
            "invalid": "valid mask 0; value written as nan"}


def _grid_from_header(h: dict, counts, values, valid, zl_counts, zl_values, zl_valid):
    return CorrelationGrid(counts, float(h["du_mm"]), float(h["dtau_s"]), float(h["tau_max_s"]),
                           float(h["u_max_mm"]), int(h["n_events"]), float(h["T_s"]),
                           float(h["Y_mm"]), values, valid, zl_counts, zl_values, zl_valid)


def _masked(values, valid):
    out = np.array(values, dtype=float)
    out[~np.asarray(valid, bool)] = np.nan
    return out


def _unmask(values):
    valid = np.isfinite(values)
    return np.where(valid, values, 0.0), valid


def write_grid(path, grid: CorrelationGrid, binary: bool = False) -> None:
    if binary:
        _write_grid_binary(path, grid)
        return
    h = _grid_header(grid)
    with open(path, "w", newline="\n") as fh:
        fh.write(GRID_MAGIC + "\n")
        for k, v in h.items():
            fh.write(f"#{k}={_fmt(v) if isinstance(v, float) else v}\n")

        def section(name, arr, fmt):
            fh.write(f"[{name}]\n")
            for row in np.atleast_2d(arr):
                fh.write(",".join(fmt(x) for x in row.tolist()) + "\n")

        section("counts", grid.counts, str)
        if grid.is_normalized:
            section("values", _masked(grid.values, grid.valid), _fmt)
        if grid.zero_lag_counts is not None:
            section("zero_lag_counts", grid.zero_lag_counts[None, :], str)
        if grid.zero_lag_values is not None:
            section("zero_lag_values", _masked(grid.zero_lag_values, grid.zero_lag_valid)[None, :],
                    _fmt)


def _write_grid_binary(path, grid: CorrelationGrid) -> None:
    h = _grid_header(grid)
    h["has_zero_lag_values"] = grid.zero_lag_values is not None
    head = json.dumps(h, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(np.asarray(grid.counts, "<i8").tobytes())
        if grid.is_normalized:
            fh.write(_masked(grid.values, grid.valid).astype("<f8").tobytes())
        if grid.zero_lag_counts is not None:
            fh.write(np.asarray(grid.zero_lag_counts, "<i8").tobytes())
        if grid.zero_lag_values is not None:
            fh.write(_masked(grid.zero_lag_values, grid.zero_lag_valid).astype("<f8").tobytes())


def _read_grid_binary(path) -> CorrelationGrid:
    data = Path(path).read_bytes()
    (hl,) = struct.unpack("<I", data[4:8])
    h = json.loads(data[8:8 + hl])
    pos = 8 + hl
    shape = (int(h["n_u"]), int(h["n_tau"]))

    def take(dtype, count):
        nonlocal pos
        arr = np.frombuffer(data, dtype=dtype, count=count, offset=pos)
        pos += arr.nbytes
        return arr.copy()

    try:
        counts = take("<i8", shape[0] * shape[1]).reshape(shape)
        values = valid = zlc = zlv = zlok = None
        if h["normalized"]:
            values, valid = _unmask(take("<f8", counts.size).reshape(shape))
        if h["zero_lag"]:
            zlc = take("<i8", shape[0])
        if h.get("has_zero_lag_values"):
            zlv, zlok = _unmask(take("<f8", shape[0]))
    except ValueError:
        raise InvalidInputError(f"{path}: truncated binary grid") from None
    return _grid_from_header(h, counts, values, valid, zlc, zlv, zlok)


def read_grid(path) -> CorrelationGrid:
    path = Path(path)
    if not path.exists():
        raise InvalidInputError(f"grid file {path} does not exist")
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == BINARY_MAGIC:
        return _read_grid_binary(path)
    with open(path) as fh:
        if fh.readline().rstrip("\n") != GRID_MAGIC:
            raise InvalidInputError(f"{path}: not a grid file")
        h: dict[str, str] = {}
        sections: dict[str, list[list[str]]] = {}
        cur = None
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                k, _, v = line[1:].partition("=")
                h[k] = v
            elif line.startswith("["):
                cur = line.strip("[]")
                sections[cur] = []
            elif cur is None:
                raise InvalidInputError(f"{path}: data before the first section")
            else:
                sections[cur].append(line.split(","))
    try:
        counts = np.array(sections["counts"], dtype=np.int64)
        values = valid = zlc = zlv = zlok = None
        if "values" in sections:
            values, valid = _unmask(np.array(sections["values"], dtype=float))
        if "zero_lag_counts" in sections:
            zlc = np.array(sections["zero_lag_counts"][0], dtype=np.int64)
        if "zero_lag_values" in sections:
            zlv, zlok = _unmask(np.array(sections["zero_lag_values"][0], dtype=float))
    except (KeyError, ValueError) as exc:
        raise InvalidInputError(f"{path}: malformed grid file ({exc})") from None
    return _grid_from_header(h, counts, values, valid, zlc, zlv, zlok)


# --------------------------------------------------------------------------
# tables


def write_table(path, columns: Mapping[str, Any]) -> None:
    """CSV with one column per entry; headers carry units, e.g. "frequency_hz"."""
    names = list(columns)
    cols = [np.atleast_1d(np.asarray(columns[n])) for n in names]
    n = max(c.size for c in cols) if cols else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for i in range(n):
            w.writerow([_cell(c[i]) if i < c.size else "" for c in cols])


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return _fmt(x)
    if isinstance(x, np.integer):
        return int(x)
    return x


def read_table(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidInputError(f"{path}: empty table")
    out = {}
    for j, name in enumerate(rows[0]):
        vals = [r[j] for r in rows[1:] if j < len(r) and r[j] != ""]
        try:
            out[name] = np.array(vals, dtype=float)
        except ValueError:
            out[name] = np.array(vals, dtype=object)
    return out


def write_spectrum(path, frequencies_rad, magnitudes) -> None:
    write_table(path, {"frequency_hz": np.asarray(frequencies_rad) / TWO_PI,
                       "magnitude_dimensionless": magnitudes})


def write_report(path, entries: Mapping[str, tuple[Any, str]]) -> None:
    """Key/value/unit CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "value", "unit"])
        for k, (v, unit) in entries.items():
            w.writerow([k, _cell(v), unit])


def read_report(path) -> dict[str, str]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return {r[0]: r[1] for r in rows}


# --------------------------------------------------------------------------
# configs and presets


class Config:
    """Read-only view on a nested mapping that names the offending key on errors."""

    def __init__(self, data: Mapping, path: str = ""):
        if not isinstance(data, Mapping):
            raise InvalidInputError(f"{path or 'config'}: expected a mapping")
        self._data = data
        self._path = path

    def _key(self, key):
        return f"{self._path}.{key}" if self._path else key

    def __contains__(self, key):
        return key in self._data

    def raw(self) -> dict:
        return dict(self._data)

    def section(self, key, required: bool = True) -> "Config | None":
        if key not in self._data:
            if required:
                raise InvalidInputError(f"{self._key(key)}: missing section")
            return None
        return Config(self._data[key], self._key(key))

    def get(self, key, default=None, required: bool = False):
        if key not in self._data:
            if required:
                raise InvalidInputError(f"{self._key(key)}: missing key")
            return default
        return self._data[key]

    def number(self, key, default=None, positive: bool = False, integer: bool = False):
        v = self.get(key, default, required=default is None)
        try:
            if isinstance(v, bool):
                raise TypeError
            x = float(v)
        except (TypeError, ValueError):
            raise InvalidInputError(f"{self._key(key)}: expected a number, got {v!r}") from None
        if not math.isfinite(x) or (positive and x <= 0):
            raise InvalidInputError(f"{self._key(key)}: must be a positive finite number")
        if integer:
            if x != int(x):
                raise InvalidInputError(f"{self._key(key)}: expected an integer, got {v!r}")
            return int(x)
        return x

    def phase(self, key, default=None):
        v = self.get(key, default, required=default is None)
        return parse_phase(v, self._key(key))

    def items(self, key) -> list["Config"]:
        v = self.get(key, required=True)
        if not isinstance(v, list):
            raise InvalidInputError(f"{self._key(key)}: expected a list")
        return [Config(x, f"{self._key(key)}[{i}]") for i, x in enumerate(v)]


def preset_names() -> list[str]:
    root = resources.files("fringecorr") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def _deep_merge(base: dict, top: dict) -> dict:
    out = dict(base)
    for k, v in top.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def _load_raw(source, depth: int = 0) -> dict:
    if depth > 8:
        raise InvalidInputError("config 'base' chain is too deep")
    p = Path(str(source))
    if p.suffix in (".yaml", ".yml") or p.exists():
        if not p.exists():
            raise InvalidInputError(f"config file {p} does not exist")
        text = p.read_text()
    else:
        res = resources.files("fringecorr") / "presets" / f"{source}.yaml"
        if not res.is_file():
            raise InvalidInputError(
                f"unknown preset {source!r}; available: {', '.join(preset_names())}")
        text = res.read_text()
    try:
        data = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise InvalidInputError(f"{source}: invalid YAML ({exc})") from None
    if not isinstance(data, dict):
        raise InvalidInputError(f"{source}: top level must be a mapping")
    base = data.pop("base", None)
    if base is not None:
        data = _deep_merge(_load_raw(base, depth + 1), data)
    return data


def load_config(source, overrides: Mapping[str, Any] | None = None) -> Config:
    """Config from a YAML path or a preset name, with dotted-key overrides.

    A top-level ``base`` key names another preset or file that is loaded
    first and deep-merged underneath.
    """
    data = _load_raw(source)
    for key, value in (overrides or {}).items():
        _set_dotted(data, key, value)
    return Config(data)


def _set_dotted(data, key: str, value):
    parts = key.split(".")
    cur = data
    for i, part in enumerate(parts[:-1]):
        nxt = parts[i + 1]
        if isinstance(cur, list):
            try:
                cur = cur[int(part)]
            except (ValueError, IndexError):
                raise InvalidInputError(f"override {key}: bad list index {part!r}") from None
            continue
        if part not in cur:
            cur[part] = [] if nxt.isdigit() else {}
        cur = cur[part]
    last = parts[-1]
    if isinstance(cur, list):
        try:
            cur[int(last)] = value
        except (ValueError, IndexError):
            raise InvalidInputError(f"override {key}: bad list index {last!r}") from None
    else:
        cur[last] = value


def parse_override(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise InvalidInputError(f"override {text!r} is not key=value")
    k, v = text.split("=", 1)
    return k.strip(), yaml.safe_load(v)


def model_from_config(cfg: Config) -> FringeModel:
    m = cfg.section("model")
    return FringeModel(m.number("contrast"), m.number("period_mm", positive=True))


def tones_from_config(cfg: Config) -> PerturbationSpec:
    """Tone list; frequencies in Hz, amplitudes and phases in rad or multiples of pi."""
    comps = []
    for item in cfg.items("tones"):
        comps.append((TWO_PI * item.number("frequency_hz", positive=True),
                      item.phase("amplitude"), item.phase("phase", 0.0)))
    comps.sort(key=lambda c: c[0])
    try:
        return PerturbationSpec.from_arrays(*zip(*comps)) if comps else PerturbationSpec()
    except InvalidInputError as exc:
        raise InvalidInputError(f"{cfg._key('tones')}: {exc}") from None


def tone_frequencies_hz(cfg: Config) -> list[Fraction]:
    return [parse_fraction(item.get("frequency_hz", required=True), item._key("frequency_hz"))
            for item in cfg.items("tones")]


def band_from_config(cfg: Config) -> dict:
    return {"phi0": cfg.phase("phi0"),
            "omega0": TWO_PI * cfg.number("center_hz", positive=True),
            "sigma_omega": TWO_PI * cfg.number("sigma_hz", positive=True),
            "omega_min": TWO_PI * cfg.number("min_hz", positive=True),
            "omega_max": TWO_PI * cfg.number("max_hz", positive=True),
            "resolution": TWO_PI * cfg.number("resolution_hz", positive=True),
            "normalization": str(cfg.get("normalization", "dft"))}
