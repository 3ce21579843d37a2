"""Datasets, noise, subsampling, collocation grids and CSV I/O."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.signal import savgol_filter

from .errors import DataError, InvalidArgument

MIN_SAMPLES = 4


class HeaderError(DataError):
    pass


class MonotonicityError(DataError):
    def __init__(self, row: int):
        super().__init__(f"time column not strictly increasing at data row {row}")
        self.row = row


class RaggedRowError(DataError):
    def __init__(self, row: int, expected: int, got: int):
        super().__init__(f"data row {row} has {got} fields, expected {expected}")
        self.row = row


@dataclass
class DataSource:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.asarray(self.states, dtype=float)
        if self.states.ndim == 1:
            self.states = self.states[:, None]
        if self.inputs is not None:
            self.inputs = np.asarray(self.inputs, dtype=float)
            if self.inputs.ndim == 1:
                self.inputs = self.inputs[:, None]
        n = self.times.size
        if n < MIN_SAMPLES:
            raise DataError(f"need at least {MIN_SAMPLES} samples per source, got {n}")
        if self.states.shape[0] != n or (self.inputs is not None and self.inputs.shape[0] != n):
            raise DataError("times, states and inputs must have the same number of rows")
        bad = np.flatnonzero(np.diff(self.times) <= 0)
        if bad.size:
            raise MonotonicityError(int(bad[0]) + 1)
        if not np.all(np.isfinite(self.states)):
            raise DataError("states contain missing or non-finite entries")

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])


@dataclass
class Dataset:
    sources: list[DataSource]
    state_names: tuple[str, ...]
    input_names: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.sources:
            raise DataError("dataset has no sources")
        n = len(self.state_names)
        for s in self.sources:
            if s.states.shape[1] != n:
                raise DataError(f"source has {s.states.shape[1]} state columns, expected {n}")

    @classmethod
    def merge(cls, datasets: Sequence["Dataset"]) -> "Dataset":
        if not datasets:
            raise DataError("no datasets given")
        names = datasets[0].state_names
        for d in datasets[1:]:
            if d.state_names != names:
                raise DataError(f"state names differ: {d.state_names} vs {names}")
        return cls([s for d in datasets for s in d.sources], names,
                   datasets[0].input_names, dict(datasets[0].meta))


def add_noise(states: np.ndarray, level: float, seed: int) -> np.ndarray:
    """Gaussian noise with per-channel std equal to ``level`` times the channel RMS."""
    if level < 0:
        raise InvalidArgument(f"noise level must be >= 0, got {level}")
    states = np.asarray(states, dtype=float)
    if level == 0:
        return states.copy()
    rng = np.random.default_rng(seed)
    rms = np.sqrt(np.mean(states ** 2, axis=0))
    return states + rng.standard_normal(states.shape) * (level * rms)


def subsample_indices(times: np.ndarray, *, rate_hz: float | None = None,
                      count: int | None = None, seed: int = 0) -> np.ndarray:
    """Indices for uniform (every k-th point) or random (endpoints kept) subsampling."""
    n = len(times)
    if (rate_hz is None) == (count is None):
        raise InvalidArgument("give exactly one of rate_hz or count")
    if rate_hz is not None:
        source_rate = (n - 1) / (times[-1] - times[0])
        step = source_rate / rate_hz
        k = int(round(step))
        if k < 1 or abs(step - k) > 1e-6 * step:
            raise InvalidArgument(f"{rate_hz} Hz is not an integer divisor of the "
                                  f"{source_rate:.6g} Hz source rate")
        return np.arange(0, n, k)
    if count > n:
        raise InvalidArgument(f"requested {count} samples but only {n} available")
    if count < 2:
        raise InvalidArgument("random subsampling needs count >= 2")
    rng = np.random.default_rng(seed)
    interior = rng.choice(np.arange(1, n - 1), size=count - 2, replace=False)
    return np.sort(np.concatenate([[0, n - 1], interior]))


def subsample(source: DataSource, *, rate_hz: float | None = None, count: int | None = None,
              seed: int = 0) -> DataSource:
    idx = subsample_indices(source.times, rate_hz=rate_hz, count=count, seed=seed)
    inputs = None if source.inputs is None else source.inputs[idx]
    return DataSource(source.times[idx], source.states[idx], inputs)


def sample_collocation(T: float, n_colloc: int, seed: int, t0: float = 0.0) -> np.ndarray:
    """Sorted collocation times in [t0, t0+T]: both endpoints plus uniform draws."""
    if n_colloc < 1:
        raise InvalidArgument("need at least one collocation point")
    rng = np.random.default_rng(seed)
    if n_colloc == 1:
        return np.array([t0])
    draws = rng.uniform(0.0, T, n_colloc - 2)
    return t0 + np.sort(np.concatenate([[0.0, T], draws]))


def _check_uniform(times: np.ndarray) -> float:
    dt = np.diff(times)
    if dt.size == 0 or np.max(np.abs(dt - dt.mean())) > 1e-6 * dt.mean():
        raise InvalidArgument("Savitzky-Golay differentiation needs uniformly sampled data")
    return float(dt.mean())


def savgol_diff(times, states, window: int = 21, polyorder: int = 3, deriv: int = 1):
    """Return (smoothed states, deriv-th derivative) from local polynomial fits."""
    times = np.asarray(times, dtype=float)
    states = np.asarray(states, dtype=float)
    if window % 2 == 0 or window <= polyorder:
        raise InvalidArgument("window must be odd and larger than polyorder")
    if window > times.size:
        raise InvalidArgument(f"window {window} longer than the {times.size}-sample series")
    dt = _check_uniform(times)
    smooth = savgol_filter(states, window, polyorder, deriv=0, axis=0, mode="interp")
    d = savgol_filter(states, window, polyorder, deriv=deriv, delta=dt, axis=0, mode="interp")
    return smooth, d


# --------------------------------------------------------------------------- CSV


def _fmt(x: float) -> str:
    return repr(float(x))  # shortest string that round-trips exactly


def save_csv(dataset: Dataset, path, source_index: int = 0) -> Path:
    path = Path(path)
    src = dataset.sources[source_index]
    header = ["t", *dataset.state_names, *(f"u:{n}" for n in dataset.input_names)]
    with path.open("w", newline="") as fh:
        for key, value in dataset.meta.items():
            fh.write(f"# {key}: {value}\n")
        w = csv.writer(fh)
        w.writerow(header)
        for i in range(src.times.size):
            row = [_fmt(src.times[i]), *map(_fmt, src.states[i])]
            if src.inputs is not None:
                row += list(map(_fmt, src.inputs[i]))
            w.writerow(row)
    return path


def _parse_meta(value: str):
    value = value.strip()
    for conv in (int, float):
        try:
            return conv(value)
        except ValueError:
            pass
    return value


def load_csv(path) -> Dataset:
    path = Path(path)
    meta = {}
    rows = []
    header = None
    with path.open(newline="") as fh:
        for raw in fh:
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if ":" in body:
                    key, value = body.split(":", 1)
                    meta[key.strip()] = _parse_meta(value)
                continue
            fields = next(csv.reader([line]))
            if header is None:
                header = [f.strip() for f in fields]
                continue
            rows.append(fields)
    if header is None or header[0] != "t" or len(header) < 2:
        raise HeaderError(f"{path}: header must start with 't' and name at least one state")
    if len(set(header)) != len(header):
        raise HeaderError(f"{path}: duplicate column names in header")
    state_cols = [i for i, h in enumerate(header[1:], 1) if not h.startswith("u:")]
    input_cols = [i for i, h in enumerate(header[1:], 1) if h.startswith("u:")]
    if not state_cols:
        raise HeaderError(f"{path}: no state columns")
    if input_cols and min(input_cols) < max(state_cols):
        raise HeaderError(f"{path}: input columns must follow state columns")
    data = np.empty((len(rows), len(header)))
    for r, fields in enumerate(rows, start=1):
        if len(fields) != len(header):
            raise RaggedRowError(r, len(header), len(fields))
        try:
            data[r - 1] = [float(f) for f in fields]
        except ValueError as exc:
            raise DataError(f"data row {r}: {exc}") from None
    t = data[:, 0]
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        raise MonotonicityError(int(bad[0]) + 2)
    inputs = data[:, input_cols] if input_cols else None
    source = DataSource(t, data[:, state_cols], inputs)
    return Dataset([source], tuple(header[i] for i in state_cols),
                   tuple(header[i][2:] for i in input_cols), meta)
