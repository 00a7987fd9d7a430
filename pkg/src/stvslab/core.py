"""
Data model for post-disturbance multivariate time series.

Every instance holds an ``m x 3L`` matrix whose columns are, in order, the
per-unit bus voltages ``U_1..U_L``, the normalized active powers
``P_1..P_L`` and the normalized reactive powers ``Q_1..Q_L``. Datasets are
stored as JSON Lines with a small JSON header sidecar.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptyInputError, MissingLabelError, RangeError, ShapeError

FORMAT_VERSION = 1
DEFAULT_DT_S = 0.01


class Label(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"

    @property
    def index(self) -> int:
        """Position of this class in a probability pair (Stable first)."""
        return 0 if self is Label.STABLE else 1

    @classmethod
    def from_index(cls, idx: int) -> "Label":
        return cls.STABLE if idx == 0 else cls.UNSTABLE


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ScenarioParams:
    load_level: float
    motor_fraction: float
    fault_line: int
    fault_position: float
    fault_time_s: float = 0.1
    clear_time_s: float = 0.15

    def __post_init__(self):
        if not self.load_level > 0:
            raise RangeError(f"load_level must be > 0, got {self.load_level}")
        if not 0.0 <= self.motor_fraction <= 1.0:
            raise RangeError(f"motor_fraction must lie in [0, 1], got {self.motor_fraction}")
        if not 0.0 <= self.fault_position < 1.0:
            raise RangeError(f"fault_position must lie in [0, 1), got {self.fault_position}")
        if self.fault_line < 0:
            raise RangeError(f"fault_line must be >= 0, got {self.fault_line}")
        if not self.clear_time_s > 0:
            raise RangeError(f"clear_time_s must be > 0, got {self.clear_time_s}")

    def to_dict(self) -> dict:
        return {
            "load_level": float(self.load_level),
            "motor_fraction": float(self.motor_fraction),
            "fault_line": int(self.fault_line),
            "fault_position": float(self.fault_position),
            "fault_time_s": float(self.fault_time_s),
            "clear_time_s": float(self.clear_time_s),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioParams":
        return cls(
            load_level=float(d["load_level"]),
            motor_fraction=float(d["motor_fraction"]),
            fault_line=int(d["fault_line"]),
            fault_position=float(d["fault_position"]),
            fault_time_s=float(d.get("fault_time_s", 0.1)),
            clear_time_s=float(d["clear_time_s"]),
        )


@dataclass(frozen=True, eq=False)
class TimeSeriesInstance:
    """One post-disturbance record: ``series`` is ``(m, 3L)``, channel blocks U, P, Q."""

    id: int
    scenario: ScenarioParams
    series: np.ndarray
    label: Label | None = None
    truth: Label | None = None

    def __post_init__(self):
        series = self.series
        if not (isinstance(series, np.ndarray) and series.dtype == np.float64
                and not series.flags.writeable):
            series = _frozen_array(series)
            object.__setattr__(self, "series", series)
        if series.ndim != 2 or series.shape[0] < 1 or series.shape[1] < 3:
            raise ShapeError(f"series must be (m >= 1, 3L >= 3), got shape {series.shape}")
        if series.shape[1] % 3:
            raise ShapeError(f"channel count {series.shape[1]} is not a multiple of 3")
        if not np.all(np.isfinite(series)):
            raise RangeError(f"instance {self.id} contains non-finite values")
        if self.id < 0:
            raise RangeError(f"instance id must be non-negative, got {self.id}")
        if self.label is not None and not isinstance(self.label, Label):
            object.__setattr__(self, "label", Label(self.label))
        if self.truth is not None and not isinstance(self.truth, Label):
            object.__setattr__(self, "truth", Label(self.truth))

    @property
    def m(self) -> int:
        return self.series.shape[0]

    @property
    def n_buses(self) -> int:
        return self.series.shape[1] // 3

    def voltages(self) -> np.ndarray:
        return self.series[:, : self.n_buses]

    def with_label(self, label: Label | None) -> "TimeSeriesInstance":
        return replace(self, label=label)

    def with_series(self, series: np.ndarray) -> "TimeSeriesInstance":
        return replace(self, series=series)


@dataclass(frozen=True, eq=False)
class NormStats:
    """Per-channel minimum and maximum over a training partition."""

    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo, hi = _frozen_array(self.min), _frozen_array(self.max)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ShapeError(f"min/max shapes differ: {lo.shape} vs {hi.shape}")
        if np.any(hi < lo):
            raise RangeError("max must be >= min componentwise")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    @property
    def n_channels(self) -> int:
        return self.min.shape[0]

    def to_dict(self) -> dict:
        return {"min": self.min.tolist(), "max": self.max.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(np.asarray(d["min"], dtype=np.float64), np.asarray(d["max"], dtype=np.float64))


@dataclass(frozen=True)
class Dataset:
    instances: tuple
    n_buses: int
    m: int
    dt_s: float = DEFAULT_DT_S
    norm_stats: NormStats | None = field(default=None, compare=False)

    def __post_init__(self):
        insts = tuple(self.instances)
        object.__setattr__(self, "instances", insts)
        if self.n_buses < 1 or self.m < 1:
            raise RangeError(f"need L >= 1 and m >= 1, got L={self.n_buses}, m={self.m}")
        seen = set()
        for inst in insts:
            if inst.series.shape != (self.m, 3 * self.n_buses):
                raise ShapeError(
                    f"instance {inst.id} has shape {inst.series.shape}, "
                    f"dataset expects {(self.m, 3 * self.n_buses)}"
                )
            if inst.id in seen:
                raise ShapeError(f"duplicate instance id {inst.id}")
            seen.add(inst.id)

    def __len__(self) -> int:
        return len(self.instances)

    def __iter__(self):
        return iter(self.instances)

    @property
    def n_channels(self) -> int:
        return 3 * self.n_buses

    @property
    def ids(self) -> list[int]:
        return [inst.id for inst in self.instances]

    def with_instances(self, instances: Iterable[TimeSeriesInstance], m: int | None = None):
        return replace(self, instances=tuple(instances), m=self.m if m is None else m)

    def series_array(self) -> np.ndarray:
        """Stack every series into an ``(n, m, 3L)`` array."""
        if not self.instances:
            return np.zeros((0, self.m, self.n_channels))
        return np.stack([inst.series for inst in self.instances])

    def label_indices(self) -> np.ndarray:
        """Class indices (0 = stable, 1 = unstable); raises if any label is missing."""
        out = np.empty(len(self.instances), dtype=np.int64)
        for k, inst in enumerate(self.instances):
            if inst.label is None:
                raise MissingLabelError(f"instance {inst.id} has no label")
            out[k] = inst.label.index
        return out

    def truth_indices(self) -> np.ndarray | None:
        if any(inst.truth is None for inst in self.instances):
            return None
        return np.array([inst.truth.index for inst in self.instances], dtype=np.int64)


# ---------------------------------------------------------------------------
# windowing / normalization / splitting


def window(instance: TimeSeriesInstance, otw_steps: int) -> TimeSeriesInstance:
    """Keep the first ``otw_steps`` rows of the series."""
    m = instance.m
    if not (isinstance(otw_steps, (int, np.integer)) and 1 <= otw_steps <= m):
        raise RangeError(f"otw_steps must be an integer in [1, {m}], got {otw_steps}")
    if otw_steps == m:
        return instance
    return instance.with_series(instance.series[:otw_steps])


def window_dataset(ds: Dataset, otw_steps: int) -> Dataset:
    if not 1 <= otw_steps <= ds.m:
        raise RangeError(f"otw_steps must be in [1, {ds.m}], got {otw_steps}")
    return ds.with_instances((window(i, otw_steps) for i in ds.instances), m=otw_steps)


def fit_normalizer(train: Dataset) -> NormStats:
    if len(train) == 0:
        raise EmptyInputError("cannot fit a normalizer on an empty dataset")
    rows = train.series_array().reshape(-1, train.n_channels)
    return NormStats(rows.min(axis=0), rows.max(axis=0))


def _affine(stats: NormStats):
    span = stats.max - stats.min
    degenerate = span == 0
    return np.where(degenerate, 1.0, span), degenerate


def normalize_array(x: np.ndarray, stats: NormStats) -> np.ndarray:
    if x.shape[-1] != stats.n_channels:
        raise ShapeError(f"expected {stats.n_channels} channels, got {x.shape[-1]}")
    span, degenerate = _affine(stats)
    out = (x - stats.min) / span
    return np.where(degenerate, 0.0, out)


def denormalize_array(z: np.ndarray, stats: NormStats) -> np.ndarray:
    """Inverse map for non-degenerate channels; degenerate channels return their constant."""
    span, degenerate = _affine(stats)
    return np.where(degenerate, stats.min, z * span + stats.min)


def apply_normalizer(ds: Dataset, stats: NormStats) -> Dataset:
    """Min-max scale every channel; values outside the fitted range are not clipped."""
    if stats.n_channels != ds.n_channels:
        raise ShapeError(
            f"normalizer has {stats.n_channels} channels, dataset has {ds.n_channels}"
        )
    insts = [inst.with_series(normalize_array(inst.series, stats)) for inst in ds.instances]
    return replace(ds, instances=tuple(insts), norm_stats=stats)


def split_dataset(ds: Dataset, train_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    if not 0.0 < train_fraction < 1.0:
        raise RangeError(f"train_fraction must be in (0, 1), got {train_fraction}")
    n = len(ds)
    order = np.random.default_rng(seed).permutation(n)
    n_train = math.floor(n * train_fraction)
    insts = ds.instances
    train = ds.with_instances(insts[k] for k in order[:n_train])
    test = ds.with_instances(insts[k] for k in order[n_train:])
    return train, test


# ---------------------------------------------------------------------------
# serialization


def header_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".header.json")


def _instance_line(inst: TimeSeriesInstance) -> str:
    rec = {
        "id": int(inst.id),
        "scenario": inst.scenario.to_dict(),
        "label": inst.label.value if inst.label is not None else None,
        "truth": inst.truth.value if inst.truth is not None else None,
        "series": inst.series.tolist(),
    }
    return json.dumps(rec, separators=(",", ":"), allow_nan=False)


def write_dataset(path: str | Path, ds: Dataset) -> None:
    """Write ``ds`` as JSON Lines plus a ``<path>.header.json`` sidecar.

    Python's ``repr`` of a float is the shortest string that round-trips,
    so values survive a write/read cycle bit-exactly.
    """
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for inst in ds.instances:
            fh.write(_instance_line(inst))
            fh.write("\n")
    header = {
        "format_version": FORMAT_VERSION,
        "L": ds.n_buses,
        "m": ds.m,
        "d": ds.n_channels,
        "dt_s": ds.dt_s,
        "n_instances": len(ds),
        "norm_stats": ds.norm_stats.to_dict() if ds.norm_stats is not None else None,
    }
    header_path(path).write_text(json.dumps(header, indent=2) + "\n", encoding="utf-8")


def read_header(path: str | Path) -> dict:
    hp = header_path(path)
    if not hp.exists():
        raise FileNotFoundError(f"missing dataset header {hp}")
    header = json.loads(hp.read_text(encoding="utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported dataset format version {header.get('format_version')}")
    return header


def read_dataset(path: str | Path) -> Dataset:
    path = Path(path)
    header = read_header(path)
    insts = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            rec = json.loads(line)
            insts.append(
                TimeSeriesInstance(
                    id=int(rec["id"]),
                    scenario=ScenarioParams.from_dict(rec["scenario"]),
                    series=np.asarray(rec["series"], dtype=np.float64),
                    label=Label(rec["label"]) if rec.get("label") else None,
                    truth=Label(rec["truth"]) if rec.get("truth") else None,
                )
            )
    stats = header.get("norm_stats")
    return Dataset(
        instances=tuple(insts),
        n_buses=int(header["L"]),
        m=int(header["m"]),
        dt_s=float(header["dt_s"]),
        norm_stats=NormStats.from_dict(stats) if stats else None,
    )


def labels_from(values: Sequence) -> list[Label]:
    return [v if isinstance(v, Label) else Label(v) for v in values]
