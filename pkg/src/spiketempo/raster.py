"""Event streams, spike rasters, synthetic data, splits, and file formats.

Two on-disk formats live here:

* Event file: UTF-8 JSON lines, one sample per line:
  ``{"label": int, "duration": float, "events": [[time, unit], ...]}``.
* Raster cache: binary, magic ``STRAS1``, then T, B, N as little-endian
  uint32, then T*B*N uint8 values in row-major order (t slowest).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, IngestionError, NumericError, ShapeError

RASTER_MAGIC = b"STRAS1"


@dataclass
class EventStream:
    """One labeled sample: timed (time, unit) spike events over a duration.

    Times live in the half-open interval [0, duration); an event exactly at
    the duration is rejected so its bin index stays well defined. Events are
    sorted by time on construction.
    """

    label: int
    duration: float
    events: list

    def __post_init__(self):
        if not isinstance(self.label, int) or self.label < 0:
            raise IngestionError(f"label must be a non-negative integer, got {self.label!r}")
        if not (isinstance(self.duration, (int, float)) and math.isfinite(self.duration) and self.duration > 0):
            raise IngestionError(f"duration must be a finite positive number, got {self.duration!r}")
        self.duration = float(self.duration)
        clean = []
        for ev in self.events:
            t, u = ev
            t = float(t)
            u = int(u)
            if not math.isfinite(t):
                raise IngestionError(
                    f"non-finite event time {t!r} (unit={u}) in sample label={self.label}"
                )
            if not 0.0 <= t < self.duration:
                raise IngestionError(
                    f"event (time={t}, unit={u}) outside [0, {self.duration}) "
                    f"in sample label={self.label}"
                )
            if u < 0:
                raise IngestionError(
                    f"negative unit index {u} (time={t}) in sample label={self.label}"
                )
            clean.append((t, u))
        clean.sort(key=lambda ev: ev[0])
        self.events = clean


@dataclass
class SpikeRaster:
    """A (time, batch, units) value tensor of spikes.

    ``binary`` asserts values are exactly {0, 1}; count-mode rasters and
    residual outputs (which may contain 2) carry binary=False.
    """

    values: np.ndarray
    binary: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ShapeError(f"raster must be 3-axis (time, batch, units), got ndim={self.values.ndim}")
        if not np.isfinite(self.values).all():
            raise NumericError("raster contains non-finite values")
        if (self.values < 0).any():
            raise ConfigError("raster values must be >= 0")
        if self.binary and not np.isin(self.values, (0.0, 1.0)).all():
            raise ConfigError("raster flagged binary but contains values outside {0, 1}")

    @property
    def t_len(self) -> int:
        return self.values.shape[0]

    @property
    def batch(self) -> int:
        return self.values.shape[1]

    @property
    def n_units(self) -> int:
        return self.values.shape[2]


@dataclass
class Dataset:
    """Labeled rasters (each batch-1) sharing a unit count and class space."""

    samples: list
    n_classes: int
    n_units: int
    split: str = ""

    def __post_init__(self):
        for raster, label in self.samples:
            if raster.n_units != self.n_units:
                raise ConfigError(
                    f"sample has {raster.n_units} units, dataset expects {self.n_units}"
                )
            if not 0 <= label < self.n_classes:
                raise ConfigError(f"label {label} out of range for {self.n_classes} classes")

    def __len__(self) -> int:
        return len(self.samples)

    def stack(self, indices=None):
        """Concatenate samples along the batch axis -> (values, labels)."""
        if indices is None:
            indices = range(len(self.samples))
        chosen = [self.samples[i] for i in indices]
        if not chosen:
            raise ConfigError("cannot stack an empty sample selection")
        t_len = chosen[0][0].t_len
        for raster, _ in chosen:
            if raster.t_len != t_len:
                raise ShapeError("samples must share t_len to be stacked")
        values = np.concatenate([raster.values for raster, _ in chosen], axis=1)
        labels = np.array([label for _, label in chosen], dtype=np.int64)
        return values, labels


@dataclass
class SynthSpec:
    """Recipe for the synthetic dataset generator.

    Each class is identified by a signature: a set of units firing
    periodically at (unit, phase, period). Background noise adds
    Poisson events at ``noise_rate`` events per second per unit.
    """

    n_classes: int
    n_units: int
    duration: float
    patterns: list  # per class: list of (unit, phase, period)
    noise_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.n_classes < 1 or self.n_units < 1:
            raise ConfigError("n_classes and n_units must be >= 1")
        if not self.duration > 0:
            raise ConfigError("duration must be > 0")
        if self.noise_rate < 0:
            raise ConfigError("noise_rate must be >= 0")
        if len(self.patterns) != self.n_classes:
            raise ConfigError(
                f"need one pattern list per class: {len(self.patterns)} != {self.n_classes}"
            )
        for c, pattern in enumerate(self.patterns):
            for unit, phase, period in pattern:
                if not 0 <= unit < self.n_units:
                    raise ConfigError(f"pattern unit {unit} out of range (class {c})")
                if not 0 <= phase < self.duration:
                    raise ConfigError(f"pattern phase {phase} outside [0, duration) (class {c})")
                if not period > 0:
                    raise ConfigError(f"pattern period must be > 0 (class {c})")


def default_synth_spec(
    n_classes: int = 10,
    n_units: int = 64,
    duration: float = 1.0,
    units_per_class: int = 6,
    noise_rate: float = 1.5,
    seed: int = 7,
) -> SynthSpec:
    """Draw a random but seed-reproducible signature per class."""
    if units_per_class > n_units:
        raise ConfigError("units_per_class cannot exceed n_units")
    rng = np.random.default_rng(seed)
    patterns = []
    for _ in range(n_classes):
        units = rng.choice(n_units, size=units_per_class, replace=False)
        pattern = []
        for unit in units:
            period = float(rng.uniform(0.06, 0.2)) * duration
            phase = float(rng.uniform(0.0, period))
            pattern.append((int(unit), phase, period))
        patterns.append(pattern)
    return SynthSpec(n_classes, n_units, duration, patterns, noise_rate, seed)


def bin_events(stream: EventStream, n_bins: int, n_units: int, binary: bool = True) -> SpikeRaster:
    """Histogram events into a (n_bins, 1, n_units) raster.

    An event at time t lands in bin floor(t / duration * n_bins); with
    binary=True multi-event bins clamp to 1, otherwise counts are kept.
    """
    if n_bins < 1:
        raise ConfigError(f"n_bins must be >= 1, got {n_bins}")
    if n_units < 1:
        raise ConfigError(f"n_units must be >= 1, got {n_units}")
    values = np.zeros((n_bins, 1, n_units), dtype=np.float64)
    if stream.events:
        times = np.array([t for t, _ in stream.events], dtype=np.float64)
        units = np.array([u for _, u in stream.events], dtype=np.int64)
        bad = np.nonzero(units >= n_units)[0]
        if bad.size:
            t, u = stream.events[int(bad[0])]
            raise IngestionError(
                f"event (time={t}, unit={u}) exceeds n_units={n_units} "
                f"in sample label={stream.label}"
            )
        idx = np.floor(times / stream.duration * n_bins).astype(np.int64)
        # guard against float rounding pushing t/duration up to 1.0
        idx = np.minimum(idx, n_bins - 1)
        np.add.at(values, (idx, 0, units), 1.0)
    if binary:
        values = np.minimum(values, 1.0)
    return SpikeRaster(values, binary=binary)


def gen_event_streams(spec: SynthSpec, count_per_class: int) -> list:
    """Generate labeled event streams, class-major, deterministic per seed."""
    if count_per_class < 1:
        raise ConfigError(f"count_per_class must be >= 1, got {count_per_class}")
    rng = np.random.default_rng(spec.seed)
    signature = []
    for pattern in spec.patterns:
        events = []
        for unit, phase, period in pattern:
            t = phase
            while t < spec.duration:
                events.append((t, unit))
                t += period
        signature.append(events)

    streams = []
    lam = spec.noise_rate * spec.duration
    for c in range(spec.n_classes):
        for _ in range(count_per_class):
            counts = rng.poisson(lam, size=spec.n_units)
            total = int(counts.sum())
            times = rng.uniform(0.0, spec.duration, size=total)
            units = np.repeat(np.arange(spec.n_units), counts)
            keep = times < spec.duration  # uniform() can round up to the bound
            noise = list(zip(times[keep].tolist(), units[keep].tolist()))
            streams.append(EventStream(c, spec.duration, signature[c] + noise))
    return streams


def gen_synthetic(
    spec: SynthSpec,
    count_per_class: int,
    n_bins: int = 100,
    binary: bool = True,
) -> Dataset:
    """Generate and bin a full synthetic dataset."""
    streams = gen_event_streams(spec, count_per_class)
    samples = [(bin_events(s, n_bins, spec.n_units, binary), s.label) for s in streams]
    return Dataset(samples, spec.n_classes, spec.n_units, split="full")


def dataset_from_streams(streams, n_bins: int, n_units: int, binary: bool = True,
                         n_classes: int | None = None) -> Dataset:
    """Bin loaded event streams into a dataset."""
    if not streams:
        raise ConfigError("no event streams to build a dataset from")
    if n_classes is None:
        n_classes = max(s.label for s in streams) + 1
    samples = [(bin_events(s, n_bins, n_units, binary), s.label) for s in streams]
    return Dataset(samples, n_classes, n_units)


def split_dataset(d: Dataset, fractions, seed: int = 0):
    """Stratified split into (train, valid, test); deterministic per seed.

    Per-class counts follow a largest-remainder allocation, so the label
    distribution is preserved within one sample per class. Any empty split
    is a configuration error.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3:
        raise ConfigError("fractions must be a (train, valid, test) triple")
    if any(f < 0 for f in fractions):
        raise ConfigError("fractions must be >= 0")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError(f"fractions must sum to 1, got {sum(fractions)}")

    rng = np.random.default_rng(seed)
    by_class = {}
    for i, (_, label) in enumerate(d.samples):
        by_class.setdefault(label, []).append(i)

    parts = ([], [], [])
    for label in sorted(by_class):
        idx = np.array(by_class[label])
        rng.shuffle(idx)
        n = len(idx)
        exact = [f * n for f in fractions]
        counts = [int(math.floor(e)) for e in exact]
        leftovers = n - sum(counts)
        order = sorted(range(3), key=lambda k: (-(exact[k] - counts[k]), k))
        for k in order[:leftovers]:
            counts[k] += 1
        pos = 0
        for part, cnt in zip(parts, counts):
            part.extend(int(i) for i in idx[pos : pos + cnt])
            pos += cnt

    names = ("train", "valid", "test")
    out = []
    for part, name in zip(parts, names):
        if not part:
            raise ConfigError(f"split {name!r} is empty for fractions {fractions}")
        samples = [d.samples[i] for i in sorted(part)]
        out.append(Dataset(samples, d.n_classes, d.n_units, split=name))
    return tuple(out)


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------

def save_event_file(path, streams) -> None:
    """Write streams as JSON lines (one sample per line)."""
    with open(path, "w", encoding="utf-8") as f:
        for s in streams:
            rec = {
                "label": s.label,
                "duration": s.duration,
                "events": [[t, u] for t, u in s.events],
            }
            f.write(json.dumps(rec) + "\n")


def load_event_file(path) -> list:
    """Read a JSON-lines event file; errors name the offending line."""
    streams = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as e:
                raise IngestionError(f"{path}: line {lineno}: invalid JSON ({e.msg})") from e
            if not isinstance(rec, dict) or not {"label", "duration", "events"} <= rec.keys():
                raise IngestionError(
                    f"{path}: line {lineno}: record must have label, duration, events"
                )
            try:
                events = [(float(t), int(u)) for t, u in rec["events"]]
                streams.append(EventStream(int(rec["label"]), float(rec["duration"]), events))
            except (TypeError, ValueError) as e:
                raise IngestionError(f"{path}: line {lineno}: malformed record ({e})") from e
            except IngestionError as e:
                raise IngestionError(f"{path}: line {lineno}: {e}") from e
    return streams


def save_raster_cache(path, raster: SpikeRaster) -> None:
    """Write the binary raster cache (uint8 payload)."""
    v = raster.values
    rounded = np.rint(v)
    if not np.array_equal(rounded, v):
        raise ConfigError("raster cache requires integer values")
    if (v < 0).any() or (v > 255).any():
        raise ConfigError("raster cache values must fit in uint8 (0..255)")
    t_len, batch, units = v.shape
    with open(path, "wb") as f:
        f.write(RASTER_MAGIC)
        f.write(struct.pack("<III", t_len, batch, units))
        f.write(np.ascontiguousarray(v, dtype=np.uint8).tobytes())


def load_raster_cache(path) -> SpikeRaster:
    """Read a binary raster cache written by save_raster_cache."""
    with open(path, "rb") as f:
        magic = f.read(len(RASTER_MAGIC))
        if magic != RASTER_MAGIC:
            raise IngestionError(f"{path}: bad magic {magic!r}, expected {RASTER_MAGIC!r}")
        header = f.read(12)
        if len(header) != 12:
            raise IngestionError(f"{path}: truncated header")
        t_len, batch, units = struct.unpack("<III", header)
        payload = f.read(t_len * batch * units)
        if len(payload) != t_len * batch * units:
            raise IngestionError(f"{path}: truncated payload")
        if f.read(1):
            raise IngestionError(f"{path}: trailing bytes after payload")
    values = np.frombuffer(payload, dtype=np.uint8).reshape(t_len, batch, units)
    values = values.astype(np.float64)
    return SpikeRaster(values, binary=bool(values.max(initial=0.0) <= 1.0))


def save_synth_spec(path, spec: SynthSpec) -> None:
    doc = {
        "classes": spec.n_classes,
        "units": spec.n_units,
        "duration": spec.duration,
        "noise_rate": spec.noise_rate,
        "seed": spec.seed,
        "patterns": [[[u, p, per] for u, p, per in pattern] for pattern in spec.patterns],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_synth_spec(path) -> SynthSpec:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise IngestionError(f"{path}: invalid JSON ({e.msg})") from e
    try:
        patterns = [
            [(int(u), float(p), float(per)) for u, p, per in pattern]
            for pattern in doc["patterns"]
        ]
        return SynthSpec(
            n_classes=int(doc["classes"]),
            n_units=int(doc["units"]),
            duration=float(doc["duration"]),
            patterns=patterns,
            noise_rate=float(doc.get("noise_rate", 0.0)),
            seed=int(doc.get("seed", 0)),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise IngestionError(f"{path}: malformed synth spec ({e})") from e
