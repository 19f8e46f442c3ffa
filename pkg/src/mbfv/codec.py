"""Feature type transformations, fusion and balancing.

Raw records (quality-annotated minutiae, float embeddings) become
:class:`~mbfv.vault.FeatureSet` instances; sets from several characteristics
are fused with index attachment ``i + N*x`` so that overlaps add up exactly.

Pipeline per characteristic: quantise (the coarseness knob realises the
overlap-balancing function f) -> clone elements ``x*m + r`` (size balancing
g) -> fuse.  :class:`CodecConfig` pins the whole pipeline and has a stable
fingerprint so enrolment and verification provably use the same transform.
"""

from __future__ import annotations

import functools
import hashlib
import json
import math
from dataclasses import dataclass, field as dc_field, replace
from statistics import NormalDist
from typing import Iterable, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError, EncodingOverflowError, InsufficientDataError, ParameterError
from .galois import DEFAULT_FIELD, FieldSpec, smallest_field
from .vault import FeatureSet

TWO_PI = 2 * math.pi


# ---------------------------------------------------------------------------
# Minutiae
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MinutiaRecord:
    """Minutiae as rows (x, y, theta, quality) inside a pre-aligned frame."""

    minutiae: tuple[tuple[float, float, float, float], ...]
    region: tuple[float, float] = (400.0, 500.0)

    def __post_init__(self):
        w, h = self.region
        for x, y, theta, _ in self.minutiae:
            if not (0 <= x < w and 0 <= y < h):
                raise ConfigError(f"minutia ({x}, {y}) outside region {w}x{h}")
            if not 0 <= theta < TWO_PI:
                raise ConfigError(f"minutia angle {theta} outside [0, 2*pi)")

    @classmethod
    def from_doc(cls, doc: dict) -> "MinutiaRecord":
        rows = tuple(tuple(float(v) for v in row) for row in doc["minutiae"])
        if any(len(r) != 4 for r in rows):
            raise ConfigError("each minutia needs [x, y, theta, quality]")
        region = tuple(float(v) for v in doc.get("region", (400, 500)))
        return cls(rows, region)

    def to_doc(self) -> dict:
        return {"minutiae": [list(m) for m in self.minutiae], "region": list(self.region)}


@dataclass(frozen=True)
class HexGridConfig:
    spacing: float = 25.0
    angle_quanta: int = 6
    region: tuple[float, float] = (400.0, 500.0)
    t_max: int = 40

    def __post_init__(self):
        if self.spacing <= 0 or self.angle_quanta < 1 or self.t_max < 1:
            raise ConfigError("grid spacing, angle quanta and t_max must be positive")

    @property
    def universe(self) -> int:
        return self.angle_quanta * len(hex_grid(self))


@functools.lru_cache(maxsize=64)
def _hex_grid(spacing: float, width: float, height: float) -> np.ndarray:
    pitch = spacing * math.sqrt(3) / 2
    n_rows = int(height // pitch) + 1
    # leave room for the half-spacing offset of odd rows
    n_cols = int((width - (spacing / 2 if n_rows > 1 else 0)) // spacing) + 1
    span_x = (n_cols - 1) * spacing + (spacing / 2 if n_rows > 1 else 0)
    x0 = (width - span_x) / 2
    y0 = (height - (n_rows - 1) * pitch) / 2
    r, c = np.divmod(np.arange(n_rows * n_cols), n_cols)
    xs = x0 + c * spacing + np.where(r % 2 == 1, spacing / 2, 0.0)
    ys = y0 + r * pitch
    grid = np.stack([xs, ys], axis=1)
    grid.setflags(write=False)
    return grid


def hex_grid(config: HexGridConfig) -> np.ndarray:
    """Grid coordinates (row-major, odd rows shifted by half a spacing), centred on the region."""
    return _hex_grid(float(config.spacing), float(config.region[0]), float(config.region[1]))


def quantize_minutiae(record: MinutiaRecord, config: HexGridConfig) -> FeatureSet:
    if not record.minutiae:
        return FeatureSet()
    m = np.array(record.minutiae, dtype=float)
    grid = hex_grid(config)
    d2 = ((m[:, None, :2] - grid[None, :, :]) ** 2).sum(axis=2)
    j = np.argmin(d2, axis=1)  # first minimum = lowest index on ties
    s = config.angle_quanta
    jp = np.minimum(np.floor(s * m[:, 2] / TWO_PI).astype(int), s - 1)
    enc = jp + s * j
    out: set[int] = set()
    for idx in sorted(range(len(m)), key=lambda i: (-m[i, 3], int(enc[i]))):
        if len(out) >= config.t_max:
            break
        out.add(int(enc[idx]))
    return FeatureSet(out)


# ---------------------------------------------------------------------------
# Float embeddings (LSSC)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FloatEmbedding:
    values: tuple[float, ...]
    thresholds: tuple[tuple[float, ...], ...]
    intervals: int = 4

    def __post_init__(self):
        if len(self.thresholds) != len(self.values):
            raise ConfigError(f"{len(self.thresholds)} threshold rows for {len(self.values)} dimensions")
        for row in self.thresholds:
            if len(row) != self.intervals - 1:
                raise ConfigError(f"expected {self.intervals - 1} thresholds per dimension, got {len(row)}")
            if any(b <= a for a, b in zip(row, row[1:])):
                raise ConfigError("thresholds must be strictly increasing")


def lssc_levels(values, thresholds) -> np.ndarray:
    t = np.asarray(thresholds, dtype=float)
    return (np.asarray(values, dtype=float)[:, None] > t).sum(axis=1)


def lssc_set(levels, bits: int) -> FeatureSet:
    """Indexes of ones in the concatenated codes (level q -> q ones then zeros)."""
    return FeatureSet(bits * d + i for d, q in enumerate(np.asarray(levels).tolist()) for i in range(q))


def encode_lssc(embedding: FloatEmbedding) -> FeatureSet:
    levels = lssc_levels(embedding.values, embedding.thresholds)
    return lssc_set(levels, embedding.intervals - 1)


def normal_thresholds(dims: int, intervals: int = 4) -> tuple[tuple[float, ...], ...]:
    """Equal-probability cut points of the standard normal distribution."""
    nd = NormalDist()
    row = tuple(nd.inv_cdf(i / intervals) for i in range(1, intervals))
    return tuple(row for _ in range(dims))


def quantile_thresholds(corpus, intervals: int = 4) -> tuple[tuple[float, ...], ...]:
    """Per-dimension empirical cut points of a calibration corpus (rows = samples)."""
    data = np.asarray(corpus, dtype=float)
    if data.ndim != 2 or len(data) < intervals:
        raise InsufficientDataError("need a 2-D calibration corpus with enough samples")
    q = np.quantile(data, [i / intervals for i in range(1, intervals)], axis=0).T
    return tuple(tuple(float(v) for v in row) for row in q)


# ---------------------------------------------------------------------------
# Fusion and balancing
# ---------------------------------------------------------------------------

def fuse(sets: Sequence[Iterable[int]], field: Optional[FieldSpec] = None) -> FeatureSet:
    """Index attachment: x in set i (1-based) becomes i + N*x."""
    n = len(sets)
    if n < 1:
        raise ParameterError("fusion needs at least one set")
    out = FeatureSet(i + n * x for i, s in enumerate(sets, start=1) for x in s)
    if field is not None and out and out[-1] >= field.order:
        raise EncodingOverflowError(f"fused value {out[-1]} exceeds GF(2^{field.e})")
    return out


def clone_factor(l_i: float, l_j: float) -> int:
    if l_i <= 0:
        raise ParameterError("own expected size must be positive")
    if l_i > l_j:
        raise ParameterError("size balancing only enlarges the smaller set")
    return math.ceil(l_j / l_i - 1e-12)


def clone(features: Iterable[int], m: int, capacity: Optional[int] = None) -> FeatureSet:
    """Each x becomes x*m + r for r in 0..m-1."""
    out = FeatureSet(x * m + r for x in features for r in range(m))
    if capacity is not None and out and out[-1] >= capacity:
        raise EncodingOverflowError(f"cloned value {out[-1]} exceeds capacity {capacity}")
    return out


def balance_size_g(features: Iterable[int], l_i: float, l_j: float,
                   capacity: Optional[int] = None) -> FeatureSet:
    return clone(features, clone_factor(l_i, l_j), capacity)


# ---------------------------------------------------------------------------
# Overlap statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OverlapProfile:
    avg_size: float
    mated_overlap: float
    nonmated_overlap: float
    name: str = ""

    def __post_init__(self):
        if not 0 <= self.nonmated_overlap <= self.mated_overlap <= self.avg_size:
            raise ConfigError(f"profile {self.name!r} violates nonmated <= mated <= size")

    @property
    def relative_nonmated(self) -> float:
        return self.nonmated_overlap / self.avg_size if self.avg_size else 0.0

    @property
    def relative_mated(self) -> float:
        return self.mated_overlap / self.avg_size if self.avg_size else 0.0

    def scaled(self, divisor: float) -> "OverlapProfile":
        return replace(self, avg_size=self.avg_size / divisor,
                       mated_overlap=self.mated_overlap / divisor,
                       nonmated_overlap=self.nonmated_overlap / divisor)

    def to_dict(self) -> dict:
        return {"name": self.name, "avg_size": self.avg_size,
                "mated_overlap": self.mated_overlap, "nonmated_overlap": self.nonmated_overlap}


def relative_overlap(a: Iterable[int], b: Iterable[int]) -> float:
    a, b = set(a), set(b)
    total = len(a) + len(b)
    return 2 * len(a & b) / total if total else 0.0


def estimate_profile(sample_pairs, name: str = "") -> OverlapProfile:
    """Mean set size over all sets, mean intersection per class."""
    sizes, mated, nonmated = [], [], []
    for a, b, is_mated in sample_pairs:
        a, b = set(a), set(b)
        sizes += [len(a), len(b)]
        (mated if is_mated else nonmated).append(len(a & b))
    if not mated or not nonmated:
        raise InsufficientDataError("need at least one mated and one non-mated pair")
    return OverlapProfile(float(np.mean(sizes)), float(np.mean(mated)), float(np.mean(nonmated)), name)


def mean_relative_overlap(sample_pairs, mated: bool) -> float:
    vals = [relative_overlap(a, b) for a, b, m in sample_pairs if bool(m) == mated]
    if not vals:
        raise InsufficientDataError("no pairs of the requested class")
    return float(np.mean(vals))


# ---------------------------------------------------------------------------
# Characteristic codecs
# ---------------------------------------------------------------------------

RawDoc = dict
SPACING_GRID = (25.0, 30.0, 35.0, 40.0, 50.0, 60.0, 80.0)
INTERVAL_GRID = (4, 3, 2)


@dataclass(frozen=True)
class MinutiaeCodec:
    name: str
    grid: HexGridConfig = HexGridConfig()
    instances: int = 1
    clone: int = 1
    kind = "minutiae"

    @property
    def knob(self) -> float:
        return self.grid.spacing

    def knob_grid(self) -> list[float]:
        return [self.knob] + [s for s in SPACING_GRID if s > self.knob]

    def with_knob(self, value, calibration=None) -> "MinutiaeCodec":
        return replace(self, grid=replace(self.grid, spacing=float(value)))

    def quantize(self, docs: Sequence[RawDoc]) -> FeatureSet:
        if len(docs) != self.instances:
            raise ConfigError(f"{self.name}: expected {self.instances} minutiae records, got {len(docs)}")
        sets = [quantize_minutiae(MinutiaRecord.from_doc(d), self.grid) for d in docs]
        return sets[0] if self.instances == 1 else fuse(sets)

    def raw_universe(self) -> int:
        u = self.grid.universe
        return u if self.instances == 1 else self.instances * u + 1

    def to_dict(self) -> dict:
        return {"name": self.name, "type": self.kind, "instances": self.instances, "clone": self.clone,
                "grid": {"spacing": self.grid.spacing, "angle_quanta": self.grid.angle_quanta,
                         "region": list(self.grid.region), "t_max": self.grid.t_max}}


@dataclass(frozen=True)
class EmbeddingCodec:
    name: str
    dims: int = 512
    intervals: int = 4
    thresholds: Optional[tuple[tuple[float, ...], ...]] = None  # None: standard normal
    clone: int = 1
    kind = "embedding"

    def __post_init__(self):
        if self.intervals < 2:
            raise ConfigError("an embedding codec needs at least two intervals")
        if self.thresholds is not None:
            FloatEmbedding(tuple(0.0 for _ in range(self.dims)), self.thresholds, self.intervals)

    @property
    def knob(self) -> int:
        return self.intervals

    def knob_grid(self) -> list[int]:
        return [self.knob] + [n for n in INTERVAL_GRID if n < self.knob]

    def with_knob(self, value, calibration=None) -> "EmbeddingCodec":
        value = int(value)
        if self.thresholds is None or calibration is None:
            thr = None if self.thresholds is None else normal_thresholds(self.dims, value)
        else:
            thr = quantile_thresholds(calibration, value)
        return replace(self, intervals=value, thresholds=thr)

    def threshold_rows(self):
        return self.thresholds if self.thresholds is not None else normal_thresholds(self.dims, self.intervals)

    def quantize(self, docs: Sequence[RawDoc]) -> FeatureSet:
        if len(docs) != 1:
            raise ConfigError(f"{self.name}: expected one embedding, got {len(docs)}")
        values = tuple(float(v) for v in docs[0]["values"])
        if len(values) != self.dims:
            raise ConfigError(f"{self.name}: expected {self.dims} values, got {len(values)}")
        return encode_lssc(FloatEmbedding(values, self.threshold_rows(), self.intervals))

    def raw_universe(self) -> int:
        return (self.intervals - 1) * self.dims

    def to_dict(self) -> dict:
        d = {"name": self.name, "type": self.kind, "dims": self.dims, "intervals": self.intervals,
             "clone": self.clone}
        d["thresholds"] = "standard-normal" if self.thresholds is None else [list(r) for r in self.thresholds]
        return d


@dataclass(frozen=True)
class SetCodec:
    """Pre-quantised feature sets ({"elements": [...]})."""

    name: str
    universe: int
    clone: int = 1
    kind = "set"

    def quantize(self, docs: Sequence[RawDoc]) -> FeatureSet:
        if len(docs) != 1:
            raise ConfigError(f"{self.name}: expected one feature set, got {len(docs)}")
        fs = FeatureSet(docs[0]["elements"])
        if fs and fs[-1] >= self.universe:
            raise EncodingOverflowError(f"{self.name}: element {fs[-1]} outside universe {self.universe}")
        return fs

    def raw_universe(self) -> int:
        return self.universe

    def knob_grid(self):
        return []

    def to_dict(self) -> dict:
        return {"name": self.name, "type": self.kind, "universe": self.universe, "clone": self.clone}


Codec = Union[MinutiaeCodec, EmbeddingCodec, SetCodec]


def encode_characteristic(codec: Codec, docs: Sequence[RawDoc]) -> FeatureSet:
    fs = codec.quantize(docs)
    return clone(fs, codec.clone) if codec.clone > 1 else fs


def codec_from_dict(d: dict) -> Codec:
    try:
        kind = d["type"]
        name = d["name"]
        clone_m = int(d.get("clone", 1))
        if clone_m < 1:
            raise ConfigError(f"{name}: clone multiplier must be >= 1")
        if kind == "minutiae":
            g = d.get("grid", {})
            grid = HexGridConfig(float(g.get("spacing", 25)), int(g.get("angle_quanta", 6)),
                                 tuple(float(v) for v in g.get("region", (400, 500))), int(g.get("t_max", 40)))
            return MinutiaeCodec(name, grid, int(d.get("instances", 1)), clone_m)
        if kind == "embedding":
            thr = d.get("thresholds", "standard-normal")
            thr = None if thr == "standard-normal" else tuple(tuple(float(v) for v in r) for r in thr)
            return EmbeddingCodec(name, int(d.get("dims", 512)), int(d.get("intervals", 4)), thr, clone_m)
        if kind == "set":
            return SetCodec(name, int(d["universe"]), clone_m)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad characteristic section {d!r}: {exc}") from exc
    raise ConfigError(f"unknown characteristic type {kind!r}")


@dataclass(frozen=True)
class CodecConfig:
    characteristics: tuple[Codec, ...]
    field: FieldSpec = DEFAULT_FIELD
    profiles: tuple[OverlapProfile, ...] = dc_field(default=(), compare=False)

    def __post_init__(self):
        if not self.characteristics:
            raise ConfigError("config declares no characteristics")
        names = [c.name for c in self.characteristics]
        if len(set(names)) != len(names):
            raise ConfigError("characteristic names must be unique")

    @property
    def n(self) -> int:
        return len(self.characteristics)

    def max_value(self) -> int:
        """Largest fused element the pipeline can emit."""
        n = self.n
        top = 0
        for i, c in enumerate(self.characteristics, start=1):
            x_max = c.raw_universe() * c.clone - 1
            top = max(top, i + n * x_max if n > 1 else x_max)
        return top

    def check_capacity(self):
        top = self.max_value()
        if top >= self.field.order:
            raise EncodingOverflowError(
                f"fused values reach {top}, field GF(2^{self.field.e}) holds < {self.field.order}")

    def encode(self, inputs: dict[str, Sequence[RawDoc]]) -> FeatureSet:
        missing = [c.name for c in self.characteristics if c.name not in inputs]
        if missing:
            raise ConfigError(f"missing inputs for {', '.join(missing)}")
        sets = [encode_characteristic(c, inputs[c.name]) for c in self.characteristics]
        out = sets[0] if self.n == 1 else fuse(sets)
        return out.check_field(self.field)

    def to_dict(self) -> dict:
        d = {"field": {"e": self.field.e, "reduction": self.field.reduction},
             "characteristics": [c.to_dict() for c in self.characteristics]}
        if self.profiles:
            d["profiles"] = [p.to_dict() for p in self.profiles]
        return d

    def fingerprint(self) -> bytes:
        d = self.to_dict()
        d.pop("profiles", None)
        canon = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).digest()

    @classmethod
    def from_dict(cls, d: dict) -> "CodecConfig":
        f = d.get("field")
        if f is None:
            fld = DEFAULT_FIELD
        else:
            try:
                fld = FieldSpec(int(f["e"]), int(f["reduction"])) if "reduction" in f else smallest_field(int(f["e"]))
            except (KeyError, ParameterError) as exc:
                raise ConfigError(f"bad field section: {exc}") from exc
        chars = tuple(codec_from_dict(c) for c in d.get("characteristics", []))
        profiles = tuple(OverlapProfile(float(p["avg_size"]), float(p["mated_overlap"]),
                                        float(p["nonmated_overlap"]), p.get("name", ""))
                         for p in d.get("profiles", []))
        return cls(chars, fld, profiles)


# ---------------------------------------------------------------------------
# Overlap balancing (f) by calibration
# ---------------------------------------------------------------------------

@dataclass
class BalanceResult:
    codec: Codec
    reached: bool
    target: float
    achieved: float
    nonmated_before: float
    mated_before: float
    mated_after: float


def _encode_pairs(codec: Codec, corpus):
    return [(codec.quantize(a), codec.quantize(b), m) for a, b, m in corpus]


def balance_overlap_f(codec: Codec, corpus, target: float, knob_values=None,
                      calibration=None) -> BalanceResult:
    """Least coarse knob setting whose non-mated relative overlap reaches ``target``.

    ``corpus`` holds (docs_a, docs_b, mated) raw samples of this
    characteristic.  The mated relative overlap before/after is reported as
    the side effect on genuine comparisons.  An unreachable target returns
    the unchanged codec with ``reached=False``.
    """
    grid = list(knob_values) if knob_values is not None else codec.knob_grid()
    base = _encode_pairs(codec, corpus)
    nm0 = mean_relative_overlap(base, False)
    m0 = mean_relative_overlap(base, True)
    best = None
    for value in grid:
        cand = codec.with_knob(value, calibration)
        pairs = base if value == codec.knob else _encode_pairs(cand, corpus)
        nm = mean_relative_overlap(pairs, False)
        best = (cand, nm, mean_relative_overlap(pairs, True))
        if nm >= target - 1e-12:
            return BalanceResult(cand, True, target, nm, nm0, m0, best[2])
    achieved = best[1] if best else nm0
    return BalanceResult(codec, False, target, achieved, nm0, m0, m0)
