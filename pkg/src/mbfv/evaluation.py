"""Security evaluation: synthetic mated/non-mated trials, GMR/FMR and FAS.

The licensed face and fingerprint corpora are replaced by a generator that
reproduces the average set sizes and overlaps of each characteristic
(:data:`FACE`, :data:`FINGERS`).  A trial draws one pair of sets per
characteristic, fuses them when the system has several characteristics,
locks the first set and verifies the second at every polynomial degree k.

Pair draws are keyed by (seed, class, trial index, characteristic name), so
a single-characteristic system and a fused system built from the same seed
see identical per-characteristic samples.
"""

from __future__ import annotations

import math
import statistics
import zlib
from dataclasses import asdict, dataclass, field as dc_field, replace
from typing import Optional, Sequence

import numpy as np

from .codec import OverlapProfile, fuse
from .decoder import GsParams
from .errors import ConfigError, ExtrapolationError, ParameterError
from .galois import DEFAULT_FIELD, FieldSpec, lagrange_mults, smallest_field
from .vault import DecoderChoice, FeatureSet, enroll, verify

FACE = OverlapProfile(769.83, 615.04, 449.40, "face")
FINGERS = OverlapProfile(161.45, 89.92, 21.48, "fingers")
FUSION = OverlapProfile(931.28, 704.96, 470.88, "fusion")
PROFILES = {p.name: p for p in (FACE, FINGERS)}


# ---------------------------------------------------------------------------
# Synthetic feature sets
# ---------------------------------------------------------------------------

def default_universe(profile: OverlapProfile) -> int:
    return 4 * math.ceil(profile.avg_size) + 64


def generate_pair(profile: OverlapProfile, mated: bool, rng: np.random.Generator,
                  universe: Optional[int] = None) -> tuple[FeatureSet, FeatureSet]:
    """Two sets with E|A| = E|B| = avg_size and E|A & B| = the class overlap.

    The shared part is Binomial(ceil(avg_size), overlap/ceil(avg_size)); each
    set then gets a Poisson(avg_size - overlap) private remainder.  All
    elements are distinct draws from ``range(universe)``.
    """
    overlap = profile.mated_overlap if mated else profile.nonmated_overlap
    n = math.ceil(profile.avg_size)
    shared = int(rng.binomial(n, overlap / n)) if n else 0
    rest = profile.avg_size - overlap
    ra, rb = (int(x) for x in rng.poisson(rest, size=2))
    universe = universe or default_universe(profile)
    need = shared + ra + rb
    if need > universe:
        raise ConfigError(f"universe of {universe} too small for {need} distinct elements")
    elems = rng.choice(universe, size=need, replace=False)
    a = FeatureSet(elems[: shared + ra].tolist())
    b = FeatureSet(elems[:shared].tolist() + elems[shared + ra:].tolist())
    return a, b


def generate_fixed_pair(size: int, overlap: int, rng: np.random.Generator,
                        universe: Optional[int] = None) -> tuple[FeatureSet, FeatureSet]:
    """Two sets of exactly ``size`` elements sharing exactly ``overlap``."""
    if not 0 <= overlap <= size:
        raise ConfigError("overlap must lie in [0, size]")
    universe = universe or 4 * size + 64
    elems = rng.choice(universe, size=2 * size - overlap, replace=False)
    return FeatureSet(elems[:size].tolist()), FeatureSet(elems[:overlap].tolist() + elems[size:].tolist())


def synthetic_minutiae(rng: np.random.Generator, n: int = 45, region=(400.0, 500.0)) -> np.ndarray:
    """Random (x, y, theta, quality) rows."""
    w, h = region
    return np.column_stack([rng.uniform(0, w, n), rng.uniform(0, h, n),
                            rng.uniform(0, 2 * math.pi, n), rng.uniform(0, 100, n)])


def perturb_minutiae(rng: np.random.Generator, base: np.ndarray, region=(400.0, 500.0),
                     sigma_xy: float = 6.0, sigma_theta: float = 0.15, drop: float = 0.2,
                     spurious: int = 8) -> np.ndarray:
    """Second impression of the same finger: jitter, missing and spurious minutiae."""
    w, h = region
    keep = base[rng.random(len(base)) >= drop].copy()
    keep[:, 0] = np.clip(keep[:, 0] + rng.normal(0, sigma_xy, len(keep)), 0, np.nextafter(w, 0))
    keep[:, 1] = np.clip(keep[:, 1] + rng.normal(0, sigma_xy, len(keep)), 0, np.nextafter(h, 0))
    keep[:, 2] = np.mod(keep[:, 2] + rng.normal(0, sigma_theta, len(keep)), 2 * math.pi)
    keep[:, 3] = np.clip(keep[:, 3] + rng.normal(0, 10, len(keep)), 0, 100)
    return np.vstack([keep, synthetic_minutiae(rng, spurious, region)])


def minutiae_doc(rows: np.ndarray, region=(400.0, 500.0)) -> dict:
    rows = rows.copy()
    rows[:, 2] = np.minimum(rows[:, 2], np.nextafter(2 * math.pi, 0))
    return {"minutiae": rows.tolist(), "region": list(region)}


def synthetic_minutiae_corpus(rng: np.random.Generator, n_pairs: int, instances: int = 1,
                              region=(400.0, 500.0)):
    """Alternating mated/non-mated raw corpus: list of (docs_a, docs_b, mated)."""
    out = []
    for i in range(n_pairs):
        mated = i % 2 == 0
        a = [synthetic_minutiae(rng, region=region) for _ in range(instances)]
        b = ([perturb_minutiae(rng, x, region) for x in a] if mated
             else [synthetic_minutiae(rng, region=region) for _ in range(instances)])
        out.append(([minutiae_doc(x, region) for x in a], [minutiae_doc(x, region) for x in b], mated))
    return out


def synthetic_embedding_corpus(rng: np.random.Generator, n_pairs: int, dims: int = 512,
                               noise: float = 0.5, shared: float = 0.6):
    """Gaussian embeddings; non-mated pairs share a common population component."""
    out = []
    for i in range(n_pairs):
        mated = i % 2 == 0
        common = rng.normal(0, 1, dims) * math.sqrt(shared)
        a = common + rng.normal(0, math.sqrt(1 - shared), dims)
        if mated:
            b = a + rng.normal(0, noise, dims)
            b /= math.sqrt(1 + noise ** 2)
        else:
            b = common + rng.normal(0, math.sqrt(1 - shared), dims)
        out.append(([{"values": a.tolist()}], [{"values": b.tolist()}], mated))
    return out


# ---------------------------------------------------------------------------
# FAS
# ---------------------------------------------------------------------------

def estimate_fas(t_ops: float, fmr: float, expected: bool = False) -> float:
    """Bits of work for a false-accept attack to succeed with probability 1/2.

    ``expected=True`` uses the mean number of attempts t/FMR instead.
    """
    if t_ops <= 0:
        raise ParameterError("average operation count must be positive")
    if not 0 <= fmr <= 1:
        raise ParameterError("FMR must be a fraction in [0, 1]")
    if fmr == 0:
        raise ExtrapolationError("FMR is zero; extrapolate from neighbouring rows")
    if fmr == 1:
        return math.log2(t_ops)
    n = t_ops / fmr if expected else t_ops * math.log(0.5) / math.log1p(-fmr)
    return math.log2(n)


def extrapolate_fas(rows: Sequence[tuple[int, Optional[float]]]) -> list[tuple[int, float, bool]]:
    """Fill rows without an estimate (FAS None) linearly from the last two estimable rows.

    Returns (k, fas, extrapolated) per input row.
    """
    out = []
    known: list[tuple[int, float]] = []
    for k, fas in rows:
        if fas is not None:
            known.append((k, fas))
            out.append((k, fas, False))
            continue
        if len(known) < 2:
            raise ExtrapolationError(f"k={k}: fewer than two estimable rows precede it")
        (k1, f1), (k2, f2) = known[-2], known[-1]
        out.append((k, f2 + (k - k2) * (f2 - f1) / (k2 - k1), True))
    return out


# ---------------------------------------------------------------------------
# Trials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrialConfig:
    profiles: tuple[OverlapProfile, ...]
    k_values: tuple[int, ...]
    decoder: DecoderChoice = DecoderChoice()
    n_mated: int = 200
    n_nonmated: int = 200
    seed: int = 0
    scale: float = 1.0
    name: str = ""
    field: FieldSpec = DEFAULT_FIELD

    def __post_init__(self):
        if not self.profiles:
            raise ConfigError("trial config needs at least one profile")
        if self.n_mated < 1 or self.n_nonmated < 1:
            raise ConfigError("trial counts must be >= 1")
        if self.scale < 1:
            raise ConfigError("scale must be >= 1")
        if not self.k_values or min(self.k_values) < 1:
            raise ConfigError("k values must be >= 1")

    @property
    def scaled_profiles(self) -> tuple[OverlapProfile, ...]:
        return tuple(p.scaled(self.scale) for p in self.profiles)

    def expected_size(self) -> float:
        return sum(p.avg_size for p in self.scaled_profiles)

    def to_dict(self) -> dict:
        d = self.decoder
        return {
            "name": self.name, "profiles": [p.to_dict() for p in self.profiles],
            "k_values": list(self.k_values),
            "decoder": {"kind": d.kind, "multiplicity": d.gs.multiplicity, "max_list": d.gs.max_list,
                        "budget": d.budget},
            "n_mated": self.n_mated, "n_nonmated": self.n_nonmated, "seed": self.seed, "scale": self.scale,
            "field": {"e": self.field.e, "reduction": self.field.reduction},
        }

    @classmethod
    def from_dict(cls, d: dict, defaults: Optional[dict] = None) -> "TrialConfig":
        merged = dict(defaults or {})
        merged.update(d)
        try:
            profiles = []
            for p in merged["profiles"]:
                if isinstance(p, str):
                    if p not in PROFILES:
                        raise ConfigError(f"unknown built-in profile {p!r}")
                    profiles.append(PROFILES[p])
                else:
                    profiles.append(OverlapProfile(float(p["avg_size"]), float(p["mated_overlap"]),
                                                   float(p["nonmated_overlap"]), p.get("name", "")))
            dec = merged.get("decoder", {})
            choice = DecoderChoice(dec.get("kind", "gs"),
                                   GsParams(int(dec.get("multiplicity", 1)), int(dec.get("max_list", 16))),
                                   dec.get("budget"))
            f = merged.get("field")
            fld = DEFAULT_FIELD if f is None else (
                FieldSpec(int(f["e"]), int(f["reduction"])) if "reduction" in f else smallest_field(int(f["e"])))
            return cls(tuple(profiles), tuple(int(k) for k in merged["k_values"]), choice,
                       int(merged.get("n_mated", 200)), int(merged.get("n_nonmated", 200)),
                       int(merged.get("seed", 0)), float(merged.get("scale", 1)),
                       merged.get("name", ""), fld)
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad trial config: {exc}") from exc


@dataclass
class TrialRow:
    k: int
    gmr: Optional[float]  # percent
    fmr: Optional[float]  # percent
    fas: Optional[float]
    extrapolated: bool
    infeasible: bool = False
    avg_ops: Optional[float] = None
    median_ops: Optional[float] = None
    enrolled_mated: int = 0
    enrolled_nonmated: int = 0


@dataclass
class TrialReport:
    name: str
    rows: list[TrialRow]
    metadata: dict = dc_field(default_factory=dict)

    @property
    def avg_ops(self) -> dict[int, Optional[float]]:
        return {r.k: r.avg_ops for r in self.rows}

    def row(self, k: int) -> TrialRow:
        for r in self.rows:
            if r.k == k:
                return r
        raise KeyError(k)

    def to_dict(self) -> dict:
        return {"name": self.name, "rows": [asdict(r) for r in self.rows], "metadata": self.metadata}

    def to_text(self) -> str:
        md = self.metadata
        lines = [f"# {self.name or 'system'}: {', '.join(md.get('profiles', []))} "
                 f"(scale {md.get('scale')}, seed {md.get('seed')}, decoder {md.get('decoder')})",
                 f"{'k':>5}  {'GMR (in %)':>10}  {'FMR (in %)':>12}  {'FAS (in bits)':>13}"]
        for r in self.rows:
            if r.infeasible:
                lines.append(f"{r.k:>5}  {'infeasible':>10}")
                continue
            fas = "n/a" if r.fas is None else f"{r.fas:.2f}" + ("*" if r.extrapolated else "")
            lines.append(f"{r.k:>5}  {r.gmr:>10.2f}  {r.fmr:>12.6g}  {fas:>13}")
        lines.append("* extrapolated from the last two estimable rows")
        return "\n".join(lines) + "\n"


def _trial_rng(seed: int, mated: bool, trial: int, tag: str) -> np.random.Generator:
    return np.random.default_rng([seed, int(mated), trial, zlib.crc32(tag.encode())])


def trial_sets(config: TrialConfig, mated: bool, trial: int,
               only: Optional[str] = None) -> tuple[FeatureSet, FeatureSet]:
    """Enrolment and probe set for one trial (fused when several profiles).

    ``only`` keeps just one characteristic's part of the probe, as an
    attacker who can present only that characteristic would.
    """
    profiles = config.scaled_profiles
    pairs = []
    for p in profiles:
        rng = _trial_rng(config.seed, mated, trial, p.name or "profile")
        pairs.append(generate_pair(p, mated, rng))
    if len(pairs) == 1:
        return pairs[0]
    probe_parts = [b if only is None or p.name == only else FeatureSet() for (a, b), p in zip(pairs, profiles)]
    return fuse([a for a, _ in pairs], config.field), fuse(probe_parts, config.field)


def _attempt(config: TrialConfig, enrol: FeatureSet, probe: FeatureSet, k: int,
             kappa_rng: np.random.Generator):
    if len(enrol) <= k:
        return None
    record, _ = enroll(enrol, k, config.field, rng=kappa_rng)
    out = verify(record, probe, config.decoder)
    return out.accepted, out.decode_ops


def run_trials(config: TrialConfig, progress=None) -> TrialReport:
    """GMR/FMR per k over mated and non-mated synthetic trials, then FAS."""
    ks = list(config.k_values)
    results = {k: {True: [], False: []} for k in ks}
    sizes = []
    for mated, n in ((True, config.n_mated), (False, config.n_nonmated)):
        for trial in range(n):
            enrol, probe = trial_sets(config, mated, trial)
            sizes.append(len(enrol))
            kappa_rng = _trial_rng(config.seed, mated, trial, "kappa")
            for k in ks:
                res = _attempt(config, enrol, probe, k, kappa_rng)
                if res is not None:
                    results[k][mated].append(res)
            if progress is not None:
                progress(mated, trial)
    mean_size = float(np.mean(sizes))
    rows = []
    for k in ks:
        gen, imp = results[k][True], results[k][False]
        if k >= mean_size or not gen or not imp:
            rows.append(TrialRow(k, None, None, None, False, True,
                                 enrolled_mated=len(gen), enrolled_nonmated=len(imp)))
            continue
        gmr = 100.0 * sum(a for a, _ in gen) / len(gen)
        fmr_frac = sum(a for a, _ in imp) / len(imp)
        ops = [o for _, o in imp]
        avg = float(np.mean(ops))
        fas = estimate_fas(avg, fmr_frac) if fmr_frac > 0 and avg > 0 else None
        rows.append(TrialRow(k, gmr, 100.0 * fmr_frac, fas, fmr_frac == 0, False,
                             avg, float(statistics.median(ops)), len(gen), len(imp)))
    _fill_extrapolation(rows)
    d = config.decoder
    dec_text = (f"gs m={d.gs.multiplicity} L={d.gs.max_list}" if d.kind == "gs"
                else f"bruteforce budget={d.budget}")
    meta = {
        "seed": config.seed, "scale": config.scale, "decoder": dec_text,
        "profiles": [p.name for p in config.profiles],
        "n_mated": config.n_mated, "n_nonmated": config.n_nonmated,
        "field": {"e": config.field.e, "reduction": config.field.reduction},
        "mean_enrolment_size": mean_size,
        "ops_unit": "field multiplications divided by those of one k-point Lagrange interpolation"
                    if d.kind == "gs" else "k-point Lagrange interpolations",
        "lagrange_mults": {str(k): lagrange_mults(k) for k in ks},
    }
    return TrialReport(config.name, rows, meta)


def _fill_extrapolation(rows: list[TrialRow]):
    feasible = [r for r in rows if not r.infeasible]
    known: list[tuple[int, float]] = []
    for r in feasible:
        if not r.extrapolated:
            if r.fas is not None:
                known.append((r.k, r.fas))
            continue
        if len(known) >= 2:
            r.fas = extrapolate_fas(known[-2:] + [(r.k, None)])[-1][1]


def gmr_fas_curve(report: TrialReport) -> list[tuple[float, float]]:
    return [(r.gmr, r.fas) for r in report.rows if not r.infeasible and r.fas is not None]


def curve_text(points) -> str:
    return "".join(f"{g:.4f} {f:.4f}\n" for g, f in points)


def curve_dominates(better, worse) -> bool:
    """Each point of ``worse`` is weakly beaten in both GMR and FAS by some point of ``better``."""
    return all(any(gb >= gw and fb >= fw for gb, fb in better) for gw, fw in worse)


def subset_attack_rate(config: TrialConfig, k: int, characteristic: str,
                       n: Optional[int] = None) -> float:
    """Fraction of mated trials unlocked by presenting one characteristic only."""
    n = n or config.n_mated
    hits = tried = 0
    for trial in range(n):
        enrol, probe = trial_sets(config, True, trial, only=characteristic)
        res = _attempt(config, enrol, probe, k, _trial_rng(config.seed, True, trial, "kappa"))
        if res is None:
            continue
        tried += 1
        hits += res[0]
    return hits / tried if tried else 0.0


def fused_config(configs: Sequence[TrialConfig], k_values: Sequence[int], name: str = "fusion") -> TrialConfig:
    """System fusing all profiles of ``configs`` (same seed, scale, decoder as the first)."""
    base = configs[0]
    return replace(base, profiles=tuple(p for c in configs for p in c.profiles),
                   k_values=tuple(k_values), name=name)
