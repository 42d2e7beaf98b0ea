"""Disorder Monte Carlo: incomplete lattices, positional and orientational jitter.

Sample ``i`` draws from its own Philox stream keyed on ``(master_seed, i)``,
so a run is bit-identical whatever the execution order or worker count.
Free-space pair rates on the discretised jitter grids are memoised; every
cached value is a pure function of its key, so hits and misses agree exactly.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import threading
from collections import OrderedDict
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Union

import numpy as np

from .correlations import g2_spectral
from .coupling import (
    DecayMatrix,
    FreeSpace,
    IdealDicke,
    Independent,
    SingleModeBIC,
    Tabulated,
    build_matrices,
    free_space_pair_rate,
)
from .emitters import (
    DEFAULT_LAMBDA0_NM,
    LatticeSpec,
    build_square_lattice,
    draw_orientation_offsets,
    draw_position_offsets,
    filling_count,
    filling_indices,
    in_plane_dipoles,
    orientation_grid,
    position_grid,
)

DEFAULT_SAMPLES = {"filling": 10_000, "position": 1_000, "orientation": 1_000}
DEFAULT_CACHE_SIZE = 200_000


@dataclass(frozen=True)
class FillingMode:
    eta: float
    kind = "filling"

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError("filling fraction must lie in [0, 1]")

    def label(self):
        return f"eta={self.eta:g}"

    def to_dict(self):
        return {"kind": self.kind, "eta": self.eta}


@dataclass(frozen=True)
class PositionMode:
    delta_r: float
    steps: int = 100
    kind = "position"

    def __post_init__(self):
        if self.delta_r < 0 or self.steps < 1:
            raise ValueError("need delta_r >= 0 and steps >= 1")

    def label(self):
        return f"dr={self.delta_r:g}nm"

    def to_dict(self):
        return {"kind": self.kind, "delta_r": self.delta_r, "steps": self.steps}


@dataclass(frozen=True)
class OrientationMode:
    delta_theta: float
    steps: int = 100
    kind = "orientation"

    def __post_init__(self):
        if not 0.0 <= self.delta_theta <= 180.0 or self.steps < 1:
            raise ValueError("need 0 <= delta_theta <= 180 and steps >= 1")

    def label(self):
        return f"dtheta={self.delta_theta:g}deg"

    def to_dict(self):
        return {"kind": self.kind, "delta_theta": self.delta_theta, "steps": self.steps}


DisorderMode = Union[FillingMode, PositionMode, OrientationMode]


@dataclass(frozen=True)
class DisorderConfig:
    base_lattice: LatticeSpec
    environment: object
    mode: DisorderMode
    n_samples: int | None = None
    master_seed: int = 0
    lambda0_nm: float = DEFAULT_LAMBDA0_NM
    cache_size: int = DEFAULT_CACHE_SIZE

    def __post_init__(self):
        if self.n_samples is None:
            object.__setattr__(self, "n_samples", DEFAULT_SAMPLES[self.mode.kind])
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be an unsigned 64-bit integer")
        env = self.environment
        if isinstance(env, Tabulated):
            if self.mode.kind != "filling":
                raise ValueError(
                    f"unsupported combination: tabulated environment with {self.mode.kind} disorder"
                )
            if env.decay.n != self.base_lattice.n_total:
                raise ValueError("tabulated matrix does not match the lattice size")
        elif not isinstance(env, (FreeSpace, SingleModeBIC, IdealDicke, Independent)):
            raise ValueError(f"unsupported environment {env!r}")
        if isinstance(self.mode, FillingMode):
            if filling_count(self.base_lattice.n_total, self.mode.eta) < 2:
                raise ValueError("filling fraction leaves fewer than two emitters")
        elif self.base_lattice.n_total < 2:
            raise ValueError("disorder runs need at least two emitters")

    def to_dict(self) -> dict:
        return {
            "base_lattice": self.base_lattice.to_dict(),
            "environment": self.environment.to_dict(),
            "mode": self.mode.to_dict(),
            "n_samples": int(self.n_samples),
            "master_seed": int(self.master_seed),
            "lambda0_nm": float(self.lambda0_nm),
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def sample_rng(master_seed: int, index: int) -> np.random.Generator:
    """Independent counter-based stream for sample ``index``."""
    seq = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(seq))


class RateCache:
    """Bounded LRU map safe for concurrent lookup and insert."""

    def __init__(self, maxsize: int = DEFAULT_CACHE_SIZE):
        self.maxsize = maxsize
        self._data = OrderedDict()
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key, compute):
        with self._lock:
            if key in self._data:
                self._data.move_to_end(key)
                self.hits += 1
                return self._data[key]
        value = compute()
        with self._lock:
            self.misses += 1
            self._data[key] = value
            if len(self._data) > self.maxsize:
                self._data.popitem(last=False)
        return value

    def __len__(self):
        return len(self._data)


class _Sampler:
    """Draws disorder realisations and maps each to its decay matrix."""

    def __init__(self, config: DisorderConfig, cache: RateCache | None = None):
        self.config = config
        self.cache = cache if cache is not None else RateCache(config.cache_size)
        self.lattice = build_square_lattice(config.base_lattice, config.lambda0_nm)
        n_side = config.base_lattice.n_side
        self.cells = np.array([(i, j) for i in range(n_side) for j in range(n_side)])
        env = config.environment
        if isinstance(env, Tabulated):
            self.full = env.decay.validated()
        elif isinstance(config.mode, FillingMode) or not isinstance(env, FreeSpace):
            self.full = build_matrices(self.lattice, env)[0]
        else:
            self.full = None
        mode = config.mode
        if isinstance(mode, PositionMode):
            self.grid = position_grid(mode.delta_r, mode.steps)
        elif isinstance(mode, OrientationMode):
            self.grid = orientation_grid(mode.delta_theta, mode.steps)

    def matrix(self, index: int) -> DecayMatrix:
        cfg = self.config
        rng = sample_rng(cfg.master_seed, index)
        mode = cfg.mode
        n = self.lattice.n
        if isinstance(mode, FillingMode):
            return self.full.subsample(filling_indices(n, mode.eta, rng))
        if isinstance(mode, PositionMode):
            if mode.delta_r == 0:
                offsets = np.full((n, 2), len(self.grid) // 2)
            else:
                offsets = draw_position_offsets(n, mode.delta_r, mode.steps, rng)
            if isinstance(cfg.environment, FreeSpace):
                return self._free_space(offsets, np.full(n, -1))
            pos = self.lattice.positions.copy()
            pos[:, :2] += self.grid[offsets]
            return build_matrices(self.lattice.replace(positions=pos), cfg.environment)[0]
        if mode.delta_theta == 0:
            angles = np.full(n, mode.steps // 2)
        else:
            angles = draw_orientation_offsets(n, mode.delta_theta, mode.steps, rng)
        if isinstance(cfg.environment, FreeSpace):
            return self._free_space(np.full((n, 2), -1), angles)
        dips = in_plane_dipoles(self.grid[angles])
        return build_matrices(self.lattice.replace(dipole_dirs=dips), cfg.environment)[0]

    def _free_space(self, offsets, angles) -> DecayMatrix:
        """Pair rates keyed on lattice-cell difference and grid indices.

        An offset or angle index of -1 means "unperturbed".
        """
        spec = self.config.base_lattice
        lam = self.config.lambda0_nm
        grid = getattr(self, "grid", None)
        n = len(self.cells)
        g = np.eye(n)

        def dipole(k):
            if k < 0:
                return np.asarray(spec.dipole_axis)
            return in_plane_dipoles([grid[k]])[0]

        def shift(k):
            return 0.0 if k < 0 else grid[k]

        for mu in range(n):
            for nu in range(mu + 1, n):
                di, dj = self.cells[nu] - self.cells[mu]
                key = (int(di), int(dj), int(offsets[mu, 0]), int(offsets[mu, 1]),
                       int(offsets[nu, 0]), int(offsets[nu, 1]), int(angles[mu]), int(angles[nu]))

                def compute(key=key):
                    di, dj, ax, ay, bx, by, ta, tb = key
                    r_b = [spec.lattice_const_d * di + shift(bx) - shift(ax),
                           spec.lattice_const_d * dj + shift(by) - shift(ay), 0.0]
                    return free_space_pair_rate([0.0, 0.0, 0.0], dipole(ta), r_b,
                                                dipole(tb), lam)[0]

                g[mu, nu] = g[nu, mu] = self.cache.get(key, compute)
        return DecayMatrix(g)


def _run_chunk(config: DisorderConfig, indices) -> list:
    sampler = _Sampler(config)
    return [g2_spectral(sampler.matrix(i), validate=False).value for i in indices]


@dataclass(frozen=True)
class SummaryStats:
    mean: float
    std: float
    skewness: float

    @property
    def skewness_defined(self) -> bool:
        return not math.isnan(self.skewness)


def summary_stats(samples) -> SummaryStats:
    """Mean, sample standard deviation and skewness.

    The skewness is ``sum (x - mean)^3 / ((n - 1) std^3)``; it is NaN when
    the standard deviation vanishes.
    """
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    if n < 2:
        raise ValueError("summary statistics need at least two samples")
    # shift by the first sample so constant data gives exactly zero spread
    shifted = x - x[0]
    mean = x[0] + shifted.sum() / n
    dev = shifted - shifted.sum() / n
    std = math.sqrt(float(dev @ dev) / (n - 1))
    if std == 0.0:
        return SummaryStats(float(mean), 0.0, math.nan)
    skew = float((dev**3).sum()) / ((n - 1) * std**3)
    return SummaryStats(float(mean), std, skew)


@dataclass(frozen=True)
class ErrorBars:
    lower: float
    upper: float
    degenerate: bool


def skew_adjusted_errorbars(mean: float, std: float, skewness: float) -> ErrorBars:
    """Half-widths ``std (1 - skew/2)`` below and ``std (1 + skew/2)`` above the mean.

    ``degenerate`` flags ``|skew| >= 2``, where one bar collapses; negative
    half-widths are clipped to zero.
    """
    if std < 0:
        raise ValueError("std must be non-negative")
    if math.isnan(skewness):
        skewness = 0.0
    lower = std * (1.0 - skewness / 2.0)
    upper = std * (1.0 + skewness / 2.0)
    return ErrorBars(max(lower, 0.0), max(upper, 0.0), abs(skewness) >= 2.0)


@dataclass
class DisorderDistribution:
    samples: np.ndarray
    mean: float
    std: float
    skewness: float
    config: dict = field(default_factory=dict)
    config_hash: str = ""
    label: str = ""
    cache_hits: int = 0

    @classmethod
    def from_samples(cls, samples, config: dict | None = None, config_hash: str = "",
                     label: str = "") -> "DisorderDistribution":
        samples = np.asarray(samples, dtype=float)
        if samples.size >= 2:
            st = summary_stats(samples)
        else:
            st = SummaryStats(float(samples[0]), 0.0, math.nan)
        return cls(samples, st.mean, st.std, st.skewness, config or {}, config_hash, label)

    def to_dict(self) -> dict:
        skew = None if math.isnan(self.skewness) else self.skewness
        return {
            "config": self.config,
            "samples": [float(v) for v in self.samples],
            "mean": self.mean,
            "std": self.std,
            "skewness": skew,
            "config_hash": self.config_hash,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            Path(path).write_text(text + "\n")
        return text

    @classmethod
    def from_json(cls, source) -> "DisorderDistribution":
        text = Path(source).read_text() if not str(source).lstrip().startswith("{") else source
        doc = json.loads(text)
        skew = doc.get("skewness")
        return cls(np.array(doc["samples"], dtype=float), doc["mean"], doc["std"],
                   math.nan if skew is None else skew, doc.get("config", {}),
                   doc.get("config_hash", ""))

    def errorbars(self) -> ErrorBars:
        return skew_adjusted_errorbars(self.mean, self.std, self.skewness)


def run_disorder(config: DisorderConfig, workers: int = 1,
                 cache: RateCache | None = None) -> DisorderDistribution:
    """G2(0,0) over ``config.n_samples`` disorder realisations."""
    indices = range(config.n_samples)
    if workers <= 1:
        sampler = _Sampler(config, cache)
        values = [g2_spectral(sampler.matrix(i), validate=False).value for i in indices]
        hits = sampler.cache.hits
    else:
        chunks = [list(indices[k::workers]) for k in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_chunk, [config] * workers, chunks))
        values = [0.0] * config.n_samples
        for chunk, part in zip(chunks, parts):
            for i, v in zip(chunk, part):
                values[i] = v
        hits = 0
    dist = DisorderDistribution.from_samples(values, config.to_dict(), config.digest(),
                                             config.mode.label())
    dist.cache_hits = hits
    return dist


@dataclass(frozen=True)
class Histogram:
    edges: np.ndarray
    counts: np.ndarray

    def to_csv(self, path=None) -> str:
        lines = ["bin_left,bin_right,count"]
        for lo, hi, c in zip(self.edges[:-1], self.edges[1:], self.counts):
            lines.append(f"{lo:.17g},{hi:.17g},{int(c)}")
        text = "\n".join(lines) + "\n"
        if path is not None:
            Path(path).write_text(text)
        return text


def histogram(samples, n_bins: int = 50, range=None) -> Histogram:
    x = np.asarray(samples, dtype=float).ravel()
    if x.size == 0:
        raise ValueError("cannot histogram an empty sample")
    if n_bins < 1:
        raise ValueError("n_bins must be positive")
    if range is not None and (x.min() < range[0] or x.max() > range[1]):
        raise ValueError("samples fall outside the histogram range")
    counts, edges = np.histogram(x, bins=n_bins, range=range)
    return Histogram(edges, counts)


# -- summary tables --------------------------------------------------------------

STATS_HEADER = ["noise", "mean", "std", "skewness"]


@dataclass(frozen=True)
class StatsRow:
    noise: str
    mean: float
    std: float
    skewness: float


def read_stats_table(source=None) -> list:
    """Parse a ``noise,mean,std,skewness`` table; defaults to the bundled reference."""
    if source is None:
        text = resources.files("superradiance").joinpath("data/table1.csv").read_text()
    elif isinstance(source, str) and "\n" in source:
        text = source
    else:
        text = Path(source).read_text()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if [h.strip() for h in header] != STATS_HEADER:
        raise ValueError(f"unexpected stats header {header}")
    return [StatsRow(r[0], float(r[1]), float(r[2]), float(r[3])) for r in reader if r]


def format_stats_table(rows) -> str:
    lines = [",".join(STATS_HEADER)]
    for r in rows:
        skew = "nan" if math.isnan(r.skewness) else repr(float(r.skewness))
        lines.append(f"{r.noise},{float(r.mean)!r},{float(r.std)!r},{skew}")
    return "\n".join(lines) + "\n"


def stats_row(dist: DisorderDistribution) -> StatsRow:
    return StatsRow(dist.label or "sample", dist.mean, dist.std, dist.skewness)
