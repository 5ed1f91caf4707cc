"""Feature-recovery simulations: how well do planted features survive reduction.

The protocol represents a square matrix whose columns are classes and whose
rows are features.  Every cell receives a uniform integer background on
[0, M], then each class gets rho*N randomly chosen features boosted by a
weight w on top of the background.  After encoding the whole matrix, a sample
of classes is decoded and the top rho*N components per class are compared
with the planted rows.  Reported statistics are the per-class correct counts
and the mean decoded value by descending rank.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence, TextIO

import numpy as np

from .core import DimensionSpec, NriSpec, NriTensor, ranked_order

__all__ = [
    "RecoveryConfig",
    "RecoveryReport",
    "snr_db",
    "index_dim_for_ratio",
    "run_recovery",
    "sweep",
    "SWEEP_HEADER",
    "sweep_rows",
    "write_sweep_csv",
]

SWEEP_HEADER = "mode,N,n,chi,rho,w,M,xi,mean,std,mu_over_sigma,snr_db,runtime_s"

_MODES = ("one_way", "two_way", "direct")


def snr_db(rho: float, w: float, noise_max: int) -> float:
    """Encoded signal-to-noise ratio in decibels for the recovery protocol.

    Signal RMS is sqrt(rho)*w; the RMS of uniform integers on {0..M} is
    sqrt(M(2M+1)/6), which makes the ratio 6*rho*w^2 / (M(2M+1)).
    """
    if not 0 < rho <= 1:
        raise ValueError(f"rho must be in (0, 1], got {rho}")
    if w <= 0:
        raise ValueError(f"w must be positive, got {w}")
    if noise_max < 0:
        raise ValueError(f"noise_max must be non-negative, got {noise_max}")
    if noise_max == 0:
        return math.inf
    return 10.0 * math.log10(6.0 * rho * w * w / (noise_max * (2 * noise_max + 1)))


def index_dim_for_ratio(matrix_size: int, xi: float, rank: int) -> int:
    """State dimensionality achieving reduction ratio xi at the given rank.

    The index-vector length scales as n = N * xi^(-1/r).
    """
    if xi < 1:
        raise ValueError(f"xi must be >= 1, got {xi}")
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    return int(round(matrix_size * xi ** (-1.0 / rank)))


@dataclass(frozen=True)
class RecoveryConfig:
    """One recovery run: matrix geometry, planting density, noise, sampling."""

    matrix_size: int
    state_size: int
    chi: int = 8
    mode: str = "two_way"
    feature_density: float = 0.005
    feature_weight: int = 100
    noise_max: int = 10
    classes_sampled: int | None = None
    seed: int = 0
    profile_length: int | None = None

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"mode must be one of {_MODES}, got {self.mode!r}")
        if self.feature_density * self.matrix_size < 1:
            raise ValueError("feature_density * matrix_size must be at least 1")
        if self.mode == "direct" and self.state_size != self.matrix_size:
            raise ValueError("direct mode requires state_size == matrix_size")
        if self.mode != "direct" and self.xi <= 1:
            raise ValueError("reduction ratio must exceed 1 for one_way/two_way")
        if self.feature_weight <= 0:
            raise ValueError("feature_weight must be positive")
        if self.noise_max < 0:
            raise ValueError("noise_max must be non-negative")

    @property
    def features_per_class(self) -> int:
        return int(round(self.feature_density * self.matrix_size))

    @property
    def xi(self) -> float:
        """Dimension reduction ratio: component cells per state cell."""
        if self.mode == "two_way":
            return (self.matrix_size / self.state_size) ** 2
        if self.mode == "one_way":
            return self.matrix_size / self.state_size
        return 1.0

    def tensor_spec(self) -> NriSpec:
        n, s, chi = self.matrix_size, self.state_size, self.chi
        if self.mode == "two_way":
            dims = (DimensionSpec.random(n, s, chi), DimensionSpec.random(n, s, chi))
        elif self.mode == "one_way":
            dims = (DimensionSpec.random(n, s, chi), DimensionSpec.direct(n))
        else:
            dims = (DimensionSpec.direct(n), DimensionSpec.direct(n))
        return NriSpec(dims, master_seed=self.seed, element_kind="int64")


@dataclass
class RecoveryReport:
    """Recovery statistics over the sampled classes."""

    config: RecoveryConfig
    per_class_correct: np.ndarray
    profile_rank_mean: np.ndarray
    profile_rank_std: np.ndarray
    snr_encoded_db: float
    runtime_seconds: float
    saturated: bool = False

    @property
    def features_per_class(self) -> int:
        return self.config.features_per_class

    @property
    def mean_correct(self) -> float:
        return float(self.per_class_correct.mean())

    @property
    def std_correct(self) -> float:
        return float(self.per_class_correct.std())

    @property
    def mean_correct_fraction(self) -> float:
        return self.mean_correct / self.features_per_class

    @property
    def std_correct_fraction(self) -> float:
        return self.std_correct / self.features_per_class

    @property
    def mu_over_sigma(self) -> float:
        """Decoded-information SNR: mean correct count over its std."""
        s = self.std_correct
        return math.inf if s == 0 else self.mean_correct / s


def run_recovery(config: RecoveryConfig, *, memory_cap: int | None = None) -> RecoveryReport:
    """Encode the full class/feature matrix and measure feature recovery."""
    t0 = time.perf_counter()
    n_classes = config.matrix_size
    features = config.features_per_class
    tensor = NriTensor(config.tensor_spec(), memory_cap=memory_cap)

    data_seq, sample_seq = np.random.SeedSequence(config.seed).spawn(2)
    data_rng = np.random.default_rng(data_seq)

    planted = np.empty((n_classes, features), dtype=np.int64)
    for j in range(n_classes):
        values = data_rng.integers(0, config.noise_max + 1, size=n_classes)
        rows = data_rng.choice(n_classes, size=features, replace=False)
        values[rows] += config.feature_weight
        planted[j] = rows
        tensor.encode_fiber(0, {1: j}, values)

    sampled = config.classes_sampled
    if sampled is None:
        sampled = min(n_classes, 200)
    sampled = min(sampled, n_classes)
    sample_rng = np.random.default_rng(sample_seq)
    classes = sample_rng.choice(n_classes, size=sampled, replace=False)

    profile_len = config.profile_length
    if profile_len is None:
        profile_len = min(n_classes, features + 50)
    norm = tensor.spec.normalization
    correct = np.empty(sampled, dtype=np.int64)
    profiles = np.empty((sampled, profile_len), dtype=np.float64)
    for row, j in enumerate(classes):
        sums = tensor._fiber_sums(0, {1: int(j)})
        order = ranked_order(sums)
        top = order[:features]
        correct[row] = np.intersect1d(top, planted[j], assume_unique=True).size
        profiles[row] = sums[order[:profile_len]] / norm

    return RecoveryReport(
        config=config,
        per_class_correct=correct,
        profile_rank_mean=profiles.mean(axis=0),
        profile_rank_std=profiles.std(axis=0),
        snr_encoded_db=snr_db(config.feature_density, config.feature_weight, config.noise_max),
        runtime_seconds=time.perf_counter() - t0,
        saturated=tensor.saturated,
    )


@dataclass
class SweepRow:
    """One sweep entry: the config plus results, or the error that stopped it."""

    config: RecoveryConfig
    report: RecoveryReport | None = None
    error: str | None = None


def sweep(
    configs: Sequence[RecoveryConfig],
    *,
    threads: int = 1,
    memory_cap: int | None = None,
) -> list[SweepRow]:
    """Run each config, collecting per-config failures without stopping."""

    def one(cfg: RecoveryConfig) -> SweepRow:
        try:
            return SweepRow(cfg, report=run_recovery(cfg, memory_cap=memory_cap))
        except Exception as exc:  # noqa: BLE001 - per-row error reporting
            return SweepRow(cfg, error=f"{type(exc).__name__}: {exc}")

    if threads <= 1 or len(configs) <= 1:
        return [one(c) for c in configs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, configs))


def sweep_rows(rows: Iterable[SweepRow]) -> list[dict]:
    """Flatten sweep results to records matching SWEEP_HEADER (plus error)."""
    out = []
    for row in rows:
        cfg = row.config
        rec = {
            "mode": cfg.mode,
            "N": cfg.matrix_size,
            "n": cfg.state_size,
            "chi": cfg.chi,
            "rho": cfg.feature_density,
            "w": cfg.feature_weight,
            "M": cfg.noise_max,
            "xi": cfg.xi,
        }
        if row.report is not None:
            rep = row.report
            rec.update(
                mean=rep.mean_correct_fraction,
                std=rep.std_correct_fraction,
                mu_over_sigma=rep.mu_over_sigma,
                snr_db=rep.snr_encoded_db,
                runtime_s=rep.runtime_seconds,
                error="",
            )
        else:
            rec.update(
                mean=math.nan, std=math.nan, mu_over_sigma=math.nan,
                snr_db=math.nan, runtime_s=math.nan, error=row.error or "",
            )
        out.append(rec)
    return out


def write_sweep_csv(rows: Iterable[SweepRow], fh: TextIO) -> None:
    fh.write(SWEEP_HEADER + "\n")
    for rec in sweep_rows(rows):
        fh.write(
            f"{rec['mode']},{rec['N']},{rec['n']},{rec['chi']},{rec['rho']:g},"
            f"{rec['w']:g},{rec['M']},{rec['xi']:g},{rec['mean']:.6g},{rec['std']:.6g},"
            f"{rec['mu_over_sigma']:.6g},{rec['snr_db']:.6g},{rec['runtime_s']:.3f}\n"
        )
