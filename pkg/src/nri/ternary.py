"""Sparse balanced-ternary index vectors and their near-orthogonality statistics.

An index vector is a length-n vector over {-1, 0, +1} with chi nonzero
components, exactly half of them negative, stored in compact form as the two
position lists.  Vectors are derived deterministically from a 64-bit master
seed and a (dimension id, component index) pair with a counter-based keyed
generator, so they never need to be stored and component ranges can grow for
free.

The module also provides the exact and asymptotic combinatorics of how likely
two random such vectors are to be nearly orthogonal: exact big-integer counts,
a terminating-hypergeometric closed form, a series-expanded probability valid
for n >> k, and a Monte Carlo estimator used to cross-check the analytics.

Convention: for d >= 1 all probabilities here are single-sign, i.e. the
probability that the signed dot product equals +d (equal to that of -d by
symmetry).  The d = 0 bin stands alone.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "IndexVector",
    "DotDistribution",
    "SeriesDomainWarning",
    "generate_index_vector",
    "dot",
    "count_total",
    "count_at_dot",
    "hyp3f2_terminating",
    "count_at_dot_hyp",
    "prob_dot_exact",
    "prob_dot_series",
    "series_domain_ok",
    "monte_carlo_dot",
]

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SeriesDomainWarning(UserWarning):
    """Raised when the series-expanded probability is evaluated outside n >> k."""


def _mix64(x: int) -> int:
    """SplitMix64 finalizer; full-avalanche 64-bit mix."""
    x &= _MASK64
    x = ((x ^ (x >> 30)) * _MIX1) & _MASK64
    x = ((x ^ (x >> 27)) * _MIX2) & _MASK64
    return x ^ (x >> 31)


def _stream_key(master_seed: int, dim_id: int, component_index: int) -> int:
    h = _mix64(master_seed & _MASK64)
    h = _mix64(h ^ ((dim_id + 1) * _GOLDEN & _MASK64))
    h = _mix64(h ^ ((component_index + 1) * _MIX1 & _MASK64))
    return h


def _sample_distinct(key: int, n: int, count: int) -> list[int]:
    """Draw `count` distinct positions uniformly from [0, n).

    Partial Fisher-Yates over a virtual arange(n), sparse swap map, so cost is
    O(count) regardless of n.  Bounded draws use threshold rejection on the
    64-bit word stream, which keeps them exactly uniform.
    """
    picks: list[int] = []
    swap: dict[int, int] = {}
    t = 0
    for i in range(count):
        span = n - i
        limit = (1 << 64) - ((1 << 64) % span)
        while True:
            word = _mix64((key + t * _GOLDEN) & _MASK64)
            t += 1
            if word < limit:
                break
        j = i + word % span
        picks.append(swap.get(j, j))
        swap[j] = swap.get(i, i)
    return picks


@dataclass
class IndexVector:
    """Compact sparse balanced-ternary vector.

    Only the positions of the nonzero components are stored; the first list
    holds the +1 positions and the second the -1 positions.
    """

    n: int
    plus_positions: np.ndarray
    minus_positions: np.ndarray

    def __post_init__(self):
        self.plus_positions = np.asarray(self.plus_positions, dtype=np.int64)
        self.minus_positions = np.asarray(self.minus_positions, dtype=np.int64)
        self.plus_positions.sort()
        self.minus_positions.sort()
        k = len(self.plus_positions)
        if k == 0 or k != len(self.minus_positions):
            raise ValueError("index vector must have equally many +1 and -1 positions, at least one of each")
        joint = np.concatenate([self.plus_positions, self.minus_positions])
        if len(np.unique(joint)) != 2 * k:
            raise ValueError("nonzero positions must be distinct")
        if joint.min() < 0 or joint.max() >= self.n:
            raise ValueError(f"positions must lie in [0, {self.n})")

    @property
    def chi(self) -> int:
        """Number of nonzero components."""
        return 2 * len(self.plus_positions)

    def negated(self) -> "IndexVector":
        return IndexVector(self.n, self.minus_positions.copy(), self.plus_positions.copy())

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.n, dtype=np.int8)
        out[self.plus_positions] = 1
        out[self.minus_positions] = -1
        return out

    def dot(self, other: "IndexVector") -> int:
        if self.n != other.n:
            raise ValueError(f"length mismatch: {self.n} vs {other.n}")
        pp = np.intersect1d(self.plus_positions, other.plus_positions, assume_unique=True).size
        mm = np.intersect1d(self.minus_positions, other.minus_positions, assume_unique=True).size
        pm = np.intersect1d(self.plus_positions, other.minus_positions, assume_unique=True).size
        mp = np.intersect1d(self.minus_positions, other.plus_positions, assume_unique=True).size
        return int(pp + mm - pm - mp)

    def __eq__(self, other) -> bool:
        if not isinstance(other, IndexVector):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.plus_positions, other.plus_positions)
            and np.array_equal(self.minus_positions, other.minus_positions)
        )


def generate_index_vector(master_seed: int, dim_id: int, component_index: int, n: int, chi: int) -> IndexVector:
    """Derive the index vector for one component of one tensor dimension.

    Pure function of its arguments: repeated calls are bit-identical, which is
    what lets component ranges extend dynamically without storing any vectors.
    Positions are drawn without replacement, uniformly over [0, n); the first
    chi/2 drawn positions become +1, the remainder -1.
    """
    if dim_id < 0 or component_index < 0:
        raise ValueError("dim_id and component_index must be non-negative")
    if chi % 2 != 0:
        raise ValueError(f"chi must be even, got {chi}")
    if chi < 2:
        raise ValueError(f"chi must be at least 2, got {chi}")
    if chi > n:
        raise ValueError(f"chi={chi} exceeds vector length n={n}")
    key = _stream_key(master_seed, dim_id, component_index)
    picks = _sample_distinct(key, n, chi)
    k = chi // 2
    return IndexVector(n, np.array(picks[:k]), np.array(picks[k:]))


def dot(a: IndexVector, b: IndexVector) -> int:
    """Signed dot product, computed from the compact form."""
    return a.dot(b)


def count_total(n: int, k: int) -> int:
    """Number of length-n ternary vectors with k positive and k negative trits.

    Both closed forms, C(n,2k)C(2k,k) and C(n,k)C(n-k,k), are evaluated and
    checked against each other.
    """
    if k < 1:
        raise ValueError(f"k must be positive, got {k}")
    if n < 2 * k:
        raise ValueError(f"need n >= 2k, got n={n}, k={k}")
    a = math.comb(n, 2 * k) * math.comb(2 * k, k)
    b = math.comb(n, k) * math.comb(n - k, k)
    assert a == b
    return a


def count_at_dot(n: int, k: int, d: int) -> int:
    """Number of vectors whose dot product with a fixed reference is +d.

    Counts the configurations where d nonzero states coincide with the
    reference (products all of one sign) and the remaining 2k-d land on the
    reference's zeros.  Higher-order coincidences that cancel are deliberately
    not counted, so for d = 0 this slightly undercounts the true census.
    """
    if d < 0 or d > k:
        raise ValueError(f"d must satisfy 0 <= d <= k, got d={d}, k={k}")
    if n < 4 * k:
        raise ValueError(f"need n >= 4k, got n={n}, k={k}")
    total = 0
    for n_plus in range(k - d, k + 1):
        total += (
            math.comb(k, n_plus)
            * math.comb(k, 2 * k - d - n_plus)
            * math.comb(2 * k - d, n_plus)
        )
    return math.comb(n - 2 * k, 2 * k - d) * total


def hyp3f2_terminating(d: int, k: int) -> Fraction:
    """3F2(-d, -k, -k; 1+k-d, 1+k-d; -1) as an exact rational.

    The -d numerator parameter terminates the series after d+1 terms.
    """
    if d < 0 or k < 0:
        raise ValueError("d and k must be non-negative")
    total = Fraction(0)
    term = Fraction(1)
    for i in range(d + 1):
        total += term
        if i == d:
            break
        term *= Fraction(
            -((-d + i) * (-k + i) * (-k + i)),
            (1 + k - d + i) * (1 + k - d + i) * (i + 1),
        )
    return total


def count_at_dot_hyp(n: int, k: int, d: int) -> int:
    """Hypergeometric form of count_at_dot; exactly equal on the shared domain."""
    if d < 0 or d > k:
        raise ValueError(f"d must satisfy 0 <= d <= k, got d={d}, k={k}")
    if n < 4 * k:
        raise ValueError(f"need n >= 4k, got n={n}, k={k}")
    pre = (
        math.comb(n - 2 * k, 2 * k - d)
        * math.comb(2 * k - d, k)
        * math.comb(k, k - d)
    )
    value = pre * hyp3f2_terminating(d, k)
    assert value.denominator == 1
    return value.numerator


def prob_dot_exact(n: int, k: int, d: int) -> float:
    """P(dot = +d) from the exact count ratio.

    Evaluated as a big-integer rational and rounded once to float, so there is
    no overflow or precision loss even at n = 10^4, k = 10.
    """
    return float(Fraction(count_at_dot(n, k, d), count_total(n, k)))


def series_domain_ok(n: int, k: int) -> bool:
    """Whether (n, k) is comfortably inside the n >> k validity domain."""
    return n >= 50 * k


def prob_dot_series(n: int, k: int, d: int) -> float:
    """Series-expanded P(dot = +d), with the two n^-1 and n^-2 correction terms.

    Outside the validity domain (see series_domain_ok) a SeriesDomainWarning is
    issued and the value is still returned, mirroring how marginal entries are
    flagged rather than suppressed.
    """
    if d < 0 or d > k:
        raise ValueError(f"d must satisfy 0 <= d <= k, got d={d}, k={k}")
    if k < 1 or n < 2 * k:
        raise ValueError(f"need n >= 2k >= 2, got n={n}, k={k}")
    if not series_domain_ok(n, k):
        warnings.warn(
            f"series expansion marginal for n={n}, k={k} (want n >= {50 * k})",
            SeriesDomainWarning,
            stacklevel=2,
        )
    t1 = 1.0 - (8 * k**2 + d**2 + d - 8 * k * d) / (2.0 * n)
    t2 = (
        2.0 * (1 - 2 * k) ** 2 * k**2
        + d**4 / 8.0
        + (5.0 / 12.0 - 2 * k) * d**3
        + (10 * k**2 - 4 * k + 3.0 / 8.0) * d**2
        + (-16 * k**3 + 10 * k**2 - 2 * k + 1.0 / 12.0) * d
    ) / n**2
    return (
        (t1 + t2)
        * math.factorial(d)
        / n**d
        * math.comb(k, d) ** 2
        * float(hyp3f2_terminating(d, k))
    )


@dataclass
class DotDistribution:
    """Distribution of the dot product between random index vectors.

    entries[d] is P(dot = +d) for d >= 1 (single-sign) and P(dot = 0) for
    d = 0.  Monte Carlo distributions also record the sample count so binomial
    standard errors can be attached per bin.
    """

    n: int
    k: int
    entries: dict[int, float]
    source: str = "analytic"
    samples: int | None = None
    abs_counts: np.ndarray | None = field(default=None, repr=False)

    def probability(self, d: int) -> float:
        return self.entries[d]

    def stderr(self, d: int) -> float | None:
        """Binomial standard error of the entry estimator; None for analytic."""
        if self.samples is None:
            return None
        p = self.entries[d]
        if d == 0:
            return math.sqrt(max(p * (1.0 - p), 0.0) / self.samples)
        # entry is (count(+d)+count(-d)) / (2 samples); the sign-summed count
        # is Binomial(samples, 2p)
        return math.sqrt(max(p * (1.0 - 2.0 * p), 0.0) / (2.0 * self.samples))


def analytic_distribution(n: int, k: int, kind: str = "series") -> DotDistribution:
    """Analytic distribution over d = 0..k, series or exact form."""
    fn = prob_dot_series if kind == "series" else prob_dot_exact
    return DotDistribution(n, k, {d: fn(n, k, d) for d in range(k + 1)}, source=f"analytic_{kind}")


def _mc_counts(n: int, k: int, samples: int, ref: np.ndarray, seed_seq: np.random.SeedSequence) -> np.ndarray:
    """Histogram of |dot| over `samples` random vectors against a dense reference.

    Sample vectors are drawn as chi iid positions conditioned on distinctness
    (duplicate rows are resampled), which is distributionally identical to
    drawing without replacement and vectorizes well.
    """
    rng = np.random.default_rng(seed_seq)
    chi = 2 * k
    counts = np.zeros(chi + 1, dtype=np.int64)
    batch = 1 << 20
    done = 0
    while done < samples:
        b = min(batch, samples - done)
        pos = rng.integers(0, n, size=(b, chi))
        while True:
            srt = np.sort(pos, axis=1)
            bad = (srt[:, 1:] == srt[:, :-1]).any(axis=1)
            nbad = int(bad.sum())
            if nbad == 0:
                break
            pos[bad] = rng.integers(0, n, size=(nbad, chi))
        vals = ref[pos]
        dots = vals[:, :k].sum(axis=1) - vals[:, k:].sum(axis=1)
        counts += np.bincount(np.abs(dots), minlength=chi + 1)
        done += b
    return counts


def monte_carlo_dot(
    n: int,
    k: int,
    samples: int,
    seed: int,
    workers: int = 1,
    reference: IndexVector | None = None,
) -> DotDistribution:
    """Estimate the dot-product distribution by explicit simulation.

    Draws one fixed reference vector, then `samples` independent random
    vectors, and histograms the dot products.  Entries follow the single-sign
    convention: the d >= 1 bins are half the observed |dot| = d frequency.
    Splitting across workers changes only the work layout, not the estimate's
    distribution; results are deterministic for a fixed (seed, workers).
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    if workers < 1:
        raise ValueError("workers must be positive")
    root = np.random.SeedSequence(seed)
    if reference is None:
        reference = generate_index_vector(seed, 0, 0, n, 2 * k)
    ref = reference.to_dense().astype(np.int64)
    children = root.spawn(workers)
    shares = [samples // workers] * workers
    for i in range(samples % workers):
        shares[i] += 1
    if workers == 1:
        counts = _mc_counts(n, k, shares[0], ref, children[0])
    else:
        counts = np.zeros(2 * k + 1, dtype=np.int64)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [
                pool.submit(_mc_counts, n, k, s, ref, child)
                for s, child in zip(shares, children)
                if s > 0
            ]
            for f in futs:
                counts += f.result()
    entries = {0: float(counts[0] / samples)}
    for d in range(1, k + 1):
        entries[d] = float(counts[d] / samples / 2.0)
    return DotDistribution(n, k, entries, source="monte_carlo", samples=samples, abs_counts=counts)
