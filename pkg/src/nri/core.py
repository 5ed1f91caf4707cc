"""The NRI state tensor: incremental encode/decode behind a fixed-size array.

A tensor of rank r exposes a virtual component space of shape (N_1, ..., N_r)
while physically storing a dense state array of shape (n_1, ..., n_r), with
n_D <= N_D for reduced ("random") dimensions.  Components are never assigned,
only incremented: each encode scatters w into the N = prod(chi_D) state cells
selected by the outer product of the per-dimension index vectors, and decode
projects the state back onto the same cells and divides by N.

Direct-mode dimensions map components to states by identity (n_D = N_D) and
carry no redundancy factor; a rank-2 tensor with one random and one direct
dimension is exactly a set of rank-1 reduced vectors sharing index vectors.
"""

from __future__ import annotations

import io
import os
import struct
import warnings
import zlib
from dataclasses import dataclass
from typing import BinaryIO, Mapping

import numpy as np
import scipy.sparse as sp

from .ternary import IndexVector, generate_index_vector

__all__ = [
    "RANDOM",
    "DIRECT",
    "SATURATION_LIMIT",
    "DEFAULT_MEMORY_CAP",
    "DimensionSpec",
    "NriSpec",
    "NriTensor",
    "TopList",
    "CapacityError",
    "PersistenceError",
    "BadMagicError",
    "VersionError",
    "TruncatedError",
    "ChecksumError",
    "new_tensor",
    "load",
]

RANDOM = "random"
DIRECT = "direct"

SATURATION_LIMIT = 1 << 62
DEFAULT_MEMORY_CAP = 4 << 30  # bytes; override per call or via NRI_MEMCAP

MAGIC = b"NRIT"
FORMAT_VERSION = 1
_KIND_CODE = {"int64": 0, "float64": 1}
_KIND_FROM_CODE = {v: k for k, v in _KIND_CODE.items()}
_MODE_CODE = {RANDOM: 0, DIRECT: 1}
_MODE_FROM_CODE = {v: k for k, v in _MODE_CODE.items()}
_DTYPES = {"int64": np.dtype("<i8"), "float64": np.dtype("<f8")}


class CapacityError(Exception):
    """State allocation would exceed the configured memory cap."""


class PersistenceError(Exception):
    """Base class for tensor image load failures."""


class BadMagicError(PersistenceError):
    pass


class VersionError(PersistenceError):
    pass


class TruncatedError(PersistenceError):
    pass


class ChecksumError(PersistenceError):
    pass


@dataclass(frozen=True)
class DimensionSpec:
    """Per-dimension configuration: component range, state range, sparsity, mode."""

    component_range: int
    state_range: int
    nonzero_count: int
    mode: str = RANDOM

    def __post_init__(self):
        if self.mode not in (RANDOM, DIRECT):
            raise ValueError(f"unknown dimension mode {self.mode!r}")
        if self.component_range < 1 or self.state_range < 1:
            raise ValueError("component and state ranges must be positive")
        if self.mode == RANDOM:
            if self.state_range < 2:
                raise ValueError("random dimension needs state range >= 2")
            if self.state_range > self.component_range:
                raise ValueError(
                    f"random dimension must reduce: n={self.state_range} > N={self.component_range}"
                )
            chi = self.nonzero_count
            if chi < 2 or chi % 2 != 0:
                raise ValueError(f"chi must be even and >= 2, got {chi}")
            if chi > self.state_range:
                raise ValueError(f"chi={chi} exceeds state range n={self.state_range}")
        else:
            if self.state_range != self.component_range:
                raise ValueError("direct dimension must have n == N")
            if self.nonzero_count != 1:
                raise ValueError("direct dimension has nonzero_count 1 by definition")

    @classmethod
    def random(cls, component_range: int, state_range: int, nonzero_count: int) -> "DimensionSpec":
        return cls(component_range, state_range, nonzero_count, RANDOM)

    @classmethod
    def direct(cls, component_range: int) -> "DimensionSpec":
        return cls(component_range, component_range, 1, DIRECT)


@dataclass(frozen=True)
class NriSpec:
    """Full tensor configuration: ordered dimensions, master seed, element kind."""

    dims: tuple[DimensionSpec, ...]
    master_seed: int = 0
    element_kind: str = "int64"

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        if len(self.dims) < 1:
            raise ValueError("rank must be >= 1")
        if self.element_kind not in _KIND_CODE:
            raise ValueError(f"unknown element kind {self.element_kind!r}")
        if not any(d.mode == RANDOM for d in self.dims):
            warnings.warn(
                "no random dimension: tensor is a plain dense array",
                UserWarning,
                stacklevel=2,
            )

    @property
    def rank(self) -> int:
        return len(self.dims)

    @property
    def state_shape(self) -> tuple[int, ...]:
        return tuple(d.state_range for d in self.dims)

    @property
    def component_shape(self) -> tuple[int, ...]:
        return tuple(d.component_range for d in self.dims)

    @property
    def normalization(self) -> int:
        """Number of state cells touched per component: prod of chi over random dims."""
        out = 1
        for d in self.dims:
            if d.mode == RANDOM:
                out *= d.nonzero_count
        return out

    @property
    def reduction_ratio(self) -> float:
        cells = 1
        states = 1
        for d in self.dims:
            cells *= d.component_range
            states *= d.state_range
        return cells / states

    @property
    def state_bytes(self) -> int:
        out = 8
        for d in self.dims:
            out *= d.state_range
        return out


def _resolve_cap(memory_cap: int | None) -> int:
    if memory_cap is not None:
        return memory_cap
    env = os.environ.get("NRI_MEMCAP")
    if env:
        return int(env)
    return DEFAULT_MEMORY_CAP


@dataclass
class TopList:
    """Ranked decoded components, descending by value, ties by ascending index."""

    entries: list[tuple[tuple[int, ...], float]]
    requested_length: int


def ranked_order(sums: np.ndarray) -> np.ndarray:
    """Indices ordering values descending with ascending-index tie-break."""
    return np.lexsort((np.arange(len(sums)), -sums))


class NriTensor:
    """State tensor plus the deterministic index-vector provider.

    Construction allocates an all-zero state; every component then decodes to
    zero.  The state is mutated only through the encode operations and read
    only through the decode operations.

    Thread use: decode, decode_fiber and find_top are pure reads and may run
    concurrently with each other.  Encodes commute (any serialization of the
    same updates yields the same state) but require external serialization
    against each other and against reads; save needs quiescence.
    """

    def __init__(self, spec: NriSpec, *, memory_cap: int | None = None):
        cap = _resolve_cap(memory_cap)
        if spec.state_bytes > cap:
            raise CapacityError(
                f"state needs {spec.state_bytes} bytes, cap is {cap}"
            )
        self.spec = spec
        self.state = np.zeros(spec.state_shape, dtype=np.dtype(spec.element_kind))
        self.update_count = 0
        self._saturated = False
        self._peak_bound = 0.0  # conservative upper bound on max |state|
        self._component_ranges = [d.component_range for d in spec.dims]
        self._basis_cache: dict[int, sp.csr_matrix] = {}

    @classmethod
    def _with_state(cls, spec: NriSpec, state: np.ndarray, *, memory_cap: int | None) -> "NriTensor":
        """Adopt an existing state array without the zero-fill allocation."""
        tensor = cls.__new__(cls)
        cap = _resolve_cap(memory_cap)
        if spec.state_bytes > cap:
            raise CapacityError(f"state needs {spec.state_bytes} bytes, cap is {cap}")
        tensor.spec = spec
        tensor.state = state
        tensor.update_count = 0
        tensor._component_ranges = [d.component_range for d in spec.dims]
        tensor._basis_cache = {}
        peak = float(np.abs(state).max(initial=0))
        tensor._peak_bound = peak
        tensor._saturated = peak >= SATURATION_LIMIT
        return tensor

    # -- geometry ---------------------------------------------------------

    @property
    def rank(self) -> int:
        return self.spec.rank

    @property
    def saturated(self) -> bool:
        return self._saturated

    def index_vector(self, dim: int, component: int) -> IndexVector:
        """Index vector of one component of a random dimension (derived, not stored)."""
        d = self.spec.dims[dim]
        if d.mode != RANDOM:
            raise ValueError("direct dimensions use the identity mapping, no index vector")
        if not 0 <= component < self._component_ranges[dim]:
            raise ValueError(f"component {component} out of range for dimension {dim}")
        return generate_index_vector(
            self.spec.master_seed, dim, component, d.state_range, d.nonzero_count
        )

    def _positions(self, dim: int, component: int) -> tuple[np.ndarray, np.ndarray]:
        """State positions and signs selected by one component along one dimension."""
        d = self.spec.dims[dim]
        if not 0 <= component < self._component_ranges[dim]:
            raise ValueError(
                f"index {component} out of range [0, {self._component_ranges[dim]}) in dimension {dim}"
            )
        if d.mode == DIRECT:
            return np.array([component], dtype=np.int64), np.array([1], dtype=np.int64)
        iv = self.index_vector(dim, component)
        pos = np.concatenate([iv.plus_positions, iv.minus_positions])
        sign = np.concatenate(
            [np.ones(len(iv.plus_positions), np.int64), -np.ones(len(iv.minus_positions), np.int64)]
        )
        return pos, sign

    def basis(self, dim: int) -> sp.csr_matrix:
        """All index vectors of a random dimension stacked as a sparse N x n matrix.

        Built lazily and extended in place when the component range grows;
        rows are identical to the individually derived vectors.
        """
        d = self.spec.dims[dim]
        if d.mode != RANDOM:
            raise ValueError("direct dimensions have no basis matrix")
        n_comp = self._component_ranges[dim]
        cached = self._basis_cache.get(dim)
        start = cached.shape[0] if cached is not None else 0
        if start < n_comp:
            chi = d.nonzero_count
            k = chi // 2
            rows = np.repeat(np.arange(n_comp - start), chi)
            cols = np.empty((n_comp - start) * chi, dtype=np.int64)
            data = np.empty((n_comp - start) * chi, dtype=np.int64)
            for i in range(start, n_comp):
                iv = self.index_vector(dim, i)
                base = (i - start) * chi
                cols[base : base + k] = iv.plus_positions
                cols[base + k : base + chi] = iv.minus_positions
                data[base : base + k] = 1
                data[base + k : base + chi] = -1
            fresh = sp.csr_matrix(
                (data, (rows, cols)), shape=(n_comp - start, d.state_range)
            )
            cached = fresh if cached is None else sp.vstack([cached, fresh], format="csr")
            self._basis_cache[dim] = cached
        return cached

    def _check_indices(self, indices) -> tuple[int, ...]:
        if isinstance(indices, (int, np.integer)):
            indices = (int(indices),)
        indices = tuple(int(i) for i in indices)
        if len(indices) != self.rank:
            raise ValueError(f"expected {self.rank} indices, got {len(indices)}")
        return indices

    # -- encode / decode --------------------------------------------------

    def _check_weight(self, w) -> float | int:
        if isinstance(w, (bool,)):
            raise ValueError("weight must be a number")
        if self.spec.element_kind == "int64":
            if isinstance(w, float):
                if not w.is_integer():
                    raise ValueError("int64 tensor requires integral weights")
                w = int(w)
            w = int(w)
        else:
            w = float(w)
            if not np.isfinite(w):
                raise ValueError("weight must be finite")
        return w

    def _coerce_weights(self, values) -> np.ndarray:
        arr = np.asarray(values)
        if self.spec.element_kind == "int64":
            if np.issubdtype(arr.dtype, np.floating):
                if not np.array_equal(arr, np.rint(arr)):
                    raise ValueError("int64 tensor requires integral weights")
            return arr.astype(np.int64)
        arr = arr.astype(np.float64)
        if arr.size and not np.all(np.isfinite(arr)):
            raise ValueError("weights must be finite")
        return arr

    def encode_add(self, indices, w) -> None:
        """Add w to one tensor component.

        Touches exactly normalization-many state cells, incrementing each by
        w times the product of the selected index-vector signs.  Subtraction
        is encode_add with -w.
        """
        indices = self._check_indices(indices)
        w = self._check_weight(w)
        per_dim = [self._positions(dim, idx) for dim, idx in enumerate(indices)]
        mesh = np.ix_(*[p for p, _ in per_dim])
        sign_grid = np.ix_(*[s for _, s in per_dim])
        grid = w * np.multiply.reduce(np.broadcast_arrays(*sign_grid))
        self.state[mesh] += grid
        self.update_count += 1
        touched = np.abs(self.state[mesh]).max()
        self._note_peak(float(touched), exact_cells=True)

    def encode_fiber(self, free_dim: int, fixed: Mapping[int, int], values) -> None:
        """Encode a whole fiber: values[i] added at component i along free_dim.

        Bit-identical to looping encode_add over the fiber for integer
        tensors; one sparse product plus one scatter instead of N scatters.
        `values` is either a dense array over the free dimension's component
        range or an (indices, weights) pair for sparse fibers.
        """
        fixed = dict(fixed)
        if set(fixed) | {free_dim} != set(range(self.rank)) or free_dim in fixed:
            raise ValueError("fixed must cover every dimension except free_dim")
        d = self.spec.dims[free_dim]
        n_comp = self._component_ranges[free_dim]
        dtype = self.state.dtype
        if isinstance(values, tuple):
            idx, wts = values
            idx = np.asarray(idx, dtype=np.int64)
            wts = self._coerce_weights(wts)
            if idx.size and (idx.min() < 0 or idx.max() >= n_comp):
                raise ValueError("sparse fiber index out of range")
            count = idx.size
        else:
            wts = self._coerce_weights(values)
            if wts.shape != (n_comp,):
                raise ValueError(f"values must have shape ({n_comp},)")
            idx = None
            count = n_comp
        if d.mode == DIRECT:
            u = np.zeros(d.state_range, dtype=dtype)
            if idx is None:
                u[:] = wts
            else:
                np.add.at(u, idx, wts)
        else:
            basis = self.basis(free_dim)
            if idx is None:
                u = basis.T @ wts
            else:
                u = np.zeros(d.state_range, dtype=dtype)
                if idx.size:
                    u += basis[idx].T @ wts
        others = [dim for dim in range(self.rank) if dim != free_dim]
        per_dim = [self._positions(dim, fixed[dim]) for dim in others]
        st = np.moveaxis(self.state, free_dim, 0)
        if per_dim:
            mesh = np.ix_(*[p for p, _ in per_dim])
            grid = np.multiply.reduce(
                np.broadcast_arrays(*np.ix_(*[s for _, s in per_dim]))
            )
            st[(slice(None),) + mesh] += u.reshape((-1,) + (1,) * len(others)) * grid
        else:
            st += u
        self.update_count += count
        self._note_peak(float(np.abs(u).max(initial=0)), exact_cells=False)

    def decode(self, indices) -> float:
        """Project the state back onto one component; pure read."""
        indices = self._check_indices(indices)
        per_dim = [self._positions(dim, idx) for dim, idx in enumerate(indices)]
        mesh = np.ix_(*[p for p, _ in per_dim])
        grid = np.multiply.reduce(np.broadcast_arrays(*np.ix_(*[s for _, s in per_dim])))
        products = self.state[mesh] * grid
        if self.spec.element_kind == "int64":
            # python-int accumulation: exact even next to the saturation limit
            total = int(products.sum(dtype=object))
        else:
            total = float(products.sum())
        return total / self.spec.normalization

    def _fiber_sums(self, free_dim: int, fixed: Mapping[int, int]) -> np.ndarray:
        """Unnormalized decode of every component along free_dim."""
        fixed = dict(fixed)
        if set(fixed) | {free_dim} != set(range(self.rank)) or free_dim in fixed:
            raise ValueError("fixed must cover every dimension except free_dim")
        v = np.moveaxis(self.state, free_dim, 0)
        others = [dim for dim in range(self.rank) if dim != free_dim]
        for ax_offset, dim in enumerate(others):
            pos, sign = self._positions(dim, fixed[dim])
            taken = v.take(pos, axis=1)  # axis 1: earlier axes already contracted
            shape = [1] * taken.ndim
            shape[1] = len(sign)
            v = (taken * sign.reshape(shape)).sum(axis=1)
        d = self.spec.dims[free_dim]
        if d.mode == DIRECT:
            return v
        return self.basis(free_dim) @ v

    def decode_fiber(self, free_dim: int, fixed: Mapping[int, int]) -> np.ndarray:
        """Decoded values of every component along free_dim; pure read."""
        return self._fiber_sums(free_dim, fixed) / self.spec.normalization

    def find_top(self, fixed: Mapping[int, int], top: int) -> TopList:
        """Top-`top` components along the single unassigned dimension.

        Decodes the whole free fiber and returns the largest values,
        descending, ties broken by ascending component index.
        """
        fixed = dict(fixed)
        free = [dim for dim in range(self.rank) if dim not in fixed]
        if len(free) != 1:
            raise ValueError(f"exactly one free dimension required, got {len(free)}")
        free_dim = free[0]
        n_free = self._component_ranges[free_dim]
        if not 1 <= top <= n_free:
            raise ValueError(f"top must be in [1, {n_free}], got {top}")
        for dim, idx in fixed.items():
            if not 0 <= idx < self._component_ranges[dim]:
                raise ValueError(f"index {idx} out of range in dimension {dim}")
        sums = self._fiber_sums(free_dim, fixed)
        order = ranked_order(sums)[:top]
        norm = self.spec.normalization
        entries = []
        for i in order:
            full = tuple(fixed.get(dim, int(i)) for dim in range(self.rank))
            entries.append((full, float(sums[i]) / norm))
        return TopList(entries, top)

    # -- dynamic extension --------------------------------------------------

    def extend_dimension(self, dim: int, new_range: int) -> None:
        """Grow a random dimension's component range; the state is untouched.

        New components become addressable immediately because their index
        vectors derive from the seed on demand.
        """
        d = self.spec.dims[dim]
        if d.mode != RANDOM:
            raise ValueError("direct dimensions cannot extend without reallocating state")
        if new_range <= self._component_ranges[dim]:
            raise ValueError(
                f"new range {new_range} must exceed current {self._component_ranges[dim]}"
            )
        self._component_ranges[dim] = new_range
        dims = list(self.spec.dims)
        dims[dim] = DimensionSpec(new_range, d.state_range, d.nonzero_count, RANDOM)
        self.spec = NriSpec(tuple(dims), self.spec.master_seed, self.spec.element_kind)

    # -- saturation ---------------------------------------------------------

    def _note_peak(self, candidate: float, *, exact_cells: bool) -> None:
        if exact_cells:
            self._peak_bound = max(self._peak_bound, candidate)
        else:
            # fiber updates: grow the bound conservatively, verify only when
            # the bound itself crosses the limit
            self._peak_bound += candidate
            if self._peak_bound >= SATURATION_LIMIT and not self._saturated:
                self._peak_bound = float(np.abs(self.state).max(initial=0))
        if self._peak_bound >= SATURATION_LIMIT:
            self._saturated = True

    # -- persistence ----------------------------------------------------------

    def save(self, dest: str | os.PathLike | BinaryIO) -> None:
        """Write the tensor image; bit-exact and endianness-independent."""
        if hasattr(dest, "write"):
            self._write(dest)
        else:
            with open(dest, "wb") as fh:
                self._write(fh)

    def _write(self, fh: BinaryIO) -> None:
        header = io.BytesIO()
        header.write(MAGIC)
        header.write(struct.pack("<I", FORMAT_VERSION))
        header.write(struct.pack("<B", _KIND_CODE[self.spec.element_kind]))
        header.write(struct.pack("<B", self.rank))
        header.write(struct.pack("<Q", self.spec.master_seed & ((1 << 64) - 1)))
        for d in self.spec.dims:
            header.write(
                struct.pack(
                    "<QQIB",
                    d.component_range,
                    d.state_range,
                    d.nonzero_count,
                    _MODE_CODE[d.mode],
                )
            )
        head = header.getvalue()
        fh.write(head)
        fh.write(struct.pack("<I", zlib.crc32(head)))
        payload = np.ascontiguousarray(self.state, dtype=_DTYPES[self.spec.element_kind]).tobytes()
        fh.write(payload)
        fh.write(struct.pack("<I", zlib.crc32(payload)))

    @classmethod
    def load(cls, src: str | os.PathLike | BinaryIO, *, memory_cap: int | None = None) -> "NriTensor":
        """Read a tensor image written by save; rejects damaged files."""
        if hasattr(src, "read"):
            return cls._read(src, memory_cap)
        with open(src, "rb") as fh:
            return cls._read(fh, memory_cap)

    @classmethod
    def _read(cls, fh: BinaryIO, memory_cap: int | None) -> "NriTensor":
        def need(count: int, what: str) -> bytes:
            buf = fh.read(count)
            if len(buf) != count:
                raise TruncatedError(f"file ends inside {what}")
            return buf

        magic = need(4, "magic")
        if magic != MAGIC:
            raise BadMagicError(f"bad magic {magic!r}")
        head = io.BytesIO()
        head.write(magic)
        rest = need(4 + 1 + 1 + 8, "fixed header")
        head.write(rest)
        version, kind_code, rank, seed = struct.unpack("<IBBQ", rest)
        if version != FORMAT_VERSION:
            raise VersionError(f"unsupported format version {version}")
        if kind_code not in _KIND_FROM_CODE:
            raise PersistenceError(f"unknown element kind code {kind_code}")
        dims = []
        for _ in range(rank):
            raw = need(8 + 8 + 4 + 1, "dimension table")
            head.write(raw)
            big_n, small_n, chi, mode_code = struct.unpack("<QQIB", raw)
            if mode_code not in _MODE_FROM_CODE:
                raise PersistenceError(f"unknown mode code {mode_code}")
            dims.append(DimensionSpec(big_n, small_n, chi, _MODE_FROM_CODE[mode_code]))
        (head_crc,) = struct.unpack("<I", need(4, "header checksum"))
        if head_crc != zlib.crc32(head.getvalue()):
            raise ChecksumError("header checksum mismatch")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UserWarning)
            spec = NriSpec(tuple(dims), seed, _KIND_FROM_CODE[kind_code])
        cap = _resolve_cap(memory_cap)
        if spec.state_bytes > cap:
            raise CapacityError(f"state needs {spec.state_bytes} bytes, cap is {cap}")
        payload = need(spec.state_bytes, "state array")
        (state_crc,) = struct.unpack("<I", need(4, "state checksum"))
        if state_crc != zlib.crc32(payload):
            raise ChecksumError("state checksum mismatch")
        flat = np.frombuffer(payload, dtype=_DTYPES[spec.element_kind])
        state = flat.reshape(spec.state_shape).astype(np.dtype(spec.element_kind))
        return cls._with_state(spec, state, memory_cap=memory_cap)


def new_tensor(spec: NriSpec, *, memory_cap: int | None = None) -> NriTensor:
    """Allocate a fresh all-zero tensor for the given spec."""
    return NriTensor(spec, memory_cap=memory_cap)


def load(src, *, memory_cap: int | None = None) -> NriTensor:
    return NriTensor.load(src, memory_cap=memory_cap)
