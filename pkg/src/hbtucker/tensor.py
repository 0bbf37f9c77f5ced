"""Sparse count tensors, their conditional normalization, and topic-tuple indexing.

Indices are 1-based in files and on the command line and 0-based everywhere
inside the package. The conversion happens in :func:`load_counts` and
:func:`save_counts` only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

MAX_DENSE_CELLS = 10_000_000


class CountFileError(ValueError):
    """Raised for malformed or inconsistent count files."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CountTensor:
    """A (p+1)-mode tensor of nonnegative integer counts stored sparsely.

    Mode 0 indexes samples, modes 1..p index features. ``index`` holds one
    row of 0-based coordinates per stored entry, sorted lexicographically and
    without duplicates; ``counts`` holds the strictly positive values.
    """

    dims: tuple[int, ...]
    index: np.ndarray
    counts: np.ndarray
    lam: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        if len(dims) < 2:
            raise ValueError("a count tensor needs a sample mode and at least one feature mode")
        if any(d < 1 for d in dims):
            raise ValueError(f"dims must be positive, got {dims}")
        index = np.asarray(self.index, dtype=np.int64).reshape(-1, len(dims))
        counts = np.asarray(self.counts, dtype=np.int64).reshape(-1)
        if index.shape[0] != counts.shape[0]:
            raise ValueError("index and counts disagree in length")
        if counts.size and counts.min() <= 0:
            raise ValueError("stored counts must be strictly positive")
        if index.size and (index.min() < 0 or np.any(index.max(axis=0) >= np.array(dims))):
            raise ValueError("index out of bounds for dims")
        index, counts = _canonical(index, counts, dims)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "index", _frozen(index))
        object.__setattr__(self, "counts", _frozen(counts))
        lam = np.bincount(index[:, 0], weights=counts, minlength=dims[0]).astype(np.int64)
        object.__setattr__(self, "lam", _frozen(lam))

    @property
    def p(self) -> int:
        return len(self.dims) - 1

    @property
    def n_samples(self) -> int:
        return self.dims[0]

    @property
    def nnz(self) -> int:
        return int(self.counts.shape[0])

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def empty_samples(self) -> np.ndarray:
        return np.flatnonzero(self.lam == 0)

    def get(self, idx: Sequence[int]) -> int:
        """Count at a 0-based index tuple (0 when absent)."""
        key = np.asarray(idx, dtype=np.int64)
        pos = _find_rows(self.index, key[None, :])[0]
        return int(self.counts[pos]) if pos >= 0 else 0

    def items(self) -> Iterator[tuple[tuple[int, ...], int]]:
        for row, b in zip(self.index, self.counts):
            yield tuple(int(c) for c in row), int(b)

    def sample_slice(self, x: int) -> tuple[np.ndarray, np.ndarray]:
        """Feature coordinates (nnz_x, p) and counts of sample ``x``."""
        lo, hi = np.searchsorted(self.index[:, 0], [x, x + 1])
        return self.index[lo:hi, 1:], self.counts[lo:hi]

    def tokens(self) -> tuple[np.ndarray, np.ndarray]:
        """Expand counts into one row per observation, ordered by sample.

        Returns the sample index of each observation and its feature tuple.
        """
        rows = np.repeat(np.arange(self.nnz), self.counts)
        return self.index[rows, 0].copy(), self.index[rows, 1:].copy()

    def select_samples(self, samples: Sequence[int]) -> "CountTensor":
        """Sub-tensor over ``samples`` (renumbered 0..len-1 in the given order)."""
        samples = np.asarray(samples, dtype=np.int64)
        remap = np.full(self.dims[0], -1, dtype=np.int64)
        remap[samples] = np.arange(samples.size)
        keep = remap[self.index[:, 0]] >= 0
        index = self.index[keep].copy()
        index[:, 0] = remap[index[:, 0]]
        return CountTensor((int(samples.size),) + self.dims[1:], index, self.counts[keep])

    def to_dense(self) -> np.ndarray:
        cells = int(np.prod(np.array(self.dims, dtype=np.float64)))
        if cells > MAX_DENSE_CELLS:
            raise MemoryError(f"refusing to materialize {cells} cells (limit {MAX_DENSE_CELLS})")
        out = np.zeros(self.dims, dtype=np.int64)
        if self.nnz:
            out[tuple(self.index.T)] = self.counts
        return out

    @classmethod
    def from_dense(cls, dense) -> "CountTensor":
        dense = np.asarray(dense)
        idx = np.argwhere(dense > 0)
        return cls(dense.shape, idx, dense[tuple(idx.T)])

    @classmethod
    def from_tokens(cls, dims: Sequence[int], sample: np.ndarray, features: np.ndarray) -> "CountTensor":
        rows = np.column_stack([np.asarray(sample, dtype=np.int64), np.asarray(features, dtype=np.int64)])
        return cls(tuple(dims), rows.reshape(-1, len(dims)), np.ones(rows.shape[0], dtype=np.int64))


def _canonical(index: np.ndarray, counts: np.ndarray, dims: tuple[int, ...]):
    """Sort rows lexicographically and sum duplicates."""
    if index.shape[0] == 0:
        return index.reshape(0, len(dims)), counts.reshape(0)
    order = np.lexsort(index.T[::-1])
    index, counts = index[order], counts[order]
    new = np.ones(index.shape[0], dtype=bool)
    new[1:] = np.any(index[1:] != index[:-1], axis=1)
    starts = np.flatnonzero(new)
    return index[starts], np.add.reduceat(counts, starts)


def _find_rows(sorted_rows: np.ndarray, queries: np.ndarray) -> np.ndarray:
    """Position of each query row in lexicographically sorted rows, or -1."""
    out = np.full(queries.shape[0], -1, dtype=np.int64)
    if sorted_rows.shape[0] == 0:
        return out
    view = np.ascontiguousarray(sorted_rows).view([("", sorted_rows.dtype)] * sorted_rows.shape[1]).ravel()
    qview = np.ascontiguousarray(queries).view([("", queries.dtype)] * queries.shape[1]).ravel()
    pos = np.searchsorted(view, qview)
    hit = (pos < view.size) & (view[np.minimum(pos, view.size - 1)] == qview)
    out[hit] = pos[hit]
    return out


def load_counts(path: str | Path, p: int | None = None) -> CountTensor:
    """Read a count file.

    The first line must be ``#dims d_0 d_1 ... d_p``. Every other non-comment
    line holds ``sample y_1 ... y_p count`` as positive integers separated by
    tabs (any whitespace is accepted). Duplicate index tuples are summed.
    """
    path = Path(path)
    with path.open() as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("#dims"):
        raise CountFileError("missing '#dims d_0 ... d_p' header", line=1)
    try:
        dims = tuple(int(tok) for tok in lines[0].split()[1:])
    except ValueError:
        raise CountFileError(f"bad header {lines[0]!r}", line=1) from None
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise CountFileError(f"header dims must be >= 2 positive integers, got {dims}", line=1)
    if p is not None and len(dims) != p + 1:
        raise CountFileError(f"header declares {len(dims) - 1} feature modes, expected p={p}", line=1)
    width = len(dims) + 1
    rows, vals = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        toks = line.split()
        if len(toks) != width:
            raise CountFileError(f"expected {width} fields, got {len(toks)}", line=lineno)
        try:
            nums = [int(t) for t in toks]
        except ValueError:
            raise CountFileError(f"non-integer field in {line!r}", line=lineno) from None
        *idx, b = nums
        if b <= 0:
            raise CountFileError(f"count must be positive, got {b}", line=lineno)
        for j, (c, d) in enumerate(zip(idx, dims)):
            if not 1 <= c <= d:
                raise CountFileError(f"index {c} in mode {j} outside 1..{d}", line=lineno)
        rows.append([c - 1 for c in idx])
        vals.append(b)
    index = np.array(rows, dtype=np.int64).reshape(-1, len(dims))
    return CountTensor(dims, index, np.array(vals, dtype=np.int64))


def save_counts(t: CountTensor, path: str | Path) -> None:
    with Path(path).open("w") as fh:
        fh.write("#dims " + " ".join(str(d) for d in t.dims) + "\n")
        for row, b in zip(t.index, t.counts):
            fh.write("\t".join(str(int(c) + 1) for c in row) + f"\t{int(b)}\n")


@dataclass(frozen=True)
class ConditionalProbTensor:
    """Counts divided by their per-sample totals; samples with zero total are flagged."""

    dims: tuple[int, ...]
    index: np.ndarray
    values: np.ndarray
    empty_samples: np.ndarray

    def sample_sum(self) -> np.ndarray:
        return np.bincount(self.index[:, 0], weights=self.values, minlength=self.dims[0])


def normalize(t: CountTensor) -> ConditionalProbTensor:
    values = t.counts / t.lam[t.index[:, 0]] if t.nnz else np.zeros(0)
    return ConditionalProbTensor(t.dims, t.index, _frozen(values), _frozen(t.empty_samples))


@dataclass(frozen=True)
class TopicIndexMap:
    """Column-major map between topic tuples and flat topic indices."""

    K_dims: tuple[int, ...]

    def __post_init__(self):
        K_dims = tuple(int(k) for k in self.K_dims)
        if not K_dims or any(k < 1 for k in K_dims):
            raise ValueError(f"K_dims must be positive, got {K_dims}")
        object.__setattr__(self, "K_dims", K_dims)

    @property
    def K(self) -> int:
        return int(np.prod(self.K_dims))

    @property
    def strides(self) -> np.ndarray:
        return np.concatenate([[1], np.cumprod(self.K_dims[:-1])]).astype(np.int64)

    def ravel(self, k) -> np.ndarray | int:
        """0-based tuple(s) (..., p) to 0-based flat index."""
        k = np.asarray(k, dtype=np.int64)
        if np.any(k < 0) or np.any(k >= np.array(self.K_dims)):
            raise ValueError(f"topic tuple {k.tolist()} outside {self.K_dims}")
        return k @ self.strides

    def unravel(self, flat) -> np.ndarray:
        flat = np.asarray(flat, dtype=np.int64)
        if np.any(flat < 0) or np.any(flat >= self.K):
            raise ValueError(f"flat topic index outside 0..{self.K - 1}")
        return np.stack([(flat // s) % k for s, k in zip(self.strides, self.K_dims)], axis=-1)

    def all_tuples(self) -> np.ndarray:
        """Every 0-based tuple, in flat-index order."""
        return self.unravel(np.arange(self.K))


def vec_index(k: Sequence[int], m: TopicIndexMap) -> int:
    """1-based topic tuple to 1-based flat index: k_1 + (k_2-1)K_1 + ..."""
    k = np.asarray(k, dtype=np.int64)
    if k.shape != (len(m.K_dims),):
        raise ValueError(f"expected a {len(m.K_dims)}-tuple, got {k.tolist()}")
    return int(m.ravel(k - 1)) + 1


def vec_inverse(v: int, m: TopicIndexMap) -> tuple[int, ...]:
    return tuple(int(c) + 1 for c in m.unravel(int(v) - 1))
