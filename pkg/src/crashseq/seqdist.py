"""Optimal-matching sequence dissimilarity with fixed indel/substitution costs.

align_cost runs the classic (len(a)+1) x (len(b)+1) dynamic program and
returns the minimum total edit cost; matching tokens cost nothing. The
default unit costs give the Levenshtein distance. distance_matrix batches
the same recurrence over many pairs at once with numpy, grouping pairs by
length so the inner loops stay fully vectorized.
"""

from __future__ import annotations

import json
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

_BINARY_MAGIC = b"CSDM0001"
_CHUNK_PAIRS = 262144


@dataclass(frozen=True)
class CostScheme:
    """Indel and substitution costs shared by every comparison."""

    indel: float = 1.0
    substitution: float = 1.0

    def __post_init__(self):
        if self.indel <= 0 or self.substitution <= 0:
            raise ValueError("indel and substitution costs must be positive")

    @property
    def metric_warning(self) -> bool:
        # substituting can then beat delete+insert, breaking the triangle inequality
        return self.substitution > 2 * self.indel


def align_cost(a: Sequence, b: Sequence, costs: CostScheme = CostScheme()) -> float:
    """Minimum total cost over all insert/delete/substitute edit scripts."""
    d, s = costs.indel, costs.substitution
    if len(a) < len(b):
        a, b = b, a
    prev = [j * d for j in range(len(b) + 1)]
    for i in range(1, len(a) + 1):
        ai = a[i - 1]
        cur = [i * d]
        for j in range(1, len(b) + 1):
            sub = prev[j - 1] + (0.0 if ai == b[j - 1] else s)
            ins = cur[j - 1] + d
            dele = prev[j] + d
            best = sub if sub <= ins else ins
            cur.append(best if best <= dele else dele)
        prev = cur
    return float(prev[-1])


def condensed_index(n: int, i: int, j: int) -> int:
    """Index of pair (i, j), i < j, in the condensed upper-triangular layout."""
    if i > j:
        i, j = j, i
    if i == j or j >= n:
        raise IndexError(f"bad pair ({i}, {j}) for n={n}")
    return i * (2 * n - i - 1) // 2 + (j - i - 1)


@dataclass
class DissimMatrix:
    """Symmetric pairwise dissimilarities in condensed upper-triangular form."""

    ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        n = len(self.ids)
        expected = n * (n - 1) // 2
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (expected,):
            raise ValueError(f"expected {expected} condensed values, got {self.values.shape}")
        if expected and self.values.min() < 0:
            raise ValueError("dissimilarities must be non-negative")

    @property
    def n(self) -> int:
        return len(self.ids)

    def get(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        return float(self.values[condensed_index(self.n, i, j)])

    def square(self) -> np.ndarray:
        out = np.zeros((self.n, self.n), dtype=np.float64)
        iu = np.triu_indices(self.n, k=1)
        out[iu] = self.values
        out[(iu[1], iu[0])] = self.values
        return out

    # -- persistence ------------------------------------------------------

    def save(self, path: str | Path, fmt: str = "binary") -> None:
        path = Path(path)
        if fmt == "binary":
            blob = json.dumps(list(self.ids)).encode("utf-8")
            with open(path, "wb") as fh:
                fh.write(_BINARY_MAGIC)
                fh.write(struct.pack("<QQ", self.n, len(blob)))
                fh.write(blob)
                fh.write(self.values.astype("<f8").tobytes())
        elif fmt == "csv":
            square = self.square()
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write("id," + ",".join(self.ids) + "\n")
                for i, row_id in enumerate(self.ids):
                    fh.write(row_id + "," + ",".join(repr(float(v)) for v in square[i]) + "\n")
        else:
            raise ValueError(f"unknown matrix format {fmt!r}")

    @classmethod
    def load(cls, path: str | Path) -> "DissimMatrix":
        path = Path(path)
        with open(path, "rb") as fh:
            magic = fh.read(len(_BINARY_MAGIC))
            if magic == _BINARY_MAGIC:
                n, blob_len = struct.unpack("<QQ", fh.read(16))
                ids = tuple(json.loads(fh.read(blob_len).decode("utf-8")))
                values = np.frombuffer(fh.read(), dtype="<f8").copy()
                return cls(ids, values)
        lines = path.read_text(encoding="utf-8").splitlines()
        ids = tuple(lines[0].split(",")[1:])
        n = len(ids)
        square = np.zeros((n, n))
        for i, line in enumerate(lines[1 : n + 1]):
            square[i] = [float(v) for v in line.split(",")[1:]]
        return cls(ids, square[np.triu_indices(n, k=1)])


def _encode_token_lists(sequences):
    codes: dict = {}
    encoded = []
    for seq in sequences:
        row = []
        for tok in seq:
            if tok not in codes:
                codes[tok] = len(codes)
            row.append(codes[tok])
        encoded.append(np.asarray(row, dtype=np.int32))
    return encoded


def _batch_costs(A: np.ndarray, B: np.ndarray, la: int, lb: int, d: float, s: float) -> np.ndarray:
    """Edit cost for a batch of pairs that all have lengths (la, lb)."""
    m = A.shape[0]
    if lb == 0:
        return np.full(m, la * d)
    prev = np.broadcast_to(np.arange(lb + 1) * d, (m, lb + 1)).copy()
    cur = np.empty_like(prev)
    for i in range(1, la + 1):
        cur[:, 0] = i * d
        ai = A[:, i - 1]
        for j in range(1, lb + 1):
            sub = prev[:, j - 1] + np.where(ai == B[:, j - 1], 0.0, s)
            np.minimum(sub, cur[:, j - 1] + d, out=sub)
            np.minimum(sub, prev[:, j] + d, out=sub)
            cur[:, j] = sub
        prev, cur = cur, prev
    return prev[:, lb].copy()


def _fill_chunk(encoded, lengths, pair_i, pair_j, d, s, out, offset):
    li = lengths[pair_i]
    lj = lengths[pair_j]
    order = np.lexsort((lj, li))
    maxlen = int(lengths.max()) if len(lengths) else 0
    padded = np.full((len(encoded), maxlen), -1, dtype=np.int32)
    for idx, row in enumerate(encoded):
        padded[idx, : len(row)] = row
    pos = 0
    while pos < len(order):
        la, lb = int(li[order[pos]]), int(lj[order[pos]])
        end = pos
        while end < len(order) and li[order[end]] == la and lj[order[end]] == lb:
            end += 1
        sel = order[pos:end]
        A = padded[pair_i[sel], :la]
        B = padded[pair_j[sel], :lb]
        out[offset + sel] = _batch_costs(A, B, la, lb, d, s)
        pos = end


def distance_matrix(
    sequences: Sequence[Sequence],
    costs: CostScheme = CostScheme(),
    ids: Sequence[str] | None = None,
    threads: int = 1,
) -> DissimMatrix:
    """Pairwise align_cost over a list of token sequences.

    Output is independent of chunking/thread count: every chunk writes its
    own disjoint slice of the condensed array.
    """
    if len(sequences) == 0:
        raise ValueError("sequence list must be non-empty")
    if ids is None:
        ids = tuple(str(i) for i in range(len(sequences)))
    else:
        ids = tuple(ids)
        if len(ids) != len(sequences):
            raise ValueError("ids and sequences must have the same length")
    n = len(sequences)
    encoded = _encode_token_lists(sequences)
    lengths = np.asarray([len(e) for e in encoded], dtype=np.int64)
    total = n * (n - 1) // 2
    out = np.zeros(total, dtype=np.float64)
    iu = np.triu_indices(n, k=1)
    pair_i = iu[0].astype(np.int64)
    pair_j = iu[1].astype(np.int64)
    chunks = [
        (start, min(start + _CHUNK_PAIRS, total)) for start in range(0, total, _CHUNK_PAIRS)
    ]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [
                pool.submit(
                    _fill_chunk,
                    encoded,
                    lengths,
                    pair_i[a:b],
                    pair_j[a:b],
                    costs.indel,
                    costs.substitution,
                    out,
                    a,
                )
                for a, b in chunks
            ]
            for fut in futures:
                fut.result()
    else:
        for a, b in chunks:
            _fill_chunk(
                encoded, lengths, pair_i[a:b], pair_j[a:b], costs.indel, costs.substitution, out, a
            )
    return DissimMatrix(ids, out)
