"""Embedding table storage and sparse mixture aggregation.

A mixed input is the convex combination of embedding rows under a set of
mixing weights.  Accumulation runs in float64 over the sparse support
only (never a dense vocabulary loop), iterating ids in ascending order so
the result is independent of how the support happened to be ordered; the
final vector is narrowed to the table's float32 storage dtype.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .mix_core import MixingWeights


@dataclass(frozen=True)
class EmbeddingTable:
    """V x d matrix of float32 token embeddings."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float32)
        if m.ndim != 2:
            raise ValueError("embedding matrix must be 2-D")
        if m.shape[0] < 2 or m.shape[1] < 1:
            raise ValueError(f"embedding matrix needs V >= 2 rows and d >= 1 columns, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("embedding matrix contains non-finite entries")
        object.__setattr__(self, "matrix", m)

    @property
    def vocab(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


def lookup(table: EmbeddingTable, token_id: int) -> np.ndarray:
    """Row `token_id` of the table as a fresh float32 vector."""
    token_id = int(token_id)
    if not (0 <= token_id < table.vocab):
        raise IndexError(f"token {token_id} outside vocabulary of size {table.vocab}")
    return table.matrix[token_id].copy()


def mix_embeddings(table: EmbeddingTable, weights: MixingWeights) -> np.ndarray:
    """Weighted sum of table rows over the weight support, as float32.

    A one-hot weight vector reproduces `lookup` bit-exactly.
    """
    ids = weights.ids
    if np.any(ids < 0) or np.any(ids >= table.vocab):
        raise IndexError(f"weight support outside vocabulary of size {table.vocab}")
    if ids.size == 1 and weights.weights[0] == 1.0:
        return table.matrix[int(ids[0])].copy()
    order = np.argsort(ids, kind="stable")
    mixed = kernels.mix_rows(table.matrix, ids[order], weights.weights[order])
    return mixed.astype(np.float32)
