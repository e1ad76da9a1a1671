"""Per-sweep measurement rows shared by the Python engine and the compiled kernel."""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np


@dataclass
class MeasurementChunk:
    """Column arrays, one row per sweep.

    ``end_sites`` / ``end_times`` list worm ends as tail_0, head_0, tail_1, ...
    and hold -1 / 0.0 in Z-sector rows.  ``n_particles``, ``layer_counts`` and
    ``e_diag`` are taken at every sweep but are physical only in Z rows.
    """
    sector: np.ndarray
    n_particles: np.ndarray
    layer_counts: np.ndarray
    e_diag: np.ndarray
    n_kinks: np.ndarray
    end_sites: np.ndarray
    end_times: np.ndarray
    log_w: np.ndarray

    @classmethod
    def empty(cls, n: int, n_layers: int, n_worms: int) -> "MeasurementChunk":
        return cls(
            sector=np.zeros(n, dtype=np.int8),
            n_particles=np.zeros(n, dtype=np.int64),
            layer_counts=np.zeros((n, n_layers), dtype=np.int64),
            e_diag=np.zeros(n),
            n_kinks=np.zeros(n, dtype=np.int64),
            end_sites=np.full((n, 2 * n_worms), -1, dtype=np.int64),
            end_times=np.zeros((n, 2 * n_worms)),
            log_w=np.zeros(n),
        )

    def __len__(self) -> int:
        return len(self.sector)

    @property
    def n_worms(self) -> int:
        return self.end_sites.shape[1] // 2

    def z_rows(self) -> np.ndarray:
        return self.sector == 0

    def g_rows(self) -> np.ndarray:
        return self.sector == 1

    def slice(self, sel) -> "MeasurementChunk":
        return MeasurementChunk(**{f.name: getattr(self, f.name)[sel] for f in fields(self)})

    def identical(self, other: "MeasurementChunk") -> bool:
        return all(np.array_equal(getattr(self, f.name), getattr(other, f.name))
                   for f in fields(self))

    @staticmethod
    def concat(chunks: Sequence["MeasurementChunk"]) -> "MeasurementChunk":
        if not chunks:
            raise ValueError("nothing to concatenate")
        return MeasurementChunk(**{
            f.name: np.concatenate([getattr(c, f.name) for c in chunks])
            for f in fields(MeasurementChunk)})
