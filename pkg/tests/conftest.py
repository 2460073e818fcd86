"""Shared fixtures and numerical-oracle helpers."""

from __future__ import annotations

import numpy as np
import pytest

from tabalign.data import CATEGORICAL, NUMERICAL, ColumnSchema, Dataset
from tabalign.synthetic import make_gaussian_dataset


def central_diff_grads(loss_fn, arrays: list[np.ndarray], h: float = 1e-6) -> list[np.ndarray]:
    """Central finite differences of a scalar function over a list of arrays.

    Perturbs each entry in place, so ``loss_fn`` must read the arrays live.
    """
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gf = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_fn()
            flat[i] = orig - h
            down = loss_fn()
            flat[i] = orig
            gf[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_error(a: np.ndarray, b: np.ndarray) -> float:
    """Largest entrywise relative error, floored so finite-difference noise on
    near-zero entries does not dominate."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(1.0, float(np.abs(a).max()), float(np.abs(b).max()))
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-3 * scale)
    return float((np.abs(a - b) / denom).max())


def mixed_dataset(seed: int = 0, n_rows: int = 60) -> Dataset:
    """A small dataset with both column kinds for encoding/mask tests."""
    rng = np.random.default_rng(seed)
    schema = [
        ColumnSchema("n0", NUMERICAL),
        ColumnSchema("c0", CATEGORICAL, 3),
        ColumnSchema("n1", NUMERICAL),
        ColumnSchema("c1", CATEGORICAL, 4),
    ]
    rows = np.column_stack(
        [
            rng.normal(size=n_rows),
            rng.integers(3, size=n_rows),
            rng.normal(2.0, 0.5, size=n_rows),
            rng.integers(4, size=n_rows),
        ]
    ).astype(np.float64)
    # Guarantee every level appears so cardinalities match the data.
    rows[:3, 1] = [0, 1, 2]
    rows[:4, 3] = [0, 1, 2, 3]
    labels = np.asarray(np.arange(n_rows) % 2, dtype=np.int64)
    return Dataset(schema=schema, rows=rows, labels=labels, n_classes=2, name="mixed")


@pytest.fixture(scope="session")
def gauss_ds() -> Dataset:
    return make_gaussian_dataset(n_rows=800, d_raw=16, n_classes=4, separation=6.0, seed=3)
