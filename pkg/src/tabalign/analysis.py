"""Neighborhood diagnostics: target-view label purity and the input-vs-latent
10-NN label consistency comparison."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AnalysisError
from .fewshot import embed
from .preprocess import Preprocessor, sample_mask
from .pretrain import EncoderStack


def _topk_neighbors(points: np.ndarray, k: int, block: int = 256) -> np.ndarray:
    """Indices of the k nearest rows per row (Euclidean, self excluded)."""
    n = points.shape[0]
    sq = np.square(points).sum(axis=1)
    out = np.empty((n, k), dtype=np.int64)
    for start in range(0, n, block):
        stop = min(start + block, n)
        d2 = sq[start:stop, None] - 2.0 * points[start:stop] @ points.T + sq[None, :]
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        part = np.argpartition(d2, k - 1, axis=1)[:, :k]
        order = np.argsort(np.take_along_axis(d2, part, axis=1), axis=1, kind="stable")
        out[start:stop] = np.take_along_axis(part, order, axis=1)
    return out


def neighbor_fraction_curve(
    x: np.ndarray,
    labels: np.ndarray,
    pp: Preprocessor,
    ratio: float,
    n_separations: int,
    k_max: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Mean same-class fraction among the k nearest target-view neighbors.

    For each of ``n_separations`` sampled masks, every row's k nearest
    neighbors are found in its target view and the cumulative same-class
    fraction is recorded for k = 1..k_max; the curve averages over rows and
    separations. Entry ``curve[k-1]`` is the value at k.
    """
    x = np.asarray(x)
    labels = np.asarray(labels)
    if labels.shape[0] != x.shape[0]:
        raise AnalysisError("labels must match the row count")
    if n_separations < 1:
        raise AnalysisError("need at least one separation")
    if k_max < 1 or k_max >= x.shape[0]:
        raise AnalysisError(f"k_max must be in [1, {x.shape[0] - 1}]")

    denom = np.arange(1, k_max + 1)
    accum = np.zeros(k_max)
    for _ in range(n_separations):
        mask = sample_mask(pp, ratio, rng)
        target = x * mask.encoded_mask
        nbrs = _topk_neighbors(target, k_max)
        same = labels[nbrs] == labels[:, None]
        accum += (np.cumsum(same, axis=1) / denom).mean(axis=0)
    return accum / n_separations


@dataclass
class ConsistencyTable:
    """Per-bucket comparison of input-space and latent-space neighbor labels.

    Rows are bucketed by how many of their 10 input-space nearest neighbors
    share their label; ``mean_latent_count[b]`` is NaN for empty buckets.
    """

    k: int
    bucket_sizes: np.ndarray
    mean_input_count: np.ndarray
    mean_latent_count: np.ndarray
    overall_input_mean: float
    overall_latent_mean: float


def latent_consistency(
    x: np.ndarray,
    labels: np.ndarray,
    stack: EncoderStack,
    k: int = 10,
) -> ConsistencyTable:
    """Compare same-class neighbor counts before and after encoding.

    Counts same-class members among each row's k nearest neighbors in the
    encoded input space and in the embedding space, then buckets rows by
    their input-space count (0..k).
    """
    x = np.asarray(x)
    labels = np.asarray(labels)
    if x.shape[0] < k + 1:
        raise AnalysisError(f"need more than {k} rows, got {x.shape[0]}")
    if labels.shape[0] != x.shape[0]:
        raise AnalysisError("labels must match the row count")

    input_counts = (labels[_topk_neighbors(x, k)] == labels[:, None]).sum(axis=1)
    latent = embed(stack, x).vectors
    latent_counts = (labels[_topk_neighbors(latent, k)] == labels[:, None]).sum(axis=1)

    sizes = np.zeros(k + 1, dtype=np.int64)
    mean_latent = np.full(k + 1, np.nan)
    for b in range(k + 1):
        rows = input_counts == b
        sizes[b] = rows.sum()
        if sizes[b]:
            mean_latent[b] = latent_counts[rows].mean()
    return ConsistencyTable(
        k=k,
        bucket_sizes=sizes,
        mean_input_count=np.arange(k + 1, dtype=np.float64),
        mean_latent_count=mean_latent,
        overall_input_mean=float(input_counts.mean()),
        overall_latent_mean=float(latent_counts.mean()),
    )


def write_curve_csv(curve: np.ndarray, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(["k", "mean_fraction"])
        for k, value in enumerate(curve, start=1):
            writer.writerow([k, f"{value:.6f}"])


def write_consistency_csv(table: ConsistencyTable, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(
            ["input_bucket", "mean_input_count", "mean_latent_count", "bucket_size"]
        )
        for b in range(table.k + 1):
            writer.writerow(
                [
                    b,
                    f"{table.mean_input_count[b]:.6f}",
                    f"{table.mean_latent_count[b]:.6f}",
                    int(table.bucket_sizes[b]),
                ]
            )
