"""Selective SeqStep+ and the two sequential-CRT pipelines (data splitting and symmetric scores)."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, RngStream, Selection, SeqStepParams, below_threshold
from .crt import CrtConfig, crt_all_variables
from .stats import ordering_scores


@dataclass(frozen=True)
class Ordering:
    """``perm[i]`` is the (0-based) variable visited at step i + 1."""

    perm: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64)
        if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(perm.shape[0])):
            raise ValueError("ordering must be a permutation of 0..p-1")
        object.__setattr__(self, "perm", perm)

    @classmethod
    def identity(cls, p: int) -> "Ordering":
        return cls(np.arange(p))

    @classmethod
    def from_scores(cls, scores) -> "Ordering":
        """Descending scores; ties go to the smaller variable index."""
        scores = np.asarray(scores, dtype=float)
        return cls(np.lexsort((np.arange(scores.shape[0]), -scores)))


def seqstep_select(pvals, order: Ordering | None, params: SeqStepParams, n_randomizations: int | None = None
                   ) -> Selection:
    """Selective SeqStep+ on p-values visited in ``order``.

    k_hat is the largest k with (1 + #{p > c}) / max(#{p <= c}, 1) <= (1 - c) q / c over
    the first k visited p-values; the selection is the visited p-values <= c up to k_hat.
    Only the indicators 1{p <= c} are used. With ``n_randomizations`` the comparison
    is done on integer CRT ranks.
    """
    pvals = np.asarray(pvals, dtype=float)
    p = pvals.shape[0]
    order = Ordering.identity(p) if order is None else order
    if order.perm.shape[0] != p:
        raise ValueError("ordering length does not match the number of p-values")
    if np.any(pvals <= 0) or np.any(pvals > 1):
        raise ValueError("p-values must lie in (0, 1]")
    c, q = params.c, params.q
    small = below_threshold(pvals, c, n_randomizations)[order.perm]
    n_small = np.cumsum(small)
    n_large = np.arange(1, p + 1) - n_small
    ratio = (1.0 + n_large) / np.maximum(n_small, 1)
    threshold = (1.0 - c) * q / c
    ok = np.flatnonzero(ratio <= threshold * (1.0 + 1e-12))
    k_hat = int(ok[-1]) + 1 if ok.size else 0
    chosen = order.perm[:k_hat][small[:k_hat]]
    return Selection(k_hat, tuple(int(j) for j in np.sort(chosen)), ratio, order.perm)


def _split_rows(n: int, split_frac: float, rng: RngStream):
    if not 0 < split_frac < 1:
        raise ValueError(f"split_frac must lie in (0, 1), got {split_frac}")
    n1 = math.ceil(split_frac * n)
    if n1 < 2 or n - n1 < 2:
        raise ValueError(f"split of n={n} at {split_frac} leaves a fold with fewer than 2 rows")
    perm = rng.generator().permutation(n)
    return np.sort(perm[:n1]), np.sort(perm[n1:])


def pipeline_split(dataset: Dataset, model, cfg: CrtConfig, params: SeqStepParams, split_frac: float = 0.5,
                   rng: RngStream = RngStream(0), workers: int | None = None) -> Selection:
    """CRT p-values on one fold, ordering by the single-column statistic on the other."""
    rows_p, rows_o = _split_rows(dataset.n, split_frac, rng.child(0))
    d_p = Dataset(dataset.x[rows_p], dataset.y[rows_p], dataset.response_kind)
    records = crt_all_variables(d_p, model, cfg, rng.child(1), workers=workers)
    z = ordering_scores(cfg.statistic, dataset.x[rows_o], dataset.y[rows_o], rng.child(2))
    pvals = np.array([r.pvalue for r in records])
    return seqstep_select(pvals, Ordering.from_scores(z), params, cfg.B)


def pipeline_symmetric(dataset: Dataset, model, cfg: CrtConfig, params: SeqStepParams,
                       rng: RngStream = RngStream(0), workers: int | None = None, records: list | None = None
                       ) -> Selection:
    """CRT p-values and symmetric scores from the same resamples; order by descending score.

    Precomputed ``records`` (from :func:`crt_all_variables`) may be passed to skip the CRT.
    """
    if records is None:
        records = crt_all_variables(dataset, model, cfg, rng, workers=workers)
    pvals = np.array([r.pvalue for r in records])
    z = np.array([r.score for r in records])
    return seqstep_select(pvals, Ordering.from_scores(z), params, cfg.B)
