"""Conditional randomization test: original (B+1 separate fits) and one-shot (one joint fit)."""
from __future__ import annotations

import enum
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, PValueRecord, RngStream, as_generator
from .covariates import ColumnSampler
from .stats import DatasetStatistics, ScoreKind, StatisticKind, cv_folds, statistic_oneshot, symmetric_score


class CrtMode(str, enum.Enum):
    ORIGINAL = "original"
    ONE_SHOT = "one_shot"


@dataclass(frozen=True)
class CrtConfig:
    B: int = 9
    mode: CrtMode = CrtMode.ONE_SHOT
    statistic: StatisticKind = field(default_factory=StatisticKind)
    score: ScoreKind = ScoreKind.MAX_STAT

    def __post_init__(self):
        if int(self.B) < 1:
            raise ValueError(f"B must be at least 1, got {self.B}")
        object.__setattr__(self, "B", int(self.B))
        object.__setattr__(self, "mode", CrtMode(self.mode))
        object.__setattr__(self, "score", ScoreKind(self.score))
        if not isinstance(self.statistic, StatisticKind):
            object.__setattr__(self, "statistic", StatisticKind.from_json(self.statistic))

    def to_json(self) -> dict:
        return {"B": self.B, "mode": self.mode.value, "statistic": self.statistic.to_json(),
                "score": self.score.value}

    @classmethod
    def from_json(cls, doc: dict) -> "CrtConfig":
        doc = dict(doc)
        if "statistic" in doc:
            doc["statistic"] = StatisticKind.from_json(doc["statistic"])
        return cls(**doc)


@dataclass(frozen=True)
class ResampleBundle:
    """Column 0 is the observed X_j, columns 1..B are conditional resamples."""

    j: int
    columns: np.ndarray

    def __post_init__(self):
        cols = np.asarray(self.columns, dtype=float)
        if cols.ndim != 2 or cols.shape[1] < 2:
            raise ValueError("bundle needs the observed column plus at least one resample")
        object.__setattr__(self, "columns", cols)

    @property
    def B(self) -> int:
        return self.columns.shape[1] - 1

    @property
    def observed(self) -> np.ndarray:
        return self.columns[:, 0]


class CrtError(RuntimeError):
    """Per-variable failures of a batch run, keyed by 0-based variable index."""

    def __init__(self, errors: dict, records: list):
        lines = ", ".join(f"variable {j + 1}: {e}" for j, e in sorted(errors.items()))
        super().__init__(f"CRT failed for {len(errors)} variable(s): {lines}")
        self.errors = errors
        self.records = records


def crt_resample(model, x, j: int, B: int, rng, sampler: ColumnSampler | None = None) -> ResampleBundle:
    """Observed column j of ``x`` plus B independent draws from X_j | X_{-j}."""
    x = np.asarray(x, dtype=float)
    if not 0 <= j < x.shape[1]:
        raise IndexError(f"variable index {j} outside 0..{x.shape[1] - 1}")
    if sampler is None:
        sampler = ColumnSampler(model, x)
    draws = sampler.resample(j, B, rng)
    return ResampleBundle(j, np.column_stack([x[:, j], draws]))


def crt_rank(stats, rng) -> int:
    """1 + #{b >= 1 : T_b >= T_0}, with exact ties ordered by uniform jitter keys."""
    stats = np.asarray(stats, dtype=float)
    jitter = as_generator(rng).random(stats.shape[0])
    above = (stats[1:] > stats[0]) | ((stats[1:] == stats[0]) & (jitter[1:] > jitter[0]))
    return 1 + int(np.count_nonzero(above))


def _record(j, stats, cfg: CrtConfig, rng) -> PValueRecord:
    rank = crt_rank(stats, rng)
    return PValueRecord(rank, cfg.B, symmetric_score(cfg.score, stats), j, tuple(float(s) for s in stats))


def _bundle_stats(bundle, x_rest, y, cfg: CrtConfig, rng, joint: bool) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    folds = None
    if cfg.statistic.needs_rng:
        folds = cv_folds(y.shape[0], cfg.statistic.cv_folds, rng.child(0))
    if joint:
        return statistic_oneshot(cfg.statistic, bundle.columns, x_rest, y, bundle.j, folds=folds)
    return np.concatenate([
        statistic_oneshot(cfg.statistic, bundle.columns[:, [b]], x_rest, y, bundle.j, folds=folds)
        for b in range(bundle.columns.shape[1])
    ])


def crt_pvalue_original(bundle: ResampleBundle, x_rest, y, cfg: CrtConfig, rng: RngStream) -> PValueRecord:
    """p-value from B+1 separate statistic fits (the CV folds are shared across fits)."""
    if cfg.mode is not CrtMode.ORIGINAL:
        raise ValueError("crt_pvalue_original needs mode='original'")
    stats = _bundle_stats(bundle, x_rest, y, cfg, rng, joint=False)
    return _record(bundle.j, stats, cfg, rng.child(1))


def crt_pvalue_oneshot(bundle: ResampleBundle, x_rest, y, cfg: CrtConfig, rng: RngStream) -> PValueRecord:
    """p-value from a single joint fit over all B+1 copies and ``x_rest``."""
    if cfg.mode is not CrtMode.ONE_SHOT:
        raise ValueError("crt_pvalue_oneshot needs mode='one_shot'")
    stats = _bundle_stats(bundle, x_rest, y, cfg, rng, joint=True)
    return _record(bundle.j, stats, cfg, rng.child(1))


def default_workers() -> int:
    env = os.environ.get("SEQCRT_THREADS")
    if env:
        return max(1, int(env))
    return 1


def crt_all_variables(dataset: Dataset, model, cfg: CrtConfig, rng: RngStream, workers: int | None = None,
                      variables=None) -> list:
    """One PValueRecord per variable.

    Streams: ``rng.child(0)`` draws the CV folds shared by every fit on this dataset,
    ``rng.child(1, j)`` owns variable j (resampling, then tie-breaking), so results do
    not depend on processing order or ``workers``.
    """
    x, y = dataset.x, dataset.y
    if model.p != dataset.p:
        raise ValueError(f"model dimension {model.p} does not match dataset with p={dataset.p}")
    folds = None
    if cfg.statistic.needs_rng:
        folds = cv_folds(dataset.n, cfg.statistic.cv_folds, rng.child(0))
    evaluator = DatasetStatistics(cfg.statistic, x, y, folds=folds)
    sampler = ColumnSampler(model, x)
    joint = cfg.mode is CrtMode.ONE_SHOT
    todo = list(range(dataset.p)) if variables is None else [int(v) for v in variables]

    def one(j):
        stream = rng.child(1, j)
        bundle = crt_resample(model, x, j, cfg.B, stream.child(0), sampler)
        stats = evaluator.stats(j, bundle.columns, joint=joint)
        return _record(j, stats, cfg, stream.child(1))

    def guarded(j):
        try:
            return one(j), None
        except Exception as exc:  # collected and re-raised with indices below
            return None, exc

    workers = default_workers() if workers is None else max(1, int(workers))
    if workers == 1:
        results = [guarded(j) for j in todo]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(guarded, todo))
    records = [r for r, _ in results]
    errors = {j: e for j, (_, e) in zip(todo, results) if e is not None}
    if errors:
        raise CrtError(errors, records)
    return records
