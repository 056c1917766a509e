"""Shared domain types and the seeded randomness contract.

Index convention: every in-memory index (function arguments, ``Selection.selected``,
``PValueRecord.variable_index``) is 0-based like numpy. Serialized output
(JSON/CSV written by the harness and CLI) is 1-based.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np


class ResponseKind(str, enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


@dataclass(frozen=True)
class Dataset:
    x: np.ndarray
    y: np.ndarray
    response_kind: ResponseKind = ResponseKind.CONTINUOUS

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        y = np.asarray(self.y, dtype=float).ravel()
        if x.ndim != 2:
            raise ValueError(f"x must be 2-d, got shape {x.shape}")
        n, p = x.shape
        if n < 2 or p < 1:
            raise ValueError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if y.shape[0] != n:
            raise ValueError(f"y has length {y.shape[0]} but x has {n} rows")
        kind = ResponseKind(self.response_kind)
        if kind is ResponseKind.BINARY and not np.all((y == 0) | (y == 1)):
            raise ValueError("binary response must take values in {0, 1}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "response_kind", kind)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


@dataclass(frozen=True)
class PValueRecord:
    """CRT output for one variable.

    The p-value is held as an integer rank ``r`` with ``p = r / (B + 1)`` so that
    threshold comparisons never depend on float rounding.
    """

    rank: int
    n_randomizations: int
    score: float
    variable_index: int
    statistics: tuple = field(default=(), repr=False, compare=False)

    def __post_init__(self):
        if not 1 <= self.rank <= self.n_randomizations + 1:
            raise ValueError(f"rank {self.rank} outside 1..{self.n_randomizations + 1}")

    @property
    def pvalue(self) -> float:
        return self.rank / (self.n_randomizations + 1)


def rank_threshold(c: float, n_randomizations: int) -> int:
    """Largest rank r with r/(B+1) <= c, computed without float equality hazards."""
    scaled = c * (n_randomizations + 1)
    nearest = round(scaled)
    if math.isclose(scaled, nearest, rel_tol=0.0, abs_tol=1e-9):
        return int(nearest)
    return int(math.floor(scaled))


def below_threshold(pvals, c: float, n_randomizations: int | None = None) -> np.ndarray:
    """Boolean indicators 1{p_j <= c}.

    With ``n_randomizations`` given, p-values are mapped back to integer ranks first.
    """
    pvals = np.asarray(pvals, dtype=float)
    if n_randomizations is None:
        return pvals <= c
    ranks = np.rint(pvals * (n_randomizations + 1)).astype(np.int64)
    return ranks <= rank_threshold(c, n_randomizations)


@dataclass(frozen=True)
class SeqStepParams:
    c: float = 0.1
    q: float = 0.1

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise ValueError(f"c must lie in (0, 1), got {self.c}")
        if not 0 < self.q < 1:
            raise ValueError(f"q must lie in (0, 1), got {self.q}")


@dataclass(frozen=True)
class Selection:
    k_hat: int
    selected: tuple
    ratio_trace: np.ndarray = field(repr=False, compare=False)
    order: np.ndarray = field(repr=False, compare=False, default=None)

    def to_json(self) -> dict:
        return {
            "k_hat": int(self.k_hat),
            "selected": [int(j) + 1 for j in self.selected],
            "ratio_trace": [float(r) for r in self.ratio_trace],
        }


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream keyed by ``(seed, stream_id)``.

    Streams are backed by Philox, a counter-based generator, so a stream's draws
    do not depend on how work is scheduled. ``child`` derives an independent
    sub-stream (e.g. per replication, then per variable).
    """

    seed: int
    stream_id: tuple = ()

    def __post_init__(self):
        sid = self.stream_id
        if isinstance(sid, (int, np.integer)):
            sid = (int(sid),)
        object.__setattr__(self, "stream_id", tuple(int(s) for s in sid))

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + tuple(int(i) for i in ids))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1), spawn_key=self.stream_id)
        return np.random.Generator(np.random.Philox(ss))


def rng_uniform(stream: RngStream, size=None):
    """Uniform draws on [0, 1) from ``stream``; repeated calls replay the same draws."""
    return stream.generator().random(size)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")
