"""Synthetic responses for the simulation settings.

Four kinds, each usable with either covariate family:

* ``linear``: y = x @ beta + N(0, 1), beta = A/sqrt(n) on k random coordinates.
* ``logistic``: y ~ Bernoulli(sigmoid((x - centering) @ beta)).
* ``nonlinear_pairs``: y = (A/sqrt(n)) * sum_k 1{x_jk > t} 1{x_lk > t} + N(0, 1) over
  k/2 disjoint random pairs.
* ``nonlinear_binary``: logistic regression on transformed covariates, either
  sign(x) or 1{x > t} - offset.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .core import ResponseKind, as_generator


class ResponseModel(str, enum.Enum):
    LINEAR = "linear"
    LOGISTIC = "logistic"
    NONLINEAR_PAIRS = "nonlinear_pairs"
    NONLINEAR_BINARY = "nonlinear_binary"


class Transform(str, enum.Enum):
    SIGN = "sign"
    INDICATOR = "indicator"


@dataclass(frozen=True)
class ResponseSpec:
    """Response setting.

    ``support`` fixes the nonnull coordinates; when ``None`` they are drawn from the
    RngStream passed to :func:`generate_response`. For ``nonlinear_pairs`` the first
    half of ``support`` pairs elementwise with the second half.
    """

    kind: ResponseModel = ResponseModel.LINEAR
    amplitude: float = 5.0
    n_nonnull: int = 20
    support: tuple | None = None
    centering: float = 0.0
    threshold: float = 0.0
    transform: Transform = Transform.SIGN
    indicator_offset: float = 2.0 / 3.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ResponseModel(self.kind))
        object.__setattr__(self, "transform", Transform(self.transform))
        if self.amplitude < 0:
            raise ValueError("amplitude must be nonnegative")
        if self.n_nonnull < 0:
            raise ValueError("n_nonnull must be nonnegative")
        if self.kind is ResponseModel.NONLINEAR_PAIRS and self.n_nonnull % 2:
            raise ValueError("nonlinear_pairs needs an even number of nonnulls")
        if self.support is not None:
            sup = tuple(int(s) for s in self.support)
            if len(sup) != self.n_nonnull:
                raise ValueError(f"support has {len(sup)} entries, expected {self.n_nonnull}")
            if len(set(sup)) != len(sup):
                raise ValueError("support indices must be distinct")
            object.__setattr__(self, "support", sup)

    @property
    def response_kind(self) -> ResponseKind:
        if self.kind in (ResponseModel.LINEAR, ResponseModel.NONLINEAR_PAIRS):
            return ResponseKind.CONTINUOUS
        return ResponseKind.BINARY

    @classmethod
    def for_family(cls, kind, family: str, amplitude: float, n_nonnull: int = 20) -> "ResponseSpec":
        """Setting conventions per covariate family (``gaussian``/``ar1`` or ``hmm``)."""
        kind = ResponseModel(kind)
        if family == "hmm":
            return cls(kind, amplitude, n_nonnull, centering=2.0, threshold=1.5, transform=Transform.INDICATOR)
        if family in ("ar1", "gaussian", "block"):
            return cls(kind, amplitude, n_nonnull, centering=0.0, threshold=0.0, transform=Transform.SIGN)
        raise ValueError(f"unknown covariate family {family!r}")

    def to_json(self) -> dict:
        out = {
            "kind": self.kind.value, "amplitude": self.amplitude, "n_nonnull": self.n_nonnull,
            "centering": self.centering, "threshold": self.threshold, "transform": self.transform.value,
            "indicator_offset": self.indicator_offset,
        }
        if self.support is not None:
            out["support"] = [s + 1 for s in self.support]
        return out

    @classmethod
    def from_json(cls, doc: dict) -> "ResponseSpec":
        doc = dict(doc)
        if doc.get("support") is not None:
            doc["support"] = tuple(int(s) - 1 for s in doc["support"])
        return cls(**doc)


@dataclass(frozen=True)
class GroundTruth:
    nonnull_set: frozenset
    null_set: frozenset

    @classmethod
    def from_support(cls, support, p: int) -> "GroundTruth":
        nonnull = frozenset(int(s) for s in support)
        return cls(nonnull, frozenset(range(p)) - nonnull)

    def __post_init__(self):
        if self.nonnull_set & self.null_set:
            raise ValueError("nonnull and null sets overlap")

    def fdp(self, selected) -> float:
        sel = set(selected)
        return len(sel & self.null_set) / max(len(sel), 1)

    def power(self, selected) -> float:
        sel = set(selected)
        return len(sel & self.nonnull_set) / max(len(self.nonnull_set), 1)


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def generate_response(x, spec: ResponseSpec, rng):
    """Draw ``(y, truth)`` for covariates ``x`` under ``spec``."""
    x = np.asarray(x, dtype=float)
    n, p = x.shape
    gen = as_generator(rng)
    k = spec.n_nonnull
    if spec.support is not None:
        support = np.asarray(spec.support, dtype=np.int64)
        if np.any((support < 0) | (support >= p)):
            raise IndexError(f"support index out of range for p={p}")
    else:
        if k > p:
            raise ValueError(f"cannot choose {k} nonnulls among {p} variables")
        support = gen.choice(p, size=k, replace=False)
    scale = spec.amplitude / np.sqrt(n)
    kind = spec.kind

    if kind is ResponseModel.NONLINEAR_PAIRS:
        left, right = support[: k // 2], support[k // 2:]
        t = spec.threshold
        mean = scale * np.sum((x[:, left] > t) & (x[:, right] > t), axis=1)
        y = mean + gen.standard_normal(n)
    else:
        beta = np.zeros(p)
        beta[support] = scale
        if kind is ResponseModel.LINEAR:
            y = x @ beta + gen.standard_normal(n)
        else:
            if kind is ResponseModel.LOGISTIC:
                design = x - spec.centering
            elif spec.transform is Transform.SIGN:
                design = np.sign(x - spec.threshold)
            else:
                design = (x > spec.threshold) - spec.indicator_offset
            prob = _sigmoid(design @ beta)
            y = (gen.random(n) < prob).astype(float)
    return y, GroundTruth.from_support(support, p)
