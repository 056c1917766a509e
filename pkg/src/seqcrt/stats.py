"""Test statistics for the CRT and symmetric ordering scores.

Every statistic comes in two shapes: ``statistic_single`` scores one candidate
column, ``statistic_oneshot`` scores B+1 candidate columns in one joint fit and is
equivariant under permutations of those columns.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _cd
from .core import as_generator


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, kkt_violation: float):
        super().__init__(f"{message} (KKT violation {kkt_violation:.3g})")
        self.kkt_violation = kkt_violation


class ZeroVarianceWarning(UserWarning):
    pass


class Loss(str, enum.Enum):
    SQUARED = "squared"
    LOGISTIC = "logistic"


@dataclass(frozen=True)
class StatisticKind:
    """Configuration of a test statistic.

    ``name`` is one of ``abs_correlation``, ``neighborhood_ols`` or
    ``lasso_coefficient``. ``neighborhood`` maps a variable index to the indices
    (in full-matrix numbering) of its neighbors.
    """

    name: str = "lasso_coefficient"
    cv_folds: int = 5
    n_lambda: int = 50
    lambda_min_ratio: float = 0.01
    lambda_grid: tuple | None = None
    ridge_eps: float = 1e-6
    loss: Loss = Loss.SQUARED
    neighborhood: dict | None = field(default=None, compare=False)
    tol: float = 1e-10

    def __post_init__(self):
        if self.name not in ("abs_correlation", "neighborhood_ols", "lasso_coefficient"):
            raise ValueError(f"unknown statistic {self.name!r}")
        if self.cv_folds < 2:
            raise ValueError("cv_folds must be at least 2")
        if self.ridge_eps <= 0:
            raise ValueError("ridge_eps must be positive")
        if self.lambda_grid is not None:
            grid = np.asarray(self.lambda_grid, dtype=float)
            if np.any(grid <= 0) or np.any(np.diff(grid) >= 0):
                raise ValueError("lambda_grid must be positive and strictly decreasing")
        object.__setattr__(self, "loss", Loss(self.loss))

    @property
    def needs_rng(self) -> bool:
        return self.name == "lasso_coefficient"

    def to_json(self) -> dict:
        out = {"name": self.name}
        if self.name == "lasso_coefficient":
            out.update(cv_folds=self.cv_folds, n_lambda=self.n_lambda, lambda_min_ratio=self.lambda_min_ratio,
                       ridge_eps=self.ridge_eps, loss=self.loss.value)
            if self.lambda_grid is not None:
                out["lambda_grid"] = list(self.lambda_grid)
        elif self.name == "neighborhood_ols":
            out["ridge_eps"] = self.ridge_eps
        return out

    @classmethod
    def from_json(cls, doc) -> "StatisticKind":
        if isinstance(doc, str):
            return cls(doc)
        doc = dict(doc)
        if "lambda_grid" in doc and doc["lambda_grid"] is not None:
            doc["lambda_grid"] = tuple(doc["lambda_grid"])
        return cls(**doc)


class ScoreKind(str, enum.Enum):
    MAX_STAT = "max_stat"
    MAX_MINUS_MEDIAN = "max_minus_median"


def symmetric_score(kind, stats) -> float:
    """Permutation-invariant summary of the B+1 statistics."""
    s = np.sort(np.asarray(stats, dtype=float))
    kind = ScoreKind(kind)
    if kind is ScoreKind.MAX_STAT:
        return float(s[-1])
    # lower median for even counts
    return float(s[-1] - s[(s.shape[0] - 1) // 2])


# --------------------------------------------------------------------------- solvers


def _kkt_violation(G, c, lam, l1w, l2w, beta) -> float:
    grad = c - G @ beta - l2w * beta
    thresh = lam * l1w
    viol = np.where(beta != 0, np.abs(grad - thresh * np.sign(beta)), np.maximum(np.abs(grad) - thresh, 0.0))
    return float(viol.max(initial=0.0))


def _solve_quadratic(G, c, lam, l1w, l2w, beta0=None, tol=1e-10, max_sweeps=100_000):
    beta = np.zeros(G.shape[0]) if beta0 is None else np.array(beta0, dtype=float)
    grad = c - G @ beta
    sweeps, delta = _cd.cd_solve(G, c, float(lam), l1w, l2w, beta, grad, tol, max_sweeps)
    if delta >= tol:
        raise ConvergenceError("coordinate descent did not converge", _kkt_violation(G, c, lam, l1w, l2w, beta))
    return beta


def elastic_net_fit(design, y, lam: float, ridge_eps: float = 1e-6, tol: float = 1e-10,
                    max_sweeps: int = 100_000) -> np.ndarray:
    """Minimize (1/2n)||y - Xb||^2 + lam ||b||_1 + (ridge_eps/2) ||b||^2 (no intercept)."""
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    x = np.asarray(design, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = x.shape
    G = x.T @ x / n
    c = x.T @ y / n
    return _solve_quadratic(G, c, lam, np.ones(p), np.full(p, float(ridge_eps)), tol=tol, max_sweeps=max_sweeps)


def _logistic_nll(eta, y):
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta))


def logistic_elastic_net_fit(design, y, lam: float, ridge_eps: float = 1e-6, beta0=None, tol: float = 1e-10):
    """Penalized logistic regression with an unpenalized intercept.

    Minimizes mean(log(1+e^eta) - y*eta) + lam ||b||_1 + (ridge_eps/2)||b||^2 with
    eta = b0 + Xb, via proximal Newton steps whose subproblems are solved by CD.
    Returns ``(intercept, coefficients)``.
    """
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    x = np.asarray(design, dtype=float)
    l2 = np.full(x.shape[1], float(ridge_eps))
    theta = _logistic_fit(x, np.asarray(y, dtype=float), lam, l2, beta0, tol)
    return theta[0], theta[1:]


def _logistic_fit(x, y, lam, l2, theta0=None, tol=1e-10, max_newton=100):
    n, d = x.shape
    dd = np.hstack([np.ones((n, 1)), x])
    l1w = np.concatenate([[0.0], np.ones(d)])
    l2w = np.concatenate([[0.0], l2])
    theta = np.zeros(d + 1) if theta0 is None else np.array(theta0, dtype=float)

    def objective(t):
        return _logistic_nll(dd @ t, y) + lam * np.abs(t[1:]).sum() + 0.5 * np.sum(l2w * t * t)

    obj = objective(theta)
    for _ in range(max_newton):
        eta = dd @ theta
        mu = 1.0 / (1.0 + np.exp(-eta))
        w = np.maximum(mu * (1.0 - mu), 1e-5)
        z = eta + (y - mu) / w
        dw = dd * w[:, None]
        G = dw.T @ dd / n
        c = dw.T @ z / n
        proposal = _solve_quadratic(G, c, lam, l1w, l2w, theta, tol=tol)
        step, new_obj = 1.0, objective(proposal)
        while new_obj > obj + 1e-14 and step > 1e-8:
            step *= 0.5
            new_obj = objective(theta + step * (proposal - theta))
        new_theta = theta + step * (proposal - theta)
        change = np.max(np.abs(new_theta - theta))
        theta, obj = new_theta, new_obj
        if change < 1e-9:
            return theta
    mu = 1.0 / (1.0 + np.exp(-(dd @ theta)))
    grad = dd.T @ (y - mu) / n
    zero = np.zeros((d + 1, d + 1))
    raise ConvergenceError("proximal Newton did not converge", _kkt_violation(zero, grad, lam, l1w, l2w, theta))


# --------------------------------------------------------------------------- lasso statistic


def cv_folds(n: int, k: int, rng) -> np.ndarray:
    """Fold label per row, balanced and assigned by a seeded permutation."""
    gen = as_generator(rng)
    labels = np.arange(n) % k
    return labels[gen.permutation(n)]


class _LassoProblem:
    """Cross-products of one dataset, split by CV fold, reused across many fits.

    All statistics for one dataset share the same folds, so the per-fold Gram
    blocks of X are computed once and only the candidate columns' blocks are new
    for each fit.
    """

    def __init__(self, x, y, folds, kind: StatisticKind):
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.folds = np.asarray(folds)
        self.kind = kind
        self.n_folds = int(self.folds.max()) + 1
        self.fold_rows = [np.flatnonzero(self.folds == f) for f in range(self.n_folds)]
        if kind.loss is Loss.SQUARED:
            x, y = self.x, self.y
            self.xx = x.T @ x
            self.xs = x.sum(axis=0)
            self.xy = x.T @ y
            self.ys = y.sum()
            self.held_xx = [x[r].T @ x[r] for r in self.fold_rows]
            self.held_xs = [x[r].sum(axis=0) for r in self.fold_rows]
            self.held_xy = [x[r].T @ y[r] for r in self.fold_rows]
            self.held_ys = [y[r].sum() for r in self.fold_rows]

    def coefficients(self, cols: np.ndarray, rest_idx: np.ndarray) -> np.ndarray:
        """|coefficient| of each candidate column in the CV-tuned fit on [cols, x[:, rest_idx]]."""
        cols = np.asarray(cols, dtype=float)
        if cols.ndim == 1:
            cols = cols[:, None]
        groups, inverse = _duplicate_groups(cols)
        reps = cols[:, groups]
        m = reps.shape[1]
        counts = np.bincount(inverse, minlength=m).astype(float)
        if self.kind.loss is Loss.SQUARED:
            beta = self._fit_squared(reps, counts, rest_idx)
        else:
            beta = self._fit_logistic(reps, counts, rest_idx)
        gamma = beta[:m] / counts
        return np.abs(gamma[inverse])

    def _weights(self, m, p_rest, counts):
        l1w = np.ones(m + p_rest)
        l2w = np.full(m + p_rest, self.kind.ridge_eps)
        l2w[:m] /= counts
        return l1w, l2w

    def _grid(self, lam_max):
        kind = self.kind
        if kind.lambda_grid is not None:
            return np.asarray(kind.lambda_grid, dtype=float)
        if lam_max <= 0:
            lam_max = 1e-12
        return lam_max * np.logspace(0.0, np.log10(kind.lambda_min_ratio), kind.n_lambda)

    def _fit_squared(self, cols, counts, rest_idx):
        x, y, n = self.x, self.y, self.x.shape[0]
        m = cols.shape[1]
        ri = np.asarray(rest_idx)
        cx = cols.T @ x[:, ri]
        cc = cols.T @ cols
        cs = cols.sum(axis=0)
        cy = cols.T @ y

        def assemble(xx, xs, xy, ys, cxm, ccm, csm, cym, nn):
            d = m + ri.shape[0]
            S = np.empty((d, d))
            S[:m, :m] = ccm
            S[:m, m:] = cxm
            S[m:, :m] = cxm.T
            S[m:, m:] = xx[np.ix_(ri, ri)]
            s = np.concatenate([csm, xs[ri]])
            sy = np.concatenate([cym, xy[ri]])
            G = (S - np.outer(s, s) / nn) / nn
            c = (sy - s * ys / nn) / nn
            return G, c, s / nn, ys / nn

        G_full, c_full, _, _ = assemble(self.xx, self.xs, self.xy, self.ys, cx, cc, cs, cy, n)
        l1w, l2w = self._weights(m, ri.shape[0], counts)
        # lambda_max from the unmerged design: merged columns carry count-times the signal
        lams = self._grid(np.max(np.abs(c_full) / np.concatenate([counts, np.ones(ri.shape[0])])))
        tol = self.kind.tol
        cv_err = np.zeros(lams.shape[0])
        for f, rows in enumerate(self.fold_rows):
            nh = rows.shape[0]
            hc = cols[rows]
            hx = x[np.ix_(rows, ri)]
            G, c, mean_tr, ymean_tr = assemble(
                self.xx - self.held_xx[f], self.xs - self.held_xs[f], self.xy - self.held_xy[f],
                self.ys - self.held_ys[f], cx - hc.T @ hx, cc - hc.T @ hc, cs - hc.sum(axis=0),
                cy - hc.T @ y[rows], n - nh,
            )
            path, worst = _cd.cd_path(G, c, lams, l1w, l2w, tol, 100_000)
            if worst > 0:
                raise ConvergenceError("CV path did not converge", worst)
            held = np.hstack([hc, hx]) - mean_tr
            resid = (y[rows] - ymean_tr)[:, None] - held @ path.T
            cv_err += np.sum(resid**2, axis=0)
        best = int(np.argmin(cv_err))
        path, worst = _cd.cd_path(G_full, c_full, lams[: best + 1], l1w, l2w, tol, 100_000)
        if worst > 0:
            raise ConvergenceError("final fit did not converge", worst)
        return path[-1]

    def _fit_logistic(self, cols, counts, rest_idx):
        x, y = self.x, self.y
        design = np.hstack([cols, x[:, np.asarray(rest_idx)]])
        m = cols.shape[1]
        l2 = np.full(design.shape[1], self.kind.ridge_eps)
        l2[:m] /= counts
        scale = np.concatenate([1.0 / counts, np.ones(design.shape[1] - m)])
        lams = self._grid(np.max(np.abs(design.T @ (y - y.mean())) / y.shape[0] * scale))
        cv_dev = np.zeros(lams.shape[0])
        for rows in self.fold_rows:
            train = np.ones(y.shape[0], dtype=bool)
            train[rows] = False
            theta = None
            for i, lam in enumerate(lams):
                theta = _logistic_fit(design[train], y[train], lam, l2, theta, tol=self.kind.tol)
                eta = theta[0] + design[rows] @ theta[1:]
                cv_dev[i] += np.sum(np.logaddexp(0.0, eta) - y[rows] * eta)
        best = int(np.argmin(cv_dev))
        theta = None
        for lam in lams[: best + 1]:
            theta = _logistic_fit(design, y, lam, l2, theta, tol=self.kind.tol)
        return theta[1:]


def _duplicate_groups(cols: np.ndarray):
    """Representative column per group of bitwise-identical columns, and group labels.

    Groups are labelled by first appearance so the result is permutation-equivariant.
    """
    m = cols.shape[1]
    reps, inverse, seen = [], np.empty(m, dtype=np.int64), {}
    for b in range(m):
        key = cols[:, b].tobytes()
        if key not in seen:
            seen[key] = len(reps)
            reps.append(b)
        inverse[b] = seen[key]
    return np.asarray(reps, dtype=np.int64), inverse


# --------------------------------------------------------------------------- public statistic API


def _abs_corr_columns(cols: np.ndarray, y: np.ndarray) -> np.ndarray:
    cc = cols - cols.mean(axis=0)
    yc = y - y.mean()
    denom = np.sqrt(np.sum(cc**2, axis=0) * np.sum(yc**2))
    zero = denom <= 1e-300
    if np.any(zero):
        warnings.warn("zero-variance column; statistic set to 0", ZeroVarianceWarning, stacklevel=3)
    out = np.zeros(cols.shape[1])
    out[~zero] = np.abs(cc[:, ~zero].T @ yc) / denom[~zero]
    return np.minimum(out, 1.0)


def _ols_columns(cols, nb_cols, y, ridge_eps):
    design = np.hstack([cols, nb_cols])
    design = design - design.mean(axis=0)
    yc = y - y.mean()
    n = y.shape[0]
    A = design.T @ design / n + ridge_eps * np.eye(design.shape[1])
    coef = np.linalg.solve(A, design.T @ yc / n)
    return np.abs(coef[: cols.shape[1]])


def _neighbors_in_rest(kind: StatisticKind, j: int | None, p_rest: int) -> np.ndarray:
    if kind.neighborhood is None or j is None:
        raise ValueError("neighborhood_ols needs a neighborhood map and the variable index j")
    nb = np.asarray(kind.neighborhood.get(j, kind.neighborhood.get(str(j), [])), dtype=np.int64)
    nb = nb[nb != j]
    out = np.where(nb < j, nb, nb - 1)
    if np.any((out < 0) | (out >= p_rest)):
        raise IndexError(f"neighborhood of {j} out of range")
    return out


def statistic_oneshot(kind: StatisticKind, columns, x_rest, y, j: int | None = None, rng=None,
                      folds=None) -> np.ndarray:
    """Importance of each of the B+1 candidate columns, fitted jointly with ``x_rest``.

    For the lasso the CV folds come from ``folds`` or, failing that, from ``rng``;
    folds depend on row indices only.
    """
    cols = np.asarray(columns, dtype=float)
    if cols.ndim == 1:
        cols = cols[:, None]
    x_rest = np.asarray(x_rest, dtype=float).reshape(cols.shape[0], -1)
    y = np.asarray(y, dtype=float)
    if kind.name == "abs_correlation":
        return _abs_corr_columns(cols, y)
    if kind.name == "neighborhood_ols":
        nb = _neighbors_in_rest(kind, j, x_rest.shape[1])
        return _ols_columns(cols, x_rest[:, nb], y, kind.ridge_eps)
    if folds is None:
        if rng is None:
            raise ValueError("lasso statistic needs CV folds or an RngStream to draw them")
        folds = cv_folds(y.shape[0], kind.cv_folds, rng)
    prob = _LassoProblem(x_rest, y, folds, kind)
    return prob.coefficients(cols, np.arange(x_rest.shape[1]))


def statistic_single(kind: StatisticKind, xj, x_rest, y, j: int | None = None, rng=None, folds=None) -> float:
    return float(statistic_oneshot(kind, np.asarray(xj, dtype=float)[:, None], x_rest, y, j, rng, folds)[0])


class DatasetStatistics:
    """Statistic evaluator bound to one dataset (shares folds and cross-products).

    ``stats(j, columns)`` returns the importance of candidate columns for variable
    j when fitted with all other columns of ``x``. With ``joint=False`` each column
    is fitted separately (original CRT); otherwise one joint fit (one-shot CRT).
    """

    def __init__(self, kind: StatisticKind, x, y, rng=None, folds=None):
        self.kind = kind
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.p = self.x.shape[1]
        self._lasso = None
        if kind.name == "lasso_coefficient":
            if folds is None:
                if rng is None:
                    raise ValueError("lasso statistic needs CV folds or an RngStream to draw them")
                folds = cv_folds(self.x.shape[0], kind.cv_folds, rng)
            self.folds = np.asarray(folds)
            self._lasso = _LassoProblem(self.x, self.y, self.folds, kind)

    def rest_index(self, j: int) -> np.ndarray:
        return np.delete(np.arange(self.p), j)

    def stats(self, j: int, columns, joint: bool = True) -> np.ndarray:
        cols = np.asarray(columns, dtype=float)
        if cols.ndim == 1:
            cols = cols[:, None]
        if self.kind.name == "abs_correlation":
            return _abs_corr_columns(cols, self.y)
        if self.kind.name == "neighborhood_ols":
            nb = _neighbors_in_rest(self.kind, j, self.p - 1)
            rest = self.x[:, self.rest_index(j)][:, nb]
            if joint:
                return _ols_columns(cols, rest, self.y, self.kind.ridge_eps)
            return np.concatenate([_ols_columns(cols[:, [b]], rest, self.y, self.kind.ridge_eps)
                                   for b in range(cols.shape[1])])
        ri = self.rest_index(j)
        if joint:
            return self._lasso.coefficients(cols, ri)
        return np.concatenate([self._lasso.coefficients(cols[:, [b]], ri) for b in range(cols.shape[1])])


def ordering_scores(kind: StatisticKind, x, y, rng=None, folds=None) -> np.ndarray:
    """``statistic_single`` of every column of ``x`` against the remaining columns.

    For the lasso each single-column fit uses the same design up to column order,
    so one fit on ``x`` gives all p values at once.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ev = DatasetStatistics(kind, x, y, rng=rng, folds=folds)
    if kind.name == "lasso_coefficient":
        return ev._lasso.coefficients(x, np.empty(0, dtype=np.int64))
    return np.array([ev.stats(j, x[:, j])[0] for j in range(x.shape[1])])
