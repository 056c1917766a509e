"""Covariate models with exact single-column conditional resampling."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .core import as_generator


@dataclass(frozen=True)
class ConditionalLaw:
    """Law of X_j given the other coordinates.

    Gaussian laws set ``mu_cond``/``sigma2_cond``; discrete laws set ``probs``
    over ``support``.
    """

    mu_cond: float | None = None
    sigma2_cond: float | None = None
    probs: np.ndarray | None = None
    support: np.ndarray | None = None

    def sample(self, size, rng) -> np.ndarray:
        gen = as_generator(rng)
        if self.probs is not None:
            return gen.choice(self.support, size=size, p=self.probs)
        return self.mu_cond + np.sqrt(self.sigma2_cond) * gen.standard_normal(size)


# --------------------------------------------------------------------------- Gaussian


@dataclass(frozen=True, eq=False)
class GaussianModel:
    mean: np.ndarray
    covariance: np.ndarray
    structure: str = "general"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        cov = np.atleast_2d(np.asarray(self.covariance, dtype=float))
        p = mean.shape[0]
        if cov.shape != (p, p):
            raise ValueError(f"covariance shape {cov.shape} does not match mean length {p}")
        if not np.allclose(cov, cov.T, atol=1e-10, rtol=0):
            raise ValueError("covariance is not symmetric")
        try:
            chol = linalg.cholesky(cov, lower=True)
        except linalg.LinAlgError as exc:
            raise linalg.LinAlgError("covariance is not positive definite") from exc
        precision = _precision(cov, self.structure, self.params)
        neighbors = [np.flatnonzero((precision[j] != 0) & (np.arange(p) != j)) for j in range(p)]
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)
        object.__setattr__(self, "_chol", chol)
        object.__setattr__(self, "_precision", precision)
        object.__setattr__(self, "_neighbors", neighbors)

    @property
    def p(self) -> int:
        return self.mean.shape[0]

    @property
    def precision(self) -> np.ndarray:
        return self._precision

    def neighbors(self, j: int) -> np.ndarray:
        """Coordinates the conditional law of X_j actually depends on."""
        return self._neighbors[j]

    @classmethod
    def ar1(cls, p: int, rho: float, mean=None) -> "GaussianModel":
        if not -1 < rho < 1:
            raise ValueError(f"AR(1) needs |rho| < 1, got {rho}")
        idx = np.arange(p)
        cov = rho ** np.abs(idx[:, None] - idx[None, :])
        mean = np.zeros(p) if mean is None else mean
        return cls(mean, cov, "ar1", {"rho": float(rho)})

    @classmethod
    def block(cls, p: int, block_size: int, off_diag: float, mean=None) -> "GaussianModel":
        if p % block_size:
            raise ValueError(f"p={p} is not a multiple of block_size={block_size}")
        blk = np.full((block_size, block_size), off_diag)
        np.fill_diagonal(blk, 1.0)
        cov = linalg.block_diag(*([blk] * (p // block_size)))
        mean = np.zeros(p) if mean is None else mean
        return cls(mean, cov, "block", {"block_size": int(block_size), "off_diag": float(off_diag)})

    @classmethod
    def identity(cls, p: int) -> "GaussianModel":
        return cls(np.zeros(p), np.eye(p), "general")

    def to_json(self) -> dict:
        out = {"type": "gaussian", "structure": self.structure, "p": self.p}
        if self.structure == "ar1":
            out["rho"] = self.params["rho"]
        elif self.structure == "block":
            out.update(block_size=self.params["block_size"], off_diag=self.params["off_diag"])
        else:
            out["covariance"] = self.covariance.tolist()
        out["mean"] = self.mean.tolist()
        return out


def _precision(cov: np.ndarray, structure: str, params: dict) -> np.ndarray:
    p = cov.shape[0]
    if structure == "ar1":
        rho = params["rho"]
        prec = np.zeros((p, p))
        scale = 1.0 / (1.0 - rho**2)
        diag = np.full(p, (1.0 + rho**2) * scale)
        if p > 1:
            diag[0] = diag[-1] = scale
        else:
            diag[0] = 1.0
        prec[np.diag_indices(p)] = diag
        off = np.arange(p - 1)
        prec[off, off + 1] = prec[off + 1, off] = -rho * scale
        return prec
    if structure == "block":
        k = params["block_size"]
        prec = np.zeros((p, p))
        for s in range(0, p, k):
            prec[s : s + k, s : s + k] = linalg.inv(cov[s : s + k, s : s + k])
        return prec
    return linalg.cho_solve(linalg.cho_factor(cov, lower=True), np.eye(p))


def gaussian_sample_rows(model: GaussianModel, n: int, rng) -> np.ndarray:
    gen = as_generator(rng)
    z = gen.standard_normal((n, model.p))
    return model.mean + z @ model._chol.T


def _conditional_moments(model: GaussianModel, j: int, x: np.ndarray):
    """Conditional mean (vectorized over rows of ``x``) and variance of X_j.

    ``x`` holds full rows; column j is ignored.
    """
    prec = model._precision
    nb = model._neighbors[j]
    var = 1.0 / prec[j, j]
    centered = x[..., nb] - model.mean[nb]
    mu = model.mean[j] - var * (centered @ prec[j, nb])
    return mu, var


def gaussian_conditional(model: GaussianModel, j: int, x_rest) -> ConditionalLaw:
    """Exact law of X_j | X_{-j} = x_rest (``x_rest`` has length p - 1)."""
    p = model.p
    if not 0 <= j < p:
        raise IndexError(f"variable index {j} outside 0..{p - 1}")
    x_rest = np.asarray(x_rest, dtype=float)
    if x_rest.shape != (p - 1,):
        raise ValueError(f"x_rest must have length {p - 1}")
    full = np.insert(x_rest, j, 0.0)
    mu, var = _conditional_moments(model, j, full)
    if not var > 0:
        raise linalg.LinAlgError(f"degenerate conditional variance for variable {j}")
    return ConditionalLaw(mu_cond=float(mu), sigma2_cond=float(var))


def gaussian_conditional_all(model: GaussianModel, x: np.ndarray):
    """Conditional means of every column given the others, shape (n, p), and variances (p,)."""
    prec = model._precision
    d = np.diag(prec)
    off = prec - np.diag(d)
    mu = model.mean - ((x - model.mean) @ off) / d
    return mu, 1.0 / d


def gaussian_resample_column(model: GaussianModel, x: np.ndarray, j: int, n_draws: int, rng) -> np.ndarray:
    """``n_draws`` independent copies of column j drawn from X_j | X_{-j}; shape (n, n_draws)."""
    gen = as_generator(rng)
    mu, var = _conditional_moments(model, j, x)
    return mu[:, None] + np.sqrt(var) * gen.standard_normal((x.shape[0], n_draws))


def gaussian_sample_x_given_y(model: GaussianModel, beta, noise_var: float, y, rng) -> np.ndarray:
    """Draw X | Y = y when Y = X'beta + N(0, noise_var).

    ``y`` may be a scalar (returns one row) or a vector (returns one row per entry).
    """
    if noise_var <= 0:
        raise ValueError(f"noise_var must be positive, got {noise_var}")
    gen = as_generator(rng)
    beta = np.asarray(beta, dtype=float)
    sigma_beta = model.covariance @ beta
    total = float(beta @ sigma_beta) + noise_var
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    mean = model.mean + np.outer(y_arr - model.mean @ beta, sigma_beta) / total
    # Cov(X|Y) = Sigma - s s'/total: draw from Sigma and correct the component along s.
    z = gen.standard_normal((y_arr.shape[0], model.p)) @ model._chol.T
    eps = gen.standard_normal(y_arr.shape[0]) * np.sqrt(noise_var)
    resid = (z @ beta + eps) / total
    draws = mean + z - np.outer(resid, sigma_beta)
    return draws[0] if np.ndim(y) == 0 else draws


# --------------------------------------------------------------------------- HMM

PAPER_TRANSITION = np.full((5, 5), 0.1) + 0.5 * np.eye(5)
PAPER_EMISSION = np.array(
    [
        [2 / 3, 1 / 6, 1 / 6],
        [5 / 12, 5 / 12, 1 / 6],
        [1 / 6, 2 / 3, 1 / 6],
        [1 / 6, 5 / 12, 5 / 12],
        [1 / 6, 1 / 6, 2 / 3],
    ]
)


@dataclass(frozen=True, eq=False)
class HmmModel:
    p: int
    transition: np.ndarray = field(default_factory=lambda: PAPER_TRANSITION.copy())
    emission: np.ndarray = field(default_factory=lambda: PAPER_EMISSION.copy())
    initial: np.ndarray = field(default_factory=lambda: np.full(5, 0.2))
    output_alphabet: np.ndarray = field(default_factory=lambda: np.array([1.0, 2.0, 3.0]))

    def __post_init__(self):
        for name in ("transition", "emission", "initial", "output_alphabet"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.p < 1:
            raise ValueError("HMM needs p >= 1")
        for name, mat in (("transition", self.transition), ("emission", self.emission), ("initial", self.initial)):
            if np.any(mat < 0) or not np.allclose(np.sum(np.atleast_2d(mat), axis=1), 1.0, atol=1e-12, rtol=0):
                raise ValueError(f"{name} must be nonnegative with rows summing to 1")
        n_hidden, n_out = self.emission.shape
        if self.transition.shape != (n_hidden, n_hidden) or self.initial.shape != (n_hidden,):
            raise ValueError("inconsistent HMM dimensions")
        if self.output_alphabet.shape != (n_out,):
            raise ValueError("output_alphabet length must equal number of output states")

    @property
    def n_hidden(self) -> int:
        return self.emission.shape[0]

    @property
    def n_out(self) -> int:
        return self.emission.shape[1]

    def symbols(self, x) -> np.ndarray:
        """Map emitted values back to symbol indices 0..n_out-1."""
        x = np.asarray(x, dtype=float)
        codes = np.searchsorted(self.output_alphabet, x)
        codes = np.clip(codes, 0, self.n_out - 1)
        bad = self.output_alphabet[codes] != x
        if np.any(bad):
            raise ValueError(f"values outside the output alphabet: {np.unique(x[bad])[:5]}")
        return codes

    def to_json(self) -> dict:
        return {
            "type": "hmm",
            "p": self.p,
            "transition": self.transition.tolist(),
            "emission": self.emission.tolist(),
            "initial": self.initial.tolist(),
            "output_alphabet": self.output_alphabet.tolist(),
        }


def hmm_sample_rows(model: HmmModel, n: int, rng) -> np.ndarray:
    gen = as_generator(rng)
    cum_t = np.cumsum(model.transition, axis=1)
    cum_e = np.cumsum(model.emission, axis=1)
    hidden = np.empty((n, model.p), dtype=np.int64)
    hidden[:, 0] = np.searchsorted(np.cumsum(model.initial), gen.random(n), side="right")
    for t in range(1, model.p):
        u = gen.random(n)
        hidden[:, t] = (u[:, None] >= cum_t[hidden[:, t - 1]]).sum(axis=1)
    u = gen.random((n, model.p))
    symbols = (u[..., None] >= cum_e[hidden]).sum(axis=2)
    symbols = np.minimum(symbols, model.n_out - 1)
    hidden = np.minimum(hidden, model.n_hidden - 1)
    return model.output_alphabet[symbols]


def _forward_backward(model: HmmModel, codes: np.ndarray):
    """Normalized forward/backward messages for rows of symbol codes.

    fwd[:, t] is P(H_t | x_1..x_t) and bwd[:, t] is proportional to
    P(x_{t+1}..x_p | H_t). Returns (fwd, bwd, log-likelihood) with a -inf
    likelihood flagging impossible rows.
    """
    n, p = codes.shape
    T, E = model.transition, model.emission
    fwd = np.empty((n, p, model.n_hidden))
    bwd = np.empty((n, p, model.n_hidden))
    loglik = np.zeros(n)
    a = model.initial * E[:, codes[:, 0]].T
    for t in range(p):
        if t > 0:
            a = (fwd[:, t - 1] @ T) * E[:, codes[:, t]].T
        s = a.sum(axis=1)
        with np.errstate(divide="ignore"):
            loglik += np.log(s)
        fwd[:, t] = a / np.where(s > 0, s, 1.0)[:, None]
    bwd[:, p - 1] = 1.0
    for t in range(p - 2, -1, -1):
        b = (bwd[:, t + 1] * E[:, codes[:, t + 1]].T) @ T.T
        s = b.sum(axis=1)
        bwd[:, t] = b / np.where(s > 0, s, 1.0)[:, None]
    return fwd, bwd, loglik


def _hmm_conditional_probs(model: HmmModel, j: int, fwd: np.ndarray, bwd: np.ndarray) -> np.ndarray:
    """P(X_j = a | X_{-j}) for every row.

    Uses fwd[:, j-1] and bwd[:, j] only, neither of which reads the symbol at j.
    """
    if j == 0:
        prior = np.broadcast_to(model.initial, (bwd.shape[0], model.n_hidden))
    else:
        prior = fwd[:, j - 1] @ model.transition
    weight = prior * bwd[:, j]
    probs = weight @ model.emission
    total = probs.sum(axis=1, keepdims=True)
    if np.any(total <= 0):
        row = int(np.flatnonzero(total.ravel() <= 0)[0])
        raise ValueError(f"conditioning event has probability zero (row {row}, position {j})")
    return probs / total


def hmm_conditional(model: HmmModel, j: int, x_rest) -> ConditionalLaw:
    """Exact law of X_j given the other emitted values (``x_rest`` has length p - 1)."""
    if not 0 <= j < model.p:
        raise IndexError(f"variable index {j} outside 0..{model.p - 1}")
    x_rest = np.asarray(x_rest, dtype=float)
    if x_rest.shape != (model.p - 1,):
        raise ValueError(f"x_rest must have length {model.p - 1}")
    full = np.insert(x_rest, j, model.output_alphabet[0])
    codes = model.symbols(full)[None, :]
    fwd, bwd, _ = _forward_backward(model, codes)
    probs = _hmm_conditional_probs(model, j, fwd, bwd)[0]
    return ConditionalLaw(probs=probs, support=model.output_alphabet.copy())


def hmm_resample_column(model: HmmModel, x: np.ndarray, j: int, n_draws: int, rng, messages=None) -> np.ndarray:
    gen = as_generator(rng)
    fwd, bwd = messages if messages is not None else _forward_backward(model, model.symbols(x))[:2]
    probs = _hmm_conditional_probs(model, j, fwd, bwd)
    cum = np.cumsum(probs, axis=1)
    u = gen.random((x.shape[0], n_draws))
    idx = (u[..., None] >= cum[:, None, :]).sum(axis=2)
    return model.output_alphabet[np.minimum(idx, model.n_out - 1)]


# --------------------------------------------------------------------------- dispatch


def sample_rows(model, n: int, rng) -> np.ndarray:
    if isinstance(model, GaussianModel):
        return gaussian_sample_rows(model, n, rng)
    return hmm_sample_rows(model, n, rng)


class ColumnSampler:
    """Per-dataset cache for repeated conditional resampling of columns.

    For HMMs the forward/backward messages are computed once per dataset rather
    than once per column.
    """

    def __init__(self, model, x: np.ndarray):
        self.model = model
        self.x = np.asarray(x, dtype=float)
        if self.x.shape[1] != model.p:
            raise ValueError(f"model dimension {model.p} does not match data with {self.x.shape[1]} columns")
        self._messages = None
        if isinstance(model, HmmModel):
            self._messages = _forward_backward(model, model.symbols(self.x))[:2]

    def resample(self, j: int, n_draws: int, rng) -> np.ndarray:
        if isinstance(self.model, GaussianModel):
            return gaussian_resample_column(self.model, self.x, j, n_draws, rng)
        return hmm_resample_column(self.model, self.x, j, n_draws, rng, self._messages)


def model_from_json(doc: dict):
    kind = doc.get("type")
    if kind == "gaussian":
        structure = doc.get("structure", "general")
        p = int(doc["p"]) if "p" in doc else len(doc["mean"])
        mean = np.asarray(doc["mean"], dtype=float) if "mean" in doc else None
        if structure == "ar1":
            return GaussianModel.ar1(p, float(doc["rho"]), mean)
        if structure == "block":
            return GaussianModel.block(p, int(doc["block_size"]), float(doc["off_diag"]), mean)
        cov = np.asarray(doc["covariance"], dtype=float)
        return GaussianModel(np.zeros(cov.shape[0]) if mean is None else mean, cov)
    if kind == "hmm":
        fields = {k: doc[k] for k in ("transition", "emission", "initial", "output_alphabet") if k in doc}
        return HmmModel(int(doc["p"]), **fields)
    raise ValueError(f"unknown covariate model type {kind!r}")


def model_to_json(model) -> dict:
    return model.to_json()


def fit_gaussian(x: np.ndarray, shrink: float = 1e-3) -> GaussianModel:
    """Empirical Gaussian: sample mean and sample covariance plus ``shrink * I``."""
    x = np.asarray(x, dtype=float)
    cov = np.cov(x, rowvar=False, bias=False)
    cov = np.atleast_2d(cov) + shrink * np.eye(x.shape[1])
    cov = 0.5 * (cov + cov.T)
    return GaussianModel(x.mean(axis=0), cov, "general")
