"""FDR bounds under dependent p-values, their sharpness constructions, and the a_j estimator.

Bounds
------
* almost independent:  q (c + delta)/c * (1 - c)/(1 - c - delta) + eps
* exchangeable:        q + c(1 - q), refined to q + eps(c, q, rho) under pairwise
  indicator correlation at most rho
* arbitrary:           (q + c(1 - q)) * sum_{j in H0} 1/(j + 1), capped by (q + c(1 - q)) log p
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .core import Dataset, RngStream, SeqStepParams, as_generator, rank_threshold
from .covariates import GaussianModel, gaussian_conditional_all, gaussian_sample_rows, gaussian_sample_x_given_y
from .crt import CrtConfig, CrtMode, crt_all_variables
from .selection import seqstep_select


class BoundKind(str, enum.Enum):
    ALMOST_INDEPENDENT = "almost_independent"
    EXCHANGEABLE_SIMPLE = "exchangeable_simple"
    EXCHANGEABLE_RHO = "exchangeable_rho"
    ARBITRARY = "arbitrary"


@dataclass(frozen=True)
class BoundReport:
    bound_value: float
    kind: BoundKind
    inputs: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"kind": self.kind.value, "bound_value": self.bound_value, "inputs": dict(self.inputs),
                **{k: v for k, v in self.extra.items()}}


def _check_unit(name, v, closed=False):
    ok = (0 <= v <= 1) if closed else (0 < v < 1)
    if not ok:
        raise ValueError(f"{name} must lie in {'[0, 1]' if closed else '(0, 1)'}, got {v}")


def bound_almost_independent(c: float, q: float, delta: float, epsilon: float) -> BoundReport:
    _check_unit("c", c)
    _check_unit("q", q)
    _check_unit("epsilon", epsilon, closed=True)
    if delta < 0:
        raise ValueError(f"delta must be nonnegative, got {delta}")
    if c + delta >= 1:
        raise ValueError(f"need c + delta < 1, got c={c}, delta={delta}")
    value = q * (c + delta) / c * (1 - c) / (1 - c - delta) + epsilon
    return BoundReport(value, BoundKind.ALMOST_INDEPENDENT, {"c": c, "q": q, "delta": delta, "epsilon": epsilon})


def exchangeable_beta(c: float, q: float) -> float:
    return (c + (1 - c) * q) / ((1 - c) * (1 - q))


def exchangeable_delta(c: float, q: float, rho: float) -> float:
    return rho * (c * (1 - q) + q) / (c * (1 - q))


def epsilon_inflation(c: float, q: float, rho: float) -> float:
    """eps(c, q, rho): the FDR excess over q allowed by rho-correlated exchangeable nulls."""
    d = exchangeable_delta(c, q, rho)
    b = exchangeable_beta(c, q)
    cd = c - c * d
    first = d / (1 + b * d) * (c / (1 - c) - cd / (1 - cd) * q)
    return min(first, c * (1 - q))


def bound_exchangeable(c: float, q: float, rho: float | None = None) -> BoundReport:
    _check_unit("c", c)
    _check_unit("q", q)
    if rho is None:
        return BoundReport(q + c * (1 - q), BoundKind.EXCHANGEABLE_SIMPLE, {"c": c, "q": q})
    _check_unit("rho", rho, closed=True)
    eps = epsilon_inflation(c, q, rho)
    return BoundReport(q + eps, BoundKind.EXCHANGEABLE_RHO, {"c": c, "q": q, "rho": rho},
                       {"epsilon": eps, "delta": exchangeable_delta(c, q, rho), "beta": exchangeable_beta(c, q)})


def bound_arbitrary(c: float, q: float, null_positions, p: int) -> BoundReport:
    """Position-weighted bound; ``null_positions`` are 1-based positions in the ordering."""
    _check_unit("c", c)
    _check_unit("q", q)
    if not (1 - c) * q < c:
        raise ValueError(f"the arbitrary-dependence bound needs (1 - c) q < c, got c={c}, q={q}")
    pos = np.asarray(sorted(set(int(j) for j in null_positions)), dtype=float)
    if pos.size and (pos[0] < 1 or pos[-1] > p):
        raise ValueError(f"null positions must lie in 1..{p}")
    scale = q + c * (1 - q)
    value = scale * float(np.sum(1.0 / (pos + 1.0)))
    return BoundReport(value, BoundKind.ARBITRARY, {"c": c, "q": q, "p": p, "n_null": int(pos.size)},
                       {"log_p_cap": scale * math.log(p)})


def epsilon_surface(c: float, q_grid, rho_grid) -> np.ndarray:
    """eps(c, q, rho) with rows indexed by q and columns by rho."""
    return np.array([[epsilon_inflation(c, q, r) for r in rho_grid] for q in q_grid])


# --------------------------------------------------------------------------- optimization lemma


def lemma_opt_value(alpha: float, c: float, sigma2: float) -> float:
    """Max of sum pi_i x_i/(1 - x_i) over three-point laws on (-inf, alpha] with mean c, variance sigma2."""
    if not 0 < c < alpha < 1:
        raise ValueError(f"need 0 < c < alpha < 1, got c={c}, alpha={alpha}")
    if sigma2 < 0:
        raise ValueError("sigma2 must be nonnegative")
    return alpha / (1 - alpha) - (alpha - c) ** 2 / ((1 - alpha) * (sigma2 + (1 - c) * (alpha - c)))


@numba.njit(cache=True)
def _grid_search(xs, c, sigma2):
    m2 = sigma2 + c * c
    best = -np.inf
    n = xs.shape[0]
    f = xs / (1.0 - xs)
    for i in range(n):
        for j in range(i + 1, n):
            for k in range(j + 1, n):
                a, b, d = xs[i], xs[j], xs[k]
                pa = (m2 - c * (b + d) + b * d) / ((a - b) * (a - d))
                pb = (m2 - c * (a + d) + a * d) / ((b - a) * (b - d))
                pd = (m2 - c * (a + b) + a * b) / ((d - a) * (d - b))
                if pa < -1e-12 or pb < -1e-12 or pd < -1e-12:
                    continue
                v = pa * f[i] + pb * f[j] + pd * f[k]
                if v > best:
                    best = v
    return best


def lemma_grid_oracle(alpha: float, c: float, sigma2: float, n_grid: int = 400) -> float:
    """Brute force over support triples on an ``n_grid``-point grid of [0, alpha].

    For each triple the weights are fixed by the three moment equations; triples
    with a negative weight are skipped. Returns -inf when no triple is feasible.
    """
    xs = np.linspace(0.0, alpha, n_grid)
    return float(_grid_search(xs, float(c), float(sigma2)))


# --------------------------------------------------------------------------- sharpness constructions


class AdversarialKind(str, enum.Enum):
    GLOBAL_NULL_SHARP = "global_null_sharp"
    EXCHANGEABLE_RHO_SHARP = "exchangeable_rho_sharp"


@dataclass(frozen=True)
class AdversarialSpec:
    kind: AdversarialKind
    p: int
    c: float = 0.1
    q: float = 0.1
    rho: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", AdversarialKind(self.kind))
        _check_unit("c", self.c)
        _check_unit("q", self.q)
        if self.kind is AdversarialKind.GLOBAL_NULL_SHARP:
            global_null_m0(self.p, self.c, self.q)
        else:
            exchangeable_rho_layout(self.p, self.c, self.q, self.rho)

    def sample(self, rng):
        if self.kind is AdversarialKind.GLOBAL_NULL_SHARP:
            return adversarial_global_null(self.p, self.c, self.q, rng), 0
        return adversarial_exchangeable_rho(self.p, self.c, self.q, self.rho, rng)


def global_null_m0(p: int, c: float, q: float) -> int:
    m0 = 1 + math.ceil(c * p / (q + c * (1 - q)))
    if m0 > p or c * p / m0 > 1:
        raise ValueError(f"global-null construction infeasible: m0={m0} exceeds p={p}")
    return m0


def adversarial_global_null(p: int, c: float, q: float, rng) -> np.ndarray:
    """Marginally uniform null p-values whose selection FDR equals c p / m0 exactly."""
    m0 = global_null_m0(p, c, q)
    gen = as_generator(rng)
    branch = gen.random()
    pv = c + (1 - c) * gen.random(p)
    if branch < c * p / m0:
        idx = gen.choice(p, size=m0, replace=False)
        pv[idx] = c * gen.random(m0)
    return pv


@dataclass(frozen=True)
class ExchangeableLayout:
    n_nonnull: int
    n_null: int
    alpha: float
    rho_tilde: float
    sigma2: float
    x1: float
    x2: float
    pi1: float
    m1: int
    m2: int


def exchangeable_rho_layout(p: int, c: float, q: float, rho: float) -> ExchangeableLayout:
    limit = c * (1 - q) / (q + c * (1 - q))
    if not 0 < rho <= limit + 1e-12:
        raise ValueError(f"rho must lie in (0, {limit:.6g}] for this construction, got {rho}")
    n1 = math.isqrt(p)
    n0 = p - n1
    alpha = c / (c + q - c * q)
    rho_t = ((p - 1) * rho + 1) / p
    sigma2 = rho_t * c * (1 - c)
    x1 = c - sigma2 / (alpha - c)
    x2 = alpha
    pi1 = (alpha - c) ** 2 / ((alpha - c) ** 2 + sigma2)
    m1 = max(math.floor(n0 * x1) + 1, 0)
    m2 = math.floor(n0 * x2) - 2
    # x1 uses rho_tilde > rho, so at the rho boundary it sits O(1/p) below 0 and m1 clamps to 0
    if not 0 <= m2 <= n0 or m1 > n0:
        raise ValueError(f"exchangeable construction infeasible at p={p}, rho={rho}")
    return ExchangeableLayout(n1, n0, alpha, rho_t, sigma2, x1, x2, pi1, m1, m2)


def adversarial_exchangeable_rho(p: int, c: float, q: float, rho: float, rng):
    """Nonnull p-values 0 in the first floor(sqrt(p)) positions, then exchangeable nulls.

    With probability pi1, m1 random nulls are Unif[0, c], otherwise m2 are; the other
    nulls are Unif[c, 1]. Returns ``(pvalues, n_nonnull)``; a p-value of exactly 0 is
    stored for the nonnulls.
    """
    lay = exchangeable_rho_layout(p, c, q, rho)
    gen = as_generator(rng)
    branch = gen.random()
    pv = np.zeros(p)
    nulls = c + (1 - c) * gen.random(lay.n_null)
    m = lay.m1 if branch < lay.pi1 else lay.m2
    idx = gen.choice(lay.n_null, size=m, replace=False)
    nulls[idx] = c * gen.random(m)
    pv[lay.n_nonnull:] = nulls
    return pv, lay.n_nonnull


def monte_carlo_fdr(spec: AdversarialSpec, n_reps: int, rng: RngStream):
    """Mean FDP of Selective SeqStep+ (identity ordering) over ``n_reps`` draws, and its SE.

    Replicate r draws from ``rng.child(r)`` and the branch variable comes first, so
    runs that differ only in p share their branch draws (common random numbers).
    """
    params = SeqStepParams(spec.c, spec.q)
    fdp = np.empty(n_reps)
    for r in range(n_reps):
        pv, n1 = spec.sample(rng.child(r))
        # nonnull zeros are only ever compared against c
        sel = seqstep_select(np.maximum(pv, 1e-300), None, params)
        chosen = np.asarray(sel.selected, dtype=np.int64)
        fdp[r] = np.count_nonzero(chosen >= n1) / max(chosen.size, 1)
    return float(fdp.mean()), float(fdp.std(ddof=1) / math.sqrt(n_reps))


def indicator_correlation(samples: np.ndarray, c: float) -> float:
    """Mean pairwise correlation of 1{p <= c} across columns of ``samples`` (reps x m)."""
    ind = (samples <= c).astype(float)
    m = ind.shape[1]
    s = ind.sum(axis=1)
    mean = ind.mean()
    var = mean * (1 - mean)
    # E[sum_{i != j} I_i I_j] / (m (m - 1))
    cross = np.mean(s * s - s) / (m * (m - 1))
    return float((cross - mean**2) / var)


# --------------------------------------------------------------------------- a_j estimation


@dataclass
class AjEstimate:
    """Per outer replicate: max over nulls of the estimated a_j at the realized cell.

    ``cell_counts[r]`` holds, per null, the number of inner samples that landed in
    its realized cell; ``empty_cells`` counts nulls whose cell was never reached.
    """

    max_aj: np.ndarray
    c: float
    tail: float
    delta: float
    epsilon: float
    empty_cells: int
    short_cells: int = 0
    cell_counts: list = field(default_factory=list, repr=False)

    def bound(self, q: float) -> BoundReport:
        return bound_almost_independent(self.c, q, self.delta, self.epsilon)

    def histogram(self, bins=20, range_=None):
        return np.histogram(self.max_aj[~np.isnan(self.max_aj)], bins=bins, range=range_)


def _ranks_from_stats(stats, gen) -> np.ndarray:
    """CRT ranks along the last axis (copy 0 observed), ties ordered by jitter."""
    jitter = gen.random(stats.shape)
    obs, jo = stats[..., :1], jitter[..., :1]
    above = (stats[..., 1:] > obs) | ((stats[..., 1:] == obs) & (jitter[..., 1:] > jo))
    return 1 + above.sum(axis=-1)


def _components(model: GaussianModel) -> list:
    """Connected components of the conditional-dependence graph."""
    label = -np.ones(model.p, dtype=np.int64)
    comps = []
    for start in range(model.p):
        if label[start] >= 0:
            continue
        stack, members = [start], []
        label[start] = len(comps)
        while stack:
            j = stack.pop()
            members.append(j)
            for k in model.neighbors(j):
                if label[k] < 0:
                    label[k] = len(comps)
                    stack.append(k)
        comps.append(np.sort(np.asarray(members, dtype=np.int64)))
    return comps


class _LocalCrt:
    """Vectorized CRT for one component when each p-value depends only on that component and Y.

    Supports the correlation statistic and the neighborhood regression with in-component
    neighbors.
    """

    def __init__(self, model: GaussianModel, comp: np.ndarray, beta, noise_var: float, cfg: CrtConfig):
        self.comp = comp
        self.B = cfg.B
        self.stat = cfg.statistic
        prec = model.precision[np.ix_(comp, comp)]
        self.cond_var = 1.0 / np.diag(prec)
        self.coef = -(prec - np.diag(np.diag(prec))) * self.cond_var[:, None]
        self.mean = model.mean[comp]
        s = model.covariance @ beta
        self.total = float(beta @ s) + noise_var
        self.s = s[comp]
        self.mu_beta = float(model.mean @ beta)
        cov = model.covariance[np.ix_(comp, comp)] - np.outer(self.s, self.s) / self.total
        self.chol = np.linalg.cholesky(cov + 1e-14 * np.eye(comp.size))
        if self.stat.name == "neighborhood_ols":
            self.nbs = []
            for j in comp:
                hood = self.stat.neighborhood
                nb = np.asarray(hood.get(int(j), hood.get(str(j), [])), dtype=np.int64)
                nb = nb[nb != j]
                pos = np.searchsorted(comp, nb)
                if np.any(pos >= comp.size) or np.any(comp[np.minimum(pos, comp.size - 1)] != nb):
                    raise ValueError(f"neighborhood of {j} leaves its component")
                self.nbs.append(pos)

    def sample_given_y(self, y, draws: int, gen) -> np.ndarray:
        """``draws`` samples of the component's columns given Y; shape (draws, n, K)."""
        n, K = y.shape[0], self.comp.size
        mean = self.mean + np.outer(y - self.mu_beta, self.s) / self.total
        return mean + gen.standard_normal((draws, n, K)) @ self.chol.T

    def ranks(self, xb, y, gen) -> np.ndarray:
        """CRT ranks for every component variable; shape (draws, K)."""
        return _ranks_from_stats(self.stats(xb, y, gen), gen)

    def stats(self, xb, y, gen) -> np.ndarray:
        """Statistics of the observed and B resampled copies; shape (draws, K, B + 1)."""
        D, n, K = xb.shape
        mu = self.mean + (xb - self.mean) @ self.coef.T
        cols = np.empty((D, K, n, self.B + 1))
        cols[..., 0] = np.swapaxes(xb, 1, 2)
        noise = gen.standard_normal((D, K, n, self.B))
        cols[..., 1:] = np.swapaxes(mu, 1, 2)[..., None] + np.sqrt(self.cond_var)[None, :, None, None] * noise
        yc = y - y.mean()
        cc = cols - cols.mean(axis=2, keepdims=True)
        if self.stat.name == "abs_correlation":
            num = np.abs(np.einsum("dknb,n->dkb", cc, yc))
            stats = num / (np.sqrt(np.einsum("dknb,dknb->dkb", cc, cc)) * np.sqrt(yc @ yc))
        else:
            stats = np.empty((D, K, self.B + 1))
            xc = xb - xb.mean(axis=1, keepdims=True)
            for a, nb in enumerate(self.nbs):
                other = np.broadcast_to(xc[:, None, :, nb], (D, self.B + 1, n, nb.size))
                design = np.concatenate([np.swapaxes(cc[:, a], 1, 2)[..., None], other], axis=-1)
                gram = np.einsum("dbni,dbnj->dbij", design, design) / n
                gram = gram + self.stat.ridge_eps * np.eye(nb.size + 1)
                rhs = np.einsum("dbni,n->dbi", design, yc) / n
                stats[:, a] = np.abs(np.linalg.solve(gram, rhs[..., None])[..., 0, 0])
        return stats


def _is_local(model: GaussianModel, cfg: CrtConfig) -> bool:
    if cfg.statistic.name == "abs_correlation":
        return True
    # the vectorized regression fits each copy separately, as the original CRT does
    return (cfg.statistic.name == "neighborhood_ols" and cfg.statistic.neighborhood is not None
            and cfg.mode is CrtMode.ORIGINAL)


def estimate_aj(model: GaussianModel, beta, noise_var: float, y_fixed, cfg: CrtConfig, c: float,
                M_inner: int = 2000, M_outer: int = 50, rng: RngStream = RngStream(0), n: int | None = None,
                tail: float = 0.005, condition_on_y: bool = True, max_draws: int | None = None,
                batch: int = 250) -> AjEstimate:
    """Estimate a_j = P(p_j <= c | Y, 1{p_N(j) <= c}) by cell frequencies.

    Each outer replicate fixes Y (``y_fixed`` if given, otherwise drawn together with
    its X) and reads off the neighbor-indicator pattern of that replicate's own
    p-values. Inner draws of X | Y are added until every null's realized cell holds
    ``M_inner`` samples, or ``max_draws`` (default ``50 * M_inner``) is reached; a_j is
    the frequency of 1{p_j <= c} in that cell. N(j) is the set of conditional-dependence
    neighbors of j.

    For the correlation and neighborhood statistics the p-values of a connected
    component depend only on its own columns and Y, so components are simulated
    separately from their exact Gaussian law given Y. Other statistics simulate the
    full matrix and run the CRT on it. ``condition_on_y=False`` gives the variant
    without Y in the conditioning: every inner draw uses a fresh (X, Y), and the
    component shortcut is not used.

    delta is the (1 - tail) quantile of max_j a_j minus c, floored at 0, and epsilon
    is ``tail``.
    """
    beta = np.asarray(beta, dtype=float)
    p = model.p
    if beta.shape != (p,):
        raise ValueError(f"beta must have length {p}")
    if noise_var <= 0:
        raise ValueError("noise_var must be positive")
    if y_fixed is not None:
        y_fixed = np.asarray(y_fixed, dtype=float)
        n = y_fixed.shape[0]
    if n is None:
        raise ValueError("give y_fixed or the sample size n")
    if not 0 < tail < 1:
        raise ValueError("tail must lie in (0, 1)")
    max_draws = 50 * M_inner if max_draws is None else max_draws
    r_c = rank_threshold(c, cfg.B)
    is_null = beta == 0
    nulls = np.flatnonzero(is_null)
    local = condition_on_y and _is_local(model, cfg)
    groups = _components(model) if local else [np.arange(p)]
    groups = [g for g in groups if np.any(is_null[g])]
    solvers = [_LocalCrt(model, g, beta, noise_var, cfg) for g in groups] if local else None

    max_aj = np.full(M_outer, np.nan)
    empty = short = 0
    counts_log = []
    for r in range(M_outer):
        gen = rng.child(r).generator()
        if y_fixed is None:
            x0 = gaussian_sample_rows(model, n, gen)
            y = x0 @ beta + math.sqrt(noise_var) * gen.standard_normal(n)
        else:
            y = y_fixed
            x0 = gaussian_sample_x_given_y(model, beta, noise_var, y, gen)
        obs = _crt_ranks(model, x0, y, cfg, gen) <= r_c
        a_est = np.full(p, np.nan)
        visits_all = np.zeros(p, dtype=np.int64)
        for gi, g in enumerate(groups):
            g_null = np.flatnonzero(is_null[g])
            inc = np.zeros((g_null.size, g.size))
            for a, j in enumerate(g[g_null]):
                inc[a, np.searchsorted(g, model.neighbors(j))] = 1.0
            hits = np.zeros(g_null.size)
            visits = np.zeros(g_null.size)
            drawn = 0
            while drawn < max_draws and visits.min() < M_inner:
                d = min(batch, max_draws - drawn)
                if local:
                    ind = solvers[gi].ranks(solvers[gi].sample_given_y(y, d, gen), y, gen) <= r_c
                else:
                    ind = np.empty((d, p), dtype=bool)
                    for t in range(d):
                        if condition_on_y:
                            xi, yi = gaussian_sample_x_given_y(model, beta, noise_var, y, gen), y
                        else:
                            xi = gaussian_sample_rows(model, n, gen)
                            yi = xi @ beta + math.sqrt(noise_var) * gen.standard_normal(n)
                        ind[t] = _crt_ranks(model, xi, yi, cfg, gen) <= r_c
                match = (ind != obs[g]) @ inc.T == 0
                # cap each cell at M_inner samples so every estimate averages the same count
                room = np.maximum(M_inner - visits, 0)
                take = match & (np.cumsum(match, axis=0) <= room)
                visits += take.sum(axis=0)
                hits += (take & ind[:, g_null]).sum(axis=0)
                drawn += d
            seen = visits > 0
            a_est[g[g_null[seen]]] = hits[seen] / visits[seen]
            visits_all[g[g_null]] = visits
            empty += int(np.count_nonzero(~seen))
            short += int(np.count_nonzero(seen & (visits < M_inner)))
        counts_log.append(visits_all[nulls])
        if np.any(~np.isnan(a_est[nulls])):
            max_aj[r] = float(np.nanmax(a_est[nulls]))
    valid = max_aj[~np.isnan(max_aj)]
    delta = max(float(np.quantile(valid, 1 - tail)) - c, 0.0) if valid.size else float("nan")
    return AjEstimate(max_aj, c, tail, delta, tail, empty, short, counts_log)


def _corr_crt_ranks(model: GaussianModel, x, y, B: int, gen) -> np.ndarray:
    """Vectorized CRT ranks for |corr(X_j, Y)| over all j at once."""
    n, p = x.shape
    mu, var = gaussian_conditional_all(model, x)
    cols = np.empty((p, n, B + 1))
    cols[..., 0] = x.T
    cols[..., 1:] = mu.T[..., None] + np.sqrt(var)[:, None, None] * gen.standard_normal((p, n, B))
    yc = y - y.mean()
    cc = cols - cols.mean(axis=1, keepdims=True)
    stats = np.abs(np.einsum("pnb,n->pb", cc, yc)) / (np.sqrt(np.einsum("pnb,pnb->pb", cc, cc)) * np.sqrt(yc @ yc))
    return _ranks_from_stats(stats, gen)


def _crt_ranks(model, x, y, cfg: CrtConfig, gen) -> np.ndarray:
    if cfg.statistic.name == "abs_correlation":
        return _corr_crt_ranks(model, x, y, cfg.B, gen)
    stream = RngStream(int(gen.integers(2**63)))
    records = crt_all_variables(Dataset(x, y), model, cfg, stream, workers=1)
    return np.array([r.rank for r in records])
