"""Simulation runner: FDR and power over replications, timing comparison, and CSV I/O."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Dataset, ResponseKind, RngStream, Selection, SeqStepParams
from .covariates import GaussianModel, HmmModel, fit_gaussian, model_from_json, sample_rows
from .crt import CrtConfig, CrtMode, default_workers
from .response import ResponseModel, ResponseSpec, generate_response
from .selection import pipeline_split, pipeline_symmetric
from .stats import Loss

log = logging.getLogger(__name__)

METHODS = ("split", "symmetric_original", "symmetric_oneshot")
CSV_COLUMNS = ("setting", "family", "n", "p", "k", "amplitude", "method", "rep", "fdp", "power", "n_selected",
               "runtime_ms", "seed")
# fixed per-method stream ids, independent of the order methods are listed in a config
_METHOD_STREAM = {m: i for i, m in enumerate(METHODS)}


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation grid.

    ``family`` is ``ar1`` (Gaussian AR(1) with correlation ``rho``) or ``hmm``. Every
    amplitude reuses the same covariates, support and noise for a given replication,
    so amplitude sweeps compare like with like.
    """

    setting: ResponseModel = ResponseModel.LINEAR
    family: str = "ar1"
    rho: float = 0.5
    n: int = 300
    p: int = 300
    k: int = 20
    amplitudes: tuple = (5.0,)
    methods: tuple = ("symmetric_oneshot",)
    crt: CrtConfig = field(default_factory=CrtConfig)
    seqstep: SeqStepParams = field(default_factory=SeqStepParams)
    n_reps: int = 100
    seed: int = 0
    split_frac: float = 0.5
    output: str | None = None
    record_runtime: bool = True

    def __post_init__(self):
        object.__setattr__(self, "setting", ResponseModel(self.setting))
        if self.family not in ("ar1", "hmm"):
            raise ValueError(f"family must be 'ar1' or 'hmm', got {self.family!r}")
        if self.n_reps < 1:
            raise ValueError("n_reps must be at least 1")
        if self.k > self.p:
            raise ValueError("k cannot exceed p")
        object.__setattr__(self, "amplitudes", tuple(float(a) for a in self.amplitudes))
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown method(s) {bad}; choose from {METHODS}")
        object.__setattr__(self, "methods", tuple(self.methods))

    def model(self):
        if self.family == "ar1":
            return GaussianModel.ar1(self.p, self.rho)
        return HmmModel(self.p)

    def response_spec(self, amplitude: float) -> ResponseSpec:
        return ResponseSpec.for_family(self.setting, self.family, amplitude, self.k)

    def to_json(self) -> dict:
        return {
            "setting": self.setting.value, "family": self.family, "rho": self.rho, "n": self.n, "p": self.p,
            "k": self.k, "amplitudes": list(self.amplitudes), "methods": list(self.methods),
            "crt": self.crt.to_json(), "seqstep": {"c": self.seqstep.c, "q": self.seqstep.q},
            "n_reps": self.n_reps, "seed": self.seed, "split_frac": self.split_frac, "output": self.output,
            "record_runtime": self.record_runtime,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        doc = dict(doc)
        if "crt" in doc:
            doc["crt"] = CrtConfig.from_json(doc["crt"])
        if "seqstep" in doc:
            doc["seqstep"] = SeqStepParams(**doc["seqstep"])
        for key in ("amplitudes", "methods"):
            if key in doc:
                doc[key] = tuple(doc[key])
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config field(s): {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


@dataclass(frozen=True)
class ReplicationResult:
    setting: str
    family: str
    n: int
    p: int
    k: int
    amplitude: float
    method: str
    rep: int
    fdp: float
    power: float
    n_selected: int
    runtime_ms: int
    seed: int
    error: str | None = None

    def row(self) -> list:
        return [self.setting, self.family, self.n, self.p, self.k, repr(self.amplitude), self.method, self.rep,
                repr(self.fdp), repr(self.power), self.n_selected, self.runtime_ms, self.seed]


def _method_cfg(config: ExperimentConfig, method: str) -> CrtConfig:
    if method == "symmetric_original":
        return replace(config.crt, mode=CrtMode.ORIGINAL)
    if method == "symmetric_oneshot":
        return replace(config.crt, mode=CrtMode.ONE_SHOT)
    return config.crt


def _for_response(cfg: CrtConfig, kind: ResponseKind) -> CrtConfig:
    """Binary responses get the logistic lasso when the squared-loss lasso is configured."""
    st = cfg.statistic
    if st.name == "lasso_coefficient" and kind is ResponseKind.BINARY and st.loss is Loss.SQUARED:
        return replace(cfg, statistic=replace(st, loss=Loss.LOGISTIC))
    return cfg


def make_dataset(config: ExperimentConfig, amplitude: float, rep: int):
    """Covariates and response for replication ``rep`` (streams independent of amplitude)."""
    model = config.model()
    stream = RngStream(config.seed, (rep,))
    x = sample_rows(model, config.n, stream.child(0))
    spec = config.response_spec(amplitude)
    y, truth = generate_response(x, spec, stream.child(1))
    return model, Dataset(x, y, spec.response_kind), truth


def run_method(config: ExperimentConfig, model, dataset: Dataset, method: str, rep: int) -> Selection:
    stream = RngStream(config.seed, (rep, 2, _METHOD_STREAM[method]))
    cfg = _for_response(_method_cfg(config, method), dataset.response_kind)
    if method == "split":
        return pipeline_split(dataset, model, cfg, config.seqstep, config.split_frac, stream, workers=1)
    return pipeline_symmetric(dataset, model, cfg, config.seqstep, stream, workers=1)


def _run_task(args):
    config, a_idx, rep, method = args
    amplitude = config.amplitudes[a_idx]
    base = dict(setting=config.setting.value, family=config.family, n=config.n, p=config.p, k=config.k,
                amplitude=amplitude, method=method, rep=rep, seed=config.seed)
    try:
        model, dataset, truth = make_dataset(config, amplitude, rep)
        start = time.perf_counter()
        sel = run_method(config, model, dataset, method, rep)
        elapsed = int(round((time.perf_counter() - start) * 1000)) if config.record_runtime else 0
        return ReplicationResult(fdp=truth.fdp(sel.selected), power=truth.power(sel.selected),
                                 n_selected=len(sel.selected), runtime_ms=elapsed, **base)
    except Exception as exc:  # recorded in the result, the run continues
        return ReplicationResult(fdp=math.nan, power=math.nan, n_selected=-1, runtime_ms=0,
                                 error=f"{type(exc).__name__}: {exc}", **base)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list

    @property
    def errors(self) -> list:
        return [r for r in self.rows if r.error is not None]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for r in self.rows:
            writer.writerow(r.row())
        return buf.getvalue()

    def summary(self) -> list:
        """Mean FDP, power and runtime per (amplitude, method), failed replications excluded."""
        out = []
        for a in self.config.amplitudes:
            for m in self.config.methods:
                rows = [r for r in self.rows if r.amplitude == a and r.method == m and r.error is None]
                if not rows:
                    continue
                fdp = np.array([r.fdp for r in rows])
                power = np.array([r.power for r in rows])
                out.append({"amplitude": a, "method": m, "n_reps": len(rows), "fdr": float(fdp.mean()),
                            "fdr_se": float(fdp.std(ddof=1) / math.sqrt(len(rows))) if len(rows) > 1 else 0.0,
                            "power": float(power.mean()),
                            "mean_runtime_ms": float(np.mean([r.runtime_ms for r in rows]))})
        return out


def run_experiment(config: ExperimentConfig, workers: int | None = None, progress=None) -> ExperimentResult:
    """All (amplitude, rep, method) cells, in that order regardless of completion order.

    ``workers`` (default: ``SEQCRT_THREADS`` or 1) sets the process pool size. When
    ``config.output`` is set the CSV is written there.
    """
    tasks = [(config, a, r, m) for a in range(len(config.amplitudes)) for r in range(config.n_reps)
             for m in config.methods]
    workers = default_workers() if workers is None else max(1, int(workers))
    rows = []
    if workers == 1:
        for i, t in enumerate(tasks):
            rows.append(_run_task(t))
            if progress is not None:
                progress(i + 1, len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_task, tasks))
    for r in rows:
        if r.error:
            log.warning("amplitude %s rep %d %s failed: %s", r.amplitude, r.rep, r.method, r.error)
    result = ExperimentResult(config, rows)
    if config.output:
        with open(config.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(result.to_csv())
    return result


def timing_comparison(config: ExperimentConfig, workers: int | None = None) -> dict:
    """Mean wall-clock seconds of the symmetric pipeline with original and one-shot CRTs.

    Uses the first amplitude of ``config``; returns per-method means and their ratio.
    """
    cfg = replace(config, methods=("symmetric_original", "symmetric_oneshot"), amplitudes=config.amplitudes[:1],
                  record_runtime=True, output=None)
    result = run_experiment(cfg, workers=workers)
    if result.errors:
        raise RuntimeError(f"timing run failed: {result.errors[0].error}")
    mean = {m: float(np.mean([r.runtime_ms for r in result.rows if r.method == m])) / 1000.0
            for m in cfg.methods}
    return {"original_s": mean["symmetric_original"], "oneshot_s": mean["symmetric_oneshot"],
            "ratio": mean["symmetric_oneshot"] / mean["symmetric_original"], "n_reps": cfg.n_reps,
            "B": cfg.crt.B, "n": cfg.n, "p": cfg.p}


# --------------------------------------------------------------------------- user data


class CsvFormatError(ValueError):
    pass


def load_dataset_csv(path, response_kind=ResponseKind.CONTINUOUS) -> Dataset:
    """Read a CSV whose header is ``y,x1,...,xp``."""
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file, expected header y,x1,...,xp") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "y":
            raise CsvFormatError(f"{path}, line 1: first column must be 'y', got {header[0]!r}")
        for i, name in enumerate(header[1:], start=1):
            if name != f"x{i}":
                raise CsvFormatError(f"{path}, line 1: column {i + 1} must be 'x{i}', got {name!r}")
        rows = []
        for line_no, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != len(header):
                raise CsvFormatError(f"{path}, line {line_no}: expected {len(header)} fields, got {len(rec)}")
            try:
                rows.append([float(v) for v in rec])
            except ValueError as exc:
                raise CsvFormatError(f"{path}, line {line_no}: {exc}") from None
    if len(header) < 2:
        raise CsvFormatError(f"{path}: no covariate columns")
    arr = np.array(rows, dtype=float).reshape(-1, len(header))
    return Dataset(arr[:, 1:], arr[:, 0], response_kind)


def write_dataset_csv(path, dataset: Dataset) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["y"] + [f"x{i + 1}" for i in range(dataset.p)])
        for yi, xi in zip(dataset.y, dataset.x):
            writer.writerow([repr(float(yi))] + [repr(float(v)) for v in xi])


def select_on_data(dataset: Dataset, model=None, cfg: CrtConfig | None = None, params: SeqStepParams | None = None,
                   rng: RngStream = RngStream(0), fit: bool = False, shrink: float = 1e-3,
                   method: str = "symmetric") -> Selection:
    """Run a sequential CRT pipeline on user data.

    Pass a covariate ``model`` (or its JSON document), or ``fit=True`` to use the
    empirical Gaussian with ``shrink * I`` added to the sample covariance.
    """
    cfg = CrtConfig() if cfg is None else cfg
    params = SeqStepParams() if params is None else params
    if fit:
        model = fit_gaussian(dataset.x, shrink)
    elif isinstance(model, dict):
        model = model_from_json(model)
    if model is None:
        raise ValueError("supply a covariate model or set fit=True")
    cfg = _for_response(cfg, dataset.response_kind)
    if method == "split":
        return pipeline_split(dataset, model, cfg, params, 0.5, rng)
    if method != "symmetric":
        raise ValueError(f"method must be 'symmetric' or 'split', got {method!r}")
    return pipeline_symmetric(dataset, model, cfg, params, rng)
