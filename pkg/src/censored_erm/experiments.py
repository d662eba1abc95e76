"""Replicated train/test sweeps over loss variants, learners, censoring levels and sample sizes.

Seeds
-----
Every random stream is a ``numpy.random.SeedSequence`` built from the
config's ``base_seed`` and the integer coordinates of what it generates:

* calibration of ``lambda`` for ``p_grid[k]``: ``SeedSequence(base_seed, spawn_key=(0, d, k))``
* training / test sets of replicate ``r`` at size ``n`` and ``p_grid[k]``:
  children 0 / 1 of ``SeedSequence(base_seed, spawn_key=(1, n, k, r))``
* forest bootstrap of a row: ``SeedSequence(base_seed, spawn_key=(2, n, k, r, crc32(variant), crc32(learner)))``

All variants and learners of one replicate therefore see the same training
set, and no stream depends on the number of worker processes.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import sys
import time as _time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .data import CensoredDataset, ValidationError
from .kernels import KernelSpec
from .learners import LearnerSpec, fit
from .metrics import UndefinedMetric, concordance_index, l2_test_error
from .risk import LOSS_VARIANTS, compute_weights
from .synthetic import CoxModel, calibrate_lambda, generate_dataset

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

RESULTS_VERSION = 1
RESULT_COLUMNS = (
    "d", "n", "p", "p_index", "lambda", "replicate", "variant", "learner", "status",
    "l2_error", "rmse", "concordance", "n_events", "zero_weight", "out_of_support", "message",
)
SUMMARY_COLUMNS = (
    "d", "n", "p", "variant", "learner", "replicates", "failed",
    "rmse_mean", "rmse_median", "rmse_q25", "rmse_q75",
    "concordance_mean", "concordance_median", "concordance_q25", "concordance_q75",
)


@dataclass
class ExperimentConfig:
    """One benchmark grid.

    ``p_grid`` holds target event rates ``p = E[delta]`` (the censoring
    level is ``1 - p``).
    """

    d: int = 4
    n_grid: Sequence[int] = (1000,)
    p_grid: Sequence[float] = (0.25, 0.5, 0.75)
    variants: Sequence[str] = ("ipcw", "ipcw_loo", "ipcw_knn", "ipcw_stute", "ipcw_oracle", "naive", "observed", "oracle")
    learners: Sequence[LearnerSpec] = (LearnerSpec("linear"),)
    n_replicates: int = 20
    test_size: int = 2000
    base_seed: int = 0
    mc_n: int = 200_000
    kernel: str = "epanechnikov_product"
    bandwidth: object = "auto"
    n_neighbors: int = 5

    def __post_init__(self):
        if not self.n_grid or not self.p_grid or not self.variants or not self.learners:
            raise ValidationError("all grids must be nonempty")
        if self.n_replicates < 1:
            raise ValidationError("n_replicates must be >= 1")
        for v in self.variants:
            if v not in LOSS_VARIANTS:
                raise ValidationError(f"unknown loss variant {v!r}")
        for p in self.p_grid:
            if not 0 < p < 1:
                raise ValidationError("target event rates must lie in (0, 1)")
        self.learners = tuple(l if isinstance(l, LearnerSpec) else LearnerSpec(**l) for l in self.learners)
        if len({_learner_key(l) for l in self.learners}) != len(self.learners):
            raise ValidationError("learner families must be distinct within one config")
        self.n_grid = tuple(int(n) for n in self.n_grid)
        self.p_grid = tuple(float(p) for p in self.p_grid)
        self.variants = tuple(self.variants)

    @classmethod
    def from_toml(cls, path) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
        doc.pop("comment", None)
        learners = doc.pop("learners", [{"family": "linear"}])
        return cls(learners=[LearnerSpec(**l) for l in learners], **doc)


@dataclass
class ExperimentResult:
    rows: List[dict]
    config: Optional[ExperimentConfig] = None
    lambdas: Dict[float, float] = field(default_factory=dict)

    def ok_rows(self):
        return [r for r in self.rows if r["status"] == "ok"]

    def values(self, column, **where) -> np.ndarray:
        sel = [r for r in self.ok_rows() if all(r[k] == v for k, v in where.items())]
        return np.array([r[column] for r in sel], dtype=float)

    def to_csv(self, path, timings: bool = False):
        cols = list(RESULT_COLUMNS) + (["wall_time"] if timings else [])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for r in self.rows:
                w.writerow([_fmt(r.get(c)) for c in cols])


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def _learner_key(spec: LearnerSpec) -> str:
    return spec.family


def _seed(base_seed, *key) -> np.random.SeedSequence:
    return np.random.SeedSequence(base_seed, spawn_key=tuple(int(k) for k in key))


def _crc(s: str) -> int:
    return zlib.crc32(s.encode("utf-8"))


def calibrate_grid(config: ExperimentConfig, cache_dir=None) -> Dict[float, float]:
    """``lambda`` for every target ``p``, cached as JSON under ``cache_dir``."""
    cache_file = None
    cache = {}
    if cache_dir is not None:
        cache_file = Path(cache_dir) / "lambda_cache.json"
        if cache_file.exists():
            cache = json.loads(cache_file.read_text())
    out = {}
    for k, p in enumerate(config.p_grid):
        key = f"d={config.d};p={p!r};mc_n={config.mc_n};seed={config.base_seed}"
        if key not in cache:
            seed = _seed(config.base_seed, 0, config.d, k)
            cache[key] = calibrate_lambda(CoxModel(config.d), p, config.mc_n, seed)
        out[p] = cache[key]
    if cache_file is not None:
        cache_file.parent.mkdir(parents=True, exist_ok=True)
        cache_file.write_text(json.dumps(cache, indent=1, sort_keys=True))
    return out


def _observed_test_set(test: CensoredDataset) -> CensoredDataset:
    return CensoredDataset(test.X, test.y_true, np.ones(test.n, dtype=bool), y_true=test.y_true, c=test.c)


def _run_replicate(args):
    config, n, k, lam, rep, timings = args
    p = config.p_grid[k]
    model = CoxModel(config.d, lam)
    root = _seed(config.base_seed, 1, n, k, rep)
    s_train, s_test = root.spawn(2)
    train = generate_dataset(model, n, s_train)
    test = _observed_test_set(generate_dataset(model, config.test_size, s_test))
    kernel = KernelSpec(config.kernel)
    base = dict(d=config.d, n=n, p=p, p_index=k, replicate=rep, n_events=int(train.event.sum()))
    base["lambda"] = lam
    rows = []
    for variant in config.variants:
        t0 = _time.perf_counter()
        try:
            w = compute_weights(
                train,
                variant,
                kernel=kernel,
                bandwidth=config.bandwidth,
                n_neighbors=config.n_neighbors,
                censoring_survival=model.censoring_survival,
            )
            werr = None
        except Exception as exc:  # recorded per row; the sweep continues
            w, werr = None, f"{type(exc).__name__}: {exc}"
        t_w = _time.perf_counter() - t0
        for spec in config.learners:
            row = dict(base, variant=variant, learner=_learner_key(spec))
            row.update(status="failed", l2_error=math.nan, rmse=math.nan, concordance=math.nan,
                       zero_weight=0, out_of_support=0, message="")
            t1 = _time.perf_counter()
            if werr is not None:
                row["message"] = werr
            else:
                row["zero_weight"] = w.diagnostics.get("zero_survival", 0)
                row["out_of_support"] = w.diagnostics.get("out_of_support", 0)
                try:
                    seed = _seed(config.base_seed, 2, n, k, rep, _crc(variant), _crc(_learner_key(spec)))
                    spec_r = replace(spec, bootstrap_seed=int(seed.generate_state(1)[0]))
                    fitted = fit(train, w, spec_r)
                    l2 = l2_test_error(fitted, test.X, test.y_true)
                    try:
                        conc = concordance_index(fitted, test)
                    except UndefinedMetric:
                        conc = math.nan
                    row.update(status="ok", l2_error=l2, rmse=math.sqrt(l2), concordance=conc)
                except Exception as exc:
                    row["message"] = f"{type(exc).__name__}: {exc}"
            if timings:
                row["wall_time"] = t_w + (_time.perf_counter() - t1)
            rows.append(row)
    return rows


def run(config: ExperimentConfig, jobs: int = 1, cache_dir=None, timings: bool = False) -> ExperimentResult:
    """Run every cell of the grid.

    Rows come back sorted by ``(n, p_index, variant, learner, replicate)``
    in config order regardless of ``jobs``.
    """
    lambdas = calibrate_grid(config, cache_dir)
    tasks = [
        (config, n, k, lambdas[p], rep, timings)
        for n in config.n_grid
        for k, p in enumerate(config.p_grid)
        for rep in range(config.n_replicates)
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(_run_replicate, tasks))
    else:
        chunks = [_run_replicate(t) for t in tasks]
    rows = [r for chunk in chunks for r in chunk]
    vidx = {v: i for i, v in enumerate(config.variants)}
    lidx = {_learner_key(l): i for i, l in enumerate(config.learners)}
    rows.sort(key=lambda r: (config.n_grid.index(r["n"]), r["p_index"], vidx[r["variant"]], lidx[r["learner"]], r["replicate"]))
    failed = sum(r["status"] != "ok" for r in rows)
    if failed:
        log.warning("%d of %d rows failed", failed, len(rows))
    return ExperimentResult(rows, config, lambdas)


def _stats(v: np.ndarray):
    if v.size == 0:
        return [math.nan] * 4
    q25, med, q75 = np.percentile(v, [25, 50, 75])
    return [float(np.mean(v)), float(med), float(q25), float(q75)]


def summarize(result: ExperimentResult) -> List[dict]:
    """Mean, median and quartiles of rmse and concordance per cell."""
    if not result.rows:
        raise ValidationError("empty result")
    cells: Dict[tuple, List[dict]] = {}
    for r in result.rows:
        cells.setdefault((r["d"], r["n"], r["p"], r["variant"], r["learner"]), []).append(r)
    out = []
    for (d, n, p, variant, learner), rows in cells.items():
        ok = [r for r in rows if r["status"] == "ok"]
        rmse = np.array([r["rmse"] for r in ok], dtype=float)
        conc = np.array([r["concordance"] for r in ok], dtype=float)
        conc = conc[~np.isnan(conc)]
        s = dict(d=d, n=n, p=p, variant=variant, learner=learner, replicates=len(rows), failed=len(rows) - len(ok))
        s.update(zip(("rmse_mean", "rmse_median", "rmse_q25", "rmse_q75"), _stats(rmse)))
        s.update(zip(("concordance_mean", "concordance_median", "concordance_q25", "concordance_q75"), _stats(conc)))
        out.append(s)
    return out


def write_summary(summary: List[dict], path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for s in summary:
            w.writerow([_fmt(s[c]) for c in SUMMARY_COLUMNS])


def read_results(path) -> ExperimentResult:
    ints = {"d", "n", "p_index", "replicate", "n_events", "zero_weight", "out_of_support"}
    floats = {"p", "lambda", "l2_error", "rmse", "concordance", "wall_time"}
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for raw in csv.DictReader(fh):
            r = {}
            for k, v in raw.items():
                if k in ints:
                    r[k] = int(v)
                elif k in floats:
                    r[k] = float(v) if v != "" else math.nan
                else:
                    r[k] = v
            rows.append(r)
    return ExperimentResult(rows)
