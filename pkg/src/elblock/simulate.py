"""Simulation study for simultaneous pairwise comparisons.

Data follow ``X_ik = theta_k + beta_i + eps_ik`` on the pair design with five
treatments and ``n / 10`` replicates of every pair.  Each run computes the ten
pairwise statistics, calibrates a common cutoff and inverts it into intervals;
the familywise error rate, average interval length and joint coverage are
then averaged over runs.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng as R
from .amc import amc_statistics, calibrate, plugin_matrices
from .bootstrap import nb_statistics
from .constrained import mele, sci
from .design import BlockDesign, generate_pair_design
from .errors import ElblockError, NumericalError
from .inference import contrast_statistics, pairwise

P = 5

SCENARIOS = {
    "S1-1": (R.normal(0, 1), (R.normal(0, 1),) * 5),
    "S1-2": (R.normal(0, 0.1), (R.normal(0, 1),) * 4 + (R.normal(0, 9),)),
    "S2-1": (R.uniform(-2, 2), (R.uniform(-2, 2),) * 5),
    "S2-2": (R.uniform(-0.5, 0.5), (R.uniform(-2, 2),) * 4 + (R.uniform(-5, 5),)),
    "S3-1": (R.gamma(2, 1), (R.student_t(6),) * 5),
    "S3-2": (R.gamma(10, 0.1), (R.student_t(6),) * 4 + (R.uniform(-5, 5),)),
}

METRIC_COLUMNS = ("scenario", "n", "theta", "method", "v", "alpha", "runs", "b_reps", "seed",
                  "fwer", "fwer_se", "al", "al_se", "cp", "cp_se", "failed_runs")


def _dist(d) -> R.Dist:
    if isinstance(d, R.Dist):
        return d
    return R.Dist(d["kind"], tuple(d["params"]))


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    n: int
    theta: tuple
    block: R.Dist
    errors: tuple

    def __post_init__(self):
        theta = tuple(float(x) for x in self.theta)
        if len(theta) != P:
            raise ValueError(f"theta must have {P} entries")
        if self.n < 10 or self.n % 10:
            raise ValueError("n must be a positive multiple of 10")
        errors = tuple(_dist(e) for e in self.errors)
        if len(errors) == 1:
            errors = errors * P
        if len(errors) != P:
            raise ValueError(f"need 1 or {P} error distributions")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "block", _dist(self.block))
        object.__setattr__(self, "errors", errors)

    @property
    def theta_label(self) -> str:
        return "(" + ",".join(f"{x:g}" for x in self.theta) + ")"

    @property
    def true_nulls(self) -> np.ndarray:
        """Indices (in pairwise order) of the contrasts whose difference is 0."""
        th = np.array(self.theta)
        return np.flatnonzero(np.array([c.estimate(th) for c in pairwise(P)]) == 0.0)

    @classmethod
    def from_dict(cls, d: dict) -> ScenarioSpec:
        errs = d["errors"] if isinstance(d["errors"], list) else [d["errors"]]
        return cls(d.get("name", "custom"), int(d["n"]), tuple(d["theta"]),
                   _dist(d["block"]), tuple(_dist(e) for e in errs))


def scenario(name: str, n: int, theta=(0, 0, 0, 0, 0)) -> ScenarioSpec:
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    block, errors = SCENARIOS[name]
    return ScenarioSpec(name, n, tuple(theta), block, errors)


def gen_dataset(spec: ScenarioSpec, seed) -> BlockDesign:
    """One dataset; ``seed`` is an integer or a ``numpy`` generator."""
    gen = seed if isinstance(seed, np.random.Generator) else R.stream(seed)
    design = generate_pair_design(P, spec.n // 10)
    beta = spec.block.sample(gen, spec.n)
    eps = np.column_stack([e.sample(gen, spec.n) for e in spec.errors])
    x = np.asarray(spec.theta) + beta[:, None] + eps
    return design.with_values(np.where(design.incidence, x, 0.0))


@dataclass(frozen=True)
class MetricsReport:
    scenario: str
    n: int
    theta: str
    method: str
    v: int
    alpha: float
    runs: int
    b_reps: int
    seed: int
    fwer: float
    fwer_se: float
    al: float
    al_se: float
    cp: float
    cp_se: float
    failed_runs: int = 0

    def row(self) -> list:
        return [getattr(self, c) for c in METRIC_COLUMNS]


def metrics_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    for r in reports:
        w.writerow(r.row())
    return buf.getvalue()


def _prop(x: np.ndarray) -> tuple[float, float]:
    est = float(np.mean(x))
    return est, math.sqrt(est * (1.0 - est) / x.size)


@dataclass(frozen=True)
class _Job:
    spec: ScenarioSpec
    methods: tuple
    vs: tuple
    alpha: float
    b_reps: int
    seed: int
    intervals: bool


def _one_run(job: _Job, s: int):
    """Per (method, v): (error event, mean length, joint coverage); None on failure."""
    spec = job.spec
    try:
        design = gen_dataset(spec, R.stream(job.seed, s, 0))
        contrasts = pairwise(P)
        t = contrast_statistics(design, contrasts)
        hyps = [c.hypothesis() for c in contrasts]
        delta = np.array([c.estimate(np.array(spec.theta)) for c in contrasts])
        null = spec.true_nulls
        out = {}
        for method in job.methods:
            if method == "amc":
                pm = plugin_matrices(design, mele(design), hyps)
                stats = amc_statistics(pm, job.b_reps, R.derive_seed(job.seed, s, 1))
            else:
                stats, _ = nb_statistics(design, hyps, job.b_reps, R.derive_seed(job.seed, s, 2))
            for v in job.vs:
                cut = calibrate(stats, job.alpha, v, method=method).cutoff
                event = int((t[null] > cut).sum()) >= v if null.size else False
                length, cover = math.nan, math.nan
                if job.intervals:
                    ivs = [sci(design, c, cut) for c in contrasts]
                    length = float(np.mean([iv.length for iv in ivs]))
                    cover = all(iv.contains(d) for iv, d in zip(ivs, delta))
                out[method, v] = (event, length, cover)
        return out
    except (ElblockError, FloatingPointError, np.linalg.LinAlgError):
        return None


def _run_batch(job: _Job, runs):
    return [_one_run(job, s) for s in runs]


def evaluate_many(spec: ScenarioSpec, methods=("amc", "nb"), vs=(1,), *, alpha: float = 0.05,
                  runs: int = 1000, b_reps: int = 2000, seed: int = 0, workers: int = 1,
                  intervals: bool = True) -> dict:
    """Metrics for every ``(method, v)`` pair on one shared set of runs.

    Run ``s`` draws its data and calibration streams from ``(seed, s)``, so
    the numbers do not depend on ``workers``.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    methods, vs = tuple(methods), tuple(int(v) for v in vs)
    for v in vs:
        if not 1 <= v <= 10:
            raise ValueError("v must be between 1 and 10")
    job = _Job(spec, methods, vs, float(alpha), int(b_reps), int(seed), bool(intervals))
    if workers <= 1:
        results = _run_batch(job, range(runs))
    else:
        batches = [list(range(runs))[i::workers] for i in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_run_batch, [job] * workers, batches))
        results = [None] * runs
        for b, part in zip(batches, parts):
            for s, res in zip(b, part):
                results[s] = res
    ok = [r for r in results if r is not None]
    failed = runs - len(ok)
    if failed:
        if failed >= 0.01 * runs:
            raise NumericalError(f"{failed} of {runs} simulation runs failed")
        warnings.warn(f"excluded {failed} of {runs} failed simulation runs", stacklevel=2)
    reports = {}
    for method in methods:
        for v in vs:
            ev = np.array([r[method, v][0] for r in ok], dtype=float)
            ln = np.array([r[method, v][1] for r in ok], dtype=float)
            cv = np.array([r[method, v][2] for r in ok], dtype=float)
            fwer, fwer_se = _prop(ev)
            if intervals:
                al = float(ln.mean())
                al_se = float(ln.std(ddof=1) / math.sqrt(ln.size)) if ln.size > 1 else math.nan
                cp, cp_se = _prop(cv)
            else:
                al = al_se = cp = cp_se = math.nan
            reports[method, v] = MetricsReport(spec.name, spec.n, spec.theta_label, method, v,
                                               float(alpha), len(ok), int(b_reps), int(seed),
                                               fwer, fwer_se, al, al_se, cp, cp_se, failed)
    return reports


def evaluate(spec: ScenarioSpec, method: str = "nb", alpha: float = 0.05, v: int = 1,
             runs: int = 1000, b_reps: int = 2000, seed: int = 0, workers: int = 1,
             intervals: bool = True) -> MetricsReport:
    return evaluate_many(spec, (method,), (v,), alpha=alpha, runs=runs, b_reps=b_reps,
                         seed=seed, workers=workers, intervals=intervals)[method, v]
