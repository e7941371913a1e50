"""Simultaneous tests and intervals for a family of contrasts.

All hypotheses are compared with one common cutoff calibrated either by
asymptotic Monte Carlo (``"amc"``) or by the null-transformed bootstrap
(``"nb"``).  Intervals invert the profile statistic at the same cutoff, so a
hypothesis is rejected exactly when its interval excludes the null value.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .amc import METHODS, amc_calibrate, plugin_matrices
from .bootstrap import BootstrapDiagnostics, nb_calibrate
from .constrained import INFEASIBLE, OK, SCI, Contrast, mele, minimize_el, parse_contrasts, sci
from .design import BlockDesign, connectivity, summarize
from .errors import NumericalError, UnidentifiedHypothesisError

CSV_COLUMNS = ("label", "estimate", "statistic", "adj_p", "reject",
               "sci_lo", "sci_hi", "truncated_lo", "truncated_hi")


def pairwise(p: int, labels=None) -> list[Contrast]:
    """``theta_l - theta_k`` for ``k < l`` in lexicographic order of ``(k, l)``."""
    if p < 2:
        raise ValueError("pairwise contrasts need p >= 2")
    labels = list(labels) if labels is not None else [f"t{k + 1}" for k in range(p)]
    out = []
    for k in range(p):
        for l in range(k + 1, p):
            u = np.zeros(p)
            u[l], u[k] = 1.0, -1.0
            out.append(Contrast(u, f"{labels[l]} - {labels[k]}"))
    return out


@dataclass
class AnalysisRequest:
    design: BlockDesign
    contrasts: list | str = "pairwise"
    method: str = "nb"
    alpha: float = 0.05
    v: int = 1
    b_reps: int = 2000
    seed: int = 0
    plus_one: bool = False
    workers: int = 1  # wall time only

    def __post_init__(self):
        if isinstance(self.contrasts, str):
            self.contrasts = parse_contrasts(self.contrasts, self.design.treatment_labels)
        self.contrasts = list(self.contrasts)
        if not self.contrasts:
            raise ValueError("no contrasts requested")
        for c in self.contrasts:
            if c.coeffs.size != self.design.n_treatments:
                raise ValueError(f"contrast {c.label!r} has the wrong length")
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if not 1 <= self.v <= len(self.contrasts):
            raise ValueError(f"v must be between 1 and {len(self.contrasts)}")
        if self.b_reps < 100:
            raise ValueError("b_reps must be at least 100")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit nonnegative integer")

    def config(self) -> dict:
        return {
            "method": self.method,
            "alpha": self.alpha,
            "v": self.v,
            "b_reps": self.b_reps,
            "seed": self.seed,
            "plus_one": self.plus_one,
            "contrasts": [{"label": c.label, "coeffs": c.coeffs.tolist(), "null": c.null}
                          for c in self.contrasts],
        }


@dataclass(frozen=True)
class HypothesisRecord:
    label: str
    estimate: float
    statistic: float
    adj_p: float
    reject: bool
    sci_lo: float
    sci_hi: float
    truncated_lo: bool
    truncated_hi: bool
    null: float = 0.0

    @property
    def sci(self) -> SCI:
        return SCI(self.sci_lo, self.sci_hi, self.truncated_lo, self.truncated_hi)


def _num(x):
    """JSON-safe float: non-finite values become strings."""
    x = float(x)
    if math.isfinite(x):
        return x
    return "nan" if math.isnan(x) else ("inf" if x > 0 else "-inf")


@dataclass
class AnalysisReport:
    records: list
    cutoff: float
    method: str
    mele: np.ndarray
    treatment_labels: tuple
    design_summary: dict
    config: dict
    diagnostics: BootstrapDiagnostics | None = None
    notes: list = field(default_factory=list)

    @property
    def statistics(self) -> np.ndarray:
        return np.array([r.statistic for r in self.records])

    @property
    def rejections(self) -> np.ndarray:
        return np.array([r.reject for r in self.records])

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "cutoff": _num(self.cutoff),
            "hypotheses": [
                {"label": r.label, "estimate": _num(r.estimate), "statistic": _num(r.statistic),
                 "adj_p": _num(r.adj_p), "reject": r.reject, "sci_lo": _num(r.sci_lo),
                 "sci_hi": _num(r.sci_hi), "truncated_lo": r.truncated_lo,
                 "truncated_hi": r.truncated_hi, "null": _num(r.null)}
                for r in self.records],
            "mele": {lab: _num(x) for lab, x in zip(self.treatment_labels, self.mele)},
            "design": self.design_summary,
            "diagnostics": None if self.diagnostics is None else self.diagnostics.to_dict(),
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("# config: " + json.dumps(self.config, separators=(",", ":")) + "\n")
        buf.write(f"# cutoff: {_num(self.cutoff)}\n")
        for note in self.notes:
            buf.write(f"# note: {note}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            w.writerow([r.label, _num(r.estimate), _num(r.statistic), _num(r.adj_p),
                        str(r.reject).lower(), _num(r.sci_lo), _num(r.sci_hi),
                        str(r.truncated_lo).lower(), str(r.truncated_hi).lower()])
        return buf.getvalue()


def _check_identified(design: BlockDesign, contrasts) -> None:
    comp = np.empty(design.n_treatments, dtype=int)
    for i, members in enumerate(connectivity(design)):
        comp[list(members)] = i
    r = design.replications
    for c in contrasts:
        inv = np.flatnonzero(c.coeffs != 0)
        if (r[inv] == 0).any():
            raise UnidentifiedHypothesisError(
                f"contrast {c.label!r} involves a treatment with no observations")
        if np.unique(comp[inv]).size > 1:
            raise UnidentifiedHypothesisError(
                f"contrast {c.label!r} spans disconnected parts of the design")


def contrast_statistics(design: BlockDesign, contrasts) -> np.ndarray:
    """``T_j`` for each contrast at its null value (``inf`` if hull-infeasible)."""
    out = np.empty(len(contrasts))
    for j, c in enumerate(contrasts):
        fit = minimize_el(design, c.hypothesis())
        if fit.status == OK:
            out[j] = fit.statistic
        elif fit.status == INFEASIBLE:
            out[j] = math.inf
        else:
            raise NumericalError(f"constrained solve for {c.label!r} ended with {fit.status}")
    return out


def run_analysis(req: AnalysisRequest) -> AnalysisReport:
    design, contrasts = req.design, req.contrasts
    _check_identified(design, contrasts)
    theta_hat = mele(design)
    t_obs = contrast_statistics(design, contrasts)
    hyps = [c.hypothesis() for c in contrasts]
    diag = None
    if req.method == "amc":
        pm = plugin_matrices(design, theta_hat, hyps)
        cal = amc_calibrate(pm, req.alpha, req.v, req.b_reps, req.seed, t_obs, req.plus_one)
    else:
        cal, diag = nb_calibrate(design, hyps, req.alpha, req.v, req.b_reps, req.seed, t_obs,
                                 workers=req.workers, plus_one=req.plus_one)
    cut = cal.cutoff
    records = []
    for c, t, p in zip(contrasts, t_obs, cal.adjusted_p):
        try:
            iv = sci(design, c, cut, known=(c.null, t))
        except FloatingPointError as exc:
            raise NumericalError(f"interval for {c.label!r}: {exc}") from exc
        reject = bool(t > cut)
        if reject == iv.contains(c.null):
            raise NumericalError(f"test and interval disagree for {c.label!r}")
        records.append(HypothesisRecord(c.label, c.estimate(np.nan_to_num(theta_hat)), float(t),
                                        float(p), reject, iv.lo, iv.hi, iv.truncated_lo,
                                        iv.truncated_hi, c.null))
    notes = []
    if req.v > 1:
        notes.append(f"intervals use the v={req.v} (generalized familywise) cutoff")
    if diag is not None and diag.redraws:
        notes.append(f"{diag.redraws} bootstrap resamples were redrawn")
    return AnalysisReport(records, cut, req.method, theta_hat, design.treatment_labels,
                          summarize(design).to_dict(), req.config(), diag, notes)
