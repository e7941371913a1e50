"""Empirical likelihood multiple comparisons for general block designs."""

from .amc import (CalibrationResult, PluginMatrices, adjusted_p, amc_calibrate,
                  plugin_matrices, sample_mv_chisq)
from .bootstrap import BootstrapDiagnostics, NullTransformed, nb_calibrate, null_transform
from .constrained import (SCI, ConstrainedFit, Contrast, LinearHypothesis, mele, minimize_el,
                          parse_contrasts, profile_contrast, sci)
from .design import (BlockDesign, DesignSummary, connectivity, generate_pair_design, ingest,
                     read_csv, summarize)
from .el_core import ELSolution, ScoreTable, el_log_ratio, hull_contains_zero, solve_dual
from .errors import (BootstrapRedrawError, CalibrationError, DesignError, DuplicateCellError,
                     ElblockError, NumericalError, UnidentifiedHypothesisError)
from .inference import AnalysisReport, AnalysisRequest, pairwise, run_analysis
from .simulate import MetricsReport, ScenarioSpec, evaluate, evaluate_many, gen_dataset, scenario

__version__ = "0.1.0"

__all__ = [
    "BlockDesign", "DesignSummary", "ingest", "read_csv", "summarize", "connectivity",
    "generate_pair_design", "ScoreTable", "ELSolution", "el_log_ratio", "solve_dual",
    "hull_contains_zero", "LinearHypothesis", "Contrast", "ConstrainedFit", "SCI", "mele",
    "minimize_el", "profile_contrast", "sci", "parse_contrasts", "PluginMatrices",
    "CalibrationResult", "plugin_matrices", "amc_calibrate", "adjusted_p", "sample_mv_chisq",
    "NullTransformed", "BootstrapDiagnostics", "null_transform", "nb_calibrate",
    "AnalysisRequest", "AnalysisReport", "run_analysis", "pairwise", "ScenarioSpec",
    "MetricsReport", "scenario", "gen_dataset", "evaluate", "evaluate_many", "ElblockError",
    "DesignError", "DuplicateCellError", "UnidentifiedHypothesisError", "CalibrationError",
    "BootstrapRedrawError", "NumericalError",
]
