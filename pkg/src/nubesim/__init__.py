"""Non-uniform Berry-Esseen experiments for Gaussian, Poisson and Rademacher functionals."""
from .kernels import BACKEND
from .stein import JumpPointError, SteinEval, lemma_constant, stein_derivative, stein_eval, stein_solution
from .empirical import SampleBatch, fit_rate, ks_distance, ks_report, weighted_ks
from .chaos import FbmSpec, NoCltError, diagnostics
from .graphs import Graph, PatternGraph
from .geometric import RggSpec, Window, estimate_poincare_terms
from .rademacher import RademacherSpec, ResourceError, estimate_b_terms
from .harness import ExperimentError, ExperimentSpec, ReportRow, emit_report, rate_report, run_experiment

__version__ = "0.1.0"
