"""Loss-curve modelling with learning-rate forward and annealing-momentum terms."""

from .curve import CurveError, CurveMeta, LossCurve
from .ingest import (
    IngestError,
    RunManifest,
    align_curves,
    export_loss_csv,
    load_manifest,
    parse_loss_csv,
    parse_loss_jsonl,
    steps_to_tokens,
    tokens_to_steps,
)
from .lawfit import (
    FitConfig,
    FitReport,
    ForwardMomentumRegressor,
    LawCoefficients,
    evaluate_law,
    fit,
    huber,
    mape,
    moving_average,
    predict_curve,
    smooth_curve,
)
from .recommend import (
    PowerLawFit,
    RecommendationReport,
    fit_power_law,
    predict_b_opt,
    predict_r_opt_from_lr,
    predict_r_opt_from_steps,
    sweep_ratio,
)
from .schedule import ScheduleError, ScheduleSpec, build_constant, build_cosine, build_piecewise, build_wsd, lr_at, lr_series
from .terms import MomentumConfig, TermSeries, asmt_series, cmmt_bruteforce, cmmt_series, forward_series, term_series
from .toytrain import BenchmarkConfig, ConvexProblem, DivergenceError, generate_benchmark_family, make_problem, run_sgd

__all__ = [
    "CurveError",
    "CurveMeta",
    "LossCurve",
    "IngestError",
    "RunManifest",
    "align_curves",
    "export_loss_csv",
    "load_manifest",
    "parse_loss_csv",
    "parse_loss_jsonl",
    "steps_to_tokens",
    "tokens_to_steps",
    "FitConfig",
    "FitReport",
    "ForwardMomentumRegressor",
    "LawCoefficients",
    "evaluate_law",
    "fit",
    "huber",
    "mape",
    "moving_average",
    "predict_curve",
    "smooth_curve",
    "PowerLawFit",
    "RecommendationReport",
    "fit_power_law",
    "predict_b_opt",
    "predict_r_opt_from_lr",
    "predict_r_opt_from_steps",
    "sweep_ratio",
    "ScheduleError",
    "ScheduleSpec",
    "build_constant",
    "build_cosine",
    "build_piecewise",
    "build_wsd",
    "lr_at",
    "lr_series",
    "MomentumConfig",
    "TermSeries",
    "asmt_series",
    "cmmt_bruteforce",
    "cmmt_series",
    "forward_series",
    "term_series",
    "BenchmarkConfig",
    "ConvexProblem",
    "DivergenceError",
    "generate_benchmark_family",
    "make_problem",
    "run_sgd",
]

__version__ = "0.1.0"
