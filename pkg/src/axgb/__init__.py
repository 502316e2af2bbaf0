"""Adaptive gradient-boosted tree ensembles for drifting data streams."""
from .adwin import AdwinDetector
from .boosting import RegressionTree, TreeParams, boost, fit_tree
from .ensemble import MODEL_NAMES, AxgbModel, BxgbModel, Strategy, make_model, model_from_dict
from .evaluation import ParamGrid, benchmark_time, grid_search, measure_complexity, prequential_run
from .streams import (
    AgrawalGenerator,
    CsvStream,
    DriftStream,
    HyperplaneGenerator,
    SEAGenerator,
    StreamSpec,
    compose_drift,
    preset_spec,
)

__version__ = "0.1.0"

__all__ = [
    "AdwinDetector", "RegressionTree", "TreeParams", "boost", "fit_tree", "MODEL_NAMES", "AxgbModel",
    "BxgbModel", "Strategy", "make_model", "model_from_dict", "ParamGrid", "benchmark_time", "grid_search",
    "measure_complexity", "prequential_run", "AgrawalGenerator", "CsvStream", "DriftStream",
    "HyperplaneGenerator", "SEAGenerator", "StreamSpec", "compose_drift", "preset_spec",
]
