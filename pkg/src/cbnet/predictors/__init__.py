"""From-scratch regressors behind one fit/predict contract."""
from cbnet.predictors.base import NotFittedError, TrainingError
from cbnet.predictors.graphnet import GraphNetBlock, GraphNetRegressor, GraphNetSpec, GraphSample, \
    build_graph, graphnet_forward
from cbnet.predictors.knn import KNNRegressor
from cbnet.predictors.mlp import MLP, BranchSpec, MlpSpec
from cbnet.predictors.models import GraphModel, TableModel, load_model, save_model
from cbnet.predictors.nn import masked_rmse
from cbnet.predictors.presets import PRESETS, STA_PRESETS, make_model
from cbnet.predictors.search import grid_search
from cbnet.predictors.trees import GradientBoosting, RandomForest, RegressionTree

__all__ = [
    "BranchSpec", "GradientBoosting", "GraphModel", "GraphNetBlock", "GraphNetRegressor",
    "GraphNetSpec", "GraphSample", "KNNRegressor", "MLP", "MlpSpec", "NotFittedError", "PRESETS",
    "RandomForest", "RegressionTree", "STA_PRESETS", "TableModel", "TrainingError", "build_graph",
    "graphnet_forward", "grid_search", "load_model", "make_model", "masked_rmse", "save_model",
]
