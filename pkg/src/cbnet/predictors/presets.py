"""Named model configurations reproducing each team's published setup.

Desk-scale variants shrink layer widths or epoch counts where the original
setting is too slow for a laptop run; ``full=True`` restores the published
values.
"""
from __future__ import annotations

from cbnet.channelization import N_CHANNELS
from cbnet.predictors.graphnet import GraphNetRegressor, GraphNetSpec
from cbnet.predictors.knn import KNNRegressor
from cbnet.predictors.mlp import MLP, BranchSpec, MlpSpec
from cbnet.predictors.models import GraphModel, TableModel
from cbnet.predictors.trees import GradientBoosting, RandomForest

_CH = [f"{g}{c}" for g in ("primary_ch", "min_ch", "max_ch") for c in range(N_CHANNELS)]
NETINTELS_COLUMNS = ["x", "y", *_CH, "sinr", "rssi"]
RAMON_SIGNAL = [f"{c}_{s}" for c in ("distance", "rssi", "sinr", "ap_interference")
                for s in ("mean", "std")]
RAMON_AIRTIME = [f"airtime_ch{c}" for c in range(N_CHANNELS)]

PRESETS = ("ramon", "uc3m", "netintels-ann", "netintels-knn", "netintels-rf", "stc", "atari")
STA_PRESETS = ("atari", "stc", "netintels-ann", "netintels-knn", "netintels-rf")


def ramon_spec(seed: int = 0, epochs: int = 700) -> MlpSpec:
    return MlpSpec(
        hidden=(),
        branches=(
            BranchSpec(tuple(RAMON_SIGNAL), (16, 16), "prelu", batchnorm=True),
            BranchSpec(tuple(RAMON_AIRTIME), (3,), "prelu", batchnorm=False),
        ),
        output="relu", loss="rmse", optimizer="adam", lr=0.025, epochs=epochs,
        batch_size=64, seed=seed)


def make_model(name: str, seed: int = 0, full: bool = False):
    """Untrained model for preset ``name``."""
    if name == "ramon":
        spec = ramon_spec(seed)
        return TableModel(name, "BSS", MLP(spec), RAMON_SIGNAL + RAMON_AIRTIME, "standard")
    if name == "uc3m":
        spec = MlpSpec(hidden=(64, 64), activation="relu", output="linear", loss="mse",
                       optimizer="rmsprop", lr=1e-3, epochs=50, batch_size=50, seed=seed)
        return TableModel(name, "STA", MLP(spec), None, "standard")
    if name == "netintels-ann":
        widths = (1024,) * 6 + (512,) if full else (64,) * 6 + (32,)
        spec = MlpSpec(hidden=widths, activation="relu", output="linear", loss="mse",
                       optimizer="adam", lr=1e-3, epochs=1000 if full else 200,
                       batch_size=250, seed=seed)
        return TableModel(name, "STA", MLP(spec), NETINTELS_COLUMNS, "standard")
    if name == "netintels-knn":
        return TableModel(name, "STA", KNNRegressor(10), NETINTELS_COLUMNS, "none")
    if name == "netintels-rf":
        return TableModel(name, "STA", RandomForest(100, 10, seed), NETINTELS_COLUMNS, "none")
    if name == "stc":
        return TableModel(name, "STA", GradientBoosting(200, 4, 0.1), None, "yeo-johnson")
    if name == "atari":
        return GraphModel(name, GraphNetRegressor(GraphNetSpec(3, 32, 1e-3, 100 if full else 60, 8, seed)))
    raise ValueError(f"unknown preset {name!r}; valid: {', '.join(PRESETS)}")
