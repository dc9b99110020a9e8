"""Exhaustive hyperparameter grid search on a fixed train/validation split."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np


@dataclass
class GridCell:
    params: dict
    val_rmse: float
    error: str | None = None


def expand_grid(grid: Mapping[str, Sequence] | Sequence[Mapping]) -> list[dict]:
    """``{"a": [1, 2], "b": [3]}`` -> ``[{"a": 1, "b": 3}, {"a": 2, "b": 3}]``."""
    if isinstance(grid, Mapping):
        keys = list(grid)
        return [dict(zip(keys, vals)) for vals in itertools.product(*(grid[k] for k in keys))]
    return [dict(g) for g in grid]


def grid_search(build: Callable[..., object], grid, train, val) -> tuple[dict, list[GridCell]]:
    """Fit ``build(**params)`` on ``train`` for every cell; lowest validation RMSE wins.

    Ties keep the earlier cell. A failing cell is recorded with its error and
    an infinite score instead of aborting the search.
    """
    cells = expand_grid(grid)
    if not cells:
        raise ValueError("empty grid")
    report = []
    for params in cells:
        try:
            model = build(**params).fit(train)
            pred = np.asarray(model.predict(val), dtype=float)
            err = pred - val.y
            score = math.sqrt(float(np.mean(err * err)))
            if not math.isfinite(score):
                raise ValueError("non-finite validation RMSE")
            report.append(GridCell(params, score))
        except Exception as exc:  # noqa: BLE001 - recorded per cell
            report.append(GridCell(params, math.inf, f"{type(exc).__name__}: {exc}"))
    best = min(range(len(report)), key=lambda i: (report[i].val_rmse, i))
    if not math.isfinite(report[best].val_rmse):
        raise RuntimeError("every grid cell failed: " + "; ".join(c.error or "" for c in report))
    return report[best].params, report
