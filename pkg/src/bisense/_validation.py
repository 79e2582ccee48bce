"""Input checks shared by the estimator front-ends."""

from __future__ import annotations

import numpy as np

from .channel import RxGrid


def check_rx_grid(rx, stage: str | None = None) -> RxGrid:
    if not isinstance(rx, RxGrid):
        raise TypeError(f"expected an RxGrid, got {type(rx).__name__}")
    if not np.all(np.isfinite(rx.y)):
        raise ValueError("received grid contains non-finite values")
    if stage is not None and rx.plan.stage != stage:
        raise ValueError(f"expected a {stage}-stage grid, got a {rx.plan.stage}-stage grid")
    return rx


def check_grids(X) -> list[RxGrid]:
    """Accept one RxGrid or a sequence of them."""
    grids = [X] if isinstance(X, RxGrid) else list(X)
    if not grids:
        raise ValueError("no received grids given")
    return [check_rx_grid(g) for g in grids]


def check_grid_pairs(X) -> list[tuple[RxGrid, RxGrid]]:
    """Accept one ``(coarse, fine)`` pair or a sequence of pairs."""
    if isinstance(X, tuple) and len(X) == 2 and all(isinstance(g, RxGrid) for g in X):
        X = [X]
    pairs = []
    for item in X:
        coarse, fine = item
        pairs.append((check_rx_grid(coarse, "coarse"), check_rx_grid(fine, "fine")))
    if not pairs:
        raise ValueError("no grid pairs given")
    return pairs


def check_axis(values, name: str) -> np.ndarray:
    axis = np.atleast_1d(np.asarray(values, dtype=float))
    if axis.ndim != 1 or axis.size == 0:
        raise ValueError(f"{name} must be a nonempty 1D sequence")
    if not np.all(np.isfinite(axis)):
        raise ValueError(f"{name} contains non-finite values")
    if np.any(np.diff(axis) <= 0):
        raise ValueError(f"{name} must be strictly increasing")
    return axis
