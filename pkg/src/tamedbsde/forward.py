"""Euler simulation of the scalar forward SDE and terminal values g(X_N)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as npoly

from .grids import IncrementBatch, PartitionGrid

# Any |X| beyond this is treated as a blow-up so that explosion shows up as
# a diagnostic instead of silent NaN propagation.
OVERFLOW_LIMIT = 1e12


class ForwardBlowupError(RuntimeError):
    """Forward state left the finite range; records the offending path/step."""

    def __init__(self, path: int, step: int, value: float):
        self.path = path
        self.step = step
        super().__init__(
            f"forward state non-finite or beyond {OVERFLOW_LIMIT:.0e} "
            f"at path {path}, step {step} (value {value!r})"
        )


@dataclass(frozen=True)
class SdeSpec:
    """Scalar SDE dX = (b0 + b1 X) dt + (s0 + s1 X) dW, started at x0."""

    x0: float
    drift_const: float = 0.0
    drift_slope: float = 0.0
    diff_const: float = 1.0
    diff_slope: float = 0.0
    brownian_dim: int = 1

    def __post_init__(self):
        for name in ("x0", "drift_const", "drift_slope", "diff_const", "diff_slope"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"SdeSpec.{name} must be finite")
        if self.brownian_dim != 1:
            raise ValueError("the scalar forward model supports brownian_dim = 1 only")

    def drift(self, x):
        return self.drift_const + self.drift_slope * x

    def diffusion(self, x):
        return self.diff_const + self.diff_slope * x


@dataclass(frozen=True)
class TerminalSpec:
    """Terminal map g as a polynomial, coefficients ascending (degree <= 4)."""

    coeffs: tuple[float, ...]

    def __post_init__(self):
        if len(self.coeffs) == 0 or len(self.coeffs) > 5:
            raise ValueError("terminal polynomial must have degree between 0 and 4")

    @property
    def degree(self) -> int:
        nz = [k for k, c in enumerate(self.coeffs) if c != 0.0]
        return max(nz) if nz else 0

    @property
    def globally_lipschitz(self) -> bool:
        # degree >= 2 terminal maps are only locally Lipschitz
        return self.degree <= 1

    def __call__(self, x):
        return npoly.polyval(x, np.asarray(self.coeffs, dtype=float))


@dataclass(frozen=True)
class PathEnsemble:
    """Simulated forward states X (paths x (steps+1)) with their increments."""

    X: np.ndarray
    increments: IncrementBatch
    grid: PartitionGrid


def euler_simulate(sde: SdeSpec, grid: PartitionGrid, batch: IncrementBatch) -> PathEnsemble:
    """Euler scheme X_{i+1} = X_i + b(X_i) h + sigma(X_i) dW_{i+1}.

    Raises ForwardBlowupError naming the first offending (path, step) if a
    state becomes non-finite or exceeds the overflow limit.
    """
    paths, steps, d = batch.dW.shape
    if steps != grid.steps:
        raise ValueError(f"increment batch has {steps} steps, grid has {grid.steps}")
    if d != sde.brownian_dim:
        raise ValueError(f"increment batch has brownian_dim {d}, sde expects {sde.brownian_dim}")

    X = np.empty((paths, steps + 1), dtype=float)
    X[:, 0] = sde.x0
    h = grid.h
    dW = batch.dW[:, :, 0]
    for i in range(steps):
        x = X[:, i]
        X[:, i + 1] = x + sde.drift(x) * h + sde.diffusion(x) * dW[:, i]
        bad = ~(np.isfinite(X[:, i + 1]) & (np.abs(X[:, i + 1]) <= OVERFLOW_LIMIT))
        if bad.any():
            p = int(np.argmax(bad))
            raise ForwardBlowupError(p, i + 1, float(X[p, i + 1]))
    return PathEnsemble(X=X, increments=batch, grid=grid)


def terminal_values(terminal: TerminalSpec, ensemble: PathEnsemble) -> np.ndarray:
    """xi_m = g(X_{m,N}) for every path m."""
    return np.asarray(terminal(ensemble.X[:, -1]), dtype=float)
