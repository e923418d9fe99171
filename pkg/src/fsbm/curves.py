"""Functional covariates on a shared grid: storage, quadrature, simulation."""

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError


def check_grid(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2:
        raise InputError("grid must be a vector with at least 2 points")
    if grid[0] < 0.0 or grid[-1] > 1.0:
        raise InputError("grid must lie inside [0, 1]")
    if not np.all(np.diff(grid) > 0):
        raise InputError("grid must be strictly increasing")
    return grid


@dataclass(frozen=True)
class FunctionalSample:
    """n covariate curves observed on a shared grid in [0, 1]."""

    grid: np.ndarray
    values: np.ndarray  # (n, T)

    def __post_init__(self):
        grid = check_grid(self.grid)
        values = np.atleast_2d(np.asarray(self.values, dtype=float))
        if values.shape[1] != grid.size:
            raise InputError(
                f"curves have {values.shape[1]} points, grid has {grid.size}"
            )
        if not np.isfinite(values).all():
            raise InputError("curve values must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @property
    def n(self):
        return self.values.shape[0]

    @property
    def T(self):
        return self.grid.size


def trapezoid_weights(grid):
    """Weights w with sum(w * f) the trapezoidal rule for integral of f."""
    grid = check_grid(grid)
    w = np.zeros_like(grid)
    d = np.diff(grid)
    w[:-1] += d / 2.0
    w[1:] += d / 2.0
    return w


def inner_product(x, f, grid):
    """Trapezoidal quadrature of integral of x(t) * f(t) over the grid."""
    x = np.asarray(x, dtype=float)
    f = np.asarray(f, dtype=float)
    grid = check_grid(grid)
    if x.shape[-1] != grid.size or f.shape[-1] != grid.size:
        raise InputError("curve and grid lengths do not match")
    return float(np.dot(trapezoid_weights(grid), x * f))


def curve_integrals(X, f):
    """Vector of integrals of X_i(t) * f(t) for all rows of the sample."""
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != X.T:
        raise InputError("curve and grid lengths do not match")
    w = trapezoid_weights(X.grid)
    return X.values @ (w * f)


# Synthetic covariate process: 5 cosine modes with geometric weights.
N_MODES = 5


def _mode_weights():
    j = np.arange(1, N_MODES + 1)
    return (-1.0) ** (j + 1) / j**2


def _mode_functions(grid):
    """phi_1 = 1, phi_j = sqrt(2) cos((j-1) pi t) for j >= 2; rows are modes."""
    out = np.ones((N_MODES, grid.size))
    for j in range(2, N_MODES + 1):
        out[j - 1] = np.sqrt(2.0) * np.cos((j - 1) * np.pi * grid)
    return out


@dataclass(frozen=True)
class GenerationConfig:
    """Synthetic design: covariates, logistic labels, and block matrix."""

    n: int
    T: int = 50
    alpha0: float = 0.1
    tau: float = 1.0  # slope scale; tau = 0 turns the covariate effect off
    seed: int = 0
    block: np.ndarray = None
    rho: float = None

    def __post_init__(self):
        if self.n < 2 or self.T < 2:
            raise InputError("need n >= 2 and T >= 2")
        if self.block is None:
            B, rho = default_block_matrix(self.n)
            object.__setattr__(self, "block", B)
            object.__setattr__(self, "rho", rho)


def default_block_matrix(n):
    """Assortative two-community block matrix with (log n)^1.5 / n scale."""
    rho = float(np.log(n) ** 1.5 / n)
    return rho * np.array([[1.2, 0.3], [0.3, 1.2]]), rho


def true_slope(grid, tau=1.0):
    """Quadratic slope tau * (50 (t - 1/2)^2 - 5) tabulated on the grid."""
    grid = check_grid(grid)
    return tau * (50.0 * (grid - 0.5) ** 2 - 5.0)


def simulate_covariates(cfg):
    """Draw n independent curves on a uniform grid of T points.

    X_i(t) = sum_j zeta_j xi_ij phi_j(t) with xi_ij ~ Uniform[-sqrt(3), sqrt(3)]
    (unit variance), deterministic given cfg.seed.
    """
    rng = np.random.default_rng(cfg.seed)
    grid = np.linspace(0.0, 1.0, cfg.T)
    xi = rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), size=(cfg.n, N_MODES))
    values = (xi * _mode_weights()) @ _mode_functions(grid)
    return FunctionalSample(grid, values)


def assign_labels(X, alpha0, beta0, seed):
    """Two-community labels: P(Z_i = 1 | X_i) = logistic(alpha0 + <X_i, beta0>)."""
    beta0 = np.asarray(beta0, dtype=float)
    if beta0.shape != X.grid.shape:
        raise InputError("beta0 must be tabulated on the covariate grid")
    rng = np.random.default_rng(seed)
    lin = alpha0 + curve_integrals(X, beta0)
    p1 = 1.0 / (1.0 + np.exp(-lin))
    return (rng.random(X.n) < p1).astype(np.int64)
