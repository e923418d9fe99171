"""Sobolev roughness-penalty machinery on [0, 1].

Null-space basis and reproducing kernel follow the classical
smoothing-spline construction from scaled Bernoulli polynomials
k_j(t) = B_j(t)/j!: the order-m penalty J(f) = integral of |f^(m)|^2
has null space spanned by k_0, ..., k_{m-1}, and the orthogonal
complement (under averaging side conditions) has reproducing kernel

    K1(s, t) = k_m(s) k_m(t) + (-1)^(m-1) k_{2m}(frac(s - t)).
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import bernoulli

from .curves import FunctionalSample, check_grid, trapezoid_weights
from .errors import InputError


def _bernoulli_coeffs(j):
    """Monomial coefficients (ascending) of B_j(t)/j!."""
    from math import comb, factorial

    b = bernoulli(j)  # B_0 .. B_j (B_1 = -1/2 convention)
    coef = np.array([comb(j, k) * b[j - k] for k in range(j + 1)], dtype=float)
    return coef / factorial(j)


def scaled_bernoulli(j, t):
    """k_j(t) = B_j(t)/j! evaluated elementwise."""
    t = np.asarray(t, dtype=float)
    coef = _bernoulli_coeffs(j)
    out = np.zeros_like(t)
    for c in reversed(coef):  # Horner in ascending powers
        out = out * t + c
    return out


def null_basis(m, t):
    """Values psi_1(t), ..., psi_m(t) of the penalty null-space basis.

    psi_j = k_{j-1}; for m = 2 these are 1 and t - 1/2. Output shape is
    (m,) for scalar t and (m, len(t)) for vector t.
    """
    if m < 1:
        raise InputError("penalty order m must be >= 1")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0.0) or np.any(t_arr > 1.0):
        raise InputError("evaluation points must lie in [0, 1]")
    rows = [scaled_bernoulli(j, t_arr) for j in range(m)]
    return np.array(rows) if t_arr.ndim else np.array([float(r) for r in rows])


def kernel_eval(m, s, t):
    """Reproducing kernel K1(s, t) of the penalized component, vectorized."""
    if m < 1:
        raise InputError("penalty order m must be >= 1")
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    frac = np.mod(s - t, 1.0)
    val = scaled_bernoulli(m, s) * scaled_bernoulli(m, t)
    val = val + (-1.0) ** (m - 1) * scaled_bernoulli(2 * m, frac)
    return val if val.ndim else float(val)


@dataclass(frozen=True)
class SobolevDesign:
    """Design quantities for representer-based slope estimation.

    s[i, j]   = integral of X_i psi_j
    Xi[i, j]  = double integral of X_i(u) K1(u, v) X_j(v)
    psi_eval  = psi_j on the output grid, (m, G)
    kx_eval   = (K1 X_i)(t) on the output grid, (n, G)
    """

    m: int
    grid: np.ndarray      # covariate grid (quadrature nodes)
    weights: np.ndarray   # trapezoid weights on the covariate grid
    X: np.ndarray         # (n, T) curve values
    s: np.ndarray         # (n, m)
    Xi: np.ndarray        # (n, n), symmetrized PSD Gram
    out_grid: np.ndarray  # (G,)
    psi_eval: np.ndarray  # (m, G)
    kx_eval: np.ndarray   # (n, G)

    @property
    def n(self):
        return self.X.shape[0]

    def psi_at(self, t):
        """psi basis at arbitrary points, (m, len(t))."""
        return null_basis(self.m, np.atleast_1d(t))

    def kx_at(self, t):
        """(K1 X_i)(t) at arbitrary points, (n, len(t))."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        Kst = kernel_eval(self.m, self.grid[:, None], t[None, :])
        return (self.X * self.weights) @ Kst


def build_design(X, m=2, out_grid=None):
    """Assemble the representer design from a functional sample.

    All integrals use the trapezoidal rule on the covariate grid, so the
    design is reproducible from CSV inputs. Xi is symmetrized.
    """
    if not isinstance(X, FunctionalSample):
        raise InputError("build_design expects a FunctionalSample")
    if m < 1:
        raise InputError("penalty order m must be >= 1")
    grid = X.grid
    w = trapezoid_weights(grid)
    Xw = X.values * w  # (n, T)
    s = Xw @ null_basis(m, grid).T  # (n, m)
    Kgrid = kernel_eval(m, grid[:, None], grid[None, :])
    Xi = Xw @ Kgrid @ Xw.T
    Xi = (Xi + Xi.T) / 2.0
    if out_grid is None:
        out_grid = grid
    else:
        out_grid = check_grid(out_grid)
    psi_eval = null_basis(m, out_grid)
    kx_eval = Xw @ kernel_eval(m, grid[:, None], out_grid[None, :])
    return SobolevDesign(
        m=m, grid=grid, weights=w, X=X.values, s=s, Xi=Xi,
        out_grid=out_grid, psi_eval=psi_eval, kx_eval=kx_eval,
    )


@dataclass(frozen=True)
class SlopeCoefficients:
    """Representer coefficients for the K non-reference communities.

    beta_k(t) = sum_j d[k, j] psi_j(t) + sum_i c[k, i] (K1 X_i)(t);
    community 0 has alpha = 0 and beta = 0 implicitly.
    """

    alpha: np.ndarray  # (K,)
    d: np.ndarray      # (K, m)
    c: np.ndarray      # (K, n)

    def __post_init__(self):
        alpha = np.atleast_1d(np.asarray(self.alpha, dtype=float))
        d = np.atleast_2d(np.asarray(self.d, dtype=float))
        c = np.atleast_2d(np.asarray(self.c, dtype=float))
        if not (d.shape[0] == c.shape[0] == alpha.size):
            raise InputError("alpha, d, c disagree on the number of communities")
        for name, arr in (("alpha", alpha), ("d", d), ("c", c)):
            if not np.isfinite(arr).all():
                raise InputError(f"non-finite entries in {name}")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "c", c)

    @property
    def K(self):
        return self.alpha.size

    @staticmethod
    def zeros(K, m, n):
        return SlopeCoefficients(np.zeros(K), np.zeros((K, m)), np.zeros((K, n)))


def beta_on_grid(coeffs, design):
    """All slope functions on the design's output grid, (K, G)."""
    return coeffs.d @ design.psi_eval + coeffs.c @ design.kx_eval


def beta_eval(coeffs, design, k, t_index):
    """beta_k at output-grid index t_index; k = 0 is the zero reference."""
    if k == 0:
        return 0.0
    if not 1 <= k <= coeffs.K:
        raise InputError(f"community {k} out of range 1..{coeffs.K}")
    row = coeffs.d[k - 1] @ design.psi_eval[:, t_index]
    row += coeffs.c[k - 1] @ design.kx_eval[:, t_index]
    return float(row)


def beta_at(coeffs, design, t):
    """All slope functions at arbitrary points t, (K, len(t))."""
    t = np.atleast_1d(t)
    return coeffs.d @ design.psi_at(t) + coeffs.c @ design.kx_at(t)


def penalty(coeffs, design):
    """Roughness penalty J(beta) = sum_k c_k' Xi c_k; zero iff all c_k = 0."""
    if coeffs.c.shape[1] != design.Xi.shape[0]:
        raise InputError("coefficient and design dimensions disagree")
    return float(np.einsum("ki,ij,kj->", coeffs.c, design.Xi, coeffs.c))
