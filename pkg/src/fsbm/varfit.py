"""Variational EM for the functional SBM (Algorithm: eta -> B -> q).

The traced criterion is the variational bound

    L(Q; theta) = -E_Q[log P(A, Z, X; theta) - log Q(Z)] + (lambda/2) J(beta),

minimized by cycling a penalized Newton update of the slope parameters,
the closed-form block-matrix update, and blockwise coordinate ascent on
the responsibilities.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .curves import FunctionalSample
from .datagen import derive_seed
from .errors import FitConvergenceWarning, InputError, NumericalError
from .network import (
    check_adjacency,
    clamp_block_matrix,
)
from .sobolev import SlopeCoefficients, build_design, penalty
from .spectral import approx_kmeans, embed, initial_responsibilities

Q_FLOOR = 1e-12


def check_responsibilities(q, n=None, n_classes=None):
    """Validate, floor, and renormalize a responsibility matrix."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    if n is not None and q.shape[0] != n:
        raise InputError(f"responsibilities have {q.shape[0]} rows, expected {n}")
    if n_classes is not None and q.shape[1] != n_classes:
        raise InputError(
            f"responsibilities have {q.shape[1]} columns, expected {n_classes}"
        )
    if q.min() < 0:
        raise InputError("responsibilities must be nonnegative")
    rows = q.sum(axis=1)
    if np.any(np.abs(rows - 1.0) > 1e-8):
        raise InputError("responsibility rows must sum to 1")
    q = np.maximum(q, Q_FLOOR)
    return q / q.sum(axis=1, keepdims=True)


@dataclass
class VariationalState:
    """One full iterate of the variational loop."""

    q: np.ndarray              # (n, K+1)
    coeffs: SlopeCoefficients
    B: np.ndarray              # (K+1, K+1), clamped
    lam: float
    objective_trace: list = field(default_factory=list)

    @property
    def K(self):
        return self.q.shape[1] - 1


@dataclass
class FitResult:
    state: VariationalState
    labels: np.ndarray
    iterations: int
    converged: bool
    lambda_path: dict = None
    design: object = None

    @property
    def coeffs(self):
        return self.state.coeffs

    @property
    def B(self):
        return self.state.B


def linear_predictor(coeffs, design):
    """R[i, k] = alpha_k + d_k . s_i + c_k . Xi_i, shape (n, K)."""
    return coeffs.alpha + design.s @ coeffs.d.T + design.Xi @ coeffs.c.T


def class_log_probs(R):
    """log W[i, a] for a = 0..K from the linear predictors (n, K)."""
    R0 = np.concatenate([np.zeros((R.shape[0], 1)), R], axis=1)
    lse = _logsumexp_rows(R0)
    return R0 - lse[:, None]


def _logsumexp_rows(M):
    mx = M.max(axis=1)
    return mx + np.log(np.exp(M - mx[:, None]).sum(axis=1))


def _pair_sums(q, A):
    """(N, D) with N_ab = sum_{i<j} A_ij q_ia q_jb and D_ab likewise for 1."""
    n = q.shape[0]
    Au = np.triu(A.astype(float), 1)
    N = q.T @ Au @ q
    cum = np.cumsum(q, axis=0)
    pre = np.vstack([np.zeros((1, q.shape[1])), cum[:-1]])
    D = pre.T @ q
    return N, D


def objective(state, A, design):
    """Value of the penalized variational bound at the current state."""
    A = check_adjacency(A)
    q = state.q
    B = clamp_block_matrix(state.B)
    R = linear_predictor(state.coeffs, design)
    logW = class_log_probs(R)
    N, D = _pair_sums(q, A)
    edge = -float(np.sum(N * np.log(B)) + np.sum((D - N) * np.log(1.0 - B)))
    label = -float(np.sum(q * logW))
    qs = np.maximum(q, Q_FLOOR)
    entropy = float(np.sum(qs * np.log(qs)))
    value = edge + label + entropy + 0.5 * state.lam * penalty(state.coeffs, design)
    if not np.isfinite(value):
        for name, term in (("edge", edge), ("label", label), ("entropy", entropy)):
            if not np.isfinite(term):
                raise NumericalError(f"objective term '{name}' is non-finite")
        raise NumericalError("objective penalty term is non-finite")
    return value


# ---------------------------------------------------------------------------
# Penalized multinomial-logit solver (the eta update)
# ---------------------------------------------------------------------------


def _softmax_ref(R):
    """Class probabilities (n, K) for classes 1..K with reference class 0."""
    R0 = np.concatenate([np.zeros((R.shape[0], 1)), R], axis=1)
    lse = _logsumexp_rows(R0)
    return np.exp(R - lse[:, None])


def _logit_objective(Phi, q, Pmat, eta):
    R = Phi @ eta.T
    lse = _logsumexp_rows(np.concatenate([np.zeros((R.shape[0], 1)), R], axis=1))
    fit = float(np.sum(lse) - np.sum(q[:, 1:] * R))
    pen = float(np.einsum("kp,pq,kq->", eta, Pmat, eta))
    return fit + pen


def _logit_score(Phi, q, Pmat, eta):
    p = _softmax_ref(Phi @ eta.T)
    return (p - q[:, 1:]).T @ Phi + 2.0 * eta @ Pmat


def _solve_spd(H, g):
    """Solve H x = g with escalating diagonal jitter if H is near-singular."""
    jitter = 0.0
    for _ in range(8):
        try:
            return cho_solve(cho_factor(H + jitter * np.eye(H.shape[0])), g)
        except np.linalg.LinAlgError:
            jitter = 1e-10 if jitter == 0.0 else jitter * 100.0
    raise NumericalError("Hessian not positive definite even after jitter")


def newton_multilogit(Phi, q, Pmat, eta0, tol=1e-8, max_iter=50):
    """Minimize the penalized multinomial-logit objective by safeguarded Newton.

    Score and Hessian are those of

        sum_i [ -sum_k q_ik R_ik + log(1 + sum_k exp R_ik) ] + sum_k eta_k' P eta_k

    with step halving until the objective does not increase. Returns
    (eta, converged); on hitting max_iter the best iterate is returned.
    """
    n, p = Phi.shape
    K = eta0.shape[0]
    eta = eta0.copy()
    obj = _logit_objective(Phi, q, Pmat, eta)
    for _ in range(max_iter):
        S = _logit_score(Phi, q, Pmat, eta)
        if np.abs(S).max() < tol:
            return eta, True
        probs = _softmax_ref(Phi @ eta.T)
        H = np.empty((K * p, K * p))
        for k in range(K):
            for l in range(k, K):
                w = probs[:, k] * ((1.0 if k == l else 0.0) - probs[:, l])
                if k == l:
                    w = probs[:, k] * (1.0 - probs[:, k])
                block = (Phi * w[:, None]).T @ Phi
                if k == l:
                    block = block + 2.0 * Pmat
                H[k * p : (k + 1) * p, l * p : (l + 1) * p] = block
                if l != k:
                    H[l * p : (l + 1) * p, k * p : (k + 1) * p] = block
    # (off-diagonal blocks carry -p_k p_l weights; handled above via sign)
        step = _solve_spd(H, S.ravel()).reshape(K, p)
        scale = 1.0
        for _ in range(40):
            trial = eta - scale * step
            trial_obj = _logit_objective(Phi, q, Pmat, trial)
            if trial_obj <= obj:
                break
            scale /= 2.0
        else:
            return eta, False  # no non-increasing step: stuck at numerical floor
        eta, obj = trial, trial_obj
    return eta, False


def eta_features(design):
    """Stacked feature matrix (1, s_i, Xi_i.) of shape (n, 1 + m + n)."""
    n = design.n
    return np.concatenate([np.ones((n, 1)), design.s, design.Xi], axis=1)


def eta_penalty_matrix(design, lam):
    """Quadratic-penalty matrix giving lam * sum_k c_k' Xi c_k."""
    p = 1 + design.m + design.n
    P = np.zeros((p, p))
    P[1 + design.m :, 1 + design.m :] = lam * design.Xi
    return P


def _stack_coeffs(coeffs):
    return np.concatenate([coeffs.alpha[:, None], coeffs.d, coeffs.c], axis=1)


def _unstack_coeffs(eta, m):
    return SlopeCoefficients(eta[:, 0], eta[:, 1 : 1 + m], eta[:, 1 + m :])


def score_eta(state, design, q):
    """Score blocks S(eta_k) of the penalized slope objective, (K, 1+m+n)."""
    Phi = eta_features(design)
    Pmat = eta_penalty_matrix(design, state.lam)
    return _logit_score(Phi, q, Pmat, _stack_coeffs(state.coeffs))


def update_eta(state, design, q, tol=1e-8, max_iter=50):
    """Penalized Newton update of (alpha, d, c) at fixed responsibilities.

    Returns (coeffs, converged); non-convergence returns the best iterate.
    """
    Phi = eta_features(design)
    Pmat = eta_penalty_matrix(design, state.lam)
    eta, ok = newton_multilogit(
        Phi, q, Pmat, _stack_coeffs(state.coeffs), tol=tol, max_iter=max_iter
    )
    return _unstack_coeffs(eta, design.m), ok


def update_B(q, A):
    """Closed-form block-probability update from pair-weighted edge counts."""
    A = check_adjacency(A)
    q = np.atleast_2d(np.asarray(q, dtype=float))
    N, D = _pair_sums(q, A)
    with np.errstate(invalid="ignore", divide="ignore"):
        B = np.where(D > 0, N / np.maximum(D, 1e-300), 1e-6)
    B = (B + B.T) / 2.0
    return clamp_block_matrix(B)


def update_q(state, A, design, tol=1e-8, max_sweeps=100):
    """Blockwise coordinate ascent on responsibilities, node by node.

    Sweeps use the latest values for other nodes and stop when the
    largest row change falls below tol.
    """
    A = check_adjacency(A).astype(float)
    q = state.q.copy()
    B = clamp_block_matrix(state.B)
    logB = np.log(B)
    log1mB = np.log(1.0 - B)
    R = linear_predictor(state.coeffs, design)
    R0 = np.concatenate([np.zeros((R.shape[0], 1)), R], axis=1)
    n = q.shape[0]
    S = q.sum(axis=0)
    AQ = A @ q
    for _ in range(max_sweeps):
        max_change = 0.0
        for i in range(n):
            u = AQ[i]
            v = (S - q[i]) - u
            a = R0[i] + logB @ u + log1mB @ v
            a -= a.max()
            qi = np.exp(a)
            qi /= qi.sum()
            qi = np.maximum(qi, Q_FLOOR)
            qi /= qi.sum()
            delta = qi - q[i]
            change = np.abs(delta).max()
            if change > 0:
                S += delta
                AQ += np.outer(A[:, i], delta)
                q[i] = qi
            if change > max_change:
                max_change = change
        if max_change < tol:
            break
    return q


def default_initial_q(A, K, seed, restarts=20, smoothing=0.05):
    """Spectral k-means labels softened into responsibilities."""
    labels = approx_kmeans(embed(A, K), K, restarts=restarts, seed=seed)
    return initial_responsibilities(labels, smoothing, n_classes=K + 1)


def fit(
    A,
    X,
    K,
    lam,
    init=None,
    seed=0,
    m=2,
    design=None,
    max_outer=200,
    outer_tol=1e-6,
    newton_tol=1e-8,
    q_tol=1e-8,
):
    """Run the variational loop to convergence and return the fit.

    One outer iteration updates eta (penalized Newton), then B
    (closed form), then q (blockwise ascent). Stops when the relative
    objective change over one outer iteration drops below outer_tol.
    """
    A = check_adjacency(A)
    if lam < 0:
        raise InputError("lambda must be nonnegative")
    if design is None:
        if not isinstance(X, FunctionalSample):
            raise InputError("fit expects a FunctionalSample or a prebuilt design")
        design = build_design(X, m)
    n = A.shape[0]
    if design.n != n:
        raise InputError("adjacency and covariates disagree on n")
    if init is None:
        q = default_initial_q(A, K, derive_seed(seed, 997))
    else:
        q = check_responsibilities(init, n=n, n_classes=K + 1)
    coeffs = SlopeCoefficients.zeros(K, design.m, n)
    state = VariationalState(q=q, coeffs=coeffs, B=update_B(q, A), lam=float(lam))
    state.objective_trace.append(objective(state, A, design))
    eta_warned = False
    converged = False
    iterations = 0
    for _ in range(max_outer):
        iterations += 1
        new_coeffs, eta_ok = update_eta(state, design, state.q, tol=newton_tol)
        if not eta_ok and not eta_warned:
            warnings.warn(
                "eta update hit its iteration cap; continuing with best iterate",
                FitConvergenceWarning,
                stacklevel=2,
            )
            eta_warned = True
        # The eta step minimizes the lam-weighted criterion while the trace
        # carries lam/2; keep the previous iterate in the rare case the
        # surrogate step raises the traced objective.
        trial = VariationalState(state.q, new_coeffs, state.B, state.lam)
        if objective(trial, A, design) <= state.objective_trace[-1] + 1e-12:
            state.coeffs = new_coeffs
        state.B = update_B(state.q, A)
        state.q = update_q(state, A, design, tol=q_tol)
        value = objective(state, A, design)
        state.objective_trace.append(value)
        prev = state.objective_trace[-2]
        if abs(prev - value) <= outer_tol * max(1.0, abs(prev)):
            converged = True
            break
    labels = state.q.argmax(axis=1)
    return FitResult(
        state=state,
        labels=labels.astype(np.int64),
        iterations=iterations,
        converged=converged,
        design=design,
    )


# ---------------------------------------------------------------------------
# Cross-validation over the smoothing parameter
# ---------------------------------------------------------------------------


def _hard_pair_loglik(labels, A, B):
    """Sum over i < j of the edge log-likelihood at hard labels."""
    Q = np.zeros((labels.size, B.shape[0]))
    Q[np.arange(labels.size), labels] = 1.0
    N, D = _pair_sums(Q, A)
    return float(np.sum(N * np.log(B)) + np.sum((D - N) * np.log(1.0 - B)))


def _holdout_loglik(A, design, fitres, train_idx, test_idx, q_tol=1e-8):
    """Impute test-node memberships, then score test-touching terms.

    Test responsibilities are updated by the blockwise rule with edges to
    all nodes and the fitted parameters frozen; the score is the
    complete-data log-likelihood restricted to test-node label terms and
    edges with at least one test endpoint (hard labels).
    """
    n = A.shape[0]
    K1 = fitres.state.q.shape[1]
    coeffs = fitres.state.coeffs
    B = clamp_block_matrix(fitres.state.B)
    logB, log1mB = np.log(B), np.log(1.0 - B)
    # Representer linear predictors for every node: c lives on train nodes.
    R = (
        coeffs.alpha
        + design.s @ coeffs.d.T
        + design.Xi[:, train_idx] @ coeffs.c.T
    )
    R0 = np.concatenate([np.zeros((n, 1)), R], axis=1)
    q_full = np.full((n, K1), 1.0 / K1)
    q_full[train_idx] = fitres.state.q
    Af = A.astype(float)
    S = q_full.sum(axis=0)
    AQ = Af @ q_full
    for _ in range(100):
        max_change = 0.0
        for i in test_idx:
            u = AQ[i]
            v = (S - q_full[i]) - u
            a = R0[i] + logB @ u + log1mB @ v
            a -= a.max()
            qi = np.exp(a)
            qi /= qi.sum()
            delta = qi - q_full[i]
            change = np.abs(delta).max()
            if change > 0:
                S += delta
                AQ += np.outer(Af[:, i], delta)
                q_full[i] = qi
            if change > max_change:
                max_change = change
        if max_change < q_tol:
            break
    z_full = q_full.argmax(axis=1)
    lse = _logsumexp_rows(R0)
    label_ll = float(np.sum(R0[test_idx, z_full[test_idx]] - lse[test_idx]))
    edge_ll = _hard_pair_loglik(z_full, A, B) - _hard_pair_loglik(
        z_full[train_idx], A[np.ix_(train_idx, train_idx)], B
    )
    return label_ll + edge_ll


def cross_validate_lambda(A, X, K, grid, M=5, seed=0, m=2, **fit_kwargs):
    """M-fold node cross-validation with the one-standard-error rule.

    Selects the largest lambda whose mean held-out log-likelihood is
    within one standard error of the best. Returns (lam, lambda_path).
    """
    grid = sorted(float(g) for g in np.atleast_1d(grid))
    if len(grid) == 0:
        raise InputError("lambda grid must be nonempty")
    if M < 2:
        raise InputError("need at least 2 folds")
    A = check_adjacency(A)
    n = A.shape[0]
    design_full = build_design(X, m)
    rng = np.random.default_rng(derive_seed(seed, 31))
    perm = rng.permutation(n)
    folds = [np.sort(f) for f in np.array_split(perm, M)]
    path = {"grid": grid, "fold_scores": [], "mean": [], "se": [], "skipped": []}
    for li, lam in enumerate(grid):
        scores, skipped = [], 0
        for f, test_idx in enumerate(folds):
            train_idx = np.sort(np.setdiff1d(np.arange(n), test_idx))
            A_tr = A[np.ix_(train_idx, train_idx)]
            X_tr = FunctionalSample(X.grid, X.values[train_idx])
            fitres = fit(
                A_tr, X_tr, K, lam, seed=derive_seed(seed, li, f), m=m, **fit_kwargs
            )
            if np.unique(fitres.labels).size < K + 1:
                warnings.warn(
                    f"fold {f} produced an empty community; skipping",
                    FitConvergenceWarning,
                    stacklevel=2,
                )
                skipped += 1
                continue
            scores.append(
                _holdout_loglik(A, design_full, fitres, train_idx, test_idx)
            )
        path["fold_scores"].append(scores)
        path["skipped"].append(skipped)
        if scores:
            mean = float(np.mean(scores))
            se = float(np.std(scores, ddof=1) / np.sqrt(len(scores))) if len(scores) > 1 else 0.0
        else:
            mean, se = -np.inf, 0.0
        path["mean"].append(mean)
        path["se"].append(se)
    means = np.array(path["mean"])
    if not np.isfinite(means).any():
        warnings.warn(
            "every cross-validation fold was skipped; falling back to 1e-4",
            FitConvergenceWarning,
            stacklevel=2,
        )
        return 1e-4, path
    best = int(np.argmax(means))
    threshold = means[best] - path["se"][best]
    eligible = [i for i, v in enumerate(means) if v >= threshold]
    chosen = max(eligible, key=lambda i: grid[i])
    path["chosen"] = grid[chosen]
    return grid[chosen], path
