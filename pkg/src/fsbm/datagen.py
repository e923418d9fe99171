"""End-to-end synthetic dataset generation and seed derivation."""

from dataclasses import dataclass

import numpy as np

from .curves import (
    FunctionalSample,
    GenerationConfig,
    assign_labels,
    simulate_covariates,
    true_slope,
)
from .network import sample_sbm


def derive_seed(master, *key):
    """Stable 64-bit child seed for (master, key...); order-independent workers."""
    ss = np.random.SeedSequence(entropy=int(master), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class SimulatedData:
    covariates: FunctionalSample
    labels: np.ndarray
    adjacency: np.ndarray
    config: GenerationConfig
    beta0: np.ndarray  # true slope on the covariate grid


def generate_dataset(cfg):
    """Covariates, logistic labels, and SBM edges from one config.

    Sub-draws (curves, labels, edges) use independent derived seeds so a
    single integer reproduces the whole dataset.
    """
    X = simulate_covariates(
        GenerationConfig(
            n=cfg.n, T=cfg.T, alpha0=cfg.alpha0, tau=cfg.tau,
            seed=derive_seed(cfg.seed, 0), block=cfg.block, rho=cfg.rho,
        )
    )
    beta0 = true_slope(X.grid, cfg.tau)
    z = assign_labels(X, cfg.alpha0, beta0, derive_seed(cfg.seed, 1))
    A = sample_sbm(z, cfg.block, derive_seed(cfg.seed, 2))
    return SimulatedData(X, z, A, cfg, beta0)
