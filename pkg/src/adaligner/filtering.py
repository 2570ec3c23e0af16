"""Quality-driven stochastic sample filtering.

Samples whose margin sits near the historical mean get the largest Gaussian
weight; ``N_keep`` distinct samples are then drawn by sequential weighted
sampling without replacement.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .controller import ControllerConfig, ControllerState, QualityReport
from .errors import ConfigError
from .losses import EmbeddingBatch


@dataclass(frozen=True)
class FilterConfig:
    rho0: float = 0.9
    lambda_sens: float = 0.5
    rho_min: float = 0.5
    sigma_floor: float = 1e-3

    def validate(self) -> None:
        if not 0.0 < self.rho0 <= 1.0:
            raise ConfigError("rho0 must lie in (0, 1]")
        if not 0.0 < self.rho_min <= 1.0:
            raise ConfigError("rho_min must lie in (0, 1]")
        if not self.sigma_floor > 0:
            raise ConfigError("sigma_floor must be positive")


@dataclass
class FilterOutcome:
    kept_indices: np.ndarray
    dropped_indices: np.ndarray
    weights: np.ndarray
    probabilities: np.ndarray
    n_keep: int
    rho_effective: float


def sample_weights(per_sample_M, M0: float, sigma: float) -> np.ndarray:
    z = (np.asarray(per_sample_M, dtype=np.float64) - M0) / sigma
    return np.exp(-0.5 * z * z)


def weight_probabilities(w) -> np.ndarray:
    w = np.asarray(w, dtype=np.float64)
    total = w.sum()
    if total <= 0.0:  # every weight underflowed
        return np.full(w.shape, 1.0 / w.size)
    return w / total


def retention(theta: float, batch_size: int, cfg: FilterConfig, controller_cfg: ControllerConfig) -> tuple[float, int]:
    rho = cfg.rho0 + cfg.lambda_sens * (theta - controller_cfg.theta0)
    rho = float(min(max(rho, cfg.rho_min), 1.0))
    # the tiny slack keeps products like 0.95 * 20 from flooring to 18
    n_keep = max(1, math.floor(rho * batch_size + 1e-9))
    return rho, min(n_keep, batch_size)


def filter_sigma(state: ControllerState, cfg: FilterConfig) -> float:
    return max(math.sqrt(max(state.sigma0_sq, 0.0)), cfg.sigma_floor)


def select(weights, n_keep: int, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices of ``n_keep`` weighted draws without replacement."""
    n = len(weights)
    if n_keep >= n:
        return np.arange(n, dtype=np.int64)
    uniforms = rng.random(n_keep)
    return np.sort(kernels.sample_without_replacement(np.asarray(weights, dtype=np.float64), n_keep, uniforms))


def filter_outcome(report: QualityReport, state: ControllerState, cfg: FilterConfig,
                   controller_cfg: ControllerConfig, rng) -> FilterOutcome:
    n = len(report.per_sample)
    w = sample_weights(report.per_sample, state.M0, filter_sigma(state, cfg))
    rho, n_keep = retention(state.theta, n, cfg, controller_cfg)
    kept = select(w, n_keep, rng)
    mask = np.ones(n, dtype=bool)
    mask[kept] = False
    return FilterOutcome(
        kept_indices=kept,
        dropped_indices=np.flatnonzero(mask),
        weights=w,
        probabilities=weight_probabilities(w),
        n_keep=n_keep,
        rho_effective=rho,
    )


def filter_batch(batch: EmbeddingBatch, report: QualityReport, state: ControllerState, cfg: FilterConfig,
                 controller_cfg: ControllerConfig, rng) -> tuple[FilterOutcome, EmbeddingBatch]:
    outcome = filter_outcome(report, state, cfg, controller_cfg, rng)
    return outcome, batch.subset(outcome.kept_indices)


def keep_all(n: int) -> FilterOutcome:
    """Outcome used when filtering is disabled."""
    w = np.ones(n)
    return FilterOutcome(np.arange(n, dtype=np.int64), np.empty(0, dtype=np.int64), w, w / n, n, 1.0)
