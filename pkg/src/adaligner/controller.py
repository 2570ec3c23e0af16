"""Batch quality assessment, EMA statistics and the scalar controller theta.

Per step the controller (1) scores the full batch, (2) sets theta from the
batch margin against the *previous* EMA mean, then (3) folds the batch into
the EMA mean and variance.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, InvalidBatchError
from .losses import LossConfig, LossWeights


@dataclass(frozen=True)
class ControllerConfig:
    theta0: float = 1.0
    alpha: float = 0.7
    momentum: float = 0.9
    theta_min: float = 0.1
    theta_max: float = 1.9
    beta_range: tuple[float, float] = (0.1, 0.9)
    gamma_range: tuple[float, float] = (0.1, 1.9)
    mu_range: tuple[float, float] = (0.1, 1.9)
    # "absolute": theta = theta0 + alpha*(M_B - M0); "additive": theta += alpha*(M_B - M0)
    update_rule: str = "absolute"
    init_M0: float = 0.0
    init_sigma0_sq: float = 1.0

    def validate(self) -> None:
        if not self.theta_min > -1.0:
            raise ConfigError("theta_min must exceed -1 so mu(theta) stays finite")
        if not self.theta_min <= self.theta0 <= self.theta_max:
            raise ConfigError("theta0 must lie in [theta_min, theta_max]")
        if not 0.0 <= self.momentum <= 1.0:
            raise ConfigError("momentum must lie in [0, 1]")
        if self.update_rule not in ("absolute", "additive"):
            raise ConfigError(f"unknown update_rule {self.update_rule!r}")
        for name in ("beta_range", "gamma_range", "mu_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} is empty")


@dataclass(frozen=True)
class ControllerState:
    M0: float
    sigma0_sq: float
    theta: float
    step_count: int = 0
    theta_raw: float = float("nan")

    @classmethod
    def initial(cls, cfg: ControllerConfig) -> "ControllerState":
        return cls(M0=cfg.init_M0, sigma0_sq=cfg.init_sigma0_sq, theta=cfg.theta0, theta_raw=cfg.theta0)


@dataclass(frozen=True)
class QualityReport:
    per_sample: np.ndarray
    batch_mean: float
    batch_var: float


def quality_scores(S_gt) -> QualityReport:
    """Per-sample margin ``S_ii - mean_{j != i} S_ij`` and its batch statistics."""
    S = np.asarray(S_gt, dtype=np.float64)
    n = S.shape[0]
    if S.ndim != 2 or S.shape[1] != n:
        raise InvalidBatchError(f"similarity matrix must be square, got {S.shape}")
    if n < 2:
        raise InvalidBatchError("quality scores need at least two samples per batch")
    diag = np.diag(S)
    off_mean = (S.sum(axis=1) - diag) / (n - 1)
    M = diag - off_mean
    return QualityReport(per_sample=M, batch_mean=float(M.mean()), batch_var=float(M.var()))


def ema_update(state: ControllerState, report: QualityReport, cfg: ControllerConfig) -> ControllerState:
    m = cfg.momentum
    return replace(
        state,
        M0=m * state.M0 + (1.0 - m) * report.batch_mean,
        sigma0_sq=m * state.sigma0_sq + (1.0 - m) * report.batch_var,
        step_count=state.step_count + 1,
    )


def controller_step(state: ControllerState, report: QualityReport, cfg: ControllerConfig) -> ControllerState:
    """Compute theta for this batch from the pre-update EMA mean."""
    deviation = report.batch_mean - state.M0
    if cfg.update_rule == "additive":
        raw = state.theta + cfg.alpha * deviation
    else:
        raw = cfg.theta0 + cfg.alpha * deviation
    theta = float(np.clip(raw, cfg.theta_min, cfg.theta_max))
    return replace(state, theta=theta, theta_raw=float(raw))


def _clamp(x: float, bounds: tuple[float, float]) -> float:
    return float(min(max(x, bounds[0]), bounds[1]))


def modulate_weights(theta: float, cfg: ControllerConfig, loss_cfg: LossConfig) -> LossWeights:
    return LossWeights(
        beta=_clamp(theta * loss_cfg.beta0, cfg.beta_range),
        gamma=_clamp(theta * loss_cfg.gamma0, cfg.gamma_range),
        mu=_clamp(loss_cfg.mu0 / (1.0 + theta), cfg.mu_range),
    )


class QualityController:
    """Owns a :class:`ControllerState` for one training loop.

    ``pinned`` fixes theta at a constant (frozen at theta0 or a fixed value)
    while the EMA statistics keep tracking the batches, since the filter is
    centred on them.
    """

    def __init__(self, cfg: ControllerConfig, pinned: float | None = None):
        cfg.validate()
        self.cfg = cfg
        self.pinned = pinned
        self.state = ControllerState.initial(cfg)
        if pinned is not None:
            self.state = replace(self.state, theta=pinned, theta_raw=pinned)

    def observe(self, report: QualityReport) -> ControllerState:
        if self.pinned is None:
            stepped = controller_step(self.state, report, self.cfg)
        else:
            stepped = replace(self.state, theta=self.pinned, theta_raw=self.pinned)
        self.state = ema_update(stepped, report, self.cfg)
        return self.state
