"""Stability checks for the quality controller.

Two kinds of tooling live here: a scalar simulator that drives the controller
with a synthetic margin signal, and validators that re-derive controller
quantities from a run's telemetry and confirm they stayed inside their bounds.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .controller import ControllerConfig, QualityController, QualityReport
from .errors import InsufficientDataError, InvalidParameterError

MARGIN_BOUND = 2.0


@dataclass
class ThetaTrajectory:
    steps: np.ndarray
    theta: np.ndarray
    M_B: np.ndarray
    M0: np.ndarray

    def tail_mean(self, n: int) -> float:
        return float(self.theta[-n:].mean())


def negative_drift(c: float = 0.5, k: float = 0.5, theta_star: float = 1.2, noise: float = 0.05):
    """Batch margin that falls as theta moves past ``theta_star``."""
    def drift(theta: float, z: float) -> float:
        return c - k * (theta - theta_star) + noise * z
    return drift


def simulate_controller(drift, cfg: ControllerConfig, update_rule: str | None = None, steps: int = 5000,
                        seed: int = 0, init_M0: float | None = None) -> ThetaTrajectory:
    """Run the controller for ``steps`` steps against ``drift(theta, z)``.

    ``z`` is a standard normal draw; the returned margin is clipped to the
    range a cosine margin can take. Under the additive rule the quantity
    ``(theta - theta*) - alpha * (M0 - c) / (1 - momentum)`` is conserved by
    the linear drift model, so where theta settles depends on ``init_M0``.
    """
    if steps < 1:
        raise InvalidParameterError(f"steps must be positive, got {steps}")
    if update_rule is not None:
        cfg = replace(cfg, update_rule=update_rule)
    if init_M0 is not None:
        cfg = replace(cfg, init_M0=float(init_M0))
    cfg.validate()
    rng = np.random.default_rng(seed)
    ctrl = QualityController(cfg)
    thetas = np.empty(steps)
    margins = np.empty(steps)
    m0s = np.empty(steps)
    theta = cfg.theta0
    for t in range(steps):
        m = float(np.clip(drift(theta, float(rng.standard_normal())), -MARGIN_BOUND, MARGIN_BOUND))
        state = ctrl.observe(QualityReport(np.array([m]), m, 0.0))
        theta = state.theta
        thetas[t], margins[t], m0s[t] = theta, m, state.M0
    return ThetaTrajectory(np.arange(steps), thetas, margins, m0s)


def lyapunov_series(trajectories, theta_star: float) -> np.ndarray:
    """Monte Carlo estimate of E[(theta_t - theta*)^2] across trajectories."""
    th = np.stack([tr.theta for tr in trajectories])
    return ((th - theta_star) ** 2).mean(axis=0)


def lyapunov_recursion(v0: float, contraction: float, floor: float, steps: int) -> np.ndarray:
    """Iterate V <- (1 - c) V + C; converges to C / c."""
    out = np.empty(steps)
    v = v0
    for t in range(steps):
        v = (1 - contraction) * v + floor
        out[t] = v
    return out


# -- telemetry validators ----------------------------------------------------


@dataclass
class Violation:
    row: int
    field: str
    value: float
    bound: tuple

    def to_dict(self) -> dict:
        return {"row": self.row, "field": self.field, "value": self.value, "bound": list(self.bound)}


@dataclass
class BoundednessReport:
    passed: bool
    n_rows: int
    violations: list[Violation] = field(default_factory=list)
    theta_raw_min: float = float("nan")
    theta_raw_max: float = float("nan")
    headroom: tuple | None = None

    def to_dict(self) -> dict:
        return {
            "passed": self.passed, "n_rows": self.n_rows,
            "violations": [v.to_dict() for v in self.violations],
            "theta_raw_min": self.theta_raw_min, "theta_raw_max": self.theta_raw_max,
            "headroom": list(self.headroom) if self.headroom else None,
        }


def check_boundedness(rows: list[dict], cfg: ControllerConfig, mode: str = "full",
                      margin_bound: float = MARGIN_BOUND) -> BoundednessReport:
    """Check every clamped quantity in ``rows`` and recompute unclamped theta.

    In ``clip_only`` mode the loss weights are a fixed preset rather than a
    clamped function of theta, so they are checked for exact values instead.
    """
    violations: list[Violation] = []

    def need(i, name, v, lo, hi):
        if not (lo <= v <= hi):
            violations.append(Violation(i, name, float(v), (lo, hi)))

    raw = []
    prev_M0 = cfg.init_M0
    for i, r in enumerate(rows):
        need(i, "M_B", r["M_B"], -margin_bound, margin_bound)
        need(i, "M0", r["M0"], -margin_bound, margin_bound)
        need(i, "sigma0_sq", r["sigma0_sq"], 0.0, float("inf"))
        need(i, "theta", r["theta"], cfg.theta_min, cfg.theta_max)
        if mode == "clip_only":
            for name, want in (("beta", 0.0), ("gamma", 0.0), ("mu", 1.0)):
                if r[name] != want:
                    violations.append(Violation(i, name, float(r[name]), (want, want)))
        else:
            for name, rng_ in (("beta", cfg.beta_range), ("gamma", cfg.gamma_range), ("mu", cfg.mu_range)):
                need(i, name, r[name], *rng_)
        raw.append(cfg.theta0 + cfg.alpha * (r["M_B"] - prev_M0))
        prev_M0 = r["M0"]
    headroom = None
    if cfg.update_rule == "absolute" and rows:
        # |M_B - M0| <= 2 * margin_bound, so unclamped theta stays within 2 * bound * alpha of theta0
        span = 2 * margin_bound * cfg.alpha
        headroom = (cfg.theta0 - span, cfg.theta0 + span)
        for i, v in enumerate(raw):
            need(i, "theta_raw", v, *headroom)
    return BoundednessReport(
        passed=not violations, n_rows=len(rows), violations=violations,
        theta_raw_min=float(min(raw)) if raw else float("nan"),
        theta_raw_max=float(max(raw)) if raw else float("nan"),
        headroom=headroom,
    )


@dataclass
class ConvergenceReport:
    passed: bool
    window: int
    grad_norm_first: float
    grad_norm_last: float
    loss_first: float
    loss_last: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def check_convergence(rows: list[dict], window: int = 20) -> ConvergenceReport:
    """Compare the first and last ``window`` steps of gradient norm and loss."""
    if window < 1:
        raise InvalidParameterError(f"window must be positive, got {window}")
    if len(rows) < 2 * window:
        raise InsufficientDataError(f"need at least {2 * window} telemetry rows for window {window}, got {len(rows)}")
    g = np.array([r["grad_norm"] for r in rows])
    loss = np.array([r["loss_total"] for r in rows])
    rep = ConvergenceReport(
        passed=False, window=window,
        grad_norm_first=float(g[:window].mean()), grad_norm_last=float(g[-window:].mean()),
        loss_first=float(loss[:window].mean()), loss_last=float(loss[-window:].mean()),
    )
    rep.passed = rep.grad_norm_last < rep.grad_norm_first and rep.loss_last <= rep.loss_first
    return rep


def validation_report(rows: list[dict], cfg: ControllerConfig, mode: str, window: int = 20) -> dict:
    bounded = check_boundedness(rows, cfg, mode)
    try:
        conv = check_convergence(rows, window).to_dict()
    except InsufficientDataError as exc:
        conv = {"passed": None, "reason": str(exc)}
    return {"boundedness": bounded.to_dict(), "convergence": conv, "passed": bounded.passed}
