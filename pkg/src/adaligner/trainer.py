"""End-to-end training: step planning, analytic gradients, AdamW, gradient checks.

A step runs: encode the full batch -> score quality -> set theta -> modulate
weights -> filter -> sample neighbourhoods -> loss on the kept rows -> backprop
-> AdamW. Everything decided before the loss (theta, weights, kept rows,
neighbour sets, soft targets) is a per-step constant for differentiation.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .controller import ControllerConfig, ControllerState, QualityController, QualityReport, modulate_weights, quality_scores
from .data import SyntheticTag
from .encoders import (
    GraphContext,
    ModelParams,
    bag_matrix,
    gcn_backward,
    gcn_embed,
    text_backward,
    text_embed,
)
from .errors import ConfigError, InvalidParameterError, NonFiniteError
from .filtering import FilterConfig, FilterOutcome, filter_outcome, keep_all
from .losses import (
    LossBreakdown,
    LossConfig,
    LossWeights,
    aggregation_matrix,
    clip_loss_and_grad,
    neighbor_lists,
    sample_neighbors,
    soft_loss_and_grad,
    soft_target_matrix,
)
from .metrics import cross_modal_retrieval, link_auc, sample_non_edges, zero_shot_classify
from .optim import AdamWState, OptimizerConfig, adamw_step, warmup_lr
from .tensor import normalize_rows, normalize_rows_backward

log = logging.getLogger(__name__)

MODES = ("full", "clip_only", "no_assessment", "no_filter", "fixed_theta")
STREAMS = ("init", "shuffle", "neighbor", "filter")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    mode: str = "full"
    fixed_theta_value: float = 1.0
    hidden_dim: int = 32
    embed_dim: int = 16
    token_dim: int = 32

    def validate(self, controller: ControllerConfig) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {', '.join(MODES)}")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.mode == "fixed_theta" and not controller.theta_min <= self.fixed_theta_value <= controller.theta_max:
            raise ConfigError("fixed_theta_value must lie in [theta_min, theta_max]")


@dataclass(frozen=True)
class Configs:
    loss: LossConfig = field(default_factory=LossConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    filter: FilterConfig = field(default_factory=FilterConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> None:
        self.loss.validate()
        self.controller.validate()
        self.filter.validate()
        self.optimizer.validate()
        self.train.validate(self.controller)


def substreams(seed: int) -> dict[str, np.random.Generator]:
    """Independent named generators fanned out from one root seed."""
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(c) for name, c in zip(STREAMS, children)}


class TrainingData:
    """A dataset with the encoder-side constants precomputed."""

    def __init__(self, tag: SyntheticTag):
        self.tag = tag
        self.ctx = GraphContext.build(tag.n_nodes, tag.edges, tag.features)
        self.C, self.empty = bag_matrix(tag.docs, tag.vocab_size)
        self.prompt_C, self.prompt_empty = bag_matrix(tag.class_prompts, tag.vocab_size)
        self.nbrs = neighbor_lists(tag.n_nodes, tag.edges)
        self.noise_mask = tag.noise_mask
        self.labels = tag.labels

    @property
    def feature_dim(self) -> int:
        return self.tag.features.shape[1]

    def init_params(self, rng, cfg: TrainConfig) -> ModelParams:
        return ModelParams.init(rng, d_f=self.feature_dim, d_h=cfg.hidden_dim, d=cfg.embed_dim,
                                vocab_size=self.tag.vocab_size, d_t=cfg.token_dim)


# -- per-step plan -----------------------------------------------------------


@dataclass
class StepPlan:
    batch_nodes: np.ndarray
    kept_nodes: np.ndarray
    neighbors: list[np.ndarray]
    weights: LossWeights
    report: QualityReport
    state: ControllerState
    outcome: FilterOutcome


def controller_for(cfgs: Configs) -> QualityController:
    mode = cfgs.train.mode
    if mode in ("clip_only", "no_assessment"):
        return QualityController(cfgs.controller, pinned=cfgs.controller.theta0)
    if mode == "fixed_theta":
        return QualityController(cfgs.controller, pinned=cfgs.train.fixed_theta_value)
    return QualityController(cfgs.controller)


def mode_weights(theta: float, cfgs: Configs) -> LossWeights:
    if cfgs.train.mode == "clip_only":
        return LossWeights(beta=0.0, gamma=0.0, mu=1.0, soft=0.0)
    return modulate_weights(theta, cfgs.controller, cfgs.loss)


def filtering_enabled(cfgs: Configs) -> bool:
    return cfgs.train.mode not in ("clip_only", "no_filter")


def embed_pairs(params: ModelParams, data: TrainingData, nodes) -> tuple[np.ndarray, np.ndarray]:
    G, _ = gcn_embed(params.graph, data.ctx, nodes)
    T, _ = text_embed(params.text, data.C[nodes], data.empty[nodes])
    return G, T


def plan_step(params: ModelParams, data: TrainingData, batch_nodes, controller: QualityController,
              cfgs: Configs, rngs: dict[str, np.random.Generator]) -> StepPlan:
    batch_nodes = np.asarray(batch_nodes, dtype=np.int64)
    G, T = embed_pairs(params, data, batch_nodes)
    report = quality_scores(G @ T.T)
    if not np.all(np.isfinite(report.per_sample)):
        raise NonFiniteError(f"non-finite quality scores for batch starting at node {int(batch_nodes[0])}")
    state = controller.observe(report)
    weights = mode_weights(state.theta, cfgs)
    if filtering_enabled(cfgs):
        outcome = filter_outcome(report, state, cfgs.filter, cfgs.controller, rngs["filter"])
    else:
        outcome = keep_all(batch_nodes.size)
    kept = batch_nodes[outcome.kept_indices]
    neighbors = sample_neighbors(kept, data.nbrs, cfgs.loss.neighbor_cap, rngs["neighbor"])
    return StepPlan(batch_nodes, kept, neighbors, weights, report, state, outcome)


# -- objective and gradients -------------------------------------------------


@dataclass
class SoftTargets:
    P_gg: np.ndarray
    P_tt: np.ndarray


def objective(params: ModelParams, data: TrainingData, plan: StepPlan, cfg: LossConfig,
              targets: SoftTargets | None = None, need_grad: bool = True):
    """Total loss on the kept rows; returns ``(breakdown, grads or None, targets)``."""
    kept = plan.kept_nodes
    n = kept.size
    extra = sorted({int(u) for nb in plan.neighbors for u in nb} - {int(v) for v in kept})
    U = np.concatenate([kept, np.array(extra, dtype=np.int64)])
    pos = {int(v): i for i, v in enumerate(U)}

    G_U, gcache = gcn_embed(params.graph, data.ctx, U)
    T_U, tcache = text_embed(params.text, data.C[U], data.empty[U])
    G, T = G_U[:n], T_U[:n]
    w = plan.weights
    tau = cfg.tau

    S_gt = G @ T.T
    l_clip, dS = clip_loss_and_grad(S_gt, tau)
    dS = w.mu * dS

    l_soft = 0.0
    if w.soft:
        if targets is None:
            targets = SoftTargets(soft_target_matrix(G @ G.T, w.beta, tau), soft_target_matrix(T @ T.T, w.beta, tau))
        l_soft, dS_soft = soft_loss_and_grad(S_gt, targets.P_gg, targets.P_tt, tau)
        dS = dS + w.soft * dS_soft

    A = aggregation_matrix(range(n), [[pos[int(u)] for u in nb] for nb in plan.neighbors], U.size)
    Gnb, gn_norm, gn_deg = normalize_rows(A @ G_U)
    Tnb, tn_norm, tn_deg = normalize_rows(A @ T_U)
    l_sub, dS_sub = clip_loss_and_grad(Gnb @ Tnb.T, tau)

    breakdown = LossBreakdown(
        total=float(w.soft * l_soft + w.gamma * l_sub + w.mu * l_clip),
        clip=float(l_clip), soft=float(l_soft), sub=float(l_sub),
    )
    if not need_grad:
        return breakdown, None, targets

    dG_U = np.zeros_like(G_U)
    dT_U = np.zeros_like(T_U)
    dG_U[:n] += dS @ T
    dT_U[:n] += dS.T @ G
    if w.gamma:
        dS_sub = w.gamma * dS_sub
        dGnb = normalize_rows_backward(Gnb, gn_norm, gn_deg, dS_sub @ Tnb)
        dTnb = normalize_rows_backward(Tnb, tn_norm, tn_deg, dS_sub.T @ Gnb)
        dG_U += A.T @ dGnb
        dT_U += A.T @ dTnb

    grads = ModelParams(
        gcn_backward(params.graph, data.ctx, gcache, dG_U),
        text_backward(params.text, tcache, dT_U),
    )
    return breakdown, grads, targets


def grad_norm(grads: ModelParams) -> float:
    return math.sqrt(sum(float(np.vdot(g, g)) for _, g in grads.named_arrays()))


def check_gradients(loss_fn, params: ModelParams, grads: ModelParams, h: float = 1e-4,
                    max_entries: int | None = None, rng=None) -> float:
    """Max relative error between ``grads`` and central differences of ``loss_fn``.

    The denominator per entry is ``max(|analytic|, |numeric|, 1e-8)``. With
    ``max_entries`` set, a random subset of that many entries is checked.
    """
    if not h > 0:
        raise InvalidParameterError(f"step h must be positive, got {h}")
    entries = [(name, i) for name, arr in params.named_arrays() for i in range(arr.size)]
    if max_entries is not None and len(entries) > max_entries:
        rng = rng if rng is not None else np.random.default_rng(0)
        pick = rng.choice(len(entries), size=max_entries, replace=False)
        entries = [entries[k] for k in sorted(pick)]
    worst = 0.0
    for name, i in entries:
        arr = params.get(name).reshape(-1)
        orig = arr[i]
        arr[i] = orig + h
        up = loss_fn(params)
        arr[i] = orig - h
        down = loss_fn(params)
        arr[i] = orig
        numeric = (up - down) / (2.0 * h)
        analytic = float(grads.get(name).reshape(-1)[i])
        err = abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)
        worst = max(worst, err)
    return worst


def gradcheck_problem(params: ModelParams, data: TrainingData, batch_nodes, cfgs: Configs, seed: int):
    """Freeze one step's plan and soft targets; return ``(loss_fn, analytic_grads)``.

    ``loss_fn`` replays the same kept rows, neighbour sets, weights and targets,
    so it is a deterministic function of the parameters.
    """
    rngs = substreams(seed)
    plan = plan_step(params, data, batch_nodes, controller_for(cfgs), cfgs, rngs)
    _, grads, targets = objective(params, data, plan, cfgs.loss)

    def loss_fn(p: ModelParams) -> float:
        return objective(p, data, plan, cfgs.loss, targets=targets, need_grad=False)[0].total

    return loss_fn, grads


def finite_diff_check(params: ModelParams, data: TrainingData, batch_nodes, cfgs: Configs,
                      h: float = 1e-4, seed: int = 0, max_entries: int | None = None) -> float:
    if not h > 0:
        raise InvalidParameterError(f"step h must be positive, got {h}")
    loss_fn, grads = gradcheck_problem(params, data, batch_nodes, cfgs, seed)
    return check_gradients(loss_fn, params, grads, h, max_entries, np.random.default_rng(seed))


# -- training loop ----------------------------------------------------------


@dataclass
class StepRecord:
    step: int
    epoch: int
    M_B: float
    M0: float
    sigma0_sq: float
    theta: float
    theta_raw: float
    beta: float
    gamma: float
    mu: float
    rho: float
    n_keep: int
    loss: LossBreakdown
    grad_norm: float
    dropped_nodes: np.ndarray
    n_dropped_noisy: int

    @property
    def n_dropped(self) -> int:
        return int(self.dropped_nodes.size)


class BoundsViolation(AssertionError):
    pass


def assert_bounds(state: ControllerState, weights: LossWeights, cfgs: Configs) -> None:
    c = cfgs.controller
    if not -2.0 <= state.M0 <= 2.0:
        raise BoundsViolation(f"M0={state.M0} outside [-2, 2]")
    if not c.theta_min <= state.theta <= c.theta_max:
        raise BoundsViolation(f"theta={state.theta} outside [{c.theta_min}, {c.theta_max}]")
    if state.sigma0_sq < 0:
        raise BoundsViolation(f"sigma0_sq={state.sigma0_sq} negative")
    if cfgs.train.mode == "clip_only":
        return
    for name, rng_ in (("beta", c.beta_range), ("gamma", c.gamma_range), ("mu", c.mu_range)):
        v = getattr(weights, name)
        if not rng_[0] <= v <= rng_[1]:
            raise BoundsViolation(f"{name}={v} outside {rng_}")


class Trainer:
    """Mutable training state for one run; all randomness comes from ``seed``."""

    def __init__(self, data: TrainingData, cfgs: Configs, seed: int, params: ModelParams | None = None,
                 total_steps: int | None = None):
        cfgs.validate()
        self.data = data
        self.cfgs = cfgs
        self.seed = seed
        self.rngs = substreams(seed)
        init = data.init_params(self.rngs["init"], cfgs.train)
        self.params = params if params is not None else init
        self.controller = controller_for(cfgs)
        self.opt = AdamWState(self.params)
        self.step_index = 0
        self.total_steps = total_steps if total_steps is not None else cfgs.optimizer.max_epochs * batches_per_epoch(
            data.tag.train.size, cfgs.train.batch_size)

    def train_step(self, batch_nodes, epoch: int = 0) -> StepRecord:
        plan = plan_step(self.params, self.data, batch_nodes, self.controller, self.cfgs, self.rngs)
        assert_bounds(plan.state, plan.weights, self.cfgs)
        breakdown, grads, _ = objective(self.params, self.data, plan, self.cfgs.loss)
        gnorm = grad_norm(grads)
        if not (math.isfinite(breakdown.total) and math.isfinite(gnorm)):
            raise NonFiniteError(
                f"step {self.step_index}: loss={breakdown.total} grad_norm={gnorm} "
                f"theta={plan.state.theta} n_keep={plan.outcome.n_keep}"
            )
        lr = warmup_lr(self.step_index, max(self.total_steps, 1), self.cfgs.optimizer)
        adamw_step(self.params, grads, self.opt, lr, self.cfgs.optimizer)
        dropped = plan.batch_nodes[plan.outcome.dropped_indices]
        rec = StepRecord(
            step=self.step_index,
            epoch=epoch,
            M_B=plan.report.batch_mean,
            M0=plan.state.M0,
            sigma0_sq=plan.state.sigma0_sq,
            theta=plan.state.theta,
            theta_raw=plan.state.theta_raw,
            beta=plan.weights.beta,
            gamma=plan.weights.gamma,
            mu=plan.weights.mu,
            rho=plan.outcome.rho_effective,
            n_keep=plan.outcome.n_keep,
            loss=breakdown,
            grad_norm=gnorm,
            dropped_nodes=dropped,
            n_dropped_noisy=int(self.data.noise_mask[dropped].sum()),
        )
        self.step_index += 1
        return rec


def batches_per_epoch(n_train: int, batch_size: int) -> int:
    full, rest = divmod(n_train, batch_size)
    return full + (1 if rest >= 2 else 0)


def epoch_batches(train_nodes, batch_size: int, rng) -> list[np.ndarray]:
    order = np.asarray(train_nodes)[rng.permutation(len(train_nodes))]
    out = [order[i:i + batch_size] for i in range(0, order.size, batch_size)]
    return [b for b in out if b.size >= 2]


# -- evaluation --------------------------------------------------------------


def class_embeddings(params: ModelParams, data: TrainingData) -> np.ndarray:
    return text_embed(params.text, data.prompt_C, data.prompt_empty)[0]


def zero_shot_accuracy(params: ModelParams, data: TrainingData, nodes) -> float:
    G, _ = gcn_embed(params.graph, data.ctx, nodes)
    return zero_shot_classify(G, class_embeddings(params, data), data.labels[nodes]).accuracy


def clean_docs_matrix(data: TrainingData, nodes):
    """Bag rows for ``nodes``; evaluation splits never carry injected noise."""
    return data.C[nodes], data.empty[nodes]


def evaluate(params: ModelParams, data: TrainingData, split: str, rng) -> dict:
    tag = data.tag
    nodes = tag.splits[split]
    G_all, _ = gcn_embed(params.graph, data.ctx, np.arange(tag.n_nodes))
    G = G_all[nodes]
    C, empty = clean_docs_matrix(data, nodes)
    T, _ = text_embed(params.text, C, empty)
    cls = zero_shot_classify(G, class_embeddings(params, data), data.labels[nodes])

    in_split = np.zeros(tag.n_nodes, dtype=bool)
    in_split[nodes] = True
    E = tag.edges
    pos = E[in_split[E[:, 0]] | in_split[E[:, 1]]] if E.size else E
    out = {"split": split, "accuracy": cls.accuracy, "macro_f1": cls.macro_f1}
    if len(pos):
        neg = sample_non_edges(tag.n_nodes, E, len(pos), rng, anchors=nodes)
        out["link_auc"] = link_auc(G_all, pos, neg) if len(neg) else float("nan")
    else:
        out["link_auc"] = float("nan")
    retrieval = cross_modal_retrieval(G, T)
    scoped = cross_modal_retrieval(G, T, classes=data.labels[nodes])
    for direction in ("n2t", "t2n"):
        for k, v in retrieval[direction].items():
            out[f"{direction}_{k}"] = v
        for k, v in scoped[direction].items():
            out[f"{direction}_class_{k}"] = v
    return out


# -- full runs ---------------------------------------------------------------


@dataclass
class RunArtifacts:
    records: list[StepRecord]
    epoch_evals: list[dict]
    checkpoints: dict[str, ModelParams]
    final_eval: dict
    init_eval: dict
    best_epoch: int
    backend: str = kernels.BACKEND

    def dropped_by_epoch(self) -> list[np.ndarray]:
        n_epochs = max((r.epoch for r in self.records), default=-1) + 1
        out = [[] for _ in range(n_epochs)]
        for r in self.records:
            out[r.epoch].extend(r.dropped_nodes.tolist())
        return [np.array(x, dtype=np.int64) for x in out]

    def mean_theta(self) -> float:
        return float(np.mean([r.theta for r in self.records])) if self.records else float("nan")


def eval_rng(seed: int) -> np.random.Generator:
    """Fresh generator for link-prediction negatives, identical for every checkpoint of a run."""
    return np.random.default_rng(np.random.SeedSequence([seed, 1]))


def run_training(data: TrainingData | SyntheticTag, cfgs: Configs, seed: int, progress=None) -> RunArtifacts:
    """Epoch loop with early stopping on clean validation zero-shot accuracy."""
    if isinstance(data, SyntheticTag):
        data = TrainingData(data)
    cfgs.validate()
    tag = data.tag
    bs = cfgs.train.batch_size
    if tag.train.size < bs:
        raise ConfigError(f"training split has {tag.train.size} nodes, fewer than one batch of {bs}")
    trainer = Trainer(data, cfgs, seed)
    checkpoints = {"init": trainer.params.copy()}
    init_eval = evaluate(trainer.params, data, "test", eval_rng(seed))
    records: list[StepRecord] = []
    epoch_evals: list[dict] = []
    best_acc = -1.0
    best_epoch = -1
    best_params = trainer.params.copy()
    stale = 0
    for epoch in range(cfgs.optimizer.max_epochs):
        first = len(records)
        for batch in epoch_batches(tag.train, bs, trainer.rngs["shuffle"]):
            records.append(trainer.train_step(batch, epoch))
        ep = records[first:]
        val_acc = zero_shot_accuracy(trainer.params, data, tag.splits["val"])
        n_drop = sum(r.n_dropped for r in ep)
        n_noisy = sum(r.n_dropped_noisy for r in ep)
        epoch_evals.append({
            "epoch": epoch,
            "val_accuracy": val_acc,
            "mean_loss": float(np.mean([r.loss.total for r in ep])),
            "mean_theta": float(np.mean([r.theta for r in ep])),
            "n_dropped": n_drop,
            "n_dropped_noisy": n_noisy,
        })
        log.debug("epoch %d val_acc=%.4f theta=%.4f", epoch, val_acc, epoch_evals[-1]["mean_theta"])
        if progress is not None:
            progress(epoch, epoch_evals[-1])
        if val_acc > best_acc:
            best_acc, best_epoch, stale = val_acc, epoch, 0
            best_params = trainer.params.copy()
        else:
            stale += 1
            if stale >= cfgs.optimizer.patience:
                log.info("early stop after epoch %d (best %d)", epoch, best_epoch)
                break
    if records:
        checkpoints["best"] = best_params
        checkpoints["final"] = trainer.params.copy()
    final_params = checkpoints.get("best", checkpoints["init"])
    final_eval = evaluate(final_params, data, "test", eval_rng(seed))
    return RunArtifacts(records, epoch_evals, checkpoints, final_eval, init_eval, best_epoch)
