"""Alignment losses: one-to-one InfoNCE, soft many-to-many, subgraph-text."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import kernels
from .errors import InvalidParameterError, ShapeError
from .tensor import KL_EPS, l2_normalize, normalize_rows, softmax_row, softmax_rows

DEFAULT_TAU = 0.379


@dataclass
class EmbeddingBatch:
    node_ids: np.ndarray
    g_hat: np.ndarray
    t_hat: np.ndarray
    noise_flags: np.ndarray = None  # ground truth, evaluation only

    def __post_init__(self):
        self.node_ids = np.asarray(self.node_ids, dtype=np.int64)
        self.g_hat = np.asarray(self.g_hat, dtype=np.float64)
        self.t_hat = np.asarray(self.t_hat, dtype=np.float64)
        if self.noise_flags is None:
            self.noise_flags = np.zeros(len(self.node_ids), dtype=bool)
        self.noise_flags = np.asarray(self.noise_flags, dtype=bool)
        n = len(self.node_ids)
        if not (self.g_hat.shape[0] == self.t_hat.shape[0] == n == len(self.noise_flags)):
            raise ShapeError("batch fields disagree on the number of rows")
        if self.g_hat.shape != self.t_hat.shape:
            raise ShapeError(f"embedding shapes differ: {self.g_hat.shape} vs {self.t_hat.shape}")

    def __len__(self) -> int:
        return len(self.node_ids)

    def subset(self, rows) -> "EmbeddingBatch":
        rows = np.asarray(rows, dtype=np.int64)
        return EmbeddingBatch(self.node_ids[rows], self.g_hat[rows], self.t_hat[rows], self.noise_flags[rows])


@dataclass
class SimilarityBundle:
    S_gt: np.ndarray
    S_tg: np.ndarray
    S_gg: np.ndarray
    S_tt: np.ndarray


@dataclass
class LossConfig:
    tau: float = DEFAULT_TAU
    beta0: float = 0.5
    gamma0: float = 0.5
    mu0: float = 2.0
    neighbor_cap: int = 5

    def validate(self) -> None:
        if not self.tau > 0:
            raise InvalidParameterError(f"tau must be positive, got {self.tau}")
        if self.neighbor_cap < 1:
            raise InvalidParameterError("neighbor_cap must be at least 1")
        if min(self.beta0, self.gamma0, self.mu0) < 0:
            raise InvalidParameterError("base weights must be nonnegative")


@dataclass
class LossWeights:
    """Effective per-step coefficients.

    ``soft`` multiplies the soft alignment term; it is 1 except in the
    CLIP-only preset, which trains on the one-to-one loss alone.
    """

    beta: float
    gamma: float
    mu: float
    soft: float = 1.0


@dataclass
class LossBreakdown:
    total: float
    clip: float
    soft: float
    sub: float
    extras: dict = field(default_factory=dict)


def _check_tau(tau):
    if not tau > 0:
        raise InvalidParameterError(f"tau must be positive, got {tau}")


def similarity_bundle(batch: EmbeddingBatch) -> SimilarityBundle:
    G, T = batch.g_hat, batch.t_hat
    S_gt = G @ T.T
    return SimilarityBundle(S_gt=S_gt, S_tg=S_gt.T.copy(), S_gg=G @ G.T, S_tt=T @ T.T)


def clip_loss_and_grad(S, tau: float) -> tuple[float, np.ndarray]:
    _check_tau(tau)
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ShapeError(f"similarity matrix must be square, got {S.shape}")
    return kernels.clip_loss_grad(S, tau)


def clip_loss(S, tau: float) -> float:
    """Symmetric InfoNCE: graph->text and text->graph terms summed, over N_B."""
    return clip_loss_and_grad(S, tau)[0]


def soft_targets(S_intra, i: int, beta: float, tau: float) -> np.ndarray:
    if not 0.0 <= beta <= 1.0:
        raise InvalidParameterError(f"beta must lie in [0, 1], got {beta}")
    row = softmax_row(np.asarray(S_intra)[i], tau)
    y = np.zeros_like(row)
    y[i] = 1.0
    return (1.0 - beta) * y + beta * row


def soft_target_matrix(S_intra, beta: float, tau: float) -> np.ndarray:
    """All rows of :func:`soft_targets` at once."""
    if not 0.0 <= beta <= 1.0:
        raise InvalidParameterError(f"beta must lie in [0, 1], got {beta}")
    S_intra = np.asarray(S_intra, dtype=np.float64)
    return (1.0 - beta) * np.eye(S_intra.shape[0]) + beta * softmax_rows(S_intra, tau)


def soft_loss_and_grad(S_gt, P_gg, P_tt, tau: float) -> tuple[float, np.ndarray]:
    """Soft alignment loss against fixed targets; gradient is w.r.t. ``S_gt``."""
    _check_tau(tau)
    return kernels.soft_loss_grad(np.asarray(S_gt, dtype=np.float64), P_gg, P_tt, tau, KL_EPS)


def soft_alignment_loss(bundle: SimilarityBundle, beta: float, tau: float) -> float:
    P_gg = soft_target_matrix(bundle.S_gg, beta, tau)
    P_tt = soft_target_matrix(bundle.S_tt, beta, tau)
    return soft_loss_and_grad(bundle.S_gt, P_gg, P_tt, tau)[0]


# -- neighbourhoods ---------------------------------------------------------


def neighbor_lists(n_nodes: int, edges) -> list[np.ndarray]:
    """Sorted, de-duplicated 1-hop neighbour arrays for every node."""
    nbrs: list[set] = [set() for _ in range(n_nodes)]
    for u, v in np.asarray(edges, dtype=np.int64).reshape(-1, 2):
        if u == v:
            continue
        nbrs[u].add(int(v))
        nbrs[v].add(int(u))
    return [np.array(sorted(s), dtype=np.int64) for s in nbrs]


def _node_bound(adjacency, ids) -> int:
    if isinstance(adjacency, list) and adjacency and isinstance(adjacency[0], np.ndarray):
        return len(adjacency)
    E = np.asarray(adjacency, dtype=np.int64).reshape(-1, 2)
    return int(max(ids.max() + 1, E.max() + 1 if E.size else 0))


def _as_neighbor_lists(adjacency, n_nodes: int) -> Sequence[np.ndarray]:
    if isinstance(adjacency, list) and (not adjacency or isinstance(adjacency[0], np.ndarray)):
        return adjacency
    return neighbor_lists(n_nodes, adjacency)


def sample_neighbors(nodes, nbrs: Sequence[np.ndarray], cap: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Uniform sample of ``min(cap, degree)`` neighbours per node, in node order."""
    out = []
    for v in np.asarray(nodes, dtype=np.int64):
        cand = nbrs[v]
        if cand.size <= cap:
            out.append(cand.copy())
        else:
            out.append(np.sort(rng.choice(cand, size=cap, replace=False)))
    return out


def neighborhood_embedding(node: int, adjacency, embeddings, cap: int, rng) -> np.ndarray:
    """Normalised mean of sampled neighbour rows; an isolated node keeps its own row."""
    embeddings = np.asarray(embeddings, dtype=np.float64)
    nbrs = _as_neighbor_lists(adjacency, embeddings.shape[0])
    chosen = sample_neighbors([node], nbrs, cap, rng)[0]
    if chosen.size == 0:
        return embeddings[node].copy()
    return l2_normalize(embeddings[chosen].mean(axis=0))[0]


def aggregation_matrix(center_pos: Sequence[int], neighbor_pos: Sequence[np.ndarray], n_cols: int) -> np.ndarray:
    """Row i averages the columns in ``neighbor_pos[i]`` (or selects ``center_pos[i]`` if empty)."""
    A = np.zeros((len(center_pos), n_cols), dtype=np.float64)
    for i, (c, nb) in enumerate(zip(center_pos, neighbor_pos)):
        if len(nb) == 0:
            A[i, c] = 1.0
        else:
            np.add.at(A[i], np.asarray(nb, dtype=np.int64), 1.0 / len(nb))
    return A


def subgraph_clip_loss(batch: EmbeddingBatch, adjacency, cap: int, tau: float, rng,
                       graph_table=None, text_table=None) -> float:
    """InfoNCE between neighbourhood-averaged graph and text embeddings.

    Neighbour embeddings are looked up by node id in ``graph_table`` /
    ``text_table`` (full embedding tables). Without tables, lookups use the
    batch rows and neighbours outside the batch are ignored. One neighbour set
    is drawn per node and shared by both modalities.
    """
    ids = batch.node_ids
    if graph_table is None or text_table is None:
        pos = {int(v): r for r, v in enumerate(ids)}
        nbrs = _as_neighbor_lists(adjacency, _node_bound(adjacency, ids))
        restricted = [np.array([u for u in nb if int(u) in pos], dtype=np.int64) for nb in nbrs]
        sampled = sample_neighbors(ids, restricted, cap, rng)
        cols = [np.array([pos[int(u)] for u in s], dtype=np.int64) for s in sampled]
        A = aggregation_matrix(range(len(ids)), cols, len(ids))
        G_src, T_src = batch.g_hat, batch.t_hat
    else:
        G_src = np.asarray(graph_table, dtype=np.float64)
        T_src = np.asarray(text_table, dtype=np.float64)
        nbrs = _as_neighbor_lists(adjacency, G_src.shape[0])
        sampled = sample_neighbors(ids, nbrs, cap, rng)
        A = aggregation_matrix(ids, sampled, G_src.shape[0])
    G_nb = normalize_rows(A @ G_src)[0]
    T_nb = normalize_rows(A @ T_src)[0]
    return clip_loss(G_nb @ T_nb.T, tau)


def total_loss(clip: float, soft: float, sub: float, weights: LossWeights) -> LossBreakdown:
    """Weighted sum ``soft + gamma * sub + mu * clip`` from precomputed components."""
    total = weights.soft * soft + weights.gamma * sub + weights.mu * clip
    return LossBreakdown(total=float(total), clip=float(clip), soft=float(soft), sub=float(sub))


def batch_total_loss(batch: EmbeddingBatch, adjacency, weights: LossWeights, cfg: LossConfig, rng,
                     graph_table=None, text_table=None) -> LossBreakdown:
    """Evaluate all three components on an (already filtered) batch and combine them."""
    bundle = similarity_bundle(batch)
    l_clip = clip_loss(bundle.S_gt, cfg.tau)
    l_soft = soft_alignment_loss(bundle, weights.beta, cfg.tau) if weights.soft else 0.0
    l_sub = subgraph_clip_loss(batch, adjacency, cfg.neighbor_cap, cfg.tau, rng, graph_table, text_table)
    return total_loss(l_clip, l_soft, l_sub, weights)
