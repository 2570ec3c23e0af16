"""Downstream metrics: zero-shot classification, link AUC, retrieval, filter precision."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidParameterError, ShapeError


@dataclass
class Classification:
    predictions: np.ndarray
    accuracy: float
    macro_f1: float


def macro_f1(truth, pred, n_classes: int) -> float:
    """Unweighted mean of per-class F1; a class never predicted and never true scores 0."""
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    scores = []
    for c in range(n_classes):
        tp = np.sum((pred == c) & (truth == c))
        fp = np.sum((pred == c) & (truth != c))
        fn = np.sum((pred != c) & (truth == c))
        denom = 2 * tp + fp + fn
        scores.append(0.0 if denom == 0 else 2.0 * tp / denom)
    return float(np.mean(scores))


def classify_scores(scores, truth) -> Classification:
    """Argmax over class scores (first maximum wins) plus accuracy and macro F1."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    pred = np.argmax(scores, axis=1)
    return Classification(pred, float(np.mean(pred == truth)), macro_f1(truth, pred, scores.shape[1]))


def zero_shot_classify(node_emb, class_emb, truth) -> Classification:
    node_emb = np.asarray(node_emb, dtype=np.float64)
    class_emb = np.asarray(class_emb, dtype=np.float64)
    if node_emb.shape[1] != class_emb.shape[1]:
        raise ShapeError("node and class embeddings have different widths")
    truth = np.asarray(truth, dtype=np.int64)
    if truth.size and truth.max() >= class_emb.shape[0]:
        raise ShapeError(f"labels reference {truth.max() + 1} classes, {class_emb.shape[0]} prompts given")
    return classify_scores(node_emb @ class_emb.T, truth)


def auc_from_scores(pos_scores, neg_scores) -> float:
    pos = np.asarray(pos_scores, dtype=np.float64)
    neg = np.asarray(neg_scores, dtype=np.float64)
    if pos.size == 0 or neg.size == 0:
        raise InvalidParameterError("AUC needs at least one positive and one negative pair")
    return kernels.pairwise_auc(pos, neg)


def sample_non_edges(n_nodes: int, edges, count: int, rng, anchors=None) -> np.ndarray:
    """Uniform distinct non-adjacent pairs (u < v); ``anchors`` restricts one endpoint."""
    E = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    taken = {(int(min(u, v)), int(max(u, v))) for u, v in E}
    pool = np.arange(n_nodes) if anchors is None else np.asarray(anchors, dtype=np.int64)
    out: list[tuple[int, int]] = []
    seen = set()
    max_tries = 1000 * max(count, 1)
    tries = 0
    while len(out) < count and tries < max_tries:
        tries += 1
        u = int(pool[rng.integers(pool.size)])
        v = int(rng.integers(n_nodes))
        if u == v:
            continue
        key = (min(u, v), max(u, v))
        if key in taken or key in seen:
            continue
        seen.add(key)
        out.append(key)
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def link_auc(node_emb, pos_edges, neg_pairs) -> float:
    """AUC of inner-product scores, positives vs negatives, ties scored one half."""
    G = np.asarray(node_emb, dtype=np.float64)
    P = np.asarray(pos_edges, dtype=np.int64).reshape(-1, 2)
    N = np.asarray(neg_pairs, dtype=np.int64).reshape(-1, 2)
    pos = np.einsum("ij,ij->i", G[P[:, 0]], G[P[:, 1]])
    neg = np.einsum("ij,ij->i", G[N[:, 0]], G[N[:, 1]])
    return auc_from_scores(pos, neg)


def ranks_from_scores(scores, truth) -> np.ndarray:
    """1-based rank of each query's true item; ties go to the lower gallery index."""
    scores = np.asarray(scores, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.int64)
    true_s = scores[np.arange(scores.shape[0]), truth][:, None]
    idx = np.arange(scores.shape[1])[None, :]
    ahead = (scores > true_s) | ((scores == true_s) & (idx < truth[:, None]))
    return ahead.sum(axis=1) + 1


def rank_metrics(ranks, gallery_size: int, ks=(1, 5, 10)) -> dict[str, float]:
    ranks = np.asarray(ranks)
    out = {"mrr": float(np.mean(1.0 / ranks))}
    for k in ks:
        out[f"recall@{k}"] = float(np.mean(ranks <= min(k, gallery_size)))
    return out


def retrieval_metrics(query_emb, gallery_emb, truth, ks=(1, 5, 10)) -> dict[str, float]:
    """MRR and Recall@K for one direction (queries ranked against the gallery)."""
    Q = np.asarray(query_emb, dtype=np.float64)
    G = np.asarray(gallery_emb, dtype=np.float64)
    ranks = ranks_from_scores(Q @ G.T, truth)
    return rank_metrics(ranks, G.shape[0], ks)


def cross_modal_retrieval(g_emb, t_emb, classes=None, ks=(1, 5, 10)) -> dict[str, dict[str, float]]:
    """Node-to-text and text-to-node retrieval over paired rows.

    With ``classes`` given, each query's gallery is restricted to items of its
    own class (category-specific retrieval).
    """
    g_emb = np.asarray(g_emb, dtype=np.float64)
    t_emb = np.asarray(t_emb, dtype=np.float64)
    n = g_emb.shape[0]
    if classes is None:
        truth = np.arange(n)
        return {
            "n2t": retrieval_metrics(g_emb, t_emb, truth, ks),
            "t2n": retrieval_metrics(t_emb, g_emb, truth, ks),
        }
    classes = np.asarray(classes)
    out = {}
    for name, Q, G in (("n2t", g_emb, t_emb), ("t2n", t_emb, g_emb)):
        ranks = []
        sizes = []
        for c in np.unique(classes):
            members = np.flatnonzero(classes == c)
            r = ranks_from_scores(Q[members] @ G[members].T, np.arange(members.size))
            ranks.append(r)
            sizes.append(np.full(members.size, members.size))
        ranks = np.concatenate(ranks)
        sizes = np.concatenate(sizes)
        res = {"mrr": float(np.mean(1.0 / ranks))}
        for k in ks:
            res[f"recall@{k}"] = float(np.mean(ranks <= np.minimum(k, sizes)))
        out[name] = res
    return out


def filter_precision(dropped_by_epoch, noise_mask) -> list[float | None]:
    """Per-epoch share of dropped samples that were truly noisy; ``None`` if nothing was dropped."""
    noise_mask = np.asarray(noise_mask, dtype=bool)
    out: list[float | None] = []
    for dropped in dropped_by_epoch:
        dropped = np.asarray(dropped, dtype=np.int64)
        out.append(None if dropped.size == 0 else float(noise_mask[dropped].mean()))
    return out


def precision_from_counts(n_dropped, n_noisy) -> float | None:
    return None if n_dropped == 0 else n_noisy / n_dropped
