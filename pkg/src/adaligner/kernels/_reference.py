"""Pure numpy implementations of the hot batch kernels.

Every function here has a compiled twin in ``_fast.pyx`` with the same
signature and semantics; the package picks one at import time.
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"


def softmax_rows(S, tau):
    Z = np.asarray(S, dtype=np.float64) / tau
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def clip_loss_grad(S, tau):
    """Symmetric InfoNCE on a square similarity matrix and its gradient."""
    S = np.asarray(S, dtype=np.float64)
    n = S.shape[0]
    P_row = softmax_rows(S, tau)
    P_col = softmax_rows(S.T, tau).T
    diag = np.arange(n)
    loss = -(np.log(P_row[diag, diag]).sum() + np.log(P_col[diag, diag]).sum()) / n
    grad = P_row + P_col
    grad[diag, diag] -= 2.0
    grad /= n * tau
    return float(loss), grad


def _dsym_rows(P, Q, eps):
    lp = np.log(np.maximum(P, eps))
    lq = np.log(np.maximum(Q, eps))
    loss = 0.5 * ((P - Q) * (lp - lq)).sum()
    # d/dQ of 0.5 * sum (p - q)(log p - log q), p held constant
    dlq = np.where(Q > eps, 1.0 / np.maximum(Q, eps), 0.0)
    dQ = 0.5 * (-(lp - lq) - (P - Q) * dlq)
    return loss, dQ


def _softmax_backward(Q, dQ, tau):
    return Q * (dQ - (dQ * Q).sum(axis=1, keepdims=True)) / tau


def soft_loss_grad(S_gt, P_gg, P_tt, tau, eps):
    """Soft alignment loss against fixed targets and its gradient w.r.t. S_gt.

    Row i of the graph-to-text prediction is softmax(S_gt[i]/tau); row i of the
    text-to-graph prediction is softmax(S_gt[:, i]/tau).
    """
    S_gt = np.asarray(S_gt, dtype=np.float64)
    n = S_gt.shape[0]
    Q_gt = softmax_rows(S_gt, tau)
    Q_tg = softmax_rows(S_gt.T, tau)
    l1, d1 = _dsym_rows(P_gg, Q_gt, eps)
    l2, d2 = _dsym_rows(P_tt, Q_tg, eps)
    grad = _softmax_backward(Q_gt, d1, tau) + _softmax_backward(Q_tg, d2, tau).T
    scale = 1.0 / (2.0 * n)
    return float((l1 + l2) * scale), grad * scale


def sample_without_replacement(weights, k, uniforms):
    """Sequential weighted draws without replacement.

    ``uniforms`` supplies one U[0,1) variate per draw so randomness stays with
    the caller. The mass of each draw is renormalised over what remains; if
    every remaining weight is zero the draw is uniform over the remainder.
    """
    w = np.array(weights, dtype=np.float64)
    n = w.shape[0]
    alive = np.ones(n, dtype=bool)
    chosen = np.empty(k, dtype=np.int64)
    for d in range(k):
        c = np.cumsum(np.where(alive, w, 0.0))
        total = c[-1]
        if total > 0.0:
            pick = int(np.searchsorted(c, uniforms[d] * total, side="right"))
            if pick >= n:
                pick = int(np.flatnonzero(alive & (w > 0.0))[-1])
        else:
            idx = np.flatnonzero(alive)
            pick = int(idx[min(int(uniforms[d] * idx.shape[0]), idx.shape[0] - 1)])
        alive[pick] = False
        chosen[d] = pick
    return chosen


def pairwise_auc(pos, neg):
    """Exact AUC over all positive/negative pairs, ties counted as one half."""
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.sort(np.asarray(neg, dtype=np.float64))
    below = np.searchsorted(neg, pos, side="left")
    upto = np.searchsorted(neg, pos, side="right")
    wins = below.sum() + 0.5 * (upto - below).sum()
    return float(wins) / (pos.shape[0] * neg.shape[0])
