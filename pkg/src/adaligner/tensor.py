"""Dense vector/matrix primitives the losses are assembled from.

Matrices are plain row-major ``float64`` numpy arrays. Single-row helpers
(:func:`softmax_row`, :func:`sym_kl`) operate on 1-D arrays; the ``*_rows``
variants apply the same rule to every row of a matrix.
"""
from __future__ import annotations

import numpy as np

from .errors import InvalidParameterError, ShapeError

KL_EPS = 1e-12


def l2_normalize(v) -> tuple[np.ndarray, bool]:
    """Return ``(v / ||v||, degenerate)``.

    A zero vector comes back unchanged with ``degenerate=True``.
    """
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.sqrt(np.dot(v, v)))
    if norm == 0.0:
        return v.copy(), True
    return v / norm, False


def normalize_rows(X) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise :func:`l2_normalize`.

    Returns the normalised matrix, the row norms and a boolean mask of the
    zero rows (left as zeros).
    """
    X = np.asarray(X, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", X, X))
    degenerate = norms == 0.0
    safe = np.where(degenerate, 1.0, norms)
    return X / safe[:, None], norms, degenerate


def normalize_rows_backward(Xhat, norms, degenerate, dXhat) -> np.ndarray:
    """Gradient through :func:`normalize_rows`; zero rows pass no gradient."""
    radial = np.einsum("ij,ij->i", Xhat, dXhat)
    safe = np.where(degenerate, 1.0, norms)
    dX = (dXhat - Xhat * radial[:, None]) / safe[:, None]
    dX[degenerate] = 0.0
    return dX


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise InvalidParameterError(f"temperature must be positive, got {tau}")


def logsumexp(s) -> float:
    s = np.asarray(s, dtype=np.float64)
    m = float(s.max())
    return m + float(np.log(np.exp(s - m).sum()))


def softmax_row(s, tau: float = 1.0) -> np.ndarray:
    _check_tau(tau)
    z = np.asarray(s, dtype=np.float64) / tau
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_rows(S, tau: float = 1.0) -> np.ndarray:
    _check_tau(tau)
    z = np.asarray(S, dtype=np.float64) / tau
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def kl(p, q, eps: float = KL_EPS) -> float:
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    return float((p * (np.log(np.maximum(p, eps)) - np.log(np.maximum(q, eps)))).sum())


def sym_kl(p, q, eps: float = KL_EPS) -> float:
    """Symmetric KL, ``0.5 * (KL(p||q) + KL(q||p))``, with a log floor ``eps``.

    Written as ``0.5 * sum((p - q) * (log p - log q))`` so that swapping the
    arguments gives the identical float.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ShapeError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    lp = np.log(np.maximum(p, eps))
    lq = np.log(np.maximum(q, eps))
    return float(0.5 * ((p - q) * (lp - lq)).sum())
