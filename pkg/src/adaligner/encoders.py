"""Toy graph and text encoders with hand-written backward passes.

Graph side: two rounds of symmetric-normalised propagation with
``A_hat = D^-1/2 (A + I) D^-1/2``, ReLU after the first linear map only, then
an affine projection head and row normalisation.

Text side: mean of token-embedding rows, one affine map, row normalisation.
An empty document embeds to the zero vector and is flagged.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Iterator, Sequence

import numpy as np

from .errors import ShapeError
from .tensor import normalize_rows, normalize_rows_backward


def _uniform(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class GraphEncoderParams:
    W1: np.ndarray  # d_f x d_h
    W2: np.ndarray  # d_h x d_h
    WP: np.ndarray  # d_h x d
    bP: np.ndarray  # d

    @classmethod
    def init(cls, rng, d_f: int, d_h: int, d: int) -> "GraphEncoderParams":
        return cls(
            W1=_uniform(rng, d_f, (d_f, d_h)),
            W2=_uniform(rng, d_h, (d_h, d_h)),
            WP=_uniform(rng, d_h, (d_h, d)),
            bP=_uniform(rng, d_h, (d,)),
        )

    @property
    def out_dim(self) -> int:
        return self.WP.shape[1]

    def check(self) -> None:
        d_f, d_h = self.W1.shape
        if self.W2.shape != (d_h, d_h) or self.WP.shape[0] != d_h or self.bP.shape != (self.WP.shape[1],):
            raise ShapeError("graph encoder shapes do not chain d_f -> d_h -> d_h -> d")


@dataclass
class TextEncoderParams:
    E: np.ndarray  # |V| x d_t
    WT: np.ndarray  # d_t x d
    bT: np.ndarray  # d

    @classmethod
    def init(cls, rng, vocab_size: int, d_t: int, d: int) -> "TextEncoderParams":
        return cls(
            E=_uniform(rng, d_t, (vocab_size, d_t)),
            WT=_uniform(rng, d_t, (d_t, d)),
            bT=_uniform(rng, d_t, (d,)),
        )

    @property
    def vocab_size(self) -> int:
        return self.E.shape[0]

    @property
    def out_dim(self) -> int:
        return self.WT.shape[1]

    def check(self) -> None:
        if self.WT.shape[0] != self.E.shape[1] or self.bT.shape != (self.WT.shape[1],):
            raise ShapeError("text encoder shapes do not chain d_t -> d")


@dataclass
class ModelParams:
    graph: GraphEncoderParams
    text: TextEncoderParams

    def __post_init__(self):
        self.graph.check()
        self.text.check()
        if self.graph.out_dim != self.text.out_dim:
            raise ShapeError(
                f"encoder output dims differ: graph {self.graph.out_dim}, text {self.text.out_dim}"
            )

    @classmethod
    def init(cls, rng, d_f=16, d_h=32, d=16, vocab_size=200, d_t=32) -> "ModelParams":
        return cls(GraphEncoderParams.init(rng, d_f, d_h, d), TextEncoderParams.init(rng, vocab_size, d_t, d))

    @classmethod
    def from_named(cls, arrays: dict) -> "ModelParams":
        """Inverse of :meth:`named_arrays`; raises KeyError on a missing entry."""
        graph = GraphEncoderParams(*(arrays[f"graph.{f.name}"] for f in fields(GraphEncoderParams)))
        text = TextEncoderParams(*(arrays[f"text.{f.name}"] for f in fields(TextEncoderParams)))
        extra = set(arrays) - {n for n, _ in cls(graph, text).named_arrays()}
        if extra:
            raise KeyError(f"unexpected arrays {sorted(extra)}")
        return cls(graph, text)

    def named_arrays(self) -> Iterator[tuple[str, np.ndarray]]:
        for part_name, part in (("graph", self.graph), ("text", self.text)):
            for f in fields(part):
                yield f"{part_name}.{f.name}", getattr(part, f.name)

    def copy(self) -> "ModelParams":
        return self.map(np.copy)

    def zeros_like(self) -> "ModelParams":
        return self.map(np.zeros_like)

    def map(self, fn) -> "ModelParams":
        return ModelParams(
            GraphEncoderParams(*(fn(getattr(self.graph, f.name)) for f in fields(GraphEncoderParams))),
            TextEncoderParams(*(fn(getattr(self.text, f.name)) for f in fields(TextEncoderParams))),
        )

    def get(self, name: str) -> np.ndarray:
        part, attr = name.split(".")
        return getattr(getattr(self, part), attr)

    def num_entries(self) -> int:
        return sum(a.size for _, a in self.named_arrays())


# -- graph ------------------------------------------------------------------


def normalized_adjacency(n_nodes: int, edges) -> np.ndarray:
    """Dense ``D^-1/2 (A + I) D^-1/2`` from an undirected edge list.

    Duplicate edges, reversed duplicates and self-loops in the input are
    ignored; the identity supplies the only self-loops.
    """
    A = np.zeros((n_nodes, n_nodes), dtype=np.float64)
    E = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    if E.size:
        if E.min() < 0 or E.max() >= n_nodes:
            raise IndexError(f"edge references node outside [0, {n_nodes})")
        A[E[:, 0], E[:, 1]] = 1.0
        A[E[:, 1], E[:, 0]] = 1.0
    np.fill_diagonal(A, 1.0)
    dinv = 1.0 / np.sqrt(A.sum(axis=1))
    return A * dinv[:, None] * dinv[None, :]


@dataclass
class GraphContext:
    """Per-dataset constants for the graph encoder."""

    A_hat: np.ndarray
    AX: np.ndarray  # A_hat @ features, fixed across training

    @classmethod
    def build(cls, n_nodes: int, edges, features) -> "GraphContext":
        X = np.asarray(features, dtype=np.float64)
        if X.shape[0] != n_nodes:
            raise ShapeError(f"features have {X.shape[0]} rows for {n_nodes} nodes")
        A_hat = normalized_adjacency(n_nodes, edges)
        return cls(A_hat, A_hat @ X)

    @property
    def n_nodes(self) -> int:
        return self.A_hat.shape[0]


def gcn_embed(params: GraphEncoderParams, ctx: GraphContext, nodes):
    """Unit-norm embeddings for ``nodes`` plus the cache for :func:`gcn_backward`."""
    nodes = np.asarray(nodes, dtype=np.int64)
    if nodes.size and (nodes.min() < 0 or nodes.max() >= ctx.n_nodes):
        raise IndexError(f"node index outside [0, {ctx.n_nodes})")
    Z1 = ctx.AX @ params.W1
    H1 = np.maximum(Z1, 0.0)
    A_U = ctx.A_hat[nodes]
    M = A_U @ H1
    H2 = M @ params.W2
    G = H2 @ params.WP + params.bP
    Ghat, norms, degenerate = normalize_rows(G)
    cache = (nodes, Z1, H1, A_U, M, H2, Ghat, norms, degenerate)
    return Ghat, cache


def gcn_backward(params: GraphEncoderParams, ctx: GraphContext, cache, dGhat) -> GraphEncoderParams:
    _, Z1, H1, A_U, M, H2, Ghat, norms, degenerate = cache
    dG = normalize_rows_backward(Ghat, norms, degenerate, dGhat)
    dWP = H2.T @ dG
    dbP = dG.sum(axis=0)
    dH2 = dG @ params.WP.T
    dW2 = M.T @ dH2
    dM = dH2 @ params.W2.T
    dH1 = A_U.T @ dM
    dZ1 = dH1 * (Z1 > 0.0)
    dW1 = ctx.AX.T @ dZ1
    return GraphEncoderParams(dW1, dW2, dWP, dbP)


def gcn_forward(params: GraphEncoderParams, adjacency, features, batch) -> np.ndarray:
    features = np.asarray(features, dtype=np.float64)
    ctx = GraphContext.build(features.shape[0], adjacency, features)
    Ghat, _ = gcn_embed(params, ctx, batch)
    return Ghat


# -- text -------------------------------------------------------------------


def bag_matrix(docs: Sequence[Sequence[int]], vocab_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Token-frequency rows (each summing to 1) and the empty-document mask."""
    C = np.zeros((len(docs), vocab_size), dtype=np.float64)
    empty = np.zeros(len(docs), dtype=bool)
    for r, doc in enumerate(docs):
        ids = np.asarray(doc, dtype=np.int64)
        if ids.size == 0:
            empty[r] = True
            continue
        if ids.min() < 0 or ids.max() >= vocab_size:
            raise IndexError(f"token id outside [0, {vocab_size}) in document {r}")
        np.add.at(C[r], ids, 1.0)
        C[r] /= ids.size
    return C, empty


def text_embed(params: TextEncoderParams, C: np.ndarray, empty: np.ndarray):
    Y = C @ params.E
    T = Y @ params.WT + params.bT
    T[empty] = 0.0
    That, norms, degenerate = normalize_rows(T)
    return That, (C, Y, That, norms, degenerate)


def text_backward(params: TextEncoderParams, cache, dThat) -> TextEncoderParams:
    C, Y, That, norms, degenerate = cache
    dT = normalize_rows_backward(That, norms, degenerate, dThat)
    dWT = Y.T @ dT
    dbT = dT.sum(axis=0)
    dE = C.T @ (dT @ params.WT.T)
    return TextEncoderParams(dE, dWT, dbT)


def text_forward(params: TextEncoderParams, docs) -> tuple[np.ndarray, np.ndarray]:
    """Embed documents; returns the unit rows and the degenerate (empty) mask."""
    C, empty = bag_matrix(docs, params.vocab_size)
    That, _ = text_embed(params, C, empty)
    return That, empty
