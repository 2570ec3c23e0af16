"""Finite-difference audit of the full objective on tiny random instances."""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .data import SyntheticTag
from .trainer import Configs, TrainConfig, TrainingData, finite_diff_check

TINY_NODES = 4
TINY_DIM = 4
TINY_VOCAB = 8


def tiny_tag(seed: int, n_nodes: int = TINY_NODES, feature_dim: int = TINY_DIM,
             vocab_size: int = TINY_VOCAB, doc_len: int = 5) -> SyntheticTag:
    """A connected toy graph: a ring plus one random chord, random docs and features."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 7]))
    ring = {(i, (i + 1) % n_nodes) for i in range(n_nodes)}
    u, v = rng.choice(n_nodes, size=2, replace=False)
    ring.add((int(u), int(v)))
    edges = np.array(sorted({(min(a, b), max(a, b)) for a, b in ring}), dtype=np.int64)
    labels = np.arange(n_nodes) % 2
    return SyntheticTag(
        n_nodes=n_nodes, n_classes=2, vocab_size=vocab_size, edges=edges,
        features=rng.standard_normal((n_nodes, feature_dim)),
        docs=[rng.integers(0, vocab_size, size=doc_len).tolist() for _ in range(n_nodes)],
        labels=labels,
        class_prompts=[[c] for c in range(2)],
        noise_mask=np.zeros(n_nodes, dtype=bool),
        splits={"train": np.arange(n_nodes), "val": np.arange(n_nodes), "test": np.arange(n_nodes)},
    )


def tiny_configs(mode: str = "full") -> Configs:
    return Configs(train=TrainConfig(batch_size=TINY_NODES, mode=mode, hidden_dim=TINY_DIM,
                                     embed_dim=TINY_DIM, token_dim=TINY_DIM))


@dataclass
class GradcheckResult:
    seed: int
    max_rel_error: float
    seconds: float


def gradcheck_seed(seed: int, h: float = 1e-4, mode: str = "full") -> GradcheckResult:
    start = time.perf_counter()
    cfgs = tiny_configs(mode)
    data = TrainingData(tiny_tag(seed))
    params = data.init_params(np.random.default_rng(np.random.SeedSequence([seed, 8])), cfgs.train)
    err = finite_diff_check(params, data, data.tag.train, cfgs, h=h, seed=seed)
    return GradcheckResult(seed, err, time.perf_counter() - start)


def run_gradcheck(seeds, h: float = 1e-4, mode: str = "full") -> list[GradcheckResult]:
    return [gradcheck_seed(int(s), h, mode) for s in seeds]
