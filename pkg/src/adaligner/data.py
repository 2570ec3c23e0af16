"""Planted-community text-attributed graphs with cross-class text-swap noise.

Each class owns a contiguous slice of the vocabulary. A node's document draws
most of its tokens from its class slice, its feature vector is the class
prototype plus Gaussian noise, and edges follow a stochastic block model.
Noise swaps documents between training nodes of different classes, so the
corpus itself is never altered.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, ParseError

FORMAT_TAG = "#ADALIGNER-TAG 1"


@dataclass(frozen=True)
class GeneratorConfig:
    n_nodes: int = 300
    n_classes: int = 6
    p_intra: float = 0.08
    p_inter: float = 0.005
    vocab_size: int = 200
    tokens_per_doc: int = 20
    class_token_skew: float = 0.8
    feature_dim: int = 16
    feature_noise_std: float = 0.5
    noise_rate: float = 0.0
    # geometric class-size decay; 1.0 gives balanced classes
    imbalance: float = 1.0

    def validate(self) -> None:
        if self.n_classes < 1 or self.n_nodes < self.n_classes:
            raise ConfigError("need at least one node per class")
        if not self.p_intra > self.p_inter:
            raise ConfigError("p_intra must exceed p_inter")
        if not (0.0 <= self.p_inter and self.p_intra <= 1.0):
            raise ConfigError("edge probabilities must lie in [0, 1]")
        if self.vocab_size // self.n_classes < 1:
            raise ConfigError(f"vocab_size {self.vocab_size} leaves empty class slices for {self.n_classes} classes")
        if self.tokens_per_doc < 1:
            raise ConfigError("tokens_per_doc must be positive")
        if not 0.0 <= self.class_token_skew <= 1.0:
            raise ConfigError("class_token_skew must lie in [0, 1]")
        if not 0.0 <= self.noise_rate <= 1.0:
            raise ConfigError("noise_rate must lie in [0, 1]")
        if not 0.0 < self.imbalance <= 1.0:
            raise ConfigError("imbalance must lie in (0, 1]")


@dataclass
class SyntheticTag:
    n_nodes: int
    n_classes: int
    vocab_size: int
    edges: np.ndarray  # (E, 2), u < v, sorted, unique
    features: np.ndarray  # n_nodes x d_f
    docs: list[list[int]]
    labels: np.ndarray
    class_prompts: list[list[int]]
    noise_mask: np.ndarray
    splits: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def train(self) -> np.ndarray:
        return self.splits["train"]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SyntheticTag):
            return NotImplemented
        return (
            self.n_nodes == other.n_nodes
            and self.n_classes == other.n_classes
            and self.vocab_size == other.vocab_size
            and np.array_equal(self.edges, other.edges)
            and np.array_equal(self.features, other.features)
            and self.docs == other.docs
            and np.array_equal(self.labels, other.labels)
            and self.class_prompts == other.class_prompts
            and np.array_equal(self.noise_mask, other.noise_mask)
            and self.splits.keys() == other.splits.keys()
            and all(np.array_equal(self.splits[k], other.splits[k]) for k in self.splits)
        )


def class_sizes(cfg: GeneratorConfig) -> list[int]:
    raw = np.array([cfg.imbalance**c for c in range(cfg.n_classes)])
    sizes = np.floor(raw / raw.sum() * cfg.n_nodes).astype(int)
    sizes = np.maximum(sizes, 1)
    # hand leftover nodes to the largest classes first
    c = 0
    while sizes.sum() < cfg.n_nodes:
        sizes[c % cfg.n_classes] += 1
        c += 1
    while sizes.sum() > cfg.n_nodes:
        sizes[int(np.argmax(sizes))] -= 1
    return sizes.tolist()


def class_slice(c: int, cfg_or_vocab, n_classes: int | None = None) -> range:
    if isinstance(cfg_or_vocab, GeneratorConfig):
        vocab, n_classes = cfg_or_vocab.vocab_size, cfg_or_vocab.n_classes
    else:
        vocab = cfg_or_vocab
    width = vocab // n_classes
    return range(c * width, (c + 1) * width)


def _prototypes(rng, n_classes: int, dim: int) -> np.ndarray:
    if n_classes <= dim:
        Q, _ = np.linalg.qr(rng.normal(size=(dim, n_classes)))
        return Q.T
    P = rng.normal(size=(n_classes, dim))
    return P / np.linalg.norm(P, axis=1, keepdims=True)


def _sbm_edges(rng, labels: np.ndarray, p_intra: float, p_inter: float) -> np.ndarray:
    n = labels.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    p = np.where(same, p_intra, p_inter)
    hit = rng.random(iu.shape[0]) < p
    return np.stack([iu[hit], ju[hit]], axis=1).astype(np.int64)


def _stratified_splits(rng, labels: np.ndarray, n_classes: int, fractions=(0.6, 0.2, 0.2)) -> dict[str, np.ndarray]:
    parts = {"train": [], "val": [], "test": []}
    for c in range(n_classes):
        idx = np.flatnonzero(labels == c)
        idx = idx[rng.permutation(idx.size)]
        n_train = int(round(fractions[0] * idx.size))
        n_val = int(round(fractions[1] * idx.size))
        parts["train"].append(idx[:n_train])
        parts["val"].append(idx[n_train:n_train + n_val])
        parts["test"].append(idx[n_train + n_val:])
    return {k: np.sort(np.concatenate(v)).astype(np.int64) for k, v in parts.items()}


def generate_tag(cfg: GeneratorConfig, seed: int) -> SyntheticTag:
    """Clean planted-community TAG; apply :func:`inject_noise` for the noisy variant."""
    cfg.validate()
    ss = np.random.SeedSequence(seed)
    r_lab, r_edge, r_feat, r_doc, r_split = (np.random.default_rng(s) for s in ss.spawn(5))

    sizes = class_sizes(cfg)
    labels = np.repeat(np.arange(cfg.n_classes), sizes)
    labels = labels[r_lab.permutation(cfg.n_nodes)]

    edges = _sbm_edges(r_edge, labels, cfg.p_intra, cfg.p_inter)

    protos = _prototypes(r_feat, cfg.n_classes, cfg.feature_dim)
    features = protos[labels] + cfg.feature_noise_std * r_feat.normal(size=(cfg.n_nodes, cfg.feature_dim))

    slices = [np.array(class_slice(c, cfg)) for c in range(cfg.n_classes)]
    docs = []
    for v in range(cfg.n_nodes):
        from_class = r_doc.random(cfg.tokens_per_doc) < cfg.class_token_skew
        own = r_doc.choice(slices[labels[v]], size=cfg.tokens_per_doc)
        anywhere = r_doc.integers(0, cfg.vocab_size, size=cfg.tokens_per_doc)
        docs.append(np.where(from_class, own, anywhere).astype(int).tolist())

    return SyntheticTag(
        n_nodes=cfg.n_nodes,
        n_classes=cfg.n_classes,
        vocab_size=cfg.vocab_size,
        edges=edges,
        features=features,
        docs=docs,
        labels=labels.astype(np.int64),
        class_prompts=[s.tolist() for s in slices],
        noise_mask=np.zeros(cfg.n_nodes, dtype=bool),
        splits=_stratified_splits(r_split, labels, cfg.n_classes),
    )


def noise_count(noise_rate: float, n_train: int) -> int:
    """Number of swapped nodes: ``round(rate * |train|)`` made even by rounding down."""
    k = int(math.floor(noise_rate * n_train + 0.5))
    return k - (k % 2)


def inject_noise(tag: SyntheticTag, noise_rate: float, seed: int) -> SyntheticTag:
    """Swap documents between random cross-class pairs of training nodes.

    Candidates are accepted from a shuffled training list while no class
    exceeds half the quota; sorting the accepted nodes by label and pairing
    position ``j`` with ``j + k/2`` then always joins two different classes.
    """
    if not 0.0 <= noise_rate <= 1.0:
        raise ConfigError("noise_rate must lie in [0, 1]")
    k = noise_count(noise_rate, tag.train.size)
    out = replace(tag, docs=[list(d) for d in tag.docs], noise_mask=tag.noise_mask.copy())
    if k == 0:
        return out
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    half = k // 2
    counts = np.zeros(tag.n_classes, dtype=int)
    accepted = []
    for v in tag.train[rng.permutation(tag.train.size)]:
        c = tag.labels[v]
        if counts[c] < half:
            counts[c] += 1
            accepted.append(int(v))
            if len(accepted) == k:
                break
    if len(accepted) < k or k < 2:
        raise ConfigError(
            f"cannot form {half} cross-class swap pairs from {tag.train.size} training nodes"
        )
    accepted = np.array(accepted)
    accepted = accepted[np.lexsort((rng.random(k), tag.labels[accepted]))]
    for a, b in zip(accepted[:half], accepted[half:]):
        out.docs[a], out.docs[b] = out.docs[b], out.docs[a]
        out.noise_mask[a] = out.noise_mask[b] = True
    return out


def make_dataset(cfg: GeneratorConfig, seed: int) -> SyntheticTag:
    return inject_noise(generate_tag(cfg, seed), cfg.noise_rate, seed)


# -- file format ------------------------------------------------------------
#
# UTF-8 text, one record per line, space separated. Every section header
# carries its record count so truncation is detectable:
#
#   #ADALIGNER-TAG 1
#   #NODES 1            -> "n_nodes n_classes vocab_size feature_dim"
#   #EDGES <E>          -> "u v"
#   #FEATURES <N>       -> one row of floats per node
#   #DOCS <N>           -> token ids per node (may be empty)
#   #LABELS <N>         -> one class index per line
#   #PROMPTS <C>        -> token ids per class
#   #MASK <N>           -> 0/1 per line
#   #SPLITS 3           -> "<name> idx idx ..."

_SECTIONS = ("NODES", "EDGES", "FEATURES", "DOCS", "LABELS", "PROMPTS", "MASK", "SPLITS")


def serialize_tag(tag: SyntheticTag) -> str:
    out = [FORMAT_TAG]
    out.append("#NODES 1")
    out.append(f"{tag.n_nodes} {tag.n_classes} {tag.vocab_size} {tag.features.shape[1]}")
    out.append(f"#EDGES {len(tag.edges)}")
    out.extend(f"{u} {v}" for u, v in tag.edges)
    out.append(f"#FEATURES {tag.n_nodes}")
    out.extend(" ".join(repr(float(x)) for x in row) for row in tag.features)
    out.append(f"#DOCS {tag.n_nodes}")
    out.extend(" ".join(map(str, d)) for d in tag.docs)
    out.append(f"#LABELS {tag.n_nodes}")
    out.extend(str(int(c)) for c in tag.labels)
    out.append(f"#PROMPTS {tag.n_classes}")
    out.extend(" ".join(map(str, p)) for p in tag.class_prompts)
    out.append(f"#MASK {tag.n_nodes}")
    out.extend("1" if b else "0" for b in tag.noise_mask)
    out.append(f"#SPLITS {len(tag.splits)}")
    out.extend(" ".join([name, *map(str, idx)]) for name, idx in tag.splits.items())
    return "\n".join(out) + "\n"


def parse_tag(text: str, path: str | None = None) -> SyntheticTag:
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or lines[0].strip() != FORMAT_TAG:
        raise ParseError(f"missing header {FORMAT_TAG!r}", line=1, path=path)
    sections: dict[str, list[tuple[int, str]]] = {}
    pos = 1
    while pos < len(lines):
        head = lines[pos].split()
        lineno = pos + 1
        if not head or not head[0].startswith("#") or head[0][1:] not in _SECTIONS or len(head) != 2:
            raise ParseError(f"expected a section header, got {lines[pos]!r}", line=lineno, path=path)
        name = head[0][1:]
        try:
            count = int(head[1])
        except ValueError:
            raise ParseError(f"bad record count {head[1]!r}", line=lineno, path=path) from None
        body = [(pos + 2 + i, lines[pos + 1 + i]) for i in range(min(count, len(lines) - pos - 1))]
        if len(body) < count or any(ln.startswith("#") for _, ln in body):
            raise ParseError(f"section {name} truncated: expected {count} records", line=lineno, path=path)
        sections[name] = body
        pos += 1 + count
    missing = [s for s in _SECTIONS if s not in sections]
    if missing:
        raise ParseError(f"missing sections: {', '.join(missing)}", line=len(lines), path=path)

    def ints(lineno, s):
        try:
            return [int(x) for x in s.split()]
        except ValueError:
            raise ParseError(f"expected integers, got {s!r}", line=lineno, path=path) from None

    def floats(lineno, s):
        try:
            return [float(x) for x in s.split()]
        except ValueError:
            raise ParseError(f"expected numbers, got {s!r}", line=lineno, path=path) from None

    ln, s = sections["NODES"][0]
    hdr = ints(ln, s)
    if len(hdr) != 4:
        raise ParseError("NODES record needs 4 fields", line=ln, path=path)
    n_nodes, n_classes, vocab, d_f = hdr
    for name, expected in (("FEATURES", n_nodes), ("DOCS", n_nodes), ("LABELS", n_nodes),
                           ("PROMPTS", n_classes), ("MASK", n_nodes)):
        if len(sections[name]) != expected:
            raise ParseError(f"section {name} has {len(sections[name])} records, expected {expected}",
                             line=sections[name][0][0] - 1 if sections[name] else None, path=path)

    edges = []
    for ln, s in sections["EDGES"]:
        e = ints(ln, s)
        if len(e) != 2 or not (0 <= e[0] < n_nodes and 0 <= e[1] < n_nodes):
            raise ParseError(f"bad edge record {s!r}", line=ln, path=path)
        edges.append(e)
    feats = []
    for ln, s in sections["FEATURES"]:
        row = floats(ln, s)
        if len(row) != d_f:
            raise ParseError(f"feature row has {len(row)} values, expected {d_f}", line=ln, path=path)
        feats.append(row)
    docs = [ints(ln, s) for ln, s in sections["DOCS"]]
    labels = []
    for ln, s in sections["LABELS"]:
        v = ints(ln, s)
        if len(v) != 1 or not 0 <= v[0] < n_classes:
            raise ParseError(f"bad label {s!r}", line=ln, path=path)
        labels.append(v[0])
    prompts = [ints(ln, s) for ln, s in sections["PROMPTS"]]
    mask = []
    for ln, s in sections["MASK"]:
        if s.strip() not in ("0", "1"):
            raise ParseError(f"mask entries are 0 or 1, got {s!r}", line=ln, path=path)
        mask.append(s.strip() == "1")
    splits = {}
    for ln, s in sections["SPLITS"]:
        parts = s.split()
        if not parts:
            raise ParseError("empty split record", line=ln, path=path)
        splits[parts[0]] = np.array(ints(ln, " ".join(parts[1:])), dtype=np.int64)

    return SyntheticTag(
        n_nodes=n_nodes,
        n_classes=n_classes,
        vocab_size=vocab,
        edges=np.array(edges, dtype=np.int64).reshape(-1, 2),
        features=np.array(feats, dtype=np.float64).reshape(n_nodes, d_f),
        docs=docs,
        labels=np.array(labels, dtype=np.int64),
        class_prompts=prompts,
        noise_mask=np.array(mask, dtype=bool),
        splits=splits,
    )


def write_tag(tag: SyntheticTag, path) -> None:
    Path(path).write_text(serialize_tag(tag), encoding="utf-8")


def load_tag(path) -> SyntheticTag:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not UTF-8 text: {exc}", path=str(path)) from None
    return parse_tag(text, path=str(path))
