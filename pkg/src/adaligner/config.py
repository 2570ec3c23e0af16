"""Flat ``key = value`` run configuration.

One :class:`RunConfig` carries every tunable of a run. Files are UTF-8
text, one assignment per line, ``#`` starts a comment, and unknown keys are
rejected so a typo in a sweep axis fails loudly.
"""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

from .controller import ControllerConfig
from .data import GeneratorConfig
from .errors import ConfigError
from .filtering import FilterConfig
from .losses import LossConfig
from .optim import OptimizerConfig
from .trainer import Configs, TrainConfig

# Toy encoders start from random weights, while the default 1.32e-4 assumes a
# pretrained backbone; this rate converges inside 20 epochs.
DESK_LEARNING_RATE = 1e-3


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    mode: str = "full"
    fixed_theta_value: float = 1.0
    noise_rate: float = 0.0
    output_dir: str = "runs/default"
    dataset: str = ""  # path to a dataset file; generated from the keys below when empty
    data_seed: int = -1  # -1 means "same as seed"
    # generator
    n_nodes: int = 300
    n_classes: int = 6
    p_intra: float = 0.08
    p_inter: float = 0.005
    vocab_size: int = 200
    tokens_per_doc: int = 20
    class_token_skew: float = 0.8
    feature_dim: int = 16
    feature_noise_std: float = 0.5
    imbalance: float = 1.0
    # losses
    tau: float = 0.379
    beta0: float = 0.5
    gamma0: float = 0.5
    mu0: float = 2.0
    neighbor_cap: int = 5
    # controller
    theta0: float = 1.0
    alpha: float = 0.7
    momentum: float = 0.9
    theta_min: float = 0.1
    theta_max: float = 1.9
    beta_min: float = 0.1
    beta_max: float = 0.9
    gamma_min: float = 0.1
    gamma_max: float = 1.9
    mu_min: float = 0.1
    mu_max: float = 1.9
    update_rule: str = "absolute"
    # filter
    rho0: float = 0.9
    lambda_sens: float = 0.5
    rho_min: float = 0.5
    sigma_floor: float = 1e-3
    # optimiser
    learning_rate: float = 1.32e-4
    weight_decay: float = 0.013
    warmup_ratio: float = 0.19
    max_epochs: int = 20
    patience: int = 5
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    # model
    batch_size: int = 16
    hidden_dim: int = 32
    embed_dim: int = 16
    token_dim: int = 32

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @property
    def effective_data_seed(self) -> int:
        return self.seed if self.data_seed < 0 else self.data_seed

    def with_updates(self, **updates) -> "RunConfig":
        return replace(self, **coerce_updates(updates))

    def generator(self) -> GeneratorConfig:
        return GeneratorConfig(
            n_nodes=self.n_nodes, n_classes=self.n_classes, p_intra=self.p_intra, p_inter=self.p_inter,
            vocab_size=self.vocab_size, tokens_per_doc=self.tokens_per_doc,
            class_token_skew=self.class_token_skew, feature_dim=self.feature_dim,
            feature_noise_std=self.feature_noise_std, noise_rate=self.noise_rate, imbalance=self.imbalance,
        )

    def configs(self) -> Configs:
        cfgs = Configs(
            loss=LossConfig(tau=self.tau, beta0=self.beta0, gamma0=self.gamma0, mu0=self.mu0,
                            neighbor_cap=self.neighbor_cap),
            controller=ControllerConfig(
                theta0=self.theta0, alpha=self.alpha, momentum=self.momentum,
                theta_min=self.theta_min, theta_max=self.theta_max,
                beta_range=(self.beta_min, self.beta_max), gamma_range=(self.gamma_min, self.gamma_max),
                mu_range=(self.mu_min, self.mu_max), update_rule=self.update_rule,
            ),
            filter=FilterConfig(rho0=self.rho0, lambda_sens=self.lambda_sens, rho_min=self.rho_min,
                                sigma_floor=self.sigma_floor),
            optimizer=OptimizerConfig(
                learning_rate=self.learning_rate, weight_decay=self.weight_decay,
                warmup_ratio=self.warmup_ratio, max_epochs=self.max_epochs, patience=self.patience,
                adam_beta1=self.adam_beta1, adam_beta2=self.adam_beta2, adam_eps=self.adam_eps,
            ),
            train=TrainConfig(batch_size=self.batch_size, mode=self.mode,
                              fixed_theta_value=self.fixed_theta_value, hidden_dim=self.hidden_dim,
                              embed_dim=self.embed_dim, token_dim=self.token_dim),
        )
        return cfgs

    def validate(self) -> None:
        self.configs().validate()
        self.generator().validate()

    def dumps(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in asdict(self).items())

    def config_hash(self) -> str:
        """Digest of everything except where outputs go."""
        body = "".join(f"{k} = {_format(v)}\n" for k, v in asdict(self).items() if k != "output_dir")
        return hashlib.sha256(body.encode("utf-8")).hexdigest()[:16]


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _format(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def coerce(key: str, raw) -> object:
    if key not in _TYPES:
        raise ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(RunConfig.keys())}")
    kind = _TYPES[key]
    if not isinstance(raw, str):
        raw = str(raw)
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key} expects {kind}, got {raw!r}") from None
    return raw


def coerce_updates(updates: dict) -> dict:
    return {k: coerce(k, v) for k, v in updates.items()}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        if "=" not in body:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in body.split("=", 1))
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = coerce(key, value)
        except ConfigError as exc:
            raise ConfigError(f"{source}:{lineno}: {exc}") from None
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(p))
