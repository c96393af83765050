"""Regressor configuration with validation."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

from ..errors import ConfigError

BART = "bart_lite"
FOREST = "random_forest"
KIND_ALIASES = {"bart": BART, "bart_lite": BART, "rf": FOREST, "random_forest": FOREST}
DEFAULT_TREES = {BART: 50, FOREST: 500}


@dataclass(frozen=True)
class BartParams:
    """Sampler and prior settings for the sum-of-trees model.

    ``node_scale`` is the divisor ``q`` in the leaf prior sd
    ``sigma_q = sigma_0 / sqrt(q)`` (default: the number of trees), with
    ``sigma_0 = 0.5 / k`` on the outcome rescaled to ``[-0.5, 0.5]``.
    """

    base: float = 0.95
    power: float = 2.0
    node_scale: float | None = None
    k: float = 2.0
    sigma_df: float = 3.0
    sigma_quantile: float = 0.9
    burn_in: int = 250
    draws: int = 1000
    thin: int = 1
    max_depth: int = 8
    max_cuts: int = 100


@dataclass(frozen=True)
class ForestParams:
    """Bagged CART settings; ``mtry`` defaults to ``ceil(P / 3)``."""

    mtry: int | None = None
    min_node: int = 5
    bootstrap: bool = True
    max_depth: int = 64


@dataclass(frozen=True)
class RegressorConfig:
    kind: str = BART
    trees: int | None = None
    bart: BartParams = field(default_factory=BartParams)
    rf: ForestParams = field(default_factory=ForestParams)
    seed: int = 0

    def __post_init__(self):
        kind = KIND_ALIASES.get(str(self.kind).lower())
        if kind is None:
            raise ConfigError("kind", f"unknown regressor {self.kind!r}; use bart or rf")
        object.__setattr__(self, "kind", kind)
        if isinstance(self.bart, dict):
            object.__setattr__(self, "bart", BartParams(**self.bart))
        if isinstance(self.rf, dict):
            object.__setattr__(self, "rf", ForestParams(**self.rf))
        if self.trees is None:
            object.__setattr__(self, "trees", DEFAULT_TREES[kind])
        self._validate()

    def _validate(self):
        if int(self.trees) != self.trees or self.trees < 1:
            raise ConfigError("trees", f"must be a positive integer, got {self.trees}")
        b = self.bart
        if not 0.0 < b.base < 1.0:
            raise ConfigError("bart.base", f"must lie in (0, 1), got {b.base}")
        if b.power < 0:
            raise ConfigError("bart.power", f"must be nonnegative, got {b.power}")
        if b.node_scale is not None and b.node_scale <= 0:
            raise ConfigError("bart.node_scale", "must be positive")
        if b.k <= 0:
            raise ConfigError("bart.k", "must be positive")
        if b.sigma_df <= 0:
            raise ConfigError("bart.sigma_df", "must be positive")
        if not 0.0 < b.sigma_quantile < 1.0:
            raise ConfigError("bart.sigma_quantile", "must lie in (0, 1)")
        if b.burn_in < 0:
            raise ConfigError("bart.burn_in", "must be nonnegative")
        if b.draws < 1:
            raise ConfigError("bart.draws", f"must be at least 1, got {b.draws}")
        if b.thin < 1:
            raise ConfigError("bart.thin", f"must be at least 1, got {b.thin}")
        if not 1 <= b.max_depth <= 20:
            raise ConfigError("bart.max_depth", "must lie in [1, 20]")
        if b.max_cuts < 1:
            raise ConfigError("bart.max_cuts", "must be positive")
        r = self.rf
        if r.mtry is not None and r.mtry < 1:
            raise ConfigError("rf.mtry", "must be positive")
        if r.min_node < 1:
            raise ConfigError("rf.min_node", "must be positive")
        if r.max_depth < 1:
            raise ConfigError("rf.max_depth", "must be positive")

    @property
    def node_scale(self):
        return float(self.trees if self.bart.node_scale is None else self.bart.node_scale)

    def mtry_for(self, p):
        m = self.rf.mtry if self.rf.mtry is not None else -(-p // 3)
        return max(1, min(int(m), p))

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        return cls(**d)
