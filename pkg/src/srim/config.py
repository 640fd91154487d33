"""Run configuration: flat key-value files, env vars, CLI overrides.

Precedence, lowest to highest: built-in defaults, config file, environment
variables (``SRIM_<KEY>``), explicit command-line overrides.  Unknown keys
are rejected everywhere so typos fail loudly before any work starts.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass

from . import features, generator, trainer

ENV_PREFIX = "SRIM_"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    # data pipeline
    target_size: int = 32          # high-resolution side length
    scale_factor: int = 4
    split_fraction: float = 0.9
    # generator architecture
    conv_layers: int = 9
    kernel_size: int = 5
    hidden_channels: int = 64
    noise_channels: int = 1
    dtype: str = "float64"
    # feature space
    feature_backend: str = features.RandomConvNetBackend.name
    feature_weights: str = ""      # weights .npz for the pretrained backend
    projection_dim: int = 2048
    # training loop
    outer_iterations: int = 1000
    inner_steps: int = 50
    pool_lower: int = 16
    pool_upper: int = 16
    batch_select: int = 16
    batch_inner: int = 4
    learning_rate: float = 1e-4
    optimizer: str = "adam"
    checkpoint_every: int = 100
    lower_metric: str = "pixel"
    seed: int = 0

    def validate(self, *, for_train: bool = False) -> None:
        if self.target_size < 4 or self.target_size % 4 != 0:
            raise ConfigError(f"target_size {self.target_size} must be a positive multiple of 4")
        if self.scale_factor < 1:
            raise ConfigError("scale_factor must be >= 1")
        if self.target_size % self.scale_factor != 0:
            raise ConfigError(
                f"target_size {self.target_size} not divisible by scale_factor {self.scale_factor}"
            )
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError(f"split_fraction must be in (0, 1), got {self.split_fraction}")
        if self.pool_lower < 1 or self.pool_upper < 1:
            raise ConfigError("pool sizes must be >= 1")
        if self.batch_inner > self.batch_select:
            raise ConfigError(
                f"batch_inner {self.batch_inner} exceeds batch_select {self.batch_select}"
            )
        if self.feature_backend not in (features.RandomConvNetBackend.name,
                                        features.Vgg19Backend.name):
            raise ConfigError(f"unknown feature_backend {self.feature_backend!r}")
        if for_train:
            # the generator is two fixed x2 stages
            if self.scale_factor != 4:
                raise ConfigError("training requires scale_factor 4")
            if self.feature_backend == features.Vgg19Backend.name and not self.feature_weights:
                raise ConfigError("pretrained-deep-net backend requires feature_weights")
        try:
            self.generator_config().validate()
            self.train_config().validate()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def generator_config(self) -> generator.GeneratorConfig:
        sub = generator.SubNetworkConfig(
            conv_layers=self.conv_layers,
            kernel_size=self.kernel_size,
            hidden_channels=self.hidden_channels,
        )
        return generator.GeneratorConfig(
            lower=sub, upper=sub,
            noise_channels=self.noise_channels, dtype=self.dtype,
        )

    def train_config(self) -> trainer.TrainConfig:
        return trainer.TrainConfig(
            outer_iterations=self.outer_iterations,
            inner_steps=self.inner_steps,
            pool_lower=self.pool_lower,
            pool_upper=self.pool_upper,
            batch_select=self.batch_select,
            batch_inner=self.batch_inner,
            learning_rate=self.learning_rate,
            optimizer=self.optimizer,
            seed=self.seed,
            checkpoint_every=self.checkpoint_every,
            projection_dim=self.projection_dim,
            lower_metric=self.lower_metric,
        )

    def make_extractor(self) -> features.FeatureExtractor:
        return features.make_extractor(
            self.feature_backend,
            seed=self.seed,
            weights_path=self.feature_weights or None,
            dtype=self.dtype,
        )


FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _convert(key: str, raw: str):
    kind = FIELD_TYPES[key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from exc


def parse_config_file(path) -> dict:
    """Read ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in FIELD_TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = _convert(key, raw)
    return values


def env_overrides(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    values = {}
    for key in FIELD_TYPES:
        raw = environ.get(ENV_PREFIX + key.upper())
        if raw is not None:
            values[key] = _convert(key, raw)
    return values


def load_config(path=None, environ=None, overrides=None) -> RunConfig:
    """Merge defaults, config file, environment, and explicit overrides."""
    merged = {}
    if path:
        merged.update(parse_config_file(path))
    merged.update(env_overrides(environ))
    for key, value in (overrides or {}).items():
        if key not in FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        merged[key] = _convert(key, value) if isinstance(value, str) else value
    return RunConfig(**merged)


def config_lines(config: RunConfig) -> list[str]:
    return [f"{f.name} = {getattr(config, f.name)}"
            for f in dataclasses.fields(RunConfig)]
