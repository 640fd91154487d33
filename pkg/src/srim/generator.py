"""Two-stage stochastic super-resolution network.

The model maps a low-resolution image plus a pair of noise maps to a 4x
upscaled image.  Each of the two stages bilinearly upsamples its input by
2x, concatenates a per-pixel Gaussian noise map, and applies a stack of
5x5 convolutions (conv -> batchnorm -> ReLU between layers, sigmoid at the
end).  Every layer after the first also receives the bilinearly upsampled
input image as extra channels: the lower stage re-uses its own 2x
upsampling, the upper stage gets the original input upsampled 4x.

Parameters live in a flat ``{name: ndarray}`` dict (see ``param_shapes``
for the naming scheme) so checkpoints, optimizers, and gradient checks can
treat them uniformly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import layers
from .rngtools import rng_for

STAGES = ("lower", "upper")
COLOR_CHANNELS = 3
CHECKPOINT_VERSION = 1


class CheckpointError(RuntimeError):
    """Checkpoint missing, malformed, or written under a different config."""


@dataclass(frozen=True)
class SubNetworkConfig:
    conv_layers: int = 9
    kernel_size: int = 5
    hidden_channels: int = 64

    def validate(self):
        if self.conv_layers < 2:
            raise ValueError(f"conv_layers must be >= 2, got {self.conv_layers}")
        if self.kernel_size % 2 != 1 or self.kernel_size < 1:
            raise ValueError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.hidden_channels < 1:
            raise ValueError(f"hidden_channels must be >= 1, got {self.hidden_channels}")


@dataclass(frozen=True)
class GeneratorConfig:
    lower: SubNetworkConfig = field(default_factory=SubNetworkConfig)
    upper: SubNetworkConfig = field(default_factory=SubNetworkConfig)
    noise_channels: int = 1
    dtype: str = "float64"

    def validate(self):
        self.lower.validate()
        self.upper.validate()
        if self.noise_channels < 1:
            raise ValueError(f"noise_channels must be >= 1, got {self.noise_channels}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype}")

    def stage(self, name: str) -> SubNetworkConfig:
        return {"lower": self.lower, "upper": self.upper}[name]

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)


@dataclass
class NoisePair:
    """Noise maps for the two stages: (2h, 2w, k) and (4h, 4w, k)."""

    z_lower: np.ndarray
    z_upper: np.ndarray


@dataclass
class GeneratorParams:
    config: GeneratorConfig
    params: dict
    stats: dict
    step: int = 0

    def copy(self) -> "GeneratorParams":
        return GeneratorParams(
            self.config,
            {k: v.copy() for k, v in self.params.items()},
            {k: v.copy() for k, v in self.stats.items()},
            self.step,
        )

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.params.values()) and all(
            np.isfinite(v).all() for v in self.stats.values()
        )


def param_shapes(config: GeneratorConfig) -> dict:
    """Shapes of every learnable tensor, keyed ``stage/conv{i}/w`` etc.

    Layer 1 of each stage sees the upsampled image plus the noise map
    (3 + noise_channels input channels); layers 2..L see the previous
    hidden state plus the 3 skip channels; layer L outputs 3 channels.
    """
    config.validate()
    shapes = {}
    for stage in STAGES:
        sub = config.stage(stage)
        k, hidden = sub.kernel_size, sub.hidden_channels
        for i in range(1, sub.conv_layers + 1):
            c_in = (
                COLOR_CHANNELS + config.noise_channels
                if i == 1
                else hidden + COLOR_CHANNELS
            )
            c_out = COLOR_CHANNELS if i == sub.conv_layers else hidden
            shapes[f"{stage}/conv{i}/w"] = (k, k, c_in, c_out)
            shapes[f"{stage}/conv{i}/b"] = (c_out,)
            if i < sub.conv_layers:
                shapes[f"{stage}/bn{i}/gamma"] = (c_out,)
                shapes[f"{stage}/bn{i}/beta"] = (c_out,)
    return shapes


def init_params(config: GeneratorConfig, seed: int) -> GeneratorParams:
    """Fan-in-scaled Gaussian kernels, zero biases, identity normalization."""
    rng = rng_for(seed, "generator-init")
    dtype = config.np_dtype
    params, stats = {}, {}
    for name, shape in param_shapes(config).items():
        kind = name.rsplit("/", 1)[-1]
        if kind == "w":
            fan_in = shape[0] * shape[1] * shape[2]
            arr = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        elif kind == "gamma":
            arr = np.ones(shape)
        else:  # biases and beta
            arr = np.zeros(shape)
        params[name] = arr.astype(dtype)
    for stage in STAGES:
        sub = config.stage(stage)
        for i in range(1, sub.conv_layers):
            c = sub.hidden_channels
            stats[f"{stage}/bn{i}/mean"] = np.zeros(c, dtype=dtype)
            stats[f"{stage}/bn{i}/var"] = np.ones(c, dtype=dtype)
    return GeneratorParams(config, params, stats)


def draw_noise_pair(rng: np.random.Generator, h: int, w: int, config: GeneratorConfig,
                    batch: int = 1) -> NoisePair:
    """Standard-normal noise maps for a batch of (h, w) inputs."""
    k = config.noise_channels
    dtype = config.np_dtype
    z_lo = rng.standard_normal((batch, 2 * h, 2 * w, k)).astype(dtype)
    z_up = rng.standard_normal((batch, 4 * h, 4 * w, k)).astype(dtype)
    return NoisePair(z_lo, z_up)


def _check_batch(x, name, channels):
    x = np.asarray(x)
    if x.ndim != 4 or x.shape[3] != channels:
        raise ValueError(f"{name}: expected (B, H, W, {channels}), got {x.shape}")
    return x


def sub_forward(gp: GeneratorParams, stage: str, x01, z, *, train=False,
                update_running=True, skip=None):
    """One stage: (B, s, s, 3) plus (B, 2s, 2s, k) noise -> (B, 2s, 2s, 3).

    ``skip`` overrides the image fed to layers 2..L (used by the upper
    stage, whose skips come from the 4x-upsampled original input).
    Returns ``(output, cache)``.
    """
    config = gp.config
    sub = config.stage(stage)
    x01 = _check_batch(x01, "input image", COLOR_CHANNELS)
    z = _check_batch(z, "noise map", config.noise_channels)
    if z.shape[1:3] != (2 * x01.shape[1], 2 * x01.shape[2]) or z.shape[0] != x01.shape[0]:
        raise ValueError(
            f"noise shape {z.shape} inconsistent with input shape {x01.shape}"
        )
    up, up_cache = layers.bilinear_upsample_forward(x01, 2)
    skip_src = up if skip is None else _check_batch(skip, "skip image", COLOR_CHANNELS)
    h = np.concatenate([up, z.astype(up.dtype, copy=False)], axis=3)
    layer_caches = []
    for i in range(1, sub.conv_layers + 1):
        inp = h if i == 1 else np.concatenate([h, skip_src], axis=3)
        h, conv_cache = layers.conv2d_forward(
            inp, gp.params[f"{stage}/conv{i}/w"], gp.params[f"{stage}/conv{i}/b"]
        )
        if i < sub.conv_layers:
            h, bn_cache = layers.batchnorm_forward(
                h,
                gp.params[f"{stage}/bn{i}/gamma"],
                gp.params[f"{stage}/bn{i}/beta"],
                gp.stats[f"{stage}/bn{i}/mean"],
                gp.stats[f"{stage}/bn{i}/var"],
                train=train,
                update_running=update_running,
            )
            h, relu_cache = layers.relu_forward(h)
            layer_caches.append((conv_cache, bn_cache, relu_cache))
        else:
            h, sig_cache = layers.sigmoid_forward(h)
            layer_caches.append((conv_cache, sig_cache))
    cache = (stage, sub, up_cache, skip is None, layer_caches)
    return h, cache


def sub_backward(gp: GeneratorParams, cache, d_out):
    """Backward through one stage.

    Returns ``(grads, d_x, d_skip)`` where ``d_skip`` is the gradient
    w.r.t. the external skip image (None when the stage skips from its own
    upsampled input).
    """
    stage, sub, up_cache, skip_is_internal, layer_caches = cache
    hidden = sub.hidden_channels
    grads = {}
    d_skip_total = None
    d_h = None
    for i in range(sub.conv_layers, 0, -1):
        if i == sub.conv_layers:
            conv_cache, sig_cache = layer_caches[i - 1]
            d = layers.sigmoid_backward(d_out, sig_cache)
        else:
            conv_cache, bn_cache, relu_cache = layer_caches[i - 1]
            d = layers.relu_backward(d_h, relu_cache)
            d, dgamma, dbeta = layers.batchnorm_backward(d, bn_cache)
            grads[f"{stage}/bn{i}/gamma"] = dgamma
            grads[f"{stage}/bn{i}/beta"] = dbeta
        d_inp, dw, db = layers.conv2d_backward(d, conv_cache)
        grads[f"{stage}/conv{i}/w"] = dw
        grads[f"{stage}/conv{i}/b"] = db
        if i == 1:
            d_up = d_inp[..., :COLOR_CHANNELS]
        else:
            d_h = d_inp[..., :hidden]
            d_skip = d_inp[..., hidden:]
            d_skip_total = d_skip if d_skip_total is None else d_skip_total + d_skip
    d_skip_out = None
    if skip_is_internal:
        if d_skip_total is not None:
            d_up = d_up + d_skip_total
    else:
        d_skip_out = d_skip_total
    d_x = layers.bilinear_upsample_backward(d_up, up_cache)
    return grads, d_x, d_skip_out


def forward(gp: GeneratorParams, x01, noise: NoisePair, *, train=False,
            update_running=True):
    """Full two-stage pass: (B, h, w, 3) -> mid (B, 2h, 2w, 3), out (B, 4h, 4w, 3).

    Returns ``(mid, out, cache)``.
    """
    x01 = _check_batch(x01, "input image", COLOR_CHANNELS)
    x01 = x01.astype(gp.config.np_dtype, copy=False)
    skip4, skip4_cache = layers.bilinear_upsample_forward(x01, 4)
    mid, lower_cache = sub_forward(
        gp, "lower", x01, noise.z_lower, train=train, update_running=update_running
    )
    out, upper_cache = sub_forward(
        gp, "upper", mid, noise.z_upper, train=train,
        update_running=update_running, skip=skip4,
    )
    return mid, out, (lower_cache, upper_cache, skip4_cache)


def backward(gp: GeneratorParams, cache, d_out):
    """Parameter gradients of a scalar loss given its gradient at the output."""
    lower_cache, upper_cache, _ = cache
    grads, d_mid, _d_skip4 = sub_backward(gp, upper_cache, d_out)
    lower_grads, _d_x, _ = sub_backward(gp, lower_cache, d_mid)
    grads.update(lower_grads)
    return grads


def sample(gp: GeneratorParams, x01, seed: int) -> np.ndarray:
    """Draw one 4x super-resolved sample for a single (h, w, 3) input."""
    x01 = np.asarray(x01)
    if x01.ndim != 3:
        raise ValueError(f"expected a single (H, W, 3) image, got {x01.shape}")
    noise = draw_noise_pair(
        rng_for(seed, "sample-noise"), x01.shape[0], x01.shape[1], gp.config
    )
    _, out, _ = forward(gp, x01[None], noise, train=False, update_running=False)
    return out[0]


def save_checkpoint(path, gp: GeneratorParams, *, seed=None, extra_arrays=None,
                    extra_meta=None) -> None:
    """Write a versioned checkpoint: config echo, step, params, batch stats.

    ``extra_arrays``/``extra_meta`` let the trainer piggyback optimizer
    moments and run bookkeeping in the same container.
    """
    meta = {
        "version": CHECKPOINT_VERSION,
        "config": asdict(gp.config),
        "step": gp.step,
        "seed": seed,
        "extra": extra_meta or {},
    }
    payload = {"__meta__": np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8)}
    for key, arr in gp.params.items():
        payload[f"param/{key}"] = arr
    for key, arr in gp.stats.items():
        payload[f"stat/{key}"] = arr
    for key, arr in (extra_arrays or {}).items():
        payload[f"extra/{key}"] = arr
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path, expect_config: GeneratorConfig | None = None):
    """Load a checkpoint; returns ``(GeneratorParams, meta, extra_arrays)``.

    Raises ``CheckpointError`` on version/config mismatch.
    """
    try:
        with np.load(path) as data:
            contents = {k: data[k] for k in data.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if "__meta__" not in contents:
        raise CheckpointError(f"{path}: missing checkpoint metadata")
    meta = json.loads(bytes(contents.pop("__meta__")).decode("utf-8"))
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {meta.get('version')}"
        )
    cfg_dict = meta["config"]
    config = GeneratorConfig(
        lower=SubNetworkConfig(**cfg_dict["lower"]),
        upper=SubNetworkConfig(**cfg_dict["upper"]),
        noise_channels=cfg_dict["noise_channels"],
        dtype=cfg_dict["dtype"],
    )
    if expect_config is not None and config != expect_config:
        raise CheckpointError(
            f"{path}: checkpoint config {config} does not match expected {expect_config}"
        )
    params = {k[len("param/"):]: v for k, v in contents.items() if k.startswith("param/")}
    stats = {k[len("stat/"):]: v for k, v in contents.items() if k.startswith("stat/")}
    extras = {k[len("extra/"):]: v for k, v in contents.items() if k.startswith("extra/")}
    expected = set(param_shapes(config))
    if set(params) != expected:
        raise CheckpointError(f"{path}: parameter keys do not match config")
    gp = GeneratorParams(config, params, stats, step=int(meta["step"]))
    return gp, meta, extras
