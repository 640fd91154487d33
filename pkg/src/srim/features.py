"""Perceptual feature space for sample selection and the training loss.

A feature vector is the weighted concatenation of three components: the
raw pixels and the pre-activations at two tap points of a fixed
convolutional network.  Two interchangeable backends provide the taps:

* ``fixed-random-convnet``: a small convnet with frozen, seeded random
  weights.  Self-contained; used by the test suite.
* ``pretrained-deep-net``: the 19-layer VGG-style stack, tapping the
  second convolution of block 2 and the fourth convolution of block 4,
  with weights loaded from a local ``.npz`` file.

Component weights are calibrated so the mean absolute values of the
weighted components match in order of magnitude.  For nearest-sample
search the (possibly huge) vectors can be pushed through a seeded Gaussian
random projection, which preserves squared distances in expectation.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import layers
from .rngtools import rng_for

# Standard ImageNet mean pixel (RGB), applied after scaling to [0, 255].
MEAN_PIXEL = np.array([123.68, 116.779, 103.939])

COMPONENTS = ("pixels", "deep1", "deep2")
CALIBRATION_FLOOR = 1e-8


def preprocess_for_deep_net(img01: np.ndarray) -> np.ndarray:
    """Scale [0, 1] pixels to [0, 255] and subtract the mean pixel.

    Accepts (H, W, 3) or (B, H, W, 3); raises on values outside [0, 1].
    """
    arr = np.asarray(img01)
    if arr.shape[-1] != 3:
        raise ValueError(f"expected trailing RGB axis, got shape {arr.shape}")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("pixel values must lie in [0, 1]")
    return arr * 255.0 - MEAN_PIXEL.astype(arr.dtype)


class RandomConvNetBackend:
    """Frozen seeded convnet with two pre-activation tap points.

    conv3x3(3->16) relu, conv3x3(16->16) [tap 1], relu, 2x2 mean-pool,
    conv3x3(16->32) relu, conv3x3(32->32) [tap 2].  Requires even input
    dimensions.
    """

    name = "fixed-random-convnet"
    _channels = (16, 16, 32, 32)

    def __init__(self, seed: int = 0, dtype: str = "float64"):
        self.seed = seed
        rng = rng_for(seed, "feature-net")
        dt = np.dtype(dtype)
        self.weights = []
        c_in = 3
        for c_out in self._channels:
            fan_in = 9 * c_in
            w = (rng.standard_normal((3, 3, c_in, c_out)) * np.sqrt(2.0 / fan_in)).astype(dt)
            b = np.zeros(c_out, dtype=dt)
            self.weights.append((w, b))
            c_in = c_out

    def forward(self, pre):
        (w1, b1), (w2, b2), (w3, b3), (w4, b4) = self.weights
        h, c1 = layers.conv2d_forward(pre, w1, b1)
        h, r1 = layers.relu_forward(h)
        tap1, c2 = layers.conv2d_forward(h, w2, b2)
        h, r2 = layers.relu_forward(tap1)
        h, p1 = layers.avgpool2_forward(h)
        h, c3 = layers.conv2d_forward(h, w3, b3)
        h, r3 = layers.relu_forward(h)
        tap2, c4 = layers.conv2d_forward(h, w4, b4)
        return tap1, tap2, (c1, r1, c2, r2, p1, c3, r3, c4)

    def backward(self, cache, d_tap1, d_tap2):
        c1, r1, c2, r2, p1, c3, r3, c4 = cache
        d = layers.conv2d_backward(d_tap2, c4)[0]
        d = layers.relu_backward(d, r3)
        d = layers.conv2d_backward(d, c3)[0]
        d = layers.avgpool2_backward(d, p1)
        d = layers.relu_backward(d, r2)
        d = d + d_tap1
        d = layers.conv2d_backward(d, c2)[0]
        d = layers.relu_backward(d, r1)
        return layers.conv2d_backward(d, c1)[0]

    def checksum(self) -> str:
        digest = hashlib.sha256()
        digest.update(self.name.encode())
        for w, b in self.weights:
            digest.update(np.ascontiguousarray(w, dtype=np.float64).tobytes())
            digest.update(np.ascontiguousarray(b, dtype=np.float64).tobytes())
        return digest.hexdigest()


# VGG-19 convolution stack up to the second tap.  Entries are
# (layer_name, out_channels); "pool" marks 2x2 max-pooling.
_VGG_PLAN = (
    ("conv1_1", 64), ("conv1_2", 64), "pool",
    ("conv2_1", 128), ("conv2_2", 128),   # tap 1: conv2_2 pre-activation
    "pool",
    ("conv3_1", 256), ("conv3_2", 256), ("conv3_3", 256), ("conv3_4", 256), "pool",
    ("conv4_1", 512), ("conv4_2", 512), ("conv4_3", 512), ("conv4_4", 512),
)                                         # tap 2: conv4_4 pre-activation
_VGG_TAPS = ("conv2_2", "conv4_4")


class Vgg19Backend:
    """VGG-19 trunk tapped at conv2_2 and conv4_4 pre-activations.

    Weights come from a local ``.npz`` with keys ``<layer>/w`` of shape
    (3, 3, C_in, C_out) and ``<layer>/b`` of shape (C_out,); convert
    torchvision's OIHW tensors with ``weight.transpose(2, 3, 1, 0)``.
    Input dimensions must be divisible by 8.
    """

    name = "pretrained-deep-net"

    def __init__(self, weights_path, dtype: str = "float64"):
        self.weights_path = str(weights_path)
        dt = np.dtype(dtype)
        with np.load(weights_path) as data:
            self.weights = {}
            c_in = 3
            for entry in _VGG_PLAN:
                if entry == "pool":
                    continue
                layer_name, c_out = entry
                w = data[f"{layer_name}/w"]
                b = data[f"{layer_name}/b"]
                if w.shape != (3, 3, c_in, c_out) or b.shape != (c_out,):
                    raise ValueError(
                        f"{weights_path}: {layer_name} has shape {w.shape}, "
                        f"expected (3, 3, {c_in}, {c_out})"
                    )
                self.weights[layer_name] = (w.astype(dt), b.astype(dt))
                c_in = c_out
        with open(weights_path, "rb") as fh:
            self._checksum = hashlib.sha256(fh.read()).hexdigest()

    def forward(self, pre):
        taps = {}
        trace = []
        h = pre
        for entry in _VGG_PLAN:
            if entry == "pool":
                h, cache = layers.maxpool2_forward(h)
                trace.append(("pool", cache))
                continue
            layer_name, _ = entry
            w, b = self.weights[layer_name]
            h, cache = layers.conv2d_forward(h, w, b)
            trace.append(("conv", cache))
            if layer_name in _VGG_TAPS:
                taps[layer_name] = h
            if layer_name != _VGG_PLAN[-1][0]:
                h, cache = layers.relu_forward(h)
                trace.append(("relu", cache))
        return taps[_VGG_TAPS[0]], taps[_VGG_TAPS[1]], trace

    def backward(self, trace, d_tap1, d_tap2):
        # Walk the trace in reverse, injecting the first tap's gradient at
        # the conv2_2 pre-activation (just before its relu going forward).
        plan_layers = [e for e in _VGG_PLAN if e != "pool"]
        conv_names = iter(name for name, _ in reversed(plan_layers))
        d = d_tap2
        for kind, cache in reversed(trace):
            if kind == "relu":
                d = layers.relu_backward(d, cache)
            elif kind == "pool":
                d = layers.maxpool2_backward(d, cache)
            else:
                layer_name = next(conv_names)
                if layer_name == _VGG_TAPS[0]:
                    d = d + d_tap1
                d = layers.conv2d_backward(d, cache)[0]
        return d

    def checksum(self) -> str:
        return self._checksum


@dataclass
class FeatureVector:
    """Flat weighted feature vector with per-component layout."""

    data: np.ndarray
    layout: list  # (component name, offset, length)

    def __len__(self) -> int:
        return self.data.shape[0]

    def component(self, name: str) -> np.ndarray:
        for comp, off, length in self.layout:
            if comp == name:
                return self.data[off:off + length]
        raise KeyError(name)


@dataclass
class FeatureExtractor:
    """Weighted (pixels, tap1, tap2) feature map over [0, 1] images."""

    backend: object
    weights: np.ndarray = field(default_factory=lambda: np.ones(len(COMPONENTS)))
    expected_size: tuple | None = None

    def _check(self, batch01):
        arr = np.asarray(batch01)
        if arr.ndim == 3:
            arr = arr[None]
        if arr.ndim != 4 or arr.shape[3] != 3:
            raise ValueError(f"expected (B, H, W, 3) images, got {arr.shape}")
        if self.expected_size is not None and arr.shape[1:3] != tuple(self.expected_size):
            raise ValueError(
                f"extractor expects {self.expected_size} images, got {arr.shape[1:3]}"
            )
        return arr

    def forward_parts(self, batch01):
        """Unweighted components for a batch; returns ``(parts, cache)``."""
        batch01 = self._check(batch01)
        pre = preprocess_for_deep_net(batch01)
        tap1, tap2, trace = self.backend.forward(pre)
        parts = {"pixels": batch01, "deep1": tap1, "deep2": tap2}
        return parts, (batch01.shape, trace)

    def backward_parts(self, cache, d_parts):
        """Gradient w.r.t. the [0, 1] input batch."""
        shape, trace = cache
        d_pre = self.backend.backward(trace, d_parts["deep1"], d_parts["deep2"])
        return d_parts["pixels"] + 255.0 * d_pre

    def extract_batch(self, batch01) -> np.ndarray:
        """(B, D) weighted flat features."""
        parts, _ = self.forward_parts(batch01)
        b = parts["pixels"].shape[0]
        return np.concatenate(
            [
                (alpha * parts[name]).reshape(b, -1)
                for name, alpha in zip(COMPONENTS, self.weights)
            ],
            axis=1,
        )

    def extract(self, img01) -> FeatureVector:
        parts, _ = self.forward_parts(img01)
        flats, layout, offset = [], [], 0
        for name, alpha in zip(COMPONENTS, self.weights):
            flat = (alpha * parts[name]).reshape(-1)
            layout.append((name, offset, flat.shape[0]))
            offset += flat.shape[0]
            flats.append(flat)
        return FeatureVector(np.concatenate(flats), layout)

    def checksum(self) -> str:
        return self.backend.checksum()


def make_extractor(backend: str, *, seed: int = 0, weights_path=None,
                   expected_size=None, dtype: str = "float64") -> FeatureExtractor:
    if backend == RandomConvNetBackend.name:
        net = RandomConvNetBackend(seed=seed, dtype=dtype)
    elif backend == Vgg19Backend.name:
        if weights_path is None:
            raise ValueError("pretrained-deep-net backend needs a weights file path")
        net = Vgg19Backend(weights_path, dtype=dtype)
    else:
        raise ValueError(f"unknown feature backend {backend!r}")
    return FeatureExtractor(net, expected_size=expected_size)


def calibrate_weights(extractor: FeatureExtractor, calibration_images) -> np.ndarray:
    """Set component weights to the reciprocal mean absolute activation.

    After calibration the weighted components have mean absolute value 1
    (up to the floor), so no component dominates the distance.
    """
    images = list(calibration_images)
    if not images:
        raise ValueError("calibration set must not be empty")
    totals = {name: 0.0 for name in COMPONENTS}
    counts = {name: 0 for name in COMPONENTS}
    for img in images:
        parts, _ = extractor.forward_parts(img)
        for name in COMPONENTS:
            totals[name] += np.abs(parts[name]).sum()
            counts[name] += parts[name].size
    alphas = np.array(
        [1.0 / max(totals[n] / counts[n], CALIBRATION_FLOOR) for n in COMPONENTS]
    )
    extractor.weights = alphas
    return alphas


def component_mean_magnitudes(extractor: FeatureExtractor, images) -> np.ndarray:
    """Mean absolute value of each *weighted* component over a set."""
    totals = np.zeros(len(COMPONENTS))
    counts = np.zeros(len(COMPONENTS))
    for img in images:
        parts, _ = extractor.forward_parts(img)
        for k, name in enumerate(COMPONENTS):
            totals[k] += extractor.weights[k] * np.abs(parts[name]).sum()
            counts[k] += parts[name].size
    return totals / counts


@dataclass
class ProjectionMatrix:
    """Seeded Gaussian projection with entry variance 1/target_dim.

    With this scaling, squared Euclidean distances are preserved in
    expectation.  The matrix is fixed for a whole training run and applied
    to both generated samples and ground truths.
    """

    matrix: np.ndarray
    seed: int

    @classmethod
    def create(cls, seed: int, source_dim: int, target_dim: int,
               dtype: str = "float64") -> "ProjectionMatrix":
        if source_dim < 1 or target_dim < 1:
            raise ValueError("projection dimensions must be >= 1")
        rng = rng_for(seed, "projection")
        mat = rng.standard_normal((target_dim, source_dim)) / np.sqrt(target_dim)
        return cls(mat.astype(np.dtype(dtype)), seed)

    @property
    def source_dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def target_dim(self) -> int:
        return self.matrix.shape[0]

    def project(self, vectors) -> np.ndarray:
        """Project a (D,) vector or (N, D) batch."""
        arr = vectors.data if isinstance(vectors, FeatureVector) else np.asarray(vectors)
        if arr.shape[-1] != self.source_dim:
            raise ValueError(
                f"vector length {arr.shape[-1]} != projection source dim {self.source_dim}"
            )
        return arr @ self.matrix.T.astype(arr.dtype, copy=False)


def feature_distance(a, b) -> float:
    """Squared Euclidean distance between two feature vectors."""
    av = a.data if isinstance(a, FeatureVector) else np.asarray(a)
    bv = b.data if isinstance(b, FeatureVector) else np.asarray(b)
    if av.shape != bv.shape:
        raise ValueError(f"length mismatch: {av.shape} vs {bv.shape}")
    diff = (av - bv).ravel()
    return float(diff @ diff)


def feature_loss_and_grad(extractor: FeatureExtractor, out01, target_parts):
    """Total weighted squared feature error of a batch and its input gradient.

    ``target_parts`` holds the precomputed unweighted components of the
    ground truths (same batch shapes as the outputs).
    """
    parts, cache = extractor.forward_parts(out01)
    loss = 0.0
    d_parts = {}
    for name, alpha in zip(COMPONENTS, extractor.weights):
        diff = parts[name] - target_parts[name]
        loss += float(alpha) ** 2 * float((diff * diff).sum())
        d_parts[name] = (2.0 * float(alpha) ** 2) * diff
    return loss, extractor.backward_parts(cache, d_parts)
