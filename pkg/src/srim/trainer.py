"""Conditional IMLE training loop with hierarchical noise selection.

Each outer iteration picks a batch of training examples, draws a pool of
noise candidates per example, keeps the candidate whose output lands
nearest the ground truth in feature space, and then takes several
gradient steps on the selected samples (recomputing them under the
current parameters; only the noise is cached, so gradients stay exact).

Selection is hierarchical: lower-stage noise is chosen first by comparing
lower-stage outputs against the ground truth downsampled to half
resolution, then upper-stage noise is chosen by the full feature
distance, optionally in a random projection space.

Determinism: every iteration draws from its own seeded stream, a pure
function of (seed, iteration), so a resumed run replays the remaining
iterations exactly.  Run artifacts (manifest, loss CSV) contain no wall
clock values and are byte-identical across reruns.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import features, generator, layers, optim, resample, search
from .image import to_float01
from .rngtools import rng_for

LOWER_METRICS = ("pixel", "feature")
CALIBRATION_BATCH = 16
SMOOTH_WINDOW = 20
CHECKPOINT_NAME = "checkpoint.npz"
DIVERGED_NAME = "diverged.npz"
LOSS_CSV_NAME = "loss.csv"
MANIFEST_NAME = "manifest.txt"


class TrainingDiverged(RuntimeError):
    """Loss or parameters became NaN/Inf; carries the outer iteration."""

    def __init__(self, message: str, iteration: int | None = None):
        super().__init__(message)
        self.iteration = iteration


@dataclass(frozen=True)
class TrainConfig:
    """Outer/inner loop sizes, pool sizes, and optimization settings.

    ``pool_lower``/``pool_upper`` are the per-example candidate counts for
    the two selection stages; ``batch_select`` examples get fresh
    selections each outer iteration and ``batch_inner`` of them enter each
    inner gradient step.
    """

    outer_iterations: int = 1000
    inner_steps: int = 50
    pool_lower: int = 16
    pool_upper: int = 16
    batch_select: int = 16
    batch_inner: int = 4
    learning_rate: float = 1e-4
    optimizer: str = "adam"
    seed: int = 0
    checkpoint_every: int = 100
    projection_dim: int = 2048
    lower_metric: str = "pixel"

    def validate(self, n: int | None = None) -> None:
        if self.outer_iterations < 0 or self.inner_steps < 0:
            raise ValueError("iteration counts must be >= 0")
        if self.pool_lower < 1 or self.pool_upper < 1:
            raise ValueError("pool sizes must be >= 1")
        if not (1 <= self.batch_inner <= self.batch_select):
            raise ValueError(
                f"need 1 <= batch_inner <= batch_select, got "
                f"{self.batch_inner} > {self.batch_select}"
            )
        # learning_rate 0 is allowed: it freezes parameters and running
        # statistics, which the replay tests rely on.
        if self.learning_rate < 0:
            raise ValueError("learning rate must be >= 0")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.checkpoint_every < 1:
            raise ValueError("checkpoint_every must be >= 1")
        if self.projection_dim < 0:
            raise ValueError("projection_dim must be >= 0 (0 disables)")
        if self.lower_metric not in LOWER_METRICS:
            raise ValueError(f"lower_metric must be one of {LOWER_METRICS}")
        if n is not None and self.batch_select > n:
            raise ValueError(
                f"batch_select {self.batch_select} exceeds training-set size {n}"
            )


@dataclass
class SelectionRecord:
    """Chosen noise for one example with its stage-wise distances."""

    example_id: int
    noise: generator.NoisePair  # unbatched maps: (2h, 2w, k), (4h, 4w, k)
    distance: float             # feature distance of the selected full output
    distance_lower: float       # lower-stage distance of the chosen lower noise


@dataclass
class TrainHistory:
    """Per-iteration selection distances and inner-step losses.

    ``timestamps`` are wall-clock seconds at iteration end.  They stay in
    memory only: checkpoints and the loss CSV exclude them so artifacts
    are byte-identical across reruns (resumed runs carry NaN for the
    iterations done before the resume).
    """

    mean_selected_distance: np.ndarray   # (N_done,)
    inner_losses: np.ndarray             # (N_done, M)
    timestamps: np.ndarray               # (N_done,)

    def __len__(self) -> int:
        return self.mean_selected_distance.shape[0]

    def to_csv(self) -> str:
        lines = ["iteration,mean_selected_distance,mean_inner_loss"]
        for i in range(len(self)):
            inner = self.inner_losses[i]
            mean_inner = repr(float(inner.mean())) if inner.size else ""
            lines.append(
                f"{i + 1},{float(self.mean_selected_distance[i])!r},{mean_inner}"
            )
        return "\n".join(lines) + "\n"


def smoothed_endpoints(values, window: int = SMOOTH_WINDOW) -> tuple[float, float]:
    """Mean of the first and last ``window`` entries (loss-trend check)."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise ValueError("no values to smooth")
    w = min(window, arr.size)
    return float(arr[:w].mean()), float(arr[-w:].mean())


def _require_hr_shape(x, y):
    if y.shape[0] != 4 * x.shape[0] or y.shape[1] != 4 * x.shape[1]:
        raise ValueError(
            f"ground truth {y.shape[:2]} is not 4x the input {x.shape[:2]}"
        )


def hierarchical_select(gp, x, y, m_lower, m_upper, rng, *, extractor,
                        projection=None, lower_metric: str = "pixel",
                        example_id: int = 0, target_mid=None,
                        target_feat=None) -> SelectionRecord:
    """Two-stage nearest-sample selection for one example.

    Draws ``m_lower`` lower-stage noise maps (one batched forward pass,
    eval mode), keeps the one whose half-resolution output is nearest the
    ground truth downsampled by 2, then draws ``m_upper`` upper-stage maps
    on top of that fixed lower noise and keeps the full output nearest in
    feature space.  Noise is drawn from ``rng`` in that order, so an
    external script with the same stream replays the selection exactly.

    ``target_mid`` and ``target_feat`` are optional precomputed targets
    (the half-resolution image, and the feature vector already in the
    selection space, i.e. projected when ``projection`` is given).
    """
    x = np.asarray(x)
    y = np.asarray(y)
    if x.ndim != 3 or y.ndim != 3:
        raise ValueError("hierarchical_select takes single (H, W, 3) images")
    _require_hr_shape(x, y)
    if m_lower < 1 or m_upper < 1:
        raise ValueError("pool sizes must be >= 1")
    if lower_metric not in LOWER_METRICS:
        raise ValueError(f"lower_metric must be one of {LOWER_METRICS}")
    h, w = x.shape[:2]
    k = gp.config.noise_channels
    dtype = gp.config.np_dtype

    z_lower = rng.standard_normal((m_lower, 2 * h, 2 * w, k)).astype(dtype)
    x_rep = np.broadcast_to(x.astype(dtype, copy=False), (m_lower, h, w, 3))
    mids, _ = generator.sub_forward(gp, "lower", x_rep, z_lower, train=False,
                                    update_running=False)
    if target_mid is None:
        target_mid = resample.resize01(y, 2 * h, 2 * w)
    if lower_metric == "pixel":
        cand_low = mids.reshape(m_lower, -1)
        targ_low = np.asarray(target_mid).reshape(-1)
    else:
        cand_low = extractor.extract_batch(mids)
        targ_low = extractor.extract_batch(np.asarray(target_mid)[None])[0]
    pos_low, dist_low = search.nearest_position(cand_low, targ_low)

    z_upper = rng.standard_normal((m_upper, 4 * h, 4 * w, k)).astype(dtype)
    mid_rep = np.broadcast_to(mids[pos_low], (m_upper, 2 * h, 2 * w, 3))
    skip4 = layers.bilinear_upsample_forward(x.astype(dtype, copy=False)[None], 4)[0][0]
    skip_rep = np.broadcast_to(skip4, (m_upper, 4 * h, 4 * w, 3))
    outs, _ = generator.sub_forward(gp, "upper", mid_rep, z_upper, train=False,
                                    update_running=False, skip=skip_rep)
    cand_up = extractor.extract_batch(outs)
    if target_feat is None:
        target_feat = extractor.extract_batch(y[None])[0]
        if projection is not None:
            target_feat = projection.project(target_feat)
    if projection is not None:
        cand_up = projection.project(cand_up)
    pos_up, dist_up = search.nearest_position(cand_up, np.asarray(target_feat))

    noise = generator.NoisePair(np.array(z_lower[pos_low]), np.array(z_upper[pos_up]))
    return SelectionRecord(example_id, noise, dist_up, dist_low)


def imle_loss(gp, extractor, xs, noise: generator.NoisePair, target_parts, *,
              scale: float, update_running: bool = True, iteration=None):
    """Scaled feature loss over a mini-batch and its parameter gradients.

    ``scale`` is n/|batch| (the loss is an unbiased estimate of the sum
    over the whole training set).  Samples are recomputed from the cached
    noise under the current parameters, in train mode, so the gradient is
    exact.  Raises TrainingDiverged on non-finite loss.
    """
    _, out, cache = generator.forward(gp, xs, noise, train=True,
                                      update_running=update_running)
    raw, d_out = features.feature_loss_and_grad(extractor, out, target_parts)
    loss = scale * raw
    if not np.isfinite(loss):
        raise TrainingDiverged(f"non-finite loss {loss}", iteration)
    grads = generator.backward(gp, cache, scale * d_out)
    return loss, grads


@dataclass
class TrainState:
    """Precomputed per-run tensors shared by every iteration."""

    xs: np.ndarray            # (n, h, w, 3) inputs in [0, 1]
    ys: np.ndarray            # (n, 4h, 4w, 3) ground truths in [0, 1]
    mids_target: np.ndarray   # (n, 2h, 2w, 3) half-resolution targets
    parts_all: dict           # unweighted feature parts of ys, stacked
    feat_sel: np.ndarray      # (n, D) selection-space target features
    extractor: features.FeatureExtractor
    projection: features.ProjectionMatrix | None
    calibration: np.ndarray

    @property
    def n(self) -> int:
        return self.xs.shape[0]

    @classmethod
    def prepare(cls, train_set, config: TrainConfig, gen_config,
                extractor=None) -> "TrainState":
        n = len(train_set)
        if n == 0:
            raise ValueError("training set is empty")
        dtype = gen_config.np_dtype
        xs = np.stack([to_float01(lr, dtype) for lr, _ in train_set])
        ys = np.stack([to_float01(hr, dtype) for _, hr in train_set])
        _require_hr_shape(xs[0], ys[0])
        if extractor is None:
            extractor = features.make_extractor(
                features.RandomConvNetBackend.name, seed=config.seed,
                dtype=gen_config.dtype,
            )
        calibration = features.calibrate_weights(
            extractor, ys[: min(CALIBRATION_BATCH, n)]
        )
        h, w = xs.shape[1:3]
        mids_target = np.stack(
            [resample.resize01(y, 2 * h, 2 * w) for y in ys]
        ).astype(dtype)
        parts_all, _ = extractor.forward_parts(ys)
        feat_sel = extractor.extract_batch(ys)
        projection = None
        if config.projection_dim > 0:
            projection = features.ProjectionMatrix.create(
                config.seed, feat_sel.shape[1], config.projection_dim
            )
            feat_sel = projection.project(feat_sel)
        return cls(xs, ys, mids_target, parts_all, feat_sel, extractor,
                   projection, calibration)

    def target_parts_for(self, idx) -> dict:
        return {name: arr[idx] for name, arr in self.parts_all.items()}


def outer_iteration(gp, state: TrainState, config: TrainConfig,
                    optimizer: optim.Optimizer, rng, *, iteration: int):
    """One outer iteration: select noise for a batch, then take the inner
    gradient steps on it.  Mutates ``gp`` and ``optimizer`` in place.

    Returns (mean selected distance, inner losses list, selection records).
    """
    n = state.n
    batch = rng.choice(n, size=min(config.batch_select, n), replace=False)
    records = []
    for i in batch:
        records.append(hierarchical_select(
            gp, state.xs[i], state.ys[i], config.pool_lower, config.pool_upper,
            rng, extractor=state.extractor, projection=state.projection,
            lower_metric=config.lower_metric, example_id=int(i),
            target_mid=state.mids_target[i], target_feat=state.feat_sel[i],
        ))
    mean_dist = float(np.mean([r.distance for r in records]))

    noise_by_id = {r.example_id: r.noise for r in records}
    update_running = config.learning_rate > 0
    inner_losses = []
    for _ in range(config.inner_steps):
        chosen = rng.choice(batch, size=config.batch_inner, replace=False)
        noise = generator.NoisePair(
            np.stack([noise_by_id[int(i)].z_lower for i in chosen]),
            np.stack([noise_by_id[int(i)].z_upper for i in chosen]),
        )
        loss, grads = imle_loss(
            gp, state.extractor, state.xs[chosen], noise,
            state.target_parts_for(chosen),
            scale=n / config.batch_inner,
            update_running=update_running, iteration=iteration,
        )
        optimizer.step(gp.params, grads)
        if not gp.all_finite():
            raise TrainingDiverged("non-finite parameters after update", iteration)
        inner_losses.append(loss)
    return mean_dist, inner_losses, records


def _config_echo(config: TrainConfig, gen_config, state: TrainState, n: int) -> dict:
    return {
        "train_config": dataclasses.asdict(config),
        "generator_config": {
            "lower": dataclasses.asdict(gen_config.lower),
            "upper": dataclasses.asdict(gen_config.upper),
            "noise_channels": gen_config.noise_channels,
            "dtype": gen_config.dtype,
        },
        "n": n,
        "feature_backend": state.extractor.backend.name,
        "feature_checksum": state.extractor.checksum(),
        "calibration": [float(a) for a in state.calibration],
        "projection_dim": 0 if state.projection is None else state.projection.target_dim,
    }


def write_manifest(run_dir, echo: dict) -> None:
    lines = ["# training run manifest"]
    for key, value in sorted(echo.items()):
        if isinstance(value, dict):
            for sub, sval in sorted(value.items()):
                lines.append(f"{key}.{sub} = {json.dumps(sval, sort_keys=True)}")
        else:
            lines.append(f"{key} = {json.dumps(value, sort_keys=True)}")
    with open(os.path.join(run_dir, MANIFEST_NAME), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _save_state(path, gp, *, config, optimizer, history, echo):
    extra = {f"opt/{k}": v for k, v in optimizer.state_arrays().items()}
    extra["history/mean_selected"] = history.mean_selected_distance
    extra["history/inner"] = history.inner_losses
    generator.save_checkpoint(
        path, gp, seed=config.seed, extra_arrays=extra,
        extra_meta={"run": echo},
    )


def load_run_checkpoint(path, *, expect_config=None):
    """Load a training checkpoint: (params, run meta, optimizer arrays, history).

    ``expect_config`` is the GeneratorConfig to validate against.
    """
    gp, meta, extras = generator.load_checkpoint(path, expect_config=expect_config)
    opt_arrays = {k[len("opt/"):]: v for k, v in extras.items() if k.startswith("opt/")}
    done = gp.step
    hist = TrainHistory(
        mean_selected_distance=np.asarray(extras["history/mean_selected"]),
        inner_losses=np.asarray(extras["history/inner"]),
        timestamps=np.full(done, np.nan),
    )
    if len(hist) != done:
        raise generator.CheckpointError(
            f"history length {len(hist)} does not match step {done}"
        )
    return gp, meta.get("extra", {}).get("run", {}), opt_arrays, hist


def train(train_set, config: TrainConfig, *, gen_config=None, extractor=None,
          run_dir=None, resume: bool = False, stop_after: int | None = None,
          callback=None):
    """Run the full training loop; returns (params, history).

    ``train_set`` is a sequence of (lr_u8, hr_u8) pairs of uniform shape.
    With ``run_dir`` set, writes a manifest, a per-iteration loss CSV, and
    a checkpoint every ``config.checkpoint_every`` iterations (plus one at
    the end).  ``resume=True`` continues from the run directory's
    checkpoint; the stored config must match.  ``stop_after`` ends the run
    early after that many iterations, saving a checkpoint (an orderly
    interrupt for tests and operators).  ``callback(iteration, mean_dist,
    losses)`` is invoked after each iteration.
    """
    n = len(train_set)
    config.validate(n)
    if gen_config is None:
        gen_config = generator.GeneratorConfig()
    gen_config.validate()

    state = TrainState.prepare(train_set, config, gen_config, extractor)
    echo = _config_echo(config, gen_config, state, n)
    optimizer = optim.make_optimizer(config.optimizer, config.learning_rate)

    ckpt_path = os.path.join(run_dir, CHECKPOINT_NAME) if run_dir else None
    start = 0
    if resume:
        if ckpt_path is None or not os.path.exists(ckpt_path):
            raise generator.CheckpointError("resume requested but no checkpoint found")
        gp, saved_echo, opt_arrays, history = load_run_checkpoint(
            ckpt_path, expect_config=gen_config
        )
        if saved_echo != echo:
            raise generator.CheckpointError(
                "checkpoint config does not match the requested run config"
            )
        optimizer.load_state_arrays(opt_arrays)
        start = gp.step
    else:
        gp = generator.init_params(gen_config, config.seed)
        history = TrainHistory(
            np.zeros(0), np.zeros((0, config.inner_steps)), np.zeros(0)
        )

    if run_dir:
        os.makedirs(run_dir, exist_ok=True)
        write_manifest(run_dir, echo)

    def flush(path):
        _save_state(path, gp, config=config, optimizer=optimizer,
                    history=history, echo=echo)
        with open(os.path.join(run_dir, LOSS_CSV_NAME), "w") as fh:
            fh.write(history.to_csv())

    try:
        for p in range(start + 1, config.outer_iterations + 1):
            it_rng = rng_for(config.seed, "outer", p)
            mean_dist, losses, _ = outer_iteration(
                gp, state, config, optimizer, it_rng, iteration=p
            )
            gp.step = p
            history = TrainHistory(
                np.append(history.mean_selected_distance, mean_dist),
                np.vstack([history.inner_losses,
                           np.asarray(losses).reshape(1, config.inner_steps)]),
                np.append(history.timestamps, time.time()),
            )
            if callback is not None:
                callback(p, mean_dist, losses)
            if run_dir and p % config.checkpoint_every == 0:
                flush(ckpt_path)
            if stop_after is not None and p >= stop_after:
                if run_dir:
                    flush(ckpt_path)
                break
    except TrainingDiverged:
        if run_dir:
            _save_state(os.path.join(run_dir, DIVERGED_NAME), gp, config=config,
                        optimizer=optimizer, history=history, echo=echo)
        raise
    if run_dir:
        flush(ckpt_path)
    return gp, history
