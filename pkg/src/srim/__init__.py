"""Single-image 4x super-resolution trained by implicit maximum
likelihood estimation: a two-stage convolutional sampler, perceptual
feature distances, nearest-sample selection, and PSNR/SSIM evaluation.
"""

from .config import ConfigError, RunConfig, load_config
from .dataset import DataError, PairedDataset, build_dataset, load_cache, write_cache
from .features import (
    FeatureExtractor,
    FeatureVector,
    ProjectionMatrix,
    RandomConvNetBackend,
    Vgg19Backend,
    calibrate_weights,
    feature_distance,
    make_extractor,
    preprocess_for_deep_net,
)
from .generator import (
    CheckpointError,
    GeneratorConfig,
    GeneratorParams,
    NoisePair,
    SubNetworkConfig,
    draw_noise_pair,
    forward,
    init_params,
    load_checkpoint,
    sample,
    save_checkpoint,
    sub_forward,
)
from .image import ImageFormatError, load_image, save_image, to_float01, to_u8
from .metrics import EvalReport, evaluate, luminance, psnr, report_csv, ssim
from .resample import bicubic_upscale, downsample, resize01, resize_float
from .search import CandidatePool, pairwise_sq_dists, select_nearest
from .trainer import (
    SelectionRecord,
    TrainConfig,
    TrainHistory,
    TrainingDiverged,
    hierarchical_select,
    imle_loss,
    train,
)

__version__ = "1.0.0"

__all__ = [
    "CandidatePool",
    "CheckpointError",
    "ConfigError",
    "DataError",
    "EvalReport",
    "FeatureExtractor",
    "FeatureVector",
    "GeneratorConfig",
    "GeneratorParams",
    "ImageFormatError",
    "NoisePair",
    "PairedDataset",
    "ProjectionMatrix",
    "RandomConvNetBackend",
    "RunConfig",
    "SelectionRecord",
    "SubNetworkConfig",
    "TrainConfig",
    "TrainHistory",
    "TrainingDiverged",
    "Vgg19Backend",
    "bicubic_upscale",
    "build_dataset",
    "calibrate_weights",
    "downsample",
    "draw_noise_pair",
    "evaluate",
    "feature_distance",
    "forward",
    "hierarchical_select",
    "imle_loss",
    "init_params",
    "load_cache",
    "load_checkpoint",
    "load_config",
    "load_image",
    "luminance",
    "make_extractor",
    "pairwise_sq_dists",
    "preprocess_for_deep_net",
    "psnr",
    "report_csv",
    "resize01",
    "resize_float",
    "sample",
    "save_checkpoint",
    "save_image",
    "select_nearest",
    "ssim",
    "sub_forward",
    "to_float01",
    "to_u8",
    "train",
    "write_cache",
]
