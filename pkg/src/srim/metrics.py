"""Luminance PSNR and SSIM, plus test-set evaluation against bicubic.

Both metrics follow the common super-resolution protocol: convert to the
Rec. 601 luma channel, then compare.  Identical images report the PSNR
sentinel +inf (excluded from means) and SSIM exactly 1.0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import generator, resample
from .image import check_u8, to_float01, to_u8
from .rngtools import seed_sequence

# Rec. 601 luma weights.
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_L = 255.0

METHOD_MODEL = "srim"
METHOD_BICUBIC = "bicubic"


def luminance(img_u8: np.ndarray) -> np.ndarray:
    """(H, W) Rec. 601 luma: 0.299 R + 0.587 G + 0.114 B."""
    img = check_u8(img_u8)
    return img.astype(np.float64) @ LUMA_WEIGHTS


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB over luminance; +inf when equal."""
    la, lb = luminance(a), luminance(b)
    if la.shape != lb.shape:
        raise ValueError(f"shape mismatch: {la.shape} vs {lb.shape}")
    mse = float(np.mean((la - lb) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0 ** 2 / mse)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    half = (size - 1) / 2.0
    t = np.arange(size) - half
    g = np.exp(-(t * t) / (2.0 * sigma * sigma))
    return g / g.sum()


def _window_matrix(length: int, size: int = SSIM_WINDOW) -> np.ndarray:
    """(length - size + 1, length) banded matrix applying the 1-D window."""
    g = _gaussian_window(size)
    out = np.zeros((length - size + 1, length))
    for i in range(out.shape[0]):
        out[i, i:i + size] = g
    return out


def _filter(img: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return rows @ img @ cols.T


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Mean structural similarity over luminance, 11x11 Gaussian window
    (sigma 1.5), valid windows only."""
    la, lb = luminance(a), luminance(b)
    if la.shape != lb.shape:
        raise ValueError(f"shape mismatch: {la.shape} vs {lb.shape}")
    h, w = la.shape
    if h < SSIM_WINDOW or w < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}")
    rows = _window_matrix(h)
    cols = _window_matrix(w)
    mu_a = _filter(la, rows, cols)
    mu_b = _filter(lb, rows, cols)
    var_a = _filter(la * la, rows, cols) - mu_a * mu_a
    var_b = _filter(lb * lb, rows, cols) - mu_b * mu_b
    cov = _filter(la * lb, rows, cols) - mu_a * mu_b
    c1 = (SSIM_K1 * SSIM_L) ** 2
    c2 = (SSIM_K2 * SSIM_L) ** 2
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass
class EvalReport:
    """Per-image PSNR/SSIM for one method, with set means.

    ``mean_psnr`` excludes +inf entries (identical pairs); it is +inf only
    when every pair was identical.
    """

    method: str
    names: list
    psnr_values: np.ndarray
    ssim_values: np.ndarray

    @property
    def mean_psnr(self) -> float:
        finite = self.psnr_values[np.isfinite(self.psnr_values)]
        if finite.size == 0:
            return math.inf
        return float(finite.mean())

    @property
    def mean_ssim(self) -> float:
        return float(self.ssim_values.mean())


def _score(method: str, names, outputs, truths) -> EvalReport:
    ps = np.array([psnr(o, t) for o, t in zip(outputs, truths)])
    ss = np.array([ssim(o, t) for o, t in zip(outputs, truths)])
    return EvalReport(method, list(names), ps, ss)


def evaluate(gp: generator.GeneratorParams, test_set, seed: int) -> list[EvalReport]:
    """Score the model and the bicubic baseline on (lr, hr) u8 pairs.

    Model outputs are single samples with per-image seeds derived from
    ``seed``, so the report is reproducible.
    """
    if len(test_set) == 0:
        raise ValueError("test set is empty")
    names = getattr(test_set, "names", [str(i) for i in range(len(test_set))])
    dtype = gp.config.np_dtype
    model_out, bicubic_out, truths = [], [], []
    for i, (lr, hr) in enumerate(test_set):
        img_seed = int(seed_sequence(seed, "evaluate", i).generate_state(1)[0])
        model_out.append(to_u8(generator.sample(gp, to_float01(lr, dtype), img_seed)))
        bicubic_out.append(resample.bicubic_upscale(lr, 4))
        truths.append(hr)
    return [
        _score(METHOD_MODEL, names, model_out, truths),
        _score(METHOD_BICUBIC, names, bicubic_out, truths),
    ]


def report_csv(reports: list) -> str:
    """CSV rows (image, method, psnr_db, ssim) plus one summary row per
    method; +inf serializes as ``inf``."""
    lines = ["image,method,psnr_db,ssim"]
    for rep in reports:
        for name, p, s in zip(rep.names, rep.psnr_values, rep.ssim_values):
            lines.append(f"{name},{rep.method},{float(p)!r},{float(s)!r}")
    for rep in reports:
        lines.append(f"mean,{rep.method},{rep.mean_psnr!r},{rep.mean_ssim!r}")
    return "\n".join(lines) + "\n"
