# Resampling kernels and the evaluation metrics.
#
# Downsampling by 4x destroys fine structure; bicubic upscaling cannot
# bring it back.  PSNR and SSIM quantify how much is lost, and they are
# the same numbers the evaluate command reports.

import numpy as np

from srim.image import to_float01
from srim.metrics import psnr, ssim
from srim.resample import bicubic_upscale, downsample, resize_float

# a test card: smooth ramp plus a fine 2-pixel checkerboard
size = 32
i, j = np.mgrid[0:size, 0:size]
card = np.zeros((size, size, 3))
card[..., 0] = i / size
card[..., 1] = j / size
card[..., 2] = ((i // 2 + j // 2) % 2)
card_u8 = (card * 255).round().astype(np.uint8)

small = downsample(card_u8, 4)
restored = bicubic_upscale(small, 4)

print("identical images are the reference point:")
print(f"  psnr(card, card) = {psnr(card_u8, card_u8)}")
print(f"  ssim(card, card) = {ssim(card_u8, card_u8)}")

print("\nafter a 4x round trip the checkerboard channel is gone:")
print(f"  psnr = {psnr(card_u8, restored):.2f} dB")
print(f"  ssim = {ssim(card_u8, restored):.4f}")

# the float resizer is separable and keeps constants constant
flat = np.full((8, 8), 0.25)
out = resize_float(flat, 20, 12)
print(f"\nconstant image stays constant after resize: "
      f"max deviation {np.abs(out - 0.25).max():.2e}")

# bicubic overshoots at edges, which is why [0, 1] outputs are clipped
step = np.zeros((8, 8))
step[:, 4:] = 1.0
raw = resize_float(step, 32, 32)
print(f"bicubic overshoot on a step edge: min {raw.min():.4f}, "
      f"max {raw.max():.4f}")

# PSNR falls as noise grows
base = to_float01(card_u8)
rng = np.random.default_rng(1)
for sigma in (2, 8, 32):
    noisy = np.clip(card_u8.astype(int)
                    + rng.integers(-sigma, sigma + 1, card_u8.shape),
                    0, 255).astype(np.uint8)
    print(f"noise +-{sigma:2d}: psnr {psnr(card_u8, noisy):6.2f} dB, "
          f"ssim {ssim(card_u8, noisy):.4f}")
