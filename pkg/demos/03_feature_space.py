# The feature space used for nearest-sample selection and the loss.
#
# A feature vector is the weighted concatenation of raw pixels and two
# convolutional tap points.  Calibration rescales the three components
# so none of them dominates the distance, and a seeded Gaussian random
# projection shrinks the vectors for fast selection while approximately
# preserving squared distances.

import numpy as np

from srim.features import (
    ProjectionMatrix,
    calibrate_weights,
    component_mean_magnitudes,
    feature_distance,
    make_extractor,
)

rng = np.random.default_rng(3)
images = [rng.random((32, 32, 3)) for _ in range(8)]

ext = make_extractor("fixed-random-convnet", seed=0)
vec = ext.extract(images[0])
print("feature layout (component, offset, length):")
for entry in vec.layout:
    print(f"  {entry}")

print("\nmean |component| before calibration:")
print(" ", np.array_str(component_mean_magnitudes(ext, images), precision=4))

alphas = calibrate_weights(ext, images)
print("calibrated weights:", np.array_str(alphas, precision=6))
print("mean |component| after calibration:")
print(" ", np.array_str(component_mean_magnitudes(ext, images), precision=4))

# distances in the calibrated space
d_self = feature_distance(ext.extract(images[0]), ext.extract(images[0]))
d_other = feature_distance(ext.extract(images[0]), ext.extract(images[1]))
print(f"\ndistance to itself: {d_self}")
print(f"distance to another image: {d_other:.2f}")

# random projection: much smaller vectors, nearly the same distances
proj = ProjectionMatrix.create(seed=0, source_dim=len(vec), target_dim=256)
feats = np.stack([ext.extract(img).data for img in images])
projected = proj.project(feats)
print(f"\nprojecting {feats.shape[1]} dims down to {projected.shape[1]}")
ratios = []
for a in range(len(images)):
    for b in range(a + 1, len(images)):
        true = feature_distance(feats[a], feats[b])
        approx = feature_distance(projected[a], projected[b])
        ratios.append(approx / true)
print(f"projected/true distance ratio over {len(ratios)} pairs: "
      f"mean {np.mean(ratios):.3f}, min {np.min(ratios):.3f}, "
      f"max {np.max(ratios):.3f}")
