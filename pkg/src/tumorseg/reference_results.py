"""Previously reported full-scale results, shipped as static reference data.

These rows come from the original 200-epoch runs on the full 3064-image
corpus. They are quoted verbatim for side-by-side comparison in rendered
reports and are never recomputed by this package.
"""

from .metrics import MetricReport

# Focal parameter sweep (no augmentation).
REPORTED_FOCAL_RESULTS = [
    MetricReport("alpha=0.25 gamma=2.0", 0.9941, 0.0082, 0.9014, 0.7681, 0.7082, 0.7867),
    MetricReport("alpha=2.0 gamma=0.75", 0.9939, 0.0154, 0.8778, 0.7789, 0.7004, 0.7839),
]

# Augmentation comparison at alpha=0.25, gamma=2.0.
REPORTED_AUGMENTATION_RESULTS = [
    MetricReport("None", 0.9941, 0.0082, 0.9014, 0.7681, 0.7082, 0.7867),
    MetricReport("Horizontal Flip", 0.9942, 0.0053, 0.9001, 0.7779, 0.7152, 0.8041),
    MetricReport("Rotation", 0.9940, 0.0029, 0.8774, 0.7892, 0.7090, 0.7955),
    MetricReport("Random Scaling", 0.9934, 0.0064, 0.9097, 0.7106, 0.6643, 0.7486),
]
