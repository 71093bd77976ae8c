"""Geometry, losses and evaluation tooling for mosquito anatomy segmentation.

Covers polygon/mask geometry, anchor box-regression encoding, the
classification/mask/regression loss kernels with analytic gradients, and
an IoU-thresholded precision/recall/AP/mAP evaluator over VIA annotations.
"""

__version__ = "0.1.0"
