"""Pneumothorax detection and localization toolkit.

Three image-level pipelines over chest radiographs (a whole-image
classifier, a max-pooled patch-bag classifier, and an attention-gated
encoder/decoder segmenter), plus patient-grouped cross-validation, ROC
evaluation, and linear score fusion. A deterministic synthetic dataset
makes the whole pipeline runnable at desk scale.
"""

__version__ = "0.1.0"
