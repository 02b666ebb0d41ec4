"""Multi-view GPLVM with a non-stationary generalized spectral mixture kernel
approximated by random Fourier features."""

from .data import MultiViewDataset, append_label_view, load_manifest, synthetic_dataset
from .elbo import NumericalError, elbo_estimate, elbo_gradient
from .evaluation import EvalReport, knn_cv_accuracy, mse, r2_alignment
from .kernels import KernelSpec, SpectralMixtureParams, ngsm_gram, ngsm_kernel
from .model import ModelState, TrainConfig, impute, initialize, latent_mean, reconstruct, train
from .optim import AdamState, adam_step
from .rff import SpectralSample, feature_matrix, sample_spectral_points

__version__ = "0.1.0"

__all__ = [
    "MultiViewDataset", "append_label_view", "load_manifest", "synthetic_dataset",
    "NumericalError", "elbo_estimate", "elbo_gradient",
    "EvalReport", "knn_cv_accuracy", "mse", "r2_alignment",
    "KernelSpec", "SpectralMixtureParams", "ngsm_gram", "ngsm_kernel",
    "ModelState", "TrainConfig", "impute", "initialize", "latent_mean", "reconstruct", "train",
    "AdamState", "adam_step",
    "SpectralSample", "feature_matrix", "sample_spectral_points",
]
