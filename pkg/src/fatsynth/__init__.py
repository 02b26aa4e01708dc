"""Synthetic chemical-shift-encoded MRI: signal model, phantoms, latent
diffusion generator, water/fat fitting and evaluation metrics."""

from .signal import (CSESimulator, ComplexImageSeries, EchoProtocol, FatSpectrum, QMaps,
                     QMapsComplex, add_complex_noise, fat_phasor, forward_signal_complex,
                     forward_signal_shared_phase, pdff_map)
from .phantom import Phantom, PhantomConfig, RoiSet, generate_dataset, item_seed, sample_qmaps
from .latent import LatentPCA, decode, encode, fit_pca
from .diffusion import (LatentDiffusion, MLPDenoiser, forward_noise, linear_beta_schedule,
                        sample_ddpm_ancestral, sample_paper_literal, train_mlp_denoiser)
from .wffit import FitConfig, FitResult, WaterFatSeparator, fit_image, fit_voxel, fit_voxels
from .metrics import bland_altman, mmd_gaussian, ms_ssim, pairwise_diversity, ssim
from .io import read_array, write_array
from .config import ExperimentConfig, load_config

__version__ = "0.1.0"
