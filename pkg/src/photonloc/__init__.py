"""Simulation of entangled-photon target localization."""
from .spectral import (
    SPEED_OF_LIGHT,
    FourierPair,
    FrequencyAmplitude,
    GridSpec,
    SpectralAmplitude,
    TransverseAmplitude,
    evaluate_amplitude,
    fourier_pair,
    numeric_ft_oracle,
)
from .state import (
    MAXIMAL,
    GaussianMixture,
    Scene,
    StateSpec,
    density_maximal,
    density_partial,
    density_single,
    far_field_check,
    mixture_decompose,
)
from .sampler import DetectionEvent, EventBatch, SamplerConfig, apply_loss, sample_events
from .estimation import (
    advantage_ratio,
    baseline_unentangled,
    compute_lambda,
    estimate_target,
    loss_impact,
)
from .spdc import PumpCrystalConfig, classify_regime, focal_parameter

__version__ = "0.1.0"
