"""Focal-parameter arithmetic for a focused-pump SPDC source."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

DEFAULT_THRESHOLD = 10.0


class Regime(enum.Enum):
    COLLIMATED_NEGATIVE_CORR = "collimated_negative_corr"
    FOCUSED_POSITIVE_CORR = "focused_positive_corr"
    INTERMEDIATE = "intermediate"


@dataclass(frozen=True)
class PumpCrystalConfig:
    """Crystal length and pump waist in metres; give the pump as a wavelength or a wave vector."""

    crystal_length: float
    beam_waist: float
    pump_wavelength: float | None = None
    pump_wavevector: float | None = None

    def __post_init__(self):
        if (self.pump_wavelength is None) == (self.pump_wavevector is None):
            raise ValueError("give exactly one of pump_wavelength or pump_wavevector")
        for name in ("crystal_length", "beam_waist", "pump_wavelength", "pump_wavevector"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ValueError(f"{name} must be positive, got {value}")

    @property
    def k_p(self) -> float:
        if self.pump_wavevector is not None:
            return self.pump_wavevector
        return 2.0 * math.pi / self.pump_wavelength

    @property
    def confocal_length(self) -> float:
        """b = w0^2 k_p."""
        return self.beam_waist**2 * self.k_p


def focal_parameter(cfg: PumpCrystalConfig) -> float:
    """chi = L / b."""
    return cfg.crystal_length / cfg.confocal_length


def pump_wavevector_for(chi: float, crystal_length: float, beam_waist: float) -> float:
    """Pump wave vector that yields ``chi`` for the given crystal and waist."""
    return crystal_length / (chi * beam_waist**2)


def classify_regime(chi: float, threshold_ratio: float = DEFAULT_THRESHOLD) -> Regime:
    if not chi > 0:
        raise ValueError("chi must be positive")
    if not threshold_ratio > 1:
        raise ValueError("threshold_ratio must exceed 1")
    if chi >= threshold_ratio:
        return Regime.FOCUSED_POSITIVE_CORR
    if chi <= 1.0 / threshold_ratio:
        return Regime.COLLIMATED_NEGATIVE_CORR
    return Regime.INTERMEDIATE
