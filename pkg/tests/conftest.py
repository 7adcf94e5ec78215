import math

import numpy as np
import pytest

from photonloc.spectral import SPEED_OF_LIGHT, FrequencyAmplitude, SpectralAmplitude, TransverseAmplitude
from photonloc.state import Scene

OMEGA0 = 2.0 * math.pi * SPEED_OF_LIGHT / 810e-9


def make_psi(sigma_omega=1.0e13, sigma_k=(1.0e4, 1.0e4), center_k=(0.0, 0.0), center_omega=OMEGA0):
    return SpectralAmplitude(FrequencyAmplitude(center_omega, sigma_omega),
                             TransverseAmplitude(center_k, sigma_k))


@pytest.fixture
def psi():
    return make_psi()


@pytest.fixture
def scene():
    return Scene((1.0e-3, -2.0e-3), 5.0e-9)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            for name, value in getattr(rep, "user_properties", []):
                if name == "acceptance":
                    lines.append(value)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
