"""Grid-integration oracles for the two-photon joint densities.

The integrals are taken in sum/difference coordinates ``S = c1 + c2``,
``d = c1 - c2`` (``dc1 dc2 = dS dd / 2``) on a trapezoid grid.  Everything
here evaluates the defining expressions point by point; no Gaussian
algebra from :mod:`photonloc.state` is reused.

For the partial state the squared modulus of the two-term sum is expanded
into its four products.  Each product factorizes over the t, x, y axes, so a
6D integral becomes a sum of products of 2D integrals.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .spectral import gaussian_transform
from .state import StateSpec

DEFAULT_MEMORY_BUDGET = 1 << 30


class GridBudgetError(MemoryError):
    """The requested grid would exceed the memory budget."""

    def __init__(self, required: int, budget: int):
        super().__init__(f"grid needs ~{required / 2**20:.0f} MiB, budget is {budget / 2**20:.0f} MiB")
        self.required = required
        self.budget = budget


def _weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h)
    w[0] = w[-1] = 0.5 * h
    return w


def _axis_functions(spec: StateSpec, ax: int):
    psi = spec.psi
    if ax == 0:
        psi_fn = lambda s: gaussian_transform(s, psi.freq.center_omega, psi.freq.sigma_omega)
    else:
        psi_fn = lambda s: gaussian_transform(s, psi.trans.center_k[ax - 1], psi.trans.sigma_k[ax - 1])
    if spec.is_maximal:
        return psi_fn, None
    if ax == 0:
        g_fn = lambda c: gaussian_transform(c, spec.gamma.center_omega, spec.gamma.sigma_omega)
    else:
        g_fn = lambda c: gaussian_transform(c, spec.xi.center_k[ax - 1], spec.xi.sigma_k[ax - 1])
    return psi_fn, g_fn


@dataclass(frozen=True)
class PairGrid:
    """Per-term, per-axis integrals of the N = 2 joint density.

    ``integrals[name]`` has shape ``(n_terms, 3)`` and holds
    ``integral f(c1, c2) term(c1, c2) dc1 dc2`` for the moment function named
    ``name`` on each axis.
    """

    labels: tuple[tuple[int, int], ...]
    integrals: dict

    def _combine(self, name: str, ax: int) -> complex:
        mass = self.integrals["mass"]
        other = np.prod(np.delete(mass, ax, axis=1), axis=1)
        return complex(np.sum(self.integrals[name][:, ax] * other))

    def term_masses(self) -> np.ndarray:
        """Mass of each expanded term (complex for off-center amplitudes)."""
        return np.prod(self.integrals["mass"], axis=1)

    def total_mass(self) -> float:
        return float(np.real(self.term_masses().sum()))

    def expectation(self, name: str, ax: int) -> float:
        return float(np.real(self._combine(name, ax))) / self.total_mass()

    def average_variance(self, ax: int) -> float:
        mean = self.expectation("avg", ax)
        return self.expectation("avg2", ax) - mean**2

    def photon_variance(self, ax: int) -> float:
        mean = self.expectation("c1", ax)
        return self.expectation("c1sq", ax) - mean**2


def _axis_extents(spec: StateSpec, ax: int, extent: float) -> tuple[float, float]:
    a_psi = spec.psi_widths[ax]
    s_sum = 1.0 / (a_psi * math.sqrt(2.0))
    if spec.is_maximal:
        return extent * s_sum, float(spec.window[ax])
    a_g = spec.difference_widths[ax]
    s_g = 1.0 / (a_g * math.sqrt(2.0))
    return extent * s_sum, extent * 2.0 * max(s_sum, s_g)


def pair_grid(spec: StateSpec, *, n_points: int = 801, extent: float = 9.0,
              memory_budget: int = DEFAULT_MEMORY_BUDGET) -> PairGrid:
    """Integrate the N = 2 density (maximal or partial) on a sum/difference grid."""
    if spec.n_photons != 2:
        raise ValueError("pair_grid handles N = 2 only")
    required = n_points * n_points * 16 * 8
    if required > memory_budget:
        raise GridBudgetError(required, memory_budget)
    labels = ((0, 0),) if spec.is_maximal else tuple(itertools.product(range(2), repeat=2))
    names = ("mass", "avg", "avg2", "c1", "c1sq")
    out = {name: np.zeros((len(labels), 3), dtype=complex) for name in names}
    for ax in range(3):
        psi_fn, g_fn = _axis_functions(spec, ax)
        s_half, d_half = _axis_extents(spec, ax, extent)
        s = np.linspace(-s_half, s_half, n_points)
        d = np.linspace(-d_half, d_half, n_points)
        w = np.outer(_weights(n_points, s[1] - s[0]), _weights(n_points, d[1] - d[0])) * 0.5
        S, D = np.meshgrid(s, d, indexing="ij")
        c1, c2 = 0.5 * (S + D), 0.5 * (S - D)
        base = np.abs(psi_fn(S)) ** 2
        moments = {"mass": 1.0, "avg": 0.5 * S, "avg2": 0.25 * S**2, "c1": c1, "c1sq": c1**2}
        if spec.is_maximal:
            terms = [base]  # window |c1 - c2| <= W coincides with the d extent
        else:
            amps = (g_fn(c2), g_fn(c1))  # A_0 excludes photon 0, A_1 excludes photon 1
            terms = [base * amps[j] * np.conj(amps[jp]) for j, jp in labels]
        for k, term in enumerate(terms):
            tw = term * w
            for name in names:
                out[name][k, ax] = np.sum(tw * moments[name])
    return PairGrid(labels, out)


def conditional_grid(spec: StateSpec, photon1, *, n_points: int = 4001, extent: float = 9.0):
    """Mean and variance (t, x, y) of photon 2 given photon 1 at deviation ``photon1``.

    Returns ``(means, variances)`` computed by 1D quadrature per axis of the
    four expanded terms.
    """
    if spec.is_maximal or spec.n_photons != 2:
        raise ValueError("conditional_grid handles the partial N = 2 state")
    photon1 = np.asarray(photon1, dtype=float)
    labels = tuple(itertools.product(range(2), repeat=2))
    mass = np.zeros((4, 3), dtype=complex)
    first = np.zeros((4, 3), dtype=complex)
    second = np.zeros((4, 3), dtype=complex)
    for ax in range(3):
        psi_fn, g_fn = _axis_functions(spec, ax)
        s_half, d_half = _axis_extents(spec, ax, extent)
        half = s_half + d_half + abs(photon1[ax])
        c2 = np.linspace(-half, half, n_points)
        w = _weights(n_points, c2[1] - c2[0])
        c1 = photon1[ax]
        base = np.abs(psi_fn(c1 + c2)) ** 2
        amps = (g_fn(c2), g_fn(np.full_like(c2, c1)))
        for k, (j, jp) in enumerate(labels):
            tw = base * amps[j] * np.conj(amps[jp]) * w
            mass[k, ax] = tw.sum()
            first[k, ax] = (tw * c2).sum()
            second[k, ax] = (tw * c2**2).sum()
    total = np.real(np.prod(mass, axis=1).sum())
    means, variances = np.zeros(3), np.zeros(3)
    for ax in range(3):
        other = np.prod(np.delete(mass, ax, axis=1), axis=1)
        m1 = np.real(np.sum(first[:, ax] * other)) / total
        m2 = np.real(np.sum(second[:, ax] * other)) / total
        means[ax], variances[ax] = m1, m2 - m1**2
    return means, variances


def difference_marginal(spec: StateSpec, ax: int, window: float, *, n_points: int = 801,
                        n_sum: int = 801, extent: float = 9.0):
    """Density of ``d = c1 - c2`` along ``ax`` restricted to ``|d| <= window / 2``.

    Returns ``(d, density)`` with the density renormalized on the window.
    """
    if spec.n_photons != 2:
        raise ValueError("difference_marginal handles N = 2 only")
    grid = pair_grid(spec, n_points=201, extent=extent)
    mass = grid.integrals["mass"]
    psi_fn, g_fn = _axis_functions(spec, ax)
    s_half, _ = _axis_extents(spec, ax, extent)
    s = np.linspace(-s_half, s_half, n_sum)
    d = np.linspace(-0.5 * window, 0.5 * window, n_points)
    S, D = np.meshgrid(s, d, indexing="ij")
    base = np.abs(psi_fn(S)) ** 2
    ws = _weights(n_sum, s[1] - s[0])[:, None]
    if spec.is_maximal:
        density = (base * ws).sum(axis=0) * (np.abs(d) <= spec.window[ax])
    else:
        c1, c2 = 0.5 * (S + D), 0.5 * (S - D)
        amps = (g_fn(c2), g_fn(c1))
        density = np.zeros(n_points)
        for k, (j, jp) in enumerate(grid.labels):
            other = np.prod(np.delete(mass[k], ax))
            density += np.real((base * amps[j] * np.conj(amps[jp]) * ws).sum(axis=0) * other)
    density /= np.sum(density * _weights(n_points, d[1] - d[0]))
    return d, density


def maximal_average_variance(spec: StateSpec, ax: int, *, n_points: int = 64,
                             window: float | None = None,
                             memory_budget: int = DEFAULT_MEMORY_BUDGET) -> float:
    """Variance of the photon average under the maximal density, on a raw N-photon grid.

    Midpoint rule over ``(c_1, ..., c_N)``; intended for small N.
    """
    if not spec.is_maximal:
        raise ValueError("maximal_average_variance needs a maximal state")
    n = spec.n_photons
    required = n_points**n * 8 * 6
    if required > memory_budget:
        raise GridBudgetError(required, memory_budget)
    psi_fn, _ = _axis_functions(spec, ax)
    s_sum = 1.0 / (spec.psi_widths[ax] * math.sqrt(2.0))
    w_ax = float(spec.window[ax] if window is None else window)
    half = 0.5 * w_ax + 6.0 * s_sum / n
    h = 2 * half / n_points
    line = -half + h * (np.arange(n_points) + 0.5)
    coords = np.meshgrid(*([line] * n), indexing="ij", sparse=True)
    total = sum(coords)
    mean = total / n
    inside = np.ones(total.shape, dtype=bool)
    for c in coords:
        inside &= np.abs(c - mean) <= 0.5 * w_ax
    dens = np.abs(psi_fn(total)) ** 2 * inside
    mass = dens.sum()
    m1 = (dens * mean).sum() / mass
    return float((dens * mean**2).sum() / mass - m1**2)
