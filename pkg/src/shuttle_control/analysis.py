"""Post-processing of optimised pulses: Fourier spectra and adiabatic timing."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .units import HBAR_MEV_NS

#: Pulse area (in units of pi) used by the adiabatic-passage timing rule.
ADIABATIC_AREA = 3.75


@dataclass(frozen=True, eq=False)
class Spectrum:
    """One-sided DFT of sampled pulses.

    ``magnitude`` and ``phase`` have shape ``(n_bins, p)``; ``magnitude`` is
    ``|X_k| / N``.  ``dominant_bin`` is the strongest non-zero frequency summed
    over controls (bin 0 if the pulse is constant).
    """

    freq_ghz: np.ndarray
    magnitude: np.ndarray
    phase: np.ndarray
    dominant_bin: int

    @property
    def dominant_frequency(self) -> float:
        return float(self.freq_ghz[self.dominant_bin])

    def relative_phase(self, a: int = 0, b: int = 1) -> float:
        """Phase of control ``b`` minus control ``a`` at the dominant bin, in (-pi, pi]."""
        d = self.phase[self.dominant_bin, b] - self.phase[self.dominant_bin, a]
        return float(np.angle(np.exp(1j * d)))


def pulse_spectrum(values, dt: float) -> Spectrum:
    """DFT of ``N`` samples spaced by ``dt`` ns; bin ``k`` sits at ``k / (N dt)`` GHz."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n = values.shape[0]
    coeffs = np.fft.rfft(values, axis=0)
    freq = np.arange(coeffs.shape[0]) / (n * dt)
    magnitude = np.abs(coeffs) / n
    total = magnitude.sum(axis=1)
    dominant = 0
    if len(total) > 1 and total[1:].max() > 1e-12 * max(total.max(), 1e-300):
        dominant = 1 + int(np.argmax(total[1:]))
    return Spectrum(freq_ghz=freq, magnitude=magnitude, phase=np.angle(coeffs), dominant_bin=dominant)


@dataclass(frozen=True)
class AdiabaticComparison:
    omega_max: float
    t_adiabatic: float
    T: float

    @property
    def ratio(self) -> float:
        return self.t_adiabatic / self.T


def adiabatic_time(omega_max: float) -> float:
    """Transfer time in ns of an adiabatic passage with peak coupling ``omega_max`` meV.

    Returns ``inf`` for a zero coupling.
    """
    if omega_max < 0 or not np.isfinite(omega_max):
        raise ValueError("omega_max must be finite and non-negative")
    if omega_max == 0:
        return math.inf
    return ADIABATIC_AREA * math.pi * HBAR_MEV_NS / omega_max


def adiabatic_compare(values, T: float) -> AdiabaticComparison:
    omega_max = float(np.max(np.abs(values))) if np.size(values) else 0.0
    return AdiabaticComparison(omega_max=omega_max, t_adiabatic=adiabatic_time(omega_max), T=T)
