"""Physical constants and unit conversions.

Energies are in meV, times in ns, magnetic fields in gauss.
"""

#: Reduced Planck constant in meV*ns.
HBAR_MEV_NS = 6.582119569e-4

#: Planck constant in meV*s (frequency in Hz -> energy in meV).
PLANCK_MEV_S = 4.135667696e-12


def mhz_to_mev(freq_mhz: float) -> float:
    """Energy h*f in meV for a frequency given in MHz."""
    return PLANCK_MEV_S * freq_mhz * 1e6
