"""Clipping-aware entropy loading for point-to-multipoint DSCM links.

Modules
-------
scalar_math   Q-function, quadrature, bisection
analytics     clipping attenuation/noise, effective SNR, capacity, optimal ratio
shaping       Maxwell-Boltzmann shaped 8-PAM / 64QAM, Gray mapping
simulator     Monte-Carlo DSCM transmitter, clipper, channel and receiver
noise_model   piecewise clipping-noise densities and bit-error ratios
lut           BER look-up tables and per-leaf spectral-efficiency assignment
config        YAML run configuration
reporting     CSV-producing experiment runners
cli           ``dscmplan`` command line
"""

__version__ = "0.1.0"

from .analytics import LinkProfile, capacity, effective_snrs, optimal_clipping_ratio  # noqa: E402
from .errors import DscmError  # noqa: E402
from .shaping import mb_distribution_for_se  # noqa: E402

__all__ = [
    "LinkProfile",
    "capacity",
    "effective_snrs",
    "optimal_clipping_ratio",
    "mb_distribution_for_se",
    "DscmError",
    "__version__",
]
