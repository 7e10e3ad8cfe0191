"""Closed-form clipping model and capacity of a peak-constrained DSCM link.

A zero-mean Gaussian signal of power ``P`` hard-clipped at ``A = eta * sqrt(P)``
keeps a correlated part ``alpha * x`` (Bussgang) and gains an uncorrelated
clipping noise of power ``P_c``. After scaling the clipped peak onto the
transmitter budget ``A_p`` (factor ``beta = A_p / A``) each leaf sees

    ESNR_i = alpha^2 beta^2 P / (beta^2 P_c + N Loss_i sigma_n^2 / nu)

where ``nu`` (``noise_samples_per_symbol``) states the sample rate at which the
white-noise variance ``sigma_n^2`` is specified, in samples per subcarrier
symbol. ``nu = 1`` means the variance is already referred to one detected
symbol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidIndexError, InvalidParameterError
from .scalar_math import SQRT2PI, q_function

REFERENCE_LOSSES = (1.0, 1.33, 1.74, 2.32, 3.05, 4.03, 5.25, 6.53)
REFERENCE_NOISE_VARIANCE = 0.0237
REFERENCE_PEAK_AMPLITUDE = 2.579
REFERENCE_SYMBOL_RATE = 8e9
REFERENCE_NOISE_SAMPLES_PER_SYMBOL = 24.0


@dataclass(frozen=True)
class LinkProfile:
    """One hub and its leaves.

    Attributes
    ----------
    losses : tuple of float
        Linear power attenuation per leaf, each >= 1. One leaf per subcarrier.
    noise_variance : float
        White-noise variance sigma_n^2 (linear power).
    peak_amplitude : float
        Transmitter peak amplitude budget A_p.
    dscm_power : float
        Average DSCM power before peak matching. Cancels out of every ESNR.
    subcarrier_bandwidth : float
        Hz; equal to the per-subcarrier symbol rate.
    noise_samples_per_symbol : float
        Samples per subcarrier symbol at which ``noise_variance`` is quoted.
    """

    losses: tuple
    noise_variance: float
    peak_amplitude: float
    dscm_power: float = 1.0
    subcarrier_bandwidth: float = REFERENCE_SYMBOL_RATE
    noise_samples_per_symbol: float = 1.0

    def __post_init__(self):
        losses = tuple(float(x) for x in self.losses)
        object.__setattr__(self, "losses", losses)
        if len(losses) == 0:
            raise InvalidParameterError("a link profile needs at least one leaf")
        if any(not (math.isfinite(x) and x >= 1.0) for x in losses):
            raise InvalidParameterError(f"losses must be finite and >= 1, got {losses}")
        for name in (
            "noise_variance",
            "peak_amplitude",
            "dscm_power",
            "subcarrier_bandwidth",
            "noise_samples_per_symbol",
        ):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise InvalidParameterError(f"{name} must be positive, got {v!r}")

    @property
    def subcarrier_count(self) -> int:
        return len(self.losses)

    @property
    def loss_array(self) -> np.ndarray:
        return np.asarray(self.losses, dtype=float)

    def white_noise_term(self) -> np.ndarray:
        """``N * Loss_i * sigma_n^2 / nu`` for every leaf."""
        return (
            self.subcarrier_count
            * self.loss_array
            * self.noise_variance
            / self.noise_samples_per_symbol
        )

    def replace(self, **changes) -> "LinkProfile":
        from dataclasses import replace

        return replace(self, **changes)

    @classmethod
    def reference(cls, **overrides) -> "LinkProfile":
        """Eight-leaf profile used throughout the test-suite and presets."""
        kw = dict(
            losses=REFERENCE_LOSSES,
            noise_variance=REFERENCE_NOISE_VARIANCE,
            peak_amplitude=REFERENCE_PEAK_AMPLITUDE,
            subcarrier_bandwidth=REFERENCE_SYMBOL_RATE,
            noise_samples_per_symbol=REFERENCE_NOISE_SAMPLES_PER_SYMBOL,
        )
        kw.update(overrides)
        return cls(**kw)


@dataclass(frozen=True)
class ClippingAnalysis:
    ratio_db: float
    eta: float
    clip_amplitude: float
    alpha: float
    clip_noise_power: float
    beta: float
    esnr_per_subcarrier: tuple = field(default=())
    capacity_bps: float = 0.0

    @property
    def esnr_db(self) -> np.ndarray:
        return 10.0 * np.log10(np.asarray(self.esnr_per_subcarrier))


def db_to_eta(ratio_db):
    return 10.0 ** (np.asarray(ratio_db, dtype=float) / 20.0)


def eta_to_db(eta):
    return 20.0 * np.log10(eta)


def _check_eta(eta):
    e = np.asarray(eta, dtype=float)
    if np.any(~np.isfinite(e)) or np.any(e < 0):
        raise InvalidParameterError(f"clipping ratio eta must be finite and >= 0, got {eta!r}")
    return e


def clipping_attenuation(eta):
    """``alpha = 1 - 2 Q(eta)``."""
    e = _check_eta(eta)
    out = 1.0 - 2.0 * q_function(e)
    return float(out) if np.ndim(out) == 0 else out


def clipping_noise_power(eta, p_dscm: float = 1.0):
    """Clipping-noise power of a Gaussian signal of power ``p_dscm``.

    ``2 P {Q(eta) [1 + eta^2 - 2 Q(eta)] - eta exp(-eta^2 / 2) / sqrt(2 pi)}``
    """
    e = _check_eta(eta)
    if not p_dscm > 0:
        raise InvalidParameterError(f"p_dscm must be positive, got {p_dscm!r}")
    q = q_function(e)
    inner = q * (1.0 + e * e - 2.0 * q) - e * np.exp(-0.5 * e * e) / SQRT2PI
    # the bracket is a difference of nearly equal terms at large eta
    out = np.maximum(2.0 * p_dscm * inner, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def matching_coefficient(eta, profile: LinkProfile):
    e = np.asarray(eta, dtype=float)
    return profile.peak_amplitude / (e * math.sqrt(profile.dscm_power))


def effective_snrs(eta: float, profile: LinkProfile) -> np.ndarray:
    """ESNR of every leaf at clipping ratio ``eta`` (linear)."""
    e = float(_check_eta(eta))
    if e <= 0:
        raise InvalidParameterError("eta must be > 0 for a finite peak match")
    alpha = clipping_attenuation(e)
    pc = clipping_noise_power(e, profile.dscm_power)
    beta2 = matching_coefficient(e, profile) ** 2
    num = alpha * alpha * beta2 * profile.dscm_power
    return num / (beta2 * pc + profile.white_noise_term())


def effective_snr(eta: float, profile: LinkProfile, i: int) -> float:
    """ESNR of leaf ``i`` (0-based)."""
    if not (0 <= int(i) < profile.subcarrier_count) or int(i) != i:
        raise InvalidIndexError(
            f"subcarrier index {i} outside 0..{profile.subcarrier_count - 1}"
        )
    return float(effective_snrs(eta, profile)[int(i)])


def capacity(eta: float, profile: LinkProfile) -> float:
    """Shannon capacity summed over leaves, bit/s."""
    return float(profile.subcarrier_bandwidth * np.sum(np.log2(1.0 + effective_snrs(eta, profile))))


def capacity_curve(ratios_db: Sequence[float], profile: LinkProfile) -> np.ndarray:
    """Vectorised capacity over a grid of clipping ratios (dB)."""
    eta = db_to_eta(np.asarray(ratios_db, dtype=float))[:, None]
    alpha = 1.0 - 2.0 * q_function(eta)
    pc = clipping_noise_power(eta, profile.dscm_power)
    beta2 = (profile.peak_amplitude / eta) ** 2 / profile.dscm_power
    esnr = alpha**2 * beta2 * profile.dscm_power / (beta2 * pc + profile.white_noise_term()[None, :])
    return profile.subcarrier_bandwidth * np.log2(1.0 + esnr).sum(axis=1)


def analyze(ratio_db: float, profile: LinkProfile) -> ClippingAnalysis:
    eta = float(db_to_eta(ratio_db))
    esnr = effective_snrs(eta, profile)
    return ClippingAnalysis(
        ratio_db=float(ratio_db),
        eta=eta,
        clip_amplitude=eta * math.sqrt(profile.dscm_power),
        alpha=clipping_attenuation(eta),
        clip_noise_power=clipping_noise_power(eta, profile.dscm_power),
        beta=float(matching_coefficient(eta, profile)),
        esnr_per_subcarrier=tuple(float(x) for x in esnr),
        capacity_bps=float(profile.subcarrier_bandwidth * np.sum(np.log2(1.0 + esnr))),
    )


_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def optimal_clipping_ratio(
    profile: LinkProfile,
    search_lo_db: float = 0.0,
    search_hi_db: float = 16.0,
    step_db: float = 0.1,
    refine_tol_db: float = 0.01,
):
    """Capacity-maximising clipping ratio.

    A coarse dB grid locates the best cell (ties go to the larger ratio, i.e.
    less clipping); golden-section search then refines within one grid step
    on either side.

    Returns
    -------
    (ratio_db, ClippingAnalysis)
    """
    if not step_db > 0:
        raise InvalidParameterError("step_db must be positive")
    if not search_lo_db < search_hi_db:
        raise InvalidParameterError("empty search window")
    n = int(math.floor((search_hi_db - search_lo_db) / step_db + 1e-9)) + 1
    grid = search_lo_db + step_db * np.arange(n)
    if grid[-1] < search_hi_db - 1e-9:
        grid = np.append(grid, search_hi_db)
    caps = capacity_curve(grid, profile)
    best = np.flatnonzero(caps == caps.max())[-1]

    def cap(x):
        return float(capacity_curve([x], profile)[0])

    a = max(search_lo_db, grid[best] - step_db)
    b = min(search_hi_db, grid[best] + step_db)
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = cap(c), cap(d)
    while b - a > refine_tol_db:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = cap(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = cap(d)
    candidates = [(cap(0.5 * (a + b)), 0.5 * (a + b)), (caps[best], float(grid[best]))]
    for edge in (search_lo_db, search_hi_db):
        if a - refine_tol_db <= edge <= b + refine_tol_db:
            candidates.append((cap(edge), edge))
    top = max(v for v, _ in candidates)
    ratio = max(x for v, x in candidates if v >= top * (1 - 1e-14))
    return float(ratio), analyze(ratio, profile)
