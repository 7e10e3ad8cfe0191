"""Probabilistically shaped 64QAM as two independent shaped 8PAM rails.

Amplitudes are odd integers in units of the half-spacing ``d``. A
Maxwell-Boltzmann family ``P(a) ~ exp(-lam a^2)`` is matched to a target
entropy; the sign bit is always uniform, so a per-dimension entropy of
exactly 1 bit (``lam -> inf``) is the smallest reachable value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from .errors import InfeasibleError, InvalidParameterError
from .scalar_math import bisect

MAGNITUDES = (1, 3, 5, 7)
AMPLITUDES = np.array([-7, -5, -3, -1, 1, 3, 5, 7], dtype=np.int64)
MAX_SE = 6.0
MIN_SE = 2.0

# Reflected binary Gray code over the levels -7..+7, MSB first.
# The first bit is the sign, the second flags |a| <= 3, the third |a| in {3, 5}.
GRAY_TABLE: Dict[int, Tuple[int, int, int]] = {
    -7: (0, 0, 0),
    -5: (0, 0, 1),
    -3: (0, 1, 1),
    -1: (0, 1, 0),
    1: (1, 1, 0),
    3: (1, 1, 1),
    5: (1, 0, 1),
    7: (1, 0, 0),
}

_INF = math.inf

# Noise intervals (in units of d) that flip each bit when +k is sent; -k is
# the mirror image. Thresholds sit at 0, +-2d, +-4d, +-6d.
# The amplitude-7 second-bit interval is (-11d, -3d): received values in
# (-4d, 4d) carry second bit 1 while +7 carries 0.
BIT_ERROR_REGIONS: Dict[int, Dict[int, List[Tuple[float, float]]]] = {
    1: {
        1: [(-_INF, -1.0)],
        3: [(-_INF, -3.0)],
        5: [(-_INF, -5.0)],
        7: [(-_INF, -7.0)],
    },
    2: {
        1: [(3.0, _INF), (-_INF, -5.0)],
        3: [(1.0, _INF), (-_INF, -7.0)],
        5: [(-9.0, -1.0)],
        7: [(-11.0, -3.0)],
    },
    3: {
        1: [(1.0, 5.0), (-7.0, -3.0)],
        3: [(3.0, _INF), (-5.0, -1.0), (-_INF, -9.0)],
        5: [(1.0, _INF), (-7.0, -3.0), (-_INF, -11.0)],
        7: [(-5.0, -1.0), (-13.0, -9.0)],
    },
}


@dataclass(frozen=True)
class AmplitudeDistribution:
    """Per-sign probabilities ``pr[j] = P(+k) = P(-k)`` for k = 1, 3, 5, 7."""

    pr: Tuple[float, float, float, float]
    lam: float = 0.0
    target_se: float = float("nan")

    def __post_init__(self):
        pr = tuple(float(p) for p in self.pr)
        object.__setattr__(self, "pr", pr)
        if len(pr) != 4 or any(p < 0 or not math.isfinite(p) for p in pr):
            raise InvalidParameterError(f"invalid amplitude probabilities {pr}")
        if abs(2.0 * sum(pr) - 1.0) > 1e-9:
            raise InvalidParameterError(f"probabilities must sum to 1/2 per sign, got {pr}")

    @property
    def signed(self) -> np.ndarray:
        """Probabilities aligned with :data:`AMPLITUDES`."""
        p = np.array(self.pr)
        return np.concatenate([p[::-1], p])

    @property
    def entropy_per_dimension(self) -> float:
        return entropy(self)

    @property
    def se(self) -> float:
        return 2.0 * entropy(self)

    def symbol_power(self) -> float:
        """Average 2-D symbol power on the odd-integer grid (d = 1)."""
        return 4.0 * sum(k * k * p for k, p in zip(MAGNITUDES, self.pr))

    @classmethod
    def uniform(cls) -> "AmplitudeDistribution":
        return cls((0.125, 0.125, 0.125, 0.125), 0.0, MAX_SE)


def entropy(dist: AmplitudeDistribution) -> float:
    """Entropy over the eight signed amplitudes, bits per dimension."""
    p = dist.signed
    p = p[p > 0]
    return float(-np.sum(p * np.log2(p)))


def _mb_probs(lam: float) -> np.ndarray:
    k2 = np.array(MAGNITUDES, dtype=float) ** 2
    w = np.exp(-lam * (k2 - 1.0))
    return 0.5 * w / w.sum()


def _mb_entropy(lam: float) -> float:
    p = _mb_probs(lam)
    p = p[p > 0]
    return float(-2.0 * np.sum(p * np.log2(p)))


def mb_distribution_for_se(target_se: float) -> AmplitudeDistribution:
    """Maxwell-Boltzmann amplitude distribution whose 2-D entropy is ``target_se``.

    Raises
    ------
    InvalidParameterError
        ``target_se <= 0``.
    InfeasibleError
        ``target_se > 6`` (uniform 64QAM is the maximum) or below the 2-bit
        floor of the family.
    """
    se = float(target_se)
    if not se > 0:
        raise InvalidParameterError(f"spectral efficiency must be positive, got {se}")
    if se > MAX_SE + 1e-12:
        raise InfeasibleError(f"spectral efficiency {se} exceeds 64QAM maximum of 6")
    if se < MIN_SE - 1e-12:
        raise InfeasibleError(
            f"spectral efficiency {se} is below the 2 bit/symbol floor of sign-uniform shaping"
        )
    h_target = se / 2.0
    if h_target >= 3.0 - 1e-15:
        return AmplitudeDistribution.uniform()
    if h_target <= 1.0 + 1e-15:
        return AmplitudeDistribution((0.5, 0.0, 0.0, 0.0), math.inf, se)
    hi = 1.0
    while _mb_entropy(hi) > h_target:
        hi *= 2.0
    lam = bisect(lambda x: _mb_entropy(x) - h_target, 0.0, hi, 1e-15 * max(1.0, hi))
    p = _mb_probs(lam)
    p = p / (2.0 * p.sum())
    return AmplitudeDistribution(tuple(p), float(lam), se)


def euclidean_distance(p_sym: float, dist: AmplitudeDistribution) -> float:
    """Half-spacing ``d`` of a shaped 64QAM grid with 2-D average power ``p_sym``."""
    if not p_sym > 0:
        raise InvalidParameterError(f"symbol power must be positive, got {p_sym!r}")
    denom = dist.symbol_power()
    if not denom > 0:
        raise InvalidParameterError("distribution has zero power")
    return math.sqrt(p_sym / denom)


def gray_bits(amplitude: int) -> Tuple[int, int, int]:
    try:
        a = int(amplitude)
    except (TypeError, ValueError):
        raise InvalidParameterError(f"invalid PAM amplitude {amplitude!r}") from None
    if a != amplitude or a not in GRAY_TABLE:
        raise InvalidParameterError(f"invalid PAM amplitude {amplitude!r}")
    return GRAY_TABLE[a]


GRAY_BIT_ARRAY = np.array([GRAY_TABLE[int(a)] for a in AMPLITUDES], dtype=np.uint8)


def amplitude_index(values: np.ndarray) -> np.ndarray:
    """Hard decision on the odd-integer grid; returns indices into AMPLITUDES."""
    idx = np.floor((np.asarray(values, dtype=float) + 8.0) / 2.0)
    return np.clip(idx, 0, 7).astype(np.int64)


def derive_error_regions() -> Dict[int, Dict[int, List[Tuple[float, float]]]]:
    """Rebuild the per-bit error intervals from the Gray table alone.

    For every positive amplitude k and bit b, walks the eight decision cells
    and merges the adjacent cells whose label differs from k's in bit b.
    Cell edges become noise offsets relative to k.
    """
    edges = [-_INF, -6.0, -4.0, -2.0, 0.0, 2.0, 4.0, 6.0, _INF]
    out: Dict[int, Dict[int, List[Tuple[float, float]]]] = {1: {}, 2: {}, 3: {}}
    for k in MAGNITUDES:
        for b in range(3):
            sent = GRAY_TABLE[k][b]
            spans: List[List[float]] = []
            for j, a in enumerate(AMPLITUDES):
                if GRAY_TABLE[int(a)][b] != sent:
                    lo, hi = edges[j] - k, edges[j + 1] - k
                    if spans and spans[-1][1] == lo:
                        spans[-1][1] = hi
                    else:
                        spans.append([lo, hi])
            out[b + 1][k] = [(lo, hi) for lo, hi in spans]
    return out


def _stream_rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *stream]))


def sample_amplitudes(dist: AmplitudeDistribution, count: int, rng: np.random.Generator) -> np.ndarray:
    cdf = np.cumsum(dist.signed)
    cdf[-1] = 1.0
    idx = np.searchsorted(cdf, rng.random(count), side="right")
    return AMPLITUDES[np.minimum(idx, 7)]


def sample_symbols(dist: AmplitudeDistribution, count: int, seed: int, stream: int = 0) -> np.ndarray:
    """I.i.d. shaped 64QAM symbols on the odd-integer grid.

    ``(seed, stream)`` selects an independent reproducible generator, so
    blocks drawn in any order are identical.
    """
    if int(count) < 1:
        raise InvalidParameterError("count must be >= 1")
    rng = _stream_rng(seed, stream)
    i = sample_amplitudes(dist, int(count), rng)
    q = sample_amplitudes(dist, int(count), rng)
    return i.astype(float) + 1j * q.astype(float)
