"""Clipping-noise densities, their convolution with white noise, and PAM bit errors.

The clipping noise seen by a detected symbol is conditioned on the sent
amplitude ``k`` and modelled by a two-sided power-exponential density

    f(y|k) = A1 exp(-|y - mu1|^b1 / (2 s1))   for y <= D
             A2 exp(-|y - mu2|^b2 / (2 s2))   for y >  D

whose split point ``D`` is the histogram mode. Fits live in one of two unit
systems: ``"rms"`` (amplitudes scaled so a sent symbol has unit average
power, independent of the constellation) or ``"d"`` (half-spacing units of a
particular constellation). Bit-error integrals need ``"d"``; a model pooled
in ``"rms"`` is converted per spectral efficiency with :meth:`NoiseModel.to_d_units`.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, special

from . import kernels
from .analytics import LinkProfile, clipping_attenuation, clipping_noise_power, matching_coefficient
from .errors import (
    ConfigurationError,
    FitError,
    InsufficientDataError,
    InvalidParameterError,
    UnitMismatchError,
)
from .scalar_math import (
    DEFAULT_QUAD,
    SQRT2PI,
    TAIL_CUTOFF_SIGMAS,
    QuadratureSpec,
    integrate,
    q_function,
)
from .shaping import BIT_ERROR_REGIONS, MAGNITUDES, AmplitudeDistribution, mb_distribution_for_se

MIN_FIT_SAMPLES = 10_000
HIST_BINS = 200
HIST_SPAN_STD = 6.0
MIN_BIN_COUNT = 10
WEIGHTED = True
SHAPE_BOUNDS = (0.5, 8.0)
# exponent at which a piece is treated as zero (exp(-745) underflows)
_UNDERFLOW = 745.0
# integration range: pieces below exp(-80) of their scale carry < 1e-30 mass
_NEGLIGIBLE = 80.0


@dataclass(frozen=True)
class PiecewiseExpFit:
    """Fitted density for one conditioning amplitude.

    ``sig1_sq``/``sig2_sq`` are the scale parameters appearing as
    ``2 * sig_sq`` in the exponent; they equal the variance only when b = 2.
    """

    A1: float
    mu1: float
    b1: float
    sig1_sq: float
    A2: float
    mu2: float
    b2: float
    sig2_sq: float
    Dk: float
    k: int = 0
    count: int = 0
    residual: float = 0.0
    r_squared: float = float("nan")

    def __post_init__(self):
        for name in ("A1", "mu1", "b1", "sig1_sq", "A2", "mu2", "b2", "sig2_sq", "Dk", "residual", "r_squared"):
            object.__setattr__(self, name, float(getattr(self, name)))
        for name in ("A1", "A2", "b1", "b2", "sig1_sq", "sig2_sq"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidParameterError(f"{name} must be positive and finite, got {v!r}")
        for name in ("mu1", "mu2", "Dk"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidParameterError(f"{name} must be finite")

    @property
    def params(self) -> np.ndarray:
        return np.array(
            [self.A1, self.mu1, self.b1, self.sig1_sq, self.A2, self.mu2, self.b2, self.sig2_sq, self.Dk]
        )

    def left(self, y):
        return self.A1 * np.exp(-np.abs(np.asarray(y, dtype=float) - self.mu1) ** self.b1 / (2.0 * self.sig1_sq))

    def right(self, y):
        return self.A2 * np.exp(-np.abs(np.asarray(y, dtype=float) - self.mu2) ** self.b2 / (2.0 * self.sig2_sq))

    @property
    def density_gap(self) -> float:
        """Jump between the two pieces at ``Dk`` relative to the larger of them."""
        l, r = float(self.left(self.Dk)), float(self.right(self.Dk))
        return abs(l - r) / max(l, r)

    def total_mass(self) -> float:
        """Closed-form integral of the unnormalised density."""
        return self.A1 * _half_mass(self.mu1, self.b1, self.sig1_sq, self.Dk, left=True) + (
            self.A2 * _half_mass(self.mu2, self.b2, self.sig2_sq, self.Dk, left=False)
        )

    def normalized(self) -> "PiecewiseExpFit":
        m = self.total_mass()
        return replace(self, A1=self.A1 / m, A2=self.A2 / m)

    def mirrored(self) -> "PiecewiseExpFit":
        """Density of ``-Y``: the pieces swap sides and all locations flip."""
        return replace(
            self,
            A1=self.A2, mu1=-self.mu2, b1=self.b2, sig1_sq=self.sig2_sq,
            A2=self.A1, mu2=-self.mu1, b2=self.b1, sig2_sq=self.sig1_sq,
            Dk=-self.Dk, k=-self.k,
        )

    def scaled(self, s: float) -> "PiecewiseExpFit":
        """Density of ``s * Y`` for ``s > 0``."""
        if not s > 0:
            raise InvalidParameterError("scale must be positive")
        return replace(
            self,
            A1=self.A1 / s, mu1=self.mu1 * s, sig1_sq=self.sig1_sq * s**self.b1,
            A2=self.A2 / s, mu2=self.mu2 * s, sig2_sq=self.sig2_sq * s**self.b2,
            Dk=self.Dk * s,
        )

    def support(self, floor: float = _UNDERFLOW) -> Tuple[float, float]:
        """Interval outside which both pieces are below ``exp(-floor)`` of their scale."""
        lo = self.mu1 - (2.0 * self.sig1_sq * floor) ** (1.0 / self.b1)
        hi = self.mu2 + (2.0 * self.sig2_sq * floor) ** (1.0 / self.b2)
        return min(lo, self.Dk), max(hi, self.Dk)

    def variance(self) -> float:
        m1 = _piece_moment(self, 1)
        return _piece_moment(self, 2) - m1 * m1

    @classmethod
    def gaussian(cls, variance: float, mean: float = 0.0, k: int = 0) -> "PiecewiseExpFit":
        if not variance > 0:
            raise InvalidParameterError("variance must be positive")
        a = 1.0 / math.sqrt(2.0 * math.pi * variance)
        return cls(a, mean, 2.0, variance, a, mean, 2.0, variance, mean, k=k)


def _half_mass(mu: float, b: float, s: float, d: float, left: bool) -> float:
    """``int exp(-|y-mu|^b/(2s))`` over ``y <= d`` (left) or ``y > d`` (right)."""
    c = (2.0 * s) ** (1.0 / b)
    half = c * math.gamma(1.0 + 1.0 / b)
    t = d - mu if left else mu - d
    x = (abs(t) / c) ** b
    if t >= 0:
        return half * (1.0 + special.gammainc(1.0 / b, x))
    return half * special.gammaincc(1.0 / b, x)


def _piece_moment(fit: PiecewiseExpFit, order: int) -> float:
    lo, hi = fit.support(60.0)
    pts = sorted({fit.mu1, fit.mu2, fit.Dk})
    f = lambda y: y**order * clip_noise_pdf(y, fit)  # noqa: E731
    return integrate(f, lo, hi, points=pts)


def clip_noise_pdf(y, fit: PiecewiseExpFit):
    """Evaluate the piecewise density; scalars or arrays."""
    out = kernels.piecewise_pdf(np.atleast_1d(np.asarray(y, dtype=float)), fit.params)
    return float(out[0]) if np.ndim(y) == 0 else np.asarray(out)


def combined_pdf(z: float, fit: PiecewiseExpFit, sigma_n: float, quad: QuadratureSpec = DEFAULT_QUAD) -> float:
    """Density of clipping noise plus independent Gaussian noise of std ``sigma_n``.

    The convolution splits at ``y = z - Dk`` where the clipping density
    changes piece; the Gaussian factor is truncated at ``12 sigma_n``.
    """
    if not sigma_n > 0:
        raise InvalidParameterError("sigma_n must be positive")
    z = float(z)
    cut = TAIL_CUTOFF_SIGMAS * sigma_n
    split = z - fit.Dk
    inv = 1.0 / (2.0 * sigma_n * sigma_n)

    def left(y):  # clip argument z - y <= Dk
        return math.exp(-y * y * inv - abs(z - y - fit.mu1) ** fit.b1 / (2.0 * fit.sig1_sq))

    def right(y):
        return math.exp(-y * y * inv - abs(z - y - fit.mu2) ** fit.b2 / (2.0 * fit.sig2_sq))

    total = 0.0
    if split < cut:
        lo = max(split, -cut)
        total += fit.A1 * integrate(left, lo, cut, quad, points=(0.0, z - fit.mu1))
    if split > -cut:
        hi = min(split, cut)
        total += fit.A2 * integrate(right, -cut, hi, quad, points=(0.0, z - fit.mu2))
    return max(total / (SQRT2PI * sigma_n), 0.0)


def _gauss_interval(lo: float, hi: float, y: float, sigma: float) -> float:
    """``P(lo < y + N(0, sigma^2) < hi)`` without cancellation in either tail."""
    u = (lo - y) / sigma
    v = (hi - y) / sigma
    if u > -v:
        return q_function(u) - q_function(v)
    return q_function(-v) - q_function(-u)


def _panel_points(fit: PiecewiseExpFit, sigma_n: float) -> Tuple[float, ...]:
    """Breakpoints spreading geometrically from ``Dk`` out to the support edges.

    Cusp-shaped fits span many decades of scale; marking the panels lets the
    adaptive rule resolve the peak and the far tails alike.
    """
    slo, shi = fit.support(_NEGLIGIBLE)
    w = min(sigma_n, (2.0 * fit.sig1_sq) ** (1.0 / fit.b1), (2.0 * fit.sig2_sq) ** (1.0 / fit.b2))
    out = []
    step = 0.25 * w
    while fit.Dk - step > slo or fit.Dk + step < shi:
        out.extend((fit.Dk - step, fit.Dk + step))
        step *= 2.0
    return tuple(out)


def interval_probability(
    lo: float,
    hi: float,
    fit: PiecewiseExpFit,
    sigma_n: float,
    quad: QuadratureSpec = DEFAULT_QUAD,
    method: str = "fubini",
) -> float:
    """``P(lo < Y_c + Y_n < hi)`` for clipping noise ``fit`` plus white noise.

    ``"fubini"`` swaps the order of integration so the inner integral over the
    Gaussian is a Q-function difference; ``"nested"`` integrates
    :func:`combined_pdf` directly. Both evaluate the same quantity.
    """
    if method == "nested":
        if lo == hi:
            return 0.0
        a = lo if math.isfinite(lo) else fit.support(60.0)[0] - TAIL_CUTOFF_SIGMAS * sigma_n
        b = hi if math.isfinite(hi) else fit.support(60.0)[1] + TAIL_CUTOFF_SIGMAS * sigma_n
        if a >= b:
            return 0.0
        return integrate(lambda z: combined_pdf(z, fit, sigma_n, quad), a, b, quad, points=(fit.Dk,))
    if method != "fubini":
        raise InvalidParameterError(f"unknown integration method {method!r}")
    slo, shi = fit.support(_NEGLIGIBLE)
    pts = tuple(p for p in (lo, hi, fit.mu1, fit.mu2) if math.isfinite(p)) + _panel_points(fit, sigma_n)

    def g_left(y):
        return fit.A1 * math.exp(-abs(y - fit.mu1) ** fit.b1 / (2.0 * fit.sig1_sq)) * _gauss_interval(lo, hi, y, sigma_n)

    def g_right(y):
        return fit.A2 * math.exp(-abs(y - fit.mu2) ** fit.b2 / (2.0 * fit.sig2_sq)) * _gauss_interval(lo, hi, y, sigma_n)

    total = 0.0
    if slo < fit.Dk:
        total += integrate(g_left, slo, fit.Dk, quad, points=pts)
    if fit.Dk < shi:
        total += integrate(g_right, fit.Dk, shi, quad, points=pts)
    return min(max(total, 0.0), 1.0)


# ---------------------------------------------------------------------------
# fitting


def _histogram(samples: np.ndarray):
    m, s = float(samples.mean()), float(samples.std())
    if not s > 0:
        raise FitError("samples have zero spread", {"std": s})
    edges = np.linspace(m - HIST_SPAN_STD * s, m + HIST_SPAN_STD * s, HIST_BINS + 1)
    counts, _ = np.histogram(samples, edges)
    width = edges[1] - edges[0]
    centers = 0.5 * (edges[:-1] + edges[1:])
    density = counts / (samples.size * width)
    return centers, counts, density


def _mode(centers: np.ndarray, counts: np.ndarray) -> float:
    """Peak of the histogram.

    A parabola is fitted to the log counts of the bins within the top 40% of
    the (lightly smoothed) peak; its vertex, kept inside that window, is the
    mode. This is far less noisy than the raw argmax for flat-topped peaks
    and collapses onto the spike for cusp-shaped ones.
    """
    smooth = np.convolve(counts, np.ones(3) / 3.0, mode="same")
    j = int(np.argmax(smooth))
    top = smooth >= 0.6 * smooth[j]
    lo = j
    while lo > 0 and top[lo - 1]:
        lo -= 1
    hi = j
    while hi < len(counts) - 1 and top[hi + 1]:
        hi += 1
    if hi - lo < 2:
        return float(centers[j])
    sel = slice(lo, hi + 1)
    y = np.log(np.maximum(counts[sel], 0.5))
    c2, c1, _ = np.polyfit(centers[sel], y, 2)
    if c2 >= 0:
        return float(centers[j])
    return float(np.clip(-c1 / (2.0 * c2), centers[lo], centers[hi]))


def _side_scale(dev: np.ndarray) -> float:
    return float(np.mean(dev * dev)) if dev.size else 1.0


def _log_piece(y, la, mu, b, ls):
    return la - np.abs(y - mu) ** b / (2.0 * math.exp(ls))


def _least_squares(resid, p0, lo, hi, k):
    try:
        res = optimize.least_squares(resid, p0, bounds=(lo, hi), x_scale="jac", max_nfev=20000)
    except (ValueError, FloatingPointError) as exc:
        raise FitError(f"least-squares fit failed for k={k}: {exc}", {"start": list(p0)}) from exc
    if not res.success or not np.all(np.isfinite(res.x)):
        raise FitError(
            f"least-squares fit did not converge for k={k}",
            {"status": res.status, "message": res.message, "start": list(p0)},
        )
    return res


def fit_piecewise_exp(samples: Sequence[float], k: int = 0) -> PiecewiseExpFit:
    """Fit the two-sided power-exponential density to conditional noise samples.

    The samples are histogrammed (200 bins over mean +- 6 std) and the fit
    minimises squared log-density errors over bins holding at least 10
    samples, in two stages:

    1. A continuous split density with both pieces peaking at ``Dk``
       (``mu1 = mu2 = Dk``, equal heights). ``Dk`` starts at the histogram
       mode and is refined with the shapes, so it lands on the mode of the
       fitted density.
    2. With ``Dk`` fixed, locations and heights of the two sides are
       freed, with a soft penalty tying the pieces together at ``Dk``. This
       fit replaces the first only when it lowers the Bayesian information
       criterion, which keeps well-described shapes from trading location
       against exponent.

    The result is normalised to unit mass.

    Raises
    ------
    InsufficientDataError
        Fewer than 10^4 samples.
    FitError
        The optimiser fails, or a side has too few populated bins.
    """
    x = np.asarray(samples, dtype=float).ravel()
    x = x[np.isfinite(x)]
    if x.size < MIN_FIT_SAMPLES:
        raise InsufficientDataError(f"need >= {MIN_FIT_SAMPLES} samples for k={k}, got {x.size}")
    centers, counts, density = _histogram(x)
    d0 = _mode(centers, counts)
    use = counts >= MIN_BIN_COUNT
    yy = centers[use]
    if np.sum(yy <= d0) < 3 or np.sum(yy > d0) < 3:
        raise FitError(
            f"too few populated bins around the mode for k={k}",
            {"left": int(np.sum(yy <= d0)), "right": int(np.sum(yy > d0))},
        )
    target = np.log(density[use])
    wts = np.sqrt(counts[use].astype(float)) if WEIGHTED else np.ones(target.size)
    n = target.size
    peak = math.log(float(density[use].max()))
    width = centers[1] - centers[0]

    # stage 1: continuous split density, (log A, D, b1, log s1, b2, log s2)
    def resid1(p):
        la, dd, b1, l1, b2, l2 = p
        model = np.where(yy <= dd, _log_piece(yy, la, dd, b1, l1), _log_piece(yy, la, dd, b2, l2))
        return wts * (model - target)

    p1 = [
        peak, d0,
        2.0, math.log(_side_scale(x[x <= d0] - d0)),
        2.0, math.log(_side_scale(x[x > d0] - d0)),
    ]
    lo1 = [-np.inf, d0 - 10 * width, SHAPE_BOUNDS[0], -np.inf, SHAPE_BOUNDS[0], -np.inf]
    hi1 = [np.inf, d0 + 10 * width, SHAPE_BOUNDS[1], np.inf, SHAPE_BOUNDS[1], np.inf]
    r1 = _least_squares(resid1, p1, lo1, hi1, k)
    la, d, b1, l1, b2, l2 = r1.x
    ss1 = float(np.sum(r1.fun**2))
    best = (la, d, b1, l1, la, d, b2, l2)

    # stage 2: free locations and heights at fixed D
    is_left = yy <= d
    tie = math.sqrt(float(np.sum(wts**2)))

    def resid2(p):
        model = np.where(is_left, _log_piece(yy, *p[:4]), _log_piece(yy, *p[4:]))
        gap = _log_piece(d, *p[:4]) - _log_piece(d, *p[4:])
        return np.append(wts * (model - target), tie * gap)

    lo2 = [-np.inf, -np.inf, SHAPE_BOUNDS[0], -np.inf] * 2
    hi2 = [np.inf, np.inf, SHAPE_BOUNDS[1], np.inf] * 2
    try:
        r2 = _least_squares(resid2, list(best), lo2, hi2, k)
    except FitError:
        r2 = None
    if r2 is not None:
        ss2 = float(np.sum(r2.fun[:-1] ** 2))
        bic1 = n * math.log(ss1 / n) + 6 * math.log(n)
        bic2 = n * math.log(max(ss2, 1e-300) / n) + 8 * math.log(n)
        if bic2 < bic1:
            best = tuple(r2.x)
    p = best
    fit = PiecewiseExpFit(
        A1=math.exp(p[0]), mu1=p[1], b1=p[2], sig1_sq=math.exp(p[3]),
        A2=math.exp(p[4]), mu2=p[5], b2=p[6], sig2_sq=math.exp(p[7]),
        Dk=float(d), k=int(k), count=int(x.size),
    ).normalized()
    logf = np.log(np.maximum(clip_noise_pdf(yy, fit), 1e-300))
    ss_res = float(np.sum((logf - target) ** 2))
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    r2v = 1.0 - ss_res / ss_tot if ss_tot > 0 else float("nan")
    return replace(fit, residual=math.sqrt(ss_res / n), r_squared=r2v)


def sample_piecewise(fit: PiecewiseExpFit, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw from a split density whose pieces both peak at ``Dk``.

    Exact when ``mu1 == mu2 == Dk``: each side is a half generalized
    Gaussian, ``|y - D|^b / (2 s) ~ Gamma(1/b)``.
    """
    if not (math.isclose(fit.mu1, fit.Dk) and math.isclose(fit.mu2, fit.Dk)):
        raise InvalidParameterError("sampler needs both pieces centred on the split point")
    f = fit.normalized()
    m_left = f.A1 * _half_mass(f.mu1, f.b1, f.sig1_sq, f.Dk, left=True)
    left = rng.random(count) < m_left
    out = np.empty(count)
    nl = int(left.sum())
    g1 = rng.gamma(1.0 / f.b1, 1.0, nl)
    g2 = rng.gamma(1.0 / f.b2, 1.0, count - nl)
    out[left] = f.Dk - (2.0 * f.sig1_sq * g1) ** (1.0 / f.b1)
    out[~left] = f.Dk + (2.0 * f.sig2_sq * g2) ** (1.0 / f.b2)
    return out


# ---------------------------------------------------------------------------
# model container


@dataclass(frozen=True)
class NoiseModel:
    """Conditional clipping-noise densities for all eight PAM amplitudes.

    Attributes
    ----------
    fits : dict
        Amplitude ``k`` (odd, -7..7) to its fitted density. Negative
        amplitudes hold the mirror images of the positive fits.
    clip_ratio_db : float
        Clipping ratio the samples were taken at.
    white_variance : float
        White-noise variance per rail at the detector, in physical units
        (``sigma_n^2 / nu``). Metadata; BER evaluation derives the noise
        per leaf from the link profile.
    units : str
        ``"rms"`` or ``"d"``.
    mode : str
        ``"piecewise"`` for fitted densities, ``"gaussian"`` for the
        zero-mean Gaussian of the closed-form clipping-noise power.
    """

    fits: Mapping[int, PiecewiseExpFit]
    clip_ratio_db: float
    white_variance: float = 0.0
    units: str = "rms"
    mode: str = "piecewise"
    metadata: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.units not in ("rms", "d"):
            raise InvalidParameterError(f"units must be 'rms' or 'd', got {self.units!r}")
        if self.mode not in ("piecewise", "gaussian"):
            raise InvalidParameterError(f"mode must be 'piecewise' or 'gaussian', got {self.mode!r}")
        missing = [k for k in MAGNITUDES if k not in self.fits]
        if missing:
            raise InvalidParameterError(f"missing fits for amplitudes {missing}")
        fits = dict(self.fits)
        for k in MAGNITUDES:
            fits.setdefault(-k, fits[k].mirrored())
        object.__setattr__(self, "fits", dict(sorted(fits.items())))

    @property
    def d_units(self) -> bool:
        return self.units == "d"

    def fit(self, k: int) -> PiecewiseExpFit:
        return self.fits[int(k)]

    def to_d_units(self, d_norm: float) -> "NoiseModel":
        """Express an RMS-unit model in half-spacing units, ``d = d_norm`` RMS."""
        if self.units != "rms":
            raise UnitMismatchError("model is already in half-spacing units")
        s = 1.0 / float(d_norm)
        return replace(self, fits={k: f.scaled(s) for k, f in self.fits.items()}, units="d")

    def mirror_asymmetry(self, grid: Optional[np.ndarray] = None) -> float:
        """Largest relative density mismatch between each fit and its mirror."""
        worst = 0.0
        for k in MAGNITUDES:
            f, g = self.fits[k], self.fits[-k]
            lo, hi = f.support(20.0)
            y = np.linspace(lo, hi, 401) if grid is None else grid
            a, b = clip_noise_pdf(y, f), clip_noise_pdf(-y, g)
            worst = max(worst, float(np.max(np.abs(a - b)) / np.max(a)))
        return worst

    def content_hash(self) -> str:
        return hashlib.sha256(dumps_noise_model(self).encode()).hexdigest()


def fit_noise_model(
    samples: Mapping[int, np.ndarray],
    clip_ratio_db: float,
    white_variance: float = 0.0,
) -> NoiseModel:
    """Fit ``k = 1, 3, 5, 7`` and mirror them onto the negative amplitudes.

    Samples of ``-k`` are sign-flipped and pooled with those of ``+k``.
    """
    fits = {}
    for k in MAGNITUDES:
        parts = [np.asarray(samples[k], dtype=float)]
        if -k in samples:
            parts.append(-np.asarray(samples[-k], dtype=float))
        fits[k] = fit_piecewise_exp(np.concatenate(parts), k)
    return NoiseModel(fits, float(clip_ratio_db), float(white_variance), "rms", "piecewise")


def gaussian_noise_model(eta: float, white_variance: float = 0.0, ratio_db: Optional[float] = None) -> NoiseModel:
    """Zero-mean Gaussian clipping noise with the closed-form power.

    Per rail and in RMS units the variance is ``P_c / (2 alpha^2 P)``: the
    clipping-noise power of one rail referred to a unit-power complex symbol.
    """
    alpha = clipping_attenuation(eta)
    var = clipping_noise_power(eta, 1.0) / (2.0 * alpha * alpha)
    var = max(var, 1e-300)
    fits = {k: PiecewiseExpFit.gaussian(var, 0.0, k) for k in MAGNITUDES}
    ratio = 20.0 * math.log10(eta) if ratio_db is None else float(ratio_db)
    return NoiseModel(fits, ratio, float(white_variance), "rms", "gaussian")


# ---------------------------------------------------------------------------
# bit errors


def bit_error_ratios(
    dist: AmplitudeDistribution,
    d: float,
    model: NoiseModel,
    quad: QuadratureSpec = DEFAULT_QUAD,
    sigma_n: Optional[float] = None,
    method: str = "fubini",
) -> Tuple[float, float, float]:
    """Error probabilities of the three Gray-coded bits of shaped 8-PAM.

    ``d`` is the half-spacing expressed in the model's units (normally 1 for
    a ``"d"`` model) and ``sigma_n`` the white-noise standard deviation in
    the same units. Each bit sums, over the positive amplitudes, twice the
    amplitude probability times the mass of its error intervals.

    Raises
    ------
    UnitMismatchError
        ``model`` is not in half-spacing units.
    """
    if not model.d_units:
        raise UnitMismatchError("bit_error_ratios needs a model in half-spacing units")
    if not (d >= 0 and math.isfinite(d)):
        raise InvalidParameterError("d must be finite and >= 0")
    if sigma_n is None:
        raise InvalidParameterError("sigma_n (white-noise std in model units) is required")
    if not sigma_n > 0:
        raise InvalidParameterError("sigma_n must be positive")
    out = []
    for bit in (1, 2, 3):
        total = 0.0
        for k, p in zip(MAGNITUDES, dist.pr):
            if p == 0.0:
                continue
            fit = model.fit(k)
            for lo, hi in BIT_ERROR_REGIONS[bit][k]:
                total += p * interval_probability(lo * d, hi * d, fit, sigma_n, quad, method)
        out.append(min(max(2.0 * total, 0.0), 1.0))
    return tuple(out)


@dataclass(frozen=True)
class DetectorScales:
    """Per-leaf quantities in RMS units shared by every BER evaluation."""

    alpha: float
    beta: float
    sigma_rms: float


def detector_scales(loss: float, eta: float, profile: LinkProfile) -> DetectorScales:
    """White-noise std per rail in RMS units for a leaf with ``loss``.

    The detected symbol is normalised by ``alpha`` times the chain gain
    ``beta sqrt(2 P / (N loss))`` so the sent constellation has unit power.
    """
    if not loss > 0:
        raise InvalidParameterError("loss must be positive")
    alpha = clipping_attenuation(eta)
    beta = float(matching_coefficient(eta, profile))
    gain = beta * math.sqrt(2.0 * profile.dscm_power / (profile.subcarrier_count * loss))
    white = math.sqrt(profile.noise_variance / profile.noise_samples_per_symbol)
    return DetectorScales(alpha, beta, white / (alpha * gain))


def theoretical_ber(
    se: float,
    loss: float,
    eta: float,
    profile: LinkProfile,
    model: NoiseModel,
    quad: QuadratureSpec = DEFAULT_QUAD,
    method: str = "fubini",
) -> float:
    """Average bit-error ratio of a shaped 64QAM leaf.

    The symbol power at the detector is ``2 alpha^2 beta^2 P / (N loss)``
    (both rails), which fixes the half-spacing ``d``; clipping noise from an
    RMS-unit model is rescaled to that ``d``. The result is the mean of the
    three bit-error ratios.
    """
    if not (0 < se <= 6.0 + 1e-12):
        raise InvalidParameterError(f"spectral efficiency must lie in (0, 6], got {se}")
    dist = mb_distribution_for_se(se)
    sc = detector_scales(loss, eta, profile)
    d_norm = 1.0 / math.sqrt(dist.symbol_power())
    if model.units == "rms":
        dm = model.to_d_units(d_norm)
    else:
        dm = model
    eb = bit_error_ratios(dist, 1.0, dm, quad, sigma_n=sc.sigma_rms / d_norm, method=method)
    return sum(eb) / 3.0


def awgn_bit_error_ratios(dist: AmplitudeDistribution, d_over_sigma: float) -> Tuple[float, float, float]:
    """Gray 8-PAM bit errors under Gaussian noise only, by Q-functions."""
    out = []
    for bit in (1, 2, 3):
        total = 0.0
        for k, p in zip(MAGNITUDES, dist.pr):
            for lo, hi in BIT_ERROR_REGIONS[bit][k]:
                total += p * (q_function(lo * d_over_sigma) - q_function(hi * d_over_sigma))
        out.append(2.0 * total)
    return tuple(out)


# ---------------------------------------------------------------------------
# persistence
#
# One ``key = value`` pair per line; ``#`` starts a comment. Floats are
# written as C99 hex literals so that loading reproduces every bit.
#
#   format = dscmplan-noise-model
#   version = 1
#   clip_ratio_db = <hex float>
#   white_variance = <hex float>
#   units = rms | d
#   mode = piecewise | gaussian
#   meta.<name> = <text>
#   fit.<k>.<field> = <hex float or int>     k in 1, 3, 5, 7
#
# fields: A1 mu1 b1 sig1_sq A2 mu2 b2 sig2_sq Dk count residual r_squared

_FORMAT = "dscmplan-noise-model"
_FIT_FLOATS = ("A1", "mu1", "b1", "sig1_sq", "A2", "mu2", "b2", "sig2_sq", "Dk", "residual", "r_squared")


def dumps_noise_model(model: NoiseModel) -> str:
    lines = [
        f"format = {_FORMAT}",
        "version = 1",
        f"clip_ratio_db = {float(model.clip_ratio_db).hex()}",
        f"white_variance = {float(model.white_variance).hex()}",
        f"units = {model.units}",
        f"mode = {model.mode}",
    ]
    for key in sorted(model.metadata):
        value = str(model.metadata[key])
        if "\n" in value:
            raise InvalidParameterError("metadata values must be single-line")
        lines.append(f"meta.{key} = {value}")
    for k in MAGNITUDES:
        f = model.fits[k]
        lines.append(f"# amplitude {k}: A1={f.A1:.6g} mu1={f.mu1:.6g} b1={f.b1:.4g} "
                     f"A2={f.A2:.6g} mu2={f.mu2:.6g} b2={f.b2:.4g} Dk={f.Dk:.6g}")
        for name in _FIT_FLOATS:
            lines.append(f"fit.{k}.{name} = {float(getattr(f, name)).hex()}")
        lines.append(f"fit.{k}.count = {int(f.count)}")
    return "\n".join(lines) + "\n"


def loads_noise_model(text: str) -> NoiseModel:
    kv: Dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigurationError(f"noise model line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        kv[key] = value
    if kv.get("format") != _FORMAT or kv.get("version") != "1":
        raise ConfigurationError("not a version-1 noise model document")
    try:
        fits = {}
        for k in MAGNITUDES:
            vals = {name: float.fromhex(kv[f"fit.{k}.{name}"]) for name in _FIT_FLOATS}
            fits[k] = PiecewiseExpFit(**vals, k=k, count=int(kv[f"fit.{k}.count"]))
        meta = {key[5:]: v for key, v in kv.items() if key.startswith("meta.")}
        return NoiseModel(
            fits,
            float.fromhex(kv["clip_ratio_db"]),
            float.fromhex(kv["white_variance"]),
            kv["units"],
            kv["mode"],
            meta,
        )
    except KeyError as exc:
        raise ConfigurationError(f"noise model document lacks {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigurationError(f"malformed noise model value: {exc}") from None


def save_noise_model(model: NoiseModel, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_noise_model(model))


def load_noise_model(path) -> NoiseModel:
    with open(path, encoding="utf-8") as fh:
        return loads_noise_model(fh.read())


# ---------------------------------------------------------------------------
# fixed-node rule for bulk evaluation

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def _gl_panels(edges: np.ndarray):
    a, b = edges[:-1, None], edges[1:, None]
    y = 0.5 * (a + b) + 0.5 * (b - a) * _GL_NODES[None, :]
    w = 0.5 * (b - a) * _GL_WEIGHTS[None, :]
    return y.ravel(), w.ravel()


def _side_edges(start: float, direction: float, stop: float, fine: float, coarse: float, dense_until: float):
    """Panel edges from the cusp outwards.

    Widths double from ``fine / 2**14`` up to ``coarse``, stay at ``coarse``
    until ``dense_until`` and double again out to ``stop``.
    """
    edges = [start]
    x, w = start, fine / 2.0**14
    while (stop - x) * direction > 0:
        if abs(x - start) < abs(dense_until - start):
            w = min(2.0 * w, coarse)
        else:
            w *= 2.0
        x = x + direction * w
        edges.append(x if (stop - x) * direction > 0 else stop)
    return edges[::int(direction)]


def node_rule(fit: PiecewiseExpFit, sigma_n: float, rel_floor: float = 1e-10, panel_sigmas: float = 1.0):
    """Gauss-Legendre nodes ``y`` and weights ``w * f(y)`` for one density.

    Panels refine geometrically into the cusp at ``Dk`` and are no wider than
    ``panel_sigmas * sigma_n`` wherever the density exceeds ``rel_floor`` of its peak,
    so ``sum(wf * g(y))`` integrates ``f * g`` accurately for any ``g`` that
    varies on the white-noise scale.
    """
    slo, shi = fit.support(_NEGLIGIBLE)
    scale_l = (2.0 * fit.sig1_sq) ** (1.0 / fit.b1)
    scale_r = (2.0 * fit.sig2_sq) ** (1.0 / fit.b2)
    ln = -math.log(rel_floor)
    dense_l = fit.mu1 - (2.0 * fit.sig1_sq * ln) ** (1.0 / fit.b1)
    dense_r = fit.mu2 + (2.0 * fit.sig2_sq * ln) ** (1.0 / fit.b2)
    coarse = panel_sigmas * sigma_n
    left = _side_edges(fit.Dk, -1.0, slo, min(scale_l, sigma_n), coarse, min(dense_l, fit.Dk))
    right = _side_edges(fit.Dk, 1.0, shi, min(scale_r, sigma_n), coarse, max(dense_r, fit.Dk))
    edges = np.unique(np.concatenate([left, right, [p for p in (fit.mu1, fit.mu2) if slo < p < shi]]))
    y, w = _gl_panels(edges)
    wf = w * clip_noise_pdf(y, fit)
    keep = wf > 0
    return y[keep], wf[keep]
