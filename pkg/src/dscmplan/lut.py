"""BER look-up table over (spectral efficiency, link loss) and entropy loading.

The table is built at one clipping ratio from a :class:`NoiseModel`. Lookups
are pessimistic: a query is rounded up to the next grid point on both axes.
:func:`optimize` assigns every leaf the largest grid spectral efficiency
whose tabulated BER meets the target, stepping down from ``se_max``.
"""

from __future__ import annotations

import hashlib
import logging
import math
import struct
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import kernels
from .analytics import LinkProfile, db_to_eta, optimal_clipping_ratio
from .errors import (
    ConsistencyError,
    InfeasibleLeafError,
    InvalidParameterError,
    LutError,
    LutRangeError,
)
from .noise_model import NoiseModel, detector_scales, node_rule, theoretical_ber
from .scalar_math import DEFAULT_QUAD, QuadratureSpec
from .shaping import BIT_ERROR_REGIONS, MAGNITUDES, MAX_SE, MIN_SE, mb_distribution_for_se

log = logging.getLogger(__name__)

DEFAULT_BER_TARGET = 3.8e-3
DEFAULT_DELTA_SE = 0.01
DEFAULT_FEC_OVERHEAD = 0.07
MONOTONICITY_TOL = 1e-12
GRID_TOL = 1e-9


@dataclass(frozen=True)
class Lut3D:
    """Predicted BER on a (spectral efficiency, loss) grid at one clipping ratio.

    ``ber[i, j]`` belongs to ``se_grid[i]`` and ``loss_grid[j]``.
    ``provenance`` is the content hash of the noise model used.
    """

    clip_ratio_db: float
    se_grid: Tuple[float, ...]
    loss_grid: Tuple[float, ...]
    ber: np.ndarray
    provenance: str = ""
    model_mode: str = "piecewise"

    def __post_init__(self):
        se = tuple(float(x) for x in self.se_grid)
        loss = tuple(float(x) for x in self.loss_grid)
        object.__setattr__(self, "se_grid", se)
        object.__setattr__(self, "loss_grid", loss)
        ber = np.array(self.ber, dtype=float)
        ber.setflags(write=False)
        object.__setattr__(self, "ber", ber)
        if not se or not loss:
            raise LutError("empty grid")
        if ber.shape != (len(se), len(loss)):
            raise LutError(f"ber shape {ber.shape} does not match grids ({len(se)}, {len(loss)})")
        if np.any(np.diff(se) <= 0) or np.any(np.diff(loss) <= 0):
            raise LutError("grids must be strictly ascending")
        if se[0] <= 0 or se[-1] > MAX_SE + GRID_TOL or loss[0] <= 0:
            raise LutError("se grid must lie in (0, 6] and losses must be positive")
        if np.any(~np.isfinite(ber)) or np.any(ber < 0) or np.any(ber > 1):
            raise LutError("BER values must lie in [0, 1]")

    def check_monotone(self, tol: float = MONOTONICITY_TOL) -> None:
        """Raise :class:`LutError` naming the first cell that breaks monotonicity."""
        b = self.ber
        for axis, grid, name in ((0, self.se_grid, "se"), (1, self.loss_grid, "loss")):
            drop = -np.diff(b, axis=axis)
            bad = np.argwhere(drop > tol)
            if bad.size:
                i, j = bad[0]
                if axis == 0:
                    cell = (self.se_grid[i + 1], self.loss_grid[j])
                else:
                    cell = (self.se_grid[i], self.loss_grid[j + 1])
                raise LutError(
                    f"BER decreases along {name} at se={cell[0]:g}, loss={cell[1]:g} "
                    f"(drop {float(drop[i, j]):.3g})"
                )

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(_encode_binary(self))
        return h.hexdigest()


# ---------------------------------------------------------------------------
# grids


def se_grid(se_min: float = MIN_SE, se_max: float = MAX_SE, step: float = DEFAULT_DELTA_SE) -> np.ndarray:
    """Ascending grid ``se_max, se_max - step, ...`` down to ``se_min``, reversed.

    Points are anchored at ``se_max`` so Algorithm-style decrements land
    exactly on them; values are rounded to 12 decimals to drop float drift.
    """
    if not step > 0:
        raise InvalidParameterError("step must be positive")
    n = int(math.floor((se_max - se_min) / step + GRID_TOL))
    return np.round(se_max - step * np.arange(n, -1, -1), 12)


def loss_grid(losses: Sequence[float], step: float = 0.05) -> np.ndarray:
    """Profile losses merged with an evenly spaced envelope from 1 to their maximum."""
    lo = 1.0
    hi = max(losses)
    n = int(math.ceil((hi - lo) / step - GRID_TOL))
    env = lo + step * np.arange(n + 1)
    pts = np.round(np.concatenate([env, np.asarray(losses, dtype=float)]), 12)
    return np.unique(pts)


# ---------------------------------------------------------------------------
# construction


def _rms_tables(model: NoiseModel, ses: np.ndarray, losses: np.ndarray, eta: float, profile: LinkProfile):
    """Fast path for RMS-unit models: fixed-node quadrature on the kernels."""
    dists = [mb_distribution_for_se(s) for s in ses]
    d_norm = np.array([1.0 / math.sqrt(d.symbol_power()) for d in dists])
    pr = np.array([d.pr for d in dists])  # (n_se, 4)
    out = np.zeros((len(ses), len(losses)))
    for j, loss in enumerate(losses):
        sigma = detector_scales(float(loss), eta, profile).sigma_rms
        eb = np.zeros((len(ses), 3))
        for col, k in enumerate(MAGNITUDES):
            y, wf = node_rule(model.fit(k), sigma)
            for bit in (1, 2, 3):
                regions = BIT_ERROR_REGIONS[bit][k]
                lo = np.concatenate([r[0] * d_norm for r in regions])
                hi = np.concatenate([r[1] * d_norm for r in regions])
                # infinite edges stay infinite after scaling
                mass = kernels.interval_masses(y, wf, lo, hi, sigma)
                mass = mass.reshape(len(regions), len(ses)).sum(axis=0)
                eb[:, bit - 1] += 2.0 * pr[:, col] * mass
        out[:, j] = np.clip(eb, 0.0, 1.0).mean(axis=1)
    return out


def build_lut(
    model: NoiseModel,
    profile: LinkProfile,
    se_values: Sequence[float],
    loss_values: Sequence[float],
    quad: QuadratureSpec = DEFAULT_QUAD,
    method: str = "auto",
    check: bool = True,
) -> Lut3D:
    """Tabulate :func:`theoretical_ber` at the model's clipping ratio.

    ``method="adaptive"`` calls :func:`theoretical_ber` cell by cell;
    ``"nodes"`` evaluates the same integrals with a fixed Gauss-Legendre
    rule shared by all cells of a column (RMS-unit models only) and is far
    faster. ``"auto"`` picks ``"nodes"`` when possible.

    Raises
    ------
    LutError
        The table is not monotone in spectral efficiency and loss.
    """
    ses = np.asarray(se_values, dtype=float)
    losses = np.asarray(loss_values, dtype=float)
    eta = float(db_to_eta(model.clip_ratio_db))
    if method == "auto":
        method = "nodes" if model.units == "rms" else "adaptive"
    if method == "nodes":
        if model.units != "rms":
            raise InvalidParameterError("the node rule needs an RMS-unit model")
        ber = _rms_tables(model, ses, losses, eta, profile)
    elif method == "adaptive":
        ber = np.array(
            [[theoretical_ber(s, L, eta, profile, model, quad) for L in losses] for s in ses]
        )
    else:
        raise InvalidParameterError(f"unknown LUT method {method!r}")
    lut = Lut3D(model.clip_ratio_db, tuple(ses), tuple(losses), ber, model.content_hash(), model.mode)
    if check:
        lut.check_monotone()
    return lut


def _grid_index(grid: Tuple[float, ...], value: float, name: str) -> int:
    if not (grid[0] - GRID_TOL <= value <= grid[-1] + GRID_TOL):
        raise LutRangeError(f"{name}={value:g} outside table range [{grid[0]:g}, {grid[-1]:g}]")
    i = int(np.searchsorted(np.asarray(grid), value - GRID_TOL, side="left"))
    return min(i, len(grid) - 1)


def lookup_ber(lut: Lut3D, se: float, loss: float) -> float:
    """Tabulated BER at the first grid point at or above ``(se, loss)``."""
    return float(lut.ber[_grid_index(lut.se_grid, float(se), "se"), _grid_index(lut.loss_grid, float(loss), "loss")])


class LutCache:
    """Tables built on demand, keyed by model hash, profile and grids."""

    def __init__(self):
        self._tables: Dict[tuple, Lut3D] = {}

    def get(self, model: NoiseModel, profile: LinkProfile, se_values, loss_values, **kw) -> Lut3D:
        key = (model.content_hash(), profile, tuple(np.round(se_values, 12)), tuple(np.round(loss_values, 12)))
        if key not in self._tables:
            self._tables[key] = build_lut(model, profile, se_values, loss_values, **kw)
        return self._tables[key]

    def __len__(self):
        return len(self._tables)


# ---------------------------------------------------------------------------
# entropy loading


@dataclass(frozen=True)
class OptimizationResult:
    eta_opt_db: float
    ses: Tuple[float, ...]
    predicted_bers: Tuple[float, ...]
    capacity_gross_bps: float
    capacity_net_bps: float
    ber_target: float
    fec_overhead: float = DEFAULT_FEC_OVERHEAD
    infeasible: Tuple[int, ...] = field(default=())

    def gain_over(self, baseline_gross_bps: float) -> float:
        return self.capacity_gross_bps / baseline_gross_bps - 1.0


def gross_capacity(ses: Sequence[float], symbol_rate: float) -> float:
    return float(symbol_rate * np.nansum(np.asarray(ses, dtype=float)))


def optimize(
    profile: LinkProfile,
    lut: Lut3D,
    ber_target: float = DEFAULT_BER_TARGET,
    se_max: float = MAX_SE,
    delta_se: float = DEFAULT_DELTA_SE,
    fec_overhead: float = DEFAULT_FEC_OVERHEAD,
    ratio_tol_db: float = 0.05,
    raise_on_infeasible: bool = True,
) -> OptimizationResult:
    """Largest tabulated spectral efficiency per leaf that meets ``ber_target``.

    Every leaf starts at ``se_max`` and drops by ``delta_se`` while its
    looked-up BER exceeds the target. The optimal clipping ratio is
    recomputed from the profile and must match the table's.

    Raises
    ------
    ConsistencyError
        The table was built at a different clipping ratio.
    InfeasibleLeafError
        A leaf exceeds the target even at the smallest tabulated SE
        (only when ``raise_on_infeasible``; otherwise the leaf gets NaN and
        is listed in ``infeasible``).
    """
    if not (0 < ber_target < 0.5 + 1e-15):
        raise InvalidParameterError("ber_target must lie in (0, 0.5]")
    if not delta_se > 0:
        raise InvalidParameterError("delta_se must be positive")
    if se_max > lut.se_grid[-1] + GRID_TOL:
        raise InvalidParameterError(f"se_max {se_max} exceeds the table maximum {lut.se_grid[-1]}")
    eta_db, _ = optimal_clipping_ratio(profile)
    if abs(eta_db - lut.clip_ratio_db) > ratio_tol_db:
        raise ConsistencyError(
            f"table built at {lut.clip_ratio_db:.3f} dB but the optimal clipping ratio is {eta_db:.3f} dB"
        )
    floor = lut.se_grid[0]
    ses: List[float] = []
    bers: List[float] = []
    bad: List[int] = []
    for i, loss in enumerate(profile.losses):
        step = 0
        se = se_max
        ber = lookup_ber(lut, se, loss)
        while ber > ber_target:
            step += 1
            se = round(se_max - step * delta_se, 12)
            if se < floor - GRID_TOL:
                break
            ber = lookup_ber(lut, se, loss)
        if ber > ber_target:
            if raise_on_infeasible:
                raise InfeasibleLeafError(
                    f"leaf {i} (loss {loss:g}) misses BER {ber_target:g} even at SE {floor:g}", i
                )
            bad.append(i)
            ses.append(float("nan"))
            bers.append(float("nan"))
            continue
        ses.append(float(se))
        bers.append(float(ber))
    gross = gross_capacity(ses, profile.subcarrier_bandwidth)
    return OptimizationResult(
        eta_opt_db=float(eta_db),
        ses=tuple(ses),
        predicted_bers=tuple(bers),
        capacity_gross_bps=gross,
        capacity_net_bps=gross / (1.0 + fec_overhead),
        ber_target=float(ber_target),
        fec_overhead=float(fec_overhead),
        infeasible=tuple(bad),
    )


# ---------------------------------------------------------------------------
# persistence
#
# Text form, one item per line:
#
#   dscmplan-lut 1
#   clip_ratio_db <float>
#   provenance <sha256 hex of the noise model document>
#   mode <piecewise|gaussian>
#   se_grid <n> <v1> ... <vn>
#   loss_grid <m> <v1> ... <vm>
#   ber
#   <n rows of m comma-separated values, row i = se_grid[i]>
#
# Floats use repr(), which round-trips exactly.
#
# Binary form, little-endian:
#
#   offset 0   4s   magic "DLUT"
#          4   u32  version (1)
#          8   u32  n (se points)
#         12   u32  m (loss points)
#         16   f64  clip_ratio_db
#         24   64s  provenance, ASCII, NUL padded
#         88   16s  mode, ASCII, NUL padded
#        104   f64[n] se grid, f64[m] loss grid, f64[n*m] ber row-major

_TEXT_MAGIC = "dscmplan-lut 1"
_BIN_MAGIC = b"DLUT"
_BIN_HEAD = struct.Struct("<4sIIId64s16s")


def dumps_lut(lut: Lut3D) -> str:
    lines = [
        _TEXT_MAGIC,
        f"clip_ratio_db {lut.clip_ratio_db!r}",
        f"provenance {lut.provenance or '-'}",
        f"mode {lut.model_mode}",
        "se_grid " + " ".join([str(len(lut.se_grid))] + [repr(x) for x in lut.se_grid]),
        "loss_grid " + " ".join([str(len(lut.loss_grid))] + [repr(x) for x in lut.loss_grid]),
        "ber",
    ]
    lines += [",".join(repr(float(v)) for v in row) for row in lut.ber]
    return "\n".join(lines) + "\n"


def loads_lut(text: str) -> Lut3D:
    lines = text.split("\n")
    try:
        if lines[0] != _TEXT_MAGIC:
            raise LutError("not a version-1 LUT text file")
        head = {}
        for line in lines[1:6]:
            key, _, rest = line.partition(" ")
            head[key] = rest
        se = [float(v) for v in head["se_grid"].split()[1:]]
        loss = [float(v) for v in head["loss_grid"].split()[1:]]
        if int(head["se_grid"].split()[0]) != len(se) or int(head["loss_grid"].split()[0]) != len(loss):
            raise LutError("grid length mismatch")
        if lines[6] != "ber":
            raise LutError("missing 'ber' section")
        rows = [[float(v) for v in ln.split(",")] for ln in lines[7 : 7 + len(se)]]
        prov = head["provenance"]
        return Lut3D(float(head["clip_ratio_db"]), se, loss, np.array(rows), "" if prov == "-" else prov, head["mode"])
    except (KeyError, IndexError, ValueError) as exc:
        raise LutError(f"malformed LUT text: {exc}") from None


def _encode_binary(lut: Lut3D) -> bytes:
    head = _BIN_HEAD.pack(
        _BIN_MAGIC, 1, len(lut.se_grid), len(lut.loss_grid), float(lut.clip_ratio_db),
        lut.provenance.encode("ascii"), lut.model_mode.encode("ascii"),
    )
    body = np.concatenate([lut.se_grid, lut.loss_grid, lut.ber.ravel()]).astype("<f8")
    return head + body.tobytes()


def dump_lut_binary(lut: Lut3D) -> bytes:
    return _encode_binary(lut)


def load_lut_binary(data: bytes) -> Lut3D:
    if len(data) < _BIN_HEAD.size:
        raise LutError("truncated LUT header")
    magic, version, n, m, ratio, prov, mode = _BIN_HEAD.unpack(data[: _BIN_HEAD.size])
    if magic != _BIN_MAGIC or version != 1:
        raise LutError("not a version-1 binary LUT")
    body = np.frombuffer(data[_BIN_HEAD.size :], dtype="<f8")
    if body.size != n + m + n * m:
        raise LutError(f"expected {n + m + n * m} values, found {body.size}")
    return Lut3D(
        ratio, body[:n], body[n : n + m], body[n + m :].reshape(n, m),
        prov.rstrip(b"\0").decode("ascii"), mode.rstrip(b"\0").decode("ascii"),
    )


def save_lut(lut: Lut3D, path, binary: Optional[bool] = None) -> None:
    """Write text, or binary when ``binary`` is set or the path ends in ``.bin``."""
    path = str(path)
    if binary is None:
        binary = path.endswith(".bin")
    if binary:
        with open(path, "wb") as fh:
            fh.write(_encode_binary(lut))
    else:
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write(dumps_lut(lut))


def load_lut(path) -> Lut3D:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] == _BIN_MAGIC:
        return load_lut_binary(data)
    try:
        return loads_lut(data.decode("ascii"))
    except UnicodeDecodeError:
        raise LutError(f"{path}: neither a text nor a binary LUT") from None
