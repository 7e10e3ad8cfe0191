"""Experiment orchestration and artifact writing.

Every run function writes its tables into ``config.output_dir`` and returns
the paths it wrote. CSV files are plain (header row first, comma separated,
LF endings, floats in shortest round-trip form). Each CSV has a sidecar
``<name>.meta.yaml`` holding the resolved configuration and the SHA-256 of
every noise model or table the run consumed, so artifacts are reproducible
byte for byte from a seed.
"""

from __future__ import annotations

import csv
import hashlib
import logging
import math
import os
from dataclasses import dataclass, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import yaml

from . import __version__
from .analytics import LinkProfile, capacity_curve, db_to_eta, effective_snrs, optimal_clipping_ratio
from .config import RunConfig
from .errors import ArtifactIOError, ConfigurationError
from .lut import (
    Lut3D,
    OptimizationResult,
    build_lut,
    gross_capacity,
    loss_grid,
    optimize,
    save_lut,
    se_grid,
)
from .noise_model import (
    MIN_FIT_SAMPLES,
    NoiseModel,
    fit_noise_model,
    gaussian_noise_model,
    load_noise_model,
    save_noise_model,
    theoretical_ber,
)
from .simulator import (
    WaveformConfig,
    extract_clipping_noise,
    generate_dscm,
    clip_waveform,
    measure_esnr_sweep,
    simulate,
    write_waveform,
)

log = logging.getLogger(__name__)

# harvesting stops doubling the block count here
MAX_HARVEST_BLOCKS = 1024


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _ensure_dir(path: str) -> None:
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise ArtifactIOError(f"cannot create output directory {path!r}: {exc}") from exc


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path!r}: {exc}") from exc
    return path


def write_meta(csv_path: str, cfg: RunConfig, hashes: Optional[Dict[str, str]] = None, extra=None) -> str:
    doc = {
        "artifact": os.path.basename(csv_path),
        "generator": f"dscmplan {__version__}",
        "config": cfg.to_dict(),
        "inputs_sha256": dict(sorted((hashes or {}).items())),
    }
    if extra:
        doc["summary"] = extra
    path = os.path.splitext(csv_path)[0] + ".meta.yaml"
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        yaml.safe_dump(doc, fh, sort_keys=True, default_flow_style=None)
    return path


def _out(cfg: RunConfig, name: str) -> str:
    _ensure_dir(cfg.output_dir)
    return os.path.join(cfg.output_dir, name)


def sha256_file(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


# ---------------------------------------------------------------------------
# capacity versus clipping ratio


def sweep_ratios(cfg: RunConfig) -> np.ndarray:
    lo, hi, step = cfg.sweep
    n = int(math.floor((hi - lo) / step + 1e-9))
    return np.round(lo + step * np.arange(n + 1), 10)


def run_capacity_sweep(cfg: RunConfig) -> List[str]:
    """``capacity_sweep.csv``: capacity and per-leaf ESNR over the ratio grid.

    The refined optimum is inserted as an extra row flagged ``is_optimum``.
    """
    prof = cfg.profile
    ratios = sweep_ratios(cfg)
    opt_db, opt = optimal_clipping_ratio(prof, ratios[0], ratios[-1], cfg.sweep[2])
    caps = capacity_curve(ratios, prof)
    rows = []
    for r, c in zip(ratios, caps):
        esnr = 10.0 * np.log10(effective_snrs(float(db_to_eta(r)), prof))
        rows.append([float(r), float(c), 0, *esnr])
    esnr = 10.0 * np.log10(np.asarray(opt.esnr_per_subcarrier))
    rows.append([opt_db, opt.capacity_bps, 1, *esnr])
    rows.sort(key=lambda row: (row[0], row[2]))
    header = ["ratio_db", "capacity_bps", "is_optimum"] + [f"esnr_db_{i}" for i in range(prof.subcarrier_count)]
    path = write_csv(_out(cfg, "capacity_sweep.csv"), header, rows)
    summary = {"optimal_ratio_db": float(opt_db), "optimal_capacity_bps": float(opt.capacity_bps)}
    return [path, write_meta(path, cfg, extra=summary)]


# ---------------------------------------------------------------------------
# ESNR: theory against Monte Carlo


def run_esnr_validation(cfg: RunConfig) -> List[str]:
    """``esnr_validation.csv``: theory vs simulated ESNR per ratio and leaf."""
    if not cfg.simulate:
        raise ConfigurationError("ESNR validation needs --mode sim or both")
    prof = cfg.profile
    ratios = list(cfg.validation_ratios_db)
    sim = measure_esnr_sweep(prof, cfg.baseline_ses, cfg.waveform, ratios)
    rows = []
    worst = 0.0
    for j, r in enumerate(ratios):
        theory = 10.0 * np.log10(effective_snrs(float(db_to_eta(r)), prof))
        measured = 10.0 * np.log10(sim[j])
        for i in range(prof.subcarrier_count):
            delta = float(measured[i] - theory[i])
            worst = max(worst, abs(delta))
            rows.append([float(r), i, float(theory[i]), float(measured[i]), delta])
    header = ["ratio_db", "subcarrier", "esnr_theory_db", "esnr_sim_db", "delta_db"]
    path = write_csv(_out(cfg, "esnr_validation.csv"), header, rows)
    return [path, write_meta(path, cfg, extra={"max_abs_delta_db": worst})]


# ---------------------------------------------------------------------------
# noise model


def harvest_noise(
    profile: LinkProfile,
    ses: Sequence[float],
    wf: WaveformConfig,
    ratio_db: float,
    blocks: int,
    min_samples: int = 2 * MIN_FIT_SAMPLES,
):
    """Clipping-noise samples with at least ``min_samples`` per amplitude pair.

    Sparse amplitudes (large ``k`` at low spectral efficiency) can leave too
    few samples; the block count doubles until every ``+-k`` pool is large
    enough or :data:`MAX_HARVEST_BLOCKS` is reached.
    """
    b = int(blocks)
    while True:
        cs = extract_clipping_noise(profile, ses, replace(wf, blocks=b), ratio_db)
        fewest = min(cs.samples[k].size + cs.samples[-k].size for k in (1, 3, 5, 7))
        if fewest >= min_samples or b >= MAX_HARVEST_BLOCKS:
            return cs
        b = min(2 * b, MAX_HARVEST_BLOCKS)


def fit_at(cfg: RunConfig, ses: Sequence[float], ratio_db: float) -> NoiseModel:
    prof = cfg.profile
    cs = harvest_noise(prof, ses, cfg.waveform, ratio_db, cfg.harvest_blocks)
    model = fit_noise_model(cs.samples, ratio_db, prof.noise_variance / prof.noise_samples_per_symbol)
    meta = {
        "harvest_ses": " ".join(repr(float(s)) for s in ses),
        "harvest_samples": str(sum(v.size for v in cs.samples.values())),
        "seed": str(cfg.seed),
    }
    return replace(model, metadata=meta)


def fit_summary_rows(model: NoiseModel):
    rows = []
    for k in sorted(model.fits):
        f = model.fits[k]
        rows.append([k, f.count, f.A1, f.mu1, f.b1, f.sig1_sq, f.A2, f.mu2, f.b2, f.sig2_sq, f.Dk,
                     f.density_gap, f.residual, f.r_squared])
    header = ["k", "count", "A1", "mu1", "b1", "sig1_sq", "A2", "mu2", "b2", "sig2_sq", "Dk",
              "density_gap", "residual", "r_squared"]
    return header, rows


def run_fit_noise(cfg: RunConfig, ses: Optional[Sequence[float]] = None, ratio_db: Optional[float] = None) -> List[str]:
    """``noise_model.txt`` and ``noise_fit.csv`` at the chosen ratio.

    Without explicit SEs the harvest uses the self-consistent loading of
    :func:`refine_noise_model`.
    """
    prof = cfg.profile
    r = optimal_clipping_ratio(prof)[0] if ratio_db is None else float(ratio_db)
    if ses is None:
        model, _, _ = refine_noise_model(cfg, r)
    else:
        model = fit_at(cfg, ses, r)
    mpath = _out(cfg, "noise_model.txt")
    save_noise_model(model, mpath)
    header, rows = fit_summary_rows(model)
    cpath = write_csv(_out(cfg, "noise_fit.csv"), header, rows)
    return [mpath, cpath, write_meta(cpath, cfg, {"noise_model": model.content_hash()})]


# ---------------------------------------------------------------------------
# look-up tables and entropy loading


def lut_grids(cfg: RunConfig) -> Tuple[np.ndarray, np.ndarray]:
    return se_grid(cfg.se_min, cfg.se_max, cfg.delta_se), loss_grid(cfg.profile.losses, cfg.loss_step)


def make_lut(cfg: RunConfig, model: NoiseModel) -> Lut3D:
    ses, losses = lut_grids(cfg)
    return build_lut(model, cfg.profile, ses, losses, cfg.quad)


def _optimize(cfg: RunConfig, lut: Lut3D) -> OptimizationResult:
    return optimize(
        cfg.profile, lut, cfg.ber_target, cfg.se_max, cfg.delta_se, cfg.fec_overhead,
        raise_on_infeasible=False,
    )


def refine_noise_model(cfg: RunConfig, ratio_db: float):
    """Fit the clipping noise under the loading it will be used for.

    The conditional noise depends mildly on the constellations in the
    waveform, so the first harvest uses the loading chosen by the Gaussian
    table, and each of ``refit_iterations`` further rounds re-harvests at
    the loading the previous piecewise table chose.

    Returns ``(model, lut, result)`` of the final round.
    """
    eta = float(db_to_eta(ratio_db))
    wvar = cfg.profile.noise_variance / cfg.profile.noise_samples_per_symbol
    glut = make_lut(cfg, gaussian_noise_model(eta, wvar, ratio_db))
    ses = list(_optimize(cfg, glut).ses)
    model = lut = res = None
    for _ in range(cfg.refit_iterations + 1):
        ses = [s if math.isfinite(s) else cfg.se_min for s in ses]
        model = fit_at(cfg, ses, ratio_db)
        lut = make_lut(cfg, model)
        res = _optimize(cfg, lut)
        if list(res.ses) == ses:
            break
        ses = list(res.ses)
    return model, lut, res


def run_build_lut(cfg: RunConfig, model_path: Optional[str] = None) -> List[str]:
    """``lut_<model>.txt`` and ``.bin`` at the optimal clipping ratio."""
    r = optimal_clipping_ratio(cfg.profile)[0]
    eta = float(db_to_eta(r))
    wvar = cfg.profile.noise_variance / cfg.profile.noise_samples_per_symbol
    if cfg.lut_model == "gaussian":
        model = gaussian_noise_model(eta, wvar, r)
        lut = make_lut(cfg, model)
    elif model_path is not None:
        model = load_noise_model(model_path)
        if abs(model.clip_ratio_db - r) > 0.05:
            log.warning("noise model fitted at %.3f dB, optimum is %.3f dB", model.clip_ratio_db, r)
        lut = make_lut(cfg, model)
    else:
        model, lut, _ = refine_noise_model(cfg, r)
    base = _out(cfg, f"lut_{cfg.lut_model}")
    save_lut(lut, base + ".txt")
    save_lut(lut, base + ".bin")
    paths = [base + ".txt", base + ".bin"]
    if cfg.lut_model == "piecewise":
        save_noise_model(model, _out(cfg, "noise_model.txt"))
        paths.append(_out(cfg, "noise_model.txt"))
    return paths


@dataclass(frozen=True)
class Scenario:
    name: str
    ratio_db: float
    ses: Tuple[float, ...]
    predicted: Tuple[float, ...]
    sim: Optional[Tuple] = None


def _simulate_scenario(cfg: RunConfig, ratio_db: float, ses: Sequence[float]):
    safe = [s if math.isfinite(s) else cfg.se_min for s in ses]
    return simulate(cfg.profile, safe, cfg.waveform, ratio_db).per_subcarrier


def run_full_optimization(cfg: RunConfig) -> List[str]:
    """Baseline, Gaussian-table and piecewise-table loadings side by side.

    Writes ``optimization.csv`` (one row per scenario and leaf),
    ``summary.txt``, the fitted noise model and both tables. With
    ``lut_model = gaussian`` the noise harvest and piecewise table are
    skipped. Leaves that no
    tabulated SE can serve are reported with ``se = nan`` and listed in
    the summary; the other leaves are still optimised.
    """
    prof = cfg.profile
    r_opt, opt = optimal_clipping_ratio(prof)
    eta = float(db_to_eta(r_opt))
    wvar = prof.noise_variance / prof.noise_samples_per_symbol

    base_eta = float(db_to_eta(cfg.baseline_ratio_db))
    base_model = gaussian_noise_model(base_eta, wvar, cfg.baseline_ratio_db)
    base_pred = tuple(
        theoretical_ber(s, L, base_eta, prof, base_model, cfg.quad) for s, L in zip(cfg.baseline_ses, prof.losses)
    )
    gmodel = gaussian_noise_model(eta, wvar, r_opt)
    glut = make_lut(cfg, gmodel)
    gres = _optimize(cfg, glut)
    piecewise = cfg.lut_model == "piecewise"
    scenarios = [
        Scenario("baseline", cfg.baseline_ratio_db, cfg.baseline_ses, base_pred),
        Scenario("gaussian", r_opt, gres.ses, gres.predicted_bers),
    ]
    if piecewise:
        pmodel, plut, pres = refine_noise_model(cfg, r_opt)
        scenarios.append(Scenario("piecewise", r_opt, pres.ses, pres.predicted_bers))
    if cfg.simulate:
        scenarios = [replace(s, sim=_simulate_scenario(cfg, s.ratio_db, s.ses)) for s in scenarios]

    rows = []
    for sc in scenarios:
        for i, L in enumerate(prof.losses):
            st = sc.sim[i] if sc.sim else None
            rows.append([
                sc.name, i, L, sc.ratio_db, sc.ses[i], sc.predicted[i],
                None if st is None else st.ber,
                None if st is None else st.error_count,
                None if st is None else st.bit_count,
            ])
    header = ["scenario", "subcarrier", "loss", "ratio_db", "se", "predicted_ber", "sim_ber", "sim_errors", "sim_bits"]
    csv_path = write_csv(_out(cfg, "optimization.csv"), header, rows)

    written = [csv_path]
    gpath = _out(cfg, "lut_gaussian.txt")
    save_lut(glut, gpath)
    hashes = {"lut_gaussian": glut.content_hash()}
    if piecewise:
        mpath = _out(cfg, "noise_model.txt")
        ppath = _out(cfg, "lut_piecewise.txt")
        save_noise_model(pmodel, mpath)
        save_lut(plut, ppath)
        hashes.update(noise_model=pmodel.content_hash(), lut_piecewise=plut.content_hash())
    base_gross = gross_capacity(cfg.baseline_ses, prof.subcarrier_bandwidth)
    chosen = pres if piecewise else gres
    summary = {
        "optimal_ratio_db": float(r_opt),
        "theoretical_capacity_bps": float(opt.capacity_bps),
        "ber_target": cfg.ber_target,
        "selected_lut": cfg.lut_model,
        "baseline_gross_bps": base_gross,
        "baseline_net_bps": base_gross / (1.0 + cfg.fec_overhead),
        "gaussian_gross_bps": gres.capacity_gross_bps,
        "gaussian_net_bps": gres.capacity_net_bps,
    }
    if piecewise:
        summary["piecewise_gross_bps"] = pres.capacity_gross_bps
        summary["piecewise_net_bps"] = pres.capacity_net_bps
    summary.update({
        "selected_gross_bps": chosen.capacity_gross_bps,
        "selected_net_bps": chosen.capacity_net_bps,
        "gain_percent": 100.0 * chosen.gain_over(base_gross),
        "infeasible_leaves": " ".join(str(i) for i in chosen.infeasible) or "none",
    })
    if cfg.simulate:
        for sc in scenarios:
            summary[f"{sc.name}_max_sim_ber"] = max(st.ber for st in sc.sim)
    spath = _out(cfg, "summary.txt")
    with open(spath, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in summary.items():
            fh.write(f"{key} = {_fmt(value)}\n")
        for key, value in sorted(hashes.items()):
            fh.write(f"sha256.{key} = {value}\n")
        fh.write("\n# resolved configuration\n")
        for line in cfg.to_yaml().splitlines():
            fh.write(f"# {line}\n")
    written += [write_meta(csv_path, cfg, hashes, summary), spath, gpath]
    if piecewise:
        written += [mpath, ppath]
    return written


# ---------------------------------------------------------------------------
# Monte Carlo with and without clipping


def run_simulation(cfg: RunConfig) -> List[str]:
    """``simulation.csv``: per-leaf BER and ESNR with and without clipping.

    Runs the configured loading (baseline SEs by default) at the baseline
    ratio and at the clipping ratio (the optimum by default). With
    ``--mode both`` the theoretical BER is added, using a noise model fitted
    to this very scenario.
    """
    if not cfg.simulate:
        raise ConfigurationError("simulate needs --mode sim or both")
    prof = cfg.profile
    ses = cfg.sim_ses or cfg.baseline_ses
    r_clip = optimal_clipping_ratio(prof)[0] if cfg.sim_ratio_db is None else cfg.sim_ratio_db
    wvar = prof.noise_variance / prof.noise_samples_per_symbol
    rows = []
    hashes = {}
    paths = []
    for name, r in (("no-clipping", cfg.baseline_ratio_db), ("clipping", r_clip)):
        res = simulate(prof, ses, cfg.waveform, r)
        pred = [None] * prof.subcarrier_count
        if cfg.mode == "both":
            eta = float(db_to_eta(r))
            if name == "no-clipping":
                model = gaussian_noise_model(eta, wvar, r)
            else:
                model = fit_at(cfg, ses, r)
                hashes["noise_model"] = model.content_hash()
            pred = [theoretical_ber(s, L, eta, prof, model, cfg.quad) for s, L in zip(ses, prof.losses)]
        for i, st in enumerate(res.per_subcarrier):
            rows.append([name, i, prof.losses[i], r, ses[i], st.esnr_db, st.ber, st.error_count,
                         st.bit_count, st.reliable, pred[i]])
        if cfg.dump_waveform and name == "clipping":
            x, _ = generate_dscm(prof, ses, cfg.waveform, 0)
            xc = clip_waveform(x, float(db_to_eta(r)), prof.dscm_power)
            wpath = _out(cfg, "waveform_block0.dscm")
            write_waveform(wpath, xc, prof.subcarrier_count, cfg.waveform.oversampling)
            paths.append(wpath)
    header = ["scenario", "subcarrier", "loss", "ratio_db", "se", "esnr_db", "ber", "errors", "bits",
              "reliable", "theory_ber"]
    path = write_csv(_out(cfg, "simulation.csv"), header, rows)
    return [path, write_meta(path, cfg, hashes)] + paths
